#include "oris/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace oris::harness {

using nlohmann::json;
namespace fs = std::filesystem;

double normalized_score(double raw, double random_ref, double expert_ref) {
    if (!(expert_ref > random_ref)) throw ContractError("expert reference return must exceed the random reference");
    return 100.0 * (raw - random_ref) / (expert_ref - random_ref);
}

std::map<std::string, ReferenceReturns> read_reference_fixtures(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open reference fixtures " + path.string());
    std::map<std::string, ReferenceReturns> out;
    try {
        const json doc = json::parse(in);
        if (doc.at("format") != "oris-reference-returns") throw ConfigError("not a reference fixtures file");
        if (doc.at("version").get<int>() != kReferenceFixturesVersion) throw ConfigError("unsupported fixtures version");
        for (const auto& [env, refs] : doc.at("envs").items()) {
            out[env] = {refs.at("random").get<double>(), refs.at("expert").get<double>()};
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed reference fixtures: ") + e.what());
    }
    return out;
}

void write_reference_fixtures(const fs::path& path, const std::map<std::string, ReferenceReturns>& refs) {
    json envs = json::object();
    for (const auto& [env, r] : refs) envs[env] = {{"random", r.random_return}, {"expert", r.expert_return}};
    json doc = {{"format", "oris-reference-returns"}, {"version", kReferenceFixturesVersion}, {"envs", envs}};
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << doc.dump(2) << '\n';
    if (!out) throw ConfigError("failed to write " + path.string());
}

std::string to_string(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::gravity: return "gravity";
        case SweepAxis::gap_type: return "gap_type";
        case SweepAxis::fraction: return "fraction";
        case SweepAxis::ablation: return "ablation";
    }
    return "gravity";
}

SweepAxis sweep_axis_from_string(const std::string& name) {
    for (auto a : {SweepAxis::gravity, SweepAxis::gap_type, SweepAxis::fraction, SweepAxis::ablation}) {
        if (to_string(a) == name) return a;
    }
    throw ConfigError("unknown sweep axis '" + name + "'");
}

namespace {

// Reads typed fields out of one JSON object and remembers which keys were
// consumed, so leftovers can be reported as unknown.
class Fields {
public:
    Fields(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
        if (!obj_.is_object()) throw ConfigError("'" + name("") + "' must be an object");
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        seen_.insert(key);
        if (!obj_.contains(key)) return;
        try {
            out = obj_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("field '" + name(key) + "' has the wrong type");
        }
    }

    bool has(const std::string& key) const { return obj_.contains(key); }
    const json& at(const std::string& key) {
        seen_.insert(key);
        return obj_.at(key);
    }
    void mark(const std::string& key) { seen_.insert(key); }
    std::string name(const std::string& key) const {
        if (prefix_.empty()) return key;
        return key.empty() ? prefix_ : prefix_ + "." + key;
    }

    void finish() const {
        for (const auto& [key, value] : obj_.items()) {
            if (!seen_.contains(key)) throw ConfigError("unknown config key '" + name(key) + "'");
        }
    }

private:
    const json& obj_;
    std::string prefix_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ConfigError("field '" + field + "' " + what);
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() || base.empty() ? path : (base / path).lexically_normal();
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Shortest decimal form that reads back to the same double.
std::string fmt_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw ConfigError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

std::string ExperimentConfig::hash() const {
    json keyed = document;
    // Seeds, variants and the output location select runs; they do not change what a run computes.
    keyed.erase("seeds");
    keyed.erase("variants");
    keyed.erase("output_dir");
    return fnv1a_hex(keyed.dump());
}

json to_json(const ExperimentConfig& cfg) {
    json doc;
    doc["env_id"] = to_string(cfg.env_id);
    doc["sim_perturbation"] = {{"gravity_scale", cfg.sim_perturbation.gravity_scale},
                               {"friction_scale", cfg.sim_perturbation.friction_scale},
                               {"action_noise_std", cfg.sim_perturbation.action_noise_std}};
    doc["dataset"] = {{"path", cfg.dataset_path}, {"fraction", cfg.dataset_fraction}};
    json variants = json::array();
    for (auto v : cfg.variants) variants.push_back(to_string(v));
    doc["variants"] = variants;
    doc["seeds"] = cfg.seeds;
    doc["output_dir"] = cfg.output_dir;
    doc["eval_every"] = cfg.oris.eval_every;
    doc["eval_episodes"] = cfg.oris.eval_episodes;
    if (cfg.reference) {
        doc["reference_returns"] = {{"random", cfg.reference->random_return}, {"expert", cfg.reference->expert_return}};
    }
    if (!cfg.reference_fixtures.empty()) doc["reference_fixtures"] = cfg.reference_fixtures;
    if (!cfg.gan_checkpoint.empty()) doc["gan_checkpoint"] = cfg.gan_checkpoint;
    if (!cfg.agent_checkpoint.empty()) doc["agent_checkpoint"] = cfg.agent_checkpoint;
    const auto& o = cfg.oris;
    doc["oris"] = {{"rollout_horizon", o.rollout_horizon},
                   {"rollout_count", o.rollout_count},
                   {"random_policy_prob", o.random_policy_prob},
                   {"epochs", o.epochs},
                   {"updates_per_epoch", o.updates_per_epoch},
                   {"off_batch_size", o.off_batch_size},
                   {"sim_batch_size", o.sim_batch_size},
                   {"max_restart_attempts", o.max_restart_attempts},
                   {"restart_fallback", o.restart_fallback},
                   {"buffer_capacity", o.buffer_capacity}};
    const auto& s = cfg.sac;
    doc["sac"] = {{"hidden_width", s.hidden_width},
                  {"hidden_layers", s.hidden_layers},
                  {"gamma", s.gamma},
                  {"tau", s.tau},
                  {"actor_lr", s.actor_lr},
                  {"critic_lr", s.critic_lr},
                  {"temperature_lr", s.temperature_lr},
                  {"initial_temperature", s.initial_temperature},
                  {"target_entropy", std::isnan(s.target_entropy) ? json(nullptr) : json(s.target_entropy)}};
    const auto& g = cfg.gan;
    doc["gan"] = {{"z_dim", g.z_dim},
                  {"hidden_width", g.hidden_width},
                  {"hidden_layers", g.hidden_layers},
                  {"iterations", g.iterations},
                  {"batch_size", g.batch_size},
                  {"learning_rate", g.learning_rate},
                  {"beta1", g.beta1},
                  {"restart_noise_sigma", g.restart_noise_sigma},
                  {"w_min", g.w_min},
                  {"w_max", g.w_max}};
    const auto& gen = cfg.generate;
    json tiers = json::array();
    for (auto t : gen.tiers) tiers.push_back(to_string(t));
    const auto& r = gen.reference;
    doc["generate"] = {{"tiers", tiers},
                       {"episodes", gen.episodes},
                       {"train_reference", gen.train_reference},
                       {"policy_checkpoint", gen.policy_checkpoint},
                       {"reference_run",
                        {{"total_steps", r.total_steps},
                         {"warmup_steps", r.warmup_steps},
                         {"batch_size", r.batch_size},
                         {"eval_every", r.eval_every},
                         {"eval_episodes", r.eval_episodes},
                         {"reference_episodes", r.reference_episodes},
                         {"buffer_capacity", r.buffer_capacity}}}};
    if (cfg.sweep_axis) doc["sweep"] = {{"axis", to_string(*cfg.sweep_axis)}};
    return doc;
}

ExperimentConfig parse_config(const json& doc, const fs::path& base_dir) {
    ExperimentConfig cfg;
    Fields top(doc, "");

    std::string env_id = "pendulum";
    top.read("env_id", env_id);
    try {
        cfg.env_id = env_id_from_string(env_id);
    } catch (const ConfigError&) {
        throw ConfigError("field 'env_id' must be 'pendulum' or 'pointgoal'");
    }

    if (top.has("sim_perturbation")) {
        Fields p(top.at("sim_perturbation"), "sim_perturbation");
        p.read("gravity_scale", cfg.sim_perturbation.gravity_scale);
        p.read("friction_scale", cfg.sim_perturbation.friction_scale);
        p.read("action_noise_std", cfg.sim_perturbation.action_noise_std);
        p.finish();
        require(std::isfinite(cfg.sim_perturbation.gravity_scale) && cfg.sim_perturbation.gravity_scale > 0.0,
                "sim_perturbation.gravity_scale", "must be a positive number");
        require(std::isfinite(cfg.sim_perturbation.friction_scale) && cfg.sim_perturbation.friction_scale >= 0.0,
                "sim_perturbation.friction_scale", "must be non-negative");
        require(std::isfinite(cfg.sim_perturbation.action_noise_std) && cfg.sim_perturbation.action_noise_std >= 0.0,
                "sim_perturbation.action_noise_std", "must be non-negative");
    }

    if (top.has("dataset")) {
        Fields d(top.at("dataset"), "dataset");
        std::string path;
        d.read("path", path);
        d.read("fraction", cfg.dataset_fraction);
        d.finish();
        cfg.dataset_path = resolve(base_dir, path).string();
        require(cfg.dataset_fraction > 0.0 && cfg.dataset_fraction <= 1.0, "dataset.fraction", "must lie in (0,1]");
    }

    if (top.has("variant") && top.has("variants")) throw ConfigError("give either 'variant' or 'variants', not both");
    if (top.has("variant")) {
        std::string v;
        top.read("variant", v);
        cfg.variants = {variant_from_string(v)};
    }
    if (top.has("variants")) {
        std::vector<std::string> names;
        top.read("variants", names);
        require(!names.empty(), "variants", "must not be empty");
        cfg.variants.clear();
        for (const auto& n : names) cfg.variants.push_back(variant_from_string(n));
    }
    top.mark("variant");

    top.read("seeds", cfg.seeds);
    require(!cfg.seeds.empty(), "seeds", "must list at least one seed");
    top.read("output_dir", cfg.output_dir);
    cfg.output_dir = resolve(base_dir, cfg.output_dir).string();
    top.read("eval_every", cfg.oris.eval_every);
    top.read("eval_episodes", cfg.oris.eval_episodes);
    require(cfg.oris.eval_every >= 1, "eval_every", "must be >= 1");
    require(cfg.oris.eval_episodes >= 1, "eval_episodes", "must be >= 1");

    if (top.has("reference_returns")) {
        Fields r(top.at("reference_returns"), "reference_returns");
        ReferenceReturns refs;
        r.read("random", refs.random_return);
        r.read("expert", refs.expert_return);
        r.finish();
        require(refs.expert_return > refs.random_return, "reference_returns.expert", "must exceed reference_returns.random");
        cfg.reference = refs;
    }
    std::string fixtures;
    top.read("reference_fixtures", fixtures);
    cfg.reference_fixtures = resolve(base_dir, fixtures).string();
    std::string gan_ckpt;
    top.read("gan_checkpoint", gan_ckpt);
    cfg.gan_checkpoint = resolve(base_dir, gan_ckpt).string();
    std::string agent_ckpt;
    top.read("agent_checkpoint", agent_ckpt);
    cfg.agent_checkpoint = resolve(base_dir, agent_ckpt).string();

    if (top.has("oris")) {
        Fields o(top.at("oris"), "oris");
        auto& c = cfg.oris;
        o.read("rollout_horizon", c.rollout_horizon);
        o.read("rollout_count", c.rollout_count);
        o.read("random_policy_prob", c.random_policy_prob);
        o.read("epochs", c.epochs);
        o.read("updates_per_epoch", c.updates_per_epoch);
        o.read("off_batch_size", c.off_batch_size);
        o.read("sim_batch_size", c.sim_batch_size);
        o.read("max_restart_attempts", c.max_restart_attempts);
        o.read("restart_fallback", c.restart_fallback);
        o.read("buffer_capacity", c.buffer_capacity);
        o.finish();
        require(c.rollout_horizon >= 1, "oris.rollout_horizon", "must be >= 1");
        require(c.rollout_count >= 1, "oris.rollout_count", "must be >= 1");
        require(c.random_policy_prob >= 0.0 && c.random_policy_prob <= 1.0, "oris.random_policy_prob", "must lie in [0,1]");
        require(c.epochs >= 1, "oris.epochs", "must be >= 1");
        require(c.updates_per_epoch >= 1, "oris.updates_per_epoch", "must be >= 1");
        require(c.off_batch_size >= 1, "oris.off_batch_size", "must be >= 1");
        require(c.sim_batch_size >= 1, "oris.sim_batch_size", "must be >= 1");
        require(c.max_restart_attempts >= 1, "oris.max_restart_attempts", "must be >= 1");
        require(c.buffer_capacity >= 1, "oris.buffer_capacity", "must be >= 1");
    }

    if (top.has("sac")) {
        Fields s(top.at("sac"), "sac");
        auto& h = cfg.sac;
        s.read("hidden_width", h.hidden_width);
        s.read("hidden_layers", h.hidden_layers);
        s.read("gamma", h.gamma);
        s.read("tau", h.tau);
        s.read("actor_lr", h.actor_lr);
        s.read("critic_lr", h.critic_lr);
        s.read("temperature_lr", h.temperature_lr);
        s.read("initial_temperature", h.initial_temperature);
        if (s.has("target_entropy") && !s.at("target_entropy").is_null()) s.read("target_entropy", h.target_entropy);
        s.mark("target_entropy");
        s.finish();
        require(h.hidden_width >= 1, "sac.hidden_width", "must be >= 1");
        require(h.hidden_layers >= 1, "sac.hidden_layers", "must be >= 1");
        require(h.gamma > 0.0 && h.gamma <= 1.0, "sac.gamma", "must lie in (0,1]");
        require(h.tau > 0.0 && h.tau <= 1.0, "sac.tau", "must lie in (0,1]");
        require(h.actor_lr > 0.0, "sac.actor_lr", "must be positive");
        require(h.critic_lr > 0.0, "sac.critic_lr", "must be positive");
        require(h.temperature_lr > 0.0, "sac.temperature_lr", "must be positive");
        require(h.initial_temperature > 0.0, "sac.initial_temperature", "must be positive");
    }

    if (top.has("gan")) {
        Fields g(top.at("gan"), "gan");
        auto& h = cfg.gan;
        g.read("z_dim", h.z_dim);
        g.read("hidden_width", h.hidden_width);
        g.read("hidden_layers", h.hidden_layers);
        g.read("iterations", h.iterations);
        g.read("batch_size", h.batch_size);
        g.read("learning_rate", h.learning_rate);
        g.read("beta1", h.beta1);
        g.read("restart_noise_sigma", h.restart_noise_sigma);
        g.read("w_min", h.w_min);
        g.read("w_max", h.w_max);
        g.finish();
        require(h.z_dim >= 1, "gan.z_dim", "must be >= 1");
        require(h.hidden_width >= 1, "gan.hidden_width", "must be >= 1");
        require(h.hidden_layers >= 1, "gan.hidden_layers", "must be >= 1");
        require(h.iterations >= 1, "gan.iterations", "must be >= 1");
        require(h.batch_size >= 1, "gan.batch_size", "must be >= 1");
        require(h.learning_rate > 0.0, "gan.learning_rate", "must be positive");
        require(h.beta1 > 0.0 && h.beta1 < 1.0, "gan.beta1", "must lie in (0,1)");
        require(h.restart_noise_sigma >= 0.0, "gan.restart_noise_sigma", "must be non-negative");
        require(h.w_min > 0.0, "gan.w_min", "must be positive");
        require(h.w_max >= h.w_min, "gan.w_max", "must be >= gan.w_min");
    }

    if (top.has("generate")) {
        Fields g(top.at("generate"), "generate");
        auto& gen = cfg.generate;
        std::vector<std::string> tiers;
        g.read("tiers", tiers);
        for (const auto& t : tiers) gen.tiers.push_back(tier_from_string(t));
        g.read("episodes", gen.episodes);
        g.read("train_reference", gen.train_reference);
        g.read("policy_checkpoint", gen.policy_checkpoint);
        gen.policy_checkpoint = resolve(base_dir, gen.policy_checkpoint).string();
        require(gen.episodes >= 1, "generate.episodes", "must be >= 1");
        if (g.has("reference_run")) {
            Fields r(g.at("reference_run"), "generate.reference_run");
            auto& rr = gen.reference;
            r.read("total_steps", rr.total_steps);
            r.read("warmup_steps", rr.warmup_steps);
            r.read("batch_size", rr.batch_size);
            r.read("eval_every", rr.eval_every);
            r.read("eval_episodes", rr.eval_episodes);
            r.read("reference_episodes", rr.reference_episodes);
            r.read("buffer_capacity", rr.buffer_capacity);
            r.finish();
            require(rr.total_steps >= 1, "generate.reference_run.total_steps", "must be >= 1");
            require(rr.warmup_steps >= 0, "generate.reference_run.warmup_steps", "must be >= 0");
            require(rr.batch_size >= 1, "generate.reference_run.batch_size", "must be >= 1");
            require(rr.eval_every >= 1, "generate.reference_run.eval_every", "must be >= 1");
        }
        g.finish();
    }
    cfg.generate.reference.sac = cfg.sac;

    if (top.has("sweep")) {
        Fields s(top.at("sweep"), "sweep");
        std::string axis;
        s.read("axis", axis);
        s.finish();
        cfg.sweep_axis = sweep_axis_from_string(axis);
    }
    top.finish();
    cfg.document = to_json(cfg);
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(doc, path.parent_path());
}

std::string metrics_csv(const std::vector<EpochReport>& reports, const ReferenceReturns& refs,
                        const std::string& config_hash) {
    std::ostringstream out;
    out << "# config_hash=" << config_hash << '\n';
    for (std::size_t i = 0; i < kMetricsColumns.size(); ++i) out << (i ? "," : "") << kMetricsColumns[i];
    out << '\n';
    for (const auto& r : reports) {
        out << r.epoch << ',' << r.env_steps << ',';
        if (r.evaluated) {
            out << fmt_double(r.eval_return_mean) << ',' << fmt_double(r.eval_return_std) << ','
                << fmt_double(normalized_score(r.eval_return_mean, refs.random_return, refs.expert_return)) << ',';
        } else {
            out << ",,,";
        }
        out << fmt_double(r.critic_loss) << ',' << fmt_double(r.actor_loss) << ',' << fmt_double(r.temperature) << ','
            << fmt_double(r.mean_sim_weight) << ',' << fmt_double(r.random_rollout_fraction) << ','
            << r.invalid_restart_count << '\n';
    }
    return out.str();
}

ParsedMetrics parse_metrics_csv(const std::string& text) {
    ParsedMetrics parsed;
    std::istringstream in(text);
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("# config_hash=", 0) == 0) {
            parsed.config_hash = line.substr(14);
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        while (cells.size() < kMetricsColumns.size()) cells.emplace_back();
        MetricsRow row;
        row.epoch = std::stoi(cells[0]);
        if (!cells[2].empty()) row.eval_return_mean = std::stod(cells[2]);
        if (!cells[4].empty()) row.normalized_score = std::stod(cells[4]);
        parsed.rows.push_back(row);
    }
    if (!header_seen) throw ConfigError("metrics file has no header");
    return parsed;
}

ParsedMetrics read_metrics_csv(const fs::path& path) { return parse_metrics_csv(read_text(path)); }

double ParsedMetrics::final_return() const {
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
        if (it->eval_return_mean) return *it->eval_return_mean;
    }
    throw ConfigError("metrics file has no evaluated epoch");
}

const ScoreRow* ScoreTable::find(const std::string& label, Variant v) const {
    for (const auto& r : rows) {
        if (r.label == label && r.variant == v) return &r;
    }
    return nullptr;
}

ScoreRow aggregate_runs(const std::string& label, Variant variant, const std::vector<fs::path>& csvs,
                        const ReferenceReturns& refs, const std::string& expected_hash) {
    ScoreRow row;
    row.label = label;
    row.variant = variant;
    for (const auto& path : csvs) {
        const auto parsed = read_metrics_csv(path);
        if (parsed.config_hash != expected_hash) {
            throw ConfigError("refusing to merge " + path.string() + ": config hash " + parsed.config_hash +
                              " differs from " + expected_hash);
        }
        const double final_return = parsed.final_return();
        row.final_returns.push_back(final_return);
        row.normalized.push_back(normalized_score(final_return, refs.random_return, refs.expert_return));
    }
    if (row.final_returns.empty()) return row;
    const double n = static_cast<double>(row.final_returns.size());
    row.mean_return = std::accumulate(row.final_returns.begin(), row.final_returns.end(), 0.0) / n;
    row.mean_normalized = std::accumulate(row.normalized.begin(), row.normalized.end(), 0.0) / n;
    double var = 0.0;
    for (double v : row.normalized) var += (v - row.mean_normalized) * (v - row.mean_normalized);
    row.std_normalized = std::sqrt(var / n);
    return row;
}

void write_score_table(const ScoreTable& table, const fs::path& directory, const std::string& config_hash) {
    std::ostringstream csv;
    csv << "# config_hash=" << config_hash << '\n';
    csv << "label,variant,n_seeds,mean_final_return,mean_normalized_score,std_normalized_score\n";
    json rows = json::array();
    for (const auto& r : table.rows) {
        csv << r.label << ',' << to_string(r.variant) << ',' << r.final_returns.size() << ','
            << fmt_double(r.mean_return) << ',' << fmt_double(r.mean_normalized) << ',' << fmt_double(r.std_normalized)
            << '\n';
        rows.push_back({{"label", r.label},
                        {"variant", to_string(r.variant)},
                        {"seeds", r.seeds},
                        {"final_returns", r.final_returns},
                        {"normalized_scores", r.normalized},
                        {"mean_final_return", r.mean_return},
                        {"mean_normalized_score", r.mean_normalized},
                        {"std_normalized_score", r.std_normalized}});
    }
    write_text(directory / "score_table.csv", csv.str());
    json doc = {{"config_hash", config_hash}, {"rows", rows}, {"failures", table.failures}};
    write_text(directory / "score_table.json", doc.dump(2) + "\n");
}

ReferenceReturns resolve_reference(const ExperimentConfig& cfg) {
    if (cfg.reference) return *cfg.reference;
    if (cfg.reference_fixtures.empty()) {
        throw ConfigError("config needs either 'reference_returns' or 'reference_fixtures' for normalized scores");
    }
    const auto fixtures = read_reference_fixtures(cfg.reference_fixtures);
    const auto it = fixtures.find(to_string(cfg.env_id));
    if (it == fixtures.end()) throw ConfigError("reference fixtures have no entry for " + to_string(cfg.env_id));
    return it->second;
}

Dataset load_offline(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.dataset_path.empty()) throw ConfigError("config does not name a dataset");
    if (!fs::exists(cfg.dataset_path)) throw ConfigError("dataset " + cfg.dataset_path + " does not exist");
    Dataset d = read_dataset(cfg.dataset_path);
    if (d.meta.env_id != cfg.env_id) throw ConfigError("dataset env_id does not match config env_id");
    if (cfg.dataset_fraction < 1.0) d = subsample_trajectories(d, cfg.dataset_fraction, derive_seed(seed, 51));
    return d;
}

RunOutcome run_single(const ExperimentConfig& cfg, Variant variant, std::uint64_t seed, const fs::path& run_dir,
                      const gan::GanPair* gan) {
    const ReferenceReturns refs = resolve_reference(cfg);
    std::optional<Dataset> offline;
    if (uses_offline_data(variant)) offline = load_offline(cfg, seed);
    std::optional<gan::GanPair> loaded_gan;
    if (gan == nullptr && !cfg.gan_checkpoint.empty() && (uses_gan_restarts(variant) || uses_gan_weights(variant))) {
        loaded_gan = gan::GanPair::load(cfg.gan_checkpoint);
        gan = &*loaded_gan;
    }
    TrainInputs in;
    in.real = cfg.real_spec();
    in.sim = cfg.sim_spec();
    in.offline = offline ? &*offline : nullptr;
    in.cfg = cfg.oris;
    in.cfg.variant = variant;
    in.sac = cfg.sac;
    in.gan = cfg.gan;
    in.pretrained_gan = gan;
    in.seed = seed;
    auto result = train(in);

    RunOutcome outcome;
    outcome.variant = variant;
    outcome.seed = seed;
    outcome.reports = std::move(result.reports);
    for (auto it = outcome.reports.rbegin(); it != outcome.reports.rend(); ++it) {
        if (it->evaluated) {
            outcome.final_return = it->eval_return_mean;
            break;
        }
    }
    outcome.final_normalized = normalized_score(outcome.final_return, refs.random_return, refs.expert_return);
    if (!run_dir.empty()) {
        outcome.metrics_path = run_dir / "metrics.csv";
        write_text(outcome.metrics_path, metrics_csv(outcome.reports, refs, cfg.hash()));
        result.agent.save(run_dir / "agent");
    }
    return outcome;
}

namespace {

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

}  // namespace

ScoreTable run(const ExperimentConfig& cfg) {
    const ReferenceReturns refs = resolve_reference(cfg);
    const fs::path out(cfg.output_dir);
    const std::string hash = cfg.hash();
    ScoreTable table;
    for (auto variant : cfg.variants) {
        std::vector<fs::path> csvs;
        for (auto seed : cfg.seeds) {
            const auto outcome = run_single(cfg, variant, seed, out / to_string(variant) / seed_dir(seed));
            csvs.push_back(outcome.metrics_path);
        }
        auto row = aggregate_runs(to_string(variant), variant, csvs, refs, hash);
        row.seeds = cfg.seeds;
        table.rows.push_back(std::move(row));
    }
    write_score_table(table, out, hash);
    return table;
}

std::vector<SweepPoint> expand_sweep(const ExperimentConfig& base, SweepAxis axis) {
    std::vector<SweepPoint> points;
    auto make = [&](const std::string& label, auto&& edit) {
        ExperimentConfig cfg = base;
        edit(cfg);
        cfg.sweep_axis.reset();
        cfg.output_dir = (fs::path(base.output_dir) / label).string();
        cfg.document = to_json(cfg);
        points.push_back({label, std::move(cfg)});
    };
    const double bound = EnvSpec::real(base.env_id).action_bound();
    switch (axis) {
        case SweepAxis::gravity:
            for (double g : {2.0, 3.0, 4.0, 5.0}) {
                make("gravity=" + fmt_double(g), [g](ExperimentConfig& c) { c.sim_perturbation = {g, 1.0, 0.0}; });
            }
            break;
        case SweepAxis::gap_type:
            make("gap=gravity", [](ExperimentConfig& c) { c.sim_perturbation = {2.0, 1.0, 0.0}; });
            make("gap=friction", [](ExperimentConfig& c) { c.sim_perturbation = {1.0, 0.3, 0.0}; });
            make("gap=action_noise", [bound](ExperimentConfig& c) { c.sim_perturbation = {1.0, 1.0, 1.0 * bound}; });
            break;
        case SweepAxis::fraction:
            for (double f : {1.0, 0.25, 0.05}) {
                make("fraction=" + fmt_double(f), [f](ExperimentConfig& c) { c.dataset_fraction = f; });
            }
            break;
        case SweepAxis::ablation:
            make("ablation", [](ExperimentConfig& c) {
                c.variants = {Variant::oris, Variant::no_restart, Variant::uniform_weight, Variant::naive_mix};
            });
            break;
    }
    return points;
}

ScoreTable sweep(const ExperimentConfig& base, SweepAxis axis) {
    const ReferenceReturns refs = resolve_reference(base);
    ScoreTable table;
    json manifest = json::array();
    for (const auto& point : expand_sweep(base, axis)) {
        const std::string hash = point.config.hash();
        write_text(fs::path(point.config.output_dir) / "config.json", point.config.document.dump(2) + "\n");
        for (auto variant : point.config.variants) {
            std::vector<fs::path> csvs;
            std::vector<std::uint64_t> seeds;
            for (auto seed : point.config.seeds) {
                const fs::path dir = fs::path(point.config.output_dir) / to_string(variant) / seed_dir(seed);
                try {
                    csvs.push_back(run_single(point.config, variant, seed, dir).metrics_path);
                    seeds.push_back(seed);
                } catch (const std::exception& e) {
                    const std::string msg = point.label + "/" + to_string(variant) + "/" + seed_dir(seed) + ": " + e.what();
                    table.failures.push_back(msg);
                    manifest.push_back({{"point", point.label},
                                        {"variant", to_string(variant)},
                                        {"seed", seed},
                                        {"error", e.what()}});
                }
            }
            if (csvs.empty()) continue;
            auto row = aggregate_runs(point.label, variant, csvs, refs, hash);
            row.seeds = seeds;
            table.rows.push_back(std::move(row));
        }
    }
    const fs::path out(base.output_dir);
    write_text(out / "failures.json", manifest.dump(2) + "\n");
    write_score_table(table, out, base.hash());
    return table;
}

}  // namespace oris::harness
