#include "oris/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace oris {

using nlohmann::json;

std::string to_string(Tier tier) {
    switch (tier) {
        case Tier::random: return "random";
        case Tier::medium: return "medium";
        case Tier::medium_replay: return "medium_replay";
        case Tier::expert: return "expert";
    }
    return "random";
}

Tier tier_from_string(const std::string& name) {
    if (name == "random") return Tier::random;
    if (name == "medium") return Tier::medium;
    if (name == "medium_replay") return Tier::medium_replay;
    if (name == "expert") return Tier::expert;
    throw ConfigError("unknown dataset tier '" + name + "'");
}

void Dataset::append_trajectory(std::vector<Transition> trajectory) {
    if (trajectory.empty()) return;
    for (auto& t : trajectory) transitions.push_back(std::move(t));
    trajectory_ends.push_back(transitions.size());
}

std::vector<double> Dataset::trajectory_returns() const {
    std::vector<double> returns;
    std::size_t begin = 0;
    for (std::size_t end : trajectory_ends) {
        double total = 0.0;
        for (std::size_t i = begin; i < end; ++i) total += transitions[i].r;
        returns.push_back(total);
        begin = end;
    }
    return returns;
}

void Dataset::validate() const {
    const EnvSpec spec = EnvSpec::real(meta.env_id);
    for (std::size_t i = 0; i < transitions.size(); ++i) {
        const auto& t = transitions[i];
        if (t.s.size() != spec.obs_dim() || t.s_next.size() != spec.obs_dim() || t.a.size() != spec.action_dim()) {
            throw ConfigError("transition " + std::to_string(i) + " has dimensions that do not match " +
                              to_string(meta.env_id));
        }
        if (!t.s.allFinite() || !t.s_next.allFinite() || !t.a.allFinite() || !std::isfinite(t.r)) {
            throw ConfigError("transition " + std::to_string(i) + " holds non-finite values");
        }
    }
    std::size_t prev = 0;
    for (std::size_t end : trajectory_ends) {
        if (end <= prev) throw ConfigError("trajectory boundaries must be strictly increasing");
        prev = end;
    }
    if (!transitions.empty() && (trajectory_ends.empty() || trajectory_ends.back() != transitions.size())) {
        throw ConfigError("trajectory boundaries must end at the dataset length");
    }
}

namespace {

json vec_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector json_vec(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

std::string dataset_to_jsonl(const Dataset& d) {
    d.validate();
    std::ostringstream out;
    json meta = {{"format", "oris-dataset"},
                 {"version", kDatasetFormatVersion},
                 {"env_id", to_string(d.meta.env_id)},
                 {"tier", to_string(d.meta.tier)},
                 {"perturbation",
                  {{"gravity_scale", d.meta.perturbation.gravity_scale},
                   {"friction_scale", d.meta.perturbation.friction_scale},
                   {"action_noise_std", d.meta.perturbation.action_noise_std}}},
                 {"seed", d.meta.behavior_policy_seed},
                 {"created_with_version", d.meta.created_with_version}};
    out << meta.dump() << '\n';
    std::size_t boundary = 0;
    for (std::size_t i = 0; i < d.transitions.size(); ++i) {
        const auto& t = d.transitions[i];
        const bool eot = boundary < d.trajectory_ends.size() && d.trajectory_ends[boundary] == i + 1;
        if (eot) ++boundary;
        json line = {{"s", vec_json(t.s)}, {"a", vec_json(t.a)}, {"r", t.r},
                     {"s2", vec_json(t.s_next)}, {"done", t.done}, {"eot", eot}};
        out << line.dump() << '\n';
    }
    return out.str();
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
    const std::string text = dataset_to_jsonl(d);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw ConfigError("failed writing " + path.string());
}

Dataset dataset_from_jsonl(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty dataset file");
    Dataset d;
    try {
        const json meta = json::parse(line);
        if (meta.at("format") != "oris-dataset") throw ConfigError("not an oris dataset");
        if (meta.at("version").get<int>() != kDatasetFormatVersion) throw ConfigError("unsupported dataset version");
        d.meta.env_id = env_id_from_string(meta.at("env_id").get<std::string>());
        d.meta.tier = tier_from_string(meta.at("tier").get<std::string>());
        const auto& p = meta.at("perturbation");
        d.meta.perturbation = {p.at("gravity_scale").get<double>(), p.at("friction_scale").get<double>(),
                               p.at("action_noise_std").get<double>()};
        d.meta.behavior_policy_seed = meta.at("seed").get<std::uint64_t>();
        d.meta.created_with_version = meta.value("created_with_version", 1);
        std::size_t lineno = 1;
        bool open_trajectory = false;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const json j = json::parse(line);
            Transition t;
            t.s = json_vec(j.at("s"));
            t.a = json_vec(j.at("a"));
            t.r = j.at("r").get<double>();
            t.s_next = json_vec(j.at("s2"));
            t.done = j.at("done").get<bool>();
            t.origin = Transition::Origin::offline;
            d.transitions.push_back(std::move(t));
            open_trajectory = true;
            if (j.at("eot").get<bool>()) {
                d.trajectory_ends.push_back(d.transitions.size());
                open_trajectory = false;
            }
        }
        if (open_trajectory) throw ConfigError("dataset ends inside a trajectory (missing eot)");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed dataset: ") + e.what());
    }
    d.validate();
    return d;
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open dataset " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return dataset_from_jsonl(buf.str());
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ContractError("replay buffer capacity must be positive");
}

ReplayBuffer::ReplayBuffer(const ReplayBuffer& other) : capacity_(other.capacity_) {
    std::shared_lock lock(other.mutex_);
    storage_ = other.storage_;
    head_ = other.head_;
}

void ReplayBuffer::push(Transition t) {
    std::unique_lock lock(mutex_);
    if (storage_.size() < capacity_) {
        storage_.push_back(std::move(t));
    } else {
        storage_[head_] = std::move(t);
        head_ = (head_ + 1) % capacity_;
    }
}

void ReplayBuffer::push_all(std::vector<Transition> ts) {
    for (auto& t : ts) push(std::move(t));
}

std::size_t ReplayBuffer::size() const {
    std::shared_lock lock(mutex_);
    return storage_.size();
}

Transition ReplayBuffer::at(std::size_t i) const {
    std::shared_lock lock(mutex_);
    if (i >= storage_.size()) throw ContractError("replay buffer index out of range");
    return storage_[(head_ + i) % storage_.size()];
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
    std::shared_lock lock(mutex_);
    if (storage_.empty()) throw ContractError("cannot sample from an empty replay buffer");
    std::uniform_int_distribution<std::size_t> pick(0, storage_.size() - 1);
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) out.push_back(storage_[pick(rng)]);
    return out;
}

std::vector<Transition> ReplayBuffer::contents() const {
    std::shared_lock lock(mutex_);
    std::vector<Transition> out;
    out.reserve(storage_.size());
    for (std::size_t i = 0; i < storage_.size(); ++i) out.push_back(storage_[(head_ + i) % storage_.size()]);
    return out;
}

std::vector<Transition> sample_minibatch(const Dataset& d, std::size_t n, Rng& rng) {
    if (d.empty()) throw ContractError("cannot sample from an empty dataset");
    std::uniform_int_distribution<std::size_t> pick(0, d.size() - 1);
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) out.push_back(d.transitions[pick(rng)]);
    return out;
}

std::vector<Transition> sample_minibatch(const ReplayBuffer& buffer, std::size_t n, Rng& rng) {
    return buffer.sample(n, rng);
}

Dataset subsample_trajectories(const Dataset& d, double fraction, std::uint64_t seed) {
    if (d.num_trajectories() == 0) throw ContractError("cannot subsample an empty dataset");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractError("fraction must lie in (0,1]");
    const std::size_t total = d.num_trajectories();
    // Guard against 0.05 * 20 landing a hair above 1 in floating point.
    const double raw = fraction * static_cast<double>(total);
    auto keep = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    keep = std::clamp<std::size_t>(keep, 1, total);

    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(seed, 0x5b5);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(keep);
    std::sort(order.begin(), order.end());

    Dataset out;
    out.meta = d.meta;
    for (std::size_t idx : order) {
        const std::size_t begin = idx == 0 ? 0 : d.trajectory_ends[idx - 1];
        const std::size_t end = d.trajectory_ends[idx];
        out.append_trajectory({d.transitions.begin() + static_cast<std::ptrdiff_t>(begin),
                               d.transitions.begin() + static_cast<std::ptrdiff_t>(end)});
    }
    return out;
}

std::vector<Vector> state_marginal(const Dataset& d) {
    std::vector<Vector> states;
    states.reserve(d.size());
    for (const auto& t : d.transitions) states.push_back(t.s);
    return states;
}

}  // namespace oris
