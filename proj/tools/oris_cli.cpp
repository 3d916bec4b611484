#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "oris/harness.hpp"

namespace fs = std::filesystem;
using namespace oris;

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", flags.seed, "overrides the config's seed list with a single seed");
    cmd->add_option("--out", flags.out, "output directory (overrides output_dir)");
}

harness::ExperimentConfig load(const CommonFlags& flags) {
    auto cfg = harness::load_config(flags.config);
    if (flags.seed) cfg.seeds = {*flags.seed};
    if (!flags.out.empty()) cfg.output_dir = flags.out;
    cfg.document = harness::to_json(cfg);
    return cfg;
}

void print_table(const harness::ScoreTable& table) {
    std::printf("%-24s %-16s %6s %14s %12s\n", "label", "variant", "seeds", "final_return", "norm_score");
    for (const auto& r : table.rows) {
        std::printf("%-24s %-16s %6zu %14.3f %7.2f+-%-5.2f\n", r.label.c_str(), to_string(r.variant).c_str(),
                    r.final_returns.size(), r.mean_return, r.mean_normalized, r.std_normalized);
    }
}

int gen_dataset(const CommonFlags& flags) {
    const auto cfg = load(flags);
    const std::uint64_t seed = cfg.seeds.front();
    const fs::path out(cfg.output_dir);
    const EnvSpec real = cfg.real_spec();
    const auto& gen = cfg.generate;
    std::vector<Tier> tiers = gen.tiers;
    if (tiers.empty()) tiers = {Tier::random, Tier::medium, Tier::medium_replay, Tier::expert};

    bool needs_reference = false;
    for (auto t : tiers) needs_reference |= t != Tier::random;

    std::optional<ReferenceRun> reference;
    if (!gen.policy_checkpoint.empty()) {
        for (auto t : tiers) {
            if (t == Tier::medium || t == Tier::medium_replay) {
                throw ConfigError("generate.policy_checkpoint only supports the random and expert tiers");
            }
        }
        const auto agent = sac::SacAgent::load(gen.policy_checkpoint, cfg.sac);
        ReferenceRun run;
        run.spec = real;
        run.seed = seed;
        run.checkpoints.push_back({0, 0.0, agent.snapshot()});
        run.checkpoints[0].eval_return =
            evaluate(agent.snapshot(), real, gen.reference.reference_episodes, derive_seed(seed, 3)).mean;
        run.expert_return = run.checkpoints[0].eval_return;
        run.random_return = random_policy_return(real, gen.reference.reference_episodes, derive_seed(seed, 4));
        reference = std::move(run);
    } else if (needs_reference || gen.train_reference) {
        std::cerr << "training reference policy on " << to_string(real.env_id) << " (" << gen.reference.total_steps
                  << " steps)\n";
        reference = train_reference(real, gen.reference, seed);
    }

    for (auto tier : tiers) {
        const auto data = generate_dataset(real, tier, gen.episodes, derive_seed(seed, 100 + static_cast<int>(tier)),
                                           reference ? &*reference : nullptr);
        const fs::path path = out / (to_string(real.env_id) + "_" + to_string(tier) + ".jsonl");
        write_dataset(data, path);
        std::printf("%s: %zu transitions, %zu trajectories\n", path.string().c_str(), data.transitions.size(),
                    data.trajectory_ends.size());
    }

    if (reference) {
        const fs::path fixtures = out / "reference_returns.json";
        std::map<std::string, harness::ReferenceReturns> refs;
        if (fs::exists(fixtures)) refs = harness::read_reference_fixtures(fixtures);
        refs[to_string(real.env_id)] = {reference->random_return, reference->expert_return};
        harness::write_reference_fixtures(fixtures, refs);
        std::printf("reference returns: random %.3f expert %.3f -> %s\n", reference->random_return,
                    reference->expert_return, fixtures.string().c_str());
    }
    return 0;
}

int pretrain_gan(const CommonFlags& flags) {
    const auto cfg = load(flags);
    const auto data = harness::load_offline(cfg, cfg.seeds.front());
    auto hp = cfg.gan;
    hp.seed = cfg.seeds.front();
    const auto result = gan::pretrain(state_marginal(data), hp);
    const fs::path out(cfg.output_dir);
    result.gan.save(out);
    const auto& rep = result.report;
    if (!rep.discriminator_loss.empty()) {
        std::printf("gan saved to %s; final D loss %.4f, G loss %.4f, D(real) %.3f, D(fake) %.3f\n",
                    out.string().c_str(), rep.discriminator_loss.back(), rep.generator_loss.back(),
                    rep.mean_d_real.back(), rep.mean_d_fake.back());
    }
    return 0;
}

int train_cmd(const CommonFlags& flags) {
    const auto cfg = load(flags);
    print_table(harness::run(cfg));
    std::printf("results in %s (config hash %s)\n", cfg.output_dir.c_str(), cfg.hash().c_str());
    return 0;
}

int evaluate_cmd(const CommonFlags& flags, const std::string& checkpoint, int episodes) {
    const auto cfg = load(flags);
    const std::string dir = checkpoint.empty() ? cfg.agent_checkpoint : checkpoint;
    if (dir.empty()) throw ConfigError("no agent checkpoint: set agent_checkpoint or pass --checkpoint");
    const auto agent = sac::SacAgent::load(dir, cfg.sac);
    const auto refs = harness::resolve_reference(cfg);
    const int n = episodes > 0 ? episodes : cfg.oris.eval_episodes;
    const auto result = evaluate(agent.snapshot(), cfg.real_spec(), n, cfg.seeds.front());
    const double score = harness::normalized_score(result.mean, refs.random_return, refs.expert_return);
    nlohmann::json doc = {{"checkpoint", dir},
                          {"env_id", to_string(cfg.env_id)},
                          {"episodes", n},
                          {"seed", cfg.seeds.front()},
                          {"returns", result.returns},
                          {"mean_return", result.mean},
                          {"std_return", result.stddev},
                          {"normalized_score", score}};
    if (!flags.out.empty()) {
        fs::create_directories(flags.out);
        std::ofstream(fs::path(flags.out) / "evaluation.json") << doc.dump(2) << '\n';
    }
    std::cout << doc.dump(2) << '\n';
    return 0;
}

int sweep_cmd(const CommonFlags& flags, const std::string& axis_name) {
    const auto cfg = load(flags);
    std::optional<harness::SweepAxis> axis = cfg.sweep_axis;
    if (!axis_name.empty()) axis = harness::sweep_axis_from_string(axis_name);
    if (!axis) throw ConfigError("no sweep axis: set sweep.axis or pass --axis");
    const auto table = harness::sweep(cfg, *axis);
    print_table(table);
    for (const auto& f : table.failures) std::fprintf(stderr, "failed: %s\n", f.c_str());
    return table.failures.empty() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Offline RL with an inaccurate simulator"};
    app.require_subcommand(1);

    CommonFlags gen_flags, gan_flags, train_flags, eval_flags, sweep_flags;
    auto* gen = app.add_subcommand("gen-dataset", "train reference policies and write offline datasets");
    add_common(gen, gen_flags);
    auto* gan_cmd = app.add_subcommand("pretrain-gan", "fit the restart GAN on the dataset states");
    add_common(gan_cmd, gan_flags);
    auto* train = app.add_subcommand("train", "train every configured variant and seed");
    add_common(train, train_flags);
    auto* eval = app.add_subcommand("evaluate", "evaluate a saved agent on the real environment");
    add_common(eval, eval_flags);
    std::string checkpoint;
    int episodes = 0;
    eval->add_option("--checkpoint", checkpoint, "agent directory (overrides agent_checkpoint)");
    eval->add_option("--episodes", episodes, "number of evaluation episodes");
    auto* sweep = app.add_subcommand("sweep", "run a sweep over one axis");
    add_common(sweep, sweep_flags);
    std::string axis;
    sweep->add_option("--axis", axis, "gravity, gap_type, fraction or ablation");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return gen_dataset(gen_flags);
        if (*gan_cmd) return pretrain_gan(gan_flags);
        if (*train) return train_cmd(train_flags);
        if (*eval) return evaluate_cmd(eval_flags, checkpoint, episodes);
        if (*sweep) return sweep_cmd(sweep_flags, axis);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
