#include "oris/datagen.hpp"

#include <algorithm>

#include "oris/oris.hpp"

namespace oris {

void ReferenceRunConfig::validate() const {
    if (total_steps < 1 || warmup_steps < 0 || batch_size < 1 || eval_every < 1 || eval_episodes < 1 ||
        reference_episodes < 1) {
        throw ConfigError("reference run: step counts must be positive");
    }
    if (buffer_capacity < 1) throw ConfigError("reference run: buffer_capacity must be positive");
    sac.validate();
}

double random_policy_return(const EnvSpec& spec, int episodes, std::uint64_t seed) {
    double total = 0.0;
    for (int k = 0; k < episodes; ++k) {
        Rng rng = make_rng(seed, static_cast<std::uint64_t>(k));
        Policy policy = [&spec](const Vector&, Rng& r) { return random_action(spec, r); };
        for (const auto& t : rollout(spec, policy, std::nullopt, spec.max_episode_steps, rng)) total += t.r;
    }
    return total / episodes;
}

ReferenceRun train_reference(const EnvSpec& real, const ReferenceRunConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (!real.perturbation.is_identity()) throw ConfigError("reference runs train on the real environment");
    ReferenceRun run;
    run.spec = real;
    run.seed = seed;
    run.random_return = random_policy_return(real, cfg.reference_episodes, derive_seed(seed, 41));

    sac::SacAgent agent(real.obs_dim(), real.action_dim(), real.action_bound(), cfg.sac, derive_seed(seed, 42));
    ReplayBuffer buffer(cfg.buffer_capacity);
    Rng env_rng = make_rng(seed, 43);
    Rng update_rng = make_rng(seed, 44);
    const std::uint64_t eval_seed = derive_seed(seed, 45);

    // Full history, needed to cut the medium-replay dataset afterwards.
    std::vector<Transition> history;
    std::vector<std::size_t> episode_ends;

    Env env(real);
    Vector obs = env.reset(env_rng);
    for (int step = 0; step < cfg.total_steps; ++step) {
        Vector action = step < cfg.warmup_steps ? random_action(real, env_rng)
                                                : sac::act(agent, obs, sac::ActMode::stochastic, env_rng);
        StepResult result = env.step(action, env_rng);
        Transition t{obs, action, result.reward, result.observation, result.terminal, Transition::Origin::simulator};
        history.push_back(t);
        buffer.push(std::move(t));
        obs = result.observation;
        if (result.done) {
            episode_ends.push_back(history.size());
            obs = env.reset(env_rng);
        }
        if (step + 1 >= cfg.warmup_steps) {
            sac::WeightedBatch batch;
            batch.sim_batch = buffer.sample(static_cast<std::size_t>(cfg.batch_size), update_rng);
            batch.sim_weights.assign(batch.sim_batch.size(), 1.0);
            sac::critic_update(agent, batch, update_rng);
            sac::actor_update(agent, sac::stack_states(batch.sim_batch), update_rng);
        }
        if ((step + 1) % cfg.eval_every == 0) {
            const auto snap = agent.snapshot();
            const auto eval = evaluate(snap, real, cfg.eval_episodes, eval_seed);
            run.checkpoints.push_back({static_cast<std::size_t>(step + 1), eval.mean, snap});
        }
    }
    if (run.checkpoints.empty()) throw ConfigError("reference run produced no checkpoints (eval_every > total_steps)");

    for (std::size_t i = 0; i < run.checkpoints.size(); ++i) {
        if (run.checkpoints[i].eval_return > run.checkpoints[run.expert_index].eval_return) run.expert_index = i;
    }
    run.expert_return = run.expert().eval_return;
    const double midpoint = run.random_return + 0.5 * (run.expert_return - run.random_return);
    run.medium_index = run.expert_index;
    for (std::size_t i = 0; i < run.checkpoints.size(); ++i) {
        if (run.checkpoints[i].eval_return > midpoint) {
            run.medium_index = i;
            break;
        }
    }

    run.medium_replay.meta = {real.env_id, real.perturbation, Tier::medium_replay, seed, 1};
    const std::size_t cut = run.medium().step;
    std::size_t begin = 0;
    for (std::size_t end : episode_ends) {
        if (end > cut) break;
        std::vector<Transition> episode(history.begin() + static_cast<std::ptrdiff_t>(begin),
                                        history.begin() + static_cast<std::ptrdiff_t>(end));
        for (auto& t : episode) t.origin = Transition::Origin::offline;
        run.medium_replay.append_trajectory(std::move(episode));
        begin = end;
    }
    return run;
}

Dataset generate_dataset(const EnvSpec& real, Tier tier, int episodes, std::uint64_t seed,
                         const ReferenceRun* reference) {
    if (!real.perturbation.is_identity()) throw ConfigError("offline datasets are collected on the real environment");
    if (episodes < 1) throw ConfigError("episodes must be positive");
    if (tier != Tier::random) {
        if (reference == nullptr) {
            throw ConfigError("tier '" + to_string(tier) + "' needs a trained reference policy and none was supplied");
        }
        if (reference->spec.env_id != real.env_id) throw ConfigError("reference run belongs to another environment");
    }
    if (tier == Tier::medium_replay) return reference->medium_replay;

    Dataset d;
    d.meta = {real.env_id, real.perturbation, tier, seed, 1};
    Policy policy;
    if (tier == Tier::random) {
        policy = [&real](const Vector&, Rng& r) { return random_action(real, r); };
    } else {
        const sac::ActorSnapshot* actor = tier == Tier::expert ? &reference->expert().actor : &reference->medium().actor;
        policy = [actor](const Vector& obs, Rng& r) { return actor->act(obs, sac::ActMode::stochastic, r); };
    }
    for (int k = 0; k < episodes; ++k) {
        Rng rng = make_rng(seed, 1000 + static_cast<std::uint64_t>(k));
        auto episode = rollout(real, policy, std::nullopt, real.max_episode_steps, rng);
        for (auto& t : episode) t.origin = Transition::Origin::offline;
        d.append_trajectory(std::move(episode));
    }
    return d;
}

}  // namespace oris
