#include "oris/oris.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oris {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::oris: return "oris";
        case Variant::no_restart: return "no_restart";
        case Variant::uniform_weight: return "uniform_weight";
        case Variant::sim_only_sac: return "sim_only_sac";
        case Variant::bc: return "bc";
        case Variant::naive_mix: return "naive_mix";
    }
    return "oris";
}

Variant variant_from_string(const std::string& name) {
    for (auto v : {Variant::oris, Variant::no_restart, Variant::uniform_weight, Variant::sim_only_sac, Variant::bc,
                   Variant::naive_mix}) {
        if (to_string(v) == name) return v;
    }
    throw ConfigError("unknown variant '" + name + "'");
}

bool uses_gan_restarts(Variant v) { return v == Variant::oris || v == Variant::uniform_weight; }
bool uses_gan_weights(Variant v) { return v == Variant::oris || v == Variant::no_restart; }
bool uses_offline_data(Variant v) { return v != Variant::sim_only_sac; }
bool uses_simulator(Variant v) { return v != Variant::bc; }

void OrisConfig::validate() const {
    if (rollout_horizon < 1 || rollout_count < 1 || epochs < 1 || updates_per_epoch < 1) {
        throw ConfigError("oris: rollout_horizon, rollout_count, epochs and updates_per_epoch must be >= 1");
    }
    if (!(random_policy_prob >= 0.0 && random_policy_prob <= 1.0)) {
        throw ConfigError("oris: random_policy_prob must lie in [0,1]");
    }
    if (off_batch_size < 1 || sim_batch_size < 1) throw ConfigError("oris: batch sizes must be >= 1");
    if (max_restart_attempts < 1) throw ConfigError("oris: max_restart_attempts must be >= 1");
    if (buffer_capacity < 1) throw ConfigError("oris: buffer_capacity must be >= 1");
    if (eval_every < 1 || eval_episodes < 1) throw ConfigError("oris: eval_every and eval_episodes must be >= 1");
    if (pooled_unweighted_path && variant != Variant::uniform_weight && variant != Variant::naive_mix) {
        throw ConfigError("oris: the pooled unweighted path only applies to unit-weight variants");
    }
}

HybridChoice hybrid_policy(const sac::ActorSnapshot& snapshot, const EnvSpec& spec, double p, Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("random policy probability must lie in [0,1]");
    std::bernoulli_distribution coin(p);
    HybridChoice choice;
    choice.random = coin(rng);
    if (choice.random) {
        choice.policy = [spec](const Vector&, Rng& r) { return random_action(spec, r); };
    } else {
        choice.policy = [&snapshot](const Vector& obs, Rng& r) {
            return snapshot.act(obs, sac::ActMode::stochastic, r);
        };
    }
    return choice;
}

std::optional<Vector> draw_restart(const EnvSpec& sim, const gan::GanPair& gan, int max_attempts, Rng& rng,
                                   int& rejections) {
    Env probe(sim);
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        Vector candidate = gan::sample_restart(gan, rng);
        try {
            probe.set_state(candidate);
            return probe.observe();
        } catch (const InvalidStateError&) {
            ++rejections;
        }
    }
    return std::nullopt;
}

CollectReport collect_epoch(const EnvSpec& sim, const gan::GanPair* gan, const sac::ActorSnapshot& snapshot,
                            const OrisConfig& cfg, ReplayBuffer& buffer, Rng& rng) {
    const bool gan_restarts = uses_gan_restarts(cfg.variant);
    if (gan_restarts && gan == nullptr) throw UsageError("GAN restarts requested without a pretrained GAN");
    CollectReport report;
    // Every rollout gets its own stream so the C rollouts are independent of
    // execution order.
    const std::uint64_t base = rng();
    std::vector<std::vector<Transition>> rollouts(static_cast<std::size_t>(cfg.rollout_count));
    for (int c = 0; c < cfg.rollout_count; ++c) {
        Rng local = make_rng(base, static_cast<std::uint64_t>(c));
        HybridChoice choice = hybrid_policy(snapshot, sim, cfg.random_policy_prob, local);
        std::optional<Vector> start;
        if (gan_restarts) {
            int rejected = 0;
            start = draw_restart(sim, *gan, cfg.max_restart_attempts, local, rejected);
            report.invalid_restarts += rejected;
            if (!start) {
                if (!cfg.restart_fallback) {
                    throw InvalidStateError("more than " + std::to_string(cfg.max_restart_attempts) +
                                            " consecutive invalid restart states");
                }
                ++report.fallback_restarts;
            }
        }
        Env env(sim);
        if (!start) start = env.reset(local);
        report.start_states.push_back(*start);
        rollouts[static_cast<std::size_t>(c)] = rollout(sim, choice.policy, start, cfg.rollout_horizon, local);
        report.random_rollouts += choice.random ? 1 : 0;
        report.rollouts += 1;
    }
    for (auto& r : rollouts) {
        report.transitions += r.size();
        buffer.push_all(std::move(r));
    }
    return report;
}

EvalResult evaluate(const sac::ActorSnapshot& snapshot, const EnvSpec& spec, int episodes, std::uint64_t seed) {
    if (episodes < 1) throw ContractError("evaluation needs at least one episode");
    std::vector<Env> envs;
    std::vector<Rng> rngs;
    std::vector<Vector> obs;
    for (int k = 0; k < episodes; ++k) {
        envs.emplace_back(spec);
        rngs.push_back(make_rng(seed, static_cast<std::uint64_t>(k)));
        obs.push_back(envs.back().reset(rngs.back()));
    }
    EvalResult result;
    result.returns.assign(static_cast<std::size_t>(episodes), 0.0);
    std::vector<bool> active(static_cast<std::size_t>(episodes), true);
    Rng unused(0);
    while (std::any_of(active.begin(), active.end(), [](bool b) { return b; })) {
        std::vector<std::size_t> idx;
        for (std::size_t k = 0; k < active.size(); ++k) {
            if (active[k]) idx.push_back(k);
        }
        Matrix states(spec.obs_dim(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j) states.col(static_cast<Eigen::Index>(j)) = obs[idx[j]];
        const Matrix actions = snapshot.act_batch(states, sac::ActMode::deterministic, unused);
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const std::size_t k = idx[j];
            const StepResult step = envs[k].step(actions.col(static_cast<Eigen::Index>(j)), rngs[k]);
            result.returns[k] += step.reward;
            obs[k] = step.observation;
            if (step.done) active[k] = false;
        }
    }
    const double n = static_cast<double>(episodes);
    result.mean = std::accumulate(result.returns.begin(), result.returns.end(), 0.0) / n;
    double var = 0.0;
    for (double r : result.returns) var += (r - result.mean) * (r - result.mean);
    result.stddev = std::sqrt(var / n);
    return result;
}

namespace {

void check_provenance(const std::vector<Transition>& batch, Transition::Origin expected, const char* what) {
    for (const auto& t : batch) {
        if (t.origin != expected) throw UsageError(std::string("provenance violation in ") + what + " batch");
    }
}

Matrix concat_states(const std::vector<Transition>& a, const std::vector<Transition>& b) {
    std::vector<Transition> all;
    all.reserve(a.size() + b.size());
    all.insert(all.end(), a.begin(), a.end());
    all.insert(all.end(), b.begin(), b.end());
    return sac::stack_states(all);
}

}  // namespace

TrainResult train(const TrainInputs& in) {
    const OrisConfig& cfg = in.cfg;
    cfg.validate();
    in.real.validate();
    in.sim.validate();
    in.sac.validate();
    if (in.real.env_id != in.sim.env_id) throw ConfigError("real and simulator specs describe different environments");
    if (!in.real.perturbation.is_identity()) throw ConfigError("the real EnvSpec must carry the identity perturbation");
    const bool needs_offline = uses_offline_data(cfg.variant);
    if (needs_offline) {
        if (in.offline == nullptr || in.offline->empty()) throw ConfigError("variant requires a non-empty offline dataset");
        if (in.offline->meta.env_id != in.real.env_id) {
            throw ConfigError("offline dataset env_id does not match the environment specs");
        }
        for (const auto& t : in.offline->transitions) {
            if (t.origin != Transition::Origin::offline) throw ConfigError("offline dataset transitions must be tagged offline");
        }
    }

    TrainResult result;
    const gan::GanPair* gan = nullptr;
    if (uses_gan_restarts(cfg.variant) || uses_gan_weights(cfg.variant)) {
        if (in.pretrained_gan != nullptr) {
            gan = in.pretrained_gan;
        } else {
            gan::GanHyperParams hp = in.gan;
            hp.seed = derive_seed(in.seed, 21);
            result.gan = gan::pretrain(state_marginal(*in.offline), hp).gan;
            gan = &*result.gan;
        }
    }

    sac::SacAgent agent(in.real.obs_dim(), in.real.action_dim(), in.real.action_bound(), in.sac, derive_seed(in.seed, 11));
    ReplayBuffer buffer(cfg.buffer_capacity);
    Rng collect_rng = make_rng(in.seed, 31);
    Rng batch_rng = make_rng(in.seed, 32);
    Rng update_rng = make_rng(in.seed, 33);
    const std::uint64_t eval_seed = derive_seed(in.seed, 34);

    std::size_t env_steps = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochReport report;
        report.epoch = epoch;
        if (uses_simulator(cfg.variant)) {
            const auto snapshot = agent.snapshot();
            const auto collected = collect_epoch(in.sim, gan, snapshot, cfg, buffer, collect_rng);
            env_steps += collected.transitions;
            report.transitions_collected = collected.transitions;
            report.random_rollout_fraction = static_cast<double>(collected.random_rollouts) / collected.rollouts;
            report.invalid_restart_count = collected.invalid_restarts;
        }

        double critic_loss = 0.0;
        double actor_loss = 0.0;
        double weight_total = 0.0;
        for (int u = 0; u < cfg.updates_per_epoch; ++u) {
            if (cfg.variant == Variant::bc) {
                const auto batch = sample_minibatch(*in.offline,
                                                    static_cast<std::size_t>(cfg.off_batch_size + cfg.sim_batch_size),
                                                    batch_rng);
                actor_loss += sac::behavior_cloning_update(agent, batch);
                continue;
            }
            sac::WeightedBatch batch;
            if (cfg.variant == Variant::sim_only_sac) {
                batch.sim_batch = buffer.sample(static_cast<std::size_t>(cfg.off_batch_size + cfg.sim_batch_size), batch_rng);
                batch.sim_weights.assign(batch.sim_batch.size(), 1.0);
            } else {
                batch.off_batch = sample_minibatch(*in.offline, static_cast<std::size_t>(cfg.off_batch_size), batch_rng);
                batch.sim_batch = buffer.sample(static_cast<std::size_t>(cfg.sim_batch_size), batch_rng);
                check_provenance(batch.off_batch, Transition::Origin::offline, "offline");
                if (uses_gan_weights(cfg.variant)) {
                    std::vector<Vector> states;
                    states.reserve(batch.sim_batch.size());
                    for (const auto& t : batch.sim_batch) states.push_back(t.s);
                    batch.sim_weights = gan::weights_of(*gan, states);
                } else {
                    batch.sim_weights.assign(batch.sim_batch.size(), 1.0);
                }
            }
            check_provenance(batch.sim_batch, Transition::Origin::simulator, "simulator");
            for (double w : batch.sim_weights) weight_total += w / static_cast<double>(batch.sim_weights.size());

            Matrix actor_states = concat_states(batch.off_batch, batch.sim_batch);
            if (cfg.pooled_unweighted_path) {
                // Same transitions in the same order, as one unweighted critic batch.
                sac::WeightedBatch pooled;
                pooled.off_batch = std::move(batch.off_batch);
                pooled.off_batch.insert(pooled.off_batch.end(), batch.sim_batch.begin(), batch.sim_batch.end());
                batch = std::move(pooled);
            }
            const auto critic = sac::critic_update(agent, batch, update_rng);
            critic_loss += 0.5 * (critic.loss1 + critic.loss2);
            const auto actor = sac::actor_update(agent, actor_states, update_rng);
            actor_loss += actor.loss;
        }
        const double n_updates = static_cast<double>(cfg.updates_per_epoch);
        report.env_steps = env_steps;
        report.critic_loss = critic_loss / n_updates;
        report.actor_loss = actor_loss / n_updates;
        report.mean_sim_weight = weight_total / n_updates;
        report.temperature = agent.temperature();
        if (!std::isfinite(report.critic_loss) || !std::isfinite(report.actor_loss)) {
            throw NumericError("non-finite loss in epoch " + std::to_string(epoch));
        }
        if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs) {
            const auto eval = evaluate(agent.snapshot(), in.real, cfg.eval_episodes, eval_seed);
            report.evaluated = true;
            report.eval_return_mean = eval.mean;
            report.eval_return_std = eval.stddev;
        }
        result.reports.push_back(report);
    }
    result.agent = std::move(agent);
    return result;
}

}  // namespace oris
