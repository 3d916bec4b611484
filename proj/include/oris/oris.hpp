#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oris/data.hpp"
#include "oris/gan.hpp"
#include "oris/sac.hpp"

namespace oris {

enum class Variant { oris, no_restart, uniform_weight, sim_only_sac, bc, naive_mix };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

bool uses_gan_restarts(Variant v);
bool uses_gan_weights(Variant v);
bool uses_offline_data(Variant v);
bool uses_simulator(Variant v);

struct OrisConfig {
    int rollout_horizon = 100;
    int rollout_count = 10;
    double random_policy_prob = 0.2;
    int epochs = 500;
    int updates_per_epoch = 250;
    Variant variant = Variant::oris;
    int off_batch_size = 128;
    int sim_batch_size = 128;
    int max_restart_attempts = 20;
    bool restart_fallback = true;
    std::size_t buffer_capacity = 200000;
    int eval_every = 1;
    int eval_episodes = 10;
    // Feed uniform_weight / naive_mix updates through one plain pooled critic
    // batch instead of the two-part weighted batch. Test hook.
    bool pooled_unweighted_path = false;

    void validate() const;
};

/// One rollout's action source, fixed before the rollout starts.
struct HybridChoice {
    bool random = false;
    Policy policy;
};

HybridChoice hybrid_policy(const sac::ActorSnapshot& snapshot, const EnvSpec& spec, double p, Rng& rng);

struct CollectReport {
    std::size_t transitions = 0;
    int rollouts = 0;
    int random_rollouts = 0;
    int invalid_restarts = 0;
    int fallback_restarts = 0;
    std::vector<Vector> start_states;
};

/// C rollouts of horizon H in the simulator, appended to `buffer`. Restarts
/// come from the generator for GAN-restart variants, from the env's initial
/// distribution otherwise.
CollectReport collect_epoch(const EnvSpec& sim, const gan::GanPair* gan, const sac::ActorSnapshot& snapshot,
                            const OrisConfig& cfg, ReplayBuffer& buffer, Rng& rng);

/// Draws a validated restart state, counting rejections. Returns nullopt when
/// all attempts were invalid.
std::optional<Vector> draw_restart(const EnvSpec& sim, const gan::GanPair& gan, int max_attempts, Rng& rng,
                                   int& rejections);

struct EvalResult {
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> returns;
};

/// Deterministic-policy episodes on `spec`, run in lockstep.
EvalResult evaluate(const sac::ActorSnapshot& snapshot, const EnvSpec& spec, int episodes, std::uint64_t seed);

struct EpochReport {
    int epoch = 0;
    std::size_t env_steps = 0;
    std::size_t transitions_collected = 0;
    double random_rollout_fraction = 0.0;
    double mean_sim_weight = 0.0;
    int invalid_restart_count = 0;
    bool evaluated = false;
    double eval_return_mean = 0.0;
    double eval_return_std = 0.0;
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double temperature = 0.0;
};

struct TrainInputs {
    EnvSpec real;
    EnvSpec sim;
    const Dataset* offline = nullptr;
    OrisConfig cfg;
    sac::SacHyperParams sac;
    gan::GanHyperParams gan;
    // Used instead of pretraining when set.
    const gan::GanPair* pretrained_gan = nullptr;
    std::uint64_t seed = 0;
};

struct TrainResult {
    sac::SacAgent agent;
    std::vector<EpochReport> reports;
    std::optional<gan::GanPair> gan;
};

TrainResult train(const TrainInputs& in);

}  // namespace oris
