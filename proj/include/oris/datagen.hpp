#pragma once

#include <cstdint>
#include <vector>

#include "oris/data.hpp"
#include "oris/sac.hpp"

namespace oris {

struct ReferenceRunConfig {
    int total_steps = 30000;
    int warmup_steps = 1000;
    int batch_size = 256;
    int eval_every = 1000;
    int eval_episodes = 10;
    int reference_episodes = 50;
    std::size_t buffer_capacity = 200000;
    sac::SacHyperParams sac;

    void validate() const;
};

struct PolicyCheckpoint {
    std::size_t step = 0;
    double eval_return = 0.0;
    sac::ActorSnapshot actor;
};

/// Plain SAC trained online on the real environment, kept around to derive
/// the medium, medium-replay and expert behavior policies plus the random and
/// expert reference returns used for score normalization.
struct ReferenceRun {
    EnvSpec spec;
    std::uint64_t seed = 0;
    std::vector<PolicyCheckpoint> checkpoints;
    std::size_t expert_index = 0;
    std::size_t medium_index = 0;
    double random_return = 0.0;
    double expert_return = 0.0;
    // Replay contents up to the medium checkpoint, whole episodes only.
    Dataset medium_replay;

    const PolicyCheckpoint& expert() const { return checkpoints.at(expert_index); }
    const PolicyCheckpoint& medium() const { return checkpoints.at(medium_index); }
};

/// Mean undiscounted return of the uniform-random policy.
double random_policy_return(const EnvSpec& spec, int episodes, std::uint64_t seed);

ReferenceRun train_reference(const EnvSpec& real, const ReferenceRunConfig& cfg, std::uint64_t seed);

/// `reference` may be null for the random tier only.
Dataset generate_dataset(const EnvSpec& real, Tier tier, int episodes, std::uint64_t seed,
                         const ReferenceRun* reference);

}  // namespace oris
