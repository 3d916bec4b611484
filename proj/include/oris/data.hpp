#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include "oris/env.hpp"

namespace oris {

enum class Tier { random, medium, medium_replay, expert };

std::string to_string(Tier tier);
Tier tier_from_string(const std::string& name);

struct DatasetMeta {
    EnvId env_id = EnvId::pendulum;
    DynamicsPerturbation perturbation;
    Tier tier = Tier::random;
    std::uint64_t behavior_policy_seed = 0;
    int created_with_version = 1;
};

/// Offline dataset: transitions in trajectory order. `trajectory_ends` holds
/// the exclusive end index of every trajectory and finishes at transitions.size().
struct Dataset {
    DatasetMeta meta;
    std::vector<Transition> transitions;
    std::vector<std::size_t> trajectory_ends;

    std::size_t size() const { return transitions.size(); }
    bool empty() const { return transitions.empty(); }
    std::size_t num_trajectories() const { return trajectory_ends.size(); }

    // Appends one whole trajectory and records its boundary.
    void append_trajectory(std::vector<Transition> trajectory);
    std::vector<double> trajectory_returns() const;
    void validate() const;
};

inline constexpr int kDatasetFormatVersion = 1;

void write_dataset(const Dataset& d, const std::filesystem::path& path);
std::string dataset_to_jsonl(const Dataset& d);
/// Loads a dataset and tags every transition as offline data.
Dataset read_dataset(const std::filesystem::path& path);
Dataset dataset_from_jsonl(const std::string& text);

/// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);
    ReplayBuffer(const ReplayBuffer& other);
    ReplayBuffer& operator=(const ReplayBuffer&) = delete;

    void push(Transition t);
    void push_all(std::vector<Transition> ts);
    std::size_t size() const;
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return size() == 0; }
    // i-th item counting from the oldest.
    Transition at(std::size_t i) const;
    std::vector<Transition> sample(std::size_t n, Rng& rng) const;
    std::vector<Transition> contents() const;

private:
    std::size_t capacity_;
    std::vector<Transition> storage_;
    std::size_t head_ = 0;  // next write slot once full
    mutable std::shared_mutex mutex_;
};

std::vector<Transition> sample_minibatch(const Dataset& d, std::size_t n, Rng& rng);
std::vector<Transition> sample_minibatch(const ReplayBuffer& buffer, std::size_t n, Rng& rng);

/// ceil(fraction * trajectories) whole trajectories, uniformly without
/// replacement, kept in their original relative order.
Dataset subsample_trajectories(const Dataset& d, double fraction, std::uint64_t seed);

/// The `s` field of every transition.
std::vector<Vector> state_marginal(const Dataset& d);

}  // namespace oris
