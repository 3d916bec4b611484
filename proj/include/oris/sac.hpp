#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "oris/env.hpp"
#include "oris/nn.hpp"

namespace oris::sac {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

struct SacHyperParams {
    int hidden_width = 256;
    int hidden_layers = 2;
    double gamma = 0.99;
    double tau = 0.005;
    double actor_lr = 3e-4;
    double critic_lr = 3e-4;
    double temperature_lr = 3e-4;
    double initial_temperature = 1.0;
    // Defaults to -dim(A) when left NaN.
    double target_entropy = std::numeric_limits<double>::quiet_NaN();

    void validate() const;
};

enum class ActMode { stochastic, deterministic };

/// Actor parameters only: what rollout workers and evaluators need.
/// Immutable once exported.
struct ActorSnapshot {
    nn::MlpNet actor;
    int action_dim = 1;
    double action_bound = 1.0;

    Vector act(const Vector& state, ActMode mode, Rng& rng) const;
    Matrix act_batch(const Matrix& states, ActMode mode, Rng& rng) const;
};

/// Squashed-Gaussian policy with twin critics, their targets, and an
/// automatically tuned temperature.
class SacAgent {
public:
    SacAgent() = default;
    SacAgent(int obs_dim, int action_dim, double action_bound, const SacHyperParams& hp, std::uint64_t seed);

    int obs_dim() const { return obs_dim_; }
    int action_dim() const { return action_dim_; }
    double action_bound() const { return action_bound_; }
    double temperature() const;

    ActorSnapshot snapshot() const { return {actor, action_dim_, action_bound_}; }

    void save(const std::filesystem::path& directory) const;
    static SacAgent load(const std::filesystem::path& directory, const SacHyperParams& hp);

    nn::MlpNet actor;
    nn::MlpNet critic1;
    nn::MlpNet critic2;
    nn::MlpNet target1;
    nn::MlpNet target2;
    nn::AdamState actor_opt;
    nn::AdamState critic1_opt;
    nn::AdamState critic2_opt;
    nn::ScalarAdam temperature_opt;
    double log_temperature = 0.0;
    double target_entropy = -1.0;
    double gamma = 0.99;
    double tau = 0.005;
    std::uint64_t update_steps = 0;

private:
    int obs_dim_ = 0;
    int action_dim_ = 0;
    double action_bound_ = 1.0;
};

/// A reparameterized draw from the squashed Gaussian, one sample per column.
struct PolicySample {
    Matrix mean;
    Matrix log_std;      // clamped
    Matrix log_std_raw;  // before clamping
    Matrix noise;        // standard normal draws (zero in deterministic mode)
    Matrix pre_tanh;     // mean + exp(log_std) * noise
    Matrix actions;      // bound * tanh(pre_tanh)
    Vector log_prob;     // log density of tanh(pre_tanh)
};

PolicySample evaluate_policy(const Matrix& actor_output, int action_dim, double action_bound, const Matrix& noise);
PolicySample sample_policy(const nn::MlpNet& actor, const Matrix& states, int action_dim, double action_bound,
                           ActMode mode, Rng& rng);

/// Gaussian log-density of `pre_tanh` minus the tanh change-of-variables term.
double squashed_log_prob(const Vector& mean, const Vector& log_std, const Vector& pre_tanh);

Vector act(const SacAgent& agent, const Vector& state, ActMode mode, Rng& rng);

Matrix stack_states(const std::vector<Transition>& batch, bool next = false);
Matrix stack_actions(const std::vector<Transition>& batch);
Matrix state_action(const Matrix& states, const Matrix& actions);

double bellman_target(const SacAgent& agent, const Transition& t, Rng& rng);
Vector bellman_targets(const SacAgent& agent, const std::vector<Transition>& batch, Rng& rng);

/// Off-policy data in two parts: offline transitions (weight 1) and simulated
/// transitions with attached weights. Each part enters the loss as a weighted
/// mean over its own nominal size; zero denominators mean "use the count".
struct WeightedBatch {
    std::vector<Transition> off_batch;
    std::vector<Transition> sim_batch;
    std::vector<double> sim_weights;
    double off_denominator = 0.0;
    double sim_denominator = 0.0;
};

struct CriticReport {
    double loss1 = 0.0;
    double loss2 = 0.0;
    double mean_sim_weight = 0.0;
};

/// Per-sample loss coefficients for the combined critic loss, off part first.
Vector critic_coefficients(const WeightedBatch& batch);

CriticReport critic_update(SacAgent& agent, const WeightedBatch& batch, Rng& rng);

/// Evaluates Q(s, a) and dQ/da for a batch (Q is 1 x n, the gradient is dim(A) x n).
using CriticFn = std::function<std::pair<Matrix, Matrix>(const Matrix& states, const Matrix& actions)>;

/// min(Q1, Q2) with its action gradient, taken through the live critics.
CriticFn min_critic(SacAgent& agent);

struct ActorGradient {
    double loss = 0.0;
    double mean_log_prob = 0.0;
    nn::Gradients grads;
};

/// Loss E[-Q(s,a) + temperature * log pi(a|s)] and its actor gradient.
ActorGradient actor_gradient(nn::MlpNet& actor, const Matrix& states, int action_dim, double action_bound,
                             double temperature, const CriticFn& critic, Rng& rng);

struct ActorReport {
    double loss = 0.0;
    double entropy = 0.0;
    double temperature = 0.0;
};

ActorReport actor_update(SacAgent& agent, const Matrix& states, Rng& rng);

/// Gradient of the standard temperature loss with respect to log temperature.
double temperature_gradient(double mean_log_prob, double target_entropy);

/// One supervised step regressing the deterministic action onto dataset actions.
double behavior_cloning_update(SacAgent& agent, const std::vector<Transition>& batch);

}  // namespace oris::sac
