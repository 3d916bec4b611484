#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "oris/common.hpp"

namespace oris {

enum class EnvId { pendulum, pointgoal };

std::string to_string(EnvId id);
EnvId env_id_from_string(const std::string& name);

/// Knobs separating the simulator dynamics from the real dynamics.
/// (1, 1, 0) is the unperturbed environment.
struct DynamicsPerturbation {
    double gravity_scale = 1.0;
    double friction_scale = 1.0;
    double action_noise_std = 0.0;

    bool is_identity() const { return gravity_scale == 1.0 && friction_scale == 1.0 && action_noise_std == 0.0; }
    void validate() const;
    bool operator==(const DynamicsPerturbation&) const = default;
};

struct EnvSpec {
    EnvId env_id = EnvId::pendulum;
    DynamicsPerturbation perturbation;
    double gamma = 0.99;
    int max_episode_steps = 200;

    // Real environment: default episode length, no perturbation.
    static EnvSpec real(EnvId id);
    static EnvSpec simulator(EnvId id, DynamicsPerturbation perturbation);

    int obs_dim() const;
    int action_dim() const;
    double action_bound() const;
    void validate() const;
    bool operator==(const EnvSpec&) const = default;
};

/// One (s, a, r, s', done) sample. `done` marks true termination only (goal
/// reached); time-limit truncation is carried by trajectory boundaries.
struct Transition {
    enum class Origin : std::uint8_t { unknown, offline, simulator };

    Vector s;
    Vector a;
    double r = 0.0;
    Vector s_next;
    bool done = false;
    Origin origin = Origin::unknown;
};

struct StepResult {
    Vector observation;
    double reward = 0.0;
    bool done = false;      // episode over (termination or time limit)
    bool terminal = false;  // termination that cuts the Bellman bootstrap
};

namespace pendulum {
inline constexpr double kDt = 0.05;
inline constexpr double kGravity = 10.0;
inline constexpr double kDamping = 0.1;
inline constexpr double kMaxSpeed = 8.0;
inline constexpr double kMaxTorque = 2.0;
inline constexpr int kEpisodeSteps = 200;
inline constexpr double kMinNorm = 0.1;
double wrap_angle(double theta);
}  // namespace pendulum

namespace pointgoal {
inline constexpr double kDt = 0.1;
inline constexpr double kForce = 1.0;
inline constexpr double kDrag = 0.5;
inline constexpr double kGoalX = 0.7;
inline constexpr double kGoalY = 0.7;
inline constexpr double kGoalRadius = 0.05;
inline constexpr double kNearRadius = 0.25;
inline constexpr int kEpisodeSteps = 100;
double distance_to_goal(const Vector& obs);
}  // namespace pointgoal

/// A single environment instance: the real MDP when its spec carries the
/// identity perturbation, the inaccurate simulator otherwise.
class Env {
public:
    explicit Env(EnvSpec spec);

    const EnvSpec& spec() const { return spec_; }
    int obs_dim() const { return spec_.obs_dim(); }
    int action_dim() const { return spec_.action_dim(); }
    double action_bound() const { return spec_.action_bound(); }

    Vector reset(Rng& rng);
    void set_state(const Vector& obs);
    StepResult step(const Vector& action, Rng& rng);
    Vector observe() const;
    bool loaded() const { return loaded_; }
    int elapsed_steps() const { return steps_; }

private:
    EnvSpec spec_;
    bool loaded_ = false;
    int steps_ = 0;
    // pendulum: (theta, theta_dot); pointgoal: (px, py, vx, vy)
    Eigen::Vector4d state_ = Eigen::Vector4d::Zero();
};

using Policy = std::function<Vector(const Vector& obs, Rng& rng)>;

/// Runs up to `horizon` steps from `start` (or a fresh reset when empty),
/// stopping early when the episode ends. Transitions are tagged as simulator data.
std::vector<Transition> rollout(const EnvSpec& spec, const Policy& policy, const std::optional<Vector>& start,
                                int horizon, Rng& rng);

Vector random_action(const EnvSpec& spec, Rng& rng);

}  // namespace oris
