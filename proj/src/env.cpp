#include "oris/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace oris {

std::string to_string(EnvId id) { return id == EnvId::pendulum ? "pendulum" : "pointgoal"; }

EnvId env_id_from_string(const std::string& name) {
    if (name == "pendulum") return EnvId::pendulum;
    if (name == "pointgoal") return EnvId::pointgoal;
    throw ConfigError("unknown env_id '" + name + "'");
}

void DynamicsPerturbation::validate() const {
    if (!(std::isfinite(gravity_scale) && gravity_scale > 0.0)) {
        throw ConfigError("perturbation.gravity_scale must be a positive number");
    }
    if (!(std::isfinite(friction_scale) && friction_scale >= 0.0)) {
        throw ConfigError("perturbation.friction_scale must be non-negative");
    }
    if (!(std::isfinite(action_noise_std) && action_noise_std >= 0.0)) {
        throw ConfigError("perturbation.action_noise_std must be non-negative");
    }
}

EnvSpec EnvSpec::real(EnvId id) {
    EnvSpec spec;
    spec.env_id = id;
    spec.max_episode_steps = id == EnvId::pendulum ? pendulum::kEpisodeSteps : pointgoal::kEpisodeSteps;
    return spec;
}

EnvSpec EnvSpec::simulator(EnvId id, DynamicsPerturbation perturbation) {
    EnvSpec spec = real(id);
    spec.perturbation = perturbation;
    return spec;
}

int EnvSpec::obs_dim() const { return env_id == EnvId::pendulum ? 3 : 4; }
int EnvSpec::action_dim() const { return env_id == EnvId::pendulum ? 1 : 2; }
double EnvSpec::action_bound() const { return env_id == EnvId::pendulum ? pendulum::kMaxTorque : 1.0; }

void EnvSpec::validate() const {
    perturbation.validate();
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0,1]");
    if (max_episode_steps <= 0) throw ConfigError("max_episode_steps must be positive");
}

double pendulum::wrap_angle(double theta) {
    constexpr double pi = std::numbers::pi;
    double wrapped = std::fmod(theta + pi, 2.0 * pi);
    if (wrapped < 0.0) wrapped += 2.0 * pi;
    wrapped -= pi;
    // fmod maps odd multiples of pi to -pi; the convention here is (-pi, pi].
    return wrapped <= -pi ? pi : wrapped;
}

double pointgoal::distance_to_goal(const Vector& obs) {
    return std::hypot(obs(0) - kGoalX, obs(1) - kGoalY);
}

Env::Env(EnvSpec spec) : spec_(spec) { spec_.validate(); }

Vector Env::reset(Rng& rng) {
    if (spec_.env_id == EnvId::pendulum) {
        const double theta = pendulum::wrap_angle(uniform(rng, -std::numbers::pi, std::numbers::pi));
        const double theta_dot = uniform(rng, -1.0, 1.0);
        state_ << theta, theta_dot, 0.0, 0.0;
    } else {
        const double px = uniform(rng, -1.0, -0.6);
        const double py = uniform(rng, -1.0, -0.6);
        state_ << px, py, 0.0, 0.0;
    }
    steps_ = 0;
    loaded_ = true;
    return observe();
}

void Env::set_state(const Vector& obs) {
    if (obs.size() != obs_dim()) {
        throw ContractError("observation has dimension " + std::to_string(obs.size()) + ", expected " +
                            std::to_string(obs_dim()));
    }
    if (!obs.allFinite()) throw InvalidStateError("observation contains non-finite values");
    if (spec_.env_id == EnvId::pendulum) {
        const double norm = std::hypot(obs(0), obs(1));
        if (norm < pendulum::kMinNorm) {
            throw InvalidStateError("pendulum observation is too close to the origin (norm " +
                                    std::to_string(norm) + ")");
        }
        const double theta = pendulum::wrap_angle(std::atan2(obs(1) / norm, obs(0) / norm));
        state_ << theta, std::clamp(obs(2), -pendulum::kMaxSpeed, pendulum::kMaxSpeed), 0.0, 0.0;
    } else {
        state_ << std::clamp(obs(0), -1.0, 1.0), std::clamp(obs(1), -1.0, 1.0), std::clamp(obs(2), -1.0, 1.0),
            std::clamp(obs(3), -1.0, 1.0);
    }
    steps_ = 0;
    loaded_ = true;
}

Vector Env::observe() const {
    if (spec_.env_id == EnvId::pendulum) {
        Vector obs(3);
        obs << std::cos(state_(0)), std::sin(state_(0)), state_(1);
        return obs;
    }
    return state_;
}

StepResult Env::step(const Vector& action, Rng& rng) {
    if (!loaded_) throw UsageError("step called before reset or set_state");
    if (action.size() != action_dim()) throw ContractError("action has the wrong dimension");
    const double bound = action_bound();
    constexpr double slack = 1e-6;
    Vector u(action.size());
    for (Eigen::Index i = 0; i < action.size(); ++i) {
        if (!std::isfinite(action(i)) || std::abs(action(i)) > bound + slack) {
            throw ContractError("action component " + std::to_string(action(i)) + " is outside [-" +
                                std::to_string(bound) + ", " + std::to_string(bound) + "]");
        }
        double noisy = std::clamp(action(i), -bound, bound);
        if (spec_.perturbation.action_noise_std > 0.0) noisy += spec_.perturbation.action_noise_std * standard_normal(rng);
        u(i) = std::clamp(noisy, -bound, bound);
    }

    StepResult result;
    steps_ += 1;
    if (spec_.env_id == EnvId::pendulum) {
        const double g = pendulum::kGravity * spec_.perturbation.gravity_scale;
        const double c = pendulum::kDamping * spec_.perturbation.friction_scale;
        const double theta = state_(0);
        const double theta_dot = state_(1);
        const double accel = 1.5 * g * std::sin(theta) + 3.0 * u(0) - c * theta_dot;
        const double next_dot = std::clamp(theta_dot + accel * pendulum::kDt, -pendulum::kMaxSpeed, pendulum::kMaxSpeed);
        const double next_theta = pendulum::wrap_angle(theta + next_dot * pendulum::kDt);
        result.reward = -(theta * theta + 0.1 * next_dot * next_dot + 0.001 * u(0) * u(0));
        state_(0) = next_theta;
        state_(1) = next_dot;
        result.terminal = false;
    } else {
        const double f = pointgoal::kForce * spec_.perturbation.gravity_scale;
        const double d = pointgoal::kDrag * spec_.perturbation.friction_scale;
        for (int i = 0; i < 2; ++i) {
            const double v = std::clamp(state_(2 + i) + (f * u(i) - d * state_(2 + i)) * pointgoal::kDt, -1.0, 1.0);
            state_(2 + i) = v;
            state_(i) = std::clamp(state_(i) + v * pointgoal::kDt, -1.0, 1.0);
        }
        const double dist = std::hypot(state_(0) - pointgoal::kGoalX, state_(1) - pointgoal::kGoalY);
        result.reward = -0.1;
        if (dist < pointgoal::kNearRadius) result.reward += 0.1;
        if (dist < pointgoal::kGoalRadius) result.reward += 20.0;
        result.terminal = dist < pointgoal::kGoalRadius;
    }
    result.done = result.terminal || steps_ >= spec_.max_episode_steps;
    result.observation = observe();
    return result;
}

Vector random_action(const EnvSpec& spec, Rng& rng) {
    const double bound = spec.action_bound();
    Vector a(spec.action_dim());
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = uniform(rng, -bound, bound);
    return a;
}

std::vector<Transition> rollout(const EnvSpec& spec, const Policy& policy, const std::optional<Vector>& start,
                                int horizon, Rng& rng) {
    if (horizon < 1) throw ContractError("rollout horizon must be at least 1");
    Env env(spec);
    Vector obs;
    if (start) {
        env.set_state(*start);
        obs = env.observe();
    } else {
        obs = env.reset(rng);
    }
    std::vector<Transition> out;
    out.reserve(static_cast<std::size_t>(horizon));
    for (int t = 0; t < horizon; ++t) {
        Vector action = policy(obs, rng);
        StepResult step = env.step(action, rng);
        Transition tr;
        tr.s = obs;
        tr.a = std::move(action);
        tr.r = step.reward;
        tr.s_next = step.observation;
        tr.done = step.terminal;
        tr.origin = Transition::Origin::simulator;
        out.push_back(std::move(tr));
        obs = std::move(step.observation);
        if (step.done) break;
    }
    return out;
}

}  // namespace oris
