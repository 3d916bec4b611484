#include "oris/sac.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

namespace oris::sac {

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// log(1 - tanh(x)^2), stable for large |x|.
double log_one_minus_tanh_sq(double x) { return 2.0 * (std::numbers::ln2 - x - softplus(-2.0 * x)); }

std::vector<int> sizes(int in, const SacHyperParams& hp, int out) {
    std::vector<int> s{in};
    for (int i = 0; i < hp.hidden_layers; ++i) s.push_back(hp.hidden_width);
    s.push_back(out);
    return s;
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix m(rows, cols);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
    }
    return m;
}

}  // namespace

void SacHyperParams::validate() const {
    if (hidden_width <= 0 || hidden_layers <= 0) throw ConfigError("sac: network sizes must be positive");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("sac: gamma must lie in (0,1]");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("sac: tau must lie in (0,1]");
    if (!(actor_lr > 0.0 && critic_lr > 0.0 && temperature_lr > 0.0)) {
        throw ConfigError("sac: learning rates must be positive");
    }
    if (!(initial_temperature > 0.0)) throw ConfigError("sac: initial_temperature must be positive");
}

SacAgent::SacAgent(int obs_dim, int action_dim, double action_bound, const SacHyperParams& hp, std::uint64_t seed)
    : obs_dim_(obs_dim), action_dim_(action_dim), action_bound_(action_bound) {
    hp.validate();
    actor = nn::MlpNet(sizes(obs_dim, hp, 2 * action_dim), nn::Activation::relu, nn::Activation::identity,
                       derive_seed(seed, 1));
    critic1 = nn::MlpNet(sizes(obs_dim + action_dim, hp, 1), nn::Activation::relu, nn::Activation::identity,
                         derive_seed(seed, 2));
    critic2 = nn::MlpNet(sizes(obs_dim + action_dim, hp, 1), nn::Activation::relu, nn::Activation::identity,
                         derive_seed(seed, 3));
    target1 = critic1;
    target2 = critic2;
    actor_opt = nn::AdamState::for_net(actor, hp.actor_lr);
    critic1_opt = nn::AdamState::for_net(critic1, hp.critic_lr);
    critic2_opt = nn::AdamState::for_net(critic2, hp.critic_lr);
    temperature_opt.learning_rate = hp.temperature_lr;
    log_temperature = std::log(hp.initial_temperature);
    target_entropy = std::isnan(hp.target_entropy) ? -static_cast<double>(action_dim) : hp.target_entropy;
    gamma = hp.gamma;
    tau = hp.tau;
}

double SacAgent::temperature() const { return std::exp(log_temperature); }

void SacAgent::save(const std::filesystem::path& directory) const {
    std::filesystem::create_directories(directory);
    actor.save(directory / "actor.bin");
    critic1.save(directory / "critic1.bin");
    critic2.save(directory / "critic2.bin");
    target1.save(directory / "target1.bin");
    target2.save(directory / "target2.bin");
    nlohmann::json meta = {{"format", "oris-agent"},
                           {"version", 1},
                           {"obs_dim", obs_dim_},
                           {"action_dim", action_dim_},
                           {"action_bound", action_bound_},
                           {"gamma", gamma},
                           {"tau", tau},
                           {"log_temperature", log_temperature},
                           {"target_entropy", target_entropy},
                           {"step_count", update_steps}};
    std::ofstream out(directory / "agent.json");
    out << meta.dump(2) << '\n';
    if (!out) throw ConfigError("failed to write agent sidecar");
}

SacAgent SacAgent::load(const std::filesystem::path& directory, const SacHyperParams& hp) {
    std::ifstream in(directory / "agent.json");
    if (!in) throw ConfigError("missing agent.json in " + directory.string());
    SacAgent agent;
    try {
        const auto meta = nlohmann::json::parse(in);
        if (meta.at("format") != "oris-agent" || meta.at("version") != 1) throw ConfigError("unsupported agent sidecar");
        agent.obs_dim_ = meta.at("obs_dim").get<int>();
        agent.action_dim_ = meta.at("action_dim").get<int>();
        agent.action_bound_ = meta.at("action_bound").get<double>();
        agent.gamma = meta.at("gamma").get<double>();
        agent.tau = meta.at("tau").get<double>();
        agent.log_temperature = meta.at("log_temperature").get<double>();
        agent.target_entropy = meta.at("target_entropy").get<double>();
        agent.update_steps = meta.at("step_count").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed agent sidecar: ") + e.what());
    }
    agent.actor = nn::MlpNet::load(directory / "actor.bin");
    agent.critic1 = nn::MlpNet::load(directory / "critic1.bin");
    agent.critic2 = nn::MlpNet::load(directory / "critic2.bin");
    agent.target1 = nn::MlpNet::load(directory / "target1.bin");
    agent.target2 = nn::MlpNet::load(directory / "target2.bin");
    if (agent.actor.input_dim() != agent.obs_dim_ || agent.actor.output_dim() != 2 * agent.action_dim_ ||
        !agent.critic1.same_architecture(agent.target1) || !agent.critic2.same_architecture(agent.target2)) {
        throw ConfigError("agent checkpoint networks are inconsistent");
    }
    agent.actor_opt = nn::AdamState::for_net(agent.actor, hp.actor_lr);
    agent.critic1_opt = nn::AdamState::for_net(agent.critic1, hp.critic_lr);
    agent.critic2_opt = nn::AdamState::for_net(agent.critic2, hp.critic_lr);
    agent.temperature_opt.learning_rate = hp.temperature_lr;
    return agent;
}

PolicySample evaluate_policy(const Matrix& actor_output, int action_dim, double action_bound, const Matrix& noise) {
    const Eigen::Index n = actor_output.cols();
    PolicySample p;
    p.mean = actor_output.topRows(action_dim);
    p.log_std_raw = actor_output.bottomRows(action_dim);
    p.log_std = p.log_std_raw.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
    p.noise = noise;
    p.pre_tanh = p.mean + (p.log_std.array().exp() * noise.array()).matrix();
    p.actions = action_bound * p.pre_tanh.array().tanh().matrix();
    p.log_prob.resize(n);
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    for (Eigen::Index c = 0; c < n; ++c) {
        double lp = 0.0;
        for (Eigen::Index i = 0; i < action_dim; ++i) {
            const double xi = noise(i, c);
            lp += -0.5 * xi * xi - p.log_std(i, c) - half_log_2pi;
            lp -= log_one_minus_tanh_sq(p.pre_tanh(i, c));
        }
        p.log_prob(c) = lp;
    }
    return p;
}

PolicySample sample_policy(const nn::MlpNet& actor, const Matrix& states, int action_dim, double action_bound,
                           ActMode mode, Rng& rng) {
    const Matrix out = actor.predict_batch(states);
    const Matrix noise = mode == ActMode::stochastic ? gaussian_matrix(action_dim, states.cols(), rng)
                                                     : Matrix::Zero(action_dim, states.cols());
    return evaluate_policy(out, action_dim, action_bound, noise);
}

double squashed_log_prob(const Vector& mean, const Vector& log_std, const Vector& pre_tanh) {
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    double lp = 0.0;
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
        const double z = (pre_tanh(i) - mean(i)) / std::exp(log_std(i));
        lp += -0.5 * z * z - log_std(i) - half_log_2pi - log_one_minus_tanh_sq(pre_tanh(i));
    }
    return lp;
}

Vector ActorSnapshot::act(const Vector& state, ActMode mode, Rng& rng) const {
    return act_batch(state, mode, rng).col(0);
}

Matrix ActorSnapshot::act_batch(const Matrix& states, ActMode mode, Rng& rng) const {
    return sample_policy(actor, states, action_dim, action_bound, mode, rng).actions;
}

Vector act(const SacAgent& agent, const Vector& state, ActMode mode, Rng& rng) {
    if (state.size() != agent.obs_dim()) throw ContractError("state has the wrong dimension for this agent");
    return sample_policy(agent.actor, state, agent.action_dim(), agent.action_bound(), mode, rng).actions.col(0);
}

Matrix stack_states(const std::vector<Transition>& batch, bool next) {
    if (batch.empty()) return {};
    const auto dim = (next ? batch.front().s_next : batch.front().s).size();
    Matrix m(dim, static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = next ? batch[i].s_next : batch[i].s;
    return m;
}

Matrix stack_actions(const std::vector<Transition>& batch) {
    if (batch.empty()) return {};
    Matrix m(batch.front().a.size(), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = batch[i].a;
    return m;
}

Matrix state_action(const Matrix& states, const Matrix& actions) {
    Matrix joint(states.rows() + actions.rows(), states.cols());
    joint.topRows(states.rows()) = states;
    joint.bottomRows(actions.rows()) = actions;
    return joint;
}

Vector bellman_targets(const SacAgent& agent, const std::vector<Transition>& batch, Rng& rng) {
    const Matrix next = stack_states(batch, true);
    const auto pi = sample_policy(agent.actor, next, agent.action_dim(), agent.action_bound(), ActMode::stochastic, rng);
    const Matrix joint = state_action(next, pi.actions);
    const Matrix q1 = agent.target1.predict_batch(joint);
    const Matrix q2 = agent.target2.predict_batch(joint);
    const double lambda = agent.temperature();
    Vector y(static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        const auto& t = batch[i];
        y(c) = t.done ? t.r : t.r + agent.gamma * (std::min(q1(0, c), q2(0, c)) - lambda * pi.log_prob(c));
    }
    return y;
}

double bellman_target(const SacAgent& agent, const Transition& t, Rng& rng) {
    return bellman_targets(agent, {t}, rng)(0);
}

Vector critic_coefficients(const WeightedBatch& batch) {
    if (batch.sim_weights.size() != batch.sim_batch.size()) throw ContractError("one weight per sim transition required");
    const auto n_off = static_cast<double>(batch.off_batch.size());
    const auto n_sim = static_cast<double>(batch.sim_batch.size());
    const int parts = (n_off > 0 ? 1 : 0) + (n_sim > 0 ? 1 : 0);
    if (parts == 0) throw ContractError("critic batch is empty");
    const double off_den = (batch.off_denominator > 0.0 ? batch.off_denominator : n_off) * parts;
    const double sim_den = (batch.sim_denominator > 0.0 ? batch.sim_denominator : n_sim) * parts;
    Vector coef(batch.off_batch.size() + batch.sim_batch.size());
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < batch.off_batch.size(); ++i) coef(k++) = 1.0 / off_den;
    for (double w : batch.sim_weights) {
        if (!std::isfinite(w) || w < 0.0) throw ContractError("sim weights must be finite and non-negative");
        coef(k++) = w / sim_den;
    }
    return coef;
}

CriticReport critic_update(SacAgent& agent, const WeightedBatch& batch, Rng& rng) {
    const Vector coef = critic_coefficients(batch);
    std::vector<Transition> all;
    all.reserve(batch.off_batch.size() + batch.sim_batch.size());
    all.insert(all.end(), batch.off_batch.begin(), batch.off_batch.end());
    all.insert(all.end(), batch.sim_batch.begin(), batch.sim_batch.end());

    const Vector y = bellman_targets(agent, all, rng);
    const Matrix joint = state_action(stack_states(all), stack_actions(all));

    CriticReport report;
    auto fit = [&](nn::MlpNet& critic, nn::AdamState& opt) {
        const Matrix q = critic.forward_batch(joint);
        Matrix upstream(1, q.cols());
        double loss = 0.0;
        for (Eigen::Index i = 0; i < q.cols(); ++i) {
            const double diff = q(0, i) - y(i);
            if (!std::isfinite(diff)) {
                throw NumericError("non-finite critic error at batch transition " + std::to_string(i));
            }
            loss += coef(i) * diff * diff;
            upstream(0, i) = 2.0 * coef(i) * diff;
        }
        nn::adam_step(critic, critic.backward(upstream), opt);
        return loss;
    };
    report.loss1 = fit(agent.critic1, agent.critic1_opt);
    report.loss2 = fit(agent.critic2, agent.critic2_opt);
    nn::soft_update(agent.target1, agent.critic1, agent.tau);
    nn::soft_update(agent.target2, agent.critic2, agent.tau);
    if (!batch.sim_weights.empty()) {
        double total = 0.0;
        for (double w : batch.sim_weights) total += w;
        report.mean_sim_weight = total / static_cast<double>(batch.sim_weights.size());
    }
    agent.update_steps += 1;
    return report;
}

CriticFn min_critic(SacAgent& agent) {
    return [&agent](const Matrix& states, const Matrix& actions) {
        const Matrix joint = state_action(states, actions);
        const Matrix q1 = agent.critic1.forward_batch(joint);
        const Matrix q2 = agent.critic2.forward_batch(joint);
        const Eigen::Index n = joint.cols();
        Matrix q(1, n);
        Matrix pick1 = Matrix::Zero(1, n);
        Matrix pick2 = Matrix::Zero(1, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (q1(0, i) <= q2(0, i)) {
                q(0, i) = q1(0, i);
                pick1(0, i) = 1.0;
            } else {
                q(0, i) = q2(0, i);
                pick2(0, i) = 1.0;
            }
        }
        const auto g1 = agent.critic1.backward(pick1, nn::GradientAt::output, false);
        const auto g2 = agent.critic2.backward(pick2, nn::GradientAt::output, false);
        Matrix grad = g1.input.bottomRows(actions.rows()) + g2.input.bottomRows(actions.rows());
        return std::make_pair(std::move(q), std::move(grad));
    };
}

ActorGradient actor_gradient(nn::MlpNet& actor, const Matrix& states, int action_dim, double action_bound,
                             double temperature, const CriticFn& critic, Rng& rng) {
    const Eigen::Index n = states.cols();
    if (n == 0) throw ContractError("actor update needs at least one state");
    const Matrix out = actor.forward_batch(states);
    const auto pi = evaluate_policy(out, action_dim, action_bound, gaussian_matrix(action_dim, n, rng));
    const auto [q, dq_da] = critic(states, pi.actions);
    const double inv_n = 1.0 / static_cast<double>(n);

    ActorGradient result;
    result.loss = (temperature * pi.log_prob.transpose() - q).mean();
    result.mean_log_prob = pi.log_prob.mean();
    if (!std::isfinite(result.loss)) throw NumericError("non-finite actor loss");

    Matrix upstream(2 * action_dim, n);
    for (Eigen::Index c = 0; c < n; ++c) {
        for (Eigen::Index i = 0; i < action_dim; ++i) {
            const double th = std::tanh(pi.pre_tanh(i, c));
            // d loss / d pre_tanh: through the critic and through -log(1 - tanh^2).
            const double d_pre = -inv_n * dq_da(i, c) * action_bound * (1.0 - th * th) + temperature * inv_n * 2.0 * th;
            upstream(i, c) = d_pre;
            const double raw = pi.log_std_raw(i, c);
            const bool clamped = raw < kLogStdMin || raw > kLogStdMax;
            const double sigma_xi = std::exp(pi.log_std(i, c)) * pi.noise(i, c);
            upstream(action_dim + i, c) = clamped ? 0.0 : d_pre * sigma_xi - temperature * inv_n;
        }
    }
    result.grads = actor.backward(upstream);
    return result;
}

double temperature_gradient(double mean_log_prob, double target_entropy) { return -(mean_log_prob + target_entropy); }

ActorReport actor_update(SacAgent& agent, const Matrix& states, Rng& rng) {
    const double lambda = agent.temperature();
    auto grad = actor_gradient(agent.actor, states, agent.action_dim(), agent.action_bound(), lambda, min_critic(agent), rng);
    nn::adam_step(agent.actor, grad.grads, agent.actor_opt);
    agent.temperature_opt.step(agent.log_temperature, temperature_gradient(grad.mean_log_prob, agent.target_entropy));
    return {grad.loss, -grad.mean_log_prob, agent.temperature()};
}

double behavior_cloning_update(SacAgent& agent, const std::vector<Transition>& batch) {
    if (batch.empty()) throw ContractError("behavior cloning needs a non-empty batch");
    const Matrix states = stack_states(batch);
    const Matrix target = stack_actions(batch);
    const Matrix out = agent.actor.forward_batch(states);
    const int ad = agent.action_dim();
    const double bound = agent.action_bound();
    const Matrix th = out.topRows(ad).array().tanh().matrix();
    const Matrix diff = bound * th - target;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    const double loss = diff.squaredNorm() * inv_n;
    if (!std::isfinite(loss)) throw NumericError("non-finite behavior cloning loss");
    Matrix upstream = Matrix::Zero(2 * ad, out.cols());
    upstream.topRows(ad) = (2.0 * inv_n * bound) * (diff.array() * (1.0 - th.array().square())).matrix();
    nn::adam_step(agent.actor, agent.actor.backward(upstream), agent.actor_opt);
    agent.update_steps += 1;
    return loss;
}

}  // namespace oris::sac
