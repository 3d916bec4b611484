#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "grad_check.hpp"
#include "oris/sac.hpp"

using namespace oris;
using namespace oris::sac;

namespace {

SacHyperParams small_hp() {
    SacHyperParams hp;
    hp.hidden_width = 16;
    return hp;
}

Transition pendulum_transition(Rng& rng, bool done = false) {
    Transition t;
    const double th = uniform(rng, -3, 3);
    t.s = Vector(3);
    t.s << std::cos(th), std::sin(th), uniform(rng, -8, 8);
    t.a = Vector::Constant(1, uniform(rng, -2, 2));
    t.r = uniform(rng, -10, 0);
    const double th2 = uniform(rng, -3, 3);
    t.s_next = Vector(3);
    t.s_next << std::cos(th2), std::sin(th2), uniform(rng, -8, 8);
    t.done = done;
    return t;
}

std::vector<Transition> batch_of(int n, Rng& rng, Transition::Origin origin) {
    std::vector<Transition> out;
    for (int i = 0; i < n; ++i) {
        out.push_back(pendulum_transition(rng));
        out.back().origin = origin;
    }
    return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

std::vector<double> critic_params(const SacAgent& agent) {
    auto p = agent.critic1.flat_parameters();
    const auto q = agent.critic2.flat_parameters();
    p.insert(p.end(), q.begin(), q.end());
    return p;
}

std::vector<double> delta(const std::vector<double>& after, const std::vector<double>& before) {
    std::vector<double> d(after.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = after[i] - before[i];
    return d;
}

// Zeroes the last layer so the network outputs a constant.
void make_constant(nn::MlpNet& net, double value) {
    const auto last = net.num_layers() - 1;
    net.weight(last).setZero();
    net.bias(last).setConstant(value);
}

}  // namespace

TEST(Act, DeterministicIgnoresRng) {
    SacAgent agent(3, 1, 2.0, small_hp(), 1);
    Rng a(1), b(2), s(3);
    const Transition t = pendulum_transition(s);
    EXPECT_EQ(act(agent, t.s, ActMode::deterministic, a), act(agent, t.s, ActMode::deterministic, b));
}

TEST(Act, OutputsWithinBounds) {
    SacAgent agent(4, 2, 1.0, small_hp(), 2);
    // Push the mean far out so tanh saturates.
    agent.actor.bias(agent.actor.num_layers() - 1).head(2).setConstant(50.0);
    Rng rng(4);
    Matrix states(4, 10000);
    for (Eigen::Index i = 0; i < states.size(); ++i) states.data()[i] = uniform(rng, -1, 1);
    const auto snap = agent.snapshot();
    const Matrix a = snap.act_batch(states, ActMode::stochastic, rng);
    EXPECT_LE(a.cwiseAbs().maxCoeff(), 1.0);
    const Matrix d = snap.act_batch(states, ActMode::deterministic, rng);
    EXPECT_LE(d.cwiseAbs().maxCoeff(), 1.0);
}

TEST(Act, WrongStateDimension) {
    SacAgent agent(3, 1, 2.0, small_hp(), 1);
    Rng rng(1);
    EXPECT_THROW(act(agent, Vector::Zero(4), ActMode::deterministic, rng), ContractError);
}

TEST(LogProb, MatchesNumericalChangeOfVariables) {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const int dim = 1 + trial % 3;
        Matrix out(2 * dim, 1);
        for (int i = 0; i < dim; ++i) {
            out(i, 0) = uniform(rng, -2, 2);
            out(dim + i, 0) = uniform(rng, -3, 1);
        }
        Matrix noise(dim, 1);
        for (int i = 0; i < dim; ++i) noise(i, 0) = standard_normal(rng);
        const double bound = 1.0;
        const auto p = evaluate_policy(out, dim, bound, noise);
        // Oracle: Gaussian density of the pre-squash sample divided by the
        // finite-difference Jacobian of tanh, per dimension.
        double oracle = 0.0;
        for (int i = 0; i < dim; ++i) {
            const double mu = out(i, 0), sd = std::exp(out(dim + i, 0)), x = p.pre_tanh(i, 0);
            oracle += -0.5 * std::pow((x - mu) / sd, 2) - std::log(sd) - 0.5 * std::log(2 * std::numbers::pi);
            const double h = 1e-6 * std::max(1.0, std::abs(x));
            const double jac = (std::tanh(x + h) - std::tanh(x - h)) / (2 * h);
            oracle -= std::log(jac);
        }
        EXPECT_NEAR(p.log_prob(0), oracle, 1e-6) << "trial " << trial;
        const Vector mean = out.topRows(dim).col(0), log_std = out.bottomRows(dim).col(0);
        EXPECT_NEAR(squashed_log_prob(mean, log_std, p.pre_tanh.col(0)), p.log_prob(0), 1e-10);
    }
}

TEST(LogProb, LogStdIsClamped) {
    Matrix out(2, 1);
    out << 0.0, 10.0;
    const auto p = evaluate_policy(out, 1, 1.0, Matrix::Zero(1, 1));
    EXPECT_EQ(p.log_std(0, 0), 2.0);
    out(1, 0) = -40.0;
    EXPECT_EQ(evaluate_policy(out, 1, 1.0, Matrix::Zero(1, 1)).log_std(0, 0), -20.0);
}

TEST(Bellman, TerminalTargetIsReward) {
    SacAgent agent(3, 1, 2.0, small_hp(), 3);
    Rng rng(1);
    const Transition t = pendulum_transition(rng, true);
    EXPECT_EQ(bellman_target(agent, t, rng), t.r);
}

TEST(Bellman, ArithmeticWithZeroTemperature) {
    SacAgent agent(3, 1, 2.0, small_hp(), 4);
    make_constant(agent.target1, 10.0);
    make_constant(agent.target2, 12.0);
    agent.log_temperature = -1e9;  // lambda = 0
    Rng rng(2);
    Transition t = pendulum_transition(rng);
    t.r = 1.0;
    EXPECT_NEAR(bellman_target(agent, t, rng), 10.9, 1e-12);
}

TEST(Bellman, LinearInReward) {
    SacAgent agent(3, 1, 2.0, small_hp(), 5);
    Rng src(3);
    Transition t = pendulum_transition(src);
    Rng a(9), b(9);
    const double y0 = bellman_target(agent, t, a);
    t.r += 0.75;
    EXPECT_DOUBLE_EQ(bellman_target(agent, t, b) - y0, 0.75);
}

TEST(Bellman, SwappingCriticsIsSymmetric) {
    SacAgent agent(3, 1, 2.0, small_hp(), 6);
    agent.target2 = nn::MlpNet(agent.target2.layer_sizes(), nn::Activation::relu, nn::Activation::identity, 1234);
    SacAgent swapped = agent;
    std::swap(swapped.critic1, swapped.critic2);
    std::swap(swapped.target1, swapped.target2);
    std::swap(swapped.critic1_opt, swapped.critic2_opt);
    Rng src(4);
    const auto batch = batch_of(32, src, Transition::Origin::offline);
    Rng a(5), b(5);
    const Vector y1 = bellman_targets(agent, batch, a);
    const Vector y2 = bellman_targets(swapped, batch, b);
    EXPECT_TRUE((y1.array() == y2.array()).all());
}

TEST(CriticUpdate, EmptySimBatchIsOffOnlyMeanSquaredError) {
    Rng src(10);
    WeightedBatch wb;
    wb.off_batch = batch_of(16, src, Transition::Origin::offline);
    const Vector coef = critic_coefficients(wb);
    EXPECT_EQ(coef.size(), 16);
    for (int i = 0; i < 16; ++i) EXPECT_EQ(coef(i), 1.0 / 16.0);

    SacAgent agent(3, 1, 2.0, small_hp(), 7);
    SacAgent ref = agent;
    Rng a(1), b(1);
    const auto report = critic_update(agent, wb, a);
    // Unweighted mean squared Bellman error by hand.
    const Vector y = bellman_targets(ref, wb.off_batch, b);
    const Matrix q = ref.critic1.predict_batch(state_action(stack_states(wb.off_batch), stack_actions(wb.off_batch)));
    EXPECT_NEAR(report.loss1, (q.row(0).transpose() - y).squaredNorm() / 16.0, 1e-12);
}

TEST(CriticUpdate, UnitWeightsMatchPooledUpdate) {
    Rng src(11);
    WeightedBatch split;
    split.off_batch = batch_of(128, src, Transition::Origin::offline);
    split.sim_batch = batch_of(128, src, Transition::Origin::simulator);
    split.sim_weights.assign(128, 1.0);
    WeightedBatch pooled;
    pooled.off_batch = split.off_batch;
    pooled.off_batch.insert(pooled.off_batch.end(), split.sim_batch.begin(), split.sim_batch.end());

    SacAgent a(3, 1, 2.0, small_hp(), 8);
    SacAgent b = a;
    const auto before = critic_params(a);
    Rng ra(3), rb(3);
    for (int step = 0; step < 3; ++step) {
        critic_update(a, split, ra);
        critic_update(b, pooled, rb);
    }
    EXPECT_LE(max_abs_diff(delta(critic_params(a), before), delta(critic_params(b), before)), 1e-12);
}

TEST(CriticUpdate, TinySimWeightApproachesOffOnlyUpdate) {
    Rng src(12);
    WeightedBatch tiny;
    tiny.off_batch = batch_of(64, src, Transition::Origin::offline);
    tiny.sim_batch = batch_of(64, src, Transition::Origin::simulator);
    tiny.sim_weights.assign(64, 1e-8);
    WeightedBatch off_only;
    off_only.off_batch = tiny.off_batch;
    // Keep the off term's scale identical to the two-part loss.
    off_only.off_denominator = 2.0 * 64.0 / 1.0;

    SacAgent a(3, 1, 2.0, small_hp(), 9);
    // A large epsilon makes the first Adam step proportional to the gradient;
    // otherwise parameters with a zero off-data gradient would be pushed a full
    // learning rate by an arbitrarily small sim gradient.
    for (auto* opt : {&a.critic1_opt, &a.critic2_opt}) opt->epsilon = 1.0;
    SacAgent b = a;
    const auto before = critic_params(a);
    Rng ra(4), rb(4);
    critic_update(a, tiny, ra);
    critic_update(b, off_only, rb);
    const double diff = max_abs_diff(delta(critic_params(a), before), delta(critic_params(b), before));
    EXPECT_LT(diff, 1e-6);
}

TEST(CriticUpdate, DuplicatingASimTransitionKeepsTheLoss) {
    Rng src(13);
    WeightedBatch one;
    one.off_batch = batch_of(8, src, Transition::Origin::offline);
    one.sim_batch = batch_of(4, src, Transition::Origin::simulator);
    one.sim_weights = {0.3, 0.5, 0.7, 1.0};
    one.sim_denominator = 4.0;
    WeightedBatch two = one;
    two.sim_batch.push_back(two.sim_batch[1]);
    two.sim_weights = {0.3, 0.25, 0.7, 1.0, 0.25};

    SacAgent a(3, 1, 2.0, small_hp(), 10);
    // Targets independent of the sampled next action, so the extra policy draw
    // for the duplicate cannot change its regression target.
    make_constant(a.target1, 2.0);
    make_constant(a.target2, 3.0);
    a.log_temperature = -1e9;
    SacAgent b = a;
    const auto before = critic_params(a);
    Rng ra(6), rb(6);
    const auto ca = critic_update(a, one, ra);
    const auto cb = critic_update(b, two, rb);
    EXPECT_NEAR(ca.loss1, cb.loss1, 1e-12);
    EXPECT_NEAR(ca.loss2, cb.loss2, 1e-12);
    EXPECT_LE(max_abs_diff(delta(critic_params(a), before), delta(critic_params(b), before)), 1e-12);
}

TEST(CriticUpdate, TerminalTransitionsCarryNoBootstrap) {
    SacAgent agent(3, 1, 2.0, small_hp(), 11);
    make_constant(agent.target1, 1e6);
    make_constant(agent.target2, 1e6);
    Rng rng(7);
    std::vector<Transition> batch;
    for (int i = 0; i < 10; ++i) batch.push_back(pendulum_transition(rng, true));
    const Vector y = bellman_targets(agent, batch, rng);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(y(i), batch[i].r);
}

TEST(CriticUpdate, NonFiniteTargetsAreReported) {
    SacAgent agent(3, 1, 2.0, small_hp(), 12);
    Rng rng(8);
    WeightedBatch wb;
    wb.off_batch = batch_of(4, rng, Transition::Origin::offline);
    wb.off_batch[2].r = std::nan("");
    try {
        critic_update(agent, wb, rng);
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
    }
}

TEST(CriticUpdate, SoftUpdatesTargetsAndCountsSteps) {
    SacAgent agent(3, 1, 2.0, small_hp(), 13);
    const auto target_before = agent.target1.flat_parameters();
    Rng rng(9);
    WeightedBatch wb;
    wb.off_batch = batch_of(8, rng, Transition::Origin::offline);
    critic_update(agent, wb, rng);
    EXPECT_EQ(agent.update_steps, 1u);
    const auto c = agent.critic1.flat_parameters();
    const auto t = agent.target1.flat_parameters();
    for (std::size_t i = 0; i < t.size(); ++i) {
        EXPECT_NEAR(t[i], 0.995 * target_before[i] + 0.005 * c[i], 1e-15);
    }
}

TEST(ActorGradient, FlatCriticAndZeroTemperatureGiveZeroGradient) {
    SacAgent agent(3, 1, 2.0, small_hp(), 14);
    Rng rng(10);
    Matrix states(3, 32);
    for (Eigen::Index i = 0; i < states.size(); ++i) states.data()[i] = uniform(rng, -1, 1);
    CriticFn flat = [](const Matrix& s, const Matrix& a) {
        return std::make_pair(Matrix(Matrix::Constant(1, s.cols(), 3.0)), Matrix(Matrix::Zero(a.rows(), a.cols())));
    };
    const auto g = actor_gradient(agent.actor, states, 1, 2.0, 0.0, flat, rng);
    EXPECT_LT(std::sqrt(g.grads.squared_norm()), 1e-8);
}

TEST(ActorGradient, MatchesFiniteDifferences) {
    SacAgent agent(3, 2, 1.5, small_hp(), 15);
    Rng src(11);
    Matrix states(3, 6);
    for (Eigen::Index i = 0; i < states.size(); ++i) states.data()[i] = uniform(src, -1, 1);
    Vector target(2);
    target << 0.3, -0.8;
    CriticFn bowl = [&](const Matrix& s, const Matrix& a) {
        Matrix q(1, s.cols());
        Matrix g(a.rows(), a.cols());
        for (Eigen::Index c = 0; c < a.cols(); ++c) {
            q(0, c) = -(a.col(c) - target).squaredNorm() + 0.1 * s(0, c) * a(0, c);
            g.col(c) = -2.0 * (a.col(c) - target);
            g(0, c) += 0.1 * s(0, c);
        }
        return std::make_pair(q, g);
    };
    const double temp = 0.37;
    Rng r0(99);
    auto grad = actor_gradient(agent.actor, states, 2, 1.5, temp, bowl, r0);
    const auto analytic = agent.actor.flatten(grad.grads);
    const auto numeric = gradcheck::numeric_gradient(agent.actor.flat_parameters(), [&](const std::vector<double>& p) {
        nn::MlpNet probe = agent.actor;
        probe.set_flat_parameters(p);
        Rng r(99);
        return actor_gradient(probe, states, 2, 1.5, temp, bowl, r).loss;
    });
    gradcheck::GradCheckResult res;
    gradcheck::compare(analytic, numeric, 1e-4, "actor", res);
    EXPECT_EQ(res.failures, 0u) << res.first_failure;
}

TEST(ActorGradient, MinCriticActionGradientMatchesFiniteDifferences) {
    SacAgent agent(3, 1, 2.0, small_hp(), 16);
    Rng rng(12);
    Matrix s(3, 5), a(1, 5);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = uniform(rng, -1, 1);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = uniform(rng, -2, 2);
    const auto critic = min_critic(agent);
    const auto [q, g] = critic(s, a);
    for (Eigen::Index c = 0; c < 5; ++c) {
        Matrix up = a, down = a;
        up(0, c) += 1e-5;
        down(0, c) -= 1e-5;
        const double num = (critic(s, up).first(0, c) - critic(s, down).first(0, c)) / 2e-5;
        EXPECT_TRUE(gradcheck::close_relative(g(0, c), num, 1e-4)) << g(0, c) << " vs " << num;
    }
}

TEST(ActorUpdate, QuadraticBowlDrivesActionToTarget) {
    SacHyperParams hp = small_hp();
    hp.actor_lr = 1e-2;
    SacAgent agent(3, 1, 2.0, hp, 17);
    const double a_star = 1.2;
    CriticFn bowl = [&](const Matrix& s, const Matrix& a) {
        Matrix q = -(a.array() - a_star).square().matrix();
        Matrix g = -2.0 * (a.array() - a_star).matrix();
        (void)s;
        return std::make_pair(q, g);
    };
    Rng rng(13);
    Matrix states(3, 64);
    for (Eigen::Index i = 0; i < states.size(); ++i) states.data()[i] = uniform(rng, -1, 1);
    auto distance = [&] {
        Rng unused(0);
        const Matrix a = agent.snapshot().act_batch(states, ActMode::deterministic, unused);
        return (a.array() - a_star).abs().mean();
    };
    const double start = distance();
    double prev = start;
    for (int step = 1; step <= 100; ++step) {
        auto g = actor_gradient(agent.actor, states, 1, 2.0, 0.0, bowl, rng);
        nn::adam_step(agent.actor, g.grads, agent.actor_opt);
        if (step % 20 == 0) {
            const double d = distance();
            EXPECT_LT(d, prev) << "step " << step;
            prev = d;
        }
    }
    EXPECT_LT(prev, 0.5 * start);
}

TEST(Temperature, GradientSignFollowsEntropyGap) {
    // Entropy H = -mean log pi. Below target entropy -> lambda must grow.
    const double target = -1.0;
    EXPECT_LT(temperature_gradient(/*mean_log_prob=*/3.0, target), 0.0);   // H = -3 < -1
    EXPECT_GT(temperature_gradient(/*mean_log_prob=*/-0.5, target), 0.0);  // H = 0.5 > -1

    SacAgent agent(3, 1, 2.0, small_hp(), 18);
    Rng rng(14);
    Matrix states(3, 16);
    for (Eigen::Index i = 0; i < states.size(); ++i) states.data()[i] = uniform(rng, -1, 1);
    // Nearly deterministic policy: entropy far below the target.
    agent.actor.bias(agent.actor.num_layers() - 1).tail(1).setConstant(-15.0);
    agent.actor.weight(agent.actor.num_layers() - 1).bottomRows(1).setZero();
    const double before = agent.temperature();
    actor_update(agent, states, rng);
    EXPECT_GT(agent.temperature(), before);

    SacAgent wide(3, 1, 2.0, small_hp(), 19);
    wide.target_entropy = -50.0;
    const double before_wide = wide.temperature();
    actor_update(wide, states, rng);
    EXPECT_LT(wide.temperature(), before_wide);
}

TEST(BehaviorCloning, FitsConstantAction) {
    SacHyperParams hp = small_hp();
    hp.actor_lr = 3e-3;
    SacAgent agent(3, 1, 2.0, hp, 20);
    Rng rng(15);
    auto batch = batch_of(64, rng, Transition::Origin::offline);
    for (auto& t : batch) t.a(0) = 1.25;
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 1500; ++i) {
        const double loss = behavior_cloning_update(agent, batch);
        if (i == 0) first = loss;
        last = loss;
    }
    EXPECT_LT(last, 1e-3 * first);
    Rng unused(0);
    EXPECT_NEAR(act(agent, batch[0].s, ActMode::deterministic, unused)(0), 1.25, 0.05);
}

TEST(Checkpoint, AgentRoundTrip) {
    SacAgent agent(4, 2, 1.0, small_hp(), 21);
    agent.log_temperature = -0.7;
    agent.update_steps = 42;
    const auto dir = std::filesystem::temp_directory_path() / "oris_agent_roundtrip";
    agent.save(dir);
    const auto back = SacAgent::load(dir, small_hp());
    EXPECT_EQ(back.actor.flat_parameters(), agent.actor.flat_parameters());
    EXPECT_EQ(back.target2.flat_parameters(), agent.target2.flat_parameters());
    EXPECT_EQ(back.log_temperature, agent.log_temperature);
    EXPECT_EQ(back.update_steps, 42u);
    EXPECT_EQ(back.action_dim(), 2);
    EXPECT_THROW(SacAgent::load(dir / "missing", small_hp()), ConfigError);
}

TEST(Defaults, TargetEntropyIsMinusActionDim) {
    SacAgent a(4, 2, 1.0, small_hp(), 1);
    EXPECT_EQ(a.target_entropy, -2.0);
    EXPECT_DOUBLE_EQ(a.temperature(), 1.0);
    EXPECT_TRUE(a.critic1.same_architecture(a.target1));
    EXPECT_EQ(a.critic1.flat_parameters(), a.target1.flat_parameters());
}
