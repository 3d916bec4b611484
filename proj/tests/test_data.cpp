#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "oris/data.hpp"
#include "oris/datagen.hpp"

using namespace oris;
namespace fs = std::filesystem;

namespace {

Transition make_transition(double tag, EnvId id = EnvId::pendulum) {
    const auto spec = EnvSpec::real(id);
    Transition t;
    t.s = Vector::Constant(spec.obs_dim(), tag);
    t.a = Vector::Constant(spec.action_dim(), 0.5 * tag);
    t.r = -tag;
    t.s_next = Vector::Constant(spec.obs_dim(), tag + 0.25);
    t.origin = Transition::Origin::offline;
    return t;
}

// Trajectory k holds `len` transitions whose state tag is 100*k + step.
Dataset synthetic(int trajectories, int len) {
    Dataset d;
    d.meta.tier = Tier::medium;
    for (int k = 0; k < trajectories; ++k) {
        std::vector<Transition> traj;
        for (int i = 0; i < len; ++i) traj.push_back(make_transition(100.0 * k + i));
        d.append_trajectory(std::move(traj));
    }
    return d;
}

fs::path temp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "oris_data_tests";
    fs::create_directories(dir);
    return dir / name;
}

bool same_transition(const Transition& a, const Transition& b) {
    return a.s == b.s && a.a == b.a && a.r == b.r && a.s_next == b.s_next && a.done == b.done;
}

}  // namespace

TEST(Dataset, AppendTracksBoundaries) {
    const Dataset d = synthetic(3, 4);
    EXPECT_EQ(d.size(), 12u);
    EXPECT_EQ(d.trajectory_ends, (std::vector<std::size_t>{4, 8, 12}));
    EXPECT_NO_THROW(d.validate());
}

TEST(Dataset, ValidateRejectsBrokenBoundaries) {
    Dataset d = synthetic(2, 3);
    d.trajectory_ends = {3, 5};
    EXPECT_THROW(d.validate(), ConfigError);
    d.trajectory_ends = {3, 3, 6};
    EXPECT_THROW(d.validate(), ConfigError);
}

TEST(Dataset, ValidateRejectsWrongDimensions) {
    Dataset d = synthetic(1, 2);
    d.transitions[1].s = Vector::Zero(4);
    EXPECT_THROW(d.validate(), ConfigError);
}

TEST(Jsonl, RoundTripIsBitExact) {
    Dataset d = synthetic(3, 5);
    d.transitions[2].r = 0.1 + 0.2;
    d.transitions[3].s(1) = std::nextafter(1.0, 2.0);
    d.transitions[4].s_next(0) = -1.0 / 3.0;
    d.transitions[7].done = true;
    d.meta.perturbation = {2.0, 0.3, 0.0};
    d.meta.behavior_policy_seed = 987654321;
    const fs::path path = temp_path("roundtrip.jsonl");
    write_dataset(d, path);
    const Dataset back = read_dataset(path);
    ASSERT_EQ(back.size(), d.size());
    EXPECT_EQ(back.trajectory_ends, d.trajectory_ends);
    EXPECT_EQ(back.meta.tier, d.meta.tier);
    EXPECT_EQ(back.meta.perturbation, d.meta.perturbation);
    EXPECT_EQ(back.meta.behavior_policy_seed, d.meta.behavior_policy_seed);
    for (std::size_t i = 0; i < d.size(); ++i) {
        EXPECT_TRUE(same_transition(back.transitions[i], d.transitions[i])) << i;
        EXPECT_EQ(back.transitions[i].origin, Transition::Origin::offline);
    }
    EXPECT_EQ(dataset_to_jsonl(back), dataset_to_jsonl(d));
}

TEST(Jsonl, MetaLineCarriesFormatAndVersion) {
    const std::string text = dataset_to_jsonl(synthetic(1, 1));
    const std::string first = text.substr(0, text.find('\n'));
    EXPECT_NE(first.find("\"format\":\"oris-dataset\""), std::string::npos);
    EXPECT_NE(first.find("\"version\":1"), std::string::npos);
    EXPECT_NE(first.find("\"env_id\":\"pendulum\""), std::string::npos);
}

TEST(Jsonl, MalformedInputIsAConfigError) {
    EXPECT_THROW(dataset_from_jsonl(""), ConfigError);
    EXPECT_THROW(dataset_from_jsonl("{\"format\":\"something-else\",\"version\":1}\n"), ConfigError);
    std::string text = dataset_to_jsonl(synthetic(1, 2));
    text += "{\"s\":[1,2],\"a\":[0]}\n";
    EXPECT_THROW(dataset_from_jsonl(text), ConfigError);
    EXPECT_THROW(read_dataset(temp_path("missing_file.jsonl")), ConfigError);
}

TEST(ReplayBuffer, FifoEviction) {
    ReplayBuffer buf(5);
    for (int i = 0; i < 8; ++i) buf.push(make_transition(i));
    ASSERT_EQ(buf.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(buf.at(i).s(0), static_cast<double>(i + 3));
    const auto all = buf.contents();
    EXPECT_EQ(all.front().s(0), 3.0);
    EXPECT_EQ(all.back().s(0), 7.0);
}

TEST(ReplayBuffer, PushAllMatchesRepeatedPush) {
    ReplayBuffer a(7), b(7);
    std::vector<Transition> ts;
    for (int i = 0; i < 11; ++i) {
        ts.push_back(make_transition(i));
        a.push(make_transition(i));
    }
    b.push_all(ts);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(a.at(i).s, b.at(i).s);
}

TEST(ReplayBuffer, EmptySamplingIsAnError) {
    ReplayBuffer buf(3);
    Rng rng(1);
    EXPECT_THROW(buf.sample(1, rng), ContractError);
    EXPECT_THROW(sample_minibatch(Dataset{}, 1, rng), ContractError);
}

TEST(ReplayBuffer, ConcurrentReadersSeeConsistentSizes) {
    ReplayBuffer buf(1000);
    std::atomic<bool> stop{false};
    std::atomic<int> violations{0};
    std::thread reader([&] {
        Rng rng(3);
        std::size_t last = 0;
        while (!stop) {
            const std::size_t n = buf.size();
            if (n < last || n > 1000) ++violations;
            last = n;
            if (n > 0) {
                for (const auto& t : buf.sample(4, rng)) {
                    if (t.s.size() != 3) ++violations;
                }
            }
        }
    });
    for (int i = 0; i < 5000; ++i) buf.push(make_transition(i));
    stop = true;
    reader.join();
    EXPECT_EQ(violations.load(), 0);
    EXPECT_EQ(buf.size(), 1000u);
}

TEST(Sampling, SingletonSource) {
    Dataset d;
    d.append_trajectory({make_transition(4.0)});
    Rng rng(1);
    const auto b = sample_minibatch(d, 1, rng);
    ASSERT_EQ(b.size(), 1u);
    EXPECT_TRUE(same_transition(b[0], d.transitions[0]));
}

TEST(Sampling, UniformFrequenciesChiSquare) {
    Dataset d;
    d.append_trajectory({make_transition(0), make_transition(1), make_transition(2), make_transition(3)});
    Rng rng(2024);
    const int n = 100000;
    std::map<double, int> counts;
    for (const auto& t : sample_minibatch(d, n, rng)) counts[t.s(0)] += 1;
    ASSERT_EQ(counts.size(), 4u);
    const double expected = n / 4.0;
    const double sigma = std::sqrt(n * 0.25 * 0.75);
    double chi2 = 0.0;
    for (const auto& [k, c] : counts) {
        EXPECT_LT(std::abs(c - expected), 3.0 * sigma) << k;
        chi2 += (c - expected) * (c - expected) / expected;
    }
    // 3 degrees of freedom; 16.27 is the 0.999 quantile.
    EXPECT_LT(chi2, 16.27);
}

TEST(Sampling, ReplayBufferUniformToo) {
    ReplayBuffer buf(4);
    for (int i = 0; i < 6; ++i) buf.push(make_transition(i));
    Rng rng(8);
    std::map<double, int> counts;
    for (const auto& t : sample_minibatch(buf, 40000, rng)) counts[t.s(0)] += 1;
    ASSERT_EQ(counts.size(), 4u);
    for (const auto& [k, c] : counts) {
        EXPECT_GE(k, 2.0);
        EXPECT_LT(std::abs(c - 10000), 3.0 * std::sqrt(40000 * 0.25 * 0.75));
    }
}

TEST(Sampling, SeedDeterministic) {
    const Dataset d = synthetic(4, 10);
    Rng a(77), b(77);
    const auto x = sample_minibatch(d, 64, a);
    const auto y = sample_minibatch(d, 64, b);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_TRUE(same_transition(x[i], y[i]));
}

TEST(Subsample, FullFractionKeepsEverything) {
    const Dataset d = synthetic(6, 3);
    const Dataset s = subsample_trajectories(d, 1.0, 5);
    EXPECT_EQ(s.size(), d.size());
    EXPECT_EQ(s.num_trajectories(), 6u);
}

TEST(Subsample, CeilingArithmetic) {
    EXPECT_EQ(subsample_trajectories(synthetic(10, 2), 0.5, 1).num_trajectories(), 5u);
    EXPECT_EQ(subsample_trajectories(synthetic(20, 2), 0.05, 1).num_trajectories(), 1u);
    EXPECT_EQ(subsample_trajectories(synthetic(100, 1), 0.25, 1).num_trajectories(), 25u);
    EXPECT_EQ(subsample_trajectories(synthetic(7, 1), 0.3, 1).num_trajectories(), 3u);
    EXPECT_EQ(subsample_trajectories(synthetic(3, 1), 0.01, 1).num_trajectories(), 1u);
}

TEST(Subsample, NeverSplitsTrajectories) {
    const Dataset d = synthetic(30, 7);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Dataset s = subsample_trajectories(d, 0.25, seed);
        std::size_t begin = 0;
        std::set<int> seen;
        for (std::size_t end : s.trajectory_ends) {
            const int traj = static_cast<int>(s.transitions[begin].s(0)) / 100;
            EXPECT_TRUE(seen.insert(traj).second);
            ASSERT_EQ(end - begin, 7u);
            for (std::size_t i = begin; i < end; ++i) EXPECT_EQ(s.transitions[i].s(0), 100.0 * traj + (i - begin));
            begin = end;
        }
        EXPECT_NO_THROW(s.validate());
    }
}

TEST(Subsample, ErrorsOnEmptyOrBadFraction) {
    EXPECT_THROW(subsample_trajectories(Dataset{}, 0.5, 1), ContractError);
    EXPECT_THROW(subsample_trajectories(synthetic(2, 2), 0.0, 1), ContractError);
    EXPECT_THROW(subsample_trajectories(synthetic(2, 2), 1.5, 1), ContractError);
}

TEST(StateMarginal, MatchesStatesAndStreamingMean) {
    const Dataset d = generate_dataset(EnvSpec::real(EnvId::pendulum), Tier::random, 3, 11, nullptr);
    const auto states = state_marginal(d);
    ASSERT_EQ(states.size(), d.size());
    for (std::size_t i = 0; i < states.size(); ++i) EXPECT_EQ(states[i], d.transitions[i].s);

    // Two-pass oracle: first mean, then a compensated correction pass.
    Vector mean = Vector::Zero(3);
    for (const auto& s : states) mean += s;
    mean /= static_cast<double>(states.size());
    Vector corr = Vector::Zero(3);
    for (const auto& s : states) corr += s - mean;
    mean += corr / static_cast<double>(states.size());

    // Streaming (Welford) mean.
    Vector running = Vector::Zero(3);
    std::size_t k = 0;
    for (const auto& s : states) running += (s - running) / static_cast<double>(++k);
    EXPECT_LT((running - mean).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GenerateDataset, RandomTierShapeAndDeterminism) {
    const auto spec = EnvSpec::real(EnvId::pendulum);
    const Dataset a = generate_dataset(spec, Tier::random, 2, 9, nullptr);
    EXPECT_EQ(a.num_trajectories(), 2u);
    EXPECT_EQ(a.size(), 400u);
    for (const auto& t : a.transitions) EXPECT_FALSE(t.done);
    const Dataset b = generate_dataset(spec, Tier::random, 2, 9, nullptr);
    EXPECT_EQ(dataset_to_jsonl(a), dataset_to_jsonl(b));

    const fs::path pa = temp_path("det_a.jsonl"), pb = temp_path("det_b.jsonl");
    write_dataset(a, pa);
    write_dataset(b, pb);
    std::ifstream fa(pa, std::ios::binary), fb(pb, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_EQ(sa, sb);
}

TEST(GenerateDataset, NonRandomTierNeedsReference) {
    EXPECT_THROW(generate_dataset(EnvSpec::real(EnvId::pendulum), Tier::expert, 2, 1, nullptr), ConfigError);
    EXPECT_THROW(generate_dataset(EnvSpec::simulator(EnvId::pendulum, {2.0, 1.0, 0.0}), Tier::random, 2, 1, nullptr),
                 ConfigError);
}

TEST(GenerateDataset, TierOrderingFromAReferenceRun) {
    ReferenceRunConfig cfg;
    cfg.total_steps = 12000;
    cfg.warmup_steps = 1000;
    cfg.eval_every = 1000;
    cfg.eval_episodes = 5;
    cfg.reference_episodes = 10;
    cfg.sac.hidden_width = 64;
    const auto spec = EnvSpec::real(EnvId::pendulum);
    const auto ref = train_reference(spec, cfg, 3);
    const auto mean_return = [](const Dataset& d) {
        const auto r = d.trajectory_returns();
        double s = 0.0;
        for (double x : r) s += x;
        return s / static_cast<double>(r.size());
    };
    const double random = mean_return(generate_dataset(spec, Tier::random, 10, 1, &ref));
    const double medium = mean_return(generate_dataset(spec, Tier::medium, 10, 2, &ref));
    const double expert = mean_return(generate_dataset(spec, Tier::expert, 10, 3, &ref));
    EXPECT_LT(random, medium);
    EXPECT_LT(medium, expert);
    EXPECT_GT(ref.expert_return, ref.random_return);
    const Dataset replay = generate_dataset(spec, Tier::medium_replay, 1, 4, &ref);
    EXPECT_GT(replay.num_trajectories(), 0u);
    EXPECT_NO_THROW(replay.validate());
    for (const auto& t : replay.transitions) EXPECT_EQ(t.origin, Transition::Origin::offline);
}
