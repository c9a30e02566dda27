#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "irsfb/agent.hpp"

using namespace irsfb;

namespace {

Mlp zero_actor(int in, int out, double bound) {
    Rng rng(0);
    Mlp a = make_mlp({in, 6, out}, Activation::relu, Activation::tanh, bound, rng);
    for (auto& l : a.layers) {
        l.weights.setZero();
        l.bias.setZero();
    }
    return a;
}

TrainingSetup tiny_setup() {
    TrainingSetup s;
    s.scenario.channel.n_bs = 2;
    s.scenario.channel.n_irs = 8;
    s.scenario.channel.n_paths = 3;
    s.scenario.n_groups = 4;
    s.ddpg.hidden = {16, 12};
    s.ddpg.batch_size = 8;
    s.n_agents = 2;
    s.episodes = 3;
    s.timesteps = 10;
    s.direction_size = 64;
    s.seed = 5;
    return s;
}

}  // namespace

TEST(State, WorkedExampleLayout) {
    const LinkBudget b;
    const RVector s = build_state(CVector::Zero(5), Codeword(10, 0.4e-12), b, 5, 10);
    ASSERT_EQ(s.size(), 20);
    EXPECT_TRUE(s.head(10).isZero(0.0));
    for (Eigen::Index i = 10; i < 20; ++i)
        EXPECT_NEAR(s[i], 0.4, 1e-15);
}

TEST(State, ChannelBlockIsLinearAndInvertible) {
    const LinkBudget b;
    const Normalization n = Normalization::for_link(b, 3, 4);
    EXPECT_DOUBLE_EQ(n.channel, std::sqrt(0.1 / (1e-11 * 12)));
    CVector h(3);
    h << Complex(1e-5, -2e-5), Complex(3e-6, 4e-6), Complex(-7e-6, 1e-6);
    const Codeword q(RVector{{0.5e-12, 1.0e-12, 2.0e-12, 2.7e-12}});
    const RVector s1 = build_state(h, q, n);
    const RVector s2 = build_state(CVector(2.0 * h), q, n);
    EXPECT_EQ(s2.head(6), 2.0 * s1.head(6));
    EXPECT_EQ(s2.tail(4), s1.tail(4));
    EXPECT_EQ(s1[0], n.channel * 1e-5);
    EXPECT_EQ(s1[3], n.channel * -2e-5);

    const auto [h_back, q_back] = split_state(s1, 3, n);
    EXPECT_LT((h_back - h).norm(), 1e-12 * h.norm());
    EXPECT_LT((q_back.values - q.values).norm(), 1e-12 * q.values.norm());
}

TEST(Reward, ClosedForms) {
    const double W = 10e6;
    EXPECT_DOUBLE_EQ(reward(4 * W, 0, W, W), 4.0);
    EXPECT_DOUBLE_EQ(reward(4 * W, 2, W, W), 2.0);
    EXPECT_DOUBLE_EQ(reward(0.0, 10, W, W), -10.0);
}

TEST(Replay, FifoEvictionKeepsOrder) {
    ReplayBuffer b(5);
    for (int i = 0; i < 8; ++i)
        b.push({RVector::Constant(1, i), RVector::Zero(1), static_cast<double>(i), RVector::Zero(1)});
    ASSERT_EQ(b.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i)
        EXPECT_EQ(b[i].reward, static_cast<double>(i + 3));
    Rng rng(1);
    for (const Transition* t : b.sample(100, rng))
        EXPECT_GE(t->reward, 3.0);
    EXPECT_THROW(ReplayBuffer(0), ConfigError);
}

TEST(Noise, DecayAndFloor) {
    NoiseSchedule n = NoiseSchedule::standard(4.6);
    EXPECT_EQ(n.current, 4.6);
    n.advance();
    EXPECT_DOUBLE_EQ(n.current, 0.99 * 4.6);
    for (int i = 0; i < 2000; ++i)
        n.advance();
    EXPECT_DOUBLE_EQ(n.current, 4.6 / 300);
}

TEST(Behavior, NearestDirectionExample) {
    // K = 2 entries (0, 0) and (1, 1) in action units; actor fixed at (0.9, 0.8)
    DirectionCodebook d(1, 2, 2, 1.0);
    RMatrix& e = const_cast<RMatrix&>(d.entries());
    e << 0.0, 1.0, 0.0, 1.0;
    Mlp actor;
    actor.layers.push_back({RMatrix::Zero(2, 1), RVector{{0.9, 0.8}}, Activation::linear});
    Normalization n;
    n.action = 1.0;
    Rng rng(0);
    const BehaviorAction a = behavior_action(actor, RVector::Zero(1), 0.0, d, n, rng);
    EXPECT_EQ(a.index, 1);
    EXPECT_EQ(a.action, (RVector{{0.9, 0.8}}));
}

TEST(Behavior, ZeroActorWithoutNoisePicksEntryNearestOrigin) {
    const DirectionCodebook d(3, 256, 4, 0.575e-12);
    int k0 = 0;
    for (int k = 1; k < d.size(); ++k)
        if (d.entries().col(k).squaredNorm() < d.entries().col(k0).squaredNorm())
            k0 = k;
    Rng rng(1);
    const Rng before = rng;
    const BehaviorAction a = behavior_action(zero_actor(8, 4, 5.75), RVector::Ones(8), 0.0, d, Normalization{}, rng);
    EXPECT_TRUE(a.action.isZero(0.0));
    EXPECT_EQ(a.index, k0);
    Rng copy = before;
    EXPECT_EQ(rng.engine()(), copy.engine()());  // no draws were consumed
}

TEST(Behavior, RecordedActionsStayBoundedAndQuantizerIsGlobal) {
    const DirectionCodebook d(4, 2048, 4, 0.575e-12);
    Rng rng(2);
    Mlp actor = make_mlp({8, 16, 4}, Activation::relu, Activation::tanh, 5.75, rng, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const BehaviorAction a =
            behavior_action(actor, RVector(RVector::Random(8) * 3.0), 25.0, d, Normalization{}, rng);
        ASSERT_LE(a.action.cwiseAbs().maxCoeff(), 5.75);
        int best = 0;
        for (int k = 1; k < d.size(); ++k)
            if ((d.entries().col(k) * 1e13 - a.action).squaredNorm() <
                (d.entries().col(best) * 1e13 - a.action).squaredNorm())
                best = k;
        ASSERT_EQ(a.index, best);
    }
}

TEST(Behavior, VarianceAndStdInterpretations) {
    const DirectionCodebook d(5, 4, 1, 1e-11);  // bound 100 in action units
    Mlp actor = zero_actor(1, 1, 100.0);
    for (bool as_std : {false, true}) {
        Rng rng(6);
        double s2 = 0.0;
        const int n = 20000;
        for (int i = 0; i < n; ++i) {
            const double u = behavior_action(actor, RVector::Zero(1), 4.0, d, Normalization{}, rng, as_std).action[0];
            s2 += u * u;
        }
        EXPECT_NEAR(s2 / n, as_std ? 16.0 : 4.0, as_std ? 0.5 : 0.15);
    }
}

TEST(Ddpg, ZeroDiscountTargetsAreRewards) {
    Rng rng(7);
    DdpgConfig cfg;
    cfg.hidden = {8, 6};
    cfg.critic_lr = 1e-2;
    Agent a = make_agent(3, 2, 1.0, cfg, rng);
    std::vector<Transition> data;
    for (int i = 0; i < 16; ++i)
        data.push_back({RVector::Random(3), RVector::Random(2), rng.uniform(-1, 1), RVector::Random(3)});
    std::vector<const Transition*> batch;
    for (const auto& t : data)
        batch.push_back(&t);
    // with gamma = 0 the reported loss is exactly the MSE against the rewards
    RMatrix sa(5, 16);
    for (int i = 0; i < 16; ++i) {
        sa.col(i).head(3) = data[static_cast<std::size_t>(i)].state;
        sa.col(i).tail(2) = data[static_cast<std::size_t>(i)].action;
    }
    double mse = 0.0;
    const RMatrix q = a.critic.forward(sa);
    for (int i = 0; i < 16; ++i)
        mse += std::pow(q(0, i) - data[static_cast<std::size_t>(i)].reward, 2) / 16.0;
    EXPECT_NEAR(ddpg_update(a, batch, 0.0, 0.001).critic_loss, mse, 1e-15);
}

TEST(Ddpg, UnitTauCopiesOnlineIntoTargets) {
    Rng rng(8);
    DdpgConfig cfg;
    cfg.hidden = {8, 6};
    Agent a = make_agent(3, 2, 1.0, cfg, rng);
    std::vector<Transition> data(8, Transition{RVector::Ones(3), RVector::Ones(2), 1.0, RVector::Zero(3)});
    std::vector<const Transition*> batch;
    for (const auto& t : data)
        batch.push_back(&t);
    ddpg_update(a, batch, 0.99, 1.0);
    for (std::size_t l = 0; l < a.actor.layers.size(); ++l) {
        EXPECT_EQ(a.target_actor.layers[l].weights, a.actor.layers[l].weights);
        EXPECT_EQ(a.target_critic.layers[l].weights, a.critic.layers[l].weights);
    }
}

TEST(Ddpg, CriticLossDecreasesOnFrozenBatch) {
    Rng rng(9);
    DdpgConfig cfg;
    Agent a = make_agent(8, 4, 5.75, cfg, rng);
    RMatrix sa = RMatrix::Random(12, 32);
    RVector y(32);
    for (auto& v : y)
        v = rng.uniform(-1.0, 1.0);
    double last = 1e300;
    for (int i = 0; i < 50; ++i) {
        const double mse = critic_step(a.critic, a.critic_opt, sa, y);
        ASSERT_LT(mse, last) << "step " << i;
        last = mse;
    }
}

TEST(Assignment, WrapsAndCovers) {
    EXPECT_EQ(assign_agent(1, 8), 1);
    EXPECT_EQ(assign_agent(8, 8), 8);
    EXPECT_EQ(assign_agent(9, 8), 1);
    for (int ma = 1; ma <= 6; ++ma)
        for (int m = ma; m <= 12; ++m) {
            std::set<int> hit;
            for (int i = 1; i <= m; ++i)
                hit.insert(assign_agent(i, ma));
            EXPECT_EQ(static_cast<int>(hit.size()), ma);
        }
}

TEST(Train, TwoTimestepsStoreOneTransition) {
    TrainingSetup s = tiny_setup();
    s.n_agents = 1;
    s.episodes = 1;
    s.timesteps = 2;
    const TrainingResult r = train(s);
    EXPECT_EQ(r.agents[0].buffer.size(), 1u);
}

TEST(Train, EpsilonTrace) {
    TrainingSetup s = tiny_setup();
    s.episodes = 4;
    s.timesteps = 2;
    const TrainingResult r = train(s);
    const double eps0 = 2.3e-12 / 5.0 * 1e13;
    EXPECT_DOUBLE_EQ(r.episodes[0].epsilon, eps0);
    EXPECT_DOUBLE_EQ(r.episodes[1].epsilon, 0.99 * eps0);
    EXPECT_DOUBLE_EQ(r.episodes[3].epsilon, 0.99 * 0.99 * 0.99 * eps0);
}

TEST(Train, SmokeRunBookkeeping) {
    TrainingSetup s = tiny_setup();
    s.episodes = 20;
    s.ddpg.replay_capacity = 150;
    int seen = 0;
    const TrainingResult r = train(s, [&](const EpisodeMetrics& m) { EXPECT_EQ(m.episode, seen++); });
    EXPECT_EQ(seen, 20);
    for (const auto& a : r.agents) {
        EXPECT_TRUE(a.all_finite());
        EXPECT_EQ(a.buffer.size(), std::min<std::size_t>(150, 20 * 9));
        for (std::size_t i = 0; i < a.buffer.size(); ++i)
            ASSERT_LE(a.buffer[i].action.cwiseAbs().maxCoeff(), 5.75 + 1e-12);
    }
    for (const auto& e : r.episodes) {
        EXPECT_GT(e.mean_rate, 0.0);
        EXPECT_LT(e.mean_effective_rate, e.mean_rate);
    }
}

TEST(Train, SameSeedSameAgents) {
    const TrainingResult a = train(tiny_setup());
    const TrainingResult b = train(tiny_setup());
    EXPECT_EQ(a.agents[1].actor.layers[0].weights, b.agents[1].actor.layers[0].weights);
    EXPECT_EQ(a.episodes.back().mean_rate, b.episodes.back().mean_rate);
}

TEST(Utilization, ZeroActorsShiftEveryCodewordByTheSameDirection) {
    const TrainingSetup s = tiny_setup();
    const DirectionCodebook d = s.directions();
    int k0 = 0;
    for (int k = 1; k < d.size(); ++k)
        if (d.entries().col(k).squaredNorm() < d.entries().col(k0).squaredNorm())
            k0 = k;
    const Mlp z = zero_actor(8, 4, 5.75);
    Rng rng(10);
    const ChannelState ch = sample_initial(s.scenario.channel, s.scenario.geometry, rng);
    const auto cb = rvq_codebook(5, 4, 0.9e-12, 2.0e-12, rng);
    const UtilizationStep u = utilization_step({&z, &z}, cb, ch, d, s.scenario, s.normalization());
    ASSERT_EQ(u.next_codebook.size(), 5u);
    for (std::size_t m = 0; m < 5; ++m)
        EXPECT_EQ(u.next_codebook[m], dpic_apply(cb[m], d.entry(k0), s.scenario.bounds).codeword);
    EXPECT_EQ(u.block.feedback_bits, 3 + 5 * 6);
}

TEST(Utilization, AgentAssignmentAndDeterminism) {
    const TrainingResult r = train(tiny_setup());
    const TrainingSetup s = tiny_setup();
    const DirectionCodebook d = s.directions();
    Rng rng(11);
    const ChannelState ch = sample_initial(s.scenario.channel, s.scenario.geometry, rng);
    const auto cb = rvq_codebook(2, 4, 0.4e-12, 2.7e-12, rng);
    const Mlp& a1 = r.agents[0].actor;
    const Mlp& a2 = r.agents[1].actor;
    const UtilizationStep one = utilization_step({&a1, &a2}, cb, ch, d, s.scenario, s.normalization());
    const UtilizationStep two = utilization_step({&a1, &a2}, cb, ch, d, s.scenario, s.normalization());
    EXPECT_EQ(one.next_codebook, two.next_codebook);
    // codeword 2 belongs to agent 2
    Rng unused(0);
    const CVector h = effective_channel(ch, cb[1], s.scenario.profile);
    const int k = behavior_action(a2, build_state(h, cb[1], s.normalization()), 0.0, d, s.normalization(), unused).index;
    EXPECT_EQ(one.next_codebook[1], dpic_apply(cb[1], d.entry(k), s.scenario.bounds).codeword);
}

TEST(Checkpoint, RoundTrip) {
    const TrainingSetup s = tiny_setup();
    const TrainingResult r = train(s);
    CheckpointManifest man;
    man.n_agents = 2;
    man.dpic_step = s.scenario.steps.dpic;
    man.direction_size = s.direction_size;
    man.direction_dims = 4;
    man.direction_seed = s.direction_seed;
    man.normalization = s.normalization();
    const auto dir = std::filesystem::temp_directory_path() / "irsfb_test_ckpt";
    std::filesystem::remove_all(dir);
    save_checkpoint(dir, r.agents, man);
    const Checkpoint ck = load_checkpoint(dir);
    std::filesystem::remove_all(dir);
    ASSERT_EQ(ck.actors.size(), 2u);
    EXPECT_EQ(ck.manifest.n_agents, 2);
    EXPECT_EQ(ck.manifest.dpic_step, man.dpic_step);
    EXPECT_EQ(DirectionCodebook(ck.manifest.direction_seed, ck.manifest.direction_size, 4, ck.manifest.dpic_step)
                  .fingerprint(),
              s.directions().fingerprint());
    EXPECT_EQ(ck.manifest.normalization.channel, man.normalization.channel);
    EXPECT_EQ(ck.actors[1].layers[2].weights, r.agents[1].actor.layers[2].weights);
    EXPECT_THROW(load_checkpoint(dir), ConfigError);
}
