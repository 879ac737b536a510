#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "d2s/td3.hpp"

using namespace d2s;

namespace {

Td3Config small_config() {
    Td3Config c;
    c.hidden = {8, 8};
    c.batch_size = 16;
    c.buffer_capacity = 1000;
    return c;
}

Td3Agent make_agent(const Td3Config& cfg, int obs = 3, int act = 2, std::uint64_t seed = 1) {
    Rng rng(seed);
    return make_td3_agent(obs, act, cfg, rng);
}

void zero_all(nn::MlpParams& p) {
    for (auto& w : p.weights) w.setZero();
    for (auto& b : p.biases) b.setZero();
}

void zero_agent(Td3Agent& a) {
    for (auto* p : {&a.actor, &a.actor_target, &a.critic1, &a.critic2, &a.critic1_target, &a.critic2_target})
        zero_all(*p);
}

Transition random_transition(Rng& rng, int obs, int act, bool done = false) {
    Transition t;
    t.state = Eigen::VectorXd(obs);
    t.next_state = Eigen::VectorXd(obs);
    t.action = Eigen::VectorXd(act);
    for (int i = 0; i < obs; ++i) {
        t.state[i] = uniform(rng, -1.0, 1.0);
        t.next_state[i] = uniform(rng, -1.0, 1.0);
    }
    for (int i = 0; i < act; ++i) t.action[i] = uniform(rng, -1.0, 1.0);
    t.reward = uniform(rng, -1.0, 1.0);
    t.done = done;
    return t;
}

ReplayBuffer filled_buffer(int n, int obs, int act, std::uint64_t seed, double done_prob = 0.2) {
    ReplayBuffer b(static_cast<std::size_t>(n), obs, act);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) b.push(random_transition(rng, obs, act, uniform(rng, 0.0, 1.0) < done_prob));
    return b;
}

bool same_params(const nn::MlpParams& a, const nn::MlpParams& b) {
    for (std::size_t k = 0; k < a.weights.size(); ++k)
        if (a.weights[k] != b.weights[k] || a.biases[k] != b.biases[k]) return false;
    return true;
}

bool same_agent(const Td3Agent& a, const Td3Agent& b) {
    return same_params(a.actor, b.actor) && same_params(a.actor_target, b.actor_target) &&
           same_params(a.critic1, b.critic1) && same_params(a.critic2, b.critic2) &&
           same_params(a.critic1_target, b.critic1_target) && same_params(a.critic2_target, b.critic2_target) &&
           a.update_count == b.update_count && a.actor_update_count == b.actor_update_count;
}

}  // namespace

TEST(SelectAction, ZeroActorGivesZeroAction) {
    Td3Agent a = make_agent(small_config());
    zero_all(a.actor);
    Rng rng(0);
    const Eigen::VectorXd act = select_action(a, Eigen::VectorXd::Constant(3, 0.4), false, rng);
    EXPECT_EQ(act, Eigen::VectorXd::Zero(2));
}

TEST(SelectAction, ExplorationNoiseIsClamped) {
    Td3Config cfg = small_config();
    cfg.exploration_noise_std = 50.0;
    Td3Agent a = make_agent(cfg);
    Rng rng(3);
    bool hit_upper = false;
    for (int i = 0; i < 100; ++i) {
        const Eigen::VectorXd act = select_action(a, Eigen::VectorXd::Zero(3), true, rng);
        EXPECT_LE(act.maxCoeff(), 1.0);
        EXPECT_GE(act.minCoeff(), -1.0);
        hit_upper = hit_upper || act.maxCoeff() == 1.0;
    }
    EXPECT_TRUE(hit_upper);
}

TEST(SelectAction, GreedyIsDeterministicAndChecksShape) {
    Td3Agent a = make_agent(small_config());
    Rng r1(1), r2(99);
    const Eigen::VectorXd obs = Eigen::VectorXd::Constant(3, -0.2);
    EXPECT_EQ(select_action(a, obs, false, r1), select_action(a, obs, false, r2));
    EXPECT_THROW(select_action(a, Eigen::VectorXd::Zero(4), false, r1), ShapeError);
}

TEST(ReplayBuffer, RingOverwritesOldest) {
    ReplayBuffer b(2, 1, 1);
    for (int i = 1; i <= 3; ++i) {
        Transition t{Eigen::VectorXd::Constant(1, i), Eigen::VectorXd::Zero(1), static_cast<double>(i),
                     Eigen::VectorXd::Constant(1, i), false};
        b.push(t);
    }
    ASSERT_EQ(b.size(), 2u);
    std::vector<double> held{b.at(0).reward, b.at(1).reward};
    std::sort(held.begin(), held.end());
    EXPECT_EQ(held, (std::vector<double>{2.0, 3.0}));
}

TEST(ReplayBuffer, SamplingIsDeterministic) {
    const ReplayBuffer b = filled_buffer(50, 3, 2, 4);
    Rng r1(17), r2(17);
    const Batch x = b.sample(20, r1);
    const Batch y = b.sample(20, r2);
    EXPECT_EQ(x.states, y.states);
    EXPECT_EQ(x.rewards, y.rewards);
}

TEST(ReplayBuffer, SamplingIsUniform) {
    ReplayBuffer b(4, 1, 1);
    for (int i = 0; i < 4; ++i)
        b.push({Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), static_cast<double>(i), Eigen::VectorXd::Zero(1),
                false});
    Rng rng(5);
    std::map<int, int> counts;
    for (int k = 0; k < 2500; ++k) {
        const Batch batch = b.sample(4, rng);
        for (Eigen::Index j = 0; j < batch.size(); ++j) ++counts[static_cast<int>(batch.rewards[j])];
    }
    // Binomial(10000, 1/4): sd = 43.3, so 3 sigma is about 130.
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(counts[i], 2500, 150) << "item " << i;
}

TEST(ReplayBuffer, UnderfilledSampleIsNotReady) {
    const ReplayBuffer b = filled_buffer(5, 3, 2, 4);
    Rng rng(1);
    EXPECT_THROW(b.sample(6, rng), NotReadyError);
    ReplayBuffer wrong(5, 3, 2);
    Rng r2(2);
    EXPECT_THROW(wrong.push(random_transition(r2, 4, 2)), ShapeError);
}

TEST(ReplayBuffer, StoredActionsStayInBox) {
    ReplayBuffer b(3, 1, 2);
    b.push({Eigen::VectorXd::Zero(1), Eigen::Vector2d(3.0, -7.0), 0.0, Eigen::VectorXd::Zero(1), false});
    EXPECT_EQ(b.at(0).action, Eigen::Vector2d(1.0, -1.0));
}

TEST(ComputeTargets, TerminalRowsDoNotBootstrap) {
    Td3Agent a = make_agent(small_config());
    ReplayBuffer b = filled_buffer(64, 3, 2, 6, 1.0);
    Rng rng(8);
    const Batch batch = b.sample(32, rng);
    const Eigen::VectorXd y = compute_targets(a, batch, rng);
    EXPECT_EQ(y, batch.rewards);
}

TEST(ComputeTargets, ZeroDiscountGivesRewards) {
    Td3Config cfg = small_config();
    cfg.gamma = 0.0;
    Td3Agent a = make_agent(cfg);
    const ReplayBuffer b = filled_buffer(64, 3, 2, 6, 0.0);
    Rng rng(8);
    const Batch batch = b.sample(32, rng);
    EXPECT_EQ(compute_targets(a, batch, rng), batch.rewards);
}

TEST(ComputeTargets, ZeroNetworksGiveReward) {
    Td3Agent a = make_agent(small_config());
    zero_agent(a);
    Batch batch{Eigen::MatrixXd::Random(3, 1), Eigen::MatrixXd::Zero(2, 1), Eigen::VectorXd::Ones(1),
                Eigen::MatrixXd::Random(3, 1), Eigen::VectorXd::Zero(1)};
    Rng rng(0);
    EXPECT_DOUBLE_EQ(compute_targets(a, batch, rng)[0], 1.0);
}

TEST(ComputeTargets, ClippedDoubleQIsConservative) {
    Td3Agent a = make_agent(small_config());
    // Make the twin target critics disagree.
    Rng perturb(77);
    for (auto& w : a.critic2_target.weights)
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] += uniform(perturb, -0.5, 0.5);
    const ReplayBuffer b = filled_buffer(200, 3, 2, 9, 0.0);
    for (int trial = 0; trial < 20; ++trial) {
        Rng sample_rng(trial), noise_rng(1000 + trial);
        const Batch batch = b.sample(64, sample_rng);
        Rng replay = noise_rng;
        const Eigen::VectorXd y = compute_targets(a, batch, noise_rng);
        // Re-draw the identical smoothed actions and score each critic alone.
        const Eigen::MatrixXd act = smoothed_target_actions(a, batch.next_states, replay);
        Eigen::MatrixXd in(5, batch.size());
        in << batch.next_states, act;
        const Eigen::RowVectorXd q1 = nn::mlp_predict(a.critic1_target, in).row(0);
        const Eigen::RowVectorXd q2 = nn::mlp_predict(a.critic2_target, in).row(0);
        for (Eigen::Index j = 0; j < batch.size(); ++j) {
            EXPECT_LE(y[j], batch.rewards[j] + 0.9 * q1[j] + 1e-15);
            EXPECT_LE(y[j], batch.rewards[j] + 0.9 * q2[j] + 1e-15);
        }
    }
}

TEST(ComputeTargets, SmoothedActionsStayInBox) {
    Td3Config cfg = small_config();
    cfg.target_noise_std = 5.0;
    Td3Agent a = make_agent(cfg);
    Rng rng(2);
    const Eigen::MatrixXd act = smoothed_target_actions(a, Eigen::MatrixXd::Random(3, 500), rng);
    EXPECT_LE(act.maxCoeff(), 1.0);
    EXPECT_GE(act.minCoeff(), -1.0);
}

TEST(UpdateCritics, PerfectFitHasZeroLossAndNoChange) {
    Td3Agent a = make_agent(small_config());
    a.critic2 = a.critic1;
    const ReplayBuffer b = filled_buffer(64, 3, 2, 10);
    Rng rng(1);
    const Batch batch = b.sample(16, rng);
    Eigen::MatrixXd in(5, batch.size());
    in << batch.states, batch.actions;
    const Eigen::VectorXd y = nn::mlp_predict(a.critic1, in).row(0).transpose();
    const Td3Agent before = a;
    EXPECT_EQ(update_critics(a, batch, y), 0.0);
    EXPECT_TRUE(same_params(a.critic1, before.critic1));
    EXPECT_TRUE(same_params(a.critic2, before.critic2));
}

TEST(UpdateCritics, SquaredErrorPerCritic) {
    Td3Agent a = make_agent(small_config());
    zero_agent(a);
    Batch batch{Eigen::MatrixXd::Zero(3, 1), Eigen::MatrixXd::Zero(2, 1), Eigen::VectorXd::Zero(1),
                Eigen::MatrixXd::Zero(3, 1), Eigen::VectorXd::Zero(1)};
    // Both zero critics output 0, target 2: each contributes 2^2 = 4.
    EXPECT_DOUBLE_EQ(update_critics(a, batch, Eigen::VectorXd::Constant(1, 2.0)), 8.0);
    EXPECT_THROW(update_critics(a, batch, Eigen::VectorXd::Zero(2)), ShapeError);
}

TEST(UpdateCritics, OneStepDescendsOnFixedBatch) {
    int violations = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Td3Agent a = make_agent(small_config(), 3, 2, 500 + static_cast<std::uint64_t>(trial));
        const ReplayBuffer b = filled_buffer(64, 3, 2, 1000 + static_cast<std::uint64_t>(trial));
        Rng rng(trial);
        const Batch batch = b.sample(32, rng);
        const Eigen::VectorXd y = compute_targets(a, batch, rng);
        const double before = update_critics(a, batch, y);
        Td3Agent probe = a;
        const double after = update_critics(probe, batch, y);
        if (after > before) ++violations;
    }
    EXPECT_LE(violations, 5);
}

TEST(UpdateActor, ZeroTauKeepsTargets) {
    Td3Config cfg = small_config();
    cfg.tau = 0.0;
    Td3Agent a = make_agent(cfg);
    const Td3Agent before = a;
    const ReplayBuffer b = filled_buffer(64, 3, 2, 11);
    Rng rng(2);
    update_actor_and_targets(a, b.sample(16, rng));
    EXPECT_TRUE(same_params(a.actor_target, before.actor_target));
    EXPECT_TRUE(same_params(a.critic1_target, before.critic1_target));
    EXPECT_TRUE(same_params(a.critic2_target, before.critic2_target));
    EXPECT_FALSE(same_params(a.actor, before.actor));
}

TEST(UpdateActor, AscendsLinearCritic) {
    Td3Config cfg = small_config();
    Td3Agent a = make_agent(cfg, 1, 1);
    // Q1(s, a) = a: a single linear layer that reads the action input.
    Rng rng(3);
    a.critic1 = nn::mlp_init({2, 1}, nn::Activation::relu, nn::Activation::identity, rng);
    a.critic1.weights[0] << 0.0, 1.0;
    a.critic1.biases[0].setZero();
    a.critic1_target = a.critic1;
    const ReplayBuffer b = filled_buffer(64, 1, 1, 12);
    const Batch batch = b.sample(32, rng);
    const double before = nn::mlp_predict(a.actor, batch.states).mean();
    for (int i = 0; i < 5; ++i) update_actor_and_targets(a, batch);
    EXPECT_GT(nn::mlp_predict(a.actor, batch.states).mean(), before);
}

TEST(TrainStep, DelaysActorUpdates) {
    Td3Agent a = make_agent(small_config());
    const ReplayBuffer b = filled_buffer(100, 3, 2, 13);
    Rng rng(4);
    int actor_updates = 0;
    for (int n = 1; n <= 10; ++n) {
        const auto d = train_step(a, b, rng);
        EXPECT_EQ(d.update_count, n);
        actor_updates += d.actor_updated ? 1 : 0;
        EXPECT_EQ(a.actor_update_count, n / 2);
    }
    EXPECT_EQ(actor_updates, 5);
}

TEST(TrainStep, UnderfilledBufferLeavesAgentUntouched) {
    Td3Agent a = make_agent(small_config());
    const Td3Agent before = a;
    const ReplayBuffer b = filled_buffer(10, 3, 2, 14);
    Rng rng(5);
    EXPECT_THROW(train_step(a, b, rng), NotReadyError);
    EXPECT_TRUE(same_agent(a, before));
}

TEST(TrainStep, IsBitReproducible) {
    Td3Agent a = make_agent(small_config());
    Td3Agent c = a;
    const ReplayBuffer b = filled_buffer(100, 3, 2, 15);
    Rng r1(6), r2(6);
    for (int i = 0; i < 6; ++i) {
        const auto d1 = train_step(a, b, r1);
        const auto d2 = train_step(c, b, r2);
        EXPECT_EQ(d1.critic_loss, d2.critic_loss);
    }
    EXPECT_TRUE(same_agent(a, c));
}

TEST(Td3Config, Validation) {
    Td3Config c;
    EXPECT_NO_THROW(c.validate());
    c.gamma = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.policy_delay = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.hidden = {};
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Td3Agent, TargetsStartAsCopies) {
    const Td3Agent a = make_agent(small_config());
    EXPECT_TRUE(same_params(a.actor, a.actor_target));
    EXPECT_TRUE(same_params(a.critic1, a.critic1_target));
    EXPECT_TRUE(same_params(a.critic2, a.critic2_target));
    EXPECT_FALSE(same_params(a.critic1, a.critic2));
    EXPECT_EQ(a.critic1.layer_sizes, (std::vector<int>{5, 8, 8, 1}));
    EXPECT_EQ(a.actor.layer_sizes, (std::vector<int>{3, 8, 8, 2}));
}
