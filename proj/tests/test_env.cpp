#include <gtest/gtest.h>

#include "d2s/env.hpp"

using namespace d2s;

namespace {

Action act(double vx, double vy, double vz, double grip = 0.0) {
    Action a;
    a.velocity = Vec3(vx, vy, vz);
    a.grip = grip;
    return a;
}

Action random_action(Rng& rng, double scale = 1.5) {
    return act(uniform(rng, -scale, scale), uniform(rng, -scale, scale), uniform(rng, -scale, scale),
               uniform(rng, -1.0, 1.0));
}

EnvState grasped_lift_state() {
    EnvState s;
    s.task = Task::lift;
    s.block_pos = Vec3(0.05, -0.02, 0.025);
    s.gripper_pos = s.block_pos;
    s.grip_degree = 1.0;
    s.grasped = true;
    return s;
}

}  // namespace

TEST(EnvReset, SameSeedSameState) {
    Rng a(5), b(5);
    const EnvState s = env_reset(Task::lift, a);
    const EnvState t = env_reset(Task::lift, b);
    EXPECT_EQ(s.gripper_pos, t.gripper_pos);
    EXPECT_EQ(s.block_pos, t.block_pos);
    EXPECT_EQ(s.task, Task::lift);
    EXPECT_EQ(s.grip_degree, 0.0);
    EXPECT_EQ(s.step_count, 0);
    EXPECT_FALSE(s.grasped);
    EXPECT_EQ(s.last_displacement, Vec3::Zero());
}

TEST(EnvReset, PositionsFollowTheResetDistribution) {
    Rng rng(6);
    int far = 0;
    for (int i = 0; i < 1000; ++i) {
        const EnvState s = env_reset(Task::reach, rng);
        EXPECT_LE(std::abs(s.block_pos.x()), 0.15);
        EXPECT_LE(std::abs(s.block_pos.y()), 0.15);
        EXPECT_EQ(s.block_pos.z(), 0.025);
        EXPECT_GE(s.gripper_pos.z(), 0.1);
        EXPECT_LE(s.gripper_pos.z(), 0.3);
        EXPECT_LE(std::abs(s.gripper_pos.x()), 0.3);
        EXPECT_LE(std::abs(s.gripper_pos.y()), 0.3);
        far += true_distance(s) > 0.03 ? 1 : 0;
    }
    EXPECT_GE(far, 990);
}

TEST(EnvStep, ZeroActionKeepsGripper) {
    Rng rng(7);
    const EnvState s = env_reset(Task::reach, rng);
    const auto [n, ev] = env_step(s, act(0, 0, 0));
    EXPECT_EQ(n.gripper_pos, s.gripper_pos);
    EXPECT_EQ(n.step_count, 1);
    EXPECT_FALSE(ev.done);
}

TEST(EnvStep, GripperAtBlockCenterTouches) {
    EnvState s;
    s.block_pos = Vec3(0.1, 0.1, 0.025);
    s.gripper_pos = s.block_pos;
    Rng rng(8);
    for (int i = 0; i < 20; ++i) {
        EnvState t = s;
        const Action a = act(0, 0, 0, uniform(rng, -1, 1));
        EXPECT_TRUE(env_step(t, a).second.touched);
    }
    // A full-speed diagonal step leaves the gripper 0.02 * sqrt(2) < 0.03 from the center.
    EXPECT_TRUE(env_step(s, act(1, 1, 0)).second.touched);
}

TEST(EnvStep, ReachSuccessEndsEpisodeWhenConfigured) {
    EnvParams p;
    p.terminate_on_success = true;
    EnvState s;
    s.block_pos = Vec3(0.0, 0.0, 0.025);
    s.gripper_pos = Vec3(0.045, 0.0, 0.025);
    const auto [n, ev] = env_step(s, act(-1, 0, 0), p);
    EXPECT_TRUE(ev.touched);
    EXPECT_TRUE(ev.success);
    EXPECT_TRUE(ev.done);
    EXPECT_THROW(env_step(n, act(0, 0, 0), p), ProtocolError);

    const auto [m, ev2] = env_step(s, act(-1, 0, 0));
    EXPECT_TRUE(ev2.success);
    EXPECT_FALSE(ev2.done);
}

TEST(EnvStep, LiftingAGraspedBlock) {
    EnvParams p;
    p.terminate_on_success = true;
    EnvState s = grasped_lift_state();
    StepEvents ev;
    int steps = 0;
    while (!s.done && steps < 3) {
        std::tie(s, ev) = env_step(s, act(0, 0, 1, -1.0), p);
        ++steps;
        EXPECT_EQ(s.block_pos, s.gripper_pos);
    }
    EXPECT_TRUE(ev.lifted);
    EXPECT_TRUE(ev.grasped);
    EXPECT_TRUE(ev.done);
    EXPECT_GE(s.block_pos.z() - 0.025, 0.04);
    EXPECT_NEAR(s.block_pos.z() - 0.025, 0.02 * steps, 1e-12);
}

TEST(EnvStep, GraspNeedsClosureAndProximity) {
    EnvState s;
    s.task = Task::lift;
    s.block_pos = Vec3(0.0, 0.0, 0.025);
    s.gripper_pos = Vec3(0.0, 0.0, 0.04);
    // Closing from fully open takes four steps to pass 0.9.
    StepEvents ev;
    for (int i = 0; i < 3; ++i) {
        std::tie(s, ev) = env_step(s, act(0, 0, 0, 1.0));
        EXPECT_FALSE(ev.grasped);
        EXPECT_TRUE(ev.touched);
    }
    std::tie(s, ev) = env_step(s, act(0, 0, 0, 1.0));
    EXPECT_DOUBLE_EQ(s.grip_degree, 1.0);
    EXPECT_TRUE(ev.grasped);
    EXPECT_EQ(s.block_pos, s.gripper_pos);

    EnvState far;
    far.task = Task::lift;
    far.block_pos = Vec3(0.0, 0.0, 0.025);
    far.gripper_pos = Vec3(0.025, 0.0, 0.025);  // touching but outside the 2 cm grasp radius
    far.grip_degree = 1.0;
    const auto [n, e2] = env_step(far, act(0, 0, 0, 1.0));
    EXPECT_TRUE(e2.touched);
    EXPECT_FALSE(e2.grasped);
}

TEST(EnvStep, ReachTaskNeverGrasps) {
    EnvState s;
    s.task = Task::reach;
    s.block_pos = Vec3(0.0, 0.0, 0.025);
    s.gripper_pos = s.block_pos;
    s.grip_degree = 1.0;
    const auto [n, ev] = env_step(s, act(0, 0, 1, 1.0));
    EXPECT_FALSE(ev.grasped);
    EXPECT_EQ(n.block_pos, s.block_pos);
}

TEST(EnvStep, GripCommandIgnoredOnceGrasped) {
    EnvState s = grasped_lift_state();
    const auto [n, ev] = env_step(s, act(0, 0, 0, -1.0));
    EXPECT_TRUE(n.grasped);
    EXPECT_EQ(n.grip_degree, 1.0);
}

TEST(EnvStep, IsPure) {
    Rng rng(9);
    const EnvState s = env_reset(Task::lift, rng);
    const Action a = random_action(rng);
    const auto [n1, e1] = env_step(s, a);
    const auto [n2, e2] = env_step(s, a);
    EXPECT_EQ(n1.gripper_pos, n2.gripper_pos);
    EXPECT_EQ(n1.grip_degree, n2.grip_degree);
    EXPECT_EQ(e1.touched, e2.touched);
}

TEST(EnvProperties, WorkspaceContainmentEventsAndEpisodeLength) {
    const EnvParams p;
    Rng rng(10);
    for (int episode = 0; episode < 200; ++episode) {
        const Task task = episode % 2 ? Task::lift : Task::reach;
        EnvState s = env_reset(task, rng, p);
        bool was_grasped = false;
        int steps = 0;
        while (!s.done) {
            // Bias towards the block so that grasps and lifts actually occur.
            Action a = random_action(rng);
            if (episode % 4 == 1 && !s.grasped) {
                const Vec3 to_block = (s.block_pos - s.gripper_pos) / p.max_step;
                a.velocity = to_block.cwiseMax(-1.0).cwiseMin(1.0);
                a.grip = 1.0;
            }
            StepEvents ev;
            std::tie(s, ev) = env_step(s, a, p);
            ++steps;
            EXPECT_TRUE((s.gripper_pos.array() >= p.workspace_lo.array()).all());
            EXPECT_TRUE((s.gripper_pos.array() <= p.workspace_hi.array()).all());
            EXPECT_GE(s.grip_degree, 0.0);
            EXPECT_LE(s.grip_degree, 1.0);
            if (was_grasped) EXPECT_TRUE(s.grasped);
            if (s.grasped) EXPECT_EQ(s.block_pos, s.gripper_pos);
            else EXPECT_EQ(s.block_pos.z(), 0.025);
            if (ev.lifted) EXPECT_TRUE(ev.grasped);
            if (ev.done) EXPECT_TRUE(ev.success || s.step_count == p.horizon);
            was_grasped = s.grasped;
        }
        EXPECT_LE(steps, 200);
        EXPECT_EQ(s.step_count, 200);
    }
}

TEST(TrueDistance, Examples) {
    EnvState s;
    s.block_pos = Vec3(0.0, 0.0, 0.025);
    s.gripper_pos = s.block_pos;
    EXPECT_EQ(true_distance(s), 0.0);
    s.gripper_pos = Vec3(0.03, 0.0, 0.025);
    EXPECT_DOUBLE_EQ(true_distance(s), 0.03);
    s.gripper_pos = Vec3(0.03, 0.04, 0.025);
    EXPECT_DOUBLE_EQ(true_distance(s), 0.05);
}

TEST(Proprioception, LayoutAndObservationLength) {
    Rng rng(11);
    EnvState s = env_reset(Task::lift, rng);
    auto p = proprioception(s);
    EXPECT_EQ(p.segment<3>(3), Vec3::Zero());
    for (int i = 0; i < 4; ++i) std::tie(s, std::ignore) = env_step(s, act(0.5, -1, 0, 1.0));
    p = proprioception(s);
    EXPECT_EQ(p[6], 1.0);
    EXPECT_EQ(p.segment<3>(0), s.gripper_pos);
    EXPECT_DOUBLE_EQ(p[3], 0.01);
    EXPECT_DOUBLE_EQ(p[4], -0.02);
    EXPECT_EQ(make_observation(s, s.block_pos).size(), 10);
    EXPECT_EQ(make_observation(env_reset(Task::reach, rng), Vec3::Zero()).size(), 10);
}

TEST(EnvStep, HorizonEndsEpisode) {
    EnvParams p;
    p.horizon = 3;
    EnvState s;
    s.gripper_pos = Vec3(0.2, 0.2, 0.3);
    StepEvents ev;
    for (int i = 0; i < 3; ++i) std::tie(s, ev) = env_step(s, act(0, 0, 0), p);
    EXPECT_TRUE(ev.done);
    EXPECT_FALSE(ev.success);
    EXPECT_THROW(env_step(s, act(0, 0, 0), p), ProtocolError);
}

TEST(Action, FromVectorChecksLength) {
    const double v[] = {0.1, 0.2, 0.3, -1.0};
    const Action a = Action::from_vector(v);
    EXPECT_EQ(a.velocity, Vec3(0.1, 0.2, 0.3));
    EXPECT_EQ(a.grip, -1.0);
    const double w[] = {0.1, 0.2, 0.3};
    EXPECT_THROW(Action::from_vector(w), ShapeError);
}
