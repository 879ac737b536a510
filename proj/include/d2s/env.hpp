#pragma once

// Kinematic point-gripper simulator for the reach and lift tasks.
//
// The gripper moves in Cartesian space by at most `max_step` meters per axis
// per step; the grip closes or opens at `grip_rate` per step. A 5 cm cube rests
// on the table (center height 0.025 m) until grasped, after which it rides
// with the gripper for the rest of the episode.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "d2s/errors.hpp"
#include "d2s/rng.hpp"

namespace d2s {

using Vec3 = Eigen::Vector3d;

enum class Task { reach, lift };

inline std::string_view to_string(Task t) { return t == Task::reach ? "reach" : "lift"; }

inline Task parse_task(std::string_view s) {
    if (s == "reach") return Task::reach;
    if (s == "lift") return Task::lift;
    throw ConfigError("unknown task '" + std::string(s) + "' (expected reach|lift)");
}

struct EnvParams {
    Vec3 workspace_lo{-0.3, -0.3, 0.0};
    Vec3 workspace_hi{0.3, 0.3, 0.5};
    double block_half_extent = 0.025;
    double block_xy_range = 0.15;      // block x,y ~ U(-range, range)
    double gripper_z_lo = 0.1;         // initial gripper height range
    double gripper_z_hi = 0.3;
    double max_step = 0.02;            // meters per unit velocity command
    double grip_rate = 0.25;
    double touch_radius = 0.03;
    double grasp_radius = 0.02;
    double grasp_closure = 0.9;
    double lift_height = 0.04;
    int horizon = 200;
    // End the episode at the first success instead of running to the horizon.
    bool terminate_on_success = false;
};

struct EnvState {
    Task task = Task::reach;
    Vec3 gripper_pos = Vec3::Zero();
    double grip_degree = 0.0;  // 0 open, 1 closed
    Vec3 block_pos = Vec3::Zero();
    Vec3 last_displacement = Vec3::Zero();
    bool grasped = false;
    bool done = false;
    int step_count = 0;
};

struct Action {
    Vec3 velocity = Vec3::Zero();  // each entry in [-1, 1]
    double grip = 0.0;             // > 0 closes, <= 0 opens

    static constexpr int dim = 4;

    static Action from_vector(std::span<const double> v) {
        if (v.size() != static_cast<std::size_t>(dim))
            throw ShapeError("Action: expected " + std::to_string(dim) + " entries, got " + std::to_string(v.size()));
        Action a;
        a.velocity = Vec3(v[0], v[1], v[2]);
        a.grip = v[3];
        return a;
    }
};

struct StepEvents {
    bool touched = false;
    bool grasped = false;
    bool lifted = false;
    bool success = false;  // task goal satisfied at this step
    bool done = false;
};

inline double true_distance(const EnvState& s) { return (s.gripper_pos - s.block_pos).norm(); }

inline double block_rest_height(const EnvParams& p) { return p.block_half_extent; }

/// Samples block and gripper positions; re-samples the gripper while it starts
/// within touching distance of the block.
inline EnvState env_reset(Task task, Rng& rng, const EnvParams& p = {}) {
    EnvState s;
    s.task = task;
    s.block_pos = Vec3(uniform(rng, -p.block_xy_range, p.block_xy_range),
                       uniform(rng, -p.block_xy_range, p.block_xy_range), block_rest_height(p));
    do {
        s.gripper_pos = Vec3(uniform(rng, p.workspace_lo.x(), p.workspace_hi.x()),
                             uniform(rng, p.workspace_lo.y(), p.workspace_hi.y()),
                             uniform(rng, p.gripper_z_lo, p.gripper_z_hi));
    } while (true_distance(s) <= p.touch_radius);
    return s;
}

inline bool task_success(Task task, const StepEvents& e) { return task == Task::reach ? e.touched : e.lifted; }

/// Pure transition function. Grasping only exists in the lift task; in the
/// reach task the grip command moves the grip degree but never grasps.
inline std::pair<EnvState, StepEvents> env_step(const EnvState& s, const Action& a, const EnvParams& p = {}) {
    if (s.done) throw ProtocolError("env_step: episode already finished");
    if (s.step_count >= p.horizon) throw ProtocolError("env_step: horizon reached");

    EnvState n = s;
    const Vec3 velocity = a.velocity.cwiseMax(-1.0).cwiseMin(1.0);
    n.last_displacement = p.max_step * velocity;
    n.gripper_pos = (s.gripper_pos + n.last_displacement).cwiseMax(p.workspace_lo).cwiseMin(p.workspace_hi);
    if (!s.grasped) {
        const double dir = a.grip > 0.0 ? 1.0 : -1.0;
        n.grip_degree = std::clamp(s.grip_degree + dir * p.grip_rate, 0.0, 1.0);
    }
    n.step_count = s.step_count + 1;

    StepEvents ev;
    if (n.grasped) {
        n.block_pos = n.gripper_pos;
    } else {
        const double d = true_distance(n);
        if (n.task == Task::lift && d <= p.touch_radius && d <= p.grasp_radius && n.grip_degree >= p.grasp_closure) {
            n.grasped = true;
            n.block_pos = n.gripper_pos;
        }
    }
    ev.touched = true_distance(n) <= p.touch_radius;
    ev.grasped = n.grasped;
    ev.lifted = n.grasped && (n.block_pos.z() - block_rest_height(p) >= p.lift_height);
    ev.success = task_success(n.task, ev);
    ev.done = (p.terminate_on_success && ev.success) || n.step_count >= p.horizon;
    n.done = ev.done;
    return {n, ev};
}

/// [gripper_pos (3), last commanded displacement (3), grip degree (1)].
inline Eigen::Matrix<double, 7, 1> proprioception(const EnvState& s) {
    Eigen::Matrix<double, 7, 1> v;
    v << s.gripper_pos, s.last_displacement, s.grip_degree;
    return v;
}

inline constexpr int kProprioceptionDim = 7;
inline constexpr int kObservationDim = kProprioceptionDim + 3;

/// Agent-visible observation: proprioception followed by the estimated block position.
inline Eigen::VectorXd make_observation(const EnvState& s, const Vec3& estimated_block) {
    Eigen::VectorXd obs(kObservationDim);
    obs << proprioception(s), estimated_block;
    return obs;
}

}  // namespace d2s
