#pragma once

// Reward regimes for the reach and lift tasks: dense (shaped on an estimated
// distance), sparse (event tiers), oracle (dense on the true distance) and the
// dense-to-sparse schedule that pays dense rewards for the first
// `switch_episode` episodes and sparse rewards afterwards.

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "d2s/env.hpp"
#include "d2s/errors.hpp"

namespace d2s {

struct RewardMode {
    enum class Kind { dense, sparse, oracle, dense2sparse };
    Kind kind = Kind::dense;
    int switch_episode = 0;  // used by dense2sparse only; must be >= 1 there

    static RewardMode dense() { return {Kind::dense, 0}; }
    static RewardMode sparse() { return {Kind::sparse, 0}; }
    static RewardMode oracle() { return {Kind::oracle, 0}; }
    static RewardMode dense2sparse(int switch_episode) {
        if (switch_episode < 1) throw ConfigError("dense2sparse: switch_episode must be >= 1");
        return {Kind::dense2sparse, switch_episode};
    }

    friend bool operator==(const RewardMode&, const RewardMode&) = default;
};

inline std::string_view to_string(RewardMode::Kind k) {
    switch (k) {
        case RewardMode::Kind::dense: return "dense";
        case RewardMode::Kind::sparse: return "sparse";
        case RewardMode::Kind::oracle: return "oracle";
        case RewardMode::Kind::dense2sparse: return "dense2sparse";
    }
    return "?";
}

inline RewardMode::Kind parse_reward_kind(std::string_view s) {
    if (s == "dense") return RewardMode::Kind::dense;
    if (s == "sparse") return RewardMode::Kind::sparse;
    if (s == "oracle") return RewardMode::Kind::oracle;
    if (s == "dense2sparse") return RewardMode::Kind::dense2sparse;
    throw ConfigError("unknown reward mode '" + std::string(s) + "' (expected dense|sparse|oracle|dense2sparse)");
}

struct RewardContext {
    Task task = Task::reach;
    int episode_index = 0;
    std::optional<double> estimated_distance;
    std::optional<double> true_distance;
    std::optional<StepEvents> events;
};

inline constexpr double kReachThreshold = 0.03;
inline constexpr double kLiftedReward = 2.25;
inline constexpr double kGraspedSparseReward = 1.25;

namespace detail {
inline void check_distance(double d) {
    if (!(d >= 0.0)) throw DomainError("reward: distance must be non-negative");
}
}  // namespace detail

inline double reach_dense(double d) {
    detail::check_distance(d);
    return d <= kReachThreshold ? 1.0 : 1.0 - std::tanh(10.0 * d);
}

inline double reach_sparse(const StepEvents& e) { return e.touched ? 1.0 : 0.0; }

inline double lift_dense(double d, const StepEvents& e) {
    detail::check_distance(d);
    if (e.lifted) return kLiftedReward;
    if (e.grasped) return 1.0;
    return 1.0 - std::tanh(10.0 * d);
}

// Highest attained tier pays: lifted > grasped > touched.
inline double lift_sparse(const StepEvents& e) {
    if (e.lifted) return kLiftedReward;
    if (e.grasped) return kGraspedSparseReward;
    if (e.touched) return 1.0;
    return 0.0;
}

inline double max_step_reward(Task t) { return t == Task::reach ? 1.0 : kLiftedReward; }

namespace detail {

inline double dense_formula(Task task, double d, const std::optional<StepEvents>& events) {
    if (task == Task::reach) return reach_dense(d);
    if (!events) throw ConfigError("step_reward: lift dense reward needs events");
    return lift_dense(d, *events);
}

inline double sparse_formula(Task task, const std::optional<StepEvents>& events) {
    if (!events) throw ConfigError("step_reward: sparse reward needs events");
    return task == Task::reach ? reach_sparse(*events) : lift_sparse(*events);
}

inline double need(const std::optional<double>& v, const char* what) {
    if (!v) throw ConfigError(std::string("step_reward: missing ") + what);
    return *v;
}

}  // namespace detail

/// True when `mode` pays sparse rewards in episode `episode_index`.
inline bool is_sparse_phase(const RewardMode& mode, int episode_index) {
    switch (mode.kind) {
        case RewardMode::Kind::sparse: return true;
        case RewardMode::Kind::dense2sparse: return episode_index >= mode.switch_episode;
        default: return false;
    }
}

/// Training reward. Dense uses the estimated distance, oracle the true one;
/// lift grasp/lift tiers always come from the true events.
inline double step_reward(const RewardMode& mode, const RewardContext& ctx) {
    switch (mode.kind) {
        case RewardMode::Kind::dense:
            return detail::dense_formula(ctx.task, detail::need(ctx.estimated_distance, "estimated distance"),
                                         ctx.events);
        case RewardMode::Kind::oracle:
            return detail::dense_formula(ctx.task, detail::need(ctx.true_distance, "true distance"), ctx.events);
        case RewardMode::Kind::sparse: return detail::sparse_formula(ctx.task, ctx.events);
        case RewardMode::Kind::dense2sparse:
            if (mode.switch_episode < 1) throw ConfigError("dense2sparse: switch_episode must be >= 1");
            if (is_sparse_phase(mode, ctx.episode_index)) return detail::sparse_formula(ctx.task, ctx.events);
            return detail::dense_formula(ctx.task, detail::need(ctx.estimated_distance, "estimated distance"),
                                         ctx.events);
    }
    throw ConfigError("step_reward: unknown mode");
}

/// Mode-independent evaluation reward: dense formula on the true state.
inline double eval_reward(const RewardContext& ctx) {
    return detail::dense_formula(ctx.task, detail::need(ctx.true_distance, "true distance"), ctx.events);
}

}  // namespace d2s
