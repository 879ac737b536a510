#pragma once

// Training loop, greedy evaluation and the reward-mode x camera-shift x seed
// ablation grid, with CSV and manifest outputs.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "d2s/config.hpp"
#include "d2s/env.hpp"
#include "d2s/perception.hpp"
#include "d2s/rewards.hpp"
#include "d2s/rng.hpp"
#include "d2s/td3.hpp"

namespace d2s {

struct CurveRow {
    int episode = 0;  // training episodes completed when the evaluation ran
    double eval_mean_reward = 0.0;
    double eval_success_rate = 0.0;
};

struct TrainRecord {
    std::uint64_t seed = 0;
    std::vector<CurveRow> rows;
};

// One training step as seen by the reward function.
struct TraceRow {
    int episode = 0;
    int step = 0;
    double estimated_distance = 0.0;
    double true_distance = 0.0;
    StepEvents events;
    double reward = 0.0;
};

struct TrainResult {
    Td3Agent agent;
    TrainRecord record;
    std::vector<TraceRow> trace;  // filled only when requested
};

struct EvalResult {
    double mean_reward = 0.0;
    double success_rate = 0.0;
};

inline PerceptionModel perception_for(const ExperimentConfig& c) {
    return make_perception(c.shift_deg, c.target_mean_error);
}

namespace detail {

inline Eigen::VectorXd observe(const ExperimentConfig& c, const EnvState& s, const Vec3& estimate) {
    return make_observation(s, c.true_state_observations ? s.block_pos : estimate);
}

}  // namespace detail

/// Runs `n_episodes` greedy episodes. Rewards are the true-state dense
/// formula; the policy still observes perception estimates. Environment resets
/// and perception noise both draw from `rng`. Never touches replay data.
inline EvalResult evaluate_policy(const Td3Agent& agent, const ExperimentConfig& c, int n_episodes, Rng& rng) {
    if (n_episodes < 1) throw ConfigError("evaluate_policy: n_episodes must be >= 1");
    const EnvParams ep = c.env_params();
    const PerceptionModel pm = perception_for(c);
    double total_reward = 0.0;
    int successes = 0;
    Rng unused;  // select_action draws nothing when explore == false
    for (int e = 0; e < n_episodes; ++e) {
        EnvState s = env_reset(c.task, rng, ep);
        Vec3 est = estimate_block_position(pm, s.block_pos, rng);
        double episode_reward = 0.0;
        bool succeeded = false;
        while (!s.done) {
            const Eigen::VectorXd obs = detail::observe(c, s, est);
            const Eigen::VectorXd act = select_action(agent, obs, false, unused);
            auto [next, ev] = env_step(s, Action::from_vector({act.data(), static_cast<std::size_t>(act.size())}), ep);
            RewardContext ctx{c.task, 0, std::nullopt, true_distance(next), ev};
            episode_reward += eval_reward(ctx);
            succeeded = succeeded || ev.success;
            s = next;
            est = estimate_block_position(pm, s.block_pos, rng);
        }
        total_reward += episode_reward;
        successes += succeeded ? 1 : 0;
    }
    return {total_reward / n_episodes, static_cast<double>(successes) / n_episodes};
}

/// Rewrites every stored reward with the sparse formula of its logged events.
inline void relabel_sparse(ReplayBuffer& buffer, const std::vector<StepEvents>& slot_events, Task task) {
    if (slot_events.size() < buffer.size()) throw ShapeError("relabel_sparse: fewer events than stored transitions");
    for (std::size_t i = 0; i < buffer.size(); ++i)
        buffer.set_reward(i, task == Task::reach ? reach_sparse(slot_events[i]) : lift_sparse(slot_events[i]));
}

/// Trains one agent for `c.total_episodes` episodes. Deterministic in (c, seed):
/// every consumer of randomness uses its own named stream of the seed.
inline TrainResult run_training(const ExperimentConfig& c, std::uint64_t seed, bool keep_trace = false) {
    c.validate();
    const RewardMode mode = c.reward_mode();
    const EnvParams ep = c.env_params();
    const PerceptionModel pm = perception_for(c);
    const Td3Config tc = c.td3_config();

    Rng init_rng = make_stream(seed, "init");
    Rng explore_rng = make_stream(seed, "exploration");
    Rng env_rng = make_stream(seed, "environment");
    Rng perception_rng = make_stream(seed, "perception");
    Rng learn_rng = make_stream(seed, "learner");

    TrainResult res{make_td3_agent(kObservationDim, Action::dim, tc, init_rng), {seed, {}}, {}};
    Td3Agent& agent = res.agent;
    ReplayBuffer buffer(tc.buffer_capacity, kObservationDim, Action::dim);
    const auto batch = static_cast<std::size_t>(tc.batch_size);
    long total_steps = 0;
    // Events of the transition in each buffer slot, kept for relabelling.
    std::vector<StepEvents> slot_events;
    const bool relabel = mode.kind == RewardMode::Kind::dense2sparse && c.relabel_on_switch;

    for (int episode = 0; episode < c.total_episodes; ++episode) {
        if (relabel && episode == mode.switch_episode) relabel_sparse(buffer, slot_events, c.task);
        EnvState s = env_reset(c.task, env_rng, ep);
        Eigen::VectorXd obs = detail::observe(c, s, estimate_block_position(pm, s.block_pos, perception_rng));
        while (!s.done) {
            Eigen::VectorXd act(Action::dim);
            if (total_steps < tc.warmup_steps) {
                for (Eigen::Index i = 0; i < act.size(); ++i) act[i] = uniform(explore_rng, -1.0, 1.0);
            } else {
                act = select_action(agent, obs, true, explore_rng);
            }
            auto [next, ev] = env_step(s, Action::from_vector({act.data(), static_cast<std::size_t>(act.size())}), ep);
            const Vec3 est = estimate_block_position(pm, next.block_pos, perception_rng);
            const Eigen::VectorXd next_obs = detail::observe(c, next, est);

            RewardContext ctx{c.task, episode, (next.gripper_pos - est).norm(), true_distance(next), ev};
            const double r = step_reward(mode, ctx);
            if (keep_trace)
                res.trace.push_back({episode, next.step_count, *ctx.estimated_distance, *ctx.true_distance, ev, r});

            // Horizon truncation is not a terminal state for bootstrapping.
            const bool terminal = ep.terminate_on_success && ev.success;
            if (relabel) {
                if (slot_events.size() < buffer.capacity()) slot_events.resize(buffer.capacity());
                slot_events[buffer.cursor()] = ev;
            }
            buffer.push({obs, act, r, next_obs, terminal});
            if (total_steps >= tc.warmup_steps && buffer.ready(batch)) train_step(agent, buffer, learn_rng);

            ++total_steps;
            s = next;
            obs = next_obs;
        }

        const int completed = episode + 1;
        if (completed >= c.eval_start && (completed - c.eval_start) % c.eval_every == 0) {
            // The same evaluation episodes at every curve point.
            Rng eval_rng = make_stream(seed, "curve-eval");
            const EvalResult er = evaluate_policy(agent, c, c.curve_eval_episodes, eval_rng);
            res.record.rows.push_back({completed, er.mean_reward, er.success_rate});
        }
    }
    return res;
}

/// Final evaluation of a trained agent on episodes disjoint from training.
inline EvalResult final_evaluation(const Td3Agent& agent, const ExperimentConfig& c, std::uint64_t seed) {
    Rng rng = make_stream(seed, "final-eval");
    return evaluate_policy(agent, c, c.eval_episodes, rng);
}

// ---------------------------------------------------------------------------
// Output files

inline std::string format_fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string format_shift(double deg) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", deg);
    return buf;
}

inline std::string curve_csv(const TrainRecord& r) {
    std::string s = "episode,eval_mean_reward,eval_success_rate\n";
    for (const auto& row : r.rows)
        s += std::to_string(row.episode) + "," + format_fixed(row.eval_mean_reward) + "," +
             format_fixed(row.eval_success_rate) + "\n";
    return s;
}

inline std::string run_name(const ExperimentConfig& c, std::uint64_t seed) {
    return std::string(to_string(c.task)) + "_" + std::string(to_string(c.reward)) + "_shift" +
           format_shift(c.shift_deg) + "_seed" + std::to_string(seed);
}

/// Resolved config pinned to a single seed, in config-file syntax.
inline std::string run_manifest(const ExperimentConfig& c, std::uint64_t seed) {
    ExperimentConfig pinned = c;
    pinned.seeds = 1;
    pinned.seed_base = seed;
    return "# run " + run_name(c, seed) + "\n" + to_config_text(pinned);
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
    f << content;
    if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

/// Creates `dir` if needed and checks that files can be created in it.
inline void ensure_writable_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw ConfigError("output directory '" + dir.string() + "' cannot be created");
    const auto probe = dir / ".write_probe";
    {
        std::ofstream f(probe);
        if (!f) throw ConfigError("output directory '" + dir.string() + "' is not writable");
    }
    std::filesystem::remove(probe, ec);
}

// ---------------------------------------------------------------------------
// Ablation grid

struct RunResult {
    RewardMode::Kind mode = RewardMode::Kind::dense;
    double shift_deg = 0.0;
    std::uint64_t seed = 0;
    TrainRecord record;
    EvalResult final_eval;
};

struct EvalReport {
    Task task = Task::reach;
    RewardMode::Kind mode = RewardMode::Kind::dense;
    int switch_episode = 0;  // 0 for modes without a switch
    double shift_deg = 0.0;
    int seeds = 0;
    int eval_episodes = 0;
    double final_reward_mean = 0.0;
    double final_reward_std = 0.0;
    double success_mean = 0.0;
    double success_std = 0.0;
};

struct AblationGrid {
    ExperimentConfig base;
    std::vector<RewardMode::Kind> modes{RewardMode::Kind::dense, RewardMode::Kind::sparse, RewardMode::Kind::oracle,
                                        RewardMode::Kind::dense2sparse};
    std::vector<double> shifts{0.0};
};

struct AblationResult {
    std::vector<EvalReport> reports;  // ordered by (mode, shift)
    std::vector<RunResult> runs;      // ordered by (mode, shift, seed)
};

struct AblationError : std::runtime_error {
    AblationError(const std::string& what, std::vector<std::string> completed)
        : std::runtime_error(what), completed_cells(std::move(completed)) {}
    std::vector<std::string> completed_cells;
};

/// Mean and sample standard deviation (n - 1 denominator; 0 for a single value).
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

inline std::string summary_csv(const std::vector<EvalReport>& reports) {
    std::string s = "task,reward_mode,switch_episode,shift_deg,seeds,final_reward_mean,final_reward_std,success_mean,success_std\n";
    for (const auto& r : reports)
        s += std::string(to_string(r.task)) + "," + std::string(to_string(r.mode)) + "," +
             std::to_string(r.switch_episode) + "," + format_shift(r.shift_deg) + "," + std::to_string(r.seeds) + "," +
             format_fixed(r.final_reward_mean) + "," + format_fixed(r.final_reward_std) + "," +
             format_fixed(r.success_mean) + "," + format_fixed(r.success_std) + "\n";
    return s;
}

inline ExperimentConfig cell_config(const ExperimentConfig& base, RewardMode::Kind mode, double shift) {
    ExperimentConfig c = base;
    c.reward = mode;
    c.shift_deg = shift;
    return c;
}

/// Aggregates per-seed final evaluations into one report per (mode, shift).
inline std::vector<EvalReport> aggregate(const ExperimentConfig& base, const std::vector<RunResult>& runs) {
    std::vector<EvalReport> out;
    for (const auto& run : runs) {
        auto it = std::find_if(out.begin(), out.end(), [&](const EvalReport& r) {
            return r.mode == run.mode && r.shift_deg == run.shift_deg;
        });
        if (it == out.end()) {
            const ExperimentConfig c = cell_config(base, run.mode, run.shift_deg);
            EvalReport r;
            r.task = base.task;
            r.mode = run.mode;
            r.switch_episode = run.mode == RewardMode::Kind::dense2sparse ? c.resolved_switch_episode() : 0;
            r.shift_deg = run.shift_deg;
            r.eval_episodes = base.eval_episodes;
            out.push_back(r);
        }
    }
    for (auto& r : out) {
        std::vector<double> rewards, success;
        for (const auto& run : runs)
            if (run.mode == r.mode && run.shift_deg == r.shift_deg) {
                rewards.push_back(run.final_eval.mean_reward);
                success.push_back(run.final_eval.success_rate);
            }
        r.seeds = static_cast<int>(rewards.size());
        std::tie(r.final_reward_mean, r.final_reward_std) = mean_std(rewards);
        std::tie(r.success_mean, r.success_std) = mean_std(success);
    }
    std::stable_sort(out.begin(), out.end(), [](const EvalReport& a, const EvalReport& b) {
        if (a.mode != b.mode) return static_cast<int>(a.mode) < static_cast<int>(b.mode);
        return a.shift_deg < b.shift_deg;
    });
    return out;
}

/// Trains and evaluates every (mode, shift, seed) cell, `jobs` runs at a time,
/// then writes one curve CSV and manifest per run plus `summary_<task>.csv`
/// into `grid.base.out` (skipped when `write_files` is false).
inline AblationResult run_ablation(const AblationGrid& grid, unsigned jobs = 1, bool write_files = true) {
    if (grid.modes.empty() || grid.shifts.empty()) throw ConfigError("ablation: grid is empty");
    grid.base.validate();
    const auto seeds = grid.base.seed_list();
    std::vector<RunResult> runs;
    for (auto mode : grid.modes)
        for (double shift : grid.shifts)
            for (auto seed : seeds) runs.push_back({mode, shift, seed, {}, {}});

    const std::filesystem::path out_dir = grid.base.out;
    if (write_files) ensure_writable_dir(out_dir);

    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::vector<std::string> completed;
    std::exception_ptr failure;
    std::string failed_cell;

    auto worker = [&] {
        for (;;) {
            {
                std::lock_guard lock(mu);
                if (failure) return;
            }
            const std::size_t i = next.fetch_add(1);
            if (i >= runs.size()) return;
            RunResult& run = runs[i];
            const ExperimentConfig c = cell_config(grid.base, run.mode, run.shift_deg);
            try {
                TrainResult tr = run_training(c, run.seed);
                run.record = std::move(tr.record);
                run.final_eval = final_evaluation(tr.agent, c, run.seed);
                if (write_files) {
                    write_text_file(out_dir / (run_name(c, run.seed) + ".csv"), curve_csv(run.record));
                    write_text_file(out_dir / (run_name(c, run.seed) + ".manifest"), run_manifest(c, run.seed));
                }
                std::lock_guard lock(mu);
                completed.push_back(run_name(c, run.seed));
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) {
                    failure = std::current_exception();
                    failed_cell = run_name(c, run.seed);
                }
                return;
            }
        }
    };

    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(runs.size())));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    if (failure) {
        std::string msg;
        try {
            std::rethrow_exception(failure);
        } catch (const std::exception& e) {
            msg = e.what();
        } catch (...) {
            msg = "unknown error";
        }
        std::sort(completed.begin(), completed.end());
        throw AblationError("ablation aborted in cell " + failed_cell + ": " + msg + " (" +
                                std::to_string(completed.size()) + " of " + std::to_string(runs.size()) +
                                " cells completed)",
                            completed);
    }

    AblationResult res;
    res.reports = aggregate(grid.base, runs);
    res.runs = std::move(runs);
    if (write_files)
        write_text_file(out_dir / ("summary_" + std::string(to_string(grid.base.task)) + ".csv"),
                        summary_csv(res.reports));
    return res;
}

}  // namespace d2s
