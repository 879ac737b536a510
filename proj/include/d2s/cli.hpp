#pragma once

// Command-line front end: train | eval | ablation | reward-check.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "d2s/config.hpp"
#include "d2s/harness.hpp"
#include "d2s/rewards.hpp"

namespace d2s {

struct RewardCheckRow {
    std::string function;
    double distance = 0.0;
    StepEvents events;
    double value = 0.0;
};

/// Audit table of the four reward formulas at fixed distances and every
/// touched/grasped/lifted combination.
inline std::vector<RewardCheckRow> reward_check_rows() {
    const double distances[] = {0.0, 0.03, 0.05, 0.1, 0.2};
    std::vector<RewardCheckRow> rows;
    for (double d : distances) rows.push_back({"reach_dense", d, {}, reach_dense(d)});
    for (int touched = 0; touched < 2; ++touched) {
        StepEvents e;
        e.touched = touched != 0;
        rows.push_back({"reach_sparse", 0.0, e, reach_sparse(e)});
    }
    for (int mask = 0; mask < 8; ++mask) {
        StepEvents e;
        e.touched = (mask & 1) != 0;
        e.grasped = (mask & 2) != 0;
        e.lifted = (mask & 4) != 0;
        for (double d : distances) rows.push_back({"lift_dense", d, e, lift_dense(d, e)});
        rows.push_back({"lift_sparse", 0.0, e, lift_sparse(e)});
    }
    return rows;
}

inline std::string reward_check_table() {
    std::string s = "function,d,touched,grasped,lifted,value\n";
    char buf[160];
    for (const auto& r : reward_check_rows()) {
        std::snprintf(buf, sizeof buf, "%s,%g,%d,%d,%d,%.17g\n", r.function.c_str(), r.distance, r.events.touched,
                      r.events.grasped, r.events.lifted, r.value);
        s += buf;
    }
    return s;
}

namespace detail {

inline std::vector<double> parse_shift_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<double>("shift-deg", trim(item)));
    if (out.empty()) throw ConfigError("--shift-deg: empty list");
    return out;
}

struct CommonFlags {
    std::optional<std::string> task, reward, config, out, shift;
    std::optional<int> switch_episode, episodes, eval_episodes, seeds;
    std::optional<std::uint64_t> seed_base;

    void attach(CLI::App& app) {
        app.add_option("--task", task, "reach | lift");
        app.add_option("--reward", reward, "dense | sparse | oracle | dense2sparse");
        app.add_option("--switch-episode", switch_episode, "first sparse-reward episode for dense2sparse");
        app.add_option("--shift-deg", shift, "camera shift in degrees (ablation: comma-separated list)");
        app.add_option("--episodes", episodes, "training episodes per run");
        app.add_option("--eval-episodes", eval_episodes, "episodes in the final evaluation");
        app.add_option("--seeds", seeds, "number of seeds");
        app.add_option("--seed-base", seed_base, "first seed");
        app.add_option("--config", config, "key = value config file");
        app.add_option("--out", out, "output directory");
    }

    // File values first, then flag overrides.
    [[nodiscard]] ExperimentConfig resolve(bool require_task, bool single_shift) const {
        ExperimentConfig c;
        bool task_given = task.has_value();
        if (config) {
            load_config_file(c, *config);
            std::ifstream f(*config);
            std::string line;
            while (std::getline(f, line))
                if (trim(line.substr(0, line.find('#'))).rfind("task", 0) == 0) task_given = true;
        }
        if (require_task && !task_given) throw CLI::RequiredError("--task");
        if (task) c.task = parse_task(*task);
        if (reward) c.reward = parse_reward_kind(*reward);
        if (switch_episode) c.switch_episode = *switch_episode;
        if (shift && single_shift) c.shift_deg = parse_number<double>("shift-deg", *shift);
        if (episodes) c.total_episodes = *episodes;
        if (eval_episodes) c.eval_episodes = *eval_episodes;
        if (seeds) c.seeds = *seeds;
        if (seed_base) c.seed_base = *seed_base;
        if (out) c.out = *out;
        c.validate();
        return c;
    }
};

inline void write_actor(const std::filesystem::path& path, const nn::MlpParams& actor) {
    std::ostringstream o;
    nn::save_mlp(o, actor);
    write_text_file(path, o.str());
}

inline int run_train(const CommonFlags& f, std::ostream& out) {
    const ExperimentConfig c = f.resolve(true, true);
    ensure_writable_dir(c.out);
    std::vector<RunResult> runs;
    for (auto seed : c.seed_list()) {
        TrainResult tr = run_training(c, seed);
        const EvalResult fe = final_evaluation(tr.agent, c, seed);
        const std::string name = run_name(c, seed);
        write_text_file(std::filesystem::path(c.out) / (name + ".csv"), curve_csv(tr.record));
        write_text_file(std::filesystem::path(c.out) / (name + ".manifest"), run_manifest(c, seed));
        write_actor(std::filesystem::path(c.out) / (name + ".actor"), tr.agent.actor);
        out << name << ": final_reward=" << format_fixed(fe.mean_reward) << " success=" << format_fixed(fe.success_rate)
            << '\n';
        runs.push_back({c.reward, c.shift_deg, seed, std::move(tr.record), fe});
    }
    const auto reports = aggregate(c, runs);
    write_text_file(std::filesystem::path(c.out) /
                        ("summary_" + std::string(to_string(c.task)) + "_" + std::string(to_string(c.reward)) + ".csv"),
                    summary_csv(reports));
    return 0;
}

inline int run_eval(const CommonFlags& f, const std::string& actor_path, std::ostream& out) {
    const ExperimentConfig c = f.resolve(true, true);
    std::ifstream in(actor_path);
    if (!in) throw ConfigError("cannot read actor file '" + actor_path + "'");
    Td3Agent agent;
    agent.actor = nn::load_mlp(in);
    agent.obs_dim = agent.actor.input_size();
    agent.act_dim = agent.actor.output_size();
    if (agent.obs_dim != kObservationDim || agent.act_dim != Action::dim)
        throw ConfigError("actor file has the wrong input/output dimensions");
    ensure_writable_dir(c.out);
    std::string csv = "seed,eval_episodes,eval_mean_reward,eval_success_rate\n";
    for (auto seed : c.seed_list()) {
        const EvalResult r = final_evaluation(agent, c, seed);
        csv += std::to_string(seed) + "," + std::to_string(c.eval_episodes) + "," + format_fixed(r.mean_reward) + "," +
               format_fixed(r.success_rate) + "\n";
    }
    write_text_file(std::filesystem::path(c.out) / "eval.csv", csv);
    out << csv;
    return 0;
}

inline int run_ablation_cmd(const CommonFlags& f, unsigned jobs, std::ostream& out) {
    AblationGrid grid;
    grid.base = f.resolve(true, false);
    if (f.shift) grid.shifts = parse_shift_list(*f.shift);
    if (f.reward) grid.modes = {parse_reward_kind(*f.reward)};
    const AblationResult res = run_ablation(grid, jobs);
    out << summary_csv(res.reports);
    return 0;
}

}  // namespace detail

/// Parses `args` (args[0] is the program name), dispatches, and returns the
/// process exit status. Diagnostics go to `err`.
inline int cli_main(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Dense-to-sparse reward shaping lab: TD3 on kinematic reach/lift tasks"};
    app.require_subcommand(1);
    detail::CommonFlags train_flags, eval_flags, ablation_flags;

    auto* train = app.add_subcommand("train", "train one reward mode over --seeds seeds");
    train_flags.attach(*train);

    auto* eval = app.add_subcommand("eval", "evaluate a saved actor with the true-state dense reward");
    eval_flags.attach(*eval);
    std::string actor_path;
    eval->add_option("--actor", actor_path, "actor file written by train")->required();

    auto* ablation = app.add_subcommand("ablation", "run the reward-mode x shift x seed grid");
    ablation_flags.attach(*ablation);
    unsigned jobs = 1;
    ablation->add_option("--jobs", jobs, "concurrent runs")->check(CLI::PositiveNumber);

    app.add_subcommand("reward-check", "print the reward formula table");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand("reward-check")) {
            out << reward_check_table();
            return 0;
        }
        if (app.got_subcommand(train)) return detail::run_train(train_flags, out);
        if (app.got_subcommand(eval)) return detail::run_eval(eval_flags, actor_path, out);
        if (app.got_subcommand(ablation)) return detail::run_ablation_cmd(ablation_flags, jobs, out);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace d2s
