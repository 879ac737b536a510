#pragma once

// Experiment configuration and its flat `key = value` text form. The same
// text form is used for config files and for the per-run manifests, so a
// manifest can be fed back through --config to replay a run exactly.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "d2s/env.hpp"
#include "d2s/errors.hpp"
#include "d2s/rewards.hpp"
#include "d2s/td3.hpp"

namespace d2s {

struct ExperimentConfig {
    Task task = Task::reach;
    RewardMode::Kind reward = RewardMode::Kind::dense;
    int switch_episode = 0;  // 0 means "one third of total_episodes"
    double shift_deg = 0.0;
    double target_mean_error = 0.014;  // meters; 0 disables perception noise
    int total_episodes = 400;
    int horizon = 200;
    double discount = 0.9;
    int eval_every = 5;
    int eval_start = 20;
    int eval_episodes = 200;        // final evaluation
    int curve_eval_episodes = 20;   // each learning-curve point
    int seeds = 3;
    std::uint64_t seed_base = 0;
    bool terminate_on_success = false;
    // Diagnostic: the policy observes the true block position instead of the estimate.
    bool true_state_observations = false;
    // At the dense2sparse switch, rewrite stored rewards with the sparse formula.
    bool relabel_on_switch = true;
    Td3Config td3;
    std::string out = "out";

    [[nodiscard]] int resolved_switch_episode() const {
        if (switch_episode > 0) return switch_episode;
        return std::max(1, total_episodes / 3);
    }

    [[nodiscard]] RewardMode reward_mode() const {
        if (reward == RewardMode::Kind::dense2sparse) return RewardMode::dense2sparse(resolved_switch_episode());
        return {reward, 0};
    }

    [[nodiscard]] std::vector<std::uint64_t> seed_list() const {
        std::vector<std::uint64_t> s;
        for (int i = 0; i < seeds; ++i) s.push_back(seed_base + static_cast<std::uint64_t>(i));
        return s;
    }

    [[nodiscard]] EnvParams env_params() const {
        EnvParams p;
        p.horizon = horizon;
        p.terminate_on_success = terminate_on_success;
        return p;
    }

    [[nodiscard]] Td3Config td3_config() const {
        Td3Config c = td3;
        c.gamma = discount;
        return c;
    }

    void validate() const {
        if (total_episodes < 0) throw ConfigError("config: total_episodes must be >= 0");
        if (switch_episode < 0) throw ConfigError("config: switch_episode must be >= 0");
        if (horizon < 1) throw ConfigError("config: horizon must be >= 1");
        if (!(discount > 0.0 && discount < 1.0)) throw ConfigError("config: discount must lie in (0, 1)");
        if (eval_every < 1) throw ConfigError("config: eval_every must be >= 1");
        if (eval_start < 0) throw ConfigError("config: eval_start must be >= 0");
        if (eval_episodes < 1 || curve_eval_episodes < 1) throw ConfigError("config: eval episode counts must be >= 1");
        if (seeds < 1) throw ConfigError("config: seeds must be >= 1");
        if (!std::isfinite(shift_deg)) throw ConfigError("config: shift_deg must be finite");
        if (!(target_mean_error >= 0.0) || !std::isfinite(target_mean_error))
            throw ConfigError("config: target_mean_error must be >= 0");
        td3_config().validate();
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const char* first = v.data();
    const char* last = v.data() + v.size();
    auto [p, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || p != last) throw ConfigError("config: bad value for '" + key + "': '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: bad boolean for '" + key + "': '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
    if (out.empty()) throw ConfigError("config: empty list for '" + key + "'");
    return out;
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Applies one `key = value` setting. Unknown keys are configuration errors.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_number;
    if (key == "task") c.task = parse_task(value);
    else if (key == "reward_mode" || key == "reward") c.reward = parse_reward_kind(value);
    else if (key == "switch_episode") c.switch_episode = parse_number<int>(key, value);
    else if (key == "shift_deg") c.shift_deg = parse_number<double>(key, value);
    else if (key == "target_mean_error") c.target_mean_error = parse_number<double>(key, value);
    else if (key == "total_episodes" || key == "episodes") c.total_episodes = parse_number<int>(key, value);
    else if (key == "horizon") c.horizon = parse_number<int>(key, value);
    else if (key == "discount") c.discount = parse_number<double>(key, value);
    else if (key == "eval_every") c.eval_every = parse_number<int>(key, value);
    else if (key == "eval_start") c.eval_start = parse_number<int>(key, value);
    else if (key == "eval_episodes") c.eval_episodes = parse_number<int>(key, value);
    else if (key == "curve_eval_episodes") c.curve_eval_episodes = parse_number<int>(key, value);
    else if (key == "seeds") c.seeds = parse_number<int>(key, value);
    else if (key == "seed_base") c.seed_base = parse_number<std::uint64_t>(key, value);
    else if (key == "terminate_on_success") c.terminate_on_success = detail::parse_bool(key, value);
    else if (key == "true_state_observations") c.true_state_observations = detail::parse_bool(key, value);
    else if (key == "relabel_on_switch") c.relabel_on_switch = detail::parse_bool(key, value);
    else if (key == "out") c.out = value;
    else if (key == "tau") c.td3.tau = parse_number<double>(key, value);
    else if (key == "policy_delay") c.td3.policy_delay = parse_number<int>(key, value);
    else if (key == "target_noise_std") c.td3.target_noise_std = parse_number<double>(key, value);
    else if (key == "target_noise_clip") c.td3.target_noise_clip = parse_number<double>(key, value);
    else if (key == "exploration_noise_std") c.td3.exploration_noise_std = parse_number<double>(key, value);
    else if (key == "batch_size") c.td3.batch_size = parse_number<int>(key, value);
    else if (key == "hidden") c.td3.hidden = detail::parse_int_list(key, value);
    else if (key == "actor_lr") c.td3.actor_lr = parse_number<double>(key, value);
    else if (key == "critic_lr") c.td3.critic_lr = parse_number<double>(key, value);
    else if (key == "buffer_capacity") c.td3.buffer_capacity = parse_number<std::size_t>(key, value);
    else if (key == "warmup_steps") c.td3.warmup_steps = parse_number<int>(key, value);
    else throw ConfigError("config: unknown key '" + key + "'");
}

/// Parses flat UTF-8 `key = value` lines; `#` starts a comment.
inline void apply_config_text(ExperimentConfig& c, std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = detail::trim(std::string_view(t).substr(0, eq));
        const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        apply_setting(c, key, value);
    }
}

inline void load_config_file(ExperimentConfig& c, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot read '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    apply_config_text(c, ss.str());
}

/// Fully resolved configuration in config-file syntax.
inline std::string to_config_text(const ExperimentConfig& c) {
    using detail::format_double;
    std::ostringstream o;
    std::string hidden;
    for (std::size_t i = 0; i < c.td3.hidden.size(); ++i)
        hidden += (i ? "," : "") + std::to_string(c.td3.hidden[i]);
    o << "task = " << to_string(c.task) << '\n'
      << "reward_mode = " << to_string(c.reward) << '\n'
      << "switch_episode = " << c.resolved_switch_episode() << '\n'
      << "shift_deg = " << format_double(c.shift_deg) << '\n'
      << "target_mean_error = " << format_double(c.target_mean_error) << '\n'
      << "total_episodes = " << c.total_episodes << '\n'
      << "horizon = " << c.horizon << '\n'
      << "discount = " << format_double(c.discount) << '\n'
      << "eval_every = " << c.eval_every << '\n'
      << "eval_start = " << c.eval_start << '\n'
      << "eval_episodes = " << c.eval_episodes << '\n'
      << "curve_eval_episodes = " << c.curve_eval_episodes << '\n'
      << "seeds = " << c.seeds << '\n'
      << "seed_base = " << c.seed_base << '\n'
      << "terminate_on_success = " << (c.terminate_on_success ? "true" : "false") << '\n'
      << "true_state_observations = " << (c.true_state_observations ? "true" : "false") << '\n'
      << "relabel_on_switch = " << (c.relabel_on_switch ? "true" : "false") << '\n'
      << "tau = " << format_double(c.td3.tau) << '\n'
      << "policy_delay = " << c.td3.policy_delay << '\n'
      << "target_noise_std = " << format_double(c.td3.target_noise_std) << '\n'
      << "target_noise_clip = " << format_double(c.td3.target_noise_clip) << '\n'
      << "exploration_noise_std = " << format_double(c.td3.exploration_noise_std) << '\n'
      << "batch_size = " << c.td3.batch_size << '\n'
      << "hidden = " << hidden << '\n'
      << "actor_lr = " << format_double(c.td3.actor_lr) << '\n'
      << "critic_lr = " << format_double(c.td3.critic_lr) << '\n'
      << "buffer_capacity = " << c.td3.buffer_capacity << '\n'
      << "warmup_steps = " << c.td3.warmup_steps << '\n';
    return o.str();
}

}  // namespace d2s
