#pragma once

// TD3 (twin delayed deep deterministic policy gradient): twin critics with a
// clipped double-Q target, target policy smoothing, delayed actor updates and
// Polyak-averaged target networks.

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "d2s/errors.hpp"
#include "d2s/nncore.hpp"
#include "d2s/rng.hpp"

namespace d2s {

struct Td3Config {
    double gamma = 0.9;
    double tau = 0.005;
    int policy_delay = 2;
    double target_noise_std = 0.2;
    double target_noise_clip = 0.5;
    double exploration_noise_std = 0.1;
    int batch_size = 256;
    std::vector<int> hidden{64, 64};
    double actor_lr = 3e-4;
    double critic_lr = 3e-4;
    std::size_t buffer_capacity = 200000;
    int warmup_steps = 1000;

    void validate() const {
        if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("td3: gamma must lie in [0, 1)");
        if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("td3: tau must lie in [0, 1]");
        if (policy_delay < 1) throw ConfigError("td3: policy_delay must be >= 1");
        if (target_noise_std < 0.0 || target_noise_clip < 0.0 || exploration_noise_std < 0.0)
            throw ConfigError("td3: noise parameters must be non-negative");
        if (batch_size < 1) throw ConfigError("td3: batch_size must be >= 1");
        if (hidden.empty()) throw ConfigError("td3: need at least one hidden layer");
        for (int h : hidden)
            if (h < 1) throw ConfigError("td3: hidden sizes must be >= 1");
        if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw ConfigError("td3: learning rates must be positive");
        if (buffer_capacity < 1) throw ConfigError("td3: buffer_capacity must be >= 1");
        if (warmup_steps < 0) throw ConfigError("td3: warmup_steps must be >= 0");
    }
};

struct Transition {
    Eigen::VectorXd state;
    Eigen::VectorXd action;
    double reward = 0.0;
    Eigen::VectorXd next_state;
    bool done = false;
};

// Column-batched transitions.
struct Batch {
    Eigen::MatrixXd states;       // obs_dim x B
    Eigen::MatrixXd actions;      // act_dim x B
    Eigen::VectorXd rewards;      // B
    Eigen::MatrixXd next_states;  // obs_dim x B
    Eigen::VectorXd dones;        // B, 1.0 for terminal rows

    [[nodiscard]] Eigen::Index size() const { return rewards.size(); }
};

/// Fixed-capacity FIFO ring of transitions; sampling is uniform with replacement.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, int obs_dim, int act_dim)
        : capacity_(capacity), obs_dim_(obs_dim), act_dim_(act_dim) {
        if (capacity == 0) throw ConfigError("ReplayBuffer: capacity must be positive");
        if (obs_dim < 1 || act_dim < 1) throw ConfigError("ReplayBuffer: dimensions must be positive");
    }

    void push(const Transition& t) {
        if (t.state.size() != obs_dim_ || t.next_state.size() != obs_dim_ || t.action.size() != act_dim_)
            throw ShapeError("ReplayBuffer::push: transition dimensions do not match the buffer");
        if (states_.cols() == 0) allocate();
        const auto i = static_cast<Eigen::Index>(cursor_);
        states_.col(i) = t.state;
        actions_.col(i) = t.action.cwiseMax(-1.0).cwiseMin(1.0);
        rewards_[i] = t.reward;
        next_states_.col(i) = t.next_state;
        dones_[i] = t.done ? 1.0 : 0.0;
        cursor_ = (cursor_ + 1) % capacity_;
        size_ = std::min(size_ + 1, capacity_);
    }

    [[nodiscard]] Batch sample(std::size_t batch_size, Rng& rng) const {
        if (batch_size == 0) throw ConfigError("ReplayBuffer::sample: batch_size must be positive");
        if (size_ < batch_size)
            throw NotReadyError("ReplayBuffer::sample: " + std::to_string(size_) + " transitions stored, " +
                                std::to_string(batch_size) + " requested");
        const auto b = static_cast<Eigen::Index>(batch_size);
        Batch out{Eigen::MatrixXd(obs_dim_, b), Eigen::MatrixXd(act_dim_, b), Eigen::VectorXd(b),
                  Eigen::MatrixXd(obs_dim_, b), Eigen::VectorXd(b)};
        std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
        for (Eigen::Index j = 0; j < b; ++j) {
            const auto i = static_cast<Eigen::Index>(pick(rng));
            out.states.col(j) = states_.col(i);
            out.actions.col(j) = actions_.col(i);
            out.rewards[j] = rewards_[i];
            out.next_states.col(j) = next_states_.col(i);
            out.dones[j] = dones_[i];
        }
        return out;
    }

    /// Transition at ring position `slot` (0 <= slot < size()).
    [[nodiscard]] Transition at(std::size_t slot) const {
        if (slot >= size_) throw std::out_of_range("ReplayBuffer::at");
        const auto i = static_cast<Eigen::Index>(slot);
        return {states_.col(i), actions_.col(i), rewards_[i], next_states_.col(i), dones_[i] != 0.0};
    }

    /// Overwrites the stored reward at ring position `slot`.
    void set_reward(std::size_t slot, double reward) {
        if (slot >= size_) throw std::out_of_range("ReplayBuffer::set_reward");
        rewards_[static_cast<Eigen::Index>(slot)] = reward;
    }

    [[nodiscard]] bool ready(std::size_t batch_size) const { return size_ >= batch_size; }
    [[nodiscard]] std::size_t size() const { return size_; }
    [[nodiscard]] std::size_t capacity() const { return capacity_; }
    [[nodiscard]] std::size_t cursor() const { return cursor_; }

private:
    void allocate() {
        const auto c = static_cast<Eigen::Index>(capacity_);
        states_.resize(obs_dim_, c);
        actions_.resize(act_dim_, c);
        rewards_.resize(c);
        next_states_.resize(obs_dim_, c);
        dones_.resize(c);
    }

    std::size_t capacity_;
    int obs_dim_;
    int act_dim_;
    std::size_t cursor_ = 0;
    std::size_t size_ = 0;
    Eigen::MatrixXd states_, actions_, next_states_;
    Eigen::VectorXd rewards_, dones_;
};

struct Td3Agent {
    Td3Config config;
    int obs_dim = 0;
    int act_dim = 0;
    nn::MlpParams actor, actor_target;
    nn::MlpParams critic1, critic2, critic1_target, critic2_target;
    nn::AdamState actor_opt, critic1_opt, critic2_opt;
    long update_count = 0;
    long actor_update_count = 0;
};

/// Actor: obs -> hidden... -> act (tanh). Critics: [obs; act] -> hidden... -> 1.
/// Target networks start as exact copies of their online networks.
inline Td3Agent make_td3_agent(int obs_dim, int act_dim, const Td3Config& cfg, Rng& init_rng) {
    cfg.validate();
    if (obs_dim < 1 || act_dim < 1) throw ConfigError("td3: dimensions must be positive");
    Td3Agent a;
    a.config = cfg;
    a.obs_dim = obs_dim;
    a.act_dim = act_dim;

    std::vector<int> actor_sizes{obs_dim};
    actor_sizes.insert(actor_sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    actor_sizes.push_back(act_dim);
    std::vector<int> critic_sizes{obs_dim + act_dim};
    critic_sizes.insert(critic_sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    critic_sizes.push_back(1);

    a.actor = nn::mlp_init(actor_sizes, nn::Activation::relu, nn::Activation::tanh, init_rng);
    a.critic1 = nn::mlp_init(critic_sizes, nn::Activation::relu, nn::Activation::identity, init_rng);
    a.critic2 = nn::mlp_init(critic_sizes, nn::Activation::relu, nn::Activation::identity, init_rng);
    a.actor_target = a.actor;
    a.critic1_target = a.critic1;
    a.critic2_target = a.critic2;
    a.actor_opt = nn::adam_init(a.actor, cfg.actor_lr);
    a.critic1_opt = nn::adam_init(a.critic1, cfg.critic_lr);
    a.critic2_opt = nn::adam_init(a.critic2, cfg.critic_lr);
    return a;
}

namespace detail {

inline Eigen::MatrixXd stack_rows(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
    Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
    out << top, bottom;
    return out;
}

inline void check_batch(const Td3Agent& a, const Batch& b) {
    if (b.size() == 0) throw ShapeError("td3: empty batch");
    if (b.states.rows() != a.obs_dim || b.next_states.rows() != a.obs_dim || b.actions.rows() != a.act_dim ||
        b.states.cols() != b.size() || b.next_states.cols() != b.size() || b.actions.cols() != b.size() ||
        b.dones.size() != b.size())
        throw ShapeError("td3: batch dimensions do not match the agent");
}

}  // namespace detail

/// Deterministic policy output, plus N(0, exploration_noise_std) per entry when
/// `explore` is set; every entry is clamped to [-1, 1].
inline Eigen::VectorXd select_action(const Td3Agent& a, const Eigen::VectorXd& obs, bool explore, Rng& rng) {
    if (obs.size() != a.obs_dim) throw ShapeError("select_action: observation dimension mismatch");
    Eigen::VectorXd act = nn::mlp_predict(a.actor, obs);
    if (explore) {
        for (Eigen::Index i = 0; i < act.size(); ++i) act[i] += gaussian(rng, a.config.exploration_noise_std);
    }
    return act.cwiseMax(-1.0).cwiseMin(1.0);
}

/// Smoothed target actions for a batch of next states (also used by tests).
inline Eigen::MatrixXd smoothed_target_actions(const Td3Agent& a, const Eigen::MatrixXd& next_states, Rng& rng) {
    Eigen::MatrixXd act = nn::mlp_predict(a.actor_target, next_states);
    const double clip = a.config.target_noise_clip;
    for (Eigen::Index j = 0; j < act.cols(); ++j)
        for (Eigen::Index i = 0; i < act.rows(); ++i)
            act(i, j) += std::clamp(gaussian(rng, a.config.target_noise_std), -clip, clip);
    return act.cwiseMax(-1.0).cwiseMin(1.0);
}

/// y = r + (1 - done) * gamma * min(Q1'(s', a~), Q2'(s', a~)).
inline Eigen::VectorXd compute_targets(const Td3Agent& a, const Batch& b, Rng& rng) {
    detail::check_batch(a, b);
    const Eigen::MatrixXd next_act = smoothed_target_actions(a, b.next_states, rng);
    const Eigen::MatrixXd critic_in = detail::stack_rows(b.next_states, next_act);
    const Eigen::RowVectorXd q1 = nn::mlp_predict(a.critic1_target, critic_in).row(0);
    const Eigen::RowVectorXd q2 = nn::mlp_predict(a.critic2_target, critic_in).row(0);
    const Eigen::VectorXd qmin = q1.cwiseMin(q2).transpose();
    return b.rewards + a.config.gamma * (1.0 - b.dones.array()).matrix().cwiseProduct(qmin);
}

/// One Adam step on each critic towards `targets` (mean squared error).
/// Returns the summed MSE of both critics measured before the step.
inline double update_critics(Td3Agent& a, const Batch& b, const Eigen::VectorXd& targets) {
    detail::check_batch(a, b);
    if (targets.size() != b.size()) throw ShapeError("update_critics: targets length differs from batch size");
    const Eigen::MatrixXd critic_in = detail::stack_rows(b.states, b.actions);
    const double n = static_cast<double>(b.size());
    double loss = 0.0;
    auto fit = [&](nn::MlpParams& critic, nn::AdamState& opt) {
        auto [q, cache] = nn::mlp_forward(critic, critic_in);
        const Eigen::RowVectorXd err = q.row(0) - targets.transpose();
        loss += err.squaredNorm() / n;
        const Eigen::MatrixXd grad_out = (2.0 / n) * err;
        const auto back = nn::mlp_backward(critic, cache, grad_out);
        nn::adam_step(critic, back.params, opt);
    };
    fit(a.critic1, a.critic1_opt);
    fit(a.critic2, a.critic2_opt);
    return loss;
}

/// One Adam step on the actor ascending mean Q1(s, actor(s)), then Polyak
/// updates of all three target networks. Returns the actor loss -mean Q1.
inline double update_actor_and_targets(Td3Agent& a, const Batch& b) {
    detail::check_batch(a, b);
    const double n = static_cast<double>(b.size());
    auto [act, actor_cache] = nn::mlp_forward(a.actor, b.states);
    const Eigen::MatrixXd critic_in = detail::stack_rows(b.states, act);
    auto [q, critic_cache] = nn::mlp_forward(a.critic1, critic_in);
    const double actor_loss = -q.mean();

    const Eigen::MatrixXd grad_q = Eigen::MatrixXd::Constant(1, b.size(), -1.0 / n);
    const auto critic_back = nn::mlp_backward(a.critic1, critic_cache, grad_q);
    const Eigen::MatrixXd grad_act = critic_back.input.bottomRows(a.act_dim);
    const auto actor_back = nn::mlp_backward(a.actor, actor_cache, grad_act);
    nn::adam_step(a.actor, actor_back.params, a.actor_opt);

    nn::polyak_update(a.actor_target, a.actor, a.config.tau);
    nn::polyak_update(a.critic1_target, a.critic1, a.config.tau);
    nn::polyak_update(a.critic2_target, a.critic2, a.config.tau);
    ++a.actor_update_count;
    return actor_loss;
}

struct TrainDiagnostics {
    double critic_loss = 0.0;
    double actor_loss = 0.0;  // meaningful only when actor_updated
    bool actor_updated = false;
    long update_count = 0;
};

/// sample -> compute_targets -> update_critics -> (every policy_delay-th call)
/// update_actor_and_targets. Throws NotReadyError, leaving the agent untouched,
/// when the buffer holds fewer than batch_size transitions.
inline TrainDiagnostics train_step(Td3Agent& a, const ReplayBuffer& buffer, Rng& rng) {
    const auto bs = static_cast<std::size_t>(a.config.batch_size);
    if (!buffer.ready(bs))
        throw NotReadyError("train_step: buffer holds " + std::to_string(buffer.size()) + " of " +
                            std::to_string(bs) + " transitions");
    const Batch batch = buffer.sample(bs, rng);
    const Eigen::VectorXd y = compute_targets(a, batch, rng);
    TrainDiagnostics d;
    d.critic_loss = update_critics(a, batch, y);
    ++a.update_count;
    if (a.update_count % a.config.policy_delay == 0) {
        d.actor_loss = update_actor_and_targets(a, batch);
        d.actor_updated = true;
    }
    d.update_count = a.update_count;
    return d;
}

}  // namespace d2s
