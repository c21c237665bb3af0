#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dlca/medium.hpp"
#include "dlca/qnn.hpp"
#include "dlca/rng.hpp"

namespace dlca {

struct Hyperparams {
  double rho = 0.001;
  double gamma = 0.9;
  double epsilon = 0.05;
  double eta = 0.5;
  int history = 20;
  int batch = 32;
  int buffer_capacity = 10000;
  double apc_period_ms = 100.0;

  void validate() const {
    if (!(rho > 0.0)) throw ConfigError("hyperparams: rho must be > 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("hyperparams: gamma must be in (0, 1]");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("hyperparams: epsilon must be in [0, 1]");
    if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("hyperparams: eta must be in [0, 1]");
    if (history < 1) throw ConfigError("hyperparams: history must be >= 1");
    if (batch < 1) throw ConfigError("hyperparams: batch must be >= 1");
    if (buffer_capacity < batch) throw ConfigError("hyperparams: buffer_capacity must be >= batch");
    if (!(apc_period_ms > 0.0)) throw ConfigError("hyperparams: apc_period_ms must be > 0");
  }

  std::size_t state_width() const { return 2 * static_cast<std::size_t>(history) + 1; }
};

/// One slot of an agent's past: what it did and what its primary channel looked like.
struct HistoryEntry {
  int action = 0;      // 1 contend, 0 wait
  int observation = 0; // 1 busy, 0 idle
  int feedback = 0;    // +1 Ack/Cts, -1 Timeout; 0 when the AP waited
};

/// MDP state of one AP: the last L (action, observation) pairs plus c.
class AgentState {
public:
  explicit AgentState(int history = 20) : length_(history) {
    if (history < 1) throw std::invalid_argument("AgentState: history must be >= 1");
  }

  int length() const { return length_; }
  int contender_count() const { return contenders_; }
  void set_contender_count(int c) {
    if (c < 1) throw std::invalid_argument("AgentState: contender count must be >= 1");
    contenders_ = c;
  }

  const std::deque<HistoryEntry>& entries() const { return entries_; }
  bool warmed_up() const { return static_cast<int>(entries_.size()) == length_; }

  void push(HistoryEntry e) {
    entries_.push_back(e);
    if (static_cast<int>(entries_.size()) > length_) entries_.pop_front();
  }

  void reset() { entries_.clear(); }

private:
  int length_;
  int contenders_ = 1;
  std::deque<HistoryEntry> entries_; // oldest first
};

/// Interleaved (a, o) history, oldest first and zero-padded at the old end,
/// followed by c / N.
inline void encode_state(const AgentState& s, int aps, std::span<double> out) {
  const std::size_t width = 2 * static_cast<std::size_t>(s.length()) + 1;
  if (out.size() != width) throw std::invalid_argument("encode_state: output has wrong width");
  if (aps < 1) throw std::invalid_argument("encode_state: N must be >= 1");
  std::fill(out.begin(), out.end(), 0.0);
  const auto& h = s.entries();
  const std::size_t pad = static_cast<std::size_t>(s.length()) - h.size();
  for (std::size_t i = 0; i < h.size(); ++i) {
    out[2 * (pad + i)] = h[i].action;
    out[2 * (pad + i) + 1] = h[i].observation;
  }
  out[width - 1] = static_cast<double>(s.contender_count()) / aps;
}

inline std::vector<double> encode_state(const AgentState& s, int aps) {
  std::vector<double> v(2 * static_cast<std::size_t>(s.length()) + 1);
  encode_state(s, aps, v);
  return v;
}

/// Monte-Carlo style reward. For a transmit action the feedbacks of the
/// transmit actions in the window (oldest first, current one last) are folded
/// as r = eta * r + y, so the newest counts fully and older ones decay.
/// Waiting is rewarded when somebody else used the channel.
inline double estimate_reward(int action, std::span<const int> transmit_feedbacks,
                              int next_observation, double eta) {
  if (action == 0) return next_observation == 1 ? 1.0 : -1.0;
  double r = 0.0;
  for (int y : transmit_feedbacks) r = eta * r + (y > 0 ? 1.0 : -1.0);
  return r;
}

/// Reward over an entry window whose last element is the current slot.
inline double estimate_reward(std::span<const HistoryEntry> window, double eta) {
  const auto& now = window.back();
  if (now.action == 0) return now.observation == 1 ? 1.0 : -1.0;
  double r = 0.0;
  for (const auto& e : window) {
    if (e.action != 1) continue;
    r = eta * r + (e.feedback > 0 ? 1.0 : -1.0);
  }
  return r;
}

/// Epsilon-greedy over (Q(wait), Q(contend)); ties go to contend.
inline int select_action(std::span<const double> q, double epsilon, RngStream& rng) {
  if (epsilon > 0.0 && rng.bernoulli(epsilon)) return static_cast<int>(rng.below(2));
  return q[1] >= q[0] ? 1 : 0;
}

struct Transition {
  std::vector<double> state;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
};

/// Fixed-capacity FIFO of transitions stored in flat arrays.
class ReplayBuffer {
public:
  ReplayBuffer(std::size_t capacity, std::size_t state_width)
      : capacity_(capacity), width_(state_width), states_(capacity * state_width),
        next_states_(capacity * state_width), actions_(capacity), rewards_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be > 0");
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t state_width() const { return width_; }

  void push(std::span<const double> s, int action, double reward, std::span<const double> next) {
    if (s.size() != width_ || next.size() != width_)
      throw std::invalid_argument("ReplayBuffer: state has wrong width");
    const std::size_t slot = (head_ + size_) % capacity_;
    std::copy(s.begin(), s.end(), states_.begin() + static_cast<std::ptrdiff_t>(slot * width_));
    std::copy(next.begin(), next.end(),
              next_states_.begin() + static_cast<std::ptrdiff_t>(slot * width_));
    actions_[slot] = action;
    rewards_[slot] = reward;
    if (size_ < capacity_) {
      ++size_;
    } else {
      head_ = (head_ + 1) % capacity_;
    }
  }

  void push(const Transition& t) { push(t.state, t.action, t.reward, t.next_state); }

  /// i = 0 is the oldest stored transition.
  Transition at(std::size_t i) const {
    if (i >= size_) throw std::out_of_range("ReplayBuffer: index");
    const std::size_t slot = (head_ + i) % capacity_;
    const auto b = states_.begin() + static_cast<std::ptrdiff_t>(slot * width_);
    const auto nb = next_states_.begin() + static_cast<std::ptrdiff_t>(slot * width_);
    return {{b, b + static_cast<std::ptrdiff_t>(width_)},
            actions_[slot],
            rewards_[slot],
            {nb, nb + static_cast<std::ptrdiff_t>(width_)}};
  }

  /// Appends stored transition i to a batch.
  void append_to(std::size_t i, qnn::Batch& batch) const {
    const std::size_t slot = (head_ + i) % capacity_;
    const auto b = states_.begin() + static_cast<std::ptrdiff_t>(slot * width_);
    const auto nb = next_states_.begin() + static_cast<std::ptrdiff_t>(slot * width_);
    batch.states.insert(batch.states.end(), b, b + static_cast<std::ptrdiff_t>(width_));
    batch.next_states.insert(batch.next_states.end(), nb, nb + static_cast<std::ptrdiff_t>(width_));
    batch.actions.push_back(actions_[slot]);
    batch.rewards.push_back(rewards_[slot]);
  }

  /// k distinct indices drawn uniformly (Floyd's algorithm), in draw order.
  static std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, RngStream& rng) {
    if (k > n) throw std::invalid_argument("ReplayBuffer: sample larger than population");
    std::vector<std::size_t> picked;
    picked.reserve(k);
    for (std::size_t j = n - k; j < n; ++j) {
      const auto t = static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(j) + 1));
      if (std::find(picked.begin(), picked.end(), t) == picked.end()) {
        picked.push_back(t);
      } else {
        picked.push_back(j);
      }
    }
    return picked;
  }

  void sample(std::size_t k, RngStream& rng, qnn::Batch& batch) const {
    batch.clear(width_);
    for (auto i : sample_indices(size_, k, rng)) append_to(i, batch);
  }

private:
  std::size_t capacity_;
  std::size_t width_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  std::vector<double> states_;
  std::vector<double> next_states_;
  std::vector<int> actions_;
  std::vector<double> rewards_;
};

/// A DLCA access point: picks an action every contention slot and learns from
/// the slot's outcome.
class Agent {
public:
  Agent(const Hyperparams& hp, qnn::QnnParams params, RngStream rng)
      : hp_(hp), params_(std::move(params)), rng_(std::move(rng)), state_(hp.history),
        window_(), buffer_(static_cast<std::size_t>(hp.buffer_capacity), hp.state_width()),
        current_(hp.state_width()), next_(hp.state_width()) {
    if (params_.architecture().input_width() != hp.state_width())
      throw ConfigError("agent: network input width does not match the history length");
  }

  /// Chooses this slot's action given the contender count the APC announced.
  int act(int contenders, int aps) {
    state_.set_contender_count(contenders);
    aps_ = aps;
    encode_state(state_, aps_, current_);
    auto q = qnn::forward_batch(params_, current_, 1, ws_);
    last_q_[0] = q[0];
    last_q_[1] = q[1];
    return select_action(last_q_, hp_.epsilon, rng_);
  }

  /// Records the slot's result, stores the transition and takes one training
  /// step when the buffer holds a full batch. Returns the reward.
  double observe(int action, Feedback feedback, int observation) {
    HistoryEntry e;
    e.action = action;
    e.observation = observation;
    if (action == 1) e.feedback = (feedback == Feedback::Ack || feedback == Feedback::Cts) ? 1 : -1;

    state_.push(e);
    const auto& h = state_.entries();
    window_.assign(h.begin(), h.end());
    const double reward = estimate_reward(window_, hp_.eta);

    encode_state(state_, aps_, next_);
    buffer_.push(current_, action, reward, next_);
    if (training_ && buffer_.size() >= static_cast<std::size_t>(hp_.batch)) {
      buffer_.sample(static_cast<std::size_t>(hp_.batch), rng_, batch_);
      last_loss_ = qnn::semi_gradient_update(params_, batch_, hp_.rho, hp_.gamma, ws_);
    }
    return reward;
  }

  const qnn::QnnParams& params() const { return params_; }
  void set_params(qnn::QnnParams p) { params_ = std::move(p); }
  const ReplayBuffer& buffer() const { return buffer_; }
  const AgentState& state() const { return state_; }
  std::span<const double> last_q() const { return last_q_; }
  std::optional<double> last_loss() const { return last_loss_; }
  void set_training(bool on) { training_ = on; }
  RngStream& rng() { return rng_; }

private:
  Hyperparams hp_;
  qnn::QnnParams params_;
  RngStream rng_;
  AgentState state_;
  std::vector<HistoryEntry> window_;
  ReplayBuffer buffer_;
  qnn::Workspace ws_;
  qnn::Batch batch_;
  std::vector<double> current_;
  std::vector<double> next_;
  double last_q_[2] = {0.0, 0.0};
  std::optional<double> last_loss_;
  int aps_ = 1;
  bool training_ = true;
};

} // namespace dlca
