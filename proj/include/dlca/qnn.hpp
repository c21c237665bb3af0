#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dlca/rng.hpp"

namespace dlca::qnn {

/// Layer widths from input to output; hidden layers use ReLU, the last is linear.
struct Architecture {
  std::vector<std::size_t> widths;

  /// 41 inputs, four hidden layers of 64, two Q-values (wait, contend).
  static Architecture standard(std::size_t inputs = 41) { return {{inputs, 64, 64, 64, 64, 2}}; }

  std::size_t layers() const { return widths.empty() ? 0 : widths.size() - 1; }
  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  std::size_t max_width() const { return *std::max_element(widths.begin(), widths.end()); }

  std::size_t weight_offset(std::size_t layer) const {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l) off += widths[l + 1] * (widths[l] + 1);
    return off;
  }
  std::size_t bias_offset(std::size_t layer) const {
    return weight_offset(layer) + widths[layer + 1] * widths[layer];
  }
  std::size_t parameter_count() const { return weight_offset(layers()); }

  bool operator==(const Architecture&) const = default;
};

class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Flat storage of every weight and bias. Weights of layer l are stored
/// input-major, w[i * n_out + j] connecting input i to unit j, followed by
/// that layer's biases.
template <class Tag>
class ParameterBlock {
public:
  ParameterBlock() = default;
  explicit ParameterBlock(Architecture arch)
      : arch_(std::move(arch)), values_(arch_.parameter_count(), 0.0) {}

  const Architecture& architecture() const { return arch_; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::span<double> weights(std::size_t l) {
    return {values_.data() + arch_.weight_offset(l), arch_.widths[l + 1] * arch_.widths[l]};
  }
  std::span<const double> weights(std::size_t l) const {
    return {values_.data() + arch_.weight_offset(l), arch_.widths[l + 1] * arch_.widths[l]};
  }
  std::span<double> biases(std::size_t l) {
    return {values_.data() + arch_.bias_offset(l), arch_.widths[l + 1]};
  }
  std::span<const double> biases(std::size_t l) const {
    return {values_.data() + arch_.bias_offset(l), arch_.widths[l + 1]};
  }

  template <class Other>
  bool congruent(const ParameterBlock<Other>& other) const {
    return arch_ == other.architecture();
  }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  bool operator==(const ParameterBlock&) const = default;

private:
  Architecture arch_;
  std::vector<double> values_;
};

struct ParamsTag {};
struct GradientTag {};
using QnnParams = ParameterBlock<ParamsTag>;
using GradientSet = ParameterBlock<GradientTag>;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
inline QnnParams initialize(const Architecture& arch, RngStream& rng) {
  QnnParams p(arch);
  for (std::size_t l = 0; l < arch.layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(arch.widths[l]));
    for (auto& w : p.weights(l)) w = rng.uniform(-bound, bound);
    for (auto& b : p.biases(l)) b = rng.uniform(-bound, bound);
  }
  return p;
}

/// Scratch buffers for batched passes; reuse one per thread.
class Workspace {
public:
  void prepare(const Architecture& arch, std::size_t batch) {
    if (arch == arch_ && batch <= capacity_) {
      batch_ = batch;
      return;
    }
    arch_ = arch;
    capacity_ = std::max(batch, capacity_);
    batch_ = batch;
    act_.resize(arch.widths.size());
    for (std::size_t l = 0; l < arch.widths.size(); ++l)
      act_[l].assign(capacity_ * arch.widths[l], 0.0);
    delta_.assign(capacity_ * arch.max_width(), 0.0);
    delta_prev_.assign(capacity_ * arch.max_width(), 0.0);
  }

  std::size_t batch() const { return batch_; }
  std::vector<double>& activation(std::size_t l) { return act_[l]; }
  std::span<const double> outputs() const {
    return {act_.back().data(), batch_ * arch_.output_width()};
  }
  std::vector<double>& delta() { return delta_; }
  std::vector<double>& delta_prev() { return delta_prev_; }

  /// Zeroed gradient buffer shaped like `arch`, reused across updates.
  GradientSet& zeroed_gradient(const Architecture& arch) {
    if (!(grad_.architecture() == arch)) grad_ = GradientSet(arch);
    grad_.fill(0.0);
    return grad_;
  }

private:
  Architecture arch_;
  std::size_t capacity_ = 0;
  std::size_t batch_ = 0;
  std::vector<std::vector<double>> act_;
  std::vector<double> delta_;
  std::vector<double> delta_prev_;
  GradientSet grad_;
};

namespace detail {

inline double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

inline void axpy(double* y, double alpha, const double* x, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// Hidden width the register-blocked kernels below are specialised for.
inline constexpr std::size_t kTile = 64;

inline void affine_tile(double* y, const double* bias, const double* w, const double* x,
                        std::size_t n_in, bool relu) {
  double acc[kTile];
  for (std::size_t j = 0; j < kTile; ++j) acc[j] = bias[j];
  // binary inputs and ReLU outputs are mostly zero, so skip those rows
  for (std::size_t i = 0; i < n_in; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = w + i * kTile;
#pragma omp simd
    for (std::size_t j = 0; j < kTile; ++j) acc[j] += xi * row[j];
  }
  for (std::size_t j = 0; j < kTile; ++j) y[j] = relu ? std::max(acc[j], 0.0) : acc[j];
}

// g += sum_b x[b * stride] * d[b * kTile .. +kTile]
inline void outer_tile(double* g, const double* x, std::size_t stride, const double* d,
                       std::size_t batch) {
  double acc[kTile];
  for (std::size_t j = 0; j < kTile; ++j) acc[j] = g[j];
  for (std::size_t b = 0; b < batch; ++b) {
    const double xb = x[b * stride];
    if (xb == 0.0) continue;
    const double* row = d + b * kTile;
#pragma omp simd
    for (std::size_t j = 0; j < kTile; ++j) acc[j] += xb * row[j];
  }
  for (std::size_t j = 0; j < kTile; ++j) g[j] = acc[j];
}

inline void check_finite(std::span<const double> input) {
  for (double v : input)
    if (!std::isfinite(v)) throw std::invalid_argument("qnn: non-finite input");
}

} // namespace detail

/// Batched forward pass; `inputs` holds `batch` rows of input_width values.
/// Returns batch x output_width Q-values (a view into the workspace).
inline std::span<const double> forward_batch(const QnnParams& p, std::span<const double> inputs,
                                             std::size_t batch, Workspace& ws) {
  const auto& arch = p.architecture();
  if (inputs.size() != batch * arch.input_width())
    throw ShapeError("qnn: input batch has wrong size");
  detail::check_finite(inputs);
  ws.prepare(arch, batch);
  std::copy(inputs.begin(), inputs.end(), ws.activation(0).begin());

  const std::size_t layers = arch.layers();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t n_in = arch.widths[l];
    const std::size_t n_out = arch.widths[l + 1];
    const double* w = p.weights(l).data();
    const double* bias = p.biases(l).data();
    const double* in = ws.activation(l).data();
    double* out = ws.activation(l + 1).data();
    const bool hidden = l + 1 < layers;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* x = in + b * n_in;
      double* y = out + b * n_out;
      if (n_out == detail::kTile) {
        detail::affine_tile(y, bias, w, x, n_in, hidden);
        continue;
      }
      std::copy(bias, bias + n_out, y);
      // binary inputs and ReLU outputs are mostly zero, so skip those rows
      for (std::size_t i = 0; i < n_in; ++i)
        if (x[i] != 0.0) detail::axpy(y, x[i], w + i * n_out, n_out);
      if (hidden)
        for (std::size_t j = 0; j < n_out; ++j) y[j] = std::max(y[j], 0.0);
    }
  }
  return ws.outputs();
}

/// Single-state forward pass.
inline std::vector<double> forward(const QnnParams& p, std::span<const double> input) {
  Workspace ws;
  auto out = forward_batch(p, input, 1, ws);
  return {out.begin(), out.end()};
}

/// After forward_batch on the same workspace: grad += sum_b coeff[b] * dQ(s_b, a_b)/dtheta.
inline void accumulate_q_gradient(const QnnParams& p, std::span<const int> actions,
                                  std::span<const double> coeffs, GradientSet& grad,
                                  Workspace& ws) {
  const auto& arch = p.architecture();
  if (!grad.congruent(p)) throw ShapeError("qnn: gradient shape mismatch");
  const std::size_t batch = ws.batch();
  const std::size_t layers = arch.layers();
  const std::size_t n_last = arch.output_width();

  auto* delta = ws.delta().data();
  auto* delta_prev = ws.delta_prev().data();
  std::fill(delta, delta + batch * n_last, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    delta[b * n_last + static_cast<std::size_t>(actions[b])] = coeffs[b];

  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t n_in = arch.widths[l];
    const std::size_t n_out = arch.widths[l + 1];
    const double* in = ws.activation(l).data();
    const double* w = p.weights(l).data();
    double* gw = grad.weights(l).data();
    double* gb = grad.biases(l).data();

    for (std::size_t b = 0; b < batch; ++b) detail::axpy(gb, 1.0, delta + b * n_out, n_out);
    if (n_out == detail::kTile) {
      for (std::size_t i = 0; i < n_in; ++i)
        detail::outer_tile(gw + i * n_out, in + i, n_in, delta, batch);
    } else {
      for (std::size_t b = 0; b < batch; ++b) {
        const double* d = delta + b * n_out;
        const double* x = in + b * n_in;
        for (std::size_t i = 0; i < n_in; ++i)
          if (x[i] != 0.0) detail::axpy(gw + i * n_out, x[i], d, n_out);
      }
    }
    if (l == 0) break;

    // ReLU passes gradient only where the unit was active
    for (std::size_t b = 0; b < batch; ++b) {
      const double* d = delta + b * n_out;
      const double* x = in + b * n_in;
      double* dp = delta_prev + b * n_in;
      for (std::size_t i = 0; i < n_in; ++i)
        dp[i] = x[i] > 0.0 ? detail::dot(w + i * n_out, d, n_out) : 0.0;
    }
    std::swap(delta, delta_prev);
  }
}

/// v = r + gamma * max_a' Q(s', a').
inline double target_value(double reward, std::span<const double> next_q, double gamma) {
  return reward + gamma * *std::max_element(next_q.begin(), next_q.end());
}

/// A sampled mini-batch of transitions with states already encoded.
struct Batch {
  std::size_t dim = 0;
  std::vector<double> states;
  std::vector<double> next_states;
  std::vector<int> actions;
  std::vector<double> rewards;

  std::size_t size() const { return actions.size(); }

  void clear(std::size_t d) {
    dim = d;
    states.clear();
    next_states.clear();
    actions.clear();
    rewards.clear();
  }
};

/// grad += sum_b (v_b - Q(s_b, a_b)) * dQ(s_b, a_b), with v_b held fixed at the
/// current parameters. Returns the sum of squared TD errors.
inline double accumulate_semi_gradient(const QnnParams& p, const Batch& batch, double gamma,
                                       GradientSet& grad, Workspace& ws) {
  const std::size_t n = batch.size();
  const std::size_t outs = p.architecture().output_width();
  std::vector<double> targets(n);
  auto next_q = forward_batch(p, batch.next_states, n, ws);
  for (std::size_t b = 0; b < n; ++b)
    targets[b] = target_value(batch.rewards[b], next_q.subspan(b * outs, outs), gamma);

  auto q = forward_batch(p, batch.states, n, ws);
  std::vector<double> coeffs(n);
  double sq = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    coeffs[b] = targets[b] - q[b * outs + static_cast<std::size_t>(batch.actions[b])];
    sq += coeffs[b] * coeffs[b];
  }
  if (!std::isfinite(sq)) throw DivergenceError("qnn: non-finite TD error");
  accumulate_q_gradient(p, batch.actions, coeffs, grad, ws);
  return sq;
}

/// theta += rho * mean_b (v_b - Q) dQ. Returns the mean squared TD error.
/// Nothing is modified when the loss is non-finite.
inline double semi_gradient_update(QnnParams& p, const Batch& batch, double rho, double gamma,
                                   Workspace& ws) {
  if (!(rho > 0.0)) throw std::invalid_argument("qnn: step size must be positive");
  if (batch.size() == 0) throw std::invalid_argument("qnn: empty batch");
  GradientSet& grad = ws.zeroed_gradient(p.architecture());
  const double sq = accumulate_semi_gradient(p, batch, gamma, grad, ws);
  const double scale = rho / static_cast<double>(batch.size());
  auto theta = p.values();
  auto g = grad.values();
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += scale * g[i];
  return sq / static_cast<double>(batch.size());
}

/// Element-wise arithmetic mean.
inline QnnParams average_params(std::span<const QnnParams> nets) {
  if (nets.empty()) throw ShapeError("qnn: nothing to average");
  QnnParams mean(nets.front().architecture());
  // extended-precision sums keep the result within an ulp of the exact mean
  // and make the mean of identical nets equal to that net
  std::vector<long double> acc(mean.values().size(), 0.0L);
  for (const auto& net : nets) {
    if (!net.congruent(mean)) throw ShapeError("qnn: averaging nets of different shapes");
    auto v = net.values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }
  const auto n = static_cast<long double>(nets.size());
  auto out = mean.values();
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<double>(acc[i] / n);
  return mean;
}

// Snapshot format, all integers and reals little-endian:
//   "QNNP" u32 version=1, u32 width count, u64 widths..., u64 value count, f64 values...
namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t x, int bytes = 8) {
  for (int i = 0; i < bytes; ++i) os.put(static_cast<char>((x >> (8 * i)) & 0xffu));
}

inline std::uint64_t get_u64(std::istream& is, int bytes = 8) {
  std::uint64_t x = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw std::runtime_error("qnn: truncated snapshot");
    x |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return x;
}

} // namespace detail

inline void save(std::ostream& os, const QnnParams& p) {
  os.write("QNNP", 4);
  detail::put_u64(os, 1, 4);
  const auto& w = p.architecture().widths;
  detail::put_u64(os, w.size(), 4);
  for (auto width : w) detail::put_u64(os, width);
  detail::put_u64(os, p.values().size());
  for (double v : p.values()) detail::put_u64(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw std::runtime_error("qnn: failed to write snapshot");
}

inline QnnParams load(std::istream& is) {
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::string_view(magic, 4) != "QNNP") throw std::runtime_error("qnn: bad magic");
  if (detail::get_u64(is, 4) != 1) throw std::runtime_error("qnn: unsupported version");
  Architecture arch;
  arch.widths.resize(detail::get_u64(is, 4));
  if (arch.widths.size() < 2) throw std::runtime_error("qnn: snapshot needs two or more widths");
  for (auto& w : arch.widths) w = detail::get_u64(is);
  QnnParams p(arch);
  if (detail::get_u64(is) != p.values().size())
    throw std::runtime_error("qnn: value count does not match widths");
  for (auto& v : p.values()) v = std::bit_cast<double>(detail::get_u64(is));
  return p;
}

} // namespace dlca::qnn
