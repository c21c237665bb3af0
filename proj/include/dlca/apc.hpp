#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "dlca/agent.hpp"
#include "dlca/channel.hpp"
#include "dlca/qnn.hpp"
#include "dlca/rng.hpp"

namespace dlca {

/// APC decision: each AP's primary channel and how many APs share each channel.
struct AllocationPlan {
  std::vector<int> primary_channel;   // ap -> f
  std::vector<int> per_channel_count; // f -> n(f)
  std::int64_t epoch = 0;

  int aps() const { return static_cast<int>(primary_channel.size()); }
  int channels() const { return static_cast<int>(per_channel_count.size()); }

  bool valid() const {
    std::vector<int> counts(per_channel_count.size(), 0);
    for (int f : primary_channel) {
      if (f < 0 || f >= channels()) return false;
      ++counts[static_cast<std::size_t>(f)];
    }
    return counts == per_channel_count;
  }

  static AllocationPlan from_map(std::vector<int> map, int channels, std::int64_t epoch = 0) {
    AllocationPlan plan;
    plan.primary_channel = std::move(map);
    plan.per_channel_count.assign(static_cast<std::size_t>(channels), 0);
    for (int f : plan.primary_channel) {
      if (f < 0 || f >= channels) throw ConfigError("allocation: channel index out of range");
      ++plan.per_channel_count[static_cast<std::size_t>(f)];
    }
    plan.epoch = epoch;
    return plan;
  }
};

/// Running average throughput per AP, in bits/s.
struct FairnessLedger {
  std::vector<double> avg_throughput;
  std::vector<double> instantaneous_rate; // ap -> rate credited in the last slot
  std::int64_t slot_index = 0;

  explicit FairnessLedger(int aps = 0)
      : avg_throughput(static_cast<std::size_t>(aps), 0.0),
        instantaneous_rate(static_cast<std::size_t>(aps), 0.0) {}
};

/// D_t = (1 - 1/t) D_{t-1} + x_t / t, for slot index t >= 1.
inline double update_average_throughput(double previous, std::int64_t t, double delivered) {
  if (t < 1) throw std::invalid_argument("update_average_throughput: t must be >= 1");
  const double inv = 1.0 / static_cast<double>(t);
  return (1.0 - inv) * previous + delivered * inv;
}

inline void update_average_throughput(FairnessLedger& ledger, int ap, std::int64_t t,
                                      double delivered) {
  auto& d = ledger.avg_throughput.at(static_cast<std::size_t>(ap));
  d = update_average_throughput(d, t, delivered);
  ledger.instantaneous_rate[static_cast<std::size_t>(ap)] = delivered;
  ledger.slot_index = std::max(ledger.slot_index, t);
}

/// Ledger-wide step: every AP's rate for slot t (zero for APs that sent nothing).
inline void update_average_throughput(FairnessLedger& ledger, std::int64_t t,
                                      std::span<const double> rates) {
  for (std::size_t ap = 0; ap < rates.size(); ++ap)
    update_average_throughput(ledger, static_cast<int>(ap), t, rates[ap]);
}

/// Greedy PF placement. APs are placed in ascending id. A channel nobody holds
/// yet has an unbounded proportional rate, so an AP takes the best empty
/// channel while any is left; once every channel is held it maximises
/// C(f) B / (n(f) + 1) / D. D is per AP, so it scales all of one AP's options
/// equally; a zero average is treated as one.
inline AllocationPlan greedy_pf_allocate(const ChannelModel& c, std::span<const double> avg,
                                         double bandwidth_hz, std::int64_t epoch = 0) {
  const int n_aps = c.aps();
  const int n_ch = c.channels();
  if (static_cast<int>(avg.size()) != n_aps)
    throw ConfigError("greedy_pf_allocate: ledger does not match the channel model");
  AllocationPlan plan;
  plan.primary_channel.assign(static_cast<std::size_t>(n_aps), -1);
  plan.per_channel_count.assign(static_cast<std::size_t>(n_ch), 0);
  plan.epoch = epoch;
  int empty = n_ch;
  for (int ap = 0; ap < n_aps; ++ap) {
    const double d = avg[static_cast<std::size_t>(ap)] > 0.0 ? avg[static_cast<std::size_t>(ap)] : 1.0;
    int best = -1;
    double best_score = 0.0;
    for (int f = 0; f < n_ch; ++f) {
      const int count = plan.per_channel_count[static_cast<std::size_t>(f)];
      if (empty > 0 && count > 0) continue;
      const double score = c.efficiency(ap, f) * bandwidth_hz / (count + 1) / d;
      if (best < 0 || score > best_score) {
        best = f;
        best_score = score;
      }
    }
    if (plan.per_channel_count[static_cast<std::size_t>(best)]++ == 0) --empty;
    plan.primary_channel[static_cast<std::size_t>(ap)] = best;
  }
  return plan;
}

/// AP i on channel floor(i F / N): contiguous, balanced blocks.
inline AllocationPlan fixed_block_allocation(int aps, int channels) {
  if (aps < 1 || channels < 1) throw ConfigError("fixed allocation: need N >= 1 and F >= 1");
  std::vector<int> map(static_cast<std::size_t>(aps));
  for (int i = 0; i < aps; ++i)
    map[static_cast<std::size_t>(i)] =
        static_cast<int>(static_cast<std::int64_t>(i) * channels / aps);
  return AllocationPlan::from_map(std::move(map), channels);
}

/// c^n = n(primary channel of n).
inline std::vector<int> broadcast_contender_counts(const AllocationPlan& plan) {
  std::vector<int> c(plan.primary_channel.size());
  for (std::size_t ap = 0; ap < c.size(); ++ap)
    c[ap] = plan.per_channel_count.at(static_cast<std::size_t>(plan.primary_channel[ap]));
  return c;
}

/// Proportional achievable rate of each AP under a plan: C(f) B / n(f).
inline std::vector<double> proportional_rates(const ChannelModel& c, const AllocationPlan& plan,
                                              double bandwidth_hz) {
  std::vector<double> phi(plan.primary_channel.size());
  for (std::size_t ap = 0; ap < phi.size(); ++ap) {
    const int f = plan.primary_channel[ap];
    phi[ap] = c.efficiency(static_cast<int>(ap), f) * bandwidth_hz /
              plan.per_channel_count[static_cast<std::size_t>(f)];
  }
  return phi;
}

struct FomamlResult {
  qnn::QnnParams average;   // plain element-wise mean
  qnn::QnnParams broadcast; // mean plus the global step
  bool gradient_step_applied = false;
  std::size_t batch_size = 0;
};

/// Averages every agent's network, then takes one semi-gradient step on a
/// batch drawn uniformly from the union of all replay buffers. Each sample's
/// gradient is evaluated at the network of the AP that stored it.
inline FomamlResult fomaml_round(std::span<const qnn::QnnParams> params,
                                 std::span<const ReplayBuffer* const> buffers, double rho,
                                 double gamma, std::size_t batch, RngStream& rng) {
  if (params.size() != buffers.size())
    throw std::invalid_argument("fomaml_round: one buffer per agent required");
  FomamlResult out;
  out.average = qnn::average_params(params);
  out.broadcast = out.average;

  std::vector<std::size_t> offsets(buffers.size() + 1, 0);
  for (std::size_t i = 0; i < buffers.size(); ++i) offsets[i + 1] = offsets[i] + buffers[i]->size();
  const std::size_t total = offsets.back();
  const std::size_t k = std::min(batch, total);
  if (k == 0) return out;

  std::vector<std::vector<std::size_t>> by_ap(buffers.size());
  for (auto g : ReplayBuffer::sample_indices(total, k, rng)) {
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), g);
    const auto ap = static_cast<std::size_t>(it - offsets.begin()) - 1;
    by_ap[ap].push_back(g - offsets[ap]);
  }

  qnn::GradientSet grad(out.average.architecture());
  qnn::Workspace ws;
  qnn::Batch sub;
  for (std::size_t ap = 0; ap < by_ap.size(); ++ap) {
    if (by_ap[ap].empty()) continue;
    sub.clear(buffers[ap]->state_width());
    for (auto i : by_ap[ap]) buffers[ap]->append_to(i, sub);
    qnn::accumulate_semi_gradient(params[ap], sub, gamma, grad, ws);
  }
  auto theta = out.broadcast.values();
  auto g = grad.values();
  const double scale = rho / static_cast<double>(k);
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += scale * g[i];
  out.gradient_step_applied = true;
  out.batch_size = k;
  return out;
}

} // namespace dlca
