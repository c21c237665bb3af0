#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlca/apc.hpp"
#include "dlca/channel.hpp"
#include "dlca/timing.hpp"

namespace dlca {

class AnalyticsError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Airtimes entering the per-packet protocol overhead.
struct OverheadInputs {
  Micros rts{0.0};
  Micros cts{0.0};
  Micros ack{0.0};
  Micros header{0.0};
  Micros difs{0.0};
  Micros sifs{0.0};

  static Micros frame(double bits, double basic_rate_bps, Micros phy = Micros{0.0}) {
    return phy + Micros{bits / basic_rate_bps * 1e6};
  }

  static OverheadInputs from(const TimingParams& t) {
    return {t.rts(), t.cts(), t.ack(), t.data_header(), t.difs, t.sifs};
  }
};

/// delta0 with RTS/CTS: three control frames, the data header, DIFS and three SIFS.
inline Micros overhead_rts(const OverheadInputs& in) {
  return in.rts + in.cts + in.ack + in.header + in.difs + 3.0 * in.sifs;
}
inline Micros overhead_rts(const TimingParams& t) { return overhead_rts(OverheadInputs::from(t)); }

/// delta0 for basic access: ACK, header, DIFS and one SIFS.
inline Micros overhead_basic(const OverheadInputs& in) {
  return in.ack + in.header + in.difs + in.sifs;
}
inline Micros overhead_basic(const TimingParams& t) {
  return overhead_basic(OverheadInputs::from(t));
}

/// x = z L U / (L + delta) with delta = delta0 U in bits.
inline double per_ap_rate(double z, double packet_bits, double channel_rate_bps, Micros delta0) {
  if (z < 0.0 || z > 1.0) throw std::invalid_argument("per_ap_rate: z must be in [0, 1]");
  if (!(packet_bits > 0.0) || !(channel_rate_bps > 0.0) || delta0.count() < 0.0)
    throw std::invalid_argument("per_ap_rate: L and U must be positive, delta0 >= 0");
  const double delta_bits = Seconds(delta0).count() * channel_rate_bps;
  return z * packet_bits * channel_rate_bps / (packet_bits + delta_bits);
}

/// Durations seen by a saturated contender: an empty backoff slot, a
/// successful exchange and a collision.
struct SlotDurations {
  Micros idle{50.0};
  Micros success{0.0};
  Micros collision{0.0};

  static SlotDurations rts(const TimingParams& t) {
    return {t.slot_time, advance_clock(t, SlotKind::rts_success),
            advance_clock(t, SlotKind::rts_collision)};
  }
  static SlotDurations basic(const TimingParams& t) {
    return {t.slot_time, advance_clock(t, SlotKind::basic_success),
            advance_clock(t, SlotKind::basic_collision)};
  }
};

struct ContentionSolution {
  int n = 1;
  double tau = 0.0;
  double p = 0.0;
  double residual = 0.0;
  int iterations = 0;
  double p_transmit = 0.0;     // some station transmits in a slot
  double p_success = 0.0;      // ... and it is alone
  Micros expected_slot{0.0};
  double z_total = 0.0;        // share of airtime in successful exchanges
  double z_per_ap = 0.0;
};

namespace detail {

// tau = 2 / (1 + W + p W sum_{k<m} (2p)^k); this form has no pole at p = 1/2.
inline double bianchi_tau(double p, int w, int m) {
  double sum = 0.0, term = 1.0;
  for (int k = 0; k < m; ++k) {
    sum += term;
    term *= 2.0 * p;
  }
  return 2.0 / (1.0 + w + p * w * sum);
}

inline double collision_probability(double tau, int n) {
  return 1.0 - std::pow(1.0 - tau, n - 1);
}

} // namespace detail

/// g(tau) - tau for the coupled saturation equations.
inline double bianchi_residual(double tau, int n, int w, int m) {
  return detail::bianchi_tau(detail::collision_probability(tau, n), w, m) - tau;
}

/// Damped fixed-point iteration for (tau, p). Airtime shares use `d`.
inline ContentionSolution bianchi_fixed_point(int n, int w, int m,
                                              const SlotDurations& d = SlotDurations{}) {
  if (n < 1) throw std::invalid_argument("bianchi_fixed_point: n must be >= 1");
  if (w < 1 || m < 0) throw std::invalid_argument("bianchi_fixed_point: W >= 1 and m >= 0 required");
  ContentionSolution s;
  s.n = n;
  double tau = 2.0 / (w + 1.0);
  constexpr int kMaxIterations = 10000;
  constexpr double kDamping = 0.5;
  bool converged = false;
  for (int it = 1; it <= kMaxIterations; ++it) {
    const double g = detail::bianchi_tau(detail::collision_probability(tau, n), w, m);
    const double next = (1.0 - kDamping) * tau + kDamping * g;
    const double step = std::abs(next - tau);
    tau = next;
    s.iterations = it;
    if (step < 1e-10 && std::abs(bianchi_residual(tau, n, w, m)) < 1e-9) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw AnalyticsError("bianchi_fixed_point: no convergence for n=" + std::to_string(n) +
                         " W=" + std::to_string(w) + " m=" + std::to_string(m));
  s.tau = tau;
  s.p = detail::collision_probability(tau, n);
  s.residual = bianchi_residual(tau, n, w, m);

  s.p_transmit = 1.0 - std::pow(1.0 - tau, n);
  s.p_success = n * tau * std::pow(1.0 - tau, n - 1) / s.p_transmit;
  const double idle = (1.0 - s.p_transmit) * d.idle.count();
  const double busy_ok = s.p_transmit * s.p_success * d.success.count();
  const double busy_bad = s.p_transmit * (1.0 - s.p_success) * d.collision.count();
  s.expected_slot = Micros{idle + busy_ok + busy_bad};
  s.z_total = s.expected_slot.count() > 0.0 ? busy_ok / s.expected_slot.count() : 0.0;
  s.z_per_ap = s.z_total / n;
  return s;
}

/// Power-of-two initial window in [2, 4096] that maximises saturated
/// throughput for n contenders under RTS/CTS timing.
inline int optimize_window(int n, const TimingParams& t, int m = 6) {
  const auto d = SlotDurations::rts(t);
  int best_w = 2;
  double best = -1.0;
  for (int k = 1; k <= 12; ++k) {
    const int w = 1 << k;
    const double z = bianchi_fixed_point(n, w, m, d).z_total;
    if (z > best) {
      best = z;
      best_w = w;
    }
  }
  return best_w;
}

/// Model throughput of a whole network where every AP contends on its fixed
/// primary channel: each channel is an independent saturated cell and an AP
/// earns its own C B on a won TXOP. `windows[f]` is the initial window on f.
inline double model_network_throughput(const ChannelModel& c, const AllocationPlan& plan,
                                       const TimingParams& t, const SlotDurations& d,
                                       Micros delta0, std::span<const int> windows, int m) {
  double total = 0.0;
  for (int f = 0; f < plan.channels(); ++f) {
    const int n_f = plan.per_channel_count[static_cast<std::size_t>(f)];
    if (n_f == 0) continue;
    const auto sol = bianchi_fixed_point(n_f, windows[static_cast<std::size_t>(f)], m, d);
    for (int ap = 0; ap < plan.aps(); ++ap) {
      if (plan.primary_channel[static_cast<std::size_t>(ap)] != f) continue;
      const double u = c.efficiency(ap, f) * t.channel_bandwidth_hz;
      const double packet_bits = u * Seconds(t.txop).count();
      total += per_ap_rate(sol.z_per_ap, packet_bits, u, delta0);
    }
  }
  return total;
}

/// Sum of ln D over APs; undefined when any AP starves.
inline double compute_utility(std::span<const double> avg_rates) {
  double u = 0.0;
  for (double d : avg_rates) {
    if (!(d > 0.0)) throw AnalyticsError("compute_utility: an AP has zero average rate");
    u += std::log(d);
  }
  return u;
}

/// Same as compute_utility but NaN instead of throwing.
inline double utility_or_nan(std::span<const double> avg_rates) {
  for (double d : avg_rates)
    if (!(d > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return compute_utility(avg_rates);
}

inline double pf_ratio(double avg_rate, double phi) {
  if (!(phi > 0.0)) throw std::invalid_argument("pf_ratio: phi must be positive");
  return avg_rate / phi;
}

} // namespace dlca
