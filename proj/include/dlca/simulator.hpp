#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dlca/agent.hpp"
#include "dlca/analytics.hpp"
#include "dlca/apc.hpp"
#include "dlca/channel.hpp"
#include "dlca/medium.hpp"
#include "dlca/protocols.hpp"
#include "dlca/qnn.hpp"
#include "dlca/rng.hpp"
#include "dlca/timing.hpp"

namespace dlca {

enum class Protocol {
  dcf_basic,
  rts_cts,
  rts_cts_optimized,
  sh_txop,
  dlca,
  dlca_greedy,
  dlca_greedy_fomaml,
};

inline constexpr Protocol kAllProtocols[] = {
    Protocol::dcf_basic, Protocol::rts_cts,     Protocol::rts_cts_optimized,  Protocol::sh_txop,
    Protocol::dlca,      Protocol::dlca_greedy, Protocol::dlca_greedy_fomaml,
};

inline std::string_view to_string(Protocol p) {
  switch (p) {
  case Protocol::dcf_basic: return "dcf_basic";
  case Protocol::rts_cts: return "rts_cts";
  case Protocol::rts_cts_optimized: return "rts_cts_optimized";
  case Protocol::sh_txop: return "sh_txop";
  case Protocol::dlca: return "dlca";
  case Protocol::dlca_greedy: return "dlca_greedy";
  case Protocol::dlca_greedy_fomaml: return "dlca_greedy_fomaml";
  }
  return "?";
}

inline Protocol parse_protocol(std::string_view s) {
  for (auto p : kAllProtocols)
    if (to_string(p) == s) return p;
  throw ConfigError("unknown protocol '" + std::string(s) + "'");
}

inline bool is_dlca(Protocol p) {
  return p == Protocol::dlca || p == Protocol::dlca_greedy || p == Protocol::dlca_greedy_fomaml;
}

struct Perturbation {
  int ap_a = 0;
  int ap_b = 2;
  std::int64_t at_tick = 0; // in DLCA contention slots from the start of the run
};

struct SimConfig {
  Protocol protocol = Protocol::dlca_greedy_fomaml;
  int aps = 8;
  int channels = 8;
  TimingParams timing;
  Hyperparams hp;
  int cw_min = 32;
  int backoff_stages = 6;
  std::int64_t training_slots = 50000; // warm-up, counted in DLCA slots
  Seconds duration{2.0};               // measurement window after warm-up
  Seconds trace_interval{0.1};
  Seconds pf_window{1.0};
  FadingMode fading = FadingMode::block_constant;
  std::optional<Perturbation> perturbation;

  Micros dlca_slot() const { return advance_clock(timing, SlotKind::dlca_contention_slot); }
  Micros warmup() const { return dlca_slot() * static_cast<double>(training_slots); }
  Micros horizon() const { return warmup() + Micros(duration); }
  std::int64_t apc_period_slots() const {
    const double slots = hp.apc_period_ms * 1000.0 / dlca_slot().count();
    return std::max<std::int64_t>(1, std::llround(slots));
  }
  std::optional<Micros> swap_time() const {
    if (!perturbation) return std::nullopt;
    return dlca_slot() * static_cast<double>(perturbation->at_tick);
  }

  void validate() const {
    if (aps < 1) throw ConfigError("config: N must be >= 1");
    if (channels < 1) throw ConfigError("config: F must be >= 1");
    timing.validate();
    if (is_dlca(protocol)) hp.validate();
    if (cw_min < 1 || backoff_stages < 0) throw ConfigError("config: cw_min >= 1, m >= 0 required");
    if (training_slots < 0) throw ConfigError("config: training_slots must be >= 0");
    if (!(duration.count() > 0.0)) throw ConfigError("config: duration must be > 0");
    if (!(trace_interval.count() > 0.0)) throw ConfigError("config: trace_interval must be > 0");
    if (pf_window < trace_interval) throw ConfigError("config: pf_window must cover a trace bucket");
    if (perturbation) {
      const auto& p = *perturbation;
      if (p.ap_a < 0 || p.ap_a >= aps || p.ap_b < 0 || p.ap_b >= aps)
        throw ConfigError("config: perturbation APs out of range");
      if (p.at_tick < 0) throw ConfigError("config: perturbation tick must be >= 0");
    }
  }
};

/// Spectral efficiency as a function of time: fading epochs of one APC
/// period plus the optional row swap. Fixed up front so every protocol sees
/// the same matrices at the same instants.
class ChannelSchedule {
public:
  ChannelSchedule(const SimConfig& cfg, RngStream rng)
      : epoch_(Micros(cfg.hp.apc_period_ms * 1000.0)), swap_(cfg.swap_time()) {
    auto base = ChannelModel::draw(cfg.aps, cfg.channels, rng, cfg.fading);
    const auto epochs =
        cfg.fading == FadingMode::redraw_at_epoch
            ? static_cast<std::size_t>(std::ceil(cfg.horizon() / epoch_)) + 1
            : std::size_t{1};
    epochs_.reserve(epochs);
    epochs_.push_back(base);
    for (std::size_t k = 1; k < epochs; ++k) {
      base.redraw(rng);
      epochs_.push_back(base);
    }
    if (cfg.perturbation) {
      swapped_ = epochs_;
      for (auto& m : swapped_) m.swap_aps(cfg.perturbation->ap_a, cfg.perturbation->ap_b);
    }
  }

  const ChannelModel& at(Micros t) const {
    std::size_t k = 0;
    if (epochs_.size() > 1)
      k = std::min(epochs_.size() - 1, static_cast<std::size_t>(std::max(0.0, t / epoch_)));
    if (swap_ && t >= *swap_) return swapped_[k];
    return epochs_[k];
  }

  const ChannelModel& initial() const { return epochs_.front(); }

private:
  Micros epoch_;
  std::optional<Micros> swap_;
  std::vector<ChannelModel> epochs_;
  std::vector<ChannelModel> swapped_;
};

/// Per-protocol contention counters over the measurement window.
struct SlotCounters {
  std::int64_t successes = 0;
  std::int64_t collisions = 0;
  std::int64_t idle = 0;
  std::int64_t total() const { return successes + collisions + idle; }
};

struct TrialMetrics {
  double throughput_bps = 0.0;
  std::vector<double> ap_throughput_bps;
  double utility = 0.0; // NaN if some AP starved in the window
  SlotCounters counters;
  std::vector<SlotCounters> per_channel; // empty for SH-TXOP (one wide band)
  double collision_per_txop = 0.0;
  double idle_per_txop = 0.0;
  double collision_rate = 0.0; // collision slots over contended slots
};

/// Time series in fixed buckets covering warm-up and measurement.
struct MetricsTrace {
  Seconds interval{0.1};
  std::vector<double> time_s;                  // bucket end
  std::vector<double> aggregate_bps;
  std::vector<std::vector<double>> ap_bps;     // [bucket][ap]
  std::vector<std::vector<double>> pf_ratio;   // [bucket][ap], sliding window
};

struct TrialResult {
  TrialMetrics metrics;
  MetricsTrace trace;
  ChannelModel channel;  // initial efficiencies
  AllocationPlan plan;   // allocation in force at the end (empty for SH-TXOP)
  std::vector<int> windows; // initial CW per channel for the backoff protocols
  std::int64_t dlca_slots = 0;
  std::int64_t fomaml_rounds = 0;
};

namespace detail {

/// Collects credits into trace buckets and the measurement window.
class Recorder {
public:
  Recorder(const SimConfig& cfg)
      : aps_(cfg.aps), interval_(Micros(cfg.trace_interval)), warm_(cfg.warmup()),
        end_(cfg.horizon()) {
    const auto buckets = static_cast<std::size_t>(std::ceil(end_ / interval_ - 1e-9));
    bits_.assign(buckets, std::vector<double>(static_cast<std::size_t>(aps_), 0.0));
    phi_.assign(buckets, std::vector<double>(static_cast<std::size_t>(aps_), 0.0));
    phi_seen_.assign(buckets, 0);
    measured_.assign(static_cast<std::size_t>(aps_), 0.0);
  }

  Micros end() const { return end_; }
  bool in_window(Micros t) const { return t > warm_ && t <= end_; }

  void credit(int ap, double bits, Micros at) {
    if (at > end_) return;
    bits_[bucket(at)][static_cast<std::size_t>(ap)] += bits;
    if (in_window(at)) measured_[static_cast<std::size_t>(ap)] += bits;
  }

  /// Proportional rates in force at `at`; the last call in a bucket wins.
  void note_phi(std::span<const double> phi, Micros at) {
    if (at > end_) return;
    const auto k = bucket(at);
    std::copy(phi.begin(), phi.end(), phi_[k].begin());
    phi_seen_[k] = 1;
  }

  void count(SlotCounters& c, Verdict v, Micros at) const {
    if (!in_window(at)) return;
    switch (v) {
    case Verdict::Idle: ++c.idle; break;
    case Verdict::Success: ++c.successes; break;
    case Verdict::Collision: ++c.collisions; break;
    }
  }

  void finish(const SimConfig& cfg, TrialResult& out) const {
    const double window_s = Seconds(end_ - warm_).count();
    auto& m = out.metrics;
    m.ap_throughput_bps.resize(measured_.size());
    m.throughput_bps = 0.0;
    for (std::size_t ap = 0; ap < measured_.size(); ++ap) {
      m.ap_throughput_bps[ap] = measured_[ap] / window_s;
      m.throughput_bps += m.ap_throughput_bps[ap];
    }
    m.utility = utility_or_nan(m.ap_throughput_bps);
    const double s = static_cast<double>(m.counters.successes);
    m.collision_per_txop = s > 0 ? m.counters.collisions / s : 0.0;
    m.idle_per_txop = s > 0 ? m.counters.idle / s : 0.0;
    const double contended = static_cast<double>(m.counters.total());
    m.collision_rate = contended > 0 ? m.counters.collisions / contended : 0.0;

    auto& tr = out.trace;
    tr.interval = cfg.trace_interval;
    const std::size_t n = bits_.size();
    const double dt = Seconds(interval_).count();
    tr.time_s.resize(n);
    tr.aggregate_bps.assign(n, 0.0);
    tr.ap_bps.assign(n, std::vector<double>(static_cast<std::size_t>(aps_), 0.0));
    tr.pf_ratio.assign(n, std::vector<double>(static_cast<std::size_t>(aps_), 0.0));

    // buckets without a fresh phi inherit the previous one
    std::vector<std::vector<double>> phi = phi_;
    for (std::size_t k = 1; k < n; ++k)
      if (!phi_seen_[k]) phi[k] = phi[k - 1];

    const auto w = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.pf_window / cfg.trace_interval)));
    for (std::size_t k = 0; k < n; ++k) {
      tr.time_s[k] = std::min(Seconds(interval_ * static_cast<double>(k + 1)), Seconds(end_)).count();
      const double span_s = tr.time_s[k] - Seconds(interval_ * static_cast<double>(k)).count();
      for (std::size_t ap = 0; ap < static_cast<std::size_t>(aps_); ++ap) {
        tr.ap_bps[k][ap] = bits_[k][ap] / (span_s > 0 ? span_s : dt);
        tr.aggregate_bps[k] += tr.ap_bps[k][ap];
      }
      const std::size_t lo = k + 1 >= w ? k + 1 - w : 0;
      for (std::size_t ap = 0; ap < static_cast<std::size_t>(aps_); ++ap) {
        double rate = 0.0, ph = 0.0;
        for (std::size_t j = lo; j <= k; ++j) {
          rate += tr.ap_bps[j][ap];
          ph += phi[j][ap];
        }
        tr.pf_ratio[k][ap] = ph > 0.0 ? rate / ph : 0.0;
      }
    }
  }

private:
  std::size_t bucket(Micros at) const {
    const auto k = static_cast<std::size_t>(std::max(0.0, std::ceil(at / interval_ - 1e-9)) - 1.0);
    return std::min(k, bits_.size() - 1);
  }

  int aps_;
  Micros interval_;
  Micros warm_;
  Micros end_;
  std::vector<std::vector<double>> bits_;
  std::vector<std::vector<double>> phi_;
  std::vector<char> phi_seen_;
  std::vector<double> measured_;
};

inline std::vector<double> shtxop_phi(const ChannelModel& c, double bandwidth) {
  const int n = c.aps();
  const int f = c.channels();
  std::vector<double> phi(static_cast<std::size_t>(n));
  for (int ap = 0; ap < n; ++ap) {
    double mean = 0.0;
    for (int k = 0; k < f; ++k) mean += c.efficiency(ap, k);
    mean /= f;
    phi[static_cast<std::size_t>(ap)] = bandwidth * mean * std::min(n, f) / n;
  }
  return phi;
}

/// Backoff protocols on fixed primary channels. Channels never interact, so
/// each one runs on its own timeline and random substream.
inline TrialResult run_backoff(const SimConfig& cfg, const ChannelSchedule& sched, RngStream& trial) {
  TrialResult out;
  out.channel = sched.initial();
  out.plan = fixed_block_allocation(cfg.aps, cfg.channels);
  Recorder rec(cfg);
  const bool basic = cfg.protocol == Protocol::dcf_basic;
  const Micros success = advance_clock(cfg.timing, basic ? SlotKind::basic_success : SlotKind::rts_success);
  const Micros collision =
      advance_clock(cfg.timing, basic ? SlotKind::basic_collision : SlotKind::rts_collision);
  const Feedback win = basic ? Feedback::Ack : Feedback::Cts;

  out.windows.assign(static_cast<std::size_t>(cfg.channels), cfg.cw_min);
  out.metrics.per_channel.assign(static_cast<std::size_t>(cfg.channels), {});
  for (int f = 0; f < cfg.channels; ++f) {
    std::vector<int> members;
    for (int ap = 0; ap < cfg.aps; ++ap)
      if (out.plan.primary_channel[static_cast<std::size_t>(ap)] == f) members.push_back(ap);
    if (members.empty()) continue;
    int w = cfg.cw_min;
    if (cfg.protocol == Protocol::rts_cts_optimized)
      w = optimize_window(static_cast<int>(members.size()), cfg.timing, cfg.backoff_stages);
    out.windows[static_cast<std::size_t>(f)] = w;

    RngStream rng = trial.substream(0x100 + static_cast<std::uint64_t>(f));
    std::vector<BackoffState> st;
    for (std::size_t i = 0; i < members.size(); ++i)
      st.push_back(BackoffState::start(w, cfg.backoff_stages, rng));
    auto& counters = out.metrics.per_channel[static_cast<std::size_t>(f)];

    Micros now{0.0};
    std::vector<std::size_t> zero;
    while (now < rec.end()) {
      zero.clear();
      for (std::size_t i = 0; i < st.size(); ++i)
        if (st[i].counter == 0) zero.push_back(i);
      if (zero.empty()) {
        now += cfg.timing.slot_time;
        rec.count(counters, Verdict::Idle, now);
        for (auto& s : st) s = detail::backoff_step(s, SlotView{false, false, Feedback::None}, win, rng).state;
        continue;
      }
      const bool sole = zero.size() == 1;
      const Micros start = now;
      now += sole ? success : collision;
      rec.count(counters, sole ? Verdict::Success : Verdict::Collision, now);
      if (sole) {
        const int ap = members[zero.front()];
        rec.credit(ap, sched.at(start).deliver_bits(ap, f, cfg.timing), now);
      }
      for (std::size_t i = 0; i < st.size(); ++i) {
        const bool tx = st[i].counter == 0;
        const Feedback fb = tx ? (sole ? win : Feedback::Timeout) : Feedback::None;
        st[i] = detail::backoff_step(st[i], SlotView{tx, true, fb}, win, rng).state;
      }
    }
  }
  for (const auto& c : out.metrics.per_channel) {
    out.metrics.counters.successes += c.successes;
    out.metrics.counters.collisions += c.collisions;
    out.metrics.counters.idle += c.idle;
  }

  // phi only changes when the efficiencies do
  const Micros step = Micros(cfg.trace_interval);
  for (Micros t = step; t <= rec.end() + step * 0.5; t += step) {
    const Micros at = std::min(t, rec.end());
    rec.note_phi(proportional_rates(sched.at(at), out.plan, cfg.timing.channel_bandwidth_hz), at);
  }
  rec.finish(cfg, out);
  return out;
}

inline TrialResult run_shtxop(const SimConfig& cfg, const ChannelSchedule& sched, RngStream& trial) {
  TrialResult out;
  out.channel = sched.initial();
  out.windows.assign(1, cfg.cw_min);
  Recorder rec(cfg);
  RngStream rng = trial.substream(0x200);
  std::vector<BackoffState> st;
  for (int ap = 0; ap < cfg.aps; ++ap) st.push_back(BackoffState::start(cfg.cw_min, cfg.backoff_stages, rng));

  Micros now{0.0};
  while (now < rec.end()) {
    const Micros start = now;
    const auto round = shtxop_round(st, sched.at(start), cfg.timing, rng);
    // idle slots are spread over the round; count them at its end
    now += round.elapsed;
    for (std::int64_t i = 0; i < round.idle_slots; ++i) rec.count(out.metrics.counters, Verdict::Idle, now);
    rec.count(out.metrics.counters, round.collided ? Verdict::Collision : Verdict::Success, now);
    for (int ap = 0; ap < cfg.aps; ++ap)
      if (round.credits[static_cast<std::size_t>(ap)] > 0.0)
        rec.credit(ap, round.credits[static_cast<std::size_t>(ap)], now);
  }
  const Micros step = Micros(cfg.trace_interval);
  for (Micros t = step; t <= rec.end() + step * 0.5; t += step) {
    const Micros at = std::min(t, rec.end());
    rec.note_phi(shtxop_phi(sched.at(at), cfg.timing.channel_bandwidth_hz), at);
  }
  rec.finish(cfg, out);
  return out;
}

inline TrialResult run_dlca(const SimConfig& cfg, const ChannelSchedule& sched, RngStream& trial) {
  TrialResult out;
  out.channel = sched.initial();
  Recorder rec(cfg);
  const bool greedy = cfg.protocol != Protocol::dlca;
  const bool fomaml = cfg.protocol == Protocol::dlca_greedy_fomaml;
  const Micros slot = cfg.dlca_slot();
  const double slot_s = Seconds(slot).count();
  const double bw = cfg.timing.channel_bandwidth_hz;
  const std::int64_t period = cfg.apc_period_slots();
  const auto arch = qnn::Architecture::standard(cfg.hp.state_width());

  std::vector<Agent> agents;
  agents.reserve(static_cast<std::size_t>(cfg.aps));
  for (int ap = 0; ap < cfg.aps; ++ap) {
    RngStream rng = trial.substream(0x300 + static_cast<std::uint64_t>(ap));
    auto params = qnn::initialize(arch, rng);
    agents.emplace_back(cfg.hp, std::move(params), std::move(rng));
  }
  RngStream apc_rng = trial.substream(0x400);

  FairnessLedger ledger(cfg.aps);
  auto allocate = [&](Micros at, std::int64_t epoch) {
    return greedy ? greedy_pf_allocate(sched.at(at), ledger.avg_throughput, bw, epoch)
                  : fixed_block_allocation(cfg.aps, cfg.channels);
  };
  AllocationPlan plan = allocate(Micros{0.0}, 0);
  std::vector<int> contenders = broadcast_contender_counts(plan);
  std::vector<double> phi = proportional_rates(sched.at(Micros{0.0}), plan, bw);
  rec.note_phi(phi, Micros{0.0});

  out.metrics.per_channel.assign(static_cast<std::size_t>(cfg.channels), {});
  std::vector<int> intent(static_cast<std::size_t>(cfg.aps));
  std::vector<int> action(static_cast<std::size_t>(cfg.aps));
  std::vector<double> rates(static_cast<std::size_t>(cfg.aps));
  std::vector<qnn::QnnParams> snapshot;
  std::vector<const ReplayBuffer*> buffers;

  const auto total = static_cast<std::int64_t>(std::floor(rec.end() / slot + 1e-9));
  for (std::int64_t t = 0; t < total; ++t) {
    const Micros start = slot * static_cast<double>(t);
    const Micros end = start + slot;
    const ChannelModel& cm = sched.at(start);

    for (int ap = 0; ap < cfg.aps; ++ap) {
      const auto i = static_cast<std::size_t>(ap);
      action[i] = agents[i].act(contenders[i], cfg.aps);
      intent[i] = action[i] == 1 ? plan.primary_channel[i] : kNoIntent;
    }
    const auto outcome = resolve_slot(intent, plan.primary_channel, cfg.channels, AccessMode::dlca);

    std::fill(rates.begin(), rates.end(), 0.0);
    for (int f = 0; f < cfg.channels; ++f) {
      const auto& ch = outcome.channels[static_cast<std::size_t>(f)];
      if (plan.per_channel_count[static_cast<std::size_t>(f)] > 0)
        rec.count(out.metrics.per_channel[static_cast<std::size_t>(f)], ch.verdict, end);
      if (ch.verdict == Verdict::Success) {
        const double bits = cm.deliver_bits(ch.winner, f, cfg.timing);
        rec.credit(ch.winner, bits, end);
        rates[static_cast<std::size_t>(ch.winner)] = bits / slot_s;
      }
    }
    for (int ap = 0; ap < cfg.aps; ++ap) {
      const auto i = static_cast<std::size_t>(ap);
      agents[i].observe(action[i], outcome.feedback[i], outcome.observation[i]);
    }
    update_average_throughput(ledger, t + 1, rates);

    if (t % period == period - 1) {
      if (fomaml) {
        snapshot.clear();
        buffers.clear();
        for (auto& a : agents) {
          snapshot.push_back(a.params());
          buffers.push_back(&a.buffer());
        }
        auto res = fomaml_round(snapshot, buffers, cfg.hp.rho, cfg.hp.gamma,
                                static_cast<std::size_t>(cfg.hp.batch), apc_rng);
        for (auto& a : agents) a.set_params(res.broadcast);
        ++out.fomaml_rounds;
      }
      plan = allocate(end, (t + 1) / period);
      contenders = broadcast_contender_counts(plan);
    }
    phi = proportional_rates(sched.at(end), plan, bw);
    if (t % 16 == 15 || t + 1 == total) rec.note_phi(phi, end);
  }
  out.dlca_slots = total;
  for (const auto& c : out.metrics.per_channel) {
    out.metrics.counters.successes += c.successes;
    out.metrics.counters.collisions += c.collisions;
    out.metrics.counters.idle += c.idle;
  }
  out.plan = plan;
  rec.finish(cfg, out);
  return out;
}

} // namespace detail

/// One Monte-Carlo trial; the result depends only on (config, trial_seed).
inline TrialResult run_trial(const SimConfig& cfg, std::uint64_t trial_seed) {
  cfg.validate();
  RngStream trial(trial_seed);
  const ChannelSchedule sched(cfg, trial.substream(0x1));
  switch (cfg.protocol) {
  case Protocol::dcf_basic:
  case Protocol::rts_cts:
  case Protocol::rts_cts_optimized:
    return detail::run_backoff(cfg, sched, trial);
  case Protocol::sh_txop:
    return detail::run_shtxop(cfg, sched, trial);
  case Protocol::dlca:
  case Protocol::dlca_greedy:
  case Protocol::dlca_greedy_fomaml:
    return detail::run_dlca(cfg, sched, trial);
  }
  throw ConfigError("run_trial: unknown protocol");
}

/// Analytical aggregate throughput for the backoff protocols on the trial's
/// initial efficiencies and allocation.
inline double model_throughput(const SimConfig& cfg, const TrialResult& r) {
  const bool basic = cfg.protocol == Protocol::dcf_basic;
  const auto d = basic ? SlotDurations::basic(cfg.timing) : SlotDurations::rts(cfg.timing);
  const auto delta0 = basic ? overhead_basic(cfg.timing) : overhead_rts(cfg.timing);
  return model_network_throughput(r.channel, r.plan, cfg.timing, d, delta0, r.windows,
                                  cfg.backoff_stages);
}

} // namespace dlca
