#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "dlca/channel.hpp"
#include "dlca/medium.hpp"
#include "dlca/rng.hpp"
#include "dlca/timing.hpp"

namespace dlca {

/// Binary exponential backoff of one AP.
struct BackoffState {
  int cw_min = 32;
  int m = 6;
  int current_cw = 32;
  int counter = 0;
  bool frozen = false;

  int cw_max() const { return cw_min << m; }

  bool valid() const {
    return cw_min >= 1 && m >= 0 && current_cw >= cw_min && current_cw <= cw_max() &&
           counter >= 0 && counter <= current_cw - 1;
  }

  static BackoffState start(int cw_min, int m, RngStream& rng) {
    if (cw_min < 1 || m < 0) throw ConfigError("backoff: cw_min >= 1 and m >= 0 required");
    BackoffState s;
    s.cw_min = cw_min;
    s.m = m;
    s.current_cw = cw_min;
    s.counter = static_cast<int>(rng.below(cw_min));
    return s;
  }
};

/// What one AP saw in the slot that was just resolved.
struct SlotView {
  bool transmitted = false;
  bool busy = false;
  Feedback feedback = Feedback::None;

  static SlotView from(const SlotOutcome& out, int ap, bool transmitted) {
    return {transmitted, out.observation[static_cast<std::size_t>(ap)] == 1,
            out.feedback[static_cast<std::size_t>(ap)]};
  }
};

struct BackoffStep {
  bool transmit = false;
  BackoffState state;
};

namespace detail {

inline BackoffStep backoff_step(BackoffState s, const SlotView& v, Feedback success,
                                RngStream& rng) {
  if (v.transmitted) {
    if (v.feedback == success) {
      s.current_cw = s.cw_min;
    } else {
      s.current_cw = std::min(2 * s.current_cw, s.cw_max());
    }
    s.counter = static_cast<int>(rng.below(s.current_cw));
    s.frozen = false;
  } else if (v.busy) {
    // held for the busy period and the DIFS after it
    s.frozen = true;
  } else {
    s.frozen = false;
    if (s.counter > 0) --s.counter;
  }
  return {s.counter == 0, s};
}

} // namespace detail

/// DCF basic access: success is confirmed by the ACK after the TXOP.
inline BackoffStep dcf_basic_step(const BackoffState& state, const SlotView& view,
                                  RngStream& rng) {
  return detail::backoff_step(state, view, Feedback::Ack, rng);
}

/// RTS/CTS access: the TXOP only starts after a CTS; a missing CTS doubles the window.
inline BackoffStep rts_cts_step(const BackoffState& state, const SlotView& view,
                                RngStream& rng) {
  return detail::backoff_step(state, view, Feedback::Cts, rng);
}

/// Wide-band TXOP shared on 20 MHz sub-channels by the AP that won it.
struct ShTxopPlan {
  int sharing_ap = -1;
  int round_robin_cursor = 0;
  std::vector<int> sub_channel_assignment; // channel -> AP, -1 when unused
};

/// Sharing AP takes sub-channel 0, then APs winner+1, winner+2, ... (mod N).
inline ShTxopPlan plan_shtxop(int winner, int aps, int channels) {
  if (winner < 0 || winner >= aps) throw ConfigError("plan_shtxop: winner out of range");
  ShTxopPlan plan;
  plan.sharing_ap = winner;
  plan.sub_channel_assignment.assign(static_cast<std::size_t>(channels), -1);
  const int used = std::min(aps, channels);
  for (int k = 0; k < used; ++k)
    plan.sub_channel_assignment[static_cast<std::size_t>(k)] = (winner + k) % aps;
  plan.round_robin_cursor = (winner + used) % aps;
  return plan;
}

/// One SH-TXOP acquisition: idle backoff slots followed by one busy slot.
struct ShTxopRound {
  std::int64_t idle_slots = 0;
  bool collided = false;
  ShTxopPlan plan;             // valid when !collided
  std::vector<double> credits; // bits per AP
  Micros elapsed{0.0};
};

/// Runs wide-band DCF basic contention among all APs until one busy slot
/// occurs. Simultaneous zero counters waste the whole TXOP.
inline ShTxopRound shtxop_round(std::vector<BackoffState>& states, const ChannelModel& channel,
                                const TimingParams& timing, RngStream& rng) {
  const int n = static_cast<int>(states.size());
  ShTxopRound round;
  round.credits.assign(states.size(), 0.0);
  while (true) {
    std::vector<int> winners;
    for (int ap = 0; ap < n; ++ap)
      if (states[static_cast<std::size_t>(ap)].counter == 0) winners.push_back(ap);

    if (winners.empty()) {
      ++round.idle_slots;
      round.elapsed += advance_clock(timing, SlotKind::backoff_slot);
      for (auto& s : states) s = dcf_basic_step(s, SlotView{false, false, Feedback::None}, rng).state;
      continue;
    }

    const bool sole = winners.size() == 1;
    for (int ap = 0; ap < n; ++ap) {
      const bool tx = std::find(winners.begin(), winners.end(), ap) != winners.end();
      const Feedback fb = tx ? (sole ? Feedback::Ack : Feedback::Timeout) : Feedback::None;
      auto& s = states[static_cast<std::size_t>(ap)];
      s = dcf_basic_step(s, SlotView{tx, true, fb}, rng).state;
    }
    if (!sole) {
      round.collided = true;
      round.elapsed += advance_clock(timing, SlotKind::shtxop_collision);
      return round;
    }
    round.plan = plan_shtxop(winners.front(), n, channel.channels());
    for (int f = 0; f < channel.channels(); ++f) {
      const int ap = round.plan.sub_channel_assignment[static_cast<std::size_t>(f)];
      if (ap >= 0) round.credits[static_cast<std::size_t>(ap)] += channel.deliver_bits(ap, f, timing);
    }
    round.elapsed += advance_clock(timing, SlotKind::shtxop_success);
    return round;
  }
}

} // namespace dlca
