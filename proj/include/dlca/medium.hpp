#pragma once

#include <span>
#include <string>
#include <vector>

#include "dlca/timing.hpp"

namespace dlca {

enum class Verdict { Idle, Success, Collision };
enum class Feedback { None, Ack, Cts, Timeout };

/// How a slot is contended: decides the feedback a sole transmitter receives.
enum class AccessMode { basic, rts_cts, dlca };

inline constexpr int kNoIntent = -1;

struct ChannelVerdict {
  std::vector<int> transmitters;
  Verdict verdict = Verdict::Idle;
  int winner = -1;
};

/// Resolution of one slot across all channels.
struct SlotOutcome {
  std::vector<ChannelVerdict> channels;
  std::vector<int> observation; // per AP: 1 busy, 0 idle, on its primary channel
  std::vector<Feedback> feedback;
};

/// `intent[ap]` is the channel the AP transmits on this slot or kNoIntent.
/// `primary[ap]` is the AP's assigned channel (kNoIntent if unassigned).
inline SlotOutcome resolve_slot(std::span<const int> intent, std::span<const int> primary,
                                int channels, AccessMode mode) {
  if (intent.size() != primary.size())
    throw ConfigError("resolve_slot: intent and primary maps differ in size");
  SlotOutcome out;
  out.channels.resize(static_cast<std::size_t>(channels));
  out.observation.assign(intent.size(), 0);
  out.feedback.assign(intent.size(), Feedback::None);

  for (std::size_t ap = 0; ap < intent.size(); ++ap) {
    const int f = intent[ap];
    if (f == kNoIntent) continue;
    if (f != primary[ap] || f < 0 || f >= channels)
      throw ConfigError("resolve_slot: AP " + std::to_string(ap) +
                        " intends a channel it is not assigned to");
    out.channels[static_cast<std::size_t>(f)].transmitters.push_back(static_cast<int>(ap));
  }

  const Feedback win = mode == AccessMode::basic ? Feedback::Ack : Feedback::Cts;
  for (auto& ch : out.channels) {
    if (ch.transmitters.empty()) {
      ch.verdict = Verdict::Idle;
    } else if (ch.transmitters.size() == 1) {
      ch.verdict = Verdict::Success;
      ch.winner = ch.transmitters.front();
      out.feedback[static_cast<std::size_t>(ch.winner)] = win;
    } else {
      ch.verdict = Verdict::Collision;
      for (int ap : ch.transmitters) out.feedback[static_cast<std::size_t>(ap)] = Feedback::Timeout;
    }
  }

  for (std::size_t ap = 0; ap < primary.size(); ++ap) {
    const int f = primary[ap];
    if (f < 0 || f >= channels) continue;
    out.observation[ap] = out.channels[static_cast<std::size_t>(f)].transmitters.empty() ? 0 : 1;
  }
  return out;
}

} // namespace dlca
