#pragma once

#include <chrono>
#include <stdexcept>
#include <string>

namespace dlca {

using Micros = std::chrono::duration<double, std::micro>;
using Seconds = std::chrono::duration<double>;

class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// MAC/PHY timing of the multi-AP network. Frame sizes exclude the PHY
/// preamble; every control frame's airtime is `phy_header + bytes / basic_rate`.
struct TimingParams {
  Micros slot_time{50.0};
  Micros sifs{28.0};
  Micros difs{128.0};
  Micros phy_header{20.0};
  Micros txop{640.0};
  Micros cts_timeout{300.0};
  Micros ack_timeout{300.0};
  int mac_header_bytes = 36;
  int ack_bytes = 14;
  int rts_bytes = 20;
  int cts_bytes = 14;
  int atf_bytes = 16;
  double basic_rate_bps = 6e6;
  double channel_bandwidth_hz = 20e6;

  /// Same parameters with the 8.16 ms maximum TXOP.
  static TimingParams long_txop() {
    TimingParams t;
    t.txop = Micros{8160.0};
    return t;
  }

  Micros airtime_at_basic_rate(int bytes) const {
    return Micros{bytes * 8.0 / basic_rate_bps * 1e6};
  }
  Micros control_frame(int bytes) const { return phy_header + airtime_at_basic_rate(bytes); }
  Micros rts() const { return control_frame(rts_bytes); }
  Micros cts() const { return control_frame(cts_bytes); }
  Micros ack() const { return control_frame(ack_bytes); }
  Micros atf() const { return control_frame(atf_bytes); }
  /// PHY preamble plus MAC header of the data frame that opens a TXOP.
  Micros data_header() const { return control_frame(mac_header_bytes); }

  void validate() const {
    auto positive = [](Micros d, const char* name) {
      if (!(d.count() > 0.0))
        throw ConfigError(std::string("timing: ") + name + " must be > 0");
    };
    positive(slot_time, "slot_time");
    positive(sifs, "sifs");
    positive(difs, "difs");
    positive(phy_header, "phy_header");
    positive(txop, "txop");
    positive(cts_timeout, "cts_timeout");
    positive(ack_timeout, "ack_timeout");
    if (!(sifs < difs)) throw ConfigError("timing: sifs must be shorter than difs");
    if (mac_header_bytes < 0 || ack_bytes <= 0 || rts_bytes <= 0 || cts_bytes <= 0 ||
        atf_bytes <= 0)
      throw ConfigError("timing: frame sizes must be positive");
    if (!(basic_rate_bps > 0.0)) throw ConfigError("timing: basic_rate must be > 0");
    if (!(channel_bandwidth_hz > 0.0)) throw ConfigError("timing: channel_bandwidth must be > 0");
    if (!(txop > rts() + sifs + cts() + sifs))
      throw ConfigError("timing: txop must exceed the RTS/CTS exchange");
  }
};

/// Composite air-time intervals the simulator advances the clock by.
enum class SlotKind {
  backoff_slot,
  rts_cts_exchange,
  txop_slot,
  dlca_contention_slot,
  shtxop_atf,
  basic_success,
  basic_collision,
  rts_success,
  rts_collision,
  shtxop_success,
  shtxop_collision,
};

inline Micros advance_clock(const TimingParams& t, SlotKind kind) {
  switch (kind) {
  case SlotKind::backoff_slot:
    return t.slot_time;
  case SlotKind::rts_cts_exchange:
    return t.rts() + t.sifs + t.cts() + t.sifs;
  case SlotKind::txop_slot:
    return t.txop;
  case SlotKind::dlca_contention_slot:
    // RTS, CTS, TXOP and ACK with SIFS gaps; identical for every outcome.
    return t.rts() + t.sifs + t.cts() + t.sifs + t.txop + t.sifs + t.ack();
  case SlotKind::shtxop_atf:
    return t.atf() + t.sifs;
  case SlotKind::basic_success:
    return t.data_header() + t.txop + t.sifs + t.ack() + t.difs;
  case SlotKind::basic_collision:
    // outcome only known once the TXOP is over and the ACK never arrives
    return t.data_header() + t.txop + t.ack_timeout + t.difs;
  case SlotKind::rts_success:
    return t.rts() + t.sifs + t.cts() + t.sifs + t.data_header() + t.txop + t.sifs + t.ack() +
           t.difs;
  case SlotKind::rts_collision:
    return t.rts() + t.cts_timeout + t.difs;
  case SlotKind::shtxop_success:
    return t.atf() + t.sifs + t.data_header() + t.txop + t.sifs + t.ack() + t.difs;
  case SlotKind::shtxop_collision:
    return t.atf() + t.sifs + t.data_header() + t.txop + t.ack_timeout + t.difs;
  }
  throw std::logic_error("advance_clock: unknown slot kind");
}

} // namespace dlca
