#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "dlca/rng.hpp"
#include "dlca/timing.hpp"

namespace dlca {

enum class FadingMode { block_constant, redraw_at_epoch };

/// Payload credited to an AP that wins a TXOP: C * B * TXOP.
inline double deliver_bits(double spectral_efficiency, double bandwidth_hz, Micros txop) {
  return spectral_efficiency * bandwidth_hz * Seconds(txop).count();
}

/// Per (AP, channel) spectral efficiency in bit/s/Hz.
class ChannelModel {
public:
  static constexpr double kMinEfficiency = 1.0;
  static constexpr double kMaxEfficiency = 3.0;

  ChannelModel() = default;

  ChannelModel(int aps, int channels, std::vector<double> efficiency,
               FadingMode mode = FadingMode::block_constant)
      : aps_(aps), channels_(channels), mode_(mode), se_(std::move(efficiency)) {
    if (aps < 1 || channels < 1) throw ConfigError("channel model: need N >= 1 and F >= 1");
    if (se_.size() != static_cast<std::size_t>(aps) * static_cast<std::size_t>(channels))
      throw ConfigError("channel model: efficiency matrix has wrong size");
  }

  /// Draws every entry from U[1, 3].
  static ChannelModel draw(int aps, int channels, RngStream& rng,
                           FadingMode mode = FadingMode::block_constant) {
    std::vector<double> se(static_cast<std::size_t>(aps) * static_cast<std::size_t>(channels));
    for (auto& v : se) v = rng.uniform(kMinEfficiency, kMaxEfficiency);
    return ChannelModel(aps, channels, std::move(se), mode);
  }

  int aps() const { return aps_; }
  int channels() const { return channels_; }
  FadingMode mode() const { return mode_; }

  double efficiency(int ap, int channel) const { return se_[index(ap, channel)]; }

  double deliver_bits(int ap, int channel, const TimingParams& timing) const {
    return dlca::deliver_bits(efficiency(ap, channel), timing.channel_bandwidth_hz, timing.txop);
  }

  /// Exchanges the rows of two APs (the mid-run perturbation experiment).
  void swap_aps(int a, int b) {
    for (int f = 0; f < channels_; ++f) std::swap(se_[index(a, f)], se_[index(b, f)]);
  }

  /// New block: only meaningful under redraw_at_epoch.
  void redraw(RngStream& rng) {
    if (mode_ != FadingMode::redraw_at_epoch) return;
    for (auto& v : se_) v = rng.uniform(kMinEfficiency, kMaxEfficiency);
  }

private:
  std::size_t index(int ap, int channel) const {
    return static_cast<std::size_t>(ap) * static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(channel);
  }

  int aps_ = 0;
  int channels_ = 0;
  FadingMode mode_ = FadingMode::block_constant;
  std::vector<double> se_;
};

} // namespace dlca
