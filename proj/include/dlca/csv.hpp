#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dlca/scenario.hpp"

namespace dlca {

/// Fixed-point decimal with 9 significant digits and no exponent.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  // round to 9 significant digits first, then lay the digits out in fixed form
  char sci[32];
  std::snprintf(sci, sizeof sci, "%.8e", v);
  const double rounded = std::strtod(sci, nullptr);
  const int exponent = static_cast<int>(std::floor(std::log10(std::abs(rounded))));
  const int decimals = std::max(0, 8 - exponent);
  char buf[400];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, rounded);
  std::string s = buf;
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  if (s == "-0") s = "0";
  return s;
}

inline double parse_number(const std::string& s) {
  if (s == "nan") return std::nan("");
  return std::strtod(s.c_str(), nullptr);
}

inline void write_metadata(std::ostream& os, const RunReport& r) {
  os << "# seed=" << r.config.seed << "\n";
  os << "# config_hash=" << std::hex << config_hash(r.config) << std::dec << "\n";
  if (!r.config.preset.empty()) os << "# preset=" << r.config.preset << "\n";
}

inline const char* kSummaryHeader =
    "protocol,N,F,trials,throughput_bps,throughput_std_bps,model_throughput_bps,utility,"
    "starved_trials,collision_per_txop,idle_per_txop,collision_rate";

/// One row per sweep point, means over trials.
inline void write_summary(std::ostream& os, const RunReport& r) {
  write_metadata(os, r);
  os << kSummaryHeader << "\n";
  for (const auto& p : r.points) {
    std::vector<double> thr, util, coll, idle, rate;
    int starved = 0;
    for (const auto& t : p.trials) {
      thr.push_back(t.metrics.throughput_bps);
      util.push_back(t.metrics.utility);
      if (!std::isfinite(t.metrics.utility)) ++starved;
      coll.push_back(t.metrics.collision_per_txop);
      idle.push_back(t.metrics.idle_per_txop);
      rate.push_back(t.metrics.collision_rate);
    }
    const double mean = finite_mean(thr);
    double var = 0.0;
    for (double x : thr) var += (x - mean) * (x - mean);
    const double sd = thr.size() > 1 ? std::sqrt(var / static_cast<double>(thr.size() - 1)) : 0.0;
    os << to_string(p.protocol) << ',' << p.aps << ',' << p.channels << ',' << p.trials.size() << ','
       << format_number(mean) << ',' << format_number(sd) << ','
       << (p.model_throughput_bps.empty() ? std::string() : format_number(finite_mean(p.model_throughput_bps)))
       << ',' << format_number(finite_mean(util)) << ',' << starved << ','
       << format_number(finite_mean(coll)) << ',' << format_number(finite_mean(idle)) << ','
       << format_number(finite_mean(rate)) << "\n";
  }
}

inline const char* kTraceHeader =
    "protocol,N,F,bucket,time_s,aggregate_throughput_bps,ap,ap_throughput_bps,pf_ratio";

/// Long format: one row per (point, bucket, AP), values averaged over trials.
inline void write_trace(std::ostream& os, const RunReport& r) {
  write_metadata(os, r);
  os << kTraceHeader << "\n";
  for (const auto& p : r.points) {
    if (p.trials.empty()) continue;
    const auto& first = p.trials.front().trace;
    const double n_trials = static_cast<double>(p.trials.size());
    for (std::size_t k = 0; k < first.time_s.size(); ++k) {
      double agg = 0.0;
      for (const auto& t : p.trials) agg += t.trace.aggregate_bps[k];
      agg /= n_trials;
      for (int ap = 0; ap < p.aps; ++ap) {
        double rate = 0.0, b = 0.0;
        for (const auto& t : p.trials) {
          rate += t.trace.ap_bps[k][static_cast<std::size_t>(ap)];
          b += t.trace.pf_ratio[k][static_cast<std::size_t>(ap)];
        }
        os << to_string(p.protocol) << ',' << p.aps << ',' << p.channels << ',' << k << ','
           << format_number(first.time_s[k]) << ',' << format_number(agg) << ',' << ap << ','
           << format_number(rate / n_trials) << ',' << format_number(b / n_trials) << "\n";
      }
    }
  }
}

/// Writes summary.csv and trace.csv into `dir`.
inline void emit_csv(const RunReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + (dir / name).string() + "'");
    return f;
  };
  {
    auto f = open("summary.csv");
    write_summary(f, r);
    if (!f) throw std::runtime_error("failed writing summary.csv");
  }
  {
    auto f = open("trace.csv");
    write_trace(f, r);
    if (!f) throw std::runtime_error("failed writing trace.csv");
  }
}

} // namespace dlca
