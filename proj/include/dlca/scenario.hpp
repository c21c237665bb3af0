#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dlca/simulator.hpp"

namespace dlca {

using nlohmann::json;

/// One experiment: the cartesian product protocols x N x F, each point run
/// for `trials` seeded trials.
struct ScenarioConfig {
  std::string preset;
  std::vector<Protocol> protocols{Protocol::dlca_greedy_fomaml};
  std::vector<int> aps{8};
  std::vector<int> channels{8};
  int trials = 10;
  std::uint64_t seed = 1;
  SimConfig sim;                          // protocol/aps/channels are filled per point
  std::optional<double> swap_at_fraction; // perturbation tick as a share of the run

  std::size_t points() const { return protocols.size() * aps.size() * channels.size(); }

  /// Settings of one sweep point.
  SimConfig point(Protocol p, int n, int f) const {
    SimConfig c = sim;
    c.protocol = p;
    c.aps = n;
    c.channels = f;
    if (c.perturbation && swap_at_fraction) {
      const double total_slots = c.horizon() / c.dlca_slot();
      c.perturbation->at_tick = static_cast<std::int64_t>(std::floor(*swap_at_fraction * total_slots));
    }
    return c;
  }

  void validate() const {
    if (protocols.empty() || aps.empty() || channels.empty())
      throw ConfigError("config: protocol, N and F lists must be non-empty");
    if (trials < 1) throw ConfigError("config: trials must be >= 1");
    if (swap_at_fraction && !(*swap_at_fraction >= 0.0 && *swap_at_fraction <= 1.0))
      throw ConfigError("config: perturbation at_fraction must be in [0, 1]");
    for (auto p : protocols)
      for (int n : aps)
        for (int f : channels) point(p, n, f).validate();
  }
};

namespace detail {

inline std::vector<int> range(int lo, int hi, int step) {
  std::vector<int> v;
  for (int x = lo; x <= hi; x += step) v.push_back(x);
  return v;
}

template <class T>
std::vector<T> as_list(const json& j, const char* key) {
  if (j.is_array()) return j.get<std::vector<T>>();
  try {
    return {j.get<T>()};
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: '") + key + "' has the wrong type");
  }
}

template <class T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + key + "' has the wrong type");
  }
}

inline void reject_unknown(const json& obj, std::initializer_list<const char*> known,
                           const std::string& where) {
  for (const auto& [k, v] : obj.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* s) { return k == s; }) ==
        known.end())
      throw ConfigError("config: unknown key '" + where + k + "'");
  }
}

inline void apply_timing(TimingParams& t, const json& j) {
  reject_unknown(j,
                 {"slot_time_us", "sifs_us", "difs_us", "phy_header_us", "txop_us",
                  "cts_timeout_us", "ack_timeout_us", "mac_header_bytes", "ack_bytes",
                  "rts_bytes", "cts_bytes", "atf_bytes", "basic_rate_bps",
                  "channel_bandwidth_hz"},
                 "timing.");
  auto us = [&](const char* k, Micros& d) {
    if (j.contains(k)) d = Micros{get_as<double>(j[k], std::string("timing.") + k)};
  };
  auto num = [&](const char* k, auto& v) {
    if (j.contains(k)) v = get_as<std::decay_t<decltype(v)>>(j[k], std::string("timing.") + k);
  };
  us("slot_time_us", t.slot_time);
  us("sifs_us", t.sifs);
  us("difs_us", t.difs);
  us("phy_header_us", t.phy_header);
  us("txop_us", t.txop);
  us("cts_timeout_us", t.cts_timeout);
  us("ack_timeout_us", t.ack_timeout);
  num("mac_header_bytes", t.mac_header_bytes);
  num("ack_bytes", t.ack_bytes);
  num("rts_bytes", t.rts_bytes);
  num("cts_bytes", t.cts_bytes);
  num("atf_bytes", t.atf_bytes);
  num("basic_rate_bps", t.basic_rate_bps);
  num("channel_bandwidth_hz", t.channel_bandwidth_hz);
}

inline void apply_hyperparams(Hyperparams& h, const json& j) {
  reject_unknown(j,
                 {"rho", "gamma", "epsilon", "eta", "history", "batch", "buffer_capacity",
                  "apc_period_ms"},
                 "hyperparams.");
  auto num = [&](const char* k, auto& v) {
    if (j.contains(k)) v = get_as<std::decay_t<decltype(v)>>(j[k], std::string("hyperparams.") + k);
  };
  num("rho", h.rho);
  num("gamma", h.gamma);
  num("epsilon", h.epsilon);
  num("eta", h.eta);
  num("history", h.history);
  num("batch", h.batch);
  num("buffer_capacity", h.buffer_capacity);
  num("apc_period_ms", h.apc_period_ms);
}

} // namespace detail

struct PresetInfo {
  const char* name;
  const char* summary;
};

inline constexpr PresetInfo kPresets[] = {
    {"fig5", "aggregate throughput vs N (8..56) for F in {4, 8, 16}, all protocols"},
    {"fig6_7", "collision and idle slots per TXOP vs N (8..56), F = 8"},
    {"fig8", "throughput trace while training, N = 16, F = 8"},
    {"fig9", "network utility vs N (8..56), F = 8"},
    {"fig10", "PF-ratio trace with an efficiency swap at 30% of the run, N = 18, F = 8"},
};

/// Full-scale defaults for a named preset.
inline ScenarioConfig preset_config(const std::string& name) {
  ScenarioConfig c;
  c.preset = name;
  const std::vector<Protocol> compared{Protocol::rts_cts,     Protocol::rts_cts_optimized,
                                       Protocol::sh_txop,     Protocol::dlca,
                                       Protocol::dlca_greedy, Protocol::dlca_greedy_fomaml};
  if (name == "fig5") {
    c.protocols = compared;
    c.aps = detail::range(8, 56, 8);
    c.channels = {4, 8, 16};
  } else if (name == "fig6_7") {
    c.protocols = compared;
    c.aps = detail::range(8, 56, 8);
    c.channels = {8};
  } else if (name == "fig8") {
    c.protocols = {Protocol::dlca_greedy, Protocol::dlca_greedy_fomaml};
    c.aps = {16};
    c.channels = {8};
    c.sim.training_slots = 0;
    c.sim.duration = Seconds(c.sim.dlca_slot() * 50000.0);
  } else if (name == "fig9") {
    c.protocols = {Protocol::rts_cts_optimized, Protocol::sh_txop, Protocol::dlca_greedy_fomaml};
    c.aps = detail::range(8, 56, 8);
    c.channels = {8};
  } else if (name == "fig10") {
    c.protocols = {Protocol::dlca_greedy_fomaml};
    c.aps = {18};
    c.channels = {8};
    c.sim.training_slots = 0;
    c.sim.duration = Seconds(c.sim.dlca_slot() * 100000.0);
    c.sim.perturbation = Perturbation{0, 2, 0};
    c.swap_at_fraction = 0.3;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return c;
}

/// Builds a scenario from a JSON document: an optional `preset` first, then
/// every other key overrides it.
inline ScenarioConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  detail::reject_unknown(j,
                         {"preset", "protocol", "protocols", "N", "F", "trials", "seed",
                          "duration", "training_slots", "timing", "hyperparams", "perturbation",
                          "trace_interval", "pf_window", "fading", "cw_min", "m"},
                         "");
  ScenarioConfig c;
  if (j.contains("preset")) c = preset_config(detail::get_as<std::string>(j["preset"], "preset"));

  for (const char* key : {"protocol", "protocols"}) {
    if (!j.contains(key)) continue;
    c.protocols.clear();
    for (const auto& s : detail::as_list<std::string>(j[key], key)) c.protocols.push_back(parse_protocol(s));
  }
  if (j.contains("N")) c.aps = detail::as_list<int>(j["N"], "N");
  if (j.contains("F")) c.channels = detail::as_list<int>(j["F"], "F");
  if (j.contains("trials")) c.trials = detail::get_as<int>(j["trials"], "trials");
  if (j.contains("seed")) c.seed = detail::get_as<std::uint64_t>(j["seed"], "seed");
  if (j.contains("duration")) c.sim.duration = Seconds{detail::get_as<double>(j["duration"], "duration")};
  if (j.contains("training_slots"))
    c.sim.training_slots = detail::get_as<std::int64_t>(j["training_slots"], "training_slots");
  if (j.contains("trace_interval"))
    c.sim.trace_interval = Seconds{detail::get_as<double>(j["trace_interval"], "trace_interval")};
  if (j.contains("pf_window")) c.sim.pf_window = Seconds{detail::get_as<double>(j["pf_window"], "pf_window")};
  if (j.contains("cw_min")) c.sim.cw_min = detail::get_as<int>(j["cw_min"], "cw_min");
  if (j.contains("m")) c.sim.backoff_stages = detail::get_as<int>(j["m"], "m");
  if (j.contains("fading")) {
    const auto f = detail::get_as<std::string>(j["fading"], "fading");
    if (f == "block_constant") c.sim.fading = FadingMode::block_constant;
    else if (f == "redraw_at_epoch") c.sim.fading = FadingMode::redraw_at_epoch;
    else throw ConfigError("config: unknown fading mode '" + f + "'");
  }
  if (j.contains("timing")) {
    if (j["timing"].contains("preset")) throw ConfigError("config: timing has no presets");
    detail::apply_timing(c.sim.timing, j["timing"]);
  }
  if (j.contains("hyperparams")) detail::apply_hyperparams(c.sim.hp, j["hyperparams"]);
  if (j.contains("perturbation")) {
    const auto& p = j["perturbation"];
    if (p.is_null()) {
      c.sim.perturbation.reset();
      c.swap_at_fraction.reset();
    } else {
      detail::reject_unknown(p, {"ap_a", "ap_b", "at_tick", "at_fraction"}, "perturbation.");
      Perturbation pert = c.sim.perturbation.value_or(Perturbation{});
      if (p.contains("ap_a")) pert.ap_a = detail::get_as<int>(p["ap_a"], "perturbation.ap_a");
      if (p.contains("ap_b")) pert.ap_b = detail::get_as<int>(p["ap_b"], "perturbation.ap_b");
      if (p.contains("at_tick")) {
        pert.at_tick = detail::get_as<std::int64_t>(p["at_tick"], "perturbation.at_tick");
        c.swap_at_fraction.reset();
      }
      if (p.contains("at_fraction"))
        c.swap_at_fraction = detail::get_as<double>(p["at_fraction"], "perturbation.at_fraction");
      c.sim.perturbation = pert;
    }
  }
  c.validate();
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

/// Canonical echo of the effective configuration (after preset expansion).
inline json to_json(const ScenarioConfig& c) {
  json j;
  j["preset"] = c.preset;
  j["protocols"] = json::array();
  for (auto p : c.protocols) j["protocols"].push_back(std::string(to_string(p)));
  j["N"] = c.aps;
  j["F"] = c.channels;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  const auto& s = c.sim;
  j["duration"] = s.duration.count();
  j["training_slots"] = s.training_slots;
  j["trace_interval"] = s.trace_interval.count();
  j["pf_window"] = s.pf_window.count();
  j["cw_min"] = s.cw_min;
  j["m"] = s.backoff_stages;
  j["fading"] = s.fading == FadingMode::block_constant ? "block_constant" : "redraw_at_epoch";
  const auto& t = s.timing;
  j["timing"] = {{"slot_time_us", t.slot_time.count()},   {"sifs_us", t.sifs.count()},
                 {"difs_us", t.difs.count()},             {"phy_header_us", t.phy_header.count()},
                 {"txop_us", t.txop.count()},             {"cts_timeout_us", t.cts_timeout.count()},
                 {"ack_timeout_us", t.ack_timeout.count()}, {"mac_header_bytes", t.mac_header_bytes},
                 {"ack_bytes", t.ack_bytes},              {"rts_bytes", t.rts_bytes},
                 {"cts_bytes", t.cts_bytes},              {"atf_bytes", t.atf_bytes},
                 {"basic_rate_bps", t.basic_rate_bps},    {"channel_bandwidth_hz", t.channel_bandwidth_hz}};
  const auto& h = s.hp;
  j["hyperparams"] = {{"rho", h.rho},         {"gamma", h.gamma},
                      {"epsilon", h.epsilon}, {"eta", h.eta},
                      {"history", h.history}, {"batch", h.batch},
                      {"buffer_capacity", h.buffer_capacity}, {"apc_period_ms", h.apc_period_ms}};
  if (s.perturbation) {
    j["perturbation"] = {{"ap_a", s.perturbation->ap_a}, {"ap_b", s.perturbation->ap_b},
                         {"at_tick", s.perturbation->at_tick}};
    if (c.swap_at_fraction) j["perturbation"]["at_fraction"] = *c.swap_at_fraction;
  } else {
    j["perturbation"] = nullptr;
  }
  return j;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t config_hash(const ScenarioConfig& c) { return fnv1a(to_json(c).dump()); }

/// Trial seeds depend on (seed, N, F, trial) and not on the protocol, so every
/// protocol at a sweep point sees the same spectral efficiencies.
inline std::uint64_t trial_seed(std::uint64_t seed, int n, int f, int trial) {
  RngStream root(seed);
  const auto key = (static_cast<std::uint64_t>(n) << 40) ^ (static_cast<std::uint64_t>(f) << 20) ^
                   static_cast<std::uint64_t>(trial);
  return root.substream(key).seed();
}

struct PointResult {
  Protocol protocol{};
  int aps = 0;
  int channels = 0;
  SimConfig sim;
  std::vector<TrialResult> trials;
  std::vector<double> model_throughput_bps; // per trial, backoff protocols only
};

struct RunReport {
  ScenarioConfig config;
  std::vector<PointResult> points;
  double wall_seconds = 0.0;
};

/// Worker count from DLCA_WORKERS, else the hardware concurrency.
inline unsigned worker_count() {
  if (const char* env = std::getenv("DLCA_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw ConfigError("DLCA_WORKERS must be a positive integer");
    return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs every trial of every point. Results are stored by index, so the
/// report does not depend on how trials were scheduled across threads.
inline RunReport run_scenario(const ScenarioConfig& cfg, unsigned workers = 0) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunReport report;
  report.config = cfg;
  for (auto p : cfg.protocols)
    for (int n : cfg.aps)
      for (int f : cfg.channels) {
        PointResult pr;
        pr.protocol = p;
        pr.aps = n;
        pr.channels = f;
        pr.sim = cfg.point(p, n, f);
        pr.trials.resize(static_cast<std::size_t>(cfg.trials));
        report.points.push_back(std::move(pr));
      }

  struct Job {
    std::size_t point;
    int trial;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < report.points.size(); ++i)
    for (int k = 0; k < cfg.trials; ++k) jobs.push_back({i, k});

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      auto& pr = report.points[jobs[j].point];
      try {
        pr.trials[static_cast<std::size_t>(jobs[j].trial)] =
            run_trial(pr.sim, trial_seed(cfg.seed, pr.aps, pr.channels, jobs[j].trial));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(jobs.size());
      }
    }
  };
  const unsigned n_workers =
      std::max(1u, std::min<unsigned>(workers ? workers : worker_count(),
                                      static_cast<unsigned>(jobs.size())));
  if (n_workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < n_workers; ++i) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  for (auto& pr : report.points) {
    if (is_dlca(pr.protocol) || pr.protocol == Protocol::sh_txop) continue;
    for (const auto& t : pr.trials) pr.model_throughput_bps.push_back(model_throughput(pr.sim, t));
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

/// Mean over trials, ignoring NaN entries; NaN when none is finite.
inline double finite_mean(const std::vector<double>& v) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v)
    if (std::isfinite(x)) {
      s += x;
      ++n;
    }
  return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

} // namespace dlca
