// Acceptance checks. Usage: dlca_acceptance <criterion 1..10>
// Prints one PASS/FAIL line and exits non-zero on FAIL.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>

#include "dlca/dlca.hpp"
#include "oracles.hpp"

using namespace dlca;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome reward_fold() {
  const auto t0 = std::chrono::steady_clock::now();
  RngStream rng(101);
  const double etas[] = {0.0, 0.25, 0.5, 1.0};
  int mismatches = 0;
  for (int k = 0; k < 10000; ++k) {
    const double eta = etas[k % 4];
    std::vector<int> actions(20), ok(20);
    std::vector<HistoryEntry> w(20);
    for (std::size_t i = 0; i < 20; ++i) {
      actions[i] = static_cast<int>(rng.below(2));
      ok[i] = static_cast<int>(rng.below(2));
    }
    actions.back() = 1; // the reward being folded belongs to a transmit action
    for (std::size_t i = 0; i < 20; ++i)
      w[i] = {actions[i], static_cast<int>(rng.below(2)), actions[i] ? (ok[i] ? 1 : -1) : 0};
    const double fold = estimate_reward(w, eta);
    const double direct = oracle::reward_direct_sum(actions, ok, eta);
    if (std::bit_cast<std::uint64_t>(fold) != std::bit_cast<std::uint64_t>(direct)) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 1.0, fmt("%d/10000 windows differ, %.3f s", mismatches, secs)};
}

// Which hidden units are active, from a plain forward pass.
std::vector<bool> relu_pattern(const qnn::QnnParams& p, const std::vector<double>& x) {
  const auto& a = p.architecture();
  std::vector<bool> on;
  std::vector<double> cur = x;
  for (std::size_t l = 0; l + 1 < a.layers(); ++l) {
    const std::size_t n_in = a.widths[l], n_out = a.widths[l + 1];
    std::vector<double> next(n_out);
    for (std::size_t j = 0; j < n_out; ++j) {
      double z = p.biases(l)[j];
      for (std::size_t i = 0; i < n_in; ++i) z += p.weights(l)[i * n_out + j] * cur[i];
      on.push_back(z > 0.0);
      next[j] = z > 0.0 ? z : 0.0;
    }
    cur = std::move(next);
  }
  return on;
}

Outcome gradient_check() {
  // loss = 0.5 (y - Q(s, a))^2 on the full network; backprop against central
  // differences with h = 1e-5 on every parameter of every pair
  const auto t0 = std::chrono::steady_clock::now();
  RngStream rng(102);
  const auto arch = qnn::Architecture::standard();
  auto p = qnn::initialize(arch, rng);
  qnn::Workspace ws;
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0, straddling = 0;
  for (int pair = 0; pair < 100; ++pair) {
    std::vector<double> s(arch.input_width());
    for (auto& x : s) x = rng.uniform(-1.0, 1.0);
    const int a = static_cast<int>(rng.below(2));
    const double y = rng.uniform(-2.0, 2.0);
    auto loss = [&](const qnn::QnnParams& q) {
      const double e = y - qnn::forward(q, s)[static_cast<std::size_t>(a)];
      return 0.5 * e * e;
    };

    const auto q = qnn::forward_batch(p, s, 1, ws);
    const double coeff = -(y - q[static_cast<std::size_t>(a)]);
    qnn::GradientSet g(arch);
    g.fill(0.0);
    const int acts[] = {a};
    const double coeffs[] = {coeff};
    qnn::accumulate_q_gradient(p, acts, coeffs, g, ws);

    for (std::size_t i = 0; i < p.values().size(); ++i) {
      const double keep = p.values()[i];
      p.values()[i] = keep + h;
      const double up = loss(p);
      p.values()[i] = keep - h;
      const double down = loss(p);
      p.values()[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double bp = g.values()[i];
      // a parameter behind a dead unit has zero gradient, and its difference
      // quotient is pure rounding noise (about 1e-12 here), hence the floor
      const double scale = std::max({std::abs(fd), std::abs(bp), 1e-6});
      const double err = std::abs(fd - bp) / scale;
      if (err >= 1e-4) {
        // the derivative does not exist where the two probes sit on different
        // sides of a ReLU kink; such coordinates are counted and left out
        p.values()[i] = keep + h;
        const auto above = relu_pattern(p, s);
        p.values()[i] = keep - h;
        const auto below = relu_pattern(p, s);
        p.values()[i] = keep;
        if (above != below) {
          ++straddling;
          continue;
        }
      }
      worst = std::max(worst, err);
      ++checked;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 30.0,
          fmt("max relative error %.3g over %zu derivatives (%zu straddling a ReLU kink skipped), %.1f s",
              worst, checked, straddling, secs)};
}

Outcome fomaml_average() {
  RngStream rng(103);
  const int n = 8;
  Hyperparams hp;
  const auto arch = qnn::Architecture::standard(hp.state_width());
  std::vector<Agent> agents;
  for (int i = 0; i < n; ++i) agents.emplace_back(hp, qnn::initialize(arch, rng), rng.substream(i));
  // a few hundred slots of random feedback so each agent trains away from its init
  for (int t = 0; t < 200; ++t)
    for (auto& ag : agents) {
      const int act = ag.act(3, n);
      ag.observe(act, act ? (rng.bernoulli(0.5) ? Feedback::Cts : Feedback::Timeout) : Feedback::None,
                 static_cast<int>(rng.below(2)));
    }
  std::vector<qnn::QnnParams> nets;
  std::vector<const ReplayBuffer*> bufs;
  for (auto& ag : agents) {
    nets.push_back(ag.params());
    bufs.push_back(&ag.buffer());
  }
  auto res = fomaml_round(nets, bufs, hp.rho, hp.gamma, hp.batch, rng);

  std::uint64_t worst_ulp = 0;
  for (std::size_t i = 0; i < res.average.values().size(); ++i) {
    long double sum = 0.0L;
    for (const auto& p : nets) sum += p.values()[i];
    const double mean = static_cast<double>(sum / n);
    const auto a = std::bit_cast<std::int64_t>(res.average.values()[i]);
    const auto b = std::bit_cast<std::int64_t>(mean);
    // same sign in practice; a sign flip would show up as a huge distance
    worst_ulp = std::max(worst_ulp, static_cast<std::uint64_t>(a > b ? a - b : b - a));
  }

  for (auto& ag : agents) ag.set_params(res.broadcast);
  int disagreements = 0;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> probe(arch.input_width());
    for (auto& x : probe) x = static_cast<double>(rng.below(3)) - 1.0;
    probe.back() = rng.uniform01();
    const auto ref = qnn::forward(agents.front().params(), probe);
    for (const auto& ag : agents)
      if (qnn::forward(ag.params(), probe) != ref) ++disagreements;
  }
  return {worst_ulp <= 1 && disagreements == 0,
          fmt("max %llu ulp from the mean, %d probe disagreements, global step %s",
              static_cast<unsigned long long>(worst_ulp), disagreements,
              res.gradient_step_applied ? "applied" : "skipped")};
}

Outcome greedy_vs_brute_force() {
  // utility in bit/s as everywhere else; the Mbit/s figure is reported too
  // because there the log terms are small and the 95% bound is much tighter
  const auto t0 = std::chrono::steady_clock::now();
  RngStream rng(104);
  double worst = std::numeric_limits<double>::infinity();
  double worst_mbps = worst;
  for (int k = 0; k < 50; ++k) {
    const int n = 1 + static_cast<int>(rng.below(6));
    const int f = 1 + static_cast<int>(rng.below(3));
    auto c = ChannelModel::draw(n, f, rng);
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(f)));
    for (int a = 0; a < n; ++a)
      for (int ch = 0; ch < f; ++ch)
        rows[static_cast<std::size_t>(a)][static_cast<std::size_t>(ch)] = c.efficiency(a, ch);
    const auto plan = greedy_pf_allocate(c, std::vector<double>(static_cast<std::size_t>(n), 1.0), 20e6);
    worst = std::min(worst, compute_utility(proportional_rates(c, plan, 20e6)) / oracle::best_static_utility(rows, 20e6));
    worst_mbps = std::min(worst_mbps, compute_utility(proportional_rates(c, plan, 20.0)) /
                                          oracle::best_static_utility(rows, 20.0));
  }
  const double secs = seconds_since(t0);
  return {worst >= 0.95 && secs < 10.0,
          fmt("worst greedy/optimal utility %.4f (%.4f with rates in Mbit/s), %.2f s", worst, worst_mbps, secs)};
}

ScenarioConfig scenario(const char* text) { return parse_config(json::parse(text)); }

Outcome zero_collisions() {
  auto cfg = scenario(R"({"protocol": "dlca_greedy_fomaml", "N": 8, "F": 8, "trials": 10,
                          "seed": 105, "training_slots": 20000})");
  cfg.sim.duration = Seconds(cfg.sim.dlca_slot() * 2000.0);
  const auto report = run_scenario(cfg);
  int good = 0;
  std::string per;
  for (const auto& t : report.points.front().trials) {
    const auto& m = t.metrics;
    const bool ok = m.counters.collisions == 0 && m.idle_per_txop < 0.05;
    good += ok;
    per += fmt(" (%lld coll, %.3f idle)", static_cast<long long>(m.counters.collisions), m.idle_per_txop);
  }
  return {good >= 9, fmt("%d/10 trials collision-free with idle/TXOP < 0.05:", good) + per};
}

Outcome sim_vs_theory() {
  auto cfg = scenario(R"({"protocol": "rts_cts", "N": [8, 16, 32], "F": 8, "trials": 10,
                          "seed": 106, "training_slots": 1000, "duration": 2.0})");
  const auto report = run_scenario(cfg);
  bool pass = true;
  std::string detail;
  for (const auto& p : report.points) {
    double sim = 0.0, model = 0.0;
    for (std::size_t i = 0; i < p.trials.size(); ++i) {
      sim += p.trials[i].metrics.throughput_bps;
      model += p.model_throughput_bps[i];
    }
    const double err = sim / model - 1.0;
    pass = pass && std::abs(err) <= 0.05;
    detail += fmt(" N=%d: sim %.1f Mb/s vs model %.1f Mb/s (%+.2f%%);", p.aps, sim / 10e6, model / 10e6, 100 * err);
  }
  return {pass, "rts_cts over 10 trials," + detail};
}

Outcome throughput_ordering() {
  auto cfg = scenario(R"({"protocols": ["dlca_greedy_fomaml", "rts_cts_optimized", "sh_txop"],
                          "N": 16, "F": 8, "trials": 10, "seed": 107, "training_slots": 20000})");
  const auto report = run_scenario(cfg);
  std::vector<double> mean;
  for (const auto& p : report.points) {
    double s = 0.0;
    for (const auto& t : p.trials) s += t.metrics.throughput_bps;
    mean.push_back(s / static_cast<double>(p.trials.size()));
  }
  const bool pass = mean[0] >= 0.99 * mean[1] && mean[1] >= mean[2];
  return {pass, fmt("dlca_greedy_fomaml %.1f, rts_cts_optimized %.1f, sh_txop %.1f Mb/s",
                    mean[0] / 1e6, mean[1] / 1e6, mean[2] / 1e6)};
}

double spread(const std::vector<double>& b) {
  const auto [lo, hi] = std::minmax_element(b.begin(), b.end());
  if (!(*lo > 0.0) || !std::isfinite(*hi)) return std::numeric_limits<double>::infinity();
  return *hi / *lo;
}

Outcome pf_recovery() {
  // time is measured from the start of the run; convergence is the first
  // trace bucket from which the max/min PF ratio stays within 1.2 until the
  // swap, recovery the first bucket after the swap from which it stays there
  auto cfg = scenario(R"({"protocol": "dlca_greedy_fomaml", "N": 18, "F": 8, "trials": 10,
                          "seed": 108, "training_slots": 0, "duration": 20.0,
                          "perturbation": {"ap_a": 0, "ap_b": 2, "at_fraction": 0.5}})");
  const auto report = run_scenario(cfg);
  const auto& point = report.points.front();
  const double swap = Seconds(*point.sim.swap_time()).count();
  int good = 0;
  std::string per;
  for (const auto& t : point.trials) {
    const auto& tr = t.trace;
    std::optional<double> conv, rec;
    for (std::size_t k = tr.time_s.size(); k-- > 0;) {
      const bool ok = spread(tr.pf_ratio[k]) <= 1.2;
      const double start = tr.time_s[k] - tr.interval.count();
      if (tr.time_s[k] <= swap + 1e-9) {
        if (!ok) break;
        conv = start;
      }
    }
    for (std::size_t k = tr.time_s.size(); k-- > 0;) {
      if (tr.time_s[k] <= swap + 1e-9) break;
      if (spread(tr.pf_ratio[k]) > 1.2) break;
      rec = tr.time_s[k] - tr.interval.count() - swap;
    }
    // the bucket that ends at the swap belongs to the pre-swap run
    if (conv && *conv >= swap) conv.reset();
    const bool ok = conv && rec && *rec <= 0.5 * std::max(*conv, tr.interval.count());
    good += ok;
    per += conv ? fmt(" (conv %.1f s", *conv) : std::string(" (no conv");
    per += rec ? fmt(", rec %.1f s", *rec) : std::string(", no rec");
    // APs below a tenth of their proportional share just before the swap
    std::size_t last = 0;
    while (last + 1 < tr.time_s.size() && tr.time_s[last + 1] <= swap + 1e-9) ++last;
    const auto& b = tr.pf_ratio[last];
    per += fmt(", %d/%zu APs below 0.1)", static_cast<int>(std::count_if(b.begin(), b.end(), [](double x) { return !(x >= 0.1); })),
               b.size());
  }
  return {good >= 8, fmt("%d/10 trials converge and recover in time, swap at %.1f s:", good, swap) + per};
}

Outcome bianchi_chains() {
  const int w = 32, m = 6;
  bool pass = bianchi_fixed_point(1, w, m).tau == 2.0 / (w + 1.0);
  std::string detail = pass ? "n=1 exact;" : "n=1 closed form differs;";
  for (int n = 2; n <= 8; ++n) {
    const auto s = bianchi_fixed_point(n, w, m);
    const auto sim = oracle::simulate_backoff_chains(n, w, m, 10'000'000, 900 + static_cast<std::uint64_t>(n));
    const double err = s.tau / sim.tau - 1.0;
    pass = pass && std::abs(err) < 0.01 && std::abs(s.residual) < 1e-9;
    detail += fmt(" n=%d tau %+.2f%% (p model %.4f sim %.4f, residual %.1e);", n, 100 * err, s.p, sim.p,
                  std::abs(s.residual));
  }
  return {pass, detail};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  // every preset at reduced scale: same seed, two runs, different worker counts
  const auto root = std::filesystem::temp_directory_path() / "dlca_acceptance_determinism";
  std::filesystem::remove_all(root);
  bool pass = true;
  std::string detail;
  for (const auto& preset : kPresets) {
    auto cfg = parse_config(json{{"preset", preset.name}, {"trials", 1}, {"seed", 109},
                                 {"training_slots", 100}, {"duration", 0.1},
                                 {"trace_interval", 0.02}, {"pf_window", 0.05}});
    const auto a = root / (std::string(preset.name) + "_a");
    const auto b = root / (std::string(preset.name) + "_b");
    emit_csv(run_scenario(cfg, 1), a);
    emit_csv(run_scenario(cfg, 2), b);
    bool same = true;
    for (const char* f : {"summary.csv", "trace.csv"}) {
      const auto x = slurp(a / f), y = slurp(b / f);
      same = same && !x.empty() && x == y;
    }
    pass = pass && same;
    detail += fmt("%s%s %s;", detail.empty() ? "" : " ", preset.name, same ? "identical" : "DIFFERS");
  }
  std::filesystem::remove_all(root);
  return {pass, detail};
}

const std::pair<const char*, std::function<Outcome()>> kCriteria[] = {
    {"reward fold equals direct sum", reward_fold},
    {"backprop matches finite differences", gradient_check},
    {"FOMAML averaging and broadcast", fomaml_average},
    {"greedy PF within 5% of brute force", greedy_vs_brute_force},
    {"zero-collision regime", zero_collisions},
    {"RTS/CTS simulation vs analytical model", sim_vs_theory},
    {"throughput ordering at N=16", throughput_ordering},
    {"PF-ratio convergence and recovery", pf_recovery},
    {"Bianchi fixed point vs chain simulation", bianchi_chains},
    {"byte-identical CSV across runs", determinism},
};

} // namespace

int main(int argc, char** argv) {
  const int which = argc > 1 ? std::atoi(argv[1]) : 0;
  if (which < 1 || which > 10) {
    std::fprintf(stderr, "usage: %s <criterion 1..10>\n", argv[0]);
    return 2;
  }
  const auto& [name, check] = kCriteria[which - 1];
  Outcome v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  std::printf("criterion %d (%s): %s: %s\n", which, name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
  return v.pass ? 0 : 1;
}
