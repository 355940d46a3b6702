// One PASS/FAIL line per acceptance criterion. Exit status is nonzero if any criterion fails.
#include "nsgp/lab.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

using namespace nsgp;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Word random_word(const InducedScheme& s, std::size_t n, std::mt19937_64& rng) {
  Word w{std::uint32_t(rng() % s.symbols.size())};
  while (w.size() < n) {
    auto c = s.symbols[w.back()].image;
    std::size_t lo = s.symbols_begin[c], hi = s.symbols_begin[c + 1];
    w.push_back(std::uint32_t(lo + rng() % (hi - lo)));
  }
  return w;
}

const QVec& center() {
  static QVec p{Q(1, 2), Q(1, 4), Q(1, 4)};
  return p;
}

// ---------------------------------------------------------------- 1

Outcome map_fidelity() {
  auto map = build_example_map();
  double worst_end = 0.0, worst_deriv = 0.0;
  for (const auto& b : map.branches) {
    double l = b.value(b.lo), h = b.value(b.hi);
    worst_end = std::max({worst_end, std::min(std::fabs(l), std::fabs(l - 1)), std::min(std::fabs(h), std::fabs(h - 1))});
    // Full branches: the endpoint images are 0 and 1 in some order.
    if (std::fabs(std::fabs(h - l) - 1.0) > 1e-12) worst_end = std::max(worst_end, std::fabs(std::fabs(h - l) - 1.0));
  }
  for (const auto& fp : map.fixed_points)
    worst_deriv = std::max(worst_deriv, std::fabs(eval_with_deriv(map, fp.xi).dy - 1.0));
  bool ok = worst_end <= 1e-12 && worst_deriv <= 1e-9 && map.fixed_points.size() == 3;
  return {ok, "endpoint error " + fmt("%.3g", worst_end) + ", |f'(xi)-1| " + fmt("%.3g", worst_deriv)};
}

// ---------------------------------------------------------------- 2

Outcome tail_exponent() {
  auto t0 = Clock::now();
  auto s = build_scheme(build_example_map(), 10000);
  auto t = tail_table(s);
  bool ok = t.fit_lo == 100 && t.fit_hi == 10000;
  std::string detail = "alpha_hat";
  for (double a : t.alpha_hat) {
    ok &= std::fabs(a - 0.5) <= 0.05;
    detail += " " + fmt("%.4f", a);
  }
  // Direct iteration on 1e3 random points of Y against the level-length summation.
  double y_len = 0.0;
  for (const auto& c : s.y) y_len += c.iv.length();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t probe = 10, samples = 1000;
  std::vector<std::size_t> over(s.d(), 0);
  for (std::size_t k = 0; k < samples;) {
    double x = u(rng);
    if (classify(s, x).kind != RegionKind::Y) continue;
    ++k;
    auto h = hit_time(s.map, s, x, 100000000);
    for (std::size_t j = 0; j < s.d(); ++j) over[j] += h.tau_vec[j] > std::int64_t(probe);
  }
  double worst_z = 0.0;
  for (std::size_t j = 0; j < s.d(); ++j) {
    double p = t.mass[j][probe] / y_len;
    double z = std::fabs(double(over[j]) / samples - p) / std::sqrt(p * (1 - p) / samples);
    worst_z = std::max(worst_z, z);
  }
  ok &= worst_z < 4.0;
  double dt = seconds_since(t0);
  ok &= dt < 60.0;
  return {ok, detail + "; iteration cross-check max z " + fmt("%.2f", worst_z) + "; " + fmt("%.1f s", dt)};
}

// ---------------------------------------------------------------- 3

Outcome cylinder_calculus() {
  auto s = build_scheme(build_example_map(), 20);
  auto st = expansion_stats(s, 3, 32, 0);
  std::mt19937_64 rng(31);
  std::size_t failures = 0;
  for (int k = 0; k < 1000; ++k) {
    Cylinder a = make_cylinder(s, random_word(s, 1 + rng() % 3, rng));
    Word wb = random_word(s, 1 + rng() % 3, rng);
    while (s.symbols[wb[0]].base != a.image) wb = random_word(s, wb.size(), rng);
    Cylinder b = make_cylinder(s, wb);
    Cylinder ab = concat(s, a, b);
    bool ok = ab.tau == a.tau + b.tau;
    // Independent rational oracle for the three ratio inequalities.
    Q ta(a.tau), tb(b.tau), tab = ta + tb;
    for (std::size_t i = 0; i < s.d(); ++i) {
      ok &= ab.tau_vec[i] == a.tau_vec[i] + b.tau_vec[i];
      Q ra = Q(a.tau_vec[i]) / ta, rb = Q(b.tau_vec[i]) / tb, rab = Q(ab.tau_vec[i]) / tab;
      ok &= abs(rab - ra) <= 2 * tb / tab && abs(rab - rb) <= 2 * ta / tab;
      ok &= rab >= std::min(ra, rb) && rab <= std::max(ra, rb);
    }
    ok &= check_ratio_bounds(a, b).all();
    double gap = log_length(s, ab.word) - log_length(s, a.word) - log_length(s, b.word);
    ok &= std::fabs(gap) < std::log(1.1 * st.D_mult);
    failures += !ok;
  }
  return {failures == 0, std::to_string(failures) + " failures on 1000 pairs, D_hat " + fmt("%.3f", st.D_hat)};
}

// ---------------------------------------------------------------- 4

Outcome vdim_solver() {
  double e1 = std::fabs(vdim_of_lengths({0.5, 0.5}) - 1.0);
  double e2 = 0.0;
  for (int k = 2; k <= 6; ++k)
    for (double l : {0.05, 0.1, 0.2}) {
      if (k * l >= 1) continue;
      e2 = std::max(e2, std::fabs(vdim_of_lengths(std::vector<double>(k, l)) - std::log(k) / std::log(1 / l)));
    }
  double v = vdim_of_lengths({0.5, 1.0 / 3.0});
  bool ok = e1 <= 1e-9 && e2 <= 1e-9 && std::fabs(v - 0.7878) <= 1e-3;
  return {ok, "{1/2,1/2} err " + fmt("%.2g", e1) + ", equal lengths err " + fmt("%.2g", e2) + ", {1/2,1/3} -> " +
                  fmt("%.6f", v)};
}

// ---------------------------------------------------------------- 5

Outcome family_certificates() {
  auto s = build_scheme(build_example_map(), 20);
  bool ok = true;
  std::string detail;
  double v3 = 0, v4 = 0;
  for (std::size_t n : {3, 4}) {
    ApproxFamily f;
    try {
      f = build_family(s, n, Q(2, 5), center(), 100000);
    } catch (const std::exception& e) {
      return {false, std::string("n=") + std::to_string(n) + ": " + e.what()};
    }
    BallTest item1(center(), Q(3, 10));
    std::size_t outside = 0;
    for (const auto& a : f.cylinders) outside += !item1.contains(a.tau_vec.data(), a.tau);
    bool cover = f.C_leb > 0 && f.C_leb >= f.C_leb_bound;
    auto rep = verify_family(s, f, {std::size_t(f.N0) + 1, std::size_t(2 * f.N0)}, 20, 1);
    ok &= outside == 0 && cover && rep.ratio_ok;
    (n == 3 ? v3 : v4) = f.vdim;
    detail += "n=" + std::to_string(n) + ": " + std::to_string(f.cylinders.size()) + " words, vdim " + fmt("%.4f", f.vdim) +
              (outside == 0 && cover && rep.ratio_ok ? " items ok; " : " items FAIL; ");
  }
  ok &= v3 < v4 && v4 >= 0.7;
  return {ok, detail + "need vdim(A(3)) < vdim(A(4)) and vdim(A(4)) >= 0.7"};
}

// ---------------------------------------------------------------- 6

Outcome connectors() {
  auto s = build_scheme(build_example_map(), 20);
  auto c = find_connectors(s);
  std::vector<std::vector<bool>> G(s.num_big(), std::vector<bool>(s.num_big(), false));
  for (const auto& sym : s.symbols) G[s.big_of(sym.base)][s.big_of(sym.image)] = true;
  bool minus_loops = s.num_big() == 3;
  for (std::size_t i = 0; i < G.size(); ++i)
    for (std::size_t j = 0; j < G.size(); ++j) minus_loops &= G[i][j] == (i != j);
  return {c.k0 == 2 && minus_loops && primitivity_index(G) == 2,
          "k0 = " + std::to_string(c.k0) + (minus_loops ? ", big-image graph is K3 minus loops" : ", unexpected graph")};
}

// ---------------------------------------------------------------- 7, 9

struct SingleRun {
  InducedScheme s;
  BridgeSchedule sch;
  GenericPoint x;
  GenericCertificate cert;
  double seconds = 0;
  std::string error;
};

SingleRun& single_run() {
  static SingleRun r = [] {
    SingleRun r;
    auto t0 = Clock::now();
    r.s = build_scheme(build_example_map(), 120);
    try {
      r.sch = plan_schedule(r.s, TargetSpec::single(center()), 4, Q(2, 5));
      r.x = generate_point(r.s, r.sch);
      r.cert = verify_generic(r.s, r.sch, r.x, true);
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    r.seconds = seconds_since(t0);
    return r;
  }();
  return r;
}

Outcome bridging_single() {
  auto& r = single_run();
  if (!r.error.empty()) return {false, r.error};
  bool ok = r.sch.all_pass() && r.cert.pass && r.cert.replay_ok && r.seconds < 300;
  std::string detail = "checkpoint |ratio - p|/(3 eps_i):";
  for (std::size_t i = 0; i < r.sch.levels.size(); ++i) {
    Q err = max_norm(r.x.checkpoints[i], center());
    ok &= err <= 3 * r.sch.levels[i].eps;
    detail += " " + fmt("%.3f", to_double(err / (3 * r.sch.levels[i].eps)));
  }
  detail += "; " + std::to_string(r.cert.positions_checked) + " positions, replay " +
            std::to_string(r.cert.replay_windows) + " windows over " + std::to_string(r.cert.replay_symbols) +
            " symbols; " + fmt("%.1f s", r.seconds);
  if (r.cert.first) detail += "; first violation regime " + r.cert.first->regime + ": " + r.cert.first->detail;
  return {ok, detail};
}

Outcome local_dimension_trend() {
  auto& r = single_run();
  if (!r.error.empty()) return {false, r.error};
  auto prof = local_dim_profile(r.s, r.sch, r.x);
  bool in_band = true, toward_one = true;
  std::string detail = "gamma_i [band]:";
  for (std::size_t k = 0; k < prof.bands.size(); ++k) {
    const auto& b = prof.bands[k];
    const double e = to_double(r.sch.levels[b.level - 1].eps);
    const double lo = 1 - 4 * e - b.slack, hi = 1 + 4 * e + b.slack;
    in_band &= b.gamma >= lo && b.gamma <= hi;
    if (k > 0) toward_one &= std::fabs(b.gamma - 1) <= std::fabs(prof.bands[k - 1].gamma - 1);
    detail += " " + fmt("%.4f", b.gamma) + " [" + fmt("%.3f", lo) + "," + fmt("%.3f", hi) + "]";
  }
  detail += in_band ? "; all in band" : "; outside band";
  detail += toward_one ? "; midpoints move toward 1" : "; midpoints move away from 1";
  return {in_band && toward_one, detail};
}

// ---------------------------------------------------------------- 8

Outcome bridging_polyline() {
  auto s = build_scheme(build_example_map(), 120);
  QVec A{Q(1), Q(0), Q(0)}, B{Q(0), Q(1), Q(0)};
  try {
    auto sch = plan_schedule(s, TargetSpec::polyline({A, B}), 3, Q(1, 10));
    auto x = generate_point(s, sch);
    auto cert = verify_generic(s, sch, x, true);
    Q dA = 1, dB = 1;
    for (const auto& c : x.checkpoints) {
      dA = std::min(dA, max_norm(c, A));
      dB = std::min(dB, max_norm(c, B));
    }
    bool ok = sch.all_pass() && cert.pass && dA <= Q(1, 10) && dB <= Q(1, 10);
    std::string detail = "closest checkpoint to e1 " + fmt("%.4f", to_double(dA)) + ", to e2 " + fmt("%.4f", to_double(dB)) +
                         "; max step per level";
    for (double m : cert.max_step) detail += " " + fmt("%.2e", m);
    if (cert.first) detail += "; first violation regime " + cert.first->regime + ": " + cert.first->detail;
    return {ok, detail};
  } catch (const std::exception& e) {
    return {false, e.what()};
  }
}

// ---------------------------------------------------------------- 10

Outcome coding_sandwich() {
  auto s = build_scheme(build_example_map(), 2000);
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t literal = 0, corrected = 0, y_bad = 0, traces = 0, windows = 0;
  std::int64_t first_literal = -1;
  while (traces < 100) {
    double x0 = u(rng);
    if (classify(s, x0).kind != RegionKind::Y) continue;
    auto t = simulate_occupancy(s, x0, 100000, true);
    if (t.return_marks.size() < 2) continue;
    ++traces;
    auto r = coding_check(t);
    windows += r.windows;
    literal += r.literal_sandwich_violations + r.literal_monotone_violations;
    corrected += r.sandwich_violations + r.monotone_violations;
    y_bad += r.y_violations;
    if (first_literal < 0 && r.literal_witness) first_literal = *r.literal_witness;
  }
  std::string detail = std::to_string(traces) + " traces, " + std::to_string(windows) + " windows; e_tau_k(Y) = k/tau_k failures " +
                       std::to_string(y_bad) + "; sandwich/monotonicity between consecutive returns: " +
                       std::to_string(literal) + " violations";
  if (first_literal >= 0) detail += " (first at n = " + std::to_string(first_literal) + ", one step after a return)";
  detail += "; counting the Y visit at tau_k first: " + std::to_string(corrected) + " violations";
  return {literal == 0 && y_bad == 0, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"map fidelity", map_fidelity},
      {"tail exponent", tail_exponent},
      {"cylinder calculus", cylinder_calculus},
      {"vdim solver", vdim_solver},
      {"A(n) certificates", family_certificates},
      {"connectors", connectors},
      {"bridging single target", bridging_single},
      {"bridging polyline", bridging_polyline},
      {"local dimension trend", local_dimension_trend},
      {"coding sandwich", coding_sandwich},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed ? 1 : 0;
}
