#include "nsgp/lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace nsgp {

namespace {

using i128 = __int128;

// sign(a/b - c/d) for positive b, d.
int cmp_frac(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  i128 l = i128(a) * d, r = i128(c) * b;
  return (l > r) - (l < r);
}

void record(OccupancyTrace& t, std::uint8_t region, std::int64_t m, std::vector<std::int64_t>& running) {
  // region of f^m x, m >= 1: a Y hit is a mark with counts over f^0..f^{m-1}.
  if (region == t.d) {
    t.return_marks.push_back(m);
    t.tau_bar.emplace_back(running.begin(), running.begin() + std::ptrdiff_t(t.d));
  }
}

std::uint8_t region_index(const InducedScheme& s, double x) {
  RegionTag r = classify(s, x);
  return r.kind == RegionKind::Y ? std::uint8_t(s.d()) : std::uint8_t(r.index);
}

double dist_max(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::fabs(a[j] - b[j]));
  return m;
}

std::vector<double> lerp(const std::vector<double>& a, const std::vector<double>& b, double t) {
  std::vector<double> p(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) p[j] = a[j] + t * (b[j] - a[j]);
  return p;
}

// Max-norm distance from p to segment [a, b]; the distance is convex in the segment parameter.
double dist_segment(const std::vector<double>& p, const std::vector<double>& a, const std::vector<double>& b) {
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 100; ++it) {
    double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
    if (dist_max(p, lerp(a, b, m1)) <= dist_max(p, lerp(a, b, m2))) hi = m2;
    else lo = m1;
  }
  return std::min({dist_max(p, lerp(a, b, 0.5 * (lo + hi))), dist_max(p, a), dist_max(p, b)});
}

template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body body) {
  threads = std::max(1u, std::min<unsigned>(threads, unsigned(count)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < count; i += threads) body(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace

OccupancyTrace simulate_occupancy(const InducedScheme& s, double x0, std::int64_t n, bool record_path) {
  if (!(x0 >= 0.0 && x0 <= 1.0)) throw std::domain_error("start outside [0,1]");
  if (n < 0 || n > 1'000'000'000) throw std::invalid_argument("horizon must lie in [0, 1e9]");
  OccupancyTrace t;
  t.x0 = x0;
  t.n = n;
  t.d = s.d();
  t.occupancy.assign(t.d + 1, 0);
  if (record_path) t.path.reserve(std::size_t(n));
  double x = x0;
  for (std::int64_t m = 0; m < n; ++m) {
    std::uint8_t r = region_index(s, x);
    if (m == 0) t.starts_in_y = r == t.d;
    else record(t, r, m, t.occupancy);
    ++t.occupancy[r];
    if (record_path) t.path.push_back(r);
    x = s.map(x);
  }
  if (n > 0) record(t, region_index(s, x), n, t.occupancy);
  return t;
}

OccupancyTrace symbolic_trace(const InducedScheme& s, const Word& w, bool record_path) {
  if (w.empty()) throw std::invalid_argument("empty word");
  OccupancyTrace t;
  t.d = s.d();
  t.occupancy.assign(t.d + 1, 0);
  t.starts_in_y = true;
  t.x0 = word_enclosure(s, w.data(), std::min<std::size_t>(w.size(), 64)).mid();
  std::int64_t m = 0;
  for (auto id : w) {
    const auto& sym = s.symbols[id];
    ++t.occupancy[t.d];
    t.occupancy[sym.target] += sym.level;
    if (record_path) {
      t.path.push_back(std::uint8_t(t.d));
      t.path.insert(t.path.end(), sym.level, std::uint8_t(sym.target));
    }
    m += sym.tau();
    t.return_marks.push_back(m);
    t.tau_bar.emplace_back(t.occupancy.begin(), t.occupancy.begin() + std::ptrdiff_t(t.d));
  }
  t.n = m;
  return t;
}

CodingReport coding_check(const OccupancyTrace& trace) {
  if (!trace.starts_in_y) throw std::invalid_argument("coding check needs a start in Y");
  if (std::int64_t(trace.path.size()) != trace.n) throw std::invalid_argument("coding check needs a recorded path");
  if (trace.return_marks.size() < 2) throw std::invalid_argument("coding check needs at least two returns");
  CodingReport rep;
  const std::size_t d = trace.d;
  // counts[n] over f^0..f^{n-1}, rebuilt incrementally; cnt_at(n) is needed at window ends only.
  std::vector<std::int64_t> cnt(d + 1, 0);
  std::int64_t n_done = 0;
  auto advance_to = [&](std::int64_t n) {
    while (n_done < n) ++cnt[trace.path[std::size_t(n_done++)]];
  };
  auto flag = [](std::size_t& counter, std::optional<std::int64_t>& w, std::int64_t n) {
    ++counter;
    if (!w) w = n;
  };
  // Y identity at every return.
  {
    std::int64_t yc = 0, m = 0;
    for (std::size_t k = 0; k < trace.return_marks.size(); ++k) {
      while (m < trace.return_marks[k]) yc += trace.path[std::size_t(m++)] == d;
      if (yc != std::int64_t(k) + 1) flag(rep.y_violations, rep.witness, trace.return_marks[k]);
      std::int64_t sum = yc;
      for (std::size_t j = 0; j < d; ++j) sum += trace.tau_bar[k][j];
      if (sum != trace.return_marks[k]) flag(rep.y_violations, rep.witness, trace.return_marks[k]);
    }
  }
  for (std::size_t k = 0; k + 1 < trace.return_marks.size(); ++k) {
    const std::int64_t t0 = trace.return_marks[k], t1 = trace.return_marks[k + 1];
    ++rep.windows;
    advance_to(t0);
    std::vector<std::int64_t> a(cnt.begin(), cnt.begin() + std::ptrdiff_t(d));
    const auto& b = trace.tau_bar[k + 1];
    std::vector<int> dir(d, 0), lit_dir(d, 0);
    std::vector<std::int64_t> prev = a;
    std::int64_t prev_n = t0;
    std::vector<std::int64_t> first(d);  // X_j counts at tau_k + 1
    for (std::int64_t n = t0 + 1; n <= t1; ++n) {
      advance_to(n);
      ++rep.steps_checked;
      if (n == t0 + 1)
        for (std::size_t j = 0; j < d; ++j) first[j] = cnt[j];
      for (std::size_t j = 0; j < d; ++j) {
        const std::int64_t c = cnt[j];
        // Literal: between a/t0 and b/t1 on the closed window.
        int lo_a = cmp_frac(c, n, a[j], t0), lo_b = cmp_frac(c, n, b[j], t1);
        if ((lo_a < 0 && lo_b < 0) || (lo_a > 0 && lo_b > 0))
          flag(rep.literal_sandwich_violations, rep.literal_witness, n);
        int step = cmp_frac(c, n, prev[j], prev_n);
        if (step != 0) {
          if (lit_dir[j] == 0) lit_dir[j] = step;
          else if (step != lit_dir[j]) flag(rep.literal_monotone_violations, rep.literal_witness, n);
        }
        // Corrected: window starts at tau_k + 1.
        if (n > t0 + 1) {
          int f_a = cmp_frac(c, n, first[j], t0 + 1), f_b = cmp_frac(c, n, b[j], t1);
          if ((f_a < 0 && f_b < 0) || (f_a > 0 && f_b > 0)) flag(rep.sandwich_violations, rep.witness, n);
          if (step != 0) {
            if (dir[j] == 0) dir[j] = step;
            else if (step != dir[j]) flag(rep.monotone_violations, rep.witness, n);
          }
        }
        prev[j] = c;
      }
      prev_n = n;
    }
    advance_to(t1);
    for (std::size_t j = 0; j < d; ++j)
      if (cnt[j] != b[j]) flag(rep.sandwich_violations, rep.witness, t1);
  }
  rep.pass = rep.sandwich_violations == 0 && rep.monotone_violations == 0 && rep.y_violations == 0;
  return rep;
}

LimitSetEstimate limit_set_estimate(const OccupancyTrace& trace, const TargetSpec& target,
                                    std::optional<std::size_t> burn_in, std::size_t target_samples) {
  const std::size_t K = trace.return_marks.size();
  const std::size_t skip = burn_in.value_or(K / 10);
  if (skip >= K) throw std::invalid_argument("burn-in leaves no returns");
  LimitSetEstimate est;
  for (std::size_t k = skip; k < K; ++k) {
    std::vector<double> p(trace.d);
    for (std::size_t j = 0; j < trace.d; ++j) p[j] = double(trace.tau_bar[k][j]) / double(trace.return_marks[k]);
    if (!est.cloud.empty()) est.max_consecutive = std::max(est.max_consecutive, dist_max(p, est.cloud.back()));
    est.cloud.push_back(std::move(p));
  }
  std::vector<std::vector<double>> verts;
  for (const auto& v : target.vertices) {
    std::vector<double> p;
    for (const auto& q : v) p.push_back(to_double(q));
    if (p.size() != trace.d) throw std::invalid_argument("target dimension differs from the trace");
    verts.push_back(std::move(p));
  }
  auto to_target = [&](const std::vector<double>& p) {
    double m = dist_max(p, verts.front());
    for (std::size_t e = 0; e + 1 < verts.size(); ++e) m = std::min(m, dist_segment(p, verts[e], verts[e + 1]));
    return m;
  };
  for (const auto& p : est.cloud) est.cloud_to_target = std::max(est.cloud_to_target, to_target(p));
  auto to_cloud = [&](const std::vector<double>& q) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& p : est.cloud) m = std::min(m, dist_max(p, q));
    return m;
  };
  est.target_to_cloud = to_cloud(verts.front());
  for (std::size_t e = 0; e + 1 < verts.size(); ++e)
    for (std::size_t i = 1; i <= target_samples; ++i)
      est.target_to_cloud =
          std::max(est.target_to_cloud, to_cloud(lerp(verts[e], verts[e + 1], double(i) / double(target_samples))));
  est.hausdorff = std::max(est.cloud_to_target, est.target_to_cloud);
  return est;
}

namespace {

void ensemble_rows(const InducedScheme& s, const std::vector<double>& starts, const std::vector<std::uint64_t>& labels,
                   const EnsembleOptions& opt, std::ostream& out) {
  if (starts.size() > 10000) throw std::invalid_argument("at most 1e4 ensemble members");
  if (opt.stride == 0) throw std::invalid_argument("stride must be positive");
  std::vector<std::string> blocks(starts.size());
  parallel_for(starts.size(), opt.threads, [&](std::size_t i) {
    auto t = simulate_occupancy(s, starts[i], opt.n);
    std::ostringstream os;
    for (std::size_t k = 0; k < t.return_marks.size(); ++k) {
      if ((k + 1) % opt.stride != 0) continue;
      os << labels[i] << ',' << k + 1 << ',' << t.return_marks[k];
      for (auto v : t.tau_bar[k]) os << ',' << v;
      os << '\n';
    }
    blocks[i] = os.str();
  });
  out << "seed,k,tau_k";
  for (std::size_t j = 1; j <= s.d(); ++j) out << ",tau" << j << "_k";
  out << '\n';
  for (const auto& b : blocks) out << b;
}

}  // namespace

void ensemble_run(const InducedScheme& s, const std::vector<std::uint64_t>& seeds, const EnsembleOptions& opt,
                  std::ostream& out) {
  std::vector<double> starts;
  for (auto seed : seeds) {
    std::mt19937_64 rng(seed);
    starts.push_back(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
  }
  ensemble_rows(s, starts, seeds, opt, out);
}

void ensemble_run_from(const InducedScheme& s, const std::vector<double>& starts, const EnsembleOptions& opt,
                       std::ostream& out) {
  std::vector<std::uint64_t> labels(starts.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i;
  ensemble_rows(s, starts, labels, opt, out);
}

nlohmann::json trace_summary(const OccupancyTrace& t) {
  nlohmann::json j = {{"x0", t.x0}, {"n", t.n}, {"occupancy", t.occupancy}, {"returns", t.return_marks.size()},
                      {"starts_in_y", t.starts_in_y}};
  if (!t.return_marks.empty()) {
    const std::size_t k = t.return_marks.size() - 1;
    j["last_return"] = {{"k", k + 1}, {"tau", t.return_marks[k]}, {"tau_bar", t.tau_bar[k]}};
  }
  return j;
}

nlohmann::json coding_to_json(const CodingReport& r) {
  nlohmann::json j = {{"pass", r.pass},
                      {"windows", r.windows},
                      {"steps_checked", r.steps_checked},
                      {"sandwich_violations", r.sandwich_violations},
                      {"monotone_violations", r.monotone_violations},
                      {"y_violations", r.y_violations},
                      {"literal_sandwich_violations", r.literal_sandwich_violations},
                      {"literal_monotone_violations", r.literal_monotone_violations}};
  if (r.witness) j["witness"] = *r.witness;
  if (r.literal_witness) j["literal_witness"] = *r.literal_witness;
  return j;
}

}  // namespace nsgp
