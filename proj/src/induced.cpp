#include "nsgp/induced.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <tuple>

namespace nsgp {

namespace {

constexpr double kTol = 1e-12;

double down(double x) { return std::nextafter(x, -std::numeric_limits<double>::infinity()); }
double up(double x) { return std::nextafter(x, std::numeric_limits<double>::infinity()); }

enum class Rel { Inside, Disjoint, Partial };

Rel relate(const Interval& J, const Interval& image) {
  if (J.lo >= image.lo - kTol && J.hi <= image.hi + kTol) return Rel::Inside;
  if (J.hi <= image.lo + kTol || J.lo >= image.hi - kTol) return Rel::Disjoint;
  return Rel::Partial;
}

Interval image_of(const Branch& b, const Interval& J) { return {b.value(J.lo), b.value(J.hi)}; }

Interval inverse_of(const Branch& b, const Interval& J) {
  return {branch_inverse(b, std::clamp(J.lo, 0.0, 1.0)), branch_inverse(b, std::clamp(J.hi, 0.0, 1.0))};
}

// gamma in the left branch with f^2(gamma) = gamma, for the two-branch case.
double period_two_point(const MapSpec& map) {
  const Branch& b0 = map.branches[0];
  const Branch& b1 = map.branches[1];
  double a = branch_inverse(b0, b0.hi), b = b0.hi;
  auto h = [&](double x) { return b1.value(std::clamp(b0.value(x), b1.lo, b1.hi)) - x; };
  if (!(h(a) < 0 && h(b) > 0)) throw std::runtime_error("period-2 orbit not bracketed");
  for (int it = 0; it < 400 && b - a > 0; ++it) {
    double m = 0.5 * (a + b);
    if (m <= a || m >= b) break;
    (h(m) < 0 ? a : b) = m;
  }
  double g = 0.5 * (a + b);
  if (std::fabs(h(g)) > 1e-12) throw std::runtime_error("period-2 root finding failed");
  return g;
}

}  // namespace

std::vector<std::int64_t> ReturnSymbol::tau_vec(std::size_t d) const {
  std::vector<std::int64_t> v(d, 0);
  v[target] = level;
  return v;
}

double InducedScheme::total_untracked() const {
  double t = 0;
  for (double u : untracked_mass) t += u;
  return t;
}

InducedScheme build_scheme(const MapSpec& map, std::size_t m_max) {
  if (map.d_prime > 0) throw std::invalid_argument("extra uniformly expanding branches are not supported");
  InducedScheme s;
  s.map = map;
  s.m_max = m_max;
  const std::size_t d = map.d;
  s.x_regions.resize(d);

  std::vector<YComponent> comps;
  if (d >= 3) {
    for (std::size_t j = 0; j < d; ++j) {
      const auto& fp = map.fixed_points[j];
      const Branch& b = map.branches[fp.branch];
      double plo = branch_inverse(b, b.lo), phi = branch_inverse(b, b.hi);
      if (plo - b.lo > 1e-15) comps.push_back({{b.lo, plo}, fp.branch, 0});
      if (b.hi - phi > 1e-15) comps.push_back({{phi, b.hi}, fp.branch, 0});
      s.x_regions[j] = {plo, phi};
    }
  } else if (d == 2) {
    if (map.branches.size() != 2 || map.branches[0].xi != 0.0 || map.branches[1].xi != 1.0)
      throw std::invalid_argument("two-branch scheme expects fixed points at 0 and 1");
    double g = period_two_point(map);
    double fg = map.branches[0].value(g);
    double bp = map.branches[0].hi;
    comps.push_back({{g, bp}, 0, 0});
    comps.push_back({{bp, fg}, 1, 0});
    s.x_regions[0] = {0.0, g};
    s.x_regions[1] = {fg, 1.0};
  } else {
    throw std::invalid_argument("inducing scheme needs at least two neutral fixed points");
  }
  std::sort(comps.begin(), comps.end(), [](const auto& a, const auto& b) { return a.iv.lo < b.iv.lo; });
  for (std::size_t c = 0; c < comps.size(); ++c) {
    if (c == 0 || comps[c].branch != comps[c - 1].branch) s.big_images.emplace_back();
    comps[c].big = s.big_images.size() - 1;
    s.big_images.back().push_back(c);
  }
  s.y = comps;

  // Level intervals D_m^{(j,c)} accumulating at xi_j.
  s.landing.resize(d);
  s.levels.resize(d);
  s.untracked_regions.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const auto& fp = map.fixed_points[j];
    const Branch& bj = map.branches[fp.branch];
    Interval fx = image_of(bj, s.x_regions[j]);
    for (std::size_t c = 0; c < s.y.size(); ++c)
      if (relate(s.y[c].iv, fx) == Rel::Inside) s.landing[j].push_back(c);
    if (s.landing[j].empty()) throw std::runtime_error("no return path out of an X region");
    double left_edge = -1.0, right_edge = 2.0;
    for (std::size_t c : s.landing[j]) {
      std::vector<Interval> lv{s.y[c].iv};
      lv.reserve(m_max + 1);
      for (std::size_t m = 1; m <= m_max; ++m) lv.push_back(inverse_of(bj, lv.back()));
      if (m_max >= 1 && relate(lv[1], s.x_regions[j]) != Rel::Inside)
        throw std::runtime_error("first level leaves its X region");
      const Interval& deep = lv.back();
      if (deep.hi <= fp.xi) left_edge = std::max(left_edge, deep.hi);
      else right_edge = std::min(right_edge, deep.lo);
      s.levels[j].push_back(std::move(lv));
    }
    if (left_edge >= 0.0) s.untracked_regions[j].push_back({left_edge, fp.xi});
    if (right_edge <= 1.0) s.untracked_regions[j].push_back({fp.xi, right_edge});
  }

  // Alphabet: every admissible (base, target, level, comp).
  auto landing_pos = [&](std::size_t j, std::size_t comp) -> std::size_t {
    auto it = std::find(s.landing[j].begin(), s.landing[j].end(), comp);
    return it == s.landing[j].end() ? std::size_t(-1) : std::size_t(it - s.landing[j].begin());
  };
  s.untracked_mass.assign(d, 0.0);
  for (std::size_t beta = 0; beta < s.y.size(); ++beta) {
    const Branch& bb = map.branches[s.y[beta].branch];
    Interval fb = image_of(bb, s.y[beta].iv);
    auto add = [&](std::uint32_t j, std::uint32_t m, std::uint32_t c, std::uint32_t image, const Interval& J) {
      Interval e = inverse_of(bb, J);
      e.lo = std::max(down(e.lo), s.y[beta].iv.lo);
      e.hi = std::min(up(e.hi), s.y[beta].iv.hi);
      s.symbols.push_back({std::uint32_t(beta), j, m, c, image, e});
    };
    for (std::size_t c2 = 0; c2 < s.y.size(); ++c2) {
      Rel r = relate(s.y[c2].iv, fb);
      if (r == Rel::Partial) throw std::runtime_error("return map is not Markov on Y components");
      if (r == Rel::Disjoint) continue;
      std::size_t tj = std::size_t(-1);
      for (std::size_t j = 0; j < d; ++j)
        if (landing_pos(j, c2) != std::size_t(-1) &&
            (tj == std::size_t(-1) || map.fixed_points[j].branch == s.y[c2].branch))
          tj = j;
      if (tj == std::size_t(-1)) throw std::runtime_error("component unreachable from every X region");
      add(tj, 0, landing_pos(tj, c2), c2, s.y[c2].iv);
    }
    for (std::size_t j = 0; j < d; ++j) {
      Rel r = relate(s.x_regions[j], fb);
      if (r == Rel::Partial) throw std::runtime_error("return map is not Markov on X regions");
      if (r == Rel::Disjoint) continue;
      for (std::size_t c = 0; c < s.landing[j].size(); ++c)
        for (std::size_t m = 1; m <= m_max; ++m)
          add(std::uint32_t(j), std::uint32_t(m), std::uint32_t(c), std::uint32_t(s.landing[j][c]), s.levels[j][c][m]);
      for (const Interval& u : s.untracked_regions[j]) {
        Interval e = inverse_of(bb, u);
        s.untracked_mass[j] += e.length();
      }
    }
  }
  std::sort(s.symbols.begin(), s.symbols.end(), [](const ReturnSymbol& a, const ReturnSymbol& b) {
    return std::tie(a.base, a.target, a.level, a.comp) < std::tie(b.base, b.target, b.level, b.comp);
  });
  s.symbols_begin.assign(s.y.size() + 1, s.symbols.size());
  s.by_position.resize(s.y.size());
  for (std::size_t i = s.symbols.size(); i-- > 0;) s.symbols_begin[s.symbols[i].base] = i;
  for (std::size_t c = s.y.size(); c-- > 0;)
    if (s.symbols_begin[c] > s.symbols_begin[c + 1]) s.symbols_begin[c] = s.symbols_begin[c + 1];
  for (std::size_t c = 0; c < s.y.size(); ++c) {
    auto& v = s.by_position[c];
    for (std::size_t i = s.symbols_begin[c]; i < s.symbols_begin[c + 1]; ++i) v.push_back(std::uint32_t(i));
    std::sort(v.begin(), v.end(), [&](std::uint32_t a, std::uint32_t b) {
      return s.symbols[a].enclosure.lo < s.symbols[b].enclosure.lo;
    });
  }
  return s;
}

RegionTag region_of(const InducedScheme& s, double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("point outside [0,1]");
  auto near = [&](double e) { return std::fabs(x - e) <= kTol; };
  for (const auto& c : s.y)
    if (near(c.iv.lo) || near(c.iv.hi)) return {RegionKind::Boundary, 0};
  for (const auto& xr : s.x_regions)
    if (near(xr.lo) || near(xr.hi)) return {RegionKind::Boundary, 0};
  return classify(s, x);
}

RegionTag classify(const InducedScheme& s, double x) {
  for (std::size_t c = 0; c < s.y.size(); ++c)
    if (s.y[c].iv.contains(x)) return {RegionKind::Y, c};
  for (std::size_t j = 0; j < s.x_regions.size(); ++j)
    if (s.x_regions[j].contains(x)) return {RegionKind::X, j};
  throw std::logic_error("point in neither Y nor any X region");
}

HitResult hit_time(const MapSpec& map, const InducedScheme& s, double x, std::int64_t n_max) {
  if (classify(s, x).kind != RegionKind::Y) throw std::invalid_argument("hit_time expects a point of Y");
  HitResult r;
  r.tau_vec.assign(s.d(), 0);
  for (std::int64_t n = 1; n <= n_max; ++n) {
    x = map(x);
    RegionTag t = classify(s, x);
    if (t.kind == RegionKind::Y) {
      r.tau = n;
      r.image = x;
      return r;
    }
    ++r.tau_vec[t.index];
  }
  throw TruncationError("no return to Y within n_max iterates");
}

std::size_t symbol_index_of(const InducedScheme& s, double y) {
  RegionTag t = classify(s, y);
  if (t.kind != RegionKind::Y) throw std::invalid_argument("symbol_of expects a point of Y");
  const auto& ids = s.by_position[t.index];
  auto it = std::upper_bound(ids.begin(), ids.end(), y, [&](double v, std::uint32_t id) {
    return v < s.symbols[id].enclosure.lo;
  });
  if (it != ids.begin()) {
    const auto& e = s.symbols[*(it - 1)].enclosure;
    if (y <= e.hi) return *(it - 1);
  }
  // Not inside a stored cylinder: either beyond m_max or in a rounding gap.
  const Branch& bb = s.map.branches[s.y[t.index].branch];
  double fy = bb.value(y);
  for (std::size_t j = 0; j < s.d(); ++j)
    for (const auto& u : s.untracked_regions[j])
      if (fy > u.lo && fy < u.hi) throw TruncationError("return level exceeds m_max");
  double best = std::numeric_limits<double>::infinity();
  std::size_t pick = ids.empty() ? 0 : ids.front();
  for (auto jt : {it - 1, it}) {
    if (jt < ids.begin() || jt >= ids.end()) continue;
    const auto& e = s.symbols[*jt].enclosure;
    double dist = std::min(std::fabs(y - e.lo), std::fabs(y - e.hi));
    if (dist < best) best = dist, pick = *jt;
  }
  if (best > 1e-12) throw TruncationError("point not covered by the truncated alphabet");
  return pick;
}

const ReturnSymbol& symbol_of(const InducedScheme& s, double y) { return s.symbols[symbol_index_of(s, y)]; }

double pull_back_point(const InducedScheme& s, const ReturnSymbol& sym, double z, double* logd) {
  const Branch& bj = s.map.branches[s.map.fixed_points[sym.target].branch];
  const Branch& bb = s.map.branches[s.y[sym.base].branch];
  double acc = 0.0;
  for (std::uint32_t k = 0; k < sym.level; ++k) {
    z = branch_inverse(bj, std::clamp(z, 0.0, 1.0));
    acc += std::log(bj.deriv(z));
  }
  double x = branch_inverse(bb, std::clamp(z, 0.0, 1.0));
  acc += std::log(bb.deriv(x));
  if (logd) *logd += acc;
  return std::clamp(x, sym.enclosure.lo, sym.enclosure.hi);
}

Interval pull_back(const InducedScheme& s, const ReturnSymbol& sym, Interval K) {
  const Branch& bj = s.map.branches[s.map.fixed_points[sym.target].branch];
  const Branch& bb = s.map.branches[s.y[sym.base].branch];
  for (std::uint32_t k = 0; k < sym.level; ++k) {
    K = inverse_of(bj, K);
    K = {down(K.lo), up(K.hi)};
  }
  K = inverse_of(bb, K);
  K = {std::max(down(K.lo), sym.enclosure.lo), std::min(up(K.hi), sym.enclosure.hi)};
  if (K.hi < K.lo) K.hi = K.lo;
  return K;
}

TailTable tail_table(const InducedScheme& s) {
  if (s.m_max < 100) throw std::invalid_argument("tail fit needs m_max >= 100");
  const std::size_t d = s.d(), M = s.m_max;
  TailTable t;
  t.mass.assign(d, std::vector<double>(M + 1, 0.0));
  std::vector<std::vector<double>> per_level(d, std::vector<double>(M + 1, 0.0));
  for (const auto& sym : s.symbols) per_level[sym.target][sym.level] += sym.enclosure.length();
  t.untracked = s.untracked_mass;
  t.fit_lo = std::max<std::size_t>(1, M / 100);
  t.fit_hi = M;
  for (std::size_t j = 0; j < d; ++j) {
    double acc = s.untracked_mass[j];
    for (std::size_t n = M + 1; n-- > 0;) {
      t.mass[j][n] = acc;
      acc += per_level[j][n];
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0, cnt = 0;
    for (std::size_t n = t.fit_lo; n <= t.fit_hi; ++n) {
      double lx = std::log(double(n)), ly = std::log(t.mass[j][n]);
      sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly, cnt += 1;
    }
    double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    double icpt = (sy - slope * sx) / cnt;
    t.alpha_hat.push_back(-slope);
    t.gamma_hat.push_back(std::exp(icpt));
  }
  return t;
}

ExpansionStats expansion_stats(const InducedScheme& s, int depth, int samples, std::uint64_t seed) {
  if (depth < 1) throw std::invalid_argument("depth must be at least 1");
  samples = std::max(samples, 2);
  ExpansionStats st;
  st.level_cap = std::min<std::size_t>(s.m_max, 64);
  double min_log = std::numeric_limits<double>::infinity();
  double spread = 0.0;
  std::vector<std::uint32_t> usable;
  for (std::uint32_t i = 0; i < s.symbols.size(); ++i) {
    const auto& sym = s.symbols[i];
    if (sym.level > st.level_cap) continue;
    usable.push_back(i);
    const Interval& img = s.y[sym.image].iv;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int k = 0; k < samples; ++k) {
      double z = img.lo + img.length() * double(k) / double(samples - 1);
      double ld = 0;
      pull_back_point(s, sym, z, &ld);
      lo = std::min(lo, ld), hi = std::max(hi, ld);
    }
    min_log = std::min(min_log, lo);
    spread = std::max(spread, hi - lo);
  }
  std::vector<std::vector<std::uint32_t>> from(s.y.size());
  for (auto i : usable) from[s.symbols[i].base].push_back(i);
  std::mt19937_64 rng(seed);
  for (int w = 0; w < samples && depth > 1; ++w) {
    std::vector<std::uint32_t> word{usable[std::uniform_int_distribution<std::size_t>(0, usable.size() - 1)(rng)]};
    while (int(word.size()) < depth) {
      const auto& next = from[s.symbols[word.back()].image];
      if (next.empty()) break;
      word.push_back(next[std::uniform_int_distribution<std::size_t>(0, next.size() - 1)(rng)]);
    }
    const Interval& img = s.y[s.symbols[word.back()].image].iv;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int k = 0; k <= 8; ++k) {
      double z = img.lo + img.length() * k / 8.0, ld = 0;
      for (std::size_t t = word.size(); t-- > 0;) z = pull_back_point(s, s.symbols[word[t]], z, &ld);
      lo = std::min(lo, ld), hi = std::max(hi, ld);
    }
    spread = std::max(spread, hi - lo);
  }
  double min_len = std::numeric_limits<double>::infinity();
  for (const auto& c : s.y) min_len = std::min(min_len, c.iv.length());
  st.lambda_hat = std::exp(min_log);
  st.D_hat = spread;
  st.D_mult = std::exp(spread) / min_len;
  return st;
}

}  // namespace nsgp
