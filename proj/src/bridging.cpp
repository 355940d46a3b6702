#include "nsgp/bridging.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace nsgp {

namespace {

using i128 = __int128;

std::string q_str(const Q& q) { return num_str(q) + "/" + den_str(q); }
std::string z_str(const Z& z) { return z.str(); }

std::string d_str(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

std::int64_t to_i64(const Z& z) { return z.convert_to<std::int64_t>(); }

// Exact fraction p/q with 64-bit parts.
struct Frac {
  std::int64_t p = 0, q = 1;
  explicit Frac(const Q& x)
      : p(to_i64(boost::multiprecision::numerator(x))), q(to_i64(boost::multiprecision::denominator(x))) {}
};

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("return-time total exceeds 64 bits");
  return r;
}

std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("return-time total exceeds 64 bits");
  return r;
}

// Cumulative return data (tau_vec, tau).
struct Counts {
  std::vector<std::int64_t> v;
  std::int64_t t = 0;
  explicit Counts(std::size_t d = 0) : v(d, 0) {}
  void add(const Counts& o, std::int64_t times = 1) {
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = checked_add(v[j], checked_mul(o.v[j], times));
    t = checked_add(t, checked_mul(o.t, times));
  }
  void add_symbol(const ReturnSymbol& sym) {
    v[sym.target] = checked_add(v[sym.target], std::int64_t(sym.level));
    t = checked_add(t, sym.tau());
  }
  QVec ratio() const { return ratio_of(v, t); }
};

Counts word_counts(const InducedScheme& s, const Word& w) {
  Counts c(s.d());
  for (auto id : w) c.add_symbol(s.symbols[id]);
  return c;
}

// lo < v/t < hi (strict) or <= (closed), per coordinate, for rational bounds.
bool in_box(const Counts& c, const std::vector<Q>& lo, const std::vector<Q>& hi, bool strict) {
  if (c.t <= 0) return false;
  for (std::size_t j = 0; j < c.v.size(); ++j) {
    Frac l(lo[j]), h(hi[j]);
    i128 a = i128(c.v[j]) * l.q, b = i128(l.p) * c.t;  // compare v/t with l
    i128 e = i128(c.v[j]) * h.q, f = i128(h.p) * c.t;
    if (strict ? !(a > b && e < f) : !(a >= b && e <= f)) return false;
  }
  return true;
}

std::pair<std::vector<Q>, std::vector<Q>> ball_box(const QVec& p, const Q& r) {
  std::vector<Q> lo, hi;
  for (const auto& x : p) {
    lo.push_back(x - r);
    hi.push_back(x + r);
  }
  return {lo, hi};
}

// R^delta: delta-neighbourhood of the rectangle spanned by p and q.
std::pair<std::vector<Q>, std::vector<Q>> rect_box(const QVec& p, const QVec& q, const Q& delta) {
  std::vector<Q> lo, hi;
  for (std::size_t j = 0; j < p.size(); ++j) {
    lo.push_back(std::min(p[j], q[j]) - delta);
    hi.push_back(std::max(p[j], q[j]) + delta);
  }
  return {lo, hi};
}

Q rect_diam(const std::pair<std::vector<Q>, std::vector<Q>>& box) {
  Q d = 0;
  for (std::size_t j = 0; j < box.first.size(); ++j) d = std::max(d, Q(box.second[j] - box.first[j]));
  return d;
}

Q dist(const Counts& a, const Counts& b) {
  Q m = 0;
  for (std::size_t j = 0; j < a.v.size(); ++j) {
    Q x = Q(Z(a.v[j]), Z(a.t)) - Q(Z(b.v[j]), Z(b.t));
    m = std::max(m, abs(x));
  }
  return m;
}

// Coordinatewise min(r(a), r(b)) <= r(c) <= max(r(a), r(b)).
bool between(const Counts& c, const Counts& a, const Counts& b) {
  for (std::size_t j = 0; j < c.v.size(); ++j) {
    Q x = Q(Z(c.v[j]), Z(c.t)), ra = Q(Z(a.v[j]), Z(a.t)), rb = Q(Z(b.v[j]), Z(b.t));
    if (x < std::min(ra, rb) || x > std::max(ra, rb)) return false;
  }
  return true;
}

double ceil_div(std::int64_t a, std::int64_t b) { return double((a + b - 1) / b); }

// Family member chosen at component c under the policy.
std::vector<std::uint32_t> policy_table(const ApproxFamily& f, std::size_t C, BlockPolicy p) {
  std::vector<std::uint32_t> pick(C, std::numeric_limits<std::uint32_t>::max());
  for (std::uint32_t a = 0; a < f.cylinders.size(); ++a) {
    auto c = f.cylinders[a].base;
    auto& cur = pick[c];
    if (cur == std::numeric_limits<std::uint32_t>::max()) cur = a;
    else if (p == BlockPolicy::longest && f.log_len[a] > f.log_len[cur]) cur = a;
  }
  return pick;
}

Segment member_segment(const ApproxFamily& f, const std::vector<std::uint32_t>& members, std::int64_t reps) {
  Segment seg;
  seg.members = members;
  seg.reps = reps;
  for (auto a : members) seg.word.insert(seg.word.end(), f.cylinders[a].word.begin(), f.cylinders[a].word.end());
  return seg;
}

// Level path of k blocks starting at component c: the block sequence is a function of the
// current component, hence eventually periodic with period at most C.
LevelPath build_path(const ApproxFamily& f, std::size_t C, BlockPolicy policy, std::uint32_t first, std::int64_t k) {
  auto pick = policy_table(f, C, policy);
  std::vector<std::uint32_t> seq{first};
  std::map<std::uint32_t, std::size_t> seen{{first, 0}};
  std::size_t cycle_start = 0;
  for (;;) {
    if (std::int64_t(seq.size()) >= k) break;
    std::uint32_t nx = pick[f.cylinders[seq.back()].image];
    auto it = seen.find(nx);
    if (it != seen.end()) {
      cycle_start = it->second;
      break;
    }
    seen[nx] = seq.size();
    seq.push_back(nx);
  }
  LevelPath path;
  if (std::int64_t(seq.size()) >= k) {
    for (std::int64_t i = 0; i < k; ++i) path.segments.push_back(member_segment(f, {seq[i]}, 1));
    return path;
  }
  for (std::size_t i = 0; i < cycle_start; ++i) path.segments.push_back(member_segment(f, {seq[i]}, 1));
  std::vector<std::uint32_t> cycle(seq.begin() + cycle_start, seq.end());
  const std::int64_t L = std::int64_t(cycle.size()), rest = k - std::int64_t(cycle_start);
  if (rest / L > 0) path.segments.push_back(member_segment(f, cycle, rest / L));
  if (rest % L > 0)
    path.segments.push_back(member_segment(f, std::vector<std::uint32_t>(cycle.begin(), cycle.begin() + rest % L), 1));
  return path;
}

// Runs for the first `blocks` blocks (of n symbols) of a level path.
std::vector<Segment> prefix_runs(const LevelPath& p, std::size_t n, std::int64_t blocks) {
  std::vector<Segment> out;
  std::int64_t left = blocks;
  for (const auto& seg : p.segments) {
    if (left <= 0) break;
    const std::int64_t per = std::int64_t(seg.word.size() / n);
    const std::int64_t full = std::min(seg.reps, left / per);
    if (full > 0) {
      out.push_back(seg);
      out.back().reps = full;
      left -= full * per;
    }
    if (full < seg.reps && left > 0) {
      Segment part;
      part.word.assign(seg.word.begin(), seg.word.begin() + std::ptrdiff_t(left * std::int64_t(n)));
      if (!seg.members.empty()) part.members.assign(seg.members.begin(), seg.members.begin() + left);
      out.push_back(part);
      left = 0;
    }
  }
  if (left > 0) throw std::invalid_argument("prefix longer than the level");
  return out;
}

// First `count` symbols of the point, expanding runs lazily.
Word leading_symbols(const GenericPoint& x, std::size_t count) {
  Word w;
  for (const auto& lvl : x.levels)
    for (const auto& seg : lvl.segments)
      for (std::int64_t r = 0; r < seg.reps && w.size() < count; ++r)
        for (auto id : seg.word) {
          if (w.size() >= count) return w;
          w.push_back(id);
        }
  return w;
}

double ulp(double x) { return std::nextafter(std::fabs(x), 2.0) - std::fabs(x); }

}  // namespace

// ---------------------------------------------------------------- targets

TargetSpec TargetSpec::single(QVec p) {
  TargetSpec t;
  t.kind = Kind::point;
  t.vertices = {std::move(p)};
  return t;
}

TargetSpec TargetSpec::polyline(std::vector<QVec> vs) {
  TargetSpec t;
  t.kind = Kind::polyline;
  t.vertices = std::move(vs);
  return t;
}

void TargetSpec::validate(std::size_t d) const {
  if (vertices.empty()) throw std::invalid_argument("target needs at least one vertex");
  if (kind == Kind::point && vertices.size() != 1) throw std::invalid_argument("point target has one vertex");
  for (const auto& v : vertices) {
    if (v.size() != d) throw std::invalid_argument("target dimension differs from the number of fixed points");
    Q sum = 0;
    for (const auto& x : v) {
      if (x < 0) throw std::invalid_argument("target coordinates must be nonnegative");
      sum += x;
    }
    if (sum != 1) throw std::invalid_argument("target coordinates must sum to 1");
  }
}

std::vector<QVec> target_sequence(const TargetSpec& t, std::size_t count) {
  std::vector<QVec> out;
  if (t.kind == TargetSpec::Kind::point || t.vertices.size() == 1) {
    out.assign(count, t.vertices.front());
    return out;
  }
  bool forward = true;
  for (std::size_t r = 0; out.size() < count; ++r, forward = !forward) {
    std::vector<QVec> sweep;
    const std::int64_t pieces = std::int64_t(1) << std::min<std::size_t>(r, 40);
    for (std::size_t e = 0; e + 1 < t.vertices.size(); ++e)
      for (std::int64_t k = 0; k < pieces; ++k) {
        QVec p;
        Q w(k, pieces);
        for (std::size_t j = 0; j < t.vertices[e].size(); ++j)
          p.push_back(t.vertices[e][j] * (1 - w) + t.vertices[e + 1][j] * w);
        sweep.push_back(p);
      }
    sweep.push_back(t.vertices.back());
    if (!forward) std::reverse(sweep.begin(), sweep.end());
    for (std::size_t k = (r == 0 ? 0 : 1); k < sweep.size() && out.size() < count; ++k) out.push_back(sweep[k]);
  }
  return out;
}

// ---------------------------------------------------------------- planning

bool BridgeSchedule::all_pass() const {
  for (const auto& l : levels)
    for (const auto& c : l.certificates)
      if (!c.pass) return false;
  return true;
}

std::vector<Inequality> schedule_certificates(const BridgeSchedule& sch, std::size_t i) {
  const auto& L = sch.levels;
  const auto& li = L[i];
  std::vector<Inequality> out;
  const double logD = sch.log_D, loglam = std::log(sch.lambda_hat);
  // Enough blocks to pass the transition length
  {
    Z lhs = Z(li.N), rhs = Z(li.k) * Z(std::int64_t(li.n));
    out.push_back({"k_i n_i > N_i", z_str(lhs), z_str(rhs), true, lhs < rhs});
  }
  // Next transition is short relative to elapsed time
  if (i + 1 < L.size()) {
    if (L[i + 1].t <= 0) {
      out.push_back({"N_{i+1} M_{i+1} / t_{i+1} < eps_i", "inf", q_str(li.eps), true, false});
    } else {
      Q lhs = Q(Z(L[i + 1].N) * Z(L[i + 1].M), Z(L[i + 1].t));
      out.push_back({"N_{i+1} M_{i+1} / t_{i+1} < eps_i", q_str(lhs), q_str(li.eps), true, lhs < li.eps});
    }
  }
  if (i == 0) return out;
  // Earlier levels are a small fraction of this one
  {
    Z num = 0;
    for (std::size_t j = 0; j < i; ++j) num += Z(L[j].M) * Z(std::int64_t(L[j].n)) * Z(L[j].k);
    if (li.k <= 0) {
      out.push_back({"sum M_j n_j k_j / (n_i k_i) < eps_i", "inf", q_str(li.eps), true, false});
    } else {
      Q lhs = Q(num, Z(std::int64_t(li.n)) * Z(li.k));
      out.push_back({"sum M_j n_j k_j / (n_i k_i) < eps_i", q_str(lhs), q_str(li.eps), true, lhs < li.eps});
    }
  }
  const double eps_i = to_double(li.eps), eps_prev = to_double(L[i - 1].eps);
  double m_b_hi = 0, m_b_lo = 0, len_b_hi = 0;
  for (std::size_t j = 0; j < i; ++j) {
    m_b_hi += double(L[j].k) * L[j].w_max + L[j].C_tilde;
    m_b_lo += double(L[j].k) * L[j].w_min - (j >= 1 ? L[j].C_tilde : 0.0);
    len_b_hi += double(L[j].k) * (L[j].l_max + logD);
  }
  // Prefix measure is negligible against the block measure
  {
    double lhs = (m_b_hi + li.C_tilde) / (double(li.k) * li.w_min);
    out.push_back({"(|log m(b_i)| + C_i) / |log m_i(a_i)| <= eps_i", d_str(lhs), d_str(eps_i), false, lhs <= eps_i});
  }
  // Prefix length is negligible against the block length
  {
    double lhs = (len_b_hi + logD) / (double(li.n) * double(li.k) * loglam);
    out.push_back({"(|log|b_i|| + |log D|) / |log|a_i|| <= eps_i", d_str(lhs), d_str(eps_i), false, lhs <= eps_i});
  }
  const double blocks_N = ceil_div(li.N, std::int64_t(li.n));
  // Transition measure is negligible against the prefix measure
  {
    double lhs = m_b_lo > 0 ? (blocks_N * li.w_max + li.C_tilde) / m_b_lo : std::numeric_limits<double>::infinity();
    out.push_back({"(|log m_i(a_{i,s})| + C_i) / |log m(b_i)| < eps_{i-1}", d_str(lhs), d_str(eps_prev), true,
                   lhs < eps_prev});
  }
  // Transition length is negligible against the prefix length
  {
    double lhs = (blocks_N * (li.l_max + logD) + logD) / (double(li.t) * loglam);
    out.push_back({"(|log|a_{i,s}|| + |log D|) / |log|b_i|| < eps_{i-1}", d_str(lhs), d_str(eps_prev), true,
                   lhs < eps_prev});
  }
  return out;
}

namespace {

// Conditions that k_i controls: its own level's and the transition conditions of level i+1.
std::string binding_condition(BridgeSchedule& sch, std::size_t i, std::int64_t k) {
  auto& L = sch.levels;
  L[i].k = k;
  if (i + 1 < L.size()) {
    Z t = Z(L[i].t) + Z(std::int64_t(L[i].n)) * Z(k);
    if (t > Z(std::numeric_limits<std::int64_t>::max() / 4)) return "t overflow";
    L[i + 1].t = to_i64(t);
  }
  for (const auto& c : schedule_certificates(sch, i))
    if (!c.pass) return c.name;
  if (i + 1 < L.size())
    for (const auto& c : schedule_certificates(sch, i + 1)) {
      bool ours = c.name.find("eps_{i-1}") != std::string::npos;
      if (ours && !c.pass) return c.name + " (next level)";
    }
  return {};
}

double member_step_min(const FamilyMeasure& m, bool max) {
  double best = max ? 0.0 : std::numeric_limits<double>::infinity();
  for (std::uint32_t a = 0; a < m.size(); ++a) {
    double first = -m.log_w[a], step = -m.step_log(a);
    best = max ? std::max({best, first, step}) : std::min({best, first, step});
  }
  return best;
}

}  // namespace

BridgeSchedule plan_schedule(const InducedScheme& s, const TargetSpec& target, std::size_t levels, const Q& eps0,
                             const PlanOptions& opt) {
  if (levels < 2) throw std::invalid_argument("bridging needs at least two levels");
  if (!(eps0 > 0 && eps0 < 1)) throw std::invalid_argument("eps0 must lie in (0,1)");
  target.validate(s.d());
  BridgeSchedule sch;
  sch.target = target;
  sch.m_max = s.m_max;
  sch.eps0 = eps0;
  auto st = expansion_stats(s, 3, 32, opt.seed);
  sch.lambda_hat = st.lambda_hat;
  sch.log_D = std::log(st.D_mult);
  auto conn = find_connectors(s);
  auto targets = target_sequence(target, levels);
  AssembleOptions aopt;
  aopt.seed = opt.seed;
  aopt.threads = opt.threads;
  for (std::size_t i = 0; i < levels; ++i) {
    BridgeLevel L;
    L.eps = eps0 / Q(Z(1) << unsigned(i));
    L.p_bar = targets[i];
    std::string why;
    for (std::size_t n = 1; n <= opt.max_pool_depth && L.family.cylinders.empty(); ++n) {
      try {
        auto pool = candidate_pool(s, n, L.eps, L.p_bar, opt.budget, opt.threads, &conn);
        L.family = assemble_family(s, pool, conn, L.eps, L.p_bar, st, aopt);
      } catch (const std::runtime_error& e) {
        why = e.what();
      }
    }
    if (L.family.cylinders.empty())
      throw std::runtime_error("level " + std::to_string(i) + ": no family up to pool depth " +
                               std::to_string(opt.max_pool_depth) + " (" + why + ")");
    const auto& f = L.family;
    L.n = f.n;
    L.N = std::max(f.N0, f.N1);
    L.M = f.M_n;
    L.C_tilde = f.measure.max_abs_log_Z();
    L.w_max = member_step_min(f.measure, true);
    L.w_min = member_step_min(f.measure, false);
    for (double l : f.log_len) L.l_max = std::max(L.l_max, -l);
    sch.levels.push_back(std::move(L));
  }
  // Least k_i: every condition is monotone in k_i, so double then bisect.
  for (std::size_t i = 0; i < levels; ++i) {
    std::int64_t lo = 0, hi = 1;
    std::string bind;
    while (!(bind = binding_condition(sch, i, hi)).empty()) {
      lo = hi;
      if (hi >= opt.k_cap || bind == "t overflow")
        throw std::runtime_error("level " + std::to_string(i) + ": no k below the cap satisfies \"" + bind + "\"");
      hi = std::min(opt.k_cap, hi * 2);
    }
    while (hi - lo > 1) {
      std::int64_t mid = lo + (hi - lo) / 2;
      (binding_condition(sch, i, mid).empty() ? hi : lo) = mid;
    }
    binding_condition(sch, i, hi);
  }
  for (std::size_t i = 0; i < levels; ++i) sch.levels[i].certificates = schedule_certificates(sch, i);
  return sch;
}

// ---------------------------------------------------------------- points

std::int64_t LevelPath::symbols() const {
  std::int64_t t = 0;
  for (const auto& seg : segments) t = checked_add(t, checked_mul(std::int64_t(seg.word.size()), seg.reps));
  return t;
}

BlockPolicy parse_policy(const std::string& name) {
  if (name == "lexicographic" || name == "lex") return BlockPolicy::lexicographic;
  if (name == "longest") return BlockPolicy::longest;
  throw std::invalid_argument("unknown block policy: " + name);
}

std::string policy_name(BlockPolicy p) { return p == BlockPolicy::longest ? "longest" : "lexicographic"; }

void refresh_point(const InducedScheme& s, const BridgeSchedule& sch, GenericPoint& x, std::size_t enclosure_depth) {
  (void)sch;
  x.checkpoints.clear();
  x.checkpoint_counts.clear();
  Counts total(s.d());
  for (const auto& lvl : x.levels) {
    for (const auto& seg : lvl.segments) total.add(word_counts(s, seg.word), seg.reps);
    x.checkpoints.push_back(total.ratio());
    x.checkpoint_counts.emplace_back(total.v, total.t);
  }
  Word lead = leading_symbols(x, enclosure_depth);
  x.enclosures.clear();
  x.collapse_depth = 0;
  for (std::size_t d = 1; d <= lead.size(); ++d) {
    Interval K = word_enclosure(s, lead.data(), d);
    x.enclosures.push_back(K);
    if (x.collapse_depth == 0 && K.length() <= 4 * ulp(K.mid())) x.collapse_depth = d;
  }
  x.point = x.enclosures.empty() ? 0.0 : x.enclosures.back().mid();
}

GenericPoint generate_point(const InducedScheme& s, const BridgeSchedule& sch, BlockPolicy policy,
                            std::size_t enclosure_depth) {
  GenericPoint x;
  const std::size_t C = s.y.size();
  std::uint32_t comp = 0;
  for (std::size_t i = 0; i < sch.levels.size(); ++i) {
    const auto& f = sch.levels[i].family;
    if (f.cylinders.empty()) throw std::invalid_argument("schedule has no families; plan it first");
    std::uint32_t first;
    if (i == 0) {
      first = 0;
      if (policy == BlockPolicy::longest)
        for (std::uint32_t a = 1; a < f.cylinders.size(); ++a)
          if (f.log_len[a] > f.log_len[first]) first = a;
    } else {
      first = policy_table(f, C, policy)[comp];
    }
    x.levels.push_back(build_path(f, C, policy, first, sch.levels[i].k));
    comp = s.symbols[x.levels.back().segments.back().word.back()].image;
  }
  refresh_point(s, sch, x, enclosure_depth);
  return x;
}

// ---------------------------------------------------------------- measure and lengths

double bridge_measure(const BridgeSchedule& sch, const GenericPoint& x, const std::vector<std::int64_t>& blocks) {
  if (blocks.size() > sch.levels.size()) throw std::invalid_argument("prefix has more levels than the schedule");
  double acc = 0.0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i] == 0) {
      for (std::size_t j = i + 1; j < blocks.size(); ++j)
        if (blocks[j] != 0) throw std::invalid_argument("prefix is not block-aligned");
      break;
    }
    if (blocks[i] < 0 || blocks[i] > sch.levels[i].k) throw std::invalid_argument("block count out of range");
    if (i + 1 < blocks.size() && blocks[i + 1] != 0 && blocks[i] != sch.levels[i].k)
      throw std::invalid_argument("prefix is not block-aligned");
    const auto& m = sch.levels[i].family.measure;
    auto runs = prefix_runs(x.levels[i], sch.levels[i].n, blocks[i]);
    bool first = true;
    for (const auto& seg : runs) {
      if (seg.members.empty()) throw std::invalid_argument("itinerary has no family members to weigh");
      double per = 0.0;
      for (auto a : seg.members) per += m.step_log(a);
      if (first) {
        std::uint32_t a0 = seg.members.front();
        // C_i(b) = 1 / m_i(Y_c) with m_i(Y_c) = Z_c; level 0 has no normalizer.
        acc += (i == 0 ? 0.0 : -m.log_Z[m.base[a0]]) + m.log_w[a0] - m.step_log(a0);
        first = false;
      }
      acc += per * double(seg.reps);
    }
  }
  return acc;
}

double log_length_runs(const InducedScheme& s, const std::vector<Segment>& runs) {
  std::ptrdiff_t seg = std::ptrdiff_t(runs.size()) - 1;
  while (seg >= 0 && (runs[seg].word.empty() || runs[seg].reps == 0)) --seg;
  if (seg < 0) throw std::invalid_argument("empty word");
  std::int64_t rep_left = runs[seg].reps;
  std::size_t pos = runs[seg].word.size();
  auto advance = [&] {
    if (--pos == 0) {
      if (--rep_left > 0) pos = runs[seg].word.size();
      else {
        --seg;
        while (seg >= 0 && (runs[seg].word.empty() || runs[seg].reps == 0)) --seg;
        if (seg >= 0) {
          rep_left = runs[seg].reps;
          pos = runs[seg].word.size();
        }
      }
    }
  };
  auto current = [&]() -> const ReturnSymbol& { return s.symbols[runs[seg].word[pos - 1]]; };
  Interval K = s.y[current().image].iv;
  while (seg >= 0) {
    Interval next = pull_back(s, current(), K);
    if (next.length() < 1e-7 * s.y[current().base].iv.length()) break;
    K = next;
    advance();
  }
  if (seg < 0) return std::log(K.length());
  double z = K.mid(), logd = 0.0;
  double last_delta = std::numeric_limits<double>::quiet_NaN();
  while (seg >= 0) {
    const Word& w = runs[seg].word;
    if (pos == w.size() && rep_left > 1) {
      // A whole repetition: once the pulled-back point is a fixed point, every further
      // repetition adds the same log-derivative.
      double z0 = z, d0 = logd;
      for (std::size_t t = w.size(); t-- > 0;) z = pull_back_point(s, s.symbols[w[t]], z, &logd);
      double delta = logd - d0;
      --rep_left;
      if (std::fabs(z - z0) <= 2 * ulp(z) && std::fabs(delta - last_delta) <= 1e-12 * std::fabs(delta)) {
        logd += delta * double(rep_left - 1);
        rep_left = 1;
      }
      last_delta = delta;
      continue;
    }
    z = pull_back_point(s, current(), z, &logd);
    std::ptrdiff_t before = seg;
    advance();
    if (seg != before) last_delta = std::numeric_limits<double>::quiet_NaN();
  }
  return std::log(K.length()) - logd;
}

// ---------------------------------------------------------------- verification

namespace {

// Random access into one level's run-length encoded symbols.
struct LevelIndex {
  const InducedScheme* s = nullptr;
  const LevelPath* path = nullptr;
  std::vector<std::int64_t> start;  // first symbol offset of each segment
  std::vector<Counts> before;       // counts before each segment
  std::vector<Counts> per_rep;
  std::vector<std::vector<Counts>> prefix;  // counts of the first r symbols of the segment word
  std::int64_t total = 0;

  LevelIndex(const InducedScheme& sc, const LevelPath& p) : s(&sc), path(&p) {
    Counts acc(sc.d());
    for (const auto& seg : p.segments) {
      start.push_back(total);
      before.push_back(acc);
      std::vector<Counts> pre{Counts(sc.d())};
      for (auto id : seg.word) {
        pre.push_back(pre.back());
        pre.back().add_symbol(sc.symbols[id]);
      }
      per_rep.push_back(pre.back());
      acc.add(pre.back(), seg.reps);
      prefix.push_back(std::move(pre));
      total = checked_add(total, checked_mul(std::int64_t(seg.word.size()), seg.reps));
    }
  }

  // Counts of the first `s_steps` symbols of the level.
  Counts at(std::int64_t s_steps) const {
    std::size_t k = std::size_t(std::upper_bound(start.begin(), start.end(), s_steps) - start.begin()) - 1;
    if (s_steps == total) {
      Counts c = before.back();
      c.add(per_rep.back(), path->segments.back().reps);
      return c;
    }
    const std::int64_t off = s_steps - start[k], len = std::int64_t(path->segments[k].word.size());
    Counts c = before[k];
    c.add(per_rep[k], off / len);
    c.add(prefix[k][std::size_t(off % len)]);
    return c;
  }

  std::uint32_t symbol(std::int64_t s_steps) const {  // 0-based symbol index
    std::size_t k = std::size_t(std::upper_bound(start.begin(), start.end(), s_steps) - start.begin()) - 1;
    const auto& w = path->segments[k].word;
    return w[std::size_t((s_steps - start[k]) % std::int64_t(w.size()))];
  }
};

// Symbol positions (1-based step counts) checked one by one: the first and last two
// repetitions of each run, plus everything up to `upto`.
std::vector<std::pair<std::int64_t, std::int64_t>> explicit_ranges(const LevelIndex& ix, std::int64_t upto) {
  std::vector<std::pair<std::int64_t, std::int64_t>> r;
  r.emplace_back(1, std::min(upto, ix.total));
  for (std::size_t k = 0; k < ix.path->segments.size(); ++k) {
    const auto& seg = ix.path->segments[k];
    const std::int64_t len = std::int64_t(seg.word.size()), s0 = ix.start[k];
    const std::int64_t head = std::min<std::int64_t>(seg.reps, 2), tail = std::min<std::int64_t>(seg.reps, 2);
    r.emplace_back(s0 + 1, s0 + head * len);
    r.emplace_back(s0 + (seg.reps - tail) * len + 1, s0 + seg.reps * len);
  }
  std::sort(r.begin(), r.end());
  std::vector<std::pair<std::int64_t, std::int64_t>> merged;
  for (auto [a, b] : r) {
    if (a > b) continue;
    if (!merged.empty() && a <= merged.back().second + 1) merged.back().second = std::max(merged.back().second, b);
    else merged.emplace_back(a, b);
  }
  return merged;
}

}  // namespace

GenericCertificate verify_generic(const InducedScheme& s, const BridgeSchedule& sch, const GenericPoint& x,
                                  bool replay) {
  GenericCertificate cert;
  auto fail = [&](std::size_t i, std::int64_t step, const std::string& regime, const std::string& detail) {
    if (cert.pass) cert.first = Violation{i, step, regime, detail};
    cert.pass = false;
  };
  if (x.levels.size() != sch.levels.size()) {
    fail(0, 0, "admissible", "itinerary and schedule differ in level count");
    return cert;
  }
  const bool single = sch.target.kind == TargetSpec::Kind::point;
  // Admissibility across every junction.
  {
    std::int64_t prev_image = -1;
    for (std::size_t i = 0; i < x.levels.size() && cert.pass; ++i) {
      const auto& L = sch.levels[i];
      if (x.levels[i].symbols() != std::int64_t(L.n) * L.k) {
        fail(i, 0, "admissible", "level length differs from n_i k_i");
        break;
      }
      for (const auto& seg : x.levels[i].segments) {
        if (seg.word.empty() || seg.word.size() % L.n != 0 || !admissible(s, seg.word)) {
          fail(i, 0, "admissible", "run is not an admissible sequence of blocks");
          break;
        }
        auto b = s.symbols[seg.word.front()].base, e = s.symbols[seg.word.back()].image;
        if ((prev_image >= 0 && b != prev_image) || (seg.reps > 1 && e != b)) {
          fail(i, 0, "admissible", "runs do not compose");
          break;
        }
        prev_image = e;
      }
    }
    if (!cert.pass) return cert;
  }

  Counts B(s.d());  // counts of b_i
  for (std::size_t i = 0; i < sch.levels.size(); ++i) {
    const auto& L = sch.levels[i];
    const auto& p_i = L.p_bar;
    LevelIndex ix(s, x.levels[i]);
    const std::int64_t nk = ix.total;
    const Q eps_prev = i > 0 ? sch.levels[i - 1].eps : Q(0);
    const QVec& p_prev = i > 0 ? sch.levels[i - 1].p_bar : p_i;
    const auto own = ball_box(p_i, L.eps);
    // Regime (c) target region for the whole ratio.
    std::pair<std::vector<Q>, std::vector<Q>> region;
    Q step_bound = 0;
    if (i > 0) {
      if (single) region = ball_box(p_i, std::max(Q(3 * eps_prev), L.eps));
      else {
        region = rect_box(p_prev, p_i, std::max(Q(3 * eps_prev), Q(3 * L.eps)));
        step_bound = 2 * rect_diam(region);
      }
    }
    const Q early_bound = i > 0 ? Q(Z(2) * Z(L.N) * Z(L.M), Z(L.t)) : Q(0);
    const auto early_ball = ball_box(single ? p_i : p_prev, 5 * eps_prev);
    double early = 0.0, max_step = 0.0;

    auto check = [&](std::int64_t st) {
      ++cert.positions_checked;
      Counts A = ix.at(st), T = B;
      T.add(A);
      if (i > 0 && st < L.N) {
        Q drift = dist(T, B);
        early = std::max(early, to_double(drift));
        if (drift > early_bound) fail(i, st, "b", "drift above 2 N_i M_i / t_i");
        if (!in_box(T, early_ball.first, early_ball.second, false)) fail(i, st, "b", "ratio outside B_{5 eps_{i-1}}");
      }
      if (st >= L.N) {
        if (!in_box(A, own.first, own.second, true)) fail(i, st, "c", "block ratio outside B_{eps_i}(p_i)");
        if (i > 0) {
          if (!between(T, B, A)) fail(i, st, "c", "ratio not between r(b_i) and r(a_{i,s})");
          if (!in_box(T, region.first, region.second, !single))
            fail(i, st, single ? "c" : "rect", single ? "ratio outside B_{delta_i}(p)" : "ratio outside R_i^{delta_i}");
        }
      }
      return T;
    };

    for (auto [a, b] : explicit_ranges(ix, std::max<std::int64_t>(L.N, 1))) {
      Counts last = a == 1 ? B : [&] {
        Counts T = B;
        T.add(ix.at(a - 1));
        return T;
      }();
      for (std::int64_t st = a; st <= b; ++st) {
        Counts T = check(st);
        if (i > 0 && last.t > 0) {
          double d = to_double(dist(T, last));
          max_step = std::max(max_step, d);
          if (!single && dist(T, last) > step_bound) fail(i, st, "step", "consecutive difference above 2 diam R_i");
        }
        last = T;
      }
    }
    // Regime (a): checkpoint at t_{i+1}.
    Counts T = B;
    T.add(ix.at(nk));
    Q err = max_norm(T.ratio(), p_i);
    cert.checkpoint_error.push_back(to_double(err));
    if (err > 3 * L.eps) fail(i, nk, "a", "checkpoint outside B_{3 eps_i}(p_i)");
    cert.early_drift.push_back(early);
    cert.max_step.push_back(max_step);
    B = T;
  }

  if (replay && !x.levels.empty()) {
    // Float replay of level 0 in windows: each window is as long as its cylinder stays wider
    // than 1e-9 of its component, and the window's midpoint must iterate back onto it.
    LevelIndex ix(s, x.levels[0]);
    std::set<Word> done;
    auto window_at = [&](std::int64_t st) {
      Word w{ix.symbol(st)};
      double lg = std::log(s.symbols[w[0]].enclosure.length() / s.y[s.symbols[w[0]].base].iv.length());
      while (st + std::int64_t(w.size()) < ix.total) {
        auto id = ix.symbol(st + std::int64_t(w.size()));
        double step = std::log(s.symbols[id].enclosure.length() / s.y[s.symbols[id].base].iv.length());
        if (lg + step < std::log(1e-9)) break;
        lg += step;
        w.push_back(id);
      }
      return w;
    };
    auto replay_from = [&](std::int64_t st) {
      Word w = window_at(st);
      if (!done.insert(w).second) return;
      Interval K = word_enclosure(s, w.data(), w.size());
      Cylinder c = locate(s, K.mid(), w.size());
      if (c.word != w) {
        cert.replay_ok = false;
        fail(0, st, "replay", "float iteration leaves the window cylinder");
      }
    };
    for (std::size_t k = 0; k < x.levels[0].segments.size(); ++k) {
      const auto& seg = x.levels[0].segments[k];
      const std::int64_t len = std::int64_t(seg.word.size()), s0 = ix.start[k];
      // Windows starting in repetitions 2..reps-3 repeat those of repetition 2.
      for (std::int64_t r = 0; r < seg.reps; ++r) {
        if (r == 3 && seg.reps > 5) r = seg.reps - 2;
        for (std::int64_t o = 0; o < len; ++o) replay_from(s0 + r * len + o);
      }
    }
    cert.replay_windows = done.size();
    cert.replay_symbols = ix.total;
  }
  return cert;
}

// ---------------------------------------------------------------- local dimension

LocalDimProfile local_dim_profile(const InducedScheme& s, const BridgeSchedule& sch, const GenericPoint& x,
                                  std::size_t samples_per_level) {
  LocalDimProfile prof;
  const std::size_t I = sch.levels.size();
  std::vector<Segment> b_runs;
  std::vector<std::int64_t> blocks;
  double E_sum = 0.0;
  for (std::size_t i = 0; i <= I; ++i) {
    if (i > 0) {
      const double e = to_double(sch.levels[i - 1].eps);
      const double eps_i = i < I ? to_double(sch.levels[i].eps) : e / 2;
      LevelBand band;
      band.level = i;
      const double lm = bridge_measure(sch, x, blocks), ll = log_length_runs(s, b_runs);
      band.gamma = lm / ll;
      band.lo = std::min(band.gamma * (1 - e) / (1 + e), 1 - eps_i);
      band.hi = std::max(band.gamma * (1 + e) / (1 - e), 1 + eps_i);
      band.slack = E_sum / std::fabs(ll);
      if (i < I) {
        const auto& L = sch.levels[i];
        std::set<std::int64_t> qs{1, L.k};
        for (std::size_t k = 0; k < samples_per_level; ++k) {
          double f = double(k) / double(std::max<std::size_t>(1, samples_per_level - 1));
          qs.insert(std::clamp<std::int64_t>(std::int64_t(std::llround(std::pow(double(L.k), f))), 1, L.k));
        }
        for (auto q : qs) {
          auto runs = b_runs;
          auto more = prefix_runs(x.levels[i], L.n, q);
          runs.insert(runs.end(), more.begin(), more.end());
          auto bl = blocks;
          bl.push_back(q);
          ProfileRow row{i, q, bridge_measure(sch, x, bl) / log_length_runs(s, runs)};
          if (row.value < band.lo || row.value > band.hi) band.profile_in_band = false;
          if (row.value < band.lo - band.slack || row.value > band.hi + band.slack) band.profile_in_inflated = false;
          prof.rows.push_back(row);
        }
      }
      prof.bands.push_back(band);
    }
    if (i < I) {
      b_runs.insert(b_runs.end(), x.levels[i].segments.begin(), x.levels[i].segments.end());
      blocks.push_back(sch.levels[i].k);
      E_sum += sch.levels[i].family.E_hat;
    }
  }
  return prof;
}

// ---------------------------------------------------------------- serialization

namespace {

nlohmann::json q_json(const Q& q) { return {{"num", num_str(q)}, {"den", den_str(q)}}; }
Q q_from(const nlohmann::json& j) { return Q(Z(j.at("num").get<std::string>()), Z(j.at("den").get<std::string>())); }

nlohmann::json qvec_json(const QVec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& q : v) a.push_back(q_json(q));
  return a;
}

QVec qvec_from(const nlohmann::json& j) {
  QVec v;
  for (const auto& e : j) v.push_back(q_from(e));
  return v;
}

// Floats are written with 12 significant digits so reruns are byte-identical.
double fixed(double x) {
  if (!std::isfinite(x)) return x;
  return std::stod(d_str(x));
}

}  // namespace

nlohmann::json schedule_to_json(const BridgeSchedule& sch) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& L : sch.levels) {
    nlohmann::json certs = nlohmann::json::array();
    for (const auto& c : L.certificates)
      certs.push_back({{"name", c.name}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"strict", c.strict}, {"pass", c.pass}});
    levels.push_back({{"eps", q_json(L.eps)},
                      {"p_bar", qvec_json(L.p_bar)},
                      {"n", L.n},
                      {"n_pool", L.family.n_pool},
                      {"N", L.N},
                      {"N0", L.family.N0},
                      {"N1", L.family.N1},
                      {"M", L.M},
                      {"C_tilde", fixed(L.C_tilde)},
                      {"w_max", fixed(L.w_max)},
                      {"w_min", fixed(L.w_min)},
                      {"l_max", fixed(L.l_max)},
                      {"k", L.k},
                      {"t", L.t},
                      {"family_size", L.family.cylinders.size()},
                      {"vdim", fixed(L.family.vdim)},
                      {"E_hat", fixed(L.family.E_hat)},
                      {"certificates", certs}});
  }
  nlohmann::json verts = nlohmann::json::array();
  for (const auto& v : sch.target.vertices) verts.push_back(qvec_json(v));
  return {{"target", {{"kind", sch.target.kind == TargetSpec::Kind::point ? "point" : "polyline"}, {"vertices", verts}}},
          {"m_max", sch.m_max},
          {"eps0", q_json(sch.eps0)},
          {"lambda_hat", fixed(sch.lambda_hat)},
          {"log_D", fixed(sch.log_D)},
          {"levels", levels}};
}

BridgeSchedule schedule_from_json(const nlohmann::json& j) {
  BridgeSchedule sch;
  const auto& t = j.at("target");
  std::vector<QVec> verts;
  for (const auto& v : t.at("vertices")) verts.push_back(qvec_from(v));
  sch.target = t.at("kind") == "point" ? TargetSpec::single(verts.at(0)) : TargetSpec::polyline(verts);
  sch.m_max = j.at("m_max");
  sch.eps0 = q_from(j.at("eps0"));
  sch.lambda_hat = j.at("lambda_hat");
  sch.log_D = j.at("log_D");
  for (const auto& l : j.at("levels")) {
    BridgeLevel L;
    L.eps = q_from(l.at("eps"));
    L.p_bar = qvec_from(l.at("p_bar"));
    L.n = l.at("n");
    L.N = l.at("N");
    L.M = l.at("M");
    L.C_tilde = l.at("C_tilde");
    L.w_max = l.at("w_max");
    L.w_min = l.at("w_min");
    L.l_max = l.at("l_max");
    L.k = l.at("k");
    L.t = l.at("t");
    for (const auto& c : l.at("certificates"))
      L.certificates.push_back({c.at("name"), c.at("lhs"), c.at("rhs"), c.at("strict"), c.at("pass")});
    sch.levels.push_back(std::move(L));
  }
  return sch;
}

nlohmann::json point_to_json(const GenericPoint& x) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& L : x.levels) {
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& seg : L.segments) segs.push_back({{"word", seg.word}, {"members", seg.members}, {"reps", seg.reps}});
    levels.push_back(segs);
  }
  nlohmann::json cps = nlohmann::json::array();
  for (std::size_t i = 0; i < x.checkpoints.size(); ++i)
    cps.push_back({{"ratio", qvec_json(x.checkpoints[i])},
                   {"tau_vec", x.checkpoint_counts[i].first},
                   {"tau", x.checkpoint_counts[i].second}});
  nlohmann::json enc = nlohmann::json::array();
  for (const auto& K : x.enclosures) enc.push_back({K.lo, K.hi});
  return {{"levels", levels}, {"checkpoints", cps}, {"enclosures", enc}, {"collapse_depth", x.collapse_depth},
          {"point", x.point}};
}

GenericPoint point_from_json(const nlohmann::json& j) {
  GenericPoint x;
  for (const auto& l : j.at("levels")) {
    LevelPath p;
    for (const auto& seg : l) {
      Segment sg;
      sg.word = seg.at("word").get<Word>();
      sg.members = seg.value("members", std::vector<std::uint32_t>{});
      sg.reps = seg.at("reps");
      p.segments.push_back(std::move(sg));
    }
    x.levels.push_back(std::move(p));
  }
  if (j.contains("checkpoints"))
    for (const auto& c : j.at("checkpoints")) {
      x.checkpoints.push_back(qvec_from(c.at("ratio")));
      x.checkpoint_counts.emplace_back(c.at("tau_vec").get<std::vector<std::int64_t>>(), c.at("tau").get<std::int64_t>());
    }
  if (j.contains("enclosures"))
    for (const auto& e : j.at("enclosures")) x.enclosures.push_back({e.at(0), e.at(1)});
  x.collapse_depth = j.value("collapse_depth", std::size_t(0));
  x.point = j.value("point", 0.0);
  return x;
}

nlohmann::json certificate_to_json(const GenericCertificate& c) {
  nlohmann::json j = {{"pass", c.pass},
                      {"positions_checked", c.positions_checked},
                      {"replay_ok", c.replay_ok},
                      {"replay_windows", c.replay_windows},
                      {"replay_symbols", c.replay_symbols}};
  nlohmann::json ce = nlohmann::json::array(), ed = nlohmann::json::array(), ms = nlohmann::json::array();
  for (double v : c.checkpoint_error) ce.push_back(fixed(v));
  for (double v : c.early_drift) ed.push_back(fixed(v));
  for (double v : c.max_step) ms.push_back(fixed(v));
  j["checkpoint_error"] = ce;
  j["early_drift"] = ed;
  j["max_step"] = ms;
  if (c.first)
    j["witness"] = {{"level", c.first->level}, {"s", c.first->s}, {"regime", c.first->regime}, {"detail", c.first->detail}};
  return j;
}

}  // namespace nsgp
