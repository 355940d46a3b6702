#include "nsgp/cylinders.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace nsgp {

namespace {

constexpr double kWideEnough = 1e-7;  // relative width below which pullback switches to log-derivatives

std::vector<std::vector<std::uint32_t>> successors(const InducedScheme& s) {
  std::vector<std::vector<std::uint32_t>> out(s.y.size());
  for (std::size_t c = 0; c < s.y.size(); ++c)
    for (std::size_t i = s.symbols_begin[c]; i < s.symbols_begin[c + 1]; ++i) out[c].push_back(std::uint32_t(i));
  return out;
}

// ids of symbols with base c and target j, grouped by level: [at[c][j][m], at[c][j][m+1]).
struct LevelIndex {
  std::vector<std::vector<std::vector<std::uint32_t>>> at;

  explicit LevelIndex(const InducedScheme& s) {
    const std::size_t M = s.m_max;
    at.assign(s.y.size(), std::vector<std::vector<std::uint32_t>>(s.d(), std::vector<std::uint32_t>(M + 2, 0)));
    for (std::size_t c = 0; c < s.y.size(); ++c)
      for (std::size_t j = 0; j < s.d(); ++j) {
        auto& v = at[c][j];
        std::size_t i = s.symbols_begin[c], e = s.symbols_begin[c + 1];
        while (i < e && s.symbols[i].target < j) ++i;
        for (std::size_t m = 0; m <= M + 1; ++m) {
          while (i < e && s.symbols[i].target == j && s.symbols[i].level < m) ++i;
          v[m] = std::uint32_t(i);
        }
      }
  }
};

// Ball in doubles for pruning; every decision keeps a margin so exact members are never lost.
struct BallBounds {
  std::vector<double> p;
  double rho = 0.0;

  explicit BallBounds(const BallTest& b) : rho(double(b.radius_num) / double(b.den)) {
    for (auto pn : b.p_num) p.push_back(double(pn) / double(b.den));
  }

  // Can r more symbols (levels <= M) bring (v, tau) into the ball? Relaxed to real
  // level totals; the condition is monotone in the final return time, so testing the
  // largest reachable time decides it.
  bool reachable(const std::int64_t* v, std::int64_t tau, std::size_t r, std::size_t M) const {
    double T = double(tau) + double(r) * double(M + 1);
    double need = 0, have = 0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      double vj = double(v[j]);
      if (vj > (p[j] + rho) * T + 1e-6) return false;
      need += std::max(vj, (p[j] - rho) * T);
      have += vj;
    }
    return need - have <= T - double(tau) - double(r) + 1e-6;
  }

  // Level range [lo, hi] for a last symbol on target j (superset of the exact range).
  std::pair<std::int64_t, std::int64_t> last_levels(const std::int64_t* v, std::int64_t tau, std::size_t j,
                                                    std::size_t M) const {
    double lo = 0, hi = double(M);
    double t1 = double(tau + 1);
    // Each constraint reads a*m < b.
    auto apply = [&](double a, double b) {
      if (a > 1e-15) hi = std::min(hi, std::floor(b / a) + 1);
      else if (a < -1e-15) lo = std::max(lo, std::ceil(b / a) - 1);
      else if (b < -1e-6) hi = -1;
    };
    for (std::size_t i = 0; i < p.size(); ++i) {
      double e = i == j ? 1.0 : 0.0, vi = double(v[i]);
      apply(e - (p[i] + rho), (p[i] + rho) * t1 - vi);
      apply((p[i] - rho) - e, vi - (p[i] - rho) * t1);
    }
    return {std::int64_t(std::max(lo, 0.0)), std::int64_t(std::min(hi, double(M)))};
  }
};

struct Walker {
  const InducedScheme& s;
  std::size_t n;
  const RatioFilter& filter;
  const EnumerateOptions& opt;
  const std::vector<std::vector<std::uint32_t>>& next;
  const LevelIndex* index;
  const BallBounds* bounds;
  std::function<void(const Cylinder&)> emit;
  std::size_t emitted = 0;

  Word word;
  std::vector<std::int64_t> tv;
  std::int64_t tau = 0;

  void leaf() {
    if (opt.ball && !opt.ball->contains(tv.data(), tau)) return;
    if (filter && !filter(tv.data(), tau)) return;
    Cylinder c;
    c.word = word;
    c.tau = tau;
    c.tau_vec = tv;
    c.base = s.symbols[word.front()].base;
    c.image = s.symbols[word.back()].image;
    if (opt.enclosures) c.enclosure = word_enclosure(s, word.data(), word.size());
    emit(c);
    ++emitted;
  }

  void descend() {
    if (word.size() == n) return leaf();
    std::uint32_t c = s.symbols[word.back()].image;
    if (bounds && word.size() + 1 == n) {
      for (std::size_t j = 0; j < s.d(); ++j) {
        auto [lo, hi] = bounds->last_levels(tv.data(), tau, j, s.m_max);
        if (lo > hi) continue;
        const auto& at = index->at[c][j];
        for (std::uint32_t id = at[lo]; id < at[hi + 1]; ++id) push_and_descend(id);
      }
      return;
    }
    for (std::uint32_t id : next[c]) push_and_descend(id);
  }

  void push_and_descend(std::uint32_t id) {
    const auto& sym = s.symbols[id];
    word.push_back(id);
    tv[sym.target] += sym.level;
    tau += sym.tau();
    if (!bounds || bounds->reachable(tv.data(), tau, n - word.size(), s.m_max)) descend();
    tau -= sym.tau();
    tv[sym.target] -= sym.level;
    word.pop_back();
  }
};

}  // namespace

const std::vector<ReturnSymbol>& alphabet(const InducedScheme& s) { return s.symbols; }

bool admissible(const InducedScheme& s, const Word& w) {
  if (w.empty()) return false;
  for (std::size_t t = 0; t < w.size(); ++t) {
    if (w[t] >= s.symbols.size()) return false;
    if (t + 1 < w.size() && w[t + 1] < s.symbols.size() && s.symbols[w[t]].image != s.symbols[w[t + 1]].base)
      return false;
  }
  return true;
}

Cylinder make_cylinder(const InducedScheme& s, const Word& w) {
  if (!admissible(s, w)) throw std::invalid_argument("inadmissible word");
  Cylinder c;
  c.word = w;
  c.tau_vec.assign(s.d(), 0);
  for (auto id : w) {
    const auto& sym = s.symbols[id];
    c.tau += sym.tau();
    c.tau_vec[sym.target] += sym.level;
  }
  c.base = s.symbols[w.front()].base;
  c.image = s.symbols[w.back()].image;
  c.enclosure = word_enclosure(s, w.data(), w.size());
  return c;
}

Interval word_enclosure(const InducedScheme& s, const std::uint32_t* w, std::size_t n) {
  Interval K = s.y[s.symbols[w[n - 1]].image].iv;
  for (std::size_t t = n; t-- > 0;) K = pull_back(s, s.symbols[w[t]], K);
  return K;
}

double log_length(const InducedScheme& s, const std::uint32_t* w, std::size_t n) {
  if (n == 0) throw std::invalid_argument("empty word");
  Interval K = s.y[s.symbols[w[n - 1]].image].iv;
  std::size_t t = n;
  while (t > 0) {
    const ReturnSymbol& sym = s.symbols[w[t - 1]];
    Interval next = pull_back(s, sym, K);
    if (next.length() < kWideEnough * s.y[sym.base].iv.length()) break;
    K = next;
    --t;
  }
  if (t == 0) return std::log(K.length());
  // |a| = |K| / (F^t)'(z) up to the distortion across K, which is O(|K|).
  double z = K.mid(), logd = 0.0;
  while (t > 0) {
    z = pull_back_point(s, s.symbols[w[t - 1]], z, &logd);
    --t;
  }
  return std::log(K.length()) - logd;
}

std::size_t enumerate_words(const InducedScheme& s, std::size_t n, const RatioFilter& filter,
                            const std::function<void(const Cylinder&)>& sink, const EnumerateOptions& opt) {
  if (n == 0) throw std::invalid_argument("word length must be at least 1");
  if (!filter && !opt.ball && word_count(s, n) > double(opt.cap))
    throw std::length_error("enumeration exceeds the cylinder cap; supply a filter");
  auto next = successors(s);
  std::optional<LevelIndex> index;
  std::optional<BallBounds> bounds;
  if (opt.ball) {
    if (opt.ball->p_num.size() != s.d()) throw std::invalid_argument("ball dimension mismatch");
    index.emplace(s);
    bounds.emplace(*opt.ball);
  }
  const std::size_t first_count = s.symbols.size();
  unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, unsigned(first_count)));

  auto run = [&](std::uint32_t first, const std::function<void(const Cylinder&)>& out) {
    Walker wk{s, n, filter, opt, next, index ? &*index : nullptr, bounds ? &*bounds : nullptr, out, 0, {},
              std::vector<std::int64_t>(s.d(), 0), 0};
    wk.word.reserve(n);
    wk.push_and_descend(first);
    return wk.emitted;
  };

  std::size_t total = 0;
  if (threads == 1) {
    for (std::uint32_t f = 0; f < first_count; ++f) total += run(f, sink);
    return total;
  }
  // Workers own disjoint first symbols; results are replayed in symbol order.
  std::vector<std::vector<Cylinder>> buckets(first_count);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::uint32_t f = t; f < first_count; f += threads)
        run(f, [&](const Cylinder& c) { buckets[f].push_back(c); });
    });
  for (auto& th : pool) th.join();
  for (auto& b : buckets) {
    for (const auto& c : b) sink(c);
    total += b.size();
    std::vector<Cylinder>().swap(b);
  }
  return total;
}

double word_count(const InducedScheme& s, std::size_t n) {
  // ways[c] = number of admissible words of the current length starting in component c.
  std::vector<double> ways(s.y.size(), 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> nw(s.y.size(), 0.0);
    for (const auto& sym : s.symbols) nw[sym.base] += ways[sym.image];
    ways.swap(nw);
  }
  double t = 0;
  for (double w : ways) t += w;
  return t;
}

Cylinder concat(const InducedScheme& s, const Cylinder& a, const Cylinder& b) {
  if (a.image != b.base) throw std::invalid_argument("inadmissible concatenation");
  Cylinder c;
  c.word = a.word;
  c.word.insert(c.word.end(), b.word.begin(), b.word.end());
  c.tau = a.tau + b.tau;
  c.tau_vec = a.tau_vec;
  for (std::size_t i = 0; i < c.tau_vec.size(); ++i) c.tau_vec[i] += b.tau_vec[i];
  c.base = a.base;
  c.image = b.image;
  Interval K = b.enclosure;
  for (std::size_t t = a.word.size(); t-- > 0;) K = pull_back(s, s.symbols[a.word[t]], K);
  c.enclosure = K;
  return c;
}

Cylinder locate(const InducedScheme& s, double x, std::size_t l) {
  if (l == 0) throw std::invalid_argument("cylinder depth must be at least 1");
  Word w;
  w.reserve(l);
  double y = x;
  for (std::size_t t = 0; t < l; ++t) {
    std::size_t id = symbol_index_of(s, y);
    w.push_back(std::uint32_t(id));
    if (t + 1 == l) break;
    const auto& sym = s.symbols[id];
    for (std::int64_t k = 0; k < sym.tau(); ++k) y = s.map(y);
    y = std::clamp(y, s.y[sym.image].iv.lo, s.y[sym.image].iv.hi);
  }
  return make_cylinder(s, w);
}

QVec ratio(const Cylinder& c) { return ratio_of(c.tau_vec, c.tau); }

RatioBoundCheck check_ratio_bounds(const Cylinder& a, const Cylinder& b) {
  QVec ra = ratio(a), rb = ratio(b);
  std::vector<std::int64_t> sum(a.tau_vec.size());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = a.tau_vec[i] + b.tau_vec[i];
  QVec rab = ratio_of(sum, a.tau + b.tau);
  Q total(a.tau + b.tau);
  RatioBoundCheck r;
  r.close_to_prefix = max_norm(rab, ra) <= Q(2 * b.tau) / total;
  r.close_to_suffix = max_norm(rab, rb) <= Q(2 * a.tau) / total;
  r.between = true;
  for (std::size_t i = 0; i < rab.size(); ++i)
    if (rab[i] < std::min(ra[i], rb[i]) || rab[i] > std::max(ra[i], rb[i])) r.between = false;
  return r;
}

void write_cylinders_csv(std::ostream& os, const std::vector<Cylinder>& cyls) {
  os << "word,lo,hi,tau_n,tau_vec,base,image\n";
  os << std::setprecision(17);
  for (const auto& c : cyls) {
    for (std::size_t t = 0; t < c.word.size(); ++t) os << (t ? "-" : "") << c.word[t];
    os << ',' << c.enclosure.lo << ',' << c.enclosure.hi << ',' << c.tau << ',';
    for (std::size_t i = 0; i < c.tau_vec.size(); ++i) os << (i ? ";" : "") << c.tau_vec[i];
    os << ',' << c.base << ',' << c.image << '\n';
  }
}

}  // namespace nsgp
