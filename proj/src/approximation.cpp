#include "nsgp/approximation.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <thread>

namespace nsgp {

namespace {

using Graph = std::vector<std::vector<bool>>;

Graph component_graph(const InducedScheme& s) {
  Graph g(s.y.size(), std::vector<bool>(s.y.size(), false));
  for (const auto& sym : s.symbols) g[sym.base][sym.image] = true;
  return g;
}

Graph multiply(const Graph& a, const Graph& b) {
  const std::size_t n = a.size();
  Graph c(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      if (a[i][k])
        for (std::size_t j = 0; j < n; ++j)
          if (b[k][j]) c[i][j] = true;
  return c;
}

// Lexicographically least word of exactly k symbols starting in `from` and ending in `to`.
Word least_word(const InducedScheme& s, const std::vector<bool>& from, const std::vector<bool>& to, std::size_t k) {
  const std::size_t C = s.y.size();
  // reach[r][c]: some r-symbol word leads from c into `to`.
  std::vector<std::vector<bool>> reach(k + 1, std::vector<bool>(C, false));
  reach[0] = to;
  for (std::size_t r = 1; r <= k; ++r)
    for (const auto& sym : s.symbols)
      if (reach[r - 1][sym.image]) reach[r][sym.base] = true;
  Word w;
  std::size_t cur = C;  // no component fixed yet
  for (std::size_t r = k; r > 0; --r) {
    bool picked = false;
    for (std::uint32_t id = 0; id < s.symbols.size() && !picked; ++id) {
      const auto& sym = s.symbols[id];
      bool start_ok = cur == C ? bool(from[sym.base]) : sym.base == cur;
      if (start_ok && reach[r - 1][sym.image]) {
        w.push_back(id);
        cur = sym.image;
        picked = true;
      }
    }
    if (!picked) throw std::logic_error("connector word vanished during construction");
  }
  return w;
}

std::int64_t word_tau(const InducedScheme& s, const Word& w) {
  std::int64_t t = 0;
  for (auto id : w) t += s.symbols[id].tau();
  return t;
}

// Runs body(i) for i < count over `threads` interleaved workers.
template <class F>
void parallel_for(std::size_t count, unsigned threads, F body) {
  threads = std::max(1u, std::min<unsigned>(threads, unsigned(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
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

std::size_t primitivity_index(const Graph& G, std::size_t cap) {
  Graph P = G;
  for (std::size_t k = 1; k <= cap; ++k) {
    bool all = true;
    for (const auto& row : P)
      for (bool b : row) all = all && b;
    if (all) return k;
    P = multiply(P, G);
  }
  return 0;
}

ConnectorSet find_connectors(const InducedScheme& s) {
  ConnectorSet cs;
  const std::size_t C = s.y.size(), L = s.num_big();
  Graph big(L, std::vector<bool>(L, false));
  for (const auto& sym : s.symbols) big[s.big_of(sym.base)][s.big_of(sym.image)] = true;
  cs.k0 = primitivity_index(big);
  if (cs.k0 == 0) throw std::runtime_error("big-image graph is not mixing up to power 64");
  cs.k_comp = primitivity_index(component_graph(s));
  if (cs.k_comp == 0) throw std::runtime_error("component graph is not mixing up to power 64");

  cs.big_table.assign(L, std::vector<Word>(L));
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j) {
      std::vector<bool> from(C, false), to(C, false);
      for (auto c : s.big_images[i]) from[c] = true;
      for (auto c : s.big_images[j]) to[c] = true;
      cs.big_table[i][j] = least_word(s, from, to, cs.k0);
      cs.M_big = std::max(cs.M_big, word_tau(s, cs.big_table[i][j]));
    }
  cs.table.assign(C, std::vector<Word>(C));
  cs.min_log_len = 0.0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t c2 = 0; c2 < C; ++c2) {
      std::vector<bool> from(C, false), to(C, false);
      from[c] = true;
      to[c2] = true;
      cs.table[c][c2] = least_word(s, from, to, cs.k_comp);
      cs.M_conn = std::max(cs.M_conn, word_tau(s, cs.table[c][c2]));
      cs.min_log_len = std::min(cs.min_log_len, log_length(s, cs.table[c][c2]));
    }
  return cs;
}

CandidatePool candidate_pool(const InducedScheme& s, std::size_t n, const Q& eps, const QVec& p_bar,
                             std::size_t budget, unsigned threads, const ConnectorSet* admit) {
  if (n == 0) throw std::invalid_argument("pool depth must be at least 1");
  if (budget == 0) throw std::invalid_argument("pool budget must be positive");
  BallTest ball(p_bar, eps / 2);
  EnumerateOptions opt;
  opt.enclosures = false;
  opt.threads = threads;
  opt.ball = &ball;
  CandidatePool pool;
  const std::size_t C = s.y.size(), d = s.d();
  BallTest sandwich(p_bar, eps * 3 / 4);
  // Connector return-time vectors, flattened as [c][c'] -> (tau_vec, tau).
  std::vector<std::int64_t> conn_tv, conn_tau;
  if (admit)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t c2 = 0; c2 < C; ++c2) {
        std::vector<std::int64_t> tv(d, 0);
        std::int64_t t = 0;
        for (auto id : admit->table[c][c2]) {
          tv[s.symbols[id].target] += s.symbols[id].level;
          t += s.symbols[id].tau();
        }
        conn_tv.insert(conn_tv.end(), tv.begin(), tv.end());
        conn_tau.push_back(t);
      }
  auto admitted = [&](const Cylinder& b) {
    std::vector<std::int64_t> tv(d);
    for (std::size_t c0 = 0; c0 < C; ++c0)
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t f = c0 * C + b.base, g = b.image * C + c;
        for (std::size_t j = 0; j < d; ++j) tv[j] = conn_tv[f * d + j] + b.tau_vec[j] + conn_tv[g * d + j];
        if (!sandwich.contains(tv.data(), conn_tau[f] + b.tau + conn_tau[g])) return false;
      }
    return true;
  };
  std::vector<Word> words;
  enumerate_words(
      s, n, {},
      [&](const Cylinder& c) {
        if (admit && !admitted(c)) ++pool.rejected;
        else words.push_back(c.word);
      },
      opt);
  if (words.empty()) throw std::runtime_error("empty candidate pool: ratio ball unreachable at this depth");
  // Score by the bounded-distortion product |a_1..a_n| ~ prod |a_t| / prod |Y_image(a_t)|; exact
  // log-lengths are computed for the best 4*budget candidates, the rest keep their scores.
  std::vector<double> sym_log(s.symbols.size());
  for (std::size_t id = 0; id < s.symbols.size(); ++id)
    sym_log[id] = std::log(s.symbols[id].enclosure.length()) - std::log(s.y[s.symbols[id].image].iv.length());
  std::vector<double> ll(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    double a = std::log(s.y[s.symbols[words[i].back()].image].iv.length());
    for (auto id : words[i]) a += sym_log[id];
    ll[i] = a;
  }
  std::vector<std::size_t> idx(words.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  auto longer = [&](std::size_t a, std::size_t b) { return ll[a] != ll[b] ? ll[a] > ll[b] : a < b; };
  const std::size_t refine = std::min(words.size(), 4 * budget);
  std::nth_element(idx.begin(), idx.begin() + (refine - 1), idx.end(), longer);
  parallel_for(refine, threads, [&](std::size_t k) { ll[idx[k]] = log_length(s, words[idx[k]]); });
  pool.found = words.size();
  pool.refined = refine;
  for (double l : ll) pool.found_mass += std::exp(l);
  // Keep the `budget` longest, ties broken by word order; output in word order.
  idx.resize(refine);
  pool.budget_bound = words.size() > budget;
  if (idx.size() > budget) {
    std::nth_element(idx.begin(), idx.begin() + budget, idx.end(), longer);
    idx.resize(budget);
  }
  std::sort(idx.begin(), idx.end());
  pool.cylinders.resize(idx.size());
  parallel_for(idx.size(), threads, [&](std::size_t i) { pool.cylinders[i] = make_cylinder(s, words[idx[i]]); });
  for (auto i : idx) {
    pool.kept_mass += std::exp(ll[i]);
    pool.log_len.push_back(ll[i]);
  }
  return pool;
}

HorizonConstants horizon_constants(const InducedScheme& s, const std::vector<Cylinder>& family, std::size_t n,
                                   const Q& eps) {
  HorizonConstants h;
  for (const auto& c : family) {
    h.M = std::max(h.M, c.tau);
    for (auto id : c.word) h.M_n = std::max(h.M_n, s.symbols[id].tau());
  }
  // 2M/N0 < eps/4  <=>  N0 > 8M/eps.
  Q bound = Q(8 * h.M) / eps;
  Z fl = boost::multiprecision::numerator(bound) / boost::multiprecision::denominator(bound);
  std::int64_t N0 = fl.convert_to<std::int64_t>() + 1;
  h.N0 = std::max<std::int64_t>(N0, std::int64_t(n) + 1);
  return h;
}

ApproxFamily assemble_family(const InducedScheme& s, const CandidatePool& pool, const ConnectorSet& conn,
                             const Q& eps, const QVec& p_bar, const ExpansionStats& st, const AssembleOptions& opt) {
  const std::size_t C = s.y.size();
  ApproxFamily f;
  f.eps = eps;
  f.p_bar = p_bar;
  f.n_pool = pool.cylinders.empty() ? 0 : pool.cylinders.front().n();
  f.n = f.n_pool + 2 * conn.k_comp;
  f.k0 = conn.k0;
  f.k_comp = conn.k_comp;
  f.M_conn = conn.M_conn;
  f.lambda_hat = st.lambda_hat;
  f.D_hat = st.D_hat;
  f.D_mult = st.D_mult;
  f.pool_size = pool.cylinders.size();
  f.pool_kept_fraction = pool.kept_mass / pool.found_mass;

  BallTest item1(p_bar, eps * 3 / 4);
  const Q drift_bound = Q(2 * conn.M_conn, std::int64_t(f.n)) + Q(2 * conn.M_conn, std::int64_t(f.n - conn.k_comp));
  for (const auto& b : pool.cylinders)
    if (b.n() != f.n_pool) throw std::invalid_argument("pool words differ in depth");
  const std::size_t total = pool.cylinders.size() * C * C;
  f.cylinders.resize(total);
  f.log_len.resize(total);
  // Drift test in integers: |tv_a tau_b - tv_b tau_a| * den <= num * tau_a * tau_b.
  const Z drift_num = boost::multiprecision::numerator(drift_bound), drift_den = boost::multiprecision::denominator(drift_bound);
  const auto dnum = static_cast<__int128>(drift_num.convert_to<std::int64_t>());
  const auto dden = static_cast<__int128>(drift_den.convert_to<std::int64_t>());
  std::vector<std::string> failure(total);  // empty unless member i fails
  // Per pool word and exit component: enclosure and log-length of b g, then each entry connector
  // is pulled back on top (the entry connector is short, so its distortion across b g is negligible).
  parallel_for(pool.cylinders.size() * C, opt.threads, [&](std::size_t k) {
    const auto& b = pool.cylinders[k / C];
    const std::size_t c = k % C;
    Word bg = b.word;
    const Word& tail = conn.table[b.image][c];
    bg.insert(bg.end(), tail.begin(), tail.end());
    const Interval K = word_enclosure(s, bg.data(), bg.size());
    const double ll_bg = log_length(s, bg);
    for (std::size_t c0 = 0; c0 < C; ++c0) {
      const std::size_t i = (k / C) * C * C + c0 * C + c;
      const Word& head = conn.table[c0][b.base];
      Cylinder a;
      a.word = head;
      a.word.insert(a.word.end(), bg.begin(), bg.end());
      a.tau_vec.assign(s.d(), 0);
      for (auto id : a.word) {
        a.tau += s.symbols[id].tau();
        a.tau_vec[s.symbols[id].target] += s.symbols[id].level;
      }
      a.base = s.symbols[head.front()].base;
      a.image = s.symbols[tail.back()].image;
      Interval E = K;
      double z = K.mid(), logd = 0.0;
      for (std::size_t t = head.size(); t-- > 0;) {
        E = pull_back(s, s.symbols[head[t]], E);
        z = pull_back_point(s, s.symbols[head[t]], z, &logd);
      }
      a.enclosure = E;
      if (!item1.contains(a.tau_vec.data(), a.tau))
        failure[i] = "assembled cylinder leaves B_{3eps/4}(p_bar); increase the pool depth";
      for (std::size_t j = 0; j < s.d() && failure[i].empty(); ++j) {
        __int128 diff = __int128(a.tau_vec[j]) * b.tau - __int128(b.tau_vec[j]) * a.tau;
        if (diff < 0) diff = -diff;
        if (diff * dden > dnum * a.tau * b.tau) failure[i] = "connector drift exceeds 2M/n + 2M/(n-k)";
      }
      f.log_len[i] = ll_bg - logd;
      f.cylinders[i] = std::move(a);
    }
  });
  for (std::size_t i = 0; i < total; ++i)
    if (!failure[i].empty()) throw FamilyError(failure[i], f.cylinders[i].word);

  // Coverage: every component is the image of some member (and, by construction, a base).
  std::vector<double> mass(s.num_big(), 0.0);
  std::vector<bool> hit(C, false);
  for (std::size_t a = 0; a < f.cylinders.size(); ++a) {
    hit[f.cylinders[a].image] = true;
    mass[s.big_of(f.cylinders[a].base)] += std::exp(f.log_len[a]);
  }
  for (std::size_t c = 0; c < C; ++c)
    if (!hit[c]) throw FamilyError("family images do not cover Y", {});
  f.C_leb = *std::min_element(mass.begin(), mass.end());
  if (!(f.C_leb > 0.0)) throw FamilyError("family misses a big image", {});
  f.C_leb_bound = std::exp(2.0 * conn.min_log_len) / (f.D_mult * f.D_mult) * pool.kept_mass;

  f.measure = build_measure(f.log_len, [&] {
    std::vector<std::uint32_t> v;
    for (const auto& a : f.cylinders) v.push_back(a.base);
    return v;
  }(), [&] {
    std::vector<std::uint32_t> v;
    for (const auto& a : f.cylinders) v.push_back(a.image);
    return v;
  }(), C);
  f.vdim = f.measure.s;

  auto h = horizon_constants(s, f.cylinders, f.n, eps);
  f.M = h.M;
  f.M_n = h.M_n;
  f.N0 = h.N0;
  f.E_depth = opt.scan_depth;
  auto scan = local_dim_scan(s, f.cylinders, f.measure, opt.scan_depth, opt.scan_samples, f.vdim, opt.seed);
  f.E_hat = scan.E_hat;
  auto n1 = compute_N1(f.E_hat, to_double(eps), f.lambda_hat, f.vdim);
  f.N1 = n1.N1;
  f.dim_margin = n1.dim_margin;
  return f;
}

ApproxFamily build_family(const InducedScheme& s, std::size_t n_pool, const Q& eps, const QVec& p_bar,
                          std::size_t budget, unsigned threads, AssembleOptions opt) {
  opt.threads = threads;
  auto conn = find_connectors(s);
  auto pool = candidate_pool(s, n_pool, eps, p_bar, budget, threads, &conn);
  auto st = expansion_stats(s, 3, 32, opt.seed);
  return assemble_family(s, pool, conn, eps, p_bar, st, opt);
}

FamilyReport verify_family(const InducedScheme& s, const ApproxFamily& fam, const std::vector<std::size_t>& l_list,
                           std::size_t samples, std::uint64_t seed) {
  FamilyReport rep;
  rep.min_local = std::numeric_limits<double>::infinity();
  rep.max_local = -rep.min_local;
  const auto& m = fam.measure;
  BallTest ball(fam.p_bar, fam.eps);
  std::mt19937_64 rng(seed);
  const double eps = to_double(fam.eps);
  for (std::size_t l : l_list) {
    if (std::int64_t(l) <= fam.N0) continue;  // shorter words carry no guarantee
    std::size_t blocks = l / fam.n, rest = l % fam.n;
    for (std::size_t k = 0; k < samples; ++k) {
      std::vector<std::uint32_t> members{std::uint32_t(rng() % m.size())};
      while (members.size() < blocks + (rest ? 1 : 0)) {
        const auto& nx = m.from[m.image[members.back()]];
        members.push_back(nx[rng() % nx.size()]);
      }
      Word w;
      for (std::size_t t = 0; t < members.size(); ++t) {
        const Word& mw = fam.cylinders[members[t]].word;
        std::size_t take = t < blocks ? mw.size() : rest;
        w.insert(w.end(), mw.begin(), mw.begin() + take);
      }
      std::vector<std::int64_t> tv(s.d(), 0);
      std::int64_t tau = 0;
      for (auto id : w) {
        tv[s.symbols[id].target] += s.symbols[id].level;
        tau += s.symbols[id].tau();
      }
      ++rep.words_checked;
      if (!ball.contains(tv.data(), tau)) {
        rep.ratio_ok = false;
        if (rep.witnesses.size() < 5) rep.witnesses.push_back(w);
      }
      if (std::int64_t(l) > fam.N1 && blocks > 0) {
        double lm = m.log_measure(members.data(), blocks);
        Word whole;
        for (std::size_t t = 0; t < blocks; ++t)
          whole.insert(whole.end(), fam.cylinders[members[t]].word.begin(), fam.cylinders[members[t]].word.end());
        double q = lm / log_length(s, whole);
        rep.min_local = std::min(rep.min_local, q);
        rep.max_local = std::max(rep.max_local, q);
        if (q < 1.0 - eps || q > 1.0 + eps) rep.local_dim_ok = false;
      }
    }
  }
  return rep;
}

nlohmann::json family_manifest(const ApproxFamily& f) {
  nlohmann::json p = nlohmann::json::array();
  for (const auto& q : f.p_bar) p.push_back({{"num", num_str(q)}, {"den", den_str(q)}});
  return {{"epsilon", {{"num", num_str(f.eps)}, {"den", den_str(f.eps)}}},
          {"p_bar", p},
          {"n", f.n},
          {"n_pool", f.n_pool},
          {"k0", f.k0},
          {"k_comp", f.k_comp},
          {"N0", f.N0},
          {"N1", f.N1},
          {"M_n", f.M_n},
          {"C_leb", f.C_leb},
          {"vdim", f.vdim},
          {"E_hat", f.E_hat},
          {"cylinder_count", f.cylinders.size()}};
}

}  // namespace nsgp
