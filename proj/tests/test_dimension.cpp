#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nsgp/dimension.hpp"

#include <cmath>
#include <random>

using namespace nsgp;

namespace {

const InducedScheme& scheme20() {
  static InducedScheme s = build_scheme(build_example_map(), 20);
  return s;
}

std::vector<Cylinder> one_symbol_family(const InducedScheme& s) {
  std::vector<Cylinder> f;
  for (std::uint32_t i = 0; i < s.symbols.size(); ++i) f.push_back(make_cylinder(s, {i}));
  return f;
}

}  // namespace

TEST_CASE("vdim closed forms") {
  CHECK(std::fabs(vdim_of_lengths({0.25, 0.25}) - 0.5) < 1e-9);
  CHECK(std::fabs(vdim_of_lengths({0.5, 0.5}) - 1.0) < 1e-9);
  // Independent oracle: bisection on 2^-s + 3^-s = 1 gives 0.787884...
  double lo = 0, hi = 1;
  for (int i = 0; i < 100; ++i) {
    double m = 0.5 * (lo + hi);
    (std::pow(2.0, -m) + std::pow(3.0, -m) > 1 ? lo : hi) = m;
  }
  CHECK(std::fabs(vdim_of_lengths({0.5, 1.0 / 3.0}) - lo) < 1e-9);
  CHECK(std::fabs(vdim_of_lengths({0.5, 1.0 / 3.0}) - 0.7878) < 1e-3);
  for (int k = 2; k <= 9; ++k)
    for (double l : {0.01, 0.1, 0.3}) {
      if (k * l >= 1.0) continue;
      std::vector<double> v(k, l);
      CHECK(std::fabs(vdim_of_lengths(v) - std::log(double(k)) / std::log(1.0 / l)) < 1e-9);
    }
  CHECK_THROWS_AS(vdim({}), std::invalid_argument);
  CHECK_THROWS_AS(vdim_of_lengths({1.0}), std::invalid_argument);
}

TEST_CASE("vdim is strictly monotone under adding and removing members") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(0.001, 0.2);
  std::vector<double> v;
  for (int k = 0; k < 5; ++k) v.push_back(U(rng));
  double s = vdim_of_lengths(v);
  for (int k = 0; k < 20; ++k) {
    v.push_back(U(rng));
    double t = vdim_of_lengths(v);
    CHECK(t > s);
    s = t;
  }
  v.pop_back();
  CHECK(vdim_of_lengths(v) < s);
}

TEST_CASE("dimension bounds") {
  auto b = dim_bounds(0.8, 3.0, 0.0, 4);
  CHECK(b.lo == 0.8);
  CHECK(b.hi == 0.8);
  double prev = 10;
  for (std::size_t n = 2; n < 40; ++n) {
    auto c = dim_bounds(0.8, 3.0, 1.0, n);
    CHECK(c.lo <= 0.8);
    CHECK(c.hi >= 0.8);
    CHECK(c.half_width < prev);
    prev = c.half_width;
  }
  auto st = expansion_stats(scheme20(), 3, 32, 0);
  auto e = dim_bounds(0.75, st.lambda_hat, st.D_hat, 4);
  CHECK(2 * e.half_width == doctest::Approx(2 * st.D_hat / (4 * std::log(st.lambda_hat) - st.D_hat)));
  CHECK_THROWS_AS(dim_bounds(0.5, 1.1, 5.0, 2), std::invalid_argument);
}

TEST_CASE("measure normalization and additivity") {
  const auto& s = scheme20();
  auto fam = one_symbol_family(s);
  auto m = build_measure(s, fam);
  CHECK(m.s > 0);
  CHECK(m.s < 1);
  double total1 = 0, total2 = 0;
  for (std::uint32_t a = 0; a < m.size(); ++a) {
    total1 += std::exp(m.log_measure(&a, 1));
    double ext = 0;
    for (auto b : m.from[m.image[a]]) {
      std::uint32_t w[2] = {a, b};
      double mw = std::exp(m.log_measure(w, 2));
      total2 += mw;
      ext += mw;
    }
    CHECK(std::fabs(ext - std::exp(m.log_measure(&a, 1))) < 1e-10);
  }
  CHECK(std::fabs(total1 - 1) < 1e-10);
  CHECK(std::fabs(total2 - 1) < 1e-8);
  // Additivity on random deeper words.
  std::mt19937_64 rng(2);
  for (int k = 0; k < 100; ++k) {
    std::vector<std::uint32_t> w{std::uint32_t(rng() % m.size())};
    for (int t = 0; t < 3; ++t) {
      const auto& nx = m.from[m.image[w.back()]];
      w.push_back(nx[rng() % nx.size()]);
    }
    double ext = 0;
    for (auto b : m.from[m.image[w.back()]]) {
      auto v = w;
      v.push_back(b);
      ext += std::exp(m.log_measure(v.data(), v.size()));
    }
    CHECK(std::fabs(ext - std::exp(m.log_measure(w.data(), w.size()))) < 1e-10);
  }
  std::uint32_t bad[2] = {0, 0};
  while (m.base[bad[1]] == m.image[bad[0]]) ++bad[1];
  CHECK_THROWS_AS(m.log_measure(bad, 2), std::invalid_argument);
}

TEST_CASE("measure requires covering images") {
  CHECK_THROWS_AS(build_measure({-1.0, -1.0}, {0, 0}, {0, 0}, 2), std::invalid_argument);
  // Two equal members on one component: the path measure is uniform, 2^-k at depth k.
  auto two = build_measure({-1.0, -1.0}, {0, 0}, {0, 0}, 1);
  std::uint32_t w[3] = {0, 1, 0};
  CHECK(two.log_measure(w, 3) == doctest::Approx(-3 * std::log(2.0)));
}

TEST_CASE("local dimension scan") {
  // Two halves of the unit interval: s = 1 and log m / log|w| = 1 exactly.
  auto m = build_measure({std::log(0.5), std::log(0.5)}, {0, 0}, {0, 0}, 1);
  auto len = [&](const std::uint32_t* a, std::size_t l) {
    double t = 0;
    for (std::size_t i = 0; i < l; ++i) t += m.log_len[a[i]];
    return t;
  };
  for (std::size_t l : {1u, 4u, 8u}) {
    auto r = local_dim_scan(m, len, l, 50, m.s, 3);
    CHECK(std::fabs(r.min_ratio - 1.0) < 1e-9);  // s itself is a 1e-10 bisection root
    CHECK(std::fabs(r.max_ratio - 1.0) < 1e-9);
  }
  const auto& s = scheme20();
  auto fam = one_symbol_family(s);
  auto fm = build_measure(s, fam);
  // Depth one is exact under this measure (m(a) = |a|^s), so the spread first opens up
  // and only narrows once the per-step normalizers average out.
  auto r1 = local_dim_scan(s, fam, fm, 1, 400, fm.s, 1);
  CHECK(r1.max_ratio - r1.min_ratio < 1e-6);
  auto r32 = local_dim_scan(s, fam, fm, 32, 400, fm.s, 1);
  auto r128 = local_dim_scan(s, fam, fm, 128, 400, fm.s, 1);
  CHECK(r128.max_ratio - r128.min_ratio <= r32.max_ratio - r32.min_ratio);
  auto r4 = local_dim_scan(s, fam, fm, 4, 400, fm.s, 1);
  CHECK(std::isfinite(r4.E_hat));
  auto r4b = local_dim_scan(s, fam, fm, 4, 800, fm.s, 1);
  CHECK(std::fabs(r4b.E_hat - r4.E_hat) <= 0.25 * r4.E_hat);
}

TEST_CASE("N1 from the measured constant") {
  CHECK(compute_N1(0.0, 0.3, 3.0, 0.9).N1 == 1);
  auto a = compute_N1(5.0, 0.3, 3.0, 0.9), b = compute_N1(10.0, 0.3, 3.0, 0.9);
  CHECK(std::abs(b.N1 - 2 * a.N1) <= 1);
  CHECK(a.dim_margin);
  CHECK_FALSE(compute_N1(5.0, 0.3, 3.0, 0.7).dim_margin);
  double x = 5.0 / (a.N1 * std::log(3.0));
  CHECK(x < 0.15);
  CHECK(5.0 / ((a.N1 - 1) * std::log(3.0)) >= 0.15);
  auto j = dimension_report(0.8, dim_bounds(0.8, 3.0, 1.0, 4), 2.0, 7, 10, 4);
  CHECK(j["N1"] == 7);
}
