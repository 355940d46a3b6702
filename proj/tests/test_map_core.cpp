#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nsgp/map_core.hpp"

#include <cmath>
#include <random>

using namespace nsgp;

namespace {

// Plain bisection on an increasing function, independent of the library solver.
template <class F>
double bisect(F f, double a, double b, double target) {
  for (int i = 0; i < 200; ++i) {
    double m = 0.5 * (a + b);
    (f(m) < target ? a : b) = m;
  }
  return 0.5 * (a + b);
}

}  // namespace

TEST_CASE("example map values") {
  MapSpec m = build_example_map();
  CHECK(m.d == 3);
  CHECK(m.d_prime == 0);
  CHECK(m.alpha == doctest::Approx(0.5));
  CHECK(std::fabs(m.branches[0].value(1.0 / 3.0) - 1.0) < 1e-12);
  CHECK(m(0.0) == 0.0);
  CHECK(m(0.5) == 0.5);
  CHECK(m(1.0) == 1.0);
  CHECK(m(0.25) == doctest::Approx(0.53125).epsilon(1e-15));
}

TEST_CASE("eval_with_deriv") {
  MapSpec m = build_example_map();
  auto e = eval_with_deriv(m, 0.25);
  CHECK(e.y == doctest::Approx(0.53125));
  CHECK(e.dy == doctest::Approx(4.375));
  CHECK(e.branch == 0);
  e = eval_with_deriv(m, 0.5);
  CHECK(e.y == 0.5);
  CHECK(e.dy == 1.0);
  CHECK(e.branch == 1);
  e = eval_with_deriv(m, 2.0 / 3.0);
  CHECK(std::fabs(e.y) < 1e-15);
  CHECK(e.dy == doctest::Approx(7.0));
  CHECK(e.branch == 2);
  CHECK_THROWS_AS(eval_with_deriv(m, 1.5), std::domain_error);
  CHECK_THROWS_AS(eval_with_deriv(m, -1e-9), std::domain_error);
}

TEST_CASE("thaler family") {
  MapSpec e = build_example_map();
  MapSpec t = build_thaler_family(3, 3.0);
  REQUIRE(t.branches.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(t.branches[i].c == doctest::Approx(e.branches[i].c).epsilon(1e-12));
    CHECK(t.branches[i].xi == doctest::Approx(e.branches[i].xi));
  }
  MapSpec two = build_thaler_family(2, 3.0);
  CHECK(two.branches[0].c == doctest::Approx(4.0));
  CHECK(two.branches[1].c == doctest::Approx(4.0));
  CHECK(two.branches[0].hi == 0.5);
  CHECK_THROWS_AS(build_thaler_family(2, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(build_thaler_family(1, 3.0), std::invalid_argument);
  MapSpec four = build_thaler_family(4, 2.5);
  CHECK(four.d == 4);
  CHECK(four.alpha == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("branch inverse against bisection oracle") {
  MapSpec m = build_example_map();
  CHECK(branch_inverse(m, 0, 1.0) == doctest::Approx(1.0 / 3.0));
  double x1 = branch_inverse(m, 0, 1.0 / 3.0);
  double o1 = bisect([](double x) { return x + 18 * x * x * x; }, 0.0, 1.0 / 3.0, 1.0 / 3.0);
  CHECK(std::fabs(x1 - o1) < 1e-13);
  CHECK(x1 == doctest::Approx(0.196585).epsilon(1e-5));
  double x2 = branch_inverse(m, 1, 2.0 / 3.0);
  double u2 = bisect([](double u) { return u + 72 * u * u * u; }, 0.0, 1.0 / 6.0, 1.0 / 6.0);
  CHECK(std::fabs(x2 - (0.5 + u2)) < 1e-13);
  CHECK(x2 == doctest::Approx(0.598292).epsilon(1e-5));
  CHECK_THROWS_AS(branch_inverse(m, 0, 1.1), std::domain_error);
}

TEST_CASE("inverse round trip on random values") {
  MapSpec m = build_example_map();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (std::size_t b = 0; b < m.branches.size(); ++b)
    for (int k = 0; k < 1000; ++k) {
      double y = U(rng);
      double x = branch_inverse(m, b, y, 1e-13);
      CHECK(std::fabs(m.branches[b].value(x) - y) <= 2e-13);
    }
}

TEST_CASE("full branch, neutral points, symmetry") {
  MapSpec m = build_example_map();
  for (const auto& b : m.branches) {
    CHECK(std::fabs(b.value(b.lo)) <= 1e-12);
    CHECK(std::fabs(b.value(b.hi) - 1.0) <= 1e-12);
  }
  for (const auto& fp : m.fixed_points) CHECK(std::fabs(m.branches[fp.branch].deriv(fp.xi) - 1.0) <= 1e-9);
  for (int k = 0; k <= 999; ++k) {
    double x = k / 999.0;
    if (std::fabs(x - 1.0 / 3.0) < 1e-9 || std::fabs(x - 2.0 / 3.0) < 1e-9) continue;
    CHECK(std::fabs(m(1.0 - x) - (1.0 - m(x))) <= 1e-12);
  }
}

TEST_CASE("validate assumptions") {
  MapSpec m = build_example_map();
  auto rep = validate_assumptions(m);
  CHECK(rep.pass);
  // Grid-max oracle for sup 108x / (1 + 54x^2)^2 on [0, 1/3].
  double best = 0;
  for (int k = 0; k <= 200000; ++k) {
    double x = (1.0 / 3.0) * k / 200000.0;
    best = std::max(best, 108 * x / std::pow(1 + 54 * x * x, 2));
  }
  CHECK(rep.branches[0].distortion == doctest::Approx(best).epsilon(1e-4));
  CHECK(validate_assumptions(build_thaler_family(2, 3.0)).pass);
}

TEST_CASE("json round trip") {
  MapSpec m = build_example_map();
  auto doc = map_to_json(m);
  MapSpec back = map_from_json(doc);
  REQUIRE(back.branches.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(back.branches[i].c == m.branches[i].c);
  auto bad = doc;
  bad["branches"][0]["c"] = 10.0;
  CHECK_THROWS_AS(map_from_json(bad), std::invalid_argument);
}
