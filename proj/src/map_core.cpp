#include "nsgp/map_core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace nsgp {

namespace {

double spow(double u, double k) {
  if (k == 3.0) return u * u * u;
  return u < 0 ? -std::pow(-u, k) : std::pow(u, k);
}

double apow(double u, double k) {
  double a = std::fabs(u);
  if (k == 1.0) return a;
  if (k == 2.0) return a * a;
  return std::pow(a, k);
}

constexpr double kEndpointTol = 1e-12;

}  // namespace

double Branch::value(double x) const { return x + c * spow(x - xi, kappa); }

double Branch::deriv(double x) const { return 1.0 + c * kappa * apow(x - xi, kappa - 1.0); }

double Branch::second_deriv(double x) const {
  double u = x - xi;
  double s = u < 0 ? -1.0 : 1.0;
  return s * c * kappa * (kappa - 1.0) * apow(u, kappa - 2.0);
}

std::size_t MapSpec::branch_of(double x) const {
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("point outside [0,1]");
  for (std::size_t i = 0; i + 1 < branches.size(); ++i)
    if (x < branches[i].hi) return i;
  return branches.size() - 1;
}

double MapSpec::operator()(double x) const { return branches[branch_of(x)].value(x); }

MapSpec make_map(std::vector<Branch> branches) {
  if (branches.empty()) throw std::invalid_argument("map needs at least one branch");
  std::sort(branches.begin(), branches.end(),
            [](const Branch& a, const Branch& b) { return a.lo < b.lo; });
  if (std::fabs(branches.front().lo) > kEndpointTol || std::fabs(branches.back().hi - 1.0) > kEndpointTol)
    throw std::invalid_argument("branch domains must cover [0,1]");
  MapSpec m;
  const double kappa = branches.front().kappa;
  if (!(kappa > 2.0)) throw std::invalid_argument("exponent must exceed 2 so that alpha lies in (0,1)");
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const Branch& b = branches[i];
    if (!(b.hi > b.lo)) throw std::invalid_argument("empty branch domain");
    if (i > 0 && std::fabs(b.lo - branches[i - 1].hi) > kEndpointTol)
      throw std::invalid_argument("branch domains must be contiguous");
    if (!(b.c > 0)) throw std::invalid_argument("branch coefficient must be positive");
    if (b.kappa != kappa) throw std::invalid_argument("all branches must share one exponent");
    if (std::fabs(b.value(b.lo)) > kEndpointTol || std::fabs(b.value(b.hi) - 1.0) > kEndpointTol)
      throw std::invalid_argument("branch is not full: images must be 0 and 1");
  }
  m.branches = std::move(branches);
  m.alpha = 1.0 / (kappa - 1.0);
  for (std::size_t i = 0; i < m.branches.size(); ++i) {
    const Branch& b = m.branches[i];
    if (b.hosts_fixed_point() && std::fabs(b.value(b.xi) - b.xi) <= kEndpointTol) {
      m.fixed_points.push_back({b.xi, b.c, m.alpha, i});
    } else {
      ++m.d_prime;
    }
  }
  m.d = m.fixed_points.size();
  if (m.d == 0) throw std::invalid_argument("map has no neutral fixed point");
  return m;
}

MapSpec build_thaler_family(int d, double kappa) {
  if (d < 2) throw std::invalid_argument("need at least two branches");
  if (!(kappa > 2.0)) throw std::invalid_argument("exponent must exceed 2 so that alpha lies in (0,1)");
  std::vector<Branch> br;
  for (int i = 0; i < d; ++i) {
    double l = double(i) / d, r = double(i + 1) / d;
    if (i == d - 1) r = 1.0;
    Branch b{l, r, 0.0, 0.0, kappa};
    if (i == 0) {
      b.xi = 0.0;
      b.c = (1.0 - r) / std::pow(r, kappa);
    } else if (i == d - 1) {
      b.xi = 1.0;
      b.c = l / std::pow(1.0 - l, kappa);
    } else {
      // l + c (l - xi)^k = 0 and r + c (r - xi)^k = 1 with xi inside (l, r).
      double q = std::pow(l / (1.0 - r), 1.0 / kappa);
      b.xi = (l + q * r) / (1.0 + q);
      if (!(b.xi > l && b.xi < r)) throw std::runtime_error("continuity system has no interior solution");
      b.c = l / std::pow(b.xi - l, kappa);
    }
    br.push_back(b);
  }
  return make_map(std::move(br));
}

MapSpec build_example_map() {
  return make_map({{0.0, 1.0 / 3.0, 18.0, 0.0, 3.0},
                   {1.0 / 3.0, 2.0 / 3.0, 72.0, 0.5, 3.0},
                   {2.0 / 3.0, 1.0, 18.0, 1.0, 3.0}});
}

MapEval eval_with_deriv(const MapSpec& map, double x) {
  std::size_t i = map.branch_of(x);
  const Branch& b = map.branches[i];
  return {b.value(x), b.deriv(x), i};
}

double branch_inverse(const Branch& br, double y, double tol) {
  const double ylo = br.value(br.lo), yhi = br.value(br.hi);
  if (y < ylo - tol || y > yhi + tol) throw std::domain_error("value outside branch image");
  if (y <= ylo) return br.lo;
  if (y >= yhi) return br.hi;
  // Work in u = x - xi so that points near the centre keep full relative precision.
  const double t = y - br.xi;
  double a = br.lo - br.xi, b = br.hi - br.xi;
  auto g = [&](double u) { return u + br.c * spow(u, br.kappa); };
  auto dg = [&](double u) { return 1.0 + br.c * br.kappa * apow(u, br.kappa - 1.0); };
  double u = a + (b - a) * (y - ylo) / (yhi - ylo);
  for (int it = 0; it < 200; ++it) {
    double gu = g(u) - t;
    if (gu == 0.0) break;
    if (gu < 0) a = u; else b = u;
    double un = u - gu / dg(u);
    if (!(un > a && un < b)) un = 0.5 * (a + b);
    double step = std::fabs(un - u);
    u = un;
    if (step <= 2.0 * std::numeric_limits<double>::epsilon() * std::fabs(u) + 1e-300) break;
    if (b - a <= 2.0 * std::numeric_limits<double>::epsilon() * std::max(std::fabs(a), std::fabs(b))) break;
  }
  return std::clamp(br.xi + u, br.lo, br.hi);
}

double branch_inverse(const MapSpec& map, std::size_t branch, double y, double tol) {
  if (branch >= map.branches.size()) throw std::out_of_range("branch index");
  return branch_inverse(map.branches[branch], y, tol);
}

AssumptionReport validate_assumptions(const MapSpec& map, std::size_t grid) {
  AssumptionReport rep;
  rep.fixed_points_neutral = true;
  for (const auto& fp : map.fixed_points) {
    double dv = map.branches[fp.branch].deriv(fp.xi);
    rep.fixed_point_deriv.push_back(dv);
    if (std::fabs(dv - 1.0) > 1e-9) rep.fixed_points_neutral = false;
  }
  rep.pass = rep.fixed_points_neutral;
  for (const Branch& b : map.branches) {
    BranchReport br;
    br.min_deriv_away = std::numeric_limits<double>::infinity();
    auto distortion_on = [&](std::size_t n) {
      double best = 0.0;
      for (std::size_t k = 0; k <= n; ++k) {
        double x = b.lo + (b.hi - b.lo) * double(k) / double(n);
        double d1 = b.deriv(x);
        best = std::max(best, std::fabs(b.second_deriv(x)) / (d1 * d1));
      }
      return best;
    };
    for (std::size_t k = 0; k <= grid; ++k) {
      double x = b.lo + (b.hi - b.lo) * double(k) / double(grid);
      bool away = true;
      for (const auto& fp : map.fixed_points)
        if (std::fabs(x - fp.xi) <= 1e-3) away = false;
      if (away) br.min_deriv_away = std::min(br.min_deriv_away, b.deriv(x));
    }
    br.distortion = distortion_on(grid);
    br.distortion_refined = distortion_on(2 * grid);
    br.left_image = b.value(b.lo);
    br.right_image = b.value(b.hi);
    br.expanding = br.min_deriv_away > 1.0;
    br.distortion_stable = std::isfinite(br.distortion) &&
                           std::fabs(br.distortion_refined - br.distortion) <= 1e-2 * br.distortion_refined;
    br.full_branch = std::fabs(br.left_image) <= kEndpointTol && std::fabs(br.right_image - 1.0) <= kEndpointTol;
    rep.pass = rep.pass && br.expanding && br.distortion_stable && br.full_branch;
    rep.branches.push_back(br);
  }
  return rep;
}

nlohmann::json map_to_json(const MapSpec& map) {
  nlohmann::json doc;
  doc["branches"] = nlohmann::json::array();
  for (const Branch& b : map.branches)
    doc["branches"].push_back({{"lo", b.lo}, {"hi", b.hi}, {"c", b.c}, {"xi", b.xi}, {"kappa", b.kappa}});
  doc["alpha"] = map.alpha;
  doc["d"] = map.d;
  doc["d_prime"] = map.d_prime;
  return doc;
}

MapSpec map_from_json(const nlohmann::json& doc) {
  const auto& arr = doc.is_array() ? doc : doc.at("branches");
  std::vector<Branch> br;
  for (const auto& b : arr)
    br.push_back({b.at("lo").get<double>(), b.at("hi").get<double>(), b.at("c").get<double>(),
                  b.at("xi").get<double>(), b.at("kappa").get<double>()});
  MapSpec m = make_map(std::move(br));
  if (doc.is_object() && doc.contains("alpha") && std::fabs(doc["alpha"].get<double>() - m.alpha) > 1e-12)
    throw std::invalid_argument("stored alpha disagrees with the branch exponent");
  return m;
}

MapSpec load_map(const std::string& name) {
  if (name == "example") return build_example_map();
  if (name.rfind("thaler:", 0) == 0) {
    auto rest = name.substr(7);
    auto colon = rest.find(':');
    int d = std::stoi(rest.substr(0, colon));
    double kappa = colon == std::string::npos ? 3.0 : std::stod(rest.substr(colon + 1));
    return build_thaler_family(d, kappa);
  }
  std::ifstream in(name);
  if (!in) throw std::invalid_argument("cannot open map document: " + name);
  return map_from_json(nlohmann::json::parse(in));
}

}  // namespace nsgp
