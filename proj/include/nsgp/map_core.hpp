#pragma once

#include <json.hpp>

#include <cstddef>
#include <string>
#include <vector>

namespace nsgp {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
  double mid() const { return 0.5 * (lo + hi); }
};

// x -> x + c * sign(x - xi) |x - xi|^kappa on [lo, hi].
struct Branch {
  double lo = 0.0;
  double hi = 1.0;
  double c = 1.0;
  double xi = 0.0;
  double kappa = 3.0;

  double value(double x) const;
  double deriv(double x) const;
  double second_deriv(double x) const;
  bool hosts_fixed_point() const { return xi >= lo && xi <= hi; }
};

struct FixedPoint {
  double xi = 0.0;
  double b = 0.0;  // coefficient of the branch hosting xi
  double alpha = 0.5;
  std::size_t branch = 0;
};

struct MapSpec {
  std::vector<Branch> branches;
  std::vector<FixedPoint> fixed_points;
  std::size_t d = 0;
  std::size_t d_prime = 0;
  double alpha = 0.5;

  std::size_t branch_of(double x) const;
  double operator()(double x) const;
};

struct MapEval {
  double y = 0.0;
  double dy = 0.0;
  std::size_t branch = 0;
};

// Checks the structural invariants and fills fixed_points, d, d_prime, alpha.
MapSpec make_map(std::vector<Branch> branches);

MapSpec build_example_map();
MapSpec build_thaler_family(int d, double kappa);

MapEval eval_with_deriv(const MapSpec& map, double x);

// Inverse of one branch; result clamped to the branch domain.
double branch_inverse(const MapSpec& map, std::size_t branch, double y, double tol = 1e-13);
double branch_inverse(const Branch& br, double y, double tol = 1e-13);

struct BranchReport {
  double min_deriv_away = 0.0;  // min f' at grid points farther than 1e-3 from every xi
  double distortion = 0.0;      // sup |f''| / f'^2 on a grid of N points
  double distortion_refined = 0.0;  // same on a grid of 2N points
  double left_image = 0.0;
  double right_image = 0.0;
  bool expanding = false;
  bool distortion_stable = false;
  bool full_branch = false;
};

struct AssumptionReport {
  std::vector<BranchReport> branches;
  std::vector<double> fixed_point_deriv;
  bool fixed_points_neutral = false;
  bool pass = false;
};

AssumptionReport validate_assumptions(const MapSpec& map, std::size_t grid = 20000);

nlohmann::json map_to_json(const MapSpec& map);
MapSpec map_from_json(const nlohmann::json& doc);
// "example", "thaler:<d>:<kappa>", or a path to a JSON map document.
MapSpec load_map(const std::string& name_or_path);

}  // namespace nsgp
