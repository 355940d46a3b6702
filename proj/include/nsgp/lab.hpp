#pragma once

#include "nsgp/bridging.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace nsgp {

struct OccupancyTrace {
  double x0 = 0.0;
  std::int64_t n = 0;
  std::size_t d = 0;
  std::vector<std::int64_t> occupancy;             // X_1..X_d, then Y, over f^0..f^{n-1}
  std::vector<std::int64_t> return_marks;          // times m in [1, n] with f^m x in Y
  std::vector<std::vector<std::int64_t>> tau_bar;  // X_j counts over f^0..f^{m-1} at each mark
  std::vector<std::uint8_t> path;                  // region of f^m x (d means Y); empty unless recorded
  bool starts_in_y = false;

  // e_m(X_j) at the k-th mark (k from 0).
  QVec ratio(std::size_t k) const { return ratio_of(tau_bar[k], return_marks[k]); }
};

// Iterates f honestly n times (no fast-forward). With record_path the region of every
// orbit point is kept for coding_check.
OccupancyTrace simulate_occupancy(const InducedScheme& s, double x0, std::int64_t n, bool record_path = false);

// Trace of the point coded by w, built from symbol data alone (no float iteration).
OccupancyTrace symbolic_trace(const InducedScheme& s, const Word& w, bool record_path = false);

struct CodingReport {
  bool pass = true;  // corrected sandwich, corrected monotonicity and the Y identity
  std::size_t windows = 0;
  std::int64_t steps_checked = 0;
  // Between consecutive returns with the Y visit at tau_k counted first:
  // e_n(X_j) is monotone on [tau_k + 1, tau_{k+1}] and lies between e_{tau_k+1} and e_{tau_{k+1}}.
  std::size_t sandwich_violations = 0;
  std::size_t monotone_violations = 0;
  // e_{tau_k}(Y) = k / tau_k.
  std::size_t y_violations = 0;
  // Bounds taken between tau_k^{(j)}/tau_k and tau_{k+1}^{(j)}/tau_{k+1} on [tau_k, tau_{k+1}], and
  // monotonicity on the closed window. These fail one step after a return whenever the next
  // excursion heads to X_j with X_j already visited.
  std::size_t literal_sandwich_violations = 0;
  std::size_t literal_monotone_violations = 0;
  std::optional<std::int64_t> witness;          // first n failing a corrected check
  std::optional<std::int64_t> literal_witness;  // first n failing a literal check
};

// Requires a recorded path starting in Y and at least two returns; throws std::invalid_argument otherwise.
CodingReport coding_check(const OccupancyTrace& trace);

struct LimitSetEstimate {
  std::vector<std::vector<double>> cloud;  // ratios at the marks after burn-in
  double hausdorff = 0.0;                  // max-norm Hausdorff distance to the target
  double cloud_to_target = 0.0;            // sup over the cloud of the distance to the target
  double target_to_cloud = 0.0;            // sup over the target of the distance to the cloud
  double max_consecutive = 0.0;            // max |ratio_k - ratio_{k+1}| after burn-in
};

// burn_in: number of leading marks dropped; by default the first 10%. The target side of the
// Hausdorff distance samples every polyline segment at `target_samples` points.
LimitSetEstimate limit_set_estimate(const OccupancyTrace& trace, const TargetSpec& target,
                                    std::optional<std::size_t> burn_in = std::nullopt,
                                    std::size_t target_samples = 1000);

struct EnsembleOptions {
  std::int64_t n = 10'000'000;
  unsigned threads = 1;
  std::size_t stride = 1;  // keep every stride-th return
};

// Writes "seed,k,tau_k,tau1_k..taud_k" rows, one per kept return, seeds in the given order.
// Starting points are uniform on [0,1] from each seed.
void ensemble_run(const InducedScheme& s, const std::vector<std::uint64_t>& seeds, const EnsembleOptions& opt,
                  std::ostream& out);
// Same with explicit starting points; the seed column is the index into starts.
void ensemble_run_from(const InducedScheme& s, const std::vector<double>& starts, const EnsembleOptions& opt,
                       std::ostream& out);

nlohmann::json trace_summary(const OccupancyTrace& t);
nlohmann::json coding_to_json(const CodingReport& r);

}  // namespace nsgp
