#pragma once

#include "nsgp/approximation.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace nsgp {

struct TargetSpec {
  enum class Kind { point, polyline };
  Kind kind = Kind::point;
  std::vector<QVec> vertices;  // one vertex for a point target

  static TargetSpec single(QVec p);
  static TargetSpec polyline(std::vector<QVec> vs);
  // Throws std::invalid_argument unless every vertex lies on the simplex.
  void validate(std::size_t d) const;
};

// Targets p_i for levels 0..count-1. Polylines are swept back and forth, every segment
// being cut into 2^r equal pieces on sweep r; each sweep starts where the last one ended.
std::vector<QVec> target_sequence(const TargetSpec& t, std::size_t count);

// One stored inequality lhs < rhs (or <= for the non-strict conditions).
struct Inequality {
  std::string name;
  std::string lhs, rhs;  // exact rationals as "p/q", or decimal for measured logs
  bool strict = true;
  bool pass = false;
};

struct BridgeLevel {
  Q eps;
  QVec p_bar;
  ApproxFamily family;
  std::size_t n = 0;       // induced steps per block
  std::int64_t N = 0;      // max(N0, N1)
  std::int64_t M = 0;      // max single-symbol return time over the family
  double C_tilde = 0.0;    // max_c |log m_i(Y_c)|
  double w_max = 0.0, w_min = 0.0;  // extremes of -log of one measure step
  double l_max = 0.0;      // max |log |a|| over the family
  std::int64_t k = 0;      // blocks at this level
  std::int64_t t = 0;      // induced steps before this level
  std::vector<Inequality> certificates;
};

struct BridgeSchedule {
  TargetSpec target;
  std::size_t m_max = 0;
  Q eps0;
  double lambda_hat = 0.0, log_D = 0.0;
  std::vector<BridgeLevel> levels;
  bool all_pass() const;
};

struct PlanOptions {
  std::size_t budget = 2000;     // pool words per family
  std::size_t max_pool_depth = 6;
  std::int64_t k_cap = 1'000'000'000'000'000;  // 1e15
  unsigned threads = 1;
  std::uint64_t seed = 0;
};

// Families for eps_i = eps0 / 2^i, i < levels, then the least k_i satisfying the seven
// conditions with surrogate bounds. Throws std::runtime_error naming the binding condition
// when no k_i up to the cap works.
BridgeSchedule plan_schedule(const InducedScheme& s, const TargetSpec& target, std::size_t levels, const Q& eps0,
                             const PlanOptions& opt = {});

// Re-evaluates every stored certificate from the schedule's numbers.
std::vector<Inequality> schedule_certificates(const BridgeSchedule& sch, std::size_t level);

// A run of `reps` copies of `word`; `members` are family ids when the run comes from a family.
struct Segment {
  Word word;
  std::vector<std::uint32_t> members;
  std::int64_t reps = 1;
};

struct LevelPath {
  std::vector<Segment> segments;  // head members, one repeated cycle, tail
  std::int64_t symbols() const;
};

enum class BlockPolicy { lexicographic, longest };
BlockPolicy parse_policy(const std::string& name);
std::string policy_name(BlockPolicy p);

struct GenericPoint {
  std::vector<LevelPath> levels;
  std::vector<QVec> checkpoints;                 // ratio at t_{i+1}
  std::vector<std::pair<std::vector<std::int64_t>, std::int64_t>> checkpoint_counts;  // (tau_vec, tau)
  std::vector<Interval> enclosures;              // depths 1..enclosure_depth
  std::size_t collapse_depth = 0;                // first depth within 4 ulp (0 if none)
  double point = 0.0;                            // midpoint of the deepest enclosure
};

GenericPoint generate_point(const InducedScheme& s, const BridgeSchedule& sch, BlockPolicy policy = BlockPolicy::lexicographic,
                            std::size_t enclosure_depth = 64);

// Recomputes checkpoints and enclosures after the level paths were edited.
void refresh_point(const InducedScheme& s, const BridgeSchedule& sch, GenericPoint& x, std::size_t enclosure_depth = 64);

// log m of the prefix made of the first `blocks[i]` blocks of level i (levels beyond the
// vector are empty; a partial level must be the last one). Throws std::invalid_argument
// if the prefix is not block-aligned with the schedule.
double bridge_measure(const BridgeSchedule& sch, const GenericPoint& x, const std::vector<std::int64_t>& blocks);

// log |w| for a run-length encoded word, exact up to float rounding and the distortion
// across the final interval; repeated runs are collapsed once the pulled-back point settles.
double log_length_runs(const InducedScheme& s, const std::vector<Segment>& runs);

struct Violation {
  std::size_t level = 0;
  std::int64_t s = 0;  // induced steps after t_level
  std::string regime;  // "a", "b", "c", "rect", "step", "admissible"
  std::string detail;
};

struct GenericCertificate {
  bool pass = true;
  std::optional<Violation> first;
  std::size_t positions_checked = 0;
  std::vector<double> checkpoint_error;  // |ratio(t_{i+1}) - p_i| per level
  std::vector<double> early_drift;       // max |ratio(t_i+s) - ratio(t_i)|, s < N_i
  std::vector<double> max_step;          // max consecutive difference inside level i
  bool replay_ok = true;
  std::size_t replay_windows = 0;
  std::int64_t replay_symbols = 0;
};

// Checks regimes (a)-(c) exactly. Inside compressed runs the ratio of every coordinate is a
// Moebius function of the repetition count, so box membership at both ends of a run covers
// every position in between; all other positions are checked one by one.
GenericCertificate verify_generic(const InducedScheme& s, const BridgeSchedule& sch, const GenericPoint& x,
                                  bool replay = true);

struct ProfileRow {
  std::size_t level = 0;
  std::int64_t blocks = 0;
  double value = 0.0;  // log m(b_i a_{i,s}) / log |b_i a_{i,s}|
};

struct LevelBand {
  std::size_t level = 0;
  double gamma = 0.0;            // log m(b_i) / log |b_i|
  double lo = 0.0, hi = 0.0;     // min{gamma(1-e)/(1+e), 1-eps_i}, max{gamma(1+e)/(1-e), 1+eps_i}
  double slack = 0.0;            // sum of measured E_hat over earlier levels / |log |b_i||
  bool profile_in_band = true;
  bool profile_in_inflated = true;
  double midpoint() const { return 0.5 * (lo + hi); }
};

struct LocalDimProfile {
  std::vector<ProfileRow> rows;
  std::vector<LevelBand> bands;
};

LocalDimProfile local_dim_profile(const InducedScheme& s, const BridgeSchedule& sch, const GenericPoint& x,
                                  std::size_t samples_per_level = 24);

nlohmann::json schedule_to_json(const BridgeSchedule& sch);
nlohmann::json point_to_json(const GenericPoint& x);
// Only the fields verify_generic needs are restored (families are not serialized).
BridgeSchedule schedule_from_json(const nlohmann::json& j);
GenericPoint point_from_json(const nlohmann::json& j);
nlohmann::json certificate_to_json(const GenericCertificate& c);

}  // namespace nsgp
