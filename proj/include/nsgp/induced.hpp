#pragma once

#include "nsgp/map_core.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace nsgp {

// Raised when an orbit or word needs levels beyond the stored truncation.
struct TruncationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct YComponent {
  Interval iv;
  std::size_t branch = 0;
  std::size_t big = 0;  // big image index: components in one branch share it
};

// One letter of the first-return alphabet. base/image are Y-component indices.
struct ReturnSymbol {
  std::uint32_t base = 0;
  std::uint32_t target = 0;
  std::uint32_t level = 0;
  std::uint32_t comp = 0;
  std::uint32_t image = 0;
  Interval enclosure;

  std::int64_t tau() const { return std::int64_t(level) + 1; }
  std::vector<std::int64_t> tau_vec(std::size_t d) const;
};

struct InducedScheme {
  MapSpec map;
  std::size_t m_max = 0;
  std::vector<YComponent> y;                       // sorted left to right
  std::vector<std::vector<std::size_t>> big_images;  // big image -> component ids
  std::vector<Interval> x_regions;                 // X_j, one per fixed point
  std::vector<std::vector<std::size_t>> landing;   // landing[j][c]: component reached from D_m^{(j,c)}
  std::vector<std::vector<std::vector<Interval>>> levels;  // levels[j][c][m]
  std::vector<std::vector<Interval>> untracked_regions;    // parts of X_j beyond level m_max
  std::vector<ReturnSymbol> symbols;               // sorted by (base, target, level, comp)
  std::vector<std::size_t> symbols_begin;          // symbols of base c: [begin[c], begin[c+1])
  std::vector<std::vector<std::uint32_t>> by_position;  // per component, ids sorted by enclosure
  std::vector<double> untracked_mass;              // per target j

  std::size_t d() const { return map.d; }
  std::size_t num_components() const { return y.size(); }
  std::size_t num_big() const { return big_images.size(); }
  std::size_t big_of(std::size_t comp) const { return y[comp].big; }
  double total_untracked() const;
};

InducedScheme build_scheme(const MapSpec& map, std::size_t m_max = 10000);

enum class RegionKind { Y, X, Boundary };
struct RegionTag {
  RegionKind kind = RegionKind::Boundary;
  std::size_t index = 0;  // Y component or X_j index
};

RegionTag region_of(const InducedScheme& s, double x);

// Y-component or X-region of x without a boundary band; Y wins on shared endpoints.
RegionTag classify(const InducedScheme& s, double x);

struct HitResult {
  std::int64_t tau = 0;
  std::vector<std::int64_t> tau_vec;
  double image = 0.0;
};

HitResult hit_time(const MapSpec& map, const InducedScheme& s, double x, std::int64_t n_max);

std::size_t symbol_index_of(const InducedScheme& s, double y);
const ReturnSymbol& symbol_of(const InducedScheme& s, double y);

// Preimage of z (in the symbol's image component) inside the symbol cylinder;
// adds log F'(x) to *logd when given.
double pull_back_point(const InducedScheme& s, const ReturnSymbol& sym, double z, double* logd = nullptr);
// Outward-rounded enclosure of the preimage of J through one symbol.
Interval pull_back(const InducedScheme& s, const ReturnSymbol& sym, Interval J);

struct TailTable {
  std::vector<std::vector<double>> mass;  // mass[j][n] = Leb{tau^(j) > n}, n = 0..m_max
  std::vector<double> alpha_hat;
  std::vector<double> gamma_hat;
  std::vector<double> untracked;
  std::size_t fit_lo = 0, fit_hi = 0;
};

TailTable tail_table(const InducedScheme& s);

struct ExpansionStats {
  double lambda_hat = 0.0;  // min sampled |F'|
  double D_hat = 0.0;       // max sampled log-distortion of F^depth on a cylinder
  double D_mult = 0.0;      // exp(D_hat) / min component length: multiplicative form
  std::size_t level_cap = 0;
};

ExpansionStats expansion_stats(const InducedScheme& s, int depth, int samples, std::uint64_t seed = 0);

}  // namespace nsgp
