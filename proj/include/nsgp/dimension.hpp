#pragma once

#include "nsgp/cylinders.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <vector>

namespace nsgp {

// Root s of sum_a |a|^s = 1, given log|a| (all negative). Bisection on [1e-6, 2].
double vdim(const std::vector<double>& log_lengths);
double vdim_of_lengths(const std::vector<double>& lengths);

struct DimBounds {
  double lo = 0.0;
  double hi = 0.0;
  double half_width = 0.0;  // D / (n log lambda - D) before clipping to [0,1]
};

// vdim +- D/(n log lambda - D), clipped to [0,1]. Throws if n log lambda <= D.
DimBounds dim_bounds(double s, double lambda_hat, double D_hat, std::size_t n);

// Markov measure on words over a finite family: the first member is drawn with
// weight |a|^s and each later one with |a|^s / Z_c, Z_c summing over members based at c.
struct FamilyMeasure {
  double s = 0.0;
  std::vector<std::uint32_t> base, image;  // component of each member
  std::vector<double> log_len;             // log|a|
  std::vector<double> log_w;               // s log|a|
  std::vector<double> log_Z;               // per component
  std::vector<std::vector<std::uint32_t>> from;  // members based at each component

  std::size_t size() const { return log_len.size(); }
  // log m(a_1 ... a_k) for member indices; throws on an inadmissible chain.
  double log_measure(const std::uint32_t* members, std::size_t k) const;
  // Log-weight of one member after the first: log(|a|^s / Z_base).
  double step_log(std::uint32_t a) const { return log_w[a] - log_Z[base[a]]; }
  // max over components of |log Z_c|.
  double max_abs_log_Z() const;
};

// Throws std::invalid_argument if some component is not both a base and an image.
FamilyMeasure build_measure(const std::vector<double>& log_len, const std::vector<std::uint32_t>& base,
                            const std::vector<std::uint32_t>& image, std::size_t num_components);
FamilyMeasure build_measure(const InducedScheme& s, const std::vector<Cylinder>& family);

struct LocalDimScan {
  double min_ratio = 0.0;  // min log m(w) / log|w|
  double max_ratio = 0.0;
  double E_hat = 0.0;      // max |log m(w) - dim log|w||
  std::size_t samples = 0;
};

// Samples l-words from the measure itself; log_len_of(members, l) supplies log|w|.
LocalDimScan local_dim_scan(const FamilyMeasure& m,
                            const std::function<double(const std::uint32_t*, std::size_t)>& log_len_of, std::size_t l,
                            std::size_t samples, double dim, std::uint64_t seed = 0);
// Same, with log|w| from the concatenated symbol word of the family members.
LocalDimScan local_dim_scan(const InducedScheme& s, const std::vector<Cylinder>& family, const FamilyMeasure& m,
                            std::size_t l, std::size_t samples, double dim, std::uint64_t seed = 0);

struct HorizonN1 {
  std::int64_t N1 = 1;
  bool dim_margin = false;  // dim >= 1 - eps/2
};

// Smallest N1 with E / (N1 log lambda) < eps/2.
HorizonN1 compute_N1(double E_hat, double eps, double lambda_hat, double dim);

nlohmann::json dimension_report(double s, const DimBounds& b, double E_hat, std::int64_t N1, std::size_t family_size,
                                std::size_t n);

}  // namespace nsgp
