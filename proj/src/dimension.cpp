#include "nsgp/dimension.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace nsgp {

namespace {

// log sum_a exp(s * l_a), stable for very negative l_a.
double log_sum_pow(const std::vector<double>& logs, double s) {
  double top = -std::numeric_limits<double>::infinity();
  for (double l : logs) top = std::max(top, s * l);
  double acc = 0.0;
  for (double l : logs) acc += std::exp(s * l - top);
  return top + std::log(acc);
}

double log_sum_exp(const std::vector<double>& v) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : v) top = std::max(top, x);
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - top);
  return top + std::log(acc);
}

}  // namespace

double vdim(const std::vector<double>& log_lengths) {
  if (log_lengths.empty()) throw std::invalid_argument("vdim of an empty family");
  for (double l : log_lengths)
    if (!(l < 0.0)) throw std::invalid_argument("cylinder lengths must lie in (0,1)");
  double lo = 1e-6, hi = 2.0;
  // f(s) = log sum |a|^s is strictly decreasing; the root may sit outside the bracket.
  if (log_sum_pow(log_lengths, lo) <= 0.0) return lo;
  if (log_sum_pow(log_lengths, hi) >= 0.0) return hi;
  // Runs past the 1e-10 tolerance to full precision so that sum |a|^s = 1 to ~1e-15.
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (log_sum_pow(log_lengths, mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double vdim_of_lengths(const std::vector<double>& lengths) {
  std::vector<double> logs;
  logs.reserve(lengths.size());
  for (double l : lengths) logs.push_back(std::log(l));
  return vdim(logs);
}

DimBounds dim_bounds(double s, double lambda_hat, double D_hat, std::size_t n) {
  double denom = double(n) * std::log(lambda_hat) - D_hat;
  if (!(denom > 0.0)) throw std::invalid_argument("n log lambda must exceed D for the dimension bound");
  DimBounds b;
  b.half_width = D_hat / denom;
  b.lo = std::clamp(s - b.half_width, 0.0, 1.0);
  b.hi = std::clamp(s + b.half_width, 0.0, 1.0);
  return b;
}

double FamilyMeasure::log_measure(const std::uint32_t* members, std::size_t k) const {
  if (k == 0) return 0.0;
  // The start weight Z_c cancels the first normalizer, leaving |a_1|^s.
  double acc = log_w[members[0]];
  for (std::size_t t = 1; t < k; ++t) {
    if (base[members[t]] != image[members[t - 1]]) throw std::invalid_argument("inadmissible member chain");
    acc += step_log(members[t]);
  }
  return acc;
}

double FamilyMeasure::max_abs_log_Z() const {
  double m = 0.0;
  for (double z : log_Z) m = std::max(m, std::fabs(z));
  return m;
}

FamilyMeasure build_measure(const std::vector<double>& log_len, const std::vector<std::uint32_t>& base,
                            const std::vector<std::uint32_t>& image, std::size_t num_components) {
  if (log_len.size() != base.size() || base.size() != image.size())
    throw std::invalid_argument("family arrays differ in length");
  FamilyMeasure m;
  m.s = vdim(log_len);
  m.base = base;
  m.image = image;
  m.log_len = log_len;
  m.from.assign(num_components, {});
  std::vector<bool> is_image(num_components, false);
  for (std::size_t a = 0; a < log_len.size(); ++a) {
    if (base[a] >= num_components || image[a] >= num_components)
      throw std::invalid_argument("component index out of range");
    m.log_w.push_back(m.s * log_len[a]);
    m.from[base[a]].push_back(std::uint32_t(a));
    is_image[image[a]] = true;
  }
  for (std::size_t c = 0; c < num_components; ++c) {
    if (!is_image[c] || m.from[c].empty()) throw std::invalid_argument("family images fail to cover Y");
    std::vector<double> ws;
    for (auto a : m.from[c]) ws.push_back(m.log_w[a]);
    m.log_Z.push_back(log_sum_exp(ws));
  }
  return m;
}

FamilyMeasure build_measure(const InducedScheme& s, const std::vector<Cylinder>& family) {
  std::vector<double> ll;
  std::vector<std::uint32_t> b, im;
  for (const auto& c : family) {
    ll.push_back(log_length(s, c.word));
    b.push_back(c.base);
    im.push_back(c.image);
  }
  return build_measure(ll, b, im, s.y.size());
}

LocalDimScan local_dim_scan(const InducedScheme& s, const std::vector<Cylinder>& family, const FamilyMeasure& m,
                            std::size_t l, std::size_t samples, double dim, std::uint64_t seed) {
  Word word;
  auto len = [&](const std::uint32_t* members, std::size_t k) {
    word.clear();
    for (std::size_t t = 0; t < k; ++t) word.insert(word.end(), family[members[t]].word.begin(), family[members[t]].word.end());
    return log_length(s, word);
  };
  return local_dim_scan(m, len, l, samples, dim, seed);
}

LocalDimScan local_dim_scan(const FamilyMeasure& m,
                            const std::function<double(const std::uint32_t*, std::size_t)>& log_len_of, std::size_t l,
                            std::size_t samples, double dim, std::uint64_t seed) {
  if (l == 0) throw std::invalid_argument("scan depth must be at least 1");
  std::mt19937_64 rng(seed);
  std::vector<double> first_w;
  for (double w : m.log_w) first_w.push_back(std::exp(w));
  std::discrete_distribution<std::uint32_t> first(first_w.begin(), first_w.end());
  std::vector<std::discrete_distribution<std::uint32_t>> step;
  for (const auto& ids : m.from) {
    std::vector<double> w;
    for (auto a : ids) w.push_back(std::exp(m.step_log(a)));
    step.emplace_back(w.begin(), w.end());
  }
  LocalDimScan r;
  r.min_ratio = std::numeric_limits<double>::infinity();
  r.max_ratio = -r.min_ratio;
  std::vector<std::uint32_t> members(l);
  for (std::size_t k = 0; k < samples; ++k) {
    members[0] = first(rng);
    for (std::size_t t = 1; t < l; ++t) {
      std::uint32_t c = m.image[members[t - 1]];
      members[t] = m.from[c][step[c](rng)];
    }
    double lm = m.log_measure(members.data(), l);
    double ll = log_len_of(members.data(), l);
    double q = lm / ll;
    r.min_ratio = std::min(r.min_ratio, q);
    r.max_ratio = std::max(r.max_ratio, q);
    r.E_hat = std::max(r.E_hat, std::fabs(lm - dim * ll));
    ++r.samples;
  }
  return r;
}

HorizonN1 compute_N1(double E_hat, double eps, double lambda_hat, double dim) {
  if (!(eps > 0.0) || !(lambda_hat > 1.0)) throw std::invalid_argument("compute_N1 needs eps > 0 and lambda > 1");
  HorizonN1 h;
  double x = 2.0 * E_hat / (eps * std::log(lambda_hat));
  h.N1 = std::max<std::int64_t>(1, std::int64_t(std::floor(x)) + 1);
  h.dim_margin = dim >= 1.0 - eps / 2.0;
  return h;
}

nlohmann::json dimension_report(double s, const DimBounds& b, double E_hat, std::int64_t N1, std::size_t family_size,
                                std::size_t n) {
  return {{"s", s}, {"bounds", {b.lo, b.hi}}, {"E_hat", E_hat}, {"N1", N1}, {"family_size", family_size}, {"n", n}};
}

}  // namespace nsgp
