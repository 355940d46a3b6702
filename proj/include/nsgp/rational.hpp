#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace nsgp {

using Q = boost::multiprecision::cpp_rational;
using Z = boost::multiprecision::cpp_int;
using QVec = std::vector<Q>;

// Parses "0.25", "-3", "1/3" or "2.5e-1" exactly.
Q parse_rational(const std::string& s);
QVec parse_rational_list(const std::string& csv);

std::string num_str(const Q& q);
std::string den_str(const Q& q);
double to_double(const Q& q);

Q abs(const Q& q);
Q max_norm(const QVec& a, const QVec& b);
QVec ratio_of(const std::vector<std::int64_t>& tau_vec, std::int64_t tau);
QVec ratio_of(const std::vector<Z>& tau_vec, const Z& tau);

// Fast strict test |tau_vec/tau - p|_inf < r with p and r sharing denominator den.
// Everything fits in 128-bit cross products for the magnitudes used here.
struct BallTest {
  std::vector<std::int64_t> p_num;
  std::int64_t radius_num = 0;
  std::int64_t den = 1;

  BallTest() = default;
  BallTest(const QVec& centre, const Q& radius);
  bool contains(const std::int64_t* tau_vec, std::int64_t tau) const;
};

}  // namespace nsgp
