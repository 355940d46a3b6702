#include "nsgp/rational.hpp"

#include <numeric>
#include <sstream>
#include <stdexcept>

namespace nsgp {

namespace {

Q pow10(int e) {
  Z p = 1;
  for (int i = 0; i < (e < 0 ? -e : e); ++i) p *= 10;
  return e < 0 ? Q(Z(1), p) : Q(p);
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\n");
  auto e = s.find_last_not_of(" \t\n");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

Q parse_rational(const std::string& raw) {
  std::string s = trim(raw);
  if (s.empty()) throw std::invalid_argument("empty rational");
  if (auto slash = s.find('/'); slash != std::string::npos) {
    Q n = parse_rational(s.substr(0, slash));
    Q d = parse_rational(s.substr(slash + 1));
    if (d == 0) throw std::invalid_argument("zero denominator: " + raw);
    return n / d;
  }
  int exp10 = 0;
  if (auto e = s.find_first_of("eE"); e != std::string::npos) {
    exp10 = std::stoi(s.substr(e + 1));
    s = s.substr(0, e);
  }
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s = s.substr(1);
  }
  Z mant = 0;
  int frac_digits = 0;
  bool dot = false, any = false;
  for (char c : s) {
    if (c == '.') {
      if (dot) throw std::invalid_argument("bad rational: " + raw);
      dot = true;
    } else if (c >= '0' && c <= '9') {
      mant = mant * 10 + (c - '0');
      if (dot) ++frac_digits;
      any = true;
    } else {
      throw std::invalid_argument("bad rational: " + raw);
    }
  }
  if (!any) throw std::invalid_argument("bad rational: " + raw);
  Q q = Q(mant) * pow10(exp10 - frac_digits);
  return neg ? Q(-q) : q;
}

QVec parse_rational_list(const std::string& csv) {
  QVec out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_rational(item));
  return out;
}

std::string num_str(const Q& q) { return boost::multiprecision::numerator(q).str(); }
std::string den_str(const Q& q) { return boost::multiprecision::denominator(q).str(); }
double to_double(const Q& q) { return q.convert_to<double>(); }

Q abs(const Q& q) { return q < 0 ? Q(-q) : q; }

Q max_norm(const QVec& a, const QVec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dimension mismatch");
  Q m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    Q d = abs(a[i] - b[i]);
    if (d > m) m = d;
  }
  return m;
}

QVec ratio_of(const std::vector<std::int64_t>& tau_vec, std::int64_t tau) {
  QVec r;
  r.reserve(tau_vec.size());
  for (auto t : tau_vec) r.emplace_back(Z(t), Z(tau));
  return r;
}

QVec ratio_of(const std::vector<Z>& tau_vec, const Z& tau) {
  QVec r;
  r.reserve(tau_vec.size());
  for (const auto& t : tau_vec) r.emplace_back(t, tau);
  return r;
}

BallTest::BallTest(const QVec& centre, const Q& radius) {
  Z l = boost::multiprecision::denominator(radius);
  for (const auto& c : centre) l = boost::multiprecision::lcm(l, boost::multiprecision::denominator(c));
  if (l > Z(std::int64_t(1) << 40)) throw std::overflow_error("ball denominators too large");
  den = l.convert_to<std::int64_t>();
  Z rn = boost::multiprecision::numerator(radius) * (l / boost::multiprecision::denominator(radius));
  radius_num = rn.convert_to<std::int64_t>();
  for (const auto& c : centre) {
    Z cn = boost::multiprecision::numerator(c) * (l / boost::multiprecision::denominator(c));
    p_num.push_back(cn.convert_to<std::int64_t>());
  }
}

bool BallTest::contains(const std::int64_t* tau_vec, std::int64_t tau) const {
  __extension__ typedef __int128 i128;
  const i128 bound = i128(radius_num) * tau;
  for (std::size_t j = 0; j < p_num.size(); ++j) {
    i128 diff = i128(tau_vec[j]) * den - i128(p_num[j]) * tau;
    if (diff < 0) diff = -diff;
    if (!(diff < bound)) return false;
  }
  return true;
}

}  // namespace nsgp
