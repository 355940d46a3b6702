#pragma once

#include "nsgp/induced.hpp"
#include "nsgp/rational.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace nsgp {

using Word = std::vector<std::uint32_t>;  // symbol ids into InducedScheme::symbols

// An n-cylinder of the first-return map. base/image are Y-component indices;
// the enclosing big images are scheme.big_of(base) and scheme.big_of(image).
struct Cylinder {
  Word word;
  Interval enclosure;
  std::int64_t tau = 0;
  std::vector<std::int64_t> tau_vec;
  std::uint32_t base = 0;
  std::uint32_t image = 0;

  std::size_t n() const { return word.size(); }
};

const std::vector<ReturnSymbol>& alphabet(const InducedScheme& s);

bool admissible(const InducedScheme& s, const Word& w);

// Exact return data and enclosure of a word; throws std::invalid_argument if inadmissible.
Cylinder make_cylinder(const InducedScheme& s, const Word& w);

// Pulls the image component back through w[n-1], ..., w[0].
Interval word_enclosure(const InducedScheme& s, const std::uint32_t* w, std::size_t n);

// log |a| for arbitrarily long words: interval pullback while the interval is
// wide, then log-derivatives at its midpoint.
double log_length(const InducedScheme& s, const std::uint32_t* w, std::size_t n);
inline double log_length(const InducedScheme& s, const Word& w) { return log_length(s, w.data(), w.size()); }

// Predicate on (tau_vec, tau); evaluated before any enclosure is computed.
using RatioFilter = std::function<bool(const std::int64_t* tau_vec, std::int64_t tau)>;

struct EnumerateOptions {
  std::size_t cap = 10'000'000;  // unfiltered enumeration refuses to exceed this
  unsigned threads = 1;
  bool enclosures = true;
  // Optional ratio ball. Prefixes that cannot reach it are pruned, and the last
  // symbol's level range is solved from the ball's linear constraints.
  const BallTest* ball = nullptr;
};

// Streams all admissible n-words in lexicographic order to sink.
// With opt.ball set, only words whose ratio lies in the ball (and pass filter) are delivered.
// Returns the number of cylinders delivered.
std::size_t enumerate_words(const InducedScheme& s, std::size_t n, const RatioFilter& filter,
                            const std::function<void(const Cylinder&)>& sink, const EnumerateOptions& opt = {});

// Number of admissible n-words, by dynamic programming over components.
double word_count(const InducedScheme& s, std::size_t n);

// Throws std::invalid_argument when a.image != b.base.
Cylinder concat(const InducedScheme& s, const Cylinder& a, const Cylinder& b);

// The l-cylinder containing x, found by forward iteration.
Cylinder locate(const InducedScheme& s, double x, std::size_t l);

QVec ratio(const Cylinder& c);

// Exact checks of the three ratio inequalities for a concatenation ab.
struct RatioBoundCheck {
  bool close_to_prefix = false;  // |r(ab) - r(a)| <= 2 tau(b) / (tau(a) + tau(b))
  bool close_to_suffix = false;  // |r(ab) - r(b)| <= 2 tau(a) / (tau(a) + tau(b))
  bool between = false;          // coordinatewise min <= r(ab) <= max
  bool all() const { return close_to_prefix && close_to_suffix && between; }
};

RatioBoundCheck check_ratio_bounds(const Cylinder& a, const Cylinder& b);

void write_cylinders_csv(std::ostream& os, const std::vector<Cylinder>& cyls);

}  // namespace nsgp
