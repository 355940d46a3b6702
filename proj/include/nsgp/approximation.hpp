#pragma once

#include "nsgp/dimension.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <vector>

namespace nsgp {

// Assembly failure carrying the offending word.
struct FamilyError : std::runtime_error {
  Word witness;
  FamilyError(const std::string& what, Word w) : std::runtime_error(what), witness(std::move(w)) {}
};

struct ConnectorSet {
  // Big-image level: smallest k0 with a positive k0-th adjacency power, and one witness per pair.
  std::size_t k0 = 0;
  std::vector<std::vector<Word>> big_table;  // [i][j]: base in big image i, image in big image j
  std::int64_t M_big = 0;                    // max tau over big_table
  // Component level, used for assembly: words of length k_comp between any two components.
  std::size_t k_comp = 0;
  std::vector<std::vector<Word>> table;      // [c][c']
  std::int64_t M_conn = 0;                   // max tau over table
  double min_log_len = 0.0;                  // min log-length over table
};

// Throws std::runtime_error if no power up to 64 is positive.
ConnectorSet find_connectors(const InducedScheme& s);

// Smallest k with every entry of G^k positive, for a 0/1 adjacency matrix; 0 if none up to cap.
std::size_t primitivity_index(const std::vector<std::vector<bool>>& G, std::size_t cap = 64);

struct CandidatePool {
  std::vector<Cylinder> cylinders;  // kept, lexicographic order
  std::vector<double> log_len;
  std::size_t found = 0;
  double found_mass = 0.0;
  double kept_mass = 0.0;
  bool budget_bound = false;
  std::size_t rejected = 0;  // ball words dropped because a sandwich leaves B_{3eps/4}
  std::size_t refined = 0;   // words whose mass is an exact log-length rather than a product score
};

// All n-words with ratio in the open ball B_{eps/2}(p_bar); the longest `budget` are kept.
// Lengths of words outside the 4*budget best product scores are those scores.
// With `admit`, a word is only a candidate if every connector sandwich of it has ratio in
// B_{3eps/4}(p_bar); found counts and masses then refer to admitted words.
// Throws std::runtime_error on an empty pool.
CandidatePool candidate_pool(const InducedScheme& s, std::size_t n, const Q& eps, const QVec& p_bar,
                             std::size_t budget = 100000, unsigned threads = 1, const ConnectorSet* admit = nullptr);

struct ApproxFamily {
  Q eps;
  QVec p_bar;
  std::size_t n_pool = 0;  // depth of the pool words
  std::size_t n = 0;       // depth of family words: n_pool + 2 k_comp
  std::vector<Cylinder> cylinders;
  std::vector<double> log_len;
  FamilyMeasure measure;
  double vdim = 0.0;
  std::int64_t M = 0;      // max tau_n over the family
  std::int64_t M_n = 0;    // max single-symbol tau over the family
  std::int64_t N0 = 0, N1 = 0;
  double E_hat = 0.0;
  std::size_t E_depth = 0;  // family words per scanned sample
  bool dim_margin = false;
  double C_leb = 0.0;       // min over big images of Leb(A ∩ Y_i)
  double C_leb_bound = 0.0; // D^-2 (min connector length)^2 times kept pool mass
  std::size_t k0 = 0, k_comp = 0;
  std::int64_t M_conn = 0;
  double lambda_hat = 0.0, D_hat = 0.0, D_mult = 0.0;
  std::size_t pool_size = 0;
  double pool_kept_fraction = 1.0;
};

struct AssembleOptions {
  std::size_t scan_depth = 8;     // family words per local-dimension sample
  std::size_t scan_samples = 200;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

// Sandwiches every pool word between connectors from every component and to every
// component, checks the three family properties exactly and fills the constants.
// Throws FamilyError if a sandwich leaves B_{3eps/4}(p_bar).
ApproxFamily assemble_family(const InducedScheme& s, const CandidatePool& pool, const ConnectorSet& conn,
                             const Q& eps, const QVec& p_bar, const ExpansionStats& st, const AssembleOptions& opt = {});

// Convenience: connectors + admitted pool + assembly.
ApproxFamily build_family(const InducedScheme& s, std::size_t n_pool, const Q& eps, const QVec& p_bar,
                          std::size_t budget = 100000, unsigned threads = 1, AssembleOptions opt = {});

struct HorizonConstants {
  std::int64_t N0 = 0, M = 0, M_n = 0;
};

// N0 = smallest integer > n with 2M/N0 < eps/4.
HorizonConstants horizon_constants(const InducedScheme& s, const std::vector<Cylinder>& family, std::size_t n,
                                   const Q& eps);

struct FamilyReport {
  bool ratio_ok = true;          // sampled words longer than N0 lie in B_eps(p_bar)
  bool local_dim_ok = true;      // sampled ratios log m / log|w| within [1-eps, 1+eps]
  std::vector<Word> witnesses;   // first failing words
  std::size_t words_checked = 0;
  double min_local = 0.0, max_local = 0.0;
};

// Samples words of each length in l_list (induced steps; members followed by a member prefix).
FamilyReport verify_family(const InducedScheme& s, const ApproxFamily& fam, const std::vector<std::size_t>& l_list,
                           std::size_t samples, std::uint64_t seed = 0);

nlohmann::json family_manifest(const ApproxFamily& fam);

}  // namespace nsgp
