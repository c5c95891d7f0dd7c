#pragma once

#include <functional>
#include <memory>

#include "fog/bisim.hpp"

namespace fog {

struct SegmentExhausted : Error {
  using Error::Error;
};
struct BmelUndetermined : Error {
  BmelUndetermined(std::string msg, TermPair p) : Error(std::move(msg)), pair(p) {}
  TermPair pair;
};

/// Nondecreasing g: N+ -> N+ given as an explicit table with an optional
/// affine tail g(j) = a + b*j past the table. Derived g' layers share the
/// base by value.
class GrowthFn {
public:
  GrowthFn() = default;
  GrowthFn(std::vector<BigInt> table, std::optional<std::pair<BigInt, BigInt>> affine_tail);
  static GrowthFn constant(BigInt value, size_t table_len, bool with_tail);

  BigInt at(const BigInt& j) const;  // throws SegmentExhausted past the segment
  bool defined(const BigInt& j) const;
  /// g'(j) = g(1 + mel + j) + 2*(g(1) + mel*sizeinc)
  GrowthFn primed(const BigInt& mel, const BigInt& sizeinc) const;
  size_t table_size() const;

private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

/// mel_b = maxeqlev(size_{<=b} ∩ C) as a plain number (max ∅ = 0); throws
/// BmelUndetermined in exact mode when a pair's level cannot be resolved
using MelFn = std::function<BigInt(const BigInt& b)>;

struct CandidatePair {
  TermPair pair;
  uint64_t level;
};

/// Finite set of pairs with claimed finite eq-levels (game v3's C).
class CandidateSet {
public:
  void add(TermPair p, uint64_t level);
  const std::vector<CandidatePair>& pairs() const { return pairs_; }
  bool contains(TermPair p) const;
  BigInt max_pressize(const TermStore& st) const;
  /// re-check every claimed level exactly; returns offending description or nullopt
  std::optional<std::string> verify(BisimContext& bc, uint64_t budget) const;
  MelFn mel(const TermStore& st) const;

private:
  std::vector<CandidatePair> pairs_;
};

// all canonical regular terms / ordered pairs over the grammar's nonterminals
// and x_1..var_limit within the pressize bound
std::vector<TermHandle> enumerate_terms(Grammar& g, uint64_t max_pressize, uint32_t var_limit);
std::vector<TermPair> enumerate_pairs(Grammar& g, uint64_t max_pressize, uint32_t var_limit);

// exact bmel_b over the enumerated pairs; Omega-certified pairs are excluded,
// an unresolved AtLeast pair raises BmelUndetermined
EqLevel bmel(BisimContext& bc, uint64_t b, uint32_t var_limit, uint64_t cap, uint64_t budget,
             unsigned jobs = 1);
MelFn mel_exact(BisimContext& bc, uint32_t var_limit, uint64_t cap, uint64_t budget,
                unsigned jobs = 1);

struct EllTrace {
  std::vector<BigInt> mels;  // mel_{g(1)} per recursion level, outermost first
};

// ell_{0,g} = 1 + mel_{g(1)}; ell_{n+1,g} = 1 + mel_{g(1)} + ell_{n,g'}
BigInt ell(const BigInt& n, const GrowthFn& g, const MelFn& mel, const BigInt& sizeinc,
           EllTrace* trace = nullptr);

bool sufficient_size_bound(const BigInt& c_max_pressize, const MelFn& mel, const BigInt& n,
                           const GrowthFn& g, const BigInt& size_bound, const BigInt& sizeinc);
bool sufficient_segment_bound(const MelFn& mel, const BigInt& n, const GrowthFn& g,
                              const BigInt& segment_bound, const BigInt& sizeinc);

struct NgPresentation {
  Substitution sigma;
  std::vector<TermPair> heads;  // (E_j, F_j)
};

struct NgVerdict {
  bool ok = true;
  bool undetermined = false;
  std::vector<std::string> violations;
};

NgVerdict validate_ng_sequence(BisimContext& bc, const NgPresentation& p, const BigInt& n,
                               const GrowthFn& g, bool require_decreasing, uint64_t cap,
                               uint64_t budget);

/// Derived default g_0 from the forcing argument, override-scaled: head sizes
/// are bounded by 2*nodes(m,H)^2 for H = d_eff + depth chain + k_eff*mrh.
GrowthFn derived_g0(const GrammarConstants& c, const BigInt& k_eff, const BigInt& d_eff,
                    size_t table_len);

struct Lemma2Limits {
  uint32_t var_limit = 1;
  uint64_t pool_max_pressize = 3;  // substitution images for n = 1
  uint64_t cap = 24;
  uint64_t budget = 20000;
  size_t max_positions = 64;
};

struct Lemma2Report {
  BigInt ell_value;
  uint64_t max_len_found = 0;
  uint64_t sequences_seen = 0;
  bool ok = false;
  std::string detail;
};

// exhaustive eqlevel-decreasing (n,g)-sequence search, n <= 1
Lemma2Report lemma2_bruteforce_check(BisimContext& bc, uint32_t n, const GrowthFn& g,
                                     const Lemma2Limits& limits);

}  // namespace fog
