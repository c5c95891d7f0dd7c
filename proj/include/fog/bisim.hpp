#pragma once

#include <optional>
#include <vector>

#include "fog/grammar.hpp"

namespace fog {

/// Three-valued equivalence level. Finite(k) is exact; AtLeast(c) means the
/// level is >= c and undetermined above; Omega only comes from a certified
/// finite-fragment bisimulation. omega - k = omega + k = omega.
struct EqLevel {
  enum class Kind { Finite, AtLeast, Omega };
  Kind kind = Kind::Finite;
  uint64_t level = 0;

  static EqLevel finite(uint64_t k) { return {Kind::Finite, k}; }
  static EqLevel at_least(uint64_t c) { return {Kind::AtLeast, c}; }
  static EqLevel omega() { return {Kind::Omega, 0}; }
  bool is_finite() const { return kind == Kind::Finite; }
  bool is_omega() const { return kind == Kind::Omega; }
  bool determined() const { return kind != Kind::AtLeast; }
  std::string str() const;
  friend bool operator==(const EqLevel&, const EqLevel&) = default;
};

EqLevel eq_min(const EqLevel& a, const EqLevel& b);
EqLevel eq_max(const EqLevel& a, const EqLevel& b);

/// deduplicated, sorted set of ordered term pairs
using PairSet = std::vector<TermPair>;
PairSet normalize_pairset(PairSet b);
bool pairset_contains(const PairSet& b, TermPair p);

struct EqWitness {
  VarId x;
  TermHandle h;  // the non-variable side, h != x
  std::vector<ActionLabel> w;
  std::vector<RuleId> w_rules_left, w_rules_right;
  enum class Side { LeftSinks, RightSinks } side;
};

/// Stratified-equivalence engine over one grammar: covering, ~_k, eq-levels
/// with Omega certification on finite joint fragments, expansions, and the
/// witness algebra. Results are memoized; the context is single-owner.
class BisimContext {
public:
  explicit BisimContext(Grammar& g) : g_(g) {}
  Grammar& grammar() { return g_; }

  bool covers(const PairSet& b, TermPair p);
  bool approx_equiv(TermHandle t, TermHandle u, uint64_t k);
  EqLevel eqlevel(TermHandle t, TermHandle u, uint64_t cap, uint64_t fragment_budget);
  std::vector<PairSet> expansions(const PairSet& b, bool minimal_only,
                                  size_t enumeration_limit = 200000);
  EqLevel leasteqlev(const PairSet& b, uint64_t cap, uint64_t budget);
  EqLevel maxeqlev(const PairSet& b, uint64_t cap, uint64_t budget);
  std::optional<EqWitness> find_eq_witness(TermHandle e, TermHandle f, const Substitution& sigma,
                                           uint64_t cap, uint64_t budget);
  bool eqlevel_limit_invariance_check(VarId x, TermHandle h, const Substitution& sigma,
                                      uint64_t cap, uint64_t budget);

  /// true once any eqlevel query came back AtLeast (certification tracking)
  bool any_undetermined() const { return any_undetermined_; }
  void reset_undetermined() { any_undetermined_ = false; }

private:
  bool approx_rec(TermHandle t, TermHandle u, uint64_t k);
  std::optional<std::vector<TermHandle>> explore_fragment(TermHandle t, TermHandle u,
                                                          uint64_t budget);

  Grammar& g_;
  struct KeyHash {
    size_t operator()(const std::tuple<uint32_t, uint32_t, uint64_t>& k) const;
  };
  std::unordered_map<std::tuple<uint32_t, uint32_t, uint64_t>, bool, KeyHash> approx_memo_;
  std::map<TermPair, EqLevel> level_cache_;  // Finite/Omega entries are exact
  bool any_undetermined_ = false;
};

}  // namespace fog
