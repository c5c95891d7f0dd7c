#pragma once

#include "fog/bounds.hpp"

namespace fog {

struct GameConfig {
  uint64_t cap = 16;
  uint64_t fragment_budget = 10000;
  uint64_t bfs_budget = 20000;        // shortest-path / closeness searches
  uint64_t max_rounds = 64;
  std::optional<uint64_t> override_k;
  std::optional<uint64_t> override_head_depth;
  enum class Proxy { ApproxAtCap, ExactEqLevel } proxy = Proxy::ApproxAtCap;
  // armed by play_v3
  std::optional<BigInt> ng_threshold;
};

struct PartnerUse {
  VarId cut_var;
  TermHandle v, v_prime;
  size_t chain_level;             // (v, v_prime) found in B_level
  std::vector<RuleId> pivot_word;  // pivot ->word v_prime (resp. v) along the chain
};

struct BalanceEvent {
  enum class Side { Left, Right } side;
  TermHandle pivot;  // U_i for left-balancing, T_i for right
  TermHandle head;   // G, cut variables fresh
  Substitution sigma, sigma_prime;
  std::vector<PartnerUse> partners;
};

struct RoundRecord {
  TermPair start;
  uint64_t k = 0;
  std::vector<PairSet> chain;  // B_0..B_k
  TermPair pick;
  std::vector<RuleId> u1, u2;
  std::optional<BalanceEvent> balance;
  TermPair next;
};

enum class Outcome {
  ProverWinRepeat,
  ProverWinSubsetCovered,
  ProverWinNgOverflow,
  ProverWinRefuterForfeit,
  RefuterWinNotCoverable,
  RefuterWinProverForfeit,
  Exhausted,
};
std::string outcome_str(Outcome o);

struct Play {
  TermPair initial;
  std::vector<RoundRecord> rounds;
  Outcome outcome = Outcome::Exhausted;
  std::string forfeit_reason;
  bool certified = true;
  uint64_t effective_k = 1;
  uint64_t effective_head_depth = 0;
  // v3 bookkeeping
  std::optional<BigInt> ng_threshold;
  std::optional<size_t> ng_length_claimed;
};

// round-facing context handed to strategies
struct RoundView {
  TermPair start;
  size_t round_index;
  const std::vector<PairSet>* chain = nullptr;           // after step 1
  TermPair pick;                                         // after step 2
  const std::vector<RuleId>*u1 = nullptr, *u2 = nullptr;
  bool u1_shortest = true, u2_shortest = true;
  bool u1_has_nonsink = false, u2_has_nonsink = false;
  std::optional<BalanceEvent> left_available, right_available;
  std::optional<BalanceEvent::Side> prev_balance_side;
};

struct ChainProposal {
  uint64_t k;
  std::vector<PairSet> chain;  // B_1..B_k
};

class ProverStrategy {
public:
  virtual ~ProverStrategy() = default;
  // nullopt = cannot produce a chain (forfeit)
  virtual std::optional<ChainProposal> propose_chain(BisimContext& bc, const RoundView& rv) = 0;
  enum class Balance { None, Left, Right };
  virtual Balance choose_balance(BisimContext& bc, const RoundView& rv) = 0;
};

class RefuterStrategy {
public:
  virtual ~RefuterStrategy() = default;
  // eligible is sorted; returns an index into it, nullopt = forfeit
  virtual std::optional<size_t> pick(BisimContext& bc, const RoundView& rv,
                                     const PairSet& eligible) = 0;
};

// closeness: W ->v T for |v| <= k (rule LTS)
std::optional<std::vector<RuleId>> close_k(Grammar& g, TermHandle w, TermHandle t, uint64_t k,
                                           uint64_t budget);

struct ClosenessCert {
  TermHandle head;
  Substitution sigma;
  std::vector<std::pair<VarId, std::vector<RuleId>>> range_words;
  std::vector<RuleId> other_word;
};

// W close^{L/R,d}_k (T,U): head depth <= d, every range term and the other
// component reachable from W within k steps
std::optional<ClosenessCert> close_lr(Grammar& g, TermHandle w, TermPair pair, uint64_t d,
                                      uint64_t k, BalanceEvent::Side side, uint64_t budget);

Play play(BisimContext& bc, TermHandle t0, TermHandle u0, ProverStrategy& prover,
          RefuterStrategy& refuter, const GameConfig& config);

// bundled strategies
std::unique_ptr<RefuterStrategy> least_eqlevel_refuter(uint64_t cap, uint64_t budget);
std::unique_ptr<RefuterStrategy> first_pick_refuter();
std::unique_ptr<ProverStrategy> balancing_prover(const GameConfig& config);
std::unique_ptr<ProverStrategy> naive_prover(const GameConfig& config);  // no balancing

struct NgProvenance {
  size_t run_first_event_round = 0;
  size_t pivots_used = 0;
  TermHandle v0;
  std::string note;
};

// Lemma-1 subsequence extraction from a finished play (>= 2 same-side
// balancings required); cut depth = play.effective_k
std::optional<std::pair<NgPresentation, NgProvenance>> extract_ng_presentation(
    BisimContext& bc, const Play& play);

struct V3Setup {
  CandidateSet c;
  BigInt n0;
  GrowthFn g0;
  uint64_t size_bound = 0;     // B
  uint64_t segment_bound = 0;  // S
  uint32_t var_limit = 1;
};

struct V3SetupError : Error {
  using Error::Error;
};

Play play_v3(BisimContext& bc, TermHandle e0, TermHandle f0, const V3Setup& setup,
             ProverStrategy& prover, RefuterStrategy& refuter, GameConfig config);

// transcript serialization; terms rendered in the text syntax
std::string transcript_json(const Grammar& g, const Play& play, const GameConfig& config);
// re-run a transcript against a grammar; returns regenerated JSON (byte-equal
// to the input when the transcript is intact) or an error message
struct ReplayResult {
  bool ok = false;
  std::string regenerated;
  std::string error;
};
ReplayResult replay_transcript(Grammar& g, const std::string& transcript, const GameConfig& config);

}  // namespace fog
