#pragma once

#include "fog/grammar.hpp"

namespace fog {

/// PDA with rules pX ->a q alpha, a in Act ∪ {eps}; bottom symbol implicit.
struct Pda {
  std::vector<std::string> states, stacks, actions;
  struct PRule {
    uint32_t p, x;              // state, stack symbol
    int32_t action;             // -1 = eps
    uint32_t q;
    std::vector<uint32_t> push;  // alpha
  };
  std::vector<PRule> rules;

  std::optional<uint32_t> state_index(std::string_view) const;
  std::optional<uint32_t> stack_index(std::string_view) const;
};

struct PdaConfig {
  uint32_t state = 0;
  std::vector<uint32_t> stack;  // top first; bottom implicit at the end
  friend bool operator==(const PdaConfig&, const PdaConfig&) = default;
  friend auto operator<=>(const PdaConfig&, const PdaConfig&) = default;
};

// Format, '#' comments:
//   state p q ...
//   stack X Y ...
//   action a b ...
//   pdarule p X a q "Y X"      (eps as the action token for silent rules)
Pda parse_pda(std::string_view text);
PdaConfig parse_pda_config(const Pda& pda, std::string_view text);  // "q X Y"
std::string render_pda_config(const Pda& pda, const PdaConfig& c);

struct EncodingCtx {
  bool swallow = false;
  NtId bottom;
  // (state, stack) -> nonterminal, absent for swallowed pairs
  std::map<std::pair<uint32_t, uint32_t>, NtId> symbol;
  // (state, stack) -> target state for deterministic popping eps pairs
  std::map<std::pair<uint32_t, uint32_t>, uint32_t> det_pop;
};

// Appendix transformation: nonterminals [qY] of arity |Q| plus nullary
// bottom; with swallow, deterministic popping eps rules are inlined and the
// output grammar has no eps action. Throws on non-swallowable eps rules.
std::pair<Grammar, EncodingCtx> to_grammar(const Pda& pda, bool swallow);

TermHandle encode_config(Grammar& g, const EncodingCtx& ctx, const Pda& pda, const PdaConfig& c);
// raw steps; action -1 = eps
std::vector<std::pair<int32_t, PdaConfig>> pda_steps(const Pda& pda, const PdaConfig& c);
// repeatedly apply deterministic popping eps steps (the swallowed ones)
PdaConfig collapse_det_pops(const Pda& pda, const EncodingCtx& ctx, PdaConfig c);

}  // namespace fog
