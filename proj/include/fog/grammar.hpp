#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fog/term.hpp"

namespace fog {

struct RuleId {
  uint32_t id = 0;
  friend bool operator==(RuleId a, RuleId b) { return a.id == b.id; }
  friend auto operator<=>(RuleId a, RuleId b) { return a.id <=> b.id; }
};

struct ActionId {
  uint32_t id = 0;
  friend bool operator==(ActionId a, ActionId b) { return a.id == b.id; }
  friend auto operator<=>(ActionId a, ActionId b) { return a.id <=> b.id; }
};

/// Action of a transition in the action-based LTS: a grammar action, or the
/// reserved self-loop action of a variable (rendered "@x<i>").
struct ActionLabel {
  int32_t v = 0;  // >= 0: ActionId; < 0: variable -index
  static ActionLabel action(ActionId a) { return {(int32_t)a.id}; }
  static ActionLabel variable(VarId x) { return {-(int32_t)x.index}; }
  bool is_var() const { return v < 0; }
  friend bool operator==(ActionLabel a, ActionLabel b) { return a.v == b.v; }
  friend auto operator<=>(ActionLabel a, ActionLabel b) { return a.v <=> b.v; }
};

struct Rule {
  NtId lhs;
  ActionId action;
  TermHandle rhs;  // finite term over x_1..x_arity(lhs)
};

struct Grammar {
  TermStore store;
  std::vector<NtId> nonterminals;
  std::vector<std::string> actions;  // ActionId = index
  std::vector<Rule> rules;           // RuleId = index
  std::string source;                // original text, for fingerprints

  std::optional<ActionId> find_action(std::string_view name) const;
  ActionId action(std::string_view name);
  const std::string& action_name(ActionId a) const { return actions[a.id]; }
  std::string label_name(ActionLabel l) const;
};

struct Diagnostic {
  enum class Severity { Error, Warning };
  Severity severity;
  std::string message;
};

// Line-oriented format, '#' comments:
//   nonterminal <name> <arity>
//   action <name>
//   rule <name>(x1,...,xm) <action> <finite-term>
Grammar parse_grammar(std::string_view text);
std::vector<Diagnostic> validate(const Grammar& g);
std::string dump_grammar(const Grammar& g);

// rule-based LTS: deterministic per rule, defined iff root(t) = lhs
std::optional<TermHandle> step_rule(Grammar& g, TermHandle t, RuleId r);
// action-based LTS moves, sorted and deduplicated; a variable has exactly its
// self-loop move
std::vector<std::pair<ActionLabel, TermHandle>> steps_action(Grammar& g, TermHandle t);
std::optional<TermHandle> path(Grammar& g, TermHandle t, std::span<const RuleId> w);

/// Shortest (A,i)-sink words: lengths exact, words materialized on demand
/// (lexicographically least rule-id sequence among the shortest).
class SinkWords {
public:
  std::optional<BigInt> length(NtId a, uint32_t pos1based) const;
  std::optional<std::vector<RuleId>> word(const Grammar& g, NtId a, uint32_t pos1based,
                                          uint64_t materialize_limit = 1u << 20) const;
  bool complete(const Grammar& g) const;  // every position has a sink word

private:
  friend SinkWords sink_words(const Grammar&);
  std::map<std::pair<uint32_t, uint32_t>, BigInt> len_;
  mutable std::map<std::pair<uint32_t, uint32_t>, std::vector<RuleId>> words_;
};

SinkWords sink_words(const Grammar& g);

/// Drops every position (A,i) with no sink word and rewrites the rules; the
/// generated LTSs are unchanged up to isomorphism.
Grammar reduce_arities(const Grammar& g);

struct SymbolicPower {
  BigInt base, exp;
  std::optional<BigInt> value(const BigInt& digit_limit = 100000) const;
};

struct GrammarConstants {
  BigInt M0, Mprime0, M1, maxruleheight, sizeinc, arity_max;
  SymbolicPower n0;  // arity_max ^ M1
};

// requires sink words for all positions (run reduce_arities first)
GrammarConstants constants(const Grammar& g);

struct PathClass {
  bool sinking = true;
  std::optional<size_t> first_nonsink_start;  // window start index when not sinking
};

bool is_root_performable(Grammar& g, NtId a, std::span<const RuleId> w);
// window length M0 must fit in size_t for classification to be meaningful
PathClass classify_path(Grammar& g, TermHandle t, std::span<const RuleId> w, uint64_t m0);

struct SplitResult {
  TermHandle head;     // G with variables x_1..x_m of the window-start root
  Substitution sigma;  // x_j -> j-th root-successor of the window-start term
  size_t window_start;
};

// for a shortest non-sinking path t ->w: target = head[sigma], with the head
// derived from the last non-sink window
SplitResult split_last_nonsink(Grammar& g, TermHandle t, std::span<const RuleId> w, uint64_t m0);

}  // namespace fog
