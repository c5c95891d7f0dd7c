#pragma once

// Shared test helpers: independent oracles and seeded generators. Oracles
// walk raw structure and never go through the canonicalization or
// equivalence paths they are used to check.

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "fog/bisim.hpp"
#include "fog/grammar.hpp"
#include "fog/term.hpp"

namespace fog::test {

// Bounded tree unfolding; two terms are equal iff unfoldings agree at every
// depth (for canonical-equality checks a depth of 2*(pressize sum) decides).
inline std::string unfold(const TermStore& st, TermHandle t, uint64_t depth) {
  if (depth == 0) return "?";
  if (st.is_var(t)) return "x" + std::to_string(st.var_id(t).index);
  std::string out = st.name(st.root(t));
  auto kids = st.children(t);
  if (!kids.empty()) {
    out += "(";
    for (size_t i = 0; i < kids.size(); ++i) {
      if (i) out += ",";
      out += unfold(st, kids[i], depth - 1);
    }
    out += ")";
  }
  return out;
}

inline bool unfold_equal(const TermStore& st, TermHandle a, TermHandle b, uint64_t depth) {
  return unfold(st, a, depth) == unfold(st, b, depth);
}

// Distinct subterms of a finite term, by brute-force subtree enumeration on
// the rendered trees (pressize oracle for acyclic terms).
inline void collect_subtrees(const TermStore& st, TermHandle t, std::set<std::string>& out) {
  out.insert(unfold(st, t, 1u << 20));
  for (TermHandle k : st.children(t)) collect_subtrees(st, k, out);
}

inline size_t pressize_oracle_finite(const TermStore& st, TermHandle t) {
  std::set<std::string> subs;
  collect_subtrees(st, t, subs);
  return subs.size();
}

// Explicit-fragment stratified-equivalence oracle: enumerates the joint
// reachable state set, then iterates coverings level by level on adjacency
// data. Independent of BisimContext's memoized recursion.
struct FragmentOracle {
  std::vector<TermHandle> states;
  std::map<TermHandle, size_t> index;
  // moves[s] = sorted (action label, successor index)
  std::vector<std::vector<std::pair<int32_t, size_t>>> moves;

  FragmentOracle(Grammar& g, std::vector<TermHandle> roots, size_t budget = 100000) {
    std::vector<TermHandle> todo = roots;
    while (!todo.empty()) {
      TermHandle t = todo.back();
      todo.pop_back();
      if (index.count(t)) continue;
      index[t] = states.size();
      states.push_back(t);
      for (auto& [a, s] : steps_action(g, t)) todo.push_back(s);
      if (states.size() > budget) throw Error("fragment oracle budget exceeded");
    }
    moves.resize(states.size());
    for (size_t i = 0; i < states.size(); ++i)
      for (auto& [a, s] : steps_action(g, states[i])) {
        if (!index.count(s)) {  // successor discovered after enumeration snapshot
          index[s] = states.size();
          states.push_back(s);
          moves.resize(states.size());
        }
        moves[i].push_back({a.v, index[s]});
      }
  }

  bool covered(const std::vector<std::vector<bool>>& rel, size_t i, size_t j) const {
    for (auto& [a, i2] : moves[i]) {
      bool ok = false;
      for (auto& [b, j2] : moves[j])
        if (a == b && rel[i2][j2]) ok = true;
      if (!ok) return false;
    }
    for (auto& [b, j2] : moves[j]) {
      bool ok = false;
      for (auto& [a, i2] : moves[i])
        if (a == b && rel[i2][j2]) ok = true;
      if (!ok) return false;
    }
    return true;
  }

  // eq-level of two states, capped; returns cap+1 to mean "at least cap+1"
  uint64_t eqlevel_capped(TermHandle a, TermHandle b, uint64_t cap) {
    size_t n = states.size();
    std::vector<std::vector<bool>> rel(n, std::vector<bool>(n, true));
    size_t ia = index.at(a), ib = index.at(b);
    for (uint64_t k = 1; k <= cap; ++k) {
      std::vector<std::vector<bool>> next(n, std::vector<bool>(n, false));
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
          if (rel[i][j]) next[i][j] = covered(rel, i, j);
      rel = std::move(next);
      if (!rel[ia][ib]) return k - 1;
    }
    return cap + 1;
  }
};

// deterministic RNG for property-style suites
struct Rng {
  std::mt19937 g;
  explicit Rng(uint32_t seed) : g(seed) {}
  uint32_t upto(uint32_t n) { return std::uniform_int_distribution<uint32_t>(0, n - 1)(g); }
  bool coin() { return upto(2) == 1; }
};

// random finite term over given symbols and variables x1..var_limit; needs a
// variable or a nullary symbol to bottom out
inline TermHandle random_finite_term(TermStore& st, const std::vector<NtId>& nts, Rng& rng,
                                     uint32_t var_limit, uint32_t depth) {
  std::vector<NtId> nullary;
  for (NtId f : nts)
    if (st.arity(f) == 0) nullary.push_back(f);
  auto leaf = [&]() -> TermHandle {
    if (var_limit > 0 && (nullary.empty() || rng.coin()))
      return st.var(VarId{1 + rng.upto(var_limit)});
    if (nullary.empty()) throw Error("random_finite_term: no leaf symbol available");
    return st.app(nullary[rng.upto((uint32_t)nullary.size())], {});
  };
  if (depth == 0 || rng.upto(4) == 0) return leaf();
  NtId f = nts[rng.upto((uint32_t)nts.size())];
  if (st.arity(f) == 0) return st.app(f, {});
  std::vector<TermHandle> kids;
  for (uint32_t i = 0; i < st.arity(f); ++i)
    kids.push_back(random_finite_term(st, nts, rng, var_limit, depth - 1));
  return st.app(f, kids);
}

// random (possibly cyclic) term built through a raw graph
inline TermHandle random_regular_term(TermStore& st, const std::vector<NtId>& nts, Rng& rng,
                                      uint32_t var_limit, uint32_t max_nodes) {
  uint32_t n = 1 + rng.upto(max_nodes);
  GraphBuilder gb;
  std::vector<GraphBuilder::Ref> refs;
  std::vector<NtId> labels;
  for (uint32_t i = 0; i < n; ++i) {
    NtId f = nts[rng.upto((uint32_t)nts.size())];
    labels.push_back(f);
    refs.push_back(gb.add_app(f, st.arity(f)));
  }
  for (uint32_t i = 0; i < n; ++i) {
    for (uint32_t p = 0; p < st.arity(labels[i]); ++p) {
      uint32_t roll = rng.upto(4);
      if (roll == 0 && var_limit > 0)
        gb.set_kid(refs[i], p, GraphBuilder::Ref::handle(st.var(VarId{1 + rng.upto(var_limit)})));
      else
        gb.set_kid(refs[i], p, refs[rng.upto(n)]);
    }
  }
  return gb.intern(st, refs[0]);
}

// small random grammar: <= max_nts nonterminals, arity <= 2, every
// nonterminal gets 1..3 rules over actions a,b
inline Grammar random_grammar(Rng& rng, uint32_t max_nts = 3, uint32_t max_rules_per = 2) {
  std::string text;
  uint32_t nnts = 1 + rng.upto(max_nts);
  std::vector<uint32_t> arity(nnts);
  const char* names[] = {"A", "B", "C", "D"};
  for (uint32_t i = 0; i < nnts; ++i) {
    arity[i] = i == 0 ? 0 : rng.upto(3);  // a nullary symbol always exists
    text += "nonterminal " + std::string(names[i]) + " " + std::to_string(arity[i]) + "\n";
  }
  text += "action a\naction b\n";
  // finite rhs generator as text, depth <= 2, over x1..x_m
  std::function<std::string(uint32_t, uint32_t)> rhs = [&](uint32_t m, uint32_t depth) {
    if (m > 0 && (depth == 0 || rng.coin())) return "x" + std::to_string(1 + rng.upto(m));
    uint32_t f = rng.upto(nnts);
    if (depth == 0 && arity[f] != 0) f = 0;  // bottom out at the nullary symbol
    std::string out = names[f];
    if (arity[f] > 0) {
      out += "(";
      for (uint32_t i = 0; i < arity[f]; ++i) {
        if (i) out += ", ";
        out += rhs(m, depth - 1);
      }
      out += ")";
    }
    return out;
  };
  for (uint32_t i = 0; i < nnts; ++i) {
    uint32_t m = arity[i];
    uint32_t nr = 1 + rng.upto(max_rules_per);
    for (uint32_t r = 0; r < nr; ++r) {
      std::string lhs = names[i];
      if (m > 0) {
        lhs += "(";
        for (uint32_t j = 1; j <= m; ++j) {
          if (j > 1) lhs += ",";
          lhs += "x" + std::to_string(j);
        }
        lhs += ")";
      }
      text += "rule " + lhs + " " + (rng.coin() ? "a" : "b") + " " + rhs(m, 2) + "\n";
    }
  }
  return parse_grammar(text);
}

}  // namespace fog::test
