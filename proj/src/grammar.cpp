#include "fog/grammar.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace fog {

std::optional<ActionId> Grammar::find_action(std::string_view name) const {
  for (uint32_t i = 0; i < actions.size(); ++i)
    if (actions[i] == name) return ActionId{i};
  return std::nullopt;
}

ActionId Grammar::action(std::string_view name) {
  if (auto a = find_action(name)) return *a;
  actions.push_back(std::string(name));
  return ActionId{(uint32_t)actions.size() - 1};
}

std::string Grammar::label_name(ActionLabel l) const {
  if (l.is_var()) return "@x" + std::to_string(-l.v);
  return actions[(size_t)l.v];
}

// ---------------------------------------------------------------------------
// parse / validate / dump
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> tokenize_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '#') break;
    if (std::isspace((unsigned char)c)) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

Grammar parse_grammar(std::string_view text) {
  Grammar g;
  g.source = std::string(text);
  std::istringstream in(g.source);
  std::string line;
  size_t lineno = 0;

  struct PendingRule {
    std::string lhs, action, rhs;
    size_t lineno;
  };
  std::vector<PendingRule> pending;

  while (std::getline(in, line)) {
    ++lineno;
    std::vector<std::string> tok = tokenize_line(line);
    if (tok.empty()) continue;
    if (tok[0] == "nonterminal") {
      if (tok.size() != 3) throw ParseError("nonterminal <name> <arity>", lineno, 1);
      uint32_t arity = 0;
      try {
        arity = (uint32_t)std::stoul(tok[2]);
      } catch (...) {
        throw ParseError("bad arity '" + tok[2] + "'", lineno, 1);
      }
      NtId nt = g.store.nonterminal(tok[1], arity);
      if (std::find(g.nonterminals.begin(), g.nonterminals.end(), nt) != g.nonterminals.end())
        throw ParseError("duplicate nonterminal '" + tok[1] + "'", lineno, 1);
      g.nonterminals.push_back(nt);
    } else if (tok[0] == "action") {
      if (tok.size() != 2) throw ParseError("action <name>", lineno, 1);
      if (g.find_action(tok[1])) throw ParseError("duplicate action '" + tok[1] + "'", lineno, 1);
      g.action(tok[1]);
    } else if (tok[0] == "rule") {
      if (tok.size() < 4) throw ParseError("rule <lhs> <action> <rhs>", lineno, 1);
      std::string rhs;
      for (size_t i = 3; i < tok.size(); ++i) rhs += tok[i];  // rhs may contain spaces
      pending.push_back({tok[1], tok[2], rhs, lineno});
    } else {
      throw ParseError("unknown directive '" + tok[0] + "'", lineno, 1);
    }
  }

  for (const PendingRule& pr : pending) {
    // lhs: NAME or NAME(x1,...,xm) with the exact placeholder sequence
    std::string name = pr.lhs;
    size_t paren = pr.lhs.find('(');
    if (paren != std::string::npos) name = pr.lhs.substr(0, paren);
    auto nt = g.store.find_nonterminal(name);
    if (!nt) throw ParseError("undeclared nonterminal '" + name + "'", pr.lineno, 1);
    uint32_t m = g.store.arity(*nt);
    std::string expected = name;
    if (m > 0) {
      expected += "(";
      for (uint32_t j = 1; j <= m; ++j) {
        if (j > 1) expected += ",";
        expected += "x" + std::to_string(j);
      }
      expected += ")";
    }
    std::string got = pr.lhs;
    if (got != expected && got != name + "()")
      throw ParseError("rule lhs must be " + expected, pr.lineno, 1);
    auto action = g.find_action(pr.action);
    if (!action) throw ParseError("undeclared action '" + pr.action + "'", pr.lineno, 1);
    TermHandle rhs;
    try {
      rhs = parse_term(g.store, pr.rhs, /*allow_rec=*/false);
    } catch (const ParseError& e) {
      throw ParseError(std::string("in rule rhs: ") + e.what(), pr.lineno, 1);
    }
    g.rules.push_back(Rule{*nt, *action, rhs});
  }
  return g;
}

std::vector<Diagnostic> validate(const Grammar& g) {
  std::vector<Diagnostic> out;
  for (const std::string& a : g.actions)
    if (!a.empty() && a[0] == '@')
      out.push_back({Diagnostic::Severity::Error, "action name '" + a + "' uses the reserved '@' prefix"});
  std::set<uint32_t> with_rules;
  for (size_t i = 0; i < g.rules.size(); ++i) {
    const Rule& r = g.rules[i];
    with_rules.insert(r.lhs.id);
    uint32_t m = g.store.arity(r.lhs);
    for (VarId v : g.store.vars(r.rhs))
      if (v.index > m)
        out.push_back({Diagnostic::Severity::Error,
                       "rule " + std::to_string(i) + ": rhs variable x" + std::to_string(v.index) +
                           " out of range for " + g.store.name(r.lhs) + "/" + std::to_string(m)});
    if (!g.store.depth(r.rhs))
      out.push_back({Diagnostic::Severity::Error,
                     "rule " + std::to_string(i) + ": rhs is not a finite term"});
    for (TermHandle s : g.store.subterms(r.rhs))
      if (!g.store.is_var(s)) {
        NtId f = g.store.root(s);
        if (std::find(g.nonterminals.begin(), g.nonterminals.end(), f) == g.nonterminals.end())
          out.push_back({Diagnostic::Severity::Error,
                         "rule " + std::to_string(i) + ": undeclared symbol " + g.store.name(f)});
      }
  }
  for (NtId nt : g.nonterminals)
    if (!with_rules.count(nt.id))
      out.push_back({Diagnostic::Severity::Warning,
                     "nonterminal " + g.store.name(nt) + " is dead (no rules)"});
  return out;
}

std::string dump_grammar(const Grammar& g) {
  std::string out;
  for (NtId nt : g.nonterminals)
    out += "nonterminal " + g.store.name(nt) + " " + std::to_string(g.store.arity(nt)) + "\n";
  for (const std::string& a : g.actions) out += "action " + a + "\n";
  for (const Rule& r : g.rules) {
    uint32_t m = g.store.arity(r.lhs);
    std::string lhs = g.store.name(r.lhs);
    if (m > 0) {
      lhs += "(";
      for (uint32_t j = 1; j <= m; ++j) {
        if (j > 1) lhs += ",";
        lhs += "x" + std::to_string(j);
      }
      lhs += ")";
    }
    out += "rule " + lhs + " " + g.actions[r.action.id] + " " + render_term(g.store, r.rhs) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// LTS semantics
// ---------------------------------------------------------------------------

std::optional<TermHandle> step_rule(Grammar& g, TermHandle t, RuleId r) {
  if (r.id >= g.rules.size()) throw Error("invalid rule id");
  const Rule& rule = g.rules[r.id];
  if (g.store.is_var(t)) return std::nullopt;
  if (!(g.store.root(t) == rule.lhs)) return std::nullopt;
  auto kids = g.store.children(t);
  Substitution s;
  for (uint32_t j = 0; j < kids.size(); ++j) s.set(VarId{j + 1}, kids[j], g.store);
  return apply_subst(g.store, rule.rhs, s);
}

std::vector<std::pair<ActionLabel, TermHandle>> steps_action(Grammar& g, TermHandle t) {
  std::vector<std::pair<ActionLabel, TermHandle>> out;
  if (g.store.is_var(t)) {
    out.push_back({ActionLabel::variable(g.store.var_id(t)), t});
    return out;
  }
  for (uint32_t r = 0; r < g.rules.size(); ++r)
    if (auto h = step_rule(g, t, RuleId{r}))
      out.push_back({ActionLabel::action(g.rules[r].action), *h});
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::optional<TermHandle> path(Grammar& g, TermHandle t, std::span<const RuleId> w) {
  TermHandle cur = t;
  for (RuleId r : w) {
    auto next = step_rule(g, cur, r);
    if (!next) return std::nullopt;
    cur = *next;
  }
  return cur;
}

// ---------------------------------------------------------------------------
// sink words
// ---------------------------------------------------------------------------

namespace {

constexpr uint64_t kInfCost = ~0ull;

// shortest sinking cost of term node -> x_i, composed from d(B,j) entries
struct SinkCost {
  const Grammar& g;
  const std::map<std::pair<uint32_t, uint32_t>, BigInt>& d;

  std::optional<BigInt> through(TermHandle e, uint32_t i) const {
    if (g.store.is_var(e)) {
      if (g.store.var_id(e).index == i) return BigInt(0);
      return std::nullopt;
    }
    NtId b = g.store.root(e);
    auto kids = g.store.children(e);
    std::optional<BigInt> best;
    for (uint32_t j = 0; j < kids.size(); ++j) {
      auto it = d.find({b.id, j + 1});
      if (it == d.end()) continue;
      auto rest = through(kids[j], i);
      if (!rest) continue;
      BigInt cand = it->second + *rest;
      if (!best || cand < *best) best = cand;
    }
    return best;
  }
};

}  // namespace

SinkWords sink_words(const Grammar& g) {
  SinkWords sw;
  // least fixpoint of d(A,i) = min over rules A -> E of 1 + sinkcost(E, i)
  for (;;) {
    bool changed = false;
    SinkCost sc{g, sw.len_};
    for (const Rule& r : g.rules) {
      uint32_t m = g.store.arity(r.lhs);
      for (uint32_t i = 1; i <= m; ++i) {
        auto c = sc.through(r.rhs, i);
        if (!c) continue;
        BigInt cand = 1 + *c;
        auto key = std::make_pair(r.lhs.id, i);
        auto it = sw.len_.find(key);
        if (it == sw.len_.end() || cand < it->second) {
          sw.len_[key] = cand;
          changed = true;
        }
      }
    }
    if (!changed) break;
  }
  return sw;
}

std::optional<BigInt> SinkWords::length(NtId a, uint32_t pos) const {
  auto it = len_.find({a.id, pos});
  if (it == len_.end()) return std::nullopt;
  return it->second;
}

bool SinkWords::complete(const Grammar& g) const {
  for (NtId nt : g.nonterminals)
    for (uint32_t i = 1; i <= g.store.arity(nt); ++i)
      if (!length(nt, i)) return false;
  return true;
}

namespace {

// lexicographically-least shortest word materialization
struct WordBuilder {
  const Grammar& g;
  const std::map<std::pair<uint32_t, uint32_t>, BigInt>& d;
  std::map<std::pair<uint32_t, uint32_t>, std::vector<RuleId>>& memo;
  uint64_t limit;

  const std::vector<RuleId>& word(uint32_t a, uint32_t i) {
    auto key = std::make_pair(a, i);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    const BigInt& target = d.at(key);
    if (target > limit) throw Error("sink word longer than materialization limit");
    std::optional<std::vector<RuleId>> best;
    for (uint32_t r = 0; r < g.rules.size(); ++r) {
      const Rule& rule = g.rules[r];
      if (rule.lhs.id != a) continue;
      SinkCost sc{g, d};
      auto c = sc.through(rule.rhs, i);
      if (!c || 1 + *c != target) continue;
      std::vector<RuleId> w{RuleId{r}};
      append_through(rule.rhs, i, *c, w);
      if (!best || w < *best) best = std::move(w);
    }
    if (!best) throw Error("no sink word despite recorded length");
    return memo.emplace(key, std::move(*best)).first->second;
  }

  // append the lexicographically-least sinking word of given cost through e
  void append_through(TermHandle e, uint32_t i, const BigInt& cost, std::vector<RuleId>& out) {
    if (g.store.is_var(e)) return;  // cost 0, the leaf is x_i
    NtId b = g.store.root(e);
    auto kids = g.store.children(e);
    SinkCost sc{g, d};
    std::optional<std::vector<RuleId>> best;
    for (uint32_t j = 0; j < kids.size(); ++j) {
      auto it = d.find({b.id, j + 1});
      if (it == d.end()) continue;
      auto rest = sc.through(kids[j], i);
      if (!rest || it->second + *rest != cost) continue;
      std::vector<RuleId> w = word(b.id, j + 1);
      append_through(kids[j], i, *rest, w);
      if (!best || w < *best) best = std::move(w);
    }
    if (!best) throw Error("sink word reconstruction failed");
    out.insert(out.end(), best->begin(), best->end());
  }
};

}  // namespace

std::optional<std::vector<RuleId>> SinkWords::word(const Grammar& g, NtId a, uint32_t pos,
                                                   uint64_t materialize_limit) const {
  if (!length(a, pos)) return std::nullopt;
  WordBuilder wb{g, len_, words_, materialize_limit};
  return wb.word(a.id, pos);
}

// ---------------------------------------------------------------------------
// arity reduction
// ---------------------------------------------------------------------------

Grammar reduce_arities(const Grammar& g) {
  SinkWords sw = sink_words(g);
  // kept positions per nonterminal
  std::map<uint32_t, std::vector<uint32_t>> kept;  // nt id -> old positions (1-based)
  bool any_dropped = false;
  for (NtId nt : g.nonterminals) {
    std::vector<uint32_t> ks;
    for (uint32_t i = 1; i <= g.store.arity(nt); ++i) {
      if (sw.length(nt, i))
        ks.push_back(i);
      else
        any_dropped = true;
    }
    kept[nt.id] = std::move(ks);
  }
  Grammar out;
  out.actions = g.actions;
  std::map<uint32_t, NtId> remap;
  for (NtId nt : g.nonterminals) {
    NtId nn = out.store.nonterminal(g.store.name(nt), (uint32_t)kept[nt.id].size());
    out.nonterminals.push_back(nn);
    remap[nt.id] = nn;
  }
  // rewrite a finite rhs: drop children at dropped positions, renumber vars
  std::function<TermHandle(TermHandle, const std::map<uint32_t, uint32_t>&)> rewrite =
      [&](TermHandle t, const std::map<uint32_t, uint32_t>& varmap) -> TermHandle {
    if (g.store.is_var(t)) {
      auto it = varmap.find(g.store.var_id(t).index);
      if (it == varmap.end())
        throw Error("reduce_arities: dropped variable occurs in kept structure");
      return out.store.var(VarId{it->second});
    }
    NtId f = g.store.root(t);
    auto kids = g.store.children(t);
    std::vector<TermHandle> nk;
    for (uint32_t old : kept[f.id]) nk.push_back(rewrite(kids[old - 1], varmap));
    return out.store.app(remap[f.id], nk);
  };
  for (const Rule& r : g.rules) {
    std::map<uint32_t, uint32_t> varmap;
    uint32_t newpos = 0;
    for (uint32_t old : kept[r.lhs.id]) varmap[old] = ++newpos;
    out.rules.push_back(Rule{remap[r.lhs.id], r.action, rewrite(r.rhs, varmap)});
  }
  out.source = dump_grammar(out);
  if (!any_dropped) out.source = g.source;
  return out;
}

// ---------------------------------------------------------------------------
// constants
// ---------------------------------------------------------------------------

std::optional<BigInt> SymbolicPower::value(const BigInt& digit_limit) const {
  if (base == 0) return BigInt(exp == 0 ? 1 : 0);
  if (base == 1) return BigInt(1);
  // bits of base^exp ~ exp * log2(base)
  BigInt bits = exp * (BigInt)(boost::multiprecision::msb(base) + 1);
  if (bits > digit_limit * 4) return std::nullopt;
  BigInt r = 1, b = base, e = exp;
  while (e > 0) {
    if ((e & 1) != 0) r *= b;
    e >>= 1;
    if (e > 0) b *= b;
  }
  return r;
}

GrammarConstants constants(const Grammar& g) {
  SinkWords sw = sink_words(g);
  if (!sw.complete(g))
    throw Error("constants: some (A,i) has no sink word; run reduce_arities first");
  GrammarConstants c;
  BigInt maxlen = 0;
  for (NtId nt : g.nonterminals)
    for (uint32_t i = 1; i <= g.store.arity(nt); ++i) maxlen = std::max(maxlen, *sw.length(nt, i));
  c.M0 = 1 + maxlen;
  BigInt mrh = 0, sizeinc = 0;
  for (const Rule& r : g.rules) {
    auto d = g.store.depth(r.rhs);
    if (!d) throw Error("constants: non-finite rule rhs");
    mrh = std::max(mrh, BigInt(*d));
    sizeinc = std::max(sizeinc, BigInt(g.store.pressize(r.rhs)));
  }
  c.maxruleheight = mrh;
  c.sizeinc = sizeinc;
  c.Mprime0 = (1 + c.M0) * c.maxruleheight;
  c.M1 = c.M0 * (c.Mprime0 + 1);
  BigInt am = 0;
  for (NtId nt : g.nonterminals) am = std::max(am, BigInt(g.store.arity(nt)));
  c.arity_max = am;
  c.n0 = SymbolicPower{am, c.M1};
  return c;
}

// ---------------------------------------------------------------------------
// path classification
// ---------------------------------------------------------------------------

bool is_root_performable(Grammar& g, NtId a, std::span<const RuleId> w) {
  std::vector<TermHandle> kids;
  for (uint32_t j = 1; j <= g.store.arity(a); ++j) kids.push_back(g.store.var(VarId{j}));
  TermHandle cur = g.store.app(a, kids);
  for (RuleId r : w) {
    auto next = step_rule(g, cur, r);
    if (!next) return false;
    cur = *next;
  }
  return true;
}

PathClass classify_path(Grammar& g, TermHandle t, std::span<const RuleId> w, uint64_t m0) {
  std::vector<TermHandle> terms{t};
  for (RuleId r : w) {
    auto next = step_rule(g, terms.back(), r);
    if (!next) throw Error("classify_path: path undefined");
    terms.push_back(*next);
  }
  PathClass pc;
  if (m0 == 0 || m0 > w.size()) return pc;
  size_t window = (size_t)m0;
  for (size_t s = 0; s + window <= w.size(); ++s) {
    TermHandle v = terms[s];
    if (g.store.is_var(v)) continue;
    if (is_root_performable(g, g.store.root(v), w.subspan(s, window))) {
      pc.sinking = false;
      pc.first_nonsink_start = s;
      return pc;
    }
  }
  return pc;
}

SplitResult split_last_nonsink(Grammar& g, TermHandle t, std::span<const RuleId> w, uint64_t m0) {
  std::vector<TermHandle> terms{t};
  for (RuleId r : w) {
    auto next = step_rule(g, terms.back(), r);
    if (!next) throw Error("split_last_nonsink: path undefined");
    terms.push_back(*next);
  }
  if (m0 == 0 || m0 > w.size()) throw Error("split_last_nonsink: path is sinking");
  size_t window = (size_t)m0;
  std::optional<size_t> last;
  for (size_t s = 0; s + window <= w.size(); ++s) {
    TermHandle v = terms[s];
    if (g.store.is_var(v)) continue;
    if (is_root_performable(g, g.store.root(v), w.subspan(s, window))) last = s;
  }
  if (!last) throw Error("split_last_nonsink: path is sinking");
  size_t s = *last;
  TermHandle v = terms[s];
  NtId a = g.store.root(v);
  std::vector<TermHandle> generic;
  for (uint32_t j = 1; j <= g.store.arity(a); ++j) generic.push_back(g.store.var(VarId{j}));
  auto head = path(g, g.store.app(a, generic), w.subspan(s));
  if (!head) throw Error("split_last_nonsink: suffix not root-performable");
  Substitution sigma;
  auto kids = g.store.children(v);
  for (uint32_t j = 0; j < kids.size(); ++j) sigma.set(VarId{j + 1}, kids[j], g.store);
  return SplitResult{*head, sigma, s};
}

}  // namespace fog
