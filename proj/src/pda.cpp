#include "fog/pda.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace fog {

std::optional<uint32_t> Pda::state_index(std::string_view name) const {
  for (uint32_t i = 0; i < states.size(); ++i)
    if (states[i] == name) return i;
  return std::nullopt;
}

std::optional<uint32_t> Pda::stack_index(std::string_view name) const {
  for (uint32_t i = 0; i < stacks.size(); ++i)
    if (stacks[i] == name) return i;
  return std::nullopt;
}

namespace {

std::vector<std::string> tokens_with_quotes(const std::string& line, size_t lineno) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (c == '#') break;
    if (std::isspace((unsigned char)c)) {
      ++i;
      continue;
    }
    if (c == '"') {
      size_t end = line.find('"', i + 1);
      if (end == std::string::npos) throw ParseError("unterminated quote", lineno, i + 1);
      out.push_back(line.substr(i + 1, end - i - 1));
      i = end + 1;
    } else {
      size_t start = i;
      while (i < line.size() && !std::isspace((unsigned char)line[i]) && line[i] != '#') ++i;
      out.push_back(line.substr(start, i - start));
    }
  }
  return out;
}

}  // namespace

Pda parse_pda(std::string_view text) {
  Pda pda;
  struct PendingRule {
    std::string p, x, a, q, alpha;
    size_t lineno;
  };
  std::vector<PendingRule> pending;
  std::istringstream in{std::string(text)};
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::vector<std::string> tok = tokens_with_quotes(line, lineno);
    if (tok.empty()) continue;
    if (tok[0] == "state") {
      for (size_t i = 1; i < tok.size(); ++i) pda.states.push_back(tok[i]);
    } else if (tok[0] == "stack") {
      for (size_t i = 1; i < tok.size(); ++i) pda.stacks.push_back(tok[i]);
    } else if (tok[0] == "action") {
      for (size_t i = 1; i < tok.size(); ++i) {
        if (tok[i] == "eps") throw ParseError("'eps' is the reserved silent action", lineno, 1);
        pda.actions.push_back(tok[i]);
      }
    } else if (tok[0] == "pdarule") {
      if (tok.size() != 6) throw ParseError("pdarule p X a q \"alpha\"", lineno, 1);
      pending.push_back({tok[1], tok[2], tok[3], tok[4], tok[5], lineno});
    } else {
      throw ParseError("unknown directive '" + tok[0] + "'", lineno, 1);
    }
  }
  for (const PendingRule& pr : pending) {
    Pda::PRule r;
    auto p = pda.state_index(pr.p), q = pda.state_index(pr.q);
    auto x = pda.stack_index(pr.x);
    if (!p || !q) throw ParseError("undeclared state in rule", pr.lineno, 1);
    if (!x) throw ParseError("undeclared stack symbol in rule", pr.lineno, 1);
    r.p = *p;
    r.q = *q;
    r.x = *x;
    if (pr.a == "eps") {
      r.action = -1;
    } else {
      auto it = std::find(pda.actions.begin(), pda.actions.end(), pr.a);
      if (it == pda.actions.end()) throw ParseError("undeclared action in rule", pr.lineno, 1);
      r.action = (int32_t)(it - pda.actions.begin());
    }
    std::istringstream as(pr.alpha);
    std::string sym;
    while (as >> sym) {
      auto s = pda.stack_index(sym);
      if (!s) throw ParseError("undeclared stack symbol '" + sym + "' in alpha", pr.lineno, 1);
      r.push.push_back(*s);
    }
    pda.rules.push_back(std::move(r));
  }
  return pda;
}

PdaConfig parse_pda_config(const Pda& pda, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string tok;
  PdaConfig c;
  if (!(in >> tok)) throw Error("empty configuration");
  auto q = pda.state_index(tok);
  if (!q) throw Error("unknown state '" + tok + "'");
  c.state = *q;
  while (in >> tok) {
    auto s = pda.stack_index(tok);
    if (!s) throw Error("unknown stack symbol '" + tok + "'");
    c.stack.push_back(*s);
  }
  return c;
}

std::string render_pda_config(const Pda& pda, const PdaConfig& c) {
  std::string out = pda.states[c.state];
  for (uint32_t s : c.stack) out += " " + pda.stacks[s];
  return out;
}

std::pair<Grammar, EncodingCtx> to_grammar(const Pda& pda, bool swallow) {
  EncodingCtx ctx;
  ctx.swallow = swallow;

  // deterministic popping eps pairs: pX ->eps q with no other rule for (p,X)
  std::map<std::pair<uint32_t, uint32_t>, size_t> rules_per_pair;
  for (const Pda::PRule& r : pda.rules) rules_per_pair[{r.p, r.x}]++;
  std::vector<std::string> offenders;
  for (const Pda::PRule& r : pda.rules) {
    if (r.action != -1) continue;
    bool det_pop = r.push.empty() && rules_per_pair[{r.p, r.x}] == 1;
    if (swallow && det_pop) {
      ctx.det_pop[{r.p, r.x}] = r.q;
    } else {
      offenders.push_back(pda.states[r.p] + " " + pda.stacks[r.x] + " ->eps " + pda.states[r.q]);
    }
  }
  if (!offenders.empty()) {
    std::string msg = swallow ? "non-swallowable eps rules: " : "eps rules not allowed: ";
    for (size_t i = 0; i < offenders.size(); ++i) msg += (i ? "; " : "") + offenders[i];
    throw Error(msg);
  }

  Grammar g;
  uint32_t m = (uint32_t)pda.states.size();
  ctx.bottom = g.store.nonterminal("BOT", 0);
  g.nonterminals.push_back(ctx.bottom);
  for (uint32_t p = 0; p < m; ++p)
    for (uint32_t x = 0; x < pda.stacks.size(); ++x) {
      if (ctx.det_pop.count({p, x})) continue;
      NtId nt = g.store.nonterminal(pda.states[p] + "_" + pda.stacks[x], m);
      ctx.symbol[{p, x}] = nt;
      g.nonterminals.push_back(nt);
    }
  for (const std::string& a : pda.actions) g.action(a);

  // T(q, gamma ++ tail) levelwise from the stack end; tail is either the
  // bottom (configurations) or the formal x (rule right-hand sides)
  auto encode = [&](uint32_t q0, std::span<const uint32_t> gamma, bool formal_tail,
                    TermStore& st) -> TermHandle {
    size_t n = gamma.size();
    std::vector<std::vector<TermHandle>> level(n + 1, std::vector<TermHandle>(m));
    for (uint32_t q = 0; q < m; ++q)
      level[n][q] = formal_tail ? st.var(VarId{q + 1}) : st.app(ctx.bottom, {});
    for (size_t l = n; l-- > 0;) {
      uint32_t x = gamma[l];
      for (uint32_t q = 0; q < m; ++q) {
        if (auto it = ctx.det_pop.find({q, x}); it != ctx.det_pop.end()) {
          level[l][q] = level[l + 1][it->second];
        } else {
          std::vector<TermHandle> kids;
          for (uint32_t j = 0; j < m; ++j) kids.push_back(level[l + 1][j]);
          level[l][q] = st.app(ctx.symbol.at({q, x}), kids);
        }
      }
    }
    return level[0][q0];
  };

  for (const Pda::PRule& r : pda.rules) {
    if (r.action == -1) continue;  // swallowed
    ActionId a = g.action(pda.actions[(size_t)r.action]);
    TermHandle rhs = encode(r.q, r.push, /*formal_tail=*/true, g.store);
    g.rules.push_back(Rule{ctx.symbol.at({r.p, r.x}), a, rhs});
  }
  g.source = dump_grammar(g);
  return {std::move(g), std::move(ctx)};
}

TermHandle encode_config(Grammar& g, const EncodingCtx& ctx, const Pda& pda, const PdaConfig& c) {
  uint32_t m = (uint32_t)pda.states.size();
  size_t n = c.stack.size();
  std::vector<std::vector<TermHandle>> level(n + 1, std::vector<TermHandle>(m));
  for (uint32_t q = 0; q < m; ++q) level[n][q] = g.store.app(ctx.bottom, {});
  for (size_t l = n; l-- > 0;) {
    uint32_t x = c.stack[l];
    for (uint32_t q = 0; q < m; ++q) {
      if (auto it = ctx.det_pop.find({q, x}); it != ctx.det_pop.end()) {
        level[l][q] = level[l + 1][it->second];
      } else {
        std::vector<TermHandle> kids;
        for (uint32_t j = 0; j < m; ++j) kids.push_back(level[l + 1][j]);
        level[l][q] = g.store.app(ctx.symbol.at({q, x}), kids);
      }
    }
  }
  return level[0][c.state];
}

std::vector<std::pair<int32_t, PdaConfig>> pda_steps(const Pda& pda, const PdaConfig& c) {
  std::vector<std::pair<int32_t, PdaConfig>> out;
  if (c.stack.empty()) return out;  // only the bottom: dead
  uint32_t x = c.stack[0];
  for (const Pda::PRule& r : pda.rules) {
    if (r.p != c.state || r.x != x) continue;
    PdaConfig next;
    next.state = r.q;
    next.stack = r.push;
    next.stack.insert(next.stack.end(), c.stack.begin() + 1, c.stack.end());
    out.push_back({r.action, std::move(next)});
  }
  std::sort(out.begin(), out.end());
  return out;
}

PdaConfig collapse_det_pops(const Pda& pda, const EncodingCtx& ctx, PdaConfig c) {
  (void)pda;
  for (;;) {
    if (c.stack.empty()) return c;
    auto it = ctx.det_pop.find({c.state, c.stack[0]});
    if (it == ctx.det_pop.end()) return c;
    c.state = it->second;
    c.stack.erase(c.stack.begin());
  }
}

}  // namespace fog
