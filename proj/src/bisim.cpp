#include "fog/bisim.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace fog {

std::string EqLevel::str() const {
  switch (kind) {
    case Kind::Finite:
      return std::to_string(level);
    case Kind::AtLeast:
      return ">=" + std::to_string(level);
    case Kind::Omega:
      return "omega";
  }
  return "?";
}

EqLevel eq_min(const EqLevel& a, const EqLevel& b) {
  using K = EqLevel::Kind;
  if (a.kind == K::Omega) return b;
  if (b.kind == K::Omega) return a;
  if (a.kind == K::Finite && b.kind == K::Finite) return EqLevel::finite(std::min(a.level, b.level));
  if (a.kind == K::AtLeast && b.kind == K::AtLeast)
    return EqLevel::at_least(std::min(a.level, b.level));
  const EqLevel& fin = a.kind == K::Finite ? a : b;
  const EqLevel& al = a.kind == K::AtLeast ? a : b;
  if (fin.level <= al.level) return fin;  // the undetermined side is surely larger
  return EqLevel::at_least(al.level);
}

EqLevel eq_max(const EqLevel& a, const EqLevel& b) {
  using K = EqLevel::Kind;
  if (a.kind == K::Omega || b.kind == K::Omega) return EqLevel::omega();
  if (a.kind == K::Finite && b.kind == K::Finite) return EqLevel::finite(std::max(a.level, b.level));
  if (a.kind == K::AtLeast && b.kind == K::AtLeast)
    return EqLevel::at_least(std::max(a.level, b.level));
  const EqLevel& fin = a.kind == K::Finite ? a : b;
  const EqLevel& al = a.kind == K::AtLeast ? a : b;
  return EqLevel::at_least(std::max(fin.level, al.level));
}

PairSet normalize_pairset(PairSet b) {
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

bool pairset_contains(const PairSet& b, TermPair p) {
  return std::binary_search(b.begin(), b.end(), p);
}

size_t BisimContext::KeyHash::operator()(const std::tuple<uint32_t, uint32_t, uint64_t>& k) const {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](uint64_t x) {
    h ^= x;
    h *= 0x100000001b3ull;
  };
  mix(std::get<0>(k));
  mix(std::get<1>(k));
  mix(std::get<2>(k));
  return (size_t)h;
}

bool BisimContext::covers(const PairSet& b, TermPair p) {
  auto [s, t] = p;
  if (s == t && g_.store.is_var(s)) return true;  // the (x_i, x_i) stipulation
  auto ms = steps_action(g_, s), mt = steps_action(g_, t);
  for (auto& [a, s2] : ms) {
    bool ok = false;
    for (auto& [a2, t2] : mt)
      if (a == a2 && pairset_contains(b, {s2, t2})) ok = true;
    if (!ok) return false;
  }
  for (auto& [a, t2] : mt) {
    bool ok = false;
    for (auto& [a2, s2] : ms)
      if (a == a2 && pairset_contains(b, {s2, t2})) ok = true;
    if (!ok) return false;
  }
  return true;
}

bool BisimContext::approx_equiv(TermHandle t, TermHandle u, uint64_t k) {
  return approx_rec(t, u, k);
}

bool BisimContext::approx_rec(TermHandle t, TermHandle u, uint64_t k) {
  if (t == u) return true;
  if (k == 0) return true;
  TermHandle a = std::min(t, u), b = std::max(t, u);
  auto key = std::make_tuple(a.id, b.id, k);
  if (auto it = approx_memo_.find(key); it != approx_memo_.end()) return it->second;
  // fast negative: an exact cached level below k settles it
  if (auto it = level_cache_.find({a, b}); it != level_cache_.end()) {
    const EqLevel& lv = it->second;
    if (lv.is_omega()) return true;
    if (lv.is_finite()) {
      bool r = k <= lv.level;
      approx_memo_[key] = r;
      return r;
    }
    if (lv.kind == EqLevel::Kind::AtLeast && k <= lv.level) return true;
  }
  bool result = true;
  auto ms = steps_action(g_, a), mu = steps_action(g_, b);
  for (auto& [act, s2] : ms) {
    bool ok = false;
    for (auto& [act2, u2] : mu)
      if (act == act2 && approx_rec(s2, u2, k - 1)) {
        ok = true;
        break;
      }
    if (!ok) {
      result = false;
      break;
    }
  }
  if (result) {
    for (auto& [act, u2] : mu) {
      bool ok = false;
      for (auto& [act2, s2] : ms)
        if (act == act2 && approx_rec(s2, u2, k - 1)) {
          ok = true;
          break;
        }
      if (!ok) {
        result = false;
        break;
      }
    }
  }
  approx_memo_[key] = result;
  return result;
}

std::optional<std::vector<TermHandle>> BisimContext::explore_fragment(TermHandle t, TermHandle u,
                                                                      uint64_t budget) {
  std::set<TermHandle> seen;
  std::vector<TermHandle> todo{t, u};
  while (!todo.empty()) {
    TermHandle x = todo.back();
    todo.pop_back();
    if (!seen.insert(x).second) continue;
    if (seen.size() > budget) return std::nullopt;
    for (auto& [a, y] : steps_action(g_, x)) todo.push_back(y);
  }
  return std::vector<TermHandle>(seen.begin(), seen.end());
}

EqLevel BisimContext::eqlevel(TermHandle t, TermHandle u, uint64_t cap, uint64_t budget) {
  if (t == u) return EqLevel::omega();
  TermPair key{std::min(t, u), std::max(t, u)};
  if (auto it = level_cache_.find(key); it != level_cache_.end()) {
    const EqLevel& lv = it->second;
    if (lv.determined()) return lv;
    if (lv.level >= cap) return lv;  // cached AtLeast covers this cap
  }
  for (uint64_t k = 1; k <= cap; ++k) {
    if (!approx_rec(t, u, k)) {
      EqLevel r = EqLevel::finite(k - 1);
      level_cache_[key] = r;
      return r;
    }
  }
  // ~_cap holds; try to certify on the joint reachable fragment
  auto frag = explore_fragment(t, u, budget);
  if (!frag) {
    EqLevel r = EqLevel::at_least(cap);
    any_undetermined_ = true;
    auto it = level_cache_.find(key);
    if (it == level_cache_.end() || (!it->second.determined() && it->second.level < cap))
      level_cache_[key] = r;
    return r;
  }
  const std::vector<TermHandle>& states = *frag;
  // signature-based partition refinement on the fragment
  std::map<TermHandle, size_t> blk;
  for (TermHandle s : states) blk[s] = 0;
  for (;;) {
    std::map<std::vector<std::pair<int32_t, size_t>>, size_t> sigs;
    std::map<TermHandle, size_t> nblk;
    for (TermHandle s : states) {
      std::vector<std::pair<int32_t, size_t>> sig{{-1000000, (int32_t)0}};
      sig[0].second = blk[s];
      std::set<std::pair<int32_t, size_t>> moves;
      for (auto& [a, s2] : steps_action(g_, s)) moves.insert({a.v, blk[s2]});
      sig.insert(sig.end(), moves.begin(), moves.end());
      auto [it, fresh] = sigs.emplace(std::move(sig), sigs.size());
      (void)fresh;
      nblk[s] = it->second;
    }
    if (nblk == blk) break;
    blk = std::move(nblk);
  }
  if (blk[t] == blk[u]) {
    EqLevel r = EqLevel::omega();
    level_cache_[key] = r;
    return r;
  }
  // not bisimilar: the exact level exists and is found within |fragment| steps
  for (uint64_t k = cap + 1; k <= cap + states.size() + 1; ++k) {
    if (!approx_rec(t, u, k)) {
      EqLevel r = EqLevel::finite(k - 1);
      level_cache_[key] = r;
      return r;
    }
  }
  throw Error("eqlevel: stratification did not converge on a finite fragment");
}

std::vector<PairSet> BisimContext::expansions(const PairSet& b, bool minimal_only,
                                              size_t enumeration_limit) {
  // demands with candidate matches; a choice function per demand builds B'
  struct Demand {
    std::vector<TermPair> options;
  };
  std::vector<Demand> demands;
  for (const TermPair& p : b) {
    auto [s, t] = p;
    if (s == t && g_.store.is_var(s)) continue;  // covered by anything
    auto ms = steps_action(g_, s), mt = steps_action(g_, t);
    for (auto& [a, s2] : ms) {
      Demand d;
      for (auto& [a2, t2] : mt)
        if (a == a2) d.options.push_back({s2, t2});
      if (d.options.empty()) return {};  // uncoverable pair
      demands.push_back(std::move(d));
    }
    for (auto& [a, t2] : mt) {
      Demand d;
      for (auto& [a2, s2] : ms)
        if (a == a2) d.options.push_back({s2, t2});
      if (d.options.empty()) return {};
      demands.push_back(std::move(d));
    }
  }
  size_t combos = 1;
  for (const Demand& d : demands) {
    combos *= d.options.size();
    if (combos > enumeration_limit) throw Error("expansions: enumeration limit exceeded");
  }
  std::vector<PairSet> out;
  std::set<PairSet> seen;
  std::vector<size_t> choice(demands.size(), 0);
  for (;;) {
    PairSet bp;
    for (size_t i = 0; i < demands.size(); ++i) bp.push_back(demands[i].options[choice[i]]);
    bp = normalize_pairset(std::move(bp));
    if (seen.insert(bp).second) out.push_back(bp);
    size_t i = 0;
    for (; i < demands.size(); ++i) {
      if (++choice[i] < demands[i].options.size()) break;
      choice[i] = 0;
    }
    if (i == demands.size()) break;
    if (demands.empty()) break;
  }
  if (demands.empty()) out = {PairSet{}};
  if (minimal_only) {
    std::vector<PairSet> filtered;
    for (const PairSet& bp : out) {
      bool minimal = true;
      for (size_t i = 0; i < bp.size() && minimal; ++i) {
        PairSet reduced;
        for (size_t j = 0; j < bp.size(); ++j)
          if (j != i) reduced.push_back(bp[j]);
        bool still = true;
        for (const TermPair& p : b)
          if (!covers(reduced, p)) {
            still = false;
            break;
          }
        if (still) minimal = false;
      }
      if (minimal) filtered.push_back(bp);
    }
    out = std::move(filtered);
  }
  return out;
}

EqLevel BisimContext::leasteqlev(const PairSet& b, uint64_t cap, uint64_t budget) {
  EqLevel r = EqLevel::omega();  // min ∅ = omega
  for (const TermPair& p : b) r = eq_min(r, eqlevel(p.first, p.second, cap, budget));
  return r;
}

EqLevel BisimContext::maxeqlev(const PairSet& b, uint64_t cap, uint64_t budget) {
  EqLevel r = EqLevel::finite(0);  // max ∅ = 0
  for (const TermPair& p : b) r = eq_max(r, eqlevel(p.first, p.second, cap, budget));
  return r;
}

std::optional<EqWitness> BisimContext::find_eq_witness(TermHandle e, TermHandle f,
                                                       const Substitution& sigma, uint64_t cap,
                                                       uint64_t budget) {
  EqLevel le = eqlevel(e, f, cap, budget);
  if (!le.is_finite()) return std::nullopt;
  uint64_t k = le.level;
  TermHandle es = apply_subst(g_.store, e, sigma);
  TermHandle fs = apply_subst(g_.store, f, sigma);
  EqLevel ls = eqlevel(es, fs, cap, budget);
  uint64_t check_level;
  if (ls.is_finite()) {
    if (ls.level <= k) return std::nullopt;  // precondition k < e fails
    check_level = ls.level - k;
  } else if (ls.is_omega()) {
    check_level = cap > k ? cap - k : 0;
  } else {
    if (ls.level <= k) return std::nullopt;  // cannot resolve e > k under the cap
    check_level = ls.level - k;
  }

  // joint equal-label rule paths of length <= k from (e, f)
  struct Node {
    TermPair p;
    std::vector<RuleId> w1, w2;
    std::vector<ActionLabel> lab;
  };
  std::vector<Node> layer{{{e, f}, {}, {}, {}}};
  std::set<TermPair> seen{{e, f}};
  for (uint64_t depth = 0; depth <= k; ++depth) {
    for (const Node& n : layer) {
      auto [a, b] = n.p;
      auto try_witness = [&](TermHandle xside, TermHandle other,
                             EqWitness::Side side) -> std::optional<EqWitness> {
        if (!g_.store.is_var(xside)) return std::nullopt;
        VarId x = g_.store.var_id(xside);
        if (!sigma.image(x)) return std::nullopt;
        if (other == xside) return std::nullopt;
        TermHandle xs = apply_subst(g_.store, g_.store.var(x), sigma);
        TermHandle hs = apply_subst(g_.store, other, sigma);
        if (!approx_equiv(xs, hs, check_level)) return std::nullopt;
        return EqWitness{x, other, n.lab, n.w1, n.w2, side};
      };
      if (auto w = try_witness(a, b, EqWitness::Side::LeftSinks)) return w;
      if (auto w = try_witness(b, a, EqWitness::Side::RightSinks)) return w;
    }
    if (depth == k) break;
    std::vector<Node> next;
    for (const Node& n : layer) {
      auto [a, b] = n.p;
      if (g_.store.is_var(a) || g_.store.is_var(b)) continue;
      for (uint32_t r1 = 0; r1 < g_.rules.size(); ++r1) {
        auto a2 = step_rule(g_, a, RuleId{r1});
        if (!a2) continue;
        for (uint32_t r2 = 0; r2 < g_.rules.size(); ++r2) {
          if (!(g_.rules[r1].action == g_.rules[r2].action)) continue;
          auto b2 = step_rule(g_, b, RuleId{r2});
          if (!b2) continue;
          if (!seen.insert({*a2, *b2}).second) continue;
          Node m{{*a2, *b2}, n.w1, n.w2, n.lab};
          m.w1.push_back(RuleId{r1});
          m.w2.push_back(RuleId{r2});
          m.lab.push_back(ActionLabel::action(g_.rules[r1].action));
          next.push_back(std::move(m));
        }
      }
    }
    layer = std::move(next);
  }
  return std::nullopt;
}

bool BisimContext::eqlevel_limit_invariance_check(VarId x, TermHandle h, const Substitution& sigma,
                                                  uint64_t cap, uint64_t budget) {
  if (g_.store.is_var(h) && g_.store.var_id(h) == x)
    throw Error("eqlevel_limit_invariance_check requires H != x");
  TermHandle hp = limit_subst(g_.store, x, h);
  TermHandle xs = apply_subst(g_.store, g_.store.var(x), sigma);
  TermHandle hs = apply_subst(g_.store, h, sigma);
  TermHandle hps = apply_subst(g_.store, hp, sigma);
  EqLevel e1 = eqlevel(xs, hs, cap, budget);
  EqLevel e2 = eqlevel(xs, hps, cap, budget);
  if (e1.is_finite() && e2.is_finite()) return e1.level == e2.level;
  if (e1.is_omega() && e2.is_omega()) return true;
  if (e1.is_finite() && e2.is_omega()) return false;
  if (e1.is_omega() && e2.is_finite()) return false;
  // an AtLeast side is consistent unless the finite side sits below it
  const EqLevel& fin = e1.is_finite() ? e1 : e2;
  const EqLevel& other = e1.is_finite() ? e2 : e1;
  if (!fin.is_finite()) return true;  // both undetermined-ish
  if (other.kind == EqLevel::Kind::AtLeast && fin.level < other.level) return false;
  return true;
}

}  // namespace fog
