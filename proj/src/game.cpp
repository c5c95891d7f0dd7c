#include "fog/game.hpp"

#include <algorithm>
#include <functional>
#include <set>

#include <json.hpp>

#include "fog/util.hpp"

namespace fog {

using ojson = nlohmann::ordered_json;

std::string outcome_str(Outcome o) {
  switch (o) {
    case Outcome::ProverWinRepeat: return "prover_win:repeat";
    case Outcome::ProverWinSubsetCovered: return "prover_win:subset_covered";
    case Outcome::ProverWinNgOverflow: return "prover_win:ng_overflow";
    case Outcome::ProverWinRefuterForfeit: return "prover_win:refuter_forfeit";
    case Outcome::RefuterWinNotCoverable: return "refuter_win:not_coverable";
    case Outcome::RefuterWinProverForfeit: return "refuter_win:prover_forfeit";
    case Outcome::Exhausted: return "exhausted";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// closeness
// ---------------------------------------------------------------------------

namespace {

// layered BFS in the rule LTS; first-found (shortest, lexicographically least
// by rule ids) word per reached term
std::map<TermHandle, std::vector<RuleId>> bfs_words(Grammar& g, TermHandle w, uint64_t k,
                                                    uint64_t budget) {
  std::map<TermHandle, std::vector<RuleId>> out;
  out[w] = {};
  std::vector<TermHandle> layer{w};
  for (uint64_t d = 0; d < k && !layer.empty(); ++d) {
    std::vector<TermHandle> next;
    for (TermHandle t : layer) {
      for (uint32_t r = 0; r < g.rules.size(); ++r) {
        auto s = step_rule(g, t, RuleId{r});
        if (!s || out.count(*s)) continue;
        std::vector<RuleId> word = out[t];
        word.push_back(RuleId{r});
        out[*s] = std::move(word);
        next.push_back(*s);
        if (out.size() > budget) return out;
      }
    }
    layer = std::move(next);
  }
  return out;
}

struct CutResult {
  TermHandle head;
  std::vector<std::pair<VarId, TermHandle>> cuts;  // fresh var -> cut subterm
};

// minimal-depth head: cut at the shallowest partnered subterm on every
// branch; fails when an uncut branch outlives max_depth
std::optional<CutResult> greedy_cut(TermStore& st, TermHandle t,
                                    const std::set<TermHandle>& partnered, uint64_t max_depth,
                                    uint32_t fresh_base) {
  CutResult res;
  std::map<TermHandle, VarId> cutvar;
  uint32_t next = fresh_base + 1;
  std::function<std::optional<TermHandle>(TermHandle, uint64_t)> go =
      [&](TermHandle h, uint64_t d) -> std::optional<TermHandle> {
    if (partnered.count(h)) {
      auto it = cutvar.find(h);
      VarId v;
      if (it == cutvar.end()) {
        v = VarId{next++};
        cutvar[h] = v;
        res.cuts.push_back({v, h});
      } else {
        v = it->second;
      }
      return st.var(v);
    }
    if (st.is_var(h)) return h;
    if (d == max_depth) return std::nullopt;
    std::vector<TermHandle> kids;
    for (TermHandle k : st.children(h)) {
      auto sub = go(k, d + 1);
      if (!sub) return std::nullopt;
      kids.push_back(*sub);
    }
    return st.app(st.root(h), kids);
  };
  auto head = go(t, 0);
  if (!head) return std::nullopt;
  res.head = *head;
  return res;
}

uint32_t play_max_var(const TermStore& st, TermHandle a, TermHandle b) {
  return std::max(st.max_var_index(a), st.max_var_index(b));
}

}  // namespace

std::optional<std::vector<RuleId>> close_k(Grammar& g, TermHandle w, TermHandle t, uint64_t k,
                                           uint64_t budget) {
  auto words = bfs_words(g, w, k, budget);
  auto it = words.find(t);
  if (it == words.end()) return std::nullopt;
  return it->second;
}

std::optional<ClosenessCert> close_lr(Grammar& g, TermHandle w, TermPair pair, uint64_t d,
                                      uint64_t k, BalanceEvent::Side side, uint64_t budget) {
  auto words = bfs_words(g, w, k, budget);
  TermHandle replaced = side == BalanceEvent::Side::Left ? pair.first : pair.second;
  TermHandle other = side == BalanceEvent::Side::Left ? pair.second : pair.first;
  auto oit = words.find(other);
  if (oit == words.end()) return std::nullopt;
  std::set<TermHandle> partnered;
  for (auto& [t, word] : words) partnered.insert(t);
  auto cut = greedy_cut(g.store, replaced, partnered, d, g.store.max_var_index(replaced));
  if (!cut) return std::nullopt;
  ClosenessCert cert;
  cert.head = cut->head;
  cert.other_word = oit->second;
  for (auto& [v, sub] : cut->cuts) {
    cert.sigma.set(v, sub, g.store);
    cert.range_words.push_back({v, words.at(sub)});
  }
  return cert;
}

// ---------------------------------------------------------------------------
// engine
// ---------------------------------------------------------------------------

namespace {

struct DerivedPair {
  TermPair p;
  std::vector<RuleId> w1, w2;
};

// pairs of B_j reachable from the start by equal-length equal-label move
// sequences through the chain, with witnessing words
std::vector<std::vector<DerivedPair>> derivable_chain(Grammar& g,
                                                      const std::vector<PairSet>& chain) {
  std::vector<std::vector<DerivedPair>> der(chain.size());
  der[0].push_back({chain[0][0], {}, {}});
  for (size_t j = 1; j < chain.size(); ++j) {
    std::set<TermPair> seen;
    for (const DerivedPair& dp : der[j - 1]) {
      auto [s, t] = dp.p;
      for (uint32_t r1 = 0; r1 < g.rules.size(); ++r1) {
        auto s2 = step_rule(g, s, RuleId{r1});
        if (!s2) continue;
        for (uint32_t r2 = 0; r2 < g.rules.size(); ++r2) {
          if (!(g.rules[r1].action == g.rules[r2].action)) continue;
          auto t2 = step_rule(g, t, RuleId{r2});
          if (!t2) continue;
          TermPair np{*s2, *t2};
          if (!pairset_contains(chain[j], np)) continue;
          if (!seen.insert(np).second) continue;
          DerivedPair nd{np, dp.w1, dp.w2};
          nd.w1.push_back(RuleId{r1});
          nd.w2.push_back(RuleId{r2});
          der[j].push_back(std::move(nd));
        }
      }
    }
    std::sort(der[j].begin(), der[j].end(),
              [](const DerivedPair& a, const DerivedPair& b) { return a.p < b.p; });
  }
  return der;
}

struct PartnerInfo {
  TermHandle partner;
  size_t level;
  std::vector<RuleId> pivot_word;  // from the pivot to the partner
};

// for left-balancing: partner of a left component V is the right component
// V' of a derivable pair in B_0..B_{k-1} (first by level, then pair order);
// pivot_word runs on the pivot's side
std::map<TermHandle, PartnerInfo> partner_map(const std::vector<std::vector<DerivedPair>>& der,
                                              BalanceEvent::Side side) {
  std::map<TermHandle, PartnerInfo> out;
  for (size_t j = 0; j + 1 < der.size(); ++j) {
    for (const DerivedPair& dp : der[j]) {
      TermHandle key = side == BalanceEvent::Side::Left ? dp.p.first : dp.p.second;
      TermHandle partner = side == BalanceEvent::Side::Left ? dp.p.second : dp.p.first;
      const std::vector<RuleId>& pword = side == BalanceEvent::Side::Left ? dp.w2 : dp.w1;
      if (!out.count(key)) out[key] = PartnerInfo{partner, j, pword};
    }
  }
  return out;
}

std::optional<BalanceEvent> make_balance(Grammar& g, TermPair start, TermPair pick,
                                         const std::vector<std::vector<DerivedPair>>& der,
                                         BalanceEvent::Side side, uint64_t head_limit,
                                         uint32_t fresh_base) {
  std::map<TermHandle, PartnerInfo> partners = partner_map(der, side);
  std::set<TermHandle> keys;
  for (auto& [k, v] : partners) keys.insert(k);
  TermHandle replaced = side == BalanceEvent::Side::Left ? pick.first : pick.second;
  auto cut = greedy_cut(g.store, replaced, keys, head_limit, fresh_base);
  if (!cut) return std::nullopt;
  BalanceEvent ev;
  ev.side = side;
  ev.pivot = side == BalanceEvent::Side::Left ? start.second : start.first;
  ev.head = cut->head;
  for (auto& [v, sub] : cut->cuts) {
    const PartnerInfo& pi = partners.at(sub);
    ev.sigma.set(v, sub, g.store);
    ev.sigma_prime.set(v, pi.partner, g.store);
    ev.partners.push_back(PartnerUse{v, sub, pi.partner, pi.level, pi.pivot_word});
  }
  return ev;
}

TermHandle balance_result(Grammar& g, const BalanceEvent& ev) {
  return apply_subst(g.store, ev.head, ev.sigma_prime);
}

}  // namespace

Play play(BisimContext& bc, TermHandle t0, TermHandle u0, ProverStrategy& prover,
          RefuterStrategy& refuter, const GameConfig& config) {
  Grammar& g = bc.grammar();
  Play play;
  play.initial = {t0, u0};
  play.ng_threshold = config.ng_threshold;
  play.certified = !config.override_k && !config.override_head_depth &&
                   config.proxy == GameConfig::Proxy::ExactEqLevel;
  bool undet_before = bc.any_undetermined();

  // M0 for non-sink detection and M'_0 for head depth, when materializable
  std::optional<uint64_t> m0;
  std::optional<uint64_t> head_limit = config.override_head_depth;
  try {
    GrammarConstants c = constants(g);
    if (c.M0 <= 1000000) m0 = (uint64_t)c.M0;
    if (!head_limit && c.Mprime0 <= 1000000) head_limit = (uint64_t)c.Mprime0;
  } catch (const Error&) {
    // grammar not arity-reduced: balancing triggers only via non-shortest paths
  }
  play.effective_head_depth = head_limit.value_or(0);
  play.effective_k = config.override_k.value_or(1);

  uint32_t fresh_base = play_max_var(g.store, t0, u0);

  std::set<TermPair> seen_unordered;
  TermPair cur{t0, u0};
  std::optional<BalanceEvent::Side> prev_side;

  for (size_t round = 0; round < config.max_rounds; ++round) {
    auto [t, u] = cur;
    TermPair unordered{std::min(t, u), std::max(t, u)};
    if (t == u || seen_unordered.count(unordered)) {
      play.outcome = Outcome::ProverWinRepeat;
      if (!undet_before && bc.any_undetermined()) play.certified = false;
      return play;
    }
    seen_unordered.insert(unordered);

    if (!bc.approx_equiv(t, u, 1)) {
      play.outcome = Outcome::RefuterWinNotCoverable;
      if (!undet_before && bc.any_undetermined()) play.certified = false;
      return play;
    }

    RoundView rv;
    rv.start = cur;
    rv.round_index = round;
    rv.prev_balance_side = prev_side;

    auto proposal = prover.propose_chain(bc, rv);
    if (!proposal || proposal->k == 0 || proposal->chain.size() != proposal->k) {
      play.outcome = Outcome::RefuterWinProverForfeit;
      play.forfeit_reason = proposal ? "malformed chain" : "no chain proposed";
      return play;
    }
    std::vector<PairSet> chain;
    chain.push_back(PairSet{cur});
    for (PairSet& b : proposal->chain) chain.push_back(normalize_pairset(std::move(b)));
    bool chain_ok = true;
    for (size_t j = 0; j + 1 < chain.size() && chain_ok; ++j)
      for (const TermPair& p : chain[j])
        if (!bc.covers(chain[j + 1], p)) {
          chain_ok = false;
          break;
        }
    if (!chain_ok) {
      play.outcome = Outcome::RefuterWinProverForfeit;
      play.forfeit_reason = "chain step does not cover its predecessor";
      return play;
    }
    uint64_t k = proposal->k;
    play.effective_k = k;

    auto der = derivable_chain(g, chain);
    std::set<TermPair> earlier;
    for (size_t j = 0; j + 1 < chain.size(); ++j)
      earlier.insert(chain[j].begin(), chain[j].end());
    PairSet eligible;
    for (const DerivedPair& dp : der[k])
      if (!earlier.count(dp.p)) eligible.push_back(dp.p);
    eligible = normalize_pairset(std::move(eligible));
    if (eligible.empty()) {
      play.outcome = Outcome::ProverWinSubsetCovered;
      if (!undet_before && bc.any_undetermined()) play.certified = false;
      return play;
    }

    rv.chain = &chain;
    auto pick_idx = refuter.pick(bc, rv, eligible);
    if (!pick_idx || *pick_idx >= eligible.size()) {
      play.outcome = Outcome::ProverWinRefuterForfeit;
      play.forfeit_reason = "refuter pick invalid";
      return play;
    }
    TermPair pick = eligible[*pick_idx];
    const DerivedPair* dpick = nullptr;
    for (const DerivedPair& dp : der[k])
      if (dp.p == pick) {
        dpick = &dp;
        break;
      }

    rv.pick = pick;
    rv.u1 = &dpick->w1;
    rv.u2 = &dpick->w2;

    // balance availability and trigger data
    {
      auto words1 = bfs_words(g, t, k - 1, config.bfs_budget);
      rv.u1_shortest = !words1.count(pick.first);
      auto words2 = bfs_words(g, u, k - 1, config.bfs_budget);
      rv.u2_shortest = !words2.count(pick.second);
    }
    if (m0) {
      rv.u1_has_nonsink = !classify_path(g, t, dpick->w1, *m0).sinking;
      rv.u2_has_nonsink = !classify_path(g, u, dpick->w2, *m0).sinking;
    }
    if (head_limit) {
      rv.left_available =
          make_balance(g, cur, pick, der, BalanceEvent::Side::Left, *head_limit, fresh_base);
      rv.right_available =
          make_balance(g, cur, pick, der, BalanceEvent::Side::Right, *head_limit, fresh_base);
    }

    auto choice = prover.choose_balance(bc, rv);
    RoundRecord rec;
    rec.start = cur;
    rec.k = k;
    rec.chain = chain;
    rec.pick = pick;
    rec.u1 = dpick->w1;
    rec.u2 = dpick->w2;
    TermPair next = pick;
    if (choice == ProverStrategy::Balance::Left && rv.left_available) {
      rec.balance = rv.left_available;
      next = {balance_result(g, *rec.balance), pick.second};
      prev_side = BalanceEvent::Side::Left;
    } else if (choice == ProverStrategy::Balance::Right && rv.right_available) {
      rec.balance = rv.right_available;
      next = {pick.first, balance_result(g, *rec.balance)};
      prev_side = BalanceEvent::Side::Right;
    } else {
      prev_side = std::nullopt;
    }
    rec.next = next;
    play.rounds.push_back(std::move(rec));

    if (config.ng_threshold) {
      if (auto ng = extract_ng_presentation(bc, play)) {
        if (BigInt(ng->first.heads.size()) > *config.ng_threshold) {
          play.ng_length_claimed = ng->first.heads.size();
          play.outcome = Outcome::ProverWinNgOverflow;
          if (!undet_before && bc.any_undetermined()) play.certified = false;
          return play;
        }
      }
    }
    cur = next;
  }
  play.outcome = Outcome::Exhausted;
  if (!undet_before && bc.any_undetermined()) play.certified = false;
  return play;
}

// ---------------------------------------------------------------------------
// bundled strategies
// ---------------------------------------------------------------------------

namespace {

class LeastEqRefuter : public RefuterStrategy {
public:
  LeastEqRefuter(uint64_t cap, uint64_t budget) : cap_(cap), budget_(budget) {}
  std::optional<size_t> pick(BisimContext& bc, const RoundView&, const PairSet& eligible) override {
    size_t best = 0;
    auto key = [&](const TermPair& p) -> std::pair<int, uint64_t> {
      EqLevel e = bc.eqlevel(p.first, p.second, cap_, budget_);
      switch (e.kind) {
        case EqLevel::Kind::Finite: return {0, e.level};
        case EqLevel::Kind::AtLeast: return {1, e.level};
        case EqLevel::Kind::Omega: return {2, 0};
      }
      return {3, 0};
    };
    auto bestkey = key(eligible[0]);
    for (size_t i = 1; i < eligible.size(); ++i) {
      auto k = key(eligible[i]);
      if (k < bestkey) {
        bestkey = k;
        best = i;
      }
    }
    return best;
  }

private:
  uint64_t cap_, budget_;
};

class FirstPickRefuter : public RefuterStrategy {
public:
  std::optional<size_t> pick(BisimContext&, const RoundView&, const PairSet&) override {
    return 0;
  }
};

class ChainBuilder {
public:
  ChainBuilder(GameConfig config) : config_(config) {}

  // one covering step; nullopt when some demand has no proxy-passing match
  std::optional<PairSet> step(BisimContext& bc, const PairSet& b) {
    Grammar& g = bc.grammar();
    PairSet out;
    for (const TermPair& p : b) {
      auto [s, t] = p;
      if (s == t) {
        if (g.store.is_var(s)) continue;
        for (auto& [a, s2] : steps_action(g, s)) out.push_back({s2, s2});
        continue;
      }
      auto ms = steps_action(g, s), mt = steps_action(g, t);
      for (auto& [a, s2] : ms) {
        auto m = match(bc, s2, mt, a, /*left=*/true);
        if (!m) return std::nullopt;
        out.push_back({s2, *m});
      }
      for (auto& [a, t2] : mt) {
        auto m = match(bc, t2, ms, a, /*left=*/false);
        if (!m) return std::nullopt;
        out.push_back({*m, t2});
      }
    }
    return normalize_pairset(std::move(out));
  }

private:
  std::optional<TermHandle> match(BisimContext& bc, TermHandle moved,
                                  const std::vector<std::pair<ActionLabel, TermHandle>>& others,
                                  ActionLabel a, bool left) {
    // rank for the exact proxy: Omega best, then any AtLeast (optimism),
    // then the highest Finite level; first candidate wins ties
    auto rank = [](const EqLevel& e) -> std::pair<int, uint64_t> {
      switch (e.kind) {
        case EqLevel::Kind::Omega: return {2, 0};
        case EqLevel::Kind::AtLeast: return {1, e.level};
        case EqLevel::Kind::Finite: return {0, e.level};
      }
      return {0, 0};
    };
    std::optional<TermHandle> best;
    std::pair<int, uint64_t> best_rank{-1, 0};
    for (auto& [a2, o] : others) {
      if (!(a2 == a)) continue;
      TermHandle x = left ? moved : o, y = left ? o : moved;
      if (config_.proxy == GameConfig::Proxy::ApproxAtCap) {
        if (bc.approx_equiv(x, y, config_.cap)) return o;
        continue;
      }
      EqLevel e = bc.eqlevel(x, y, config_.cap, config_.fragment_budget);
      auto r = rank(e);
      if (!best || r > best_rank) {
        best = o;
        best_rank = r;
      }
    }
    return best;
  }

  GameConfig config_;
};

class BalancingProver : public ProverStrategy {
public:
  explicit BalancingProver(const GameConfig& config) : config_(config), builder_(config) {}

  std::optional<ChainProposal> propose_chain(BisimContext& bc, const RoundView& rv) override {
    uint64_t k = config_.override_k.value_or(0);
    if (k == 0) {
      try {
        GrammarConstants c = constants(bc.grammar());
        if (c.M1 > 64) return std::nullopt;  // unplayable without an override
        k = (uint64_t)c.M1;
      } catch (const Error&) {
        return std::nullopt;
      }
    }
    ChainProposal cp;
    cp.k = k;
    PairSet b{rv.start};
    for (uint64_t j = 0; j < k; ++j) {
      auto next = builder_.step(bc, b);
      if (!next) return std::nullopt;
      cp.chain.push_back(*next);
      b = *next;
    }
    return cp;
  }

  Balance choose_balance(BisimContext&, const RoundView& rv) override {
    bool left_trigger = !rv.u1_shortest || rv.u1_has_nonsink;
    bool right_trigger = !rv.u2_shortest || rv.u2_has_nonsink;
    if (left_trigger && rv.left_available &&
        rv.prev_balance_side != std::optional(BalanceEvent::Side::Right))
      return Balance::Left;
    if (right_trigger && rv.right_available &&
        rv.prev_balance_side != std::optional(BalanceEvent::Side::Left))
      return Balance::Right;
    return Balance::None;
  }

private:
  GameConfig config_;
  ChainBuilder builder_;
};

class NaiveProver : public ProverStrategy {
public:
  explicit NaiveProver(const GameConfig& config) : config_(config) {}

  std::optional<ChainProposal> propose_chain(BisimContext& bc, const RoundView& rv) override {
    Grammar& g = bc.grammar();
    uint64_t k = config_.override_k.value_or(1);
    ChainProposal cp;
    cp.k = k;
    PairSet b{rv.start};
    for (uint64_t j = 0; j < k; ++j) {
      PairSet out;
      for (const TermPair& p : b) {
        auto [s, t] = p;
        if (s == t) {
          if (g.store.is_var(s)) continue;
          for (auto& [a, s2] : steps_action(g, s)) out.push_back({s2, s2});
          continue;
        }
        auto ms = steps_action(g, s), mt = steps_action(g, t);
        for (auto& [a, s2] : ms) {
          std::optional<TermHandle> m;
          for (auto& [a2, t2] : mt)
            if (a2 == a) {
              m = t2;
              break;
            }
          if (!m) return std::nullopt;
          out.push_back({s2, *m});
        }
        for (auto& [a, t2] : mt) {
          std::optional<TermHandle> m;
          for (auto& [a2, s2] : ms)
            if (a2 == a) {
              m = s2;
              break;
            }
          if (!m) return std::nullopt;
          out.push_back({*m, t2});
        }
      }
      cp.chain.push_back(normalize_pairset(std::move(out)));
      b = cp.chain.back();
    }
    return cp;
  }

  Balance choose_balance(BisimContext&, const RoundView&) override { return Balance::None; }

private:
  GameConfig config_;
};

}  // namespace

std::unique_ptr<RefuterStrategy> least_eqlevel_refuter(uint64_t cap, uint64_t budget) {
  return std::make_unique<LeastEqRefuter>(cap, budget);
}
std::unique_ptr<RefuterStrategy> first_pick_refuter() {
  return std::make_unique<FirstPickRefuter>();
}
std::unique_ptr<ProverStrategy> balancing_prover(const GameConfig& config) {
  return std::make_unique<BalancingProver>(config);
}
std::unique_ptr<ProverStrategy> naive_prover(const GameConfig& config) {
  return std::make_unique<NaiveProver>(config);
}

// ---------------------------------------------------------------------------
// (n,g)-subsequence extraction
// ---------------------------------------------------------------------------

std::optional<std::pair<NgPresentation, NgProvenance>> extract_ng_presentation(BisimContext& bc,
                                                                               const Play& play) {
  Grammar& g = bc.grammar();
  struct Event {
    size_t round;
    const RoundRecord* rec;
  };
  std::vector<Event> events;
  for (size_t i = 0; i < play.rounds.size(); ++i)
    if (play.rounds[i].balance) events.push_back({i, &play.rounds[i]});
  if (events.size() < 2) return std::nullopt;

  // maximal same-side suffix run
  BalanceEvent::Side side = events.back().rec->balance->side;
  size_t first = events.size();
  while (first > 0 && events[first - 1].rec->balance->side == side) --first;
  std::vector<Event> run(events.begin() + (ptrdiff_t)first, events.end());
  if (run.size() < 2) return std::nullopt;
  bool path_right = side == BalanceEvent::Side::Left;  // pivot is the untouched side

  // pivot path: the untouched component followed from the first run pivot
  size_t r0 = run[0].round, rlast = run.back().round;
  std::vector<TermHandle> visits;
  std::vector<std::vector<RuleId>> words;  // words[i] applied after visits index word_pos[i]
  TermHandle cur = path_right ? play.rounds[r0].start.second : play.rounds[r0].start.first;
  visits.push_back(cur);
  std::map<size_t, size_t> pivot_pos;  // round -> position in visits
  pivot_pos[r0] = 0;
  for (size_t r = r0; r < rlast; ++r) {
    const RoundRecord& rec = play.rounds[r];
    TermHandle expect = path_right ? rec.start.second : rec.start.first;
    if (!(expect == cur)) return std::nullopt;  // side continuity broken
    const std::vector<RuleId>& w = path_right ? rec.u2 : rec.u1;
    for (RuleId rid : w) {
      auto next = step_rule(g, cur, rid);
      if (!next) return std::nullopt;
      cur = *next;
      visits.push_back(cur);
    }
    pivot_pos[r + 1] = visits.size() - 1;
  }

  // last visit of a subterm of the first pivot
  TermHandle w1 = visits[0];
  std::set<TermHandle> w1subs;
  for (TermHandle s : g.store.subterms(w1)) w1subs.insert(s);
  size_t pstar = 0;
  for (size_t i = 0; i < visits.size(); ++i)
    if (w1subs.count(visits[i])) pstar = i;
  TermHandle v0 = visits[pstar];

  // pivots strictly after the V0 visit
  std::vector<Event> tail;
  for (const Event& ev : run) {
    auto it = pivot_pos.find(ev.round);
    if (it == pivot_pos.end()) continue;
    if (it->second > pstar) tail.push_back(ev);
  }
  if (tail.empty()) return std::nullopt;

  // cut V0 at depth k: fresh variable per depth-k occurrence
  uint64_t kcut = play.effective_k;
  uint32_t base = play_max_var(g.store, play.initial.first, play.initial.second);
  for (const RoundRecord& rec : play.rounds) {
    base = std::max(base, play_max_var(g.store, rec.start.first, rec.start.second));
    base = std::max(base, play_max_var(g.store, rec.next.first, rec.next.second));
  }
  NgPresentation pres;
  uint32_t next_var = base + 1;
  std::function<TermHandle(TermHandle, uint64_t)> cut = [&](TermHandle h,
                                                            uint64_t d) -> TermHandle {
    if (d == kcut) {
      VarId v{next_var++};
      pres.sigma.set(v, h, g.store);
      return g.store.var(v);
    }
    if (g.store.is_var(h)) return h;
    std::vector<TermHandle> kids;
    for (TermHandle k : g.store.children(h)) kids.push_back(cut(k, d + 1));
    return g.store.app(g.store.root(h), kids);
  };
  TermHandle f = cut(v0, 0);
  if (!(apply_subst(g.store, f, pres.sigma) == v0)) return std::nullopt;

  // flat word list parallel to visits: flat[i] steps visits[i] -> visits[i+1]
  std::vector<RuleId> flat;
  for (size_t r = r0; r < rlast; ++r) {
    const std::vector<RuleId>& w = path_right ? play.rounds[r].u2 : play.rounds[r].u1;
    flat.insert(flat.end(), w.begin(), w.end());
  }

  // follow the pivot path from V0 on the cut term
  TermHandle h = f;
  size_t pos = pstar;
  NgProvenance prov;
  prov.run_first_event_round = r0;
  prov.v0 = v0;
  for (const Event& ev : tail) {
    size_t target = pivot_pos.at(ev.round);
    for (size_t i = pos; i < target; ++i) {
      auto next = step_rule(g, h, flat[i]);
      if (!next) return std::nullopt;
      h = *next;
    }
    pos = target;
    if (!(apply_subst(g.store, h, pres.sigma) == visits[target])) return std::nullopt;

    // heads of the bal-result at this pivot
    const RoundRecord& rec = *ev.rec;
    const BalanceEvent& bev = *rec.balance;
    const std::vector<RuleId>& wpath = path_right ? rec.u2 : rec.u1;
    auto fcomp = path(g, h, wpath);
    if (!fcomp) return std::nullopt;
    Substitution headmap;
    for (const PartnerUse& pu : bev.partners) {
      auto e2 = path(g, h, pu.pivot_word);
      if (!e2) return std::nullopt;
      headmap.set(pu.cut_var, *e2, g.store);
    }
    TermHandle ehead = apply_subst(g.store, bev.head, headmap);
    TermPair heads = side == BalanceEvent::Side::Left ? TermPair{ehead, *fcomp}
                                                      : TermPair{*fcomp, ehead};
    TermPair check{apply_subst(g.store, heads.first, pres.sigma),
                   apply_subst(g.store, heads.second, pres.sigma)};
    if (!(check == rec.next)) return std::nullopt;
    pres.heads.push_back(heads);
  }
  prov.pivots_used = tail.size();
  prov.note = "suffix run of " + std::to_string(run.size()) + " balancings, side " +
              (side == BalanceEvent::Side::Left ? std::string("left") : std::string("right"));
  return std::make_pair(pres, prov);
}

// ---------------------------------------------------------------------------
// game version 3
// ---------------------------------------------------------------------------

namespace {
BigInt grammar_sizeinc(const Grammar& g) {
  BigInt s = 0;
  for (const Rule& r : g.rules) s = std::max(s, BigInt(g.store.pressize(r.rhs)));
  return s;
}
}  // namespace

Play play_v3(BisimContext& bc, TermHandle e0, TermHandle f0, const V3Setup& setup,
             ProverStrategy& prover, RefuterStrategy& refuter, GameConfig config) {
  Grammar& g = bc.grammar();
  if (auto err = setup.c.verify(bc, config.fragment_budget))
    throw V3SetupError("candidate set rejected: " + *err);
  BigInt sizeinc = grammar_sizeinc(g);
  MelFn mel = setup.c.mel(g.store);
  if (!sufficient_size_bound(setup.c.max_pressize(g.store), mel, setup.n0, setup.g0,
                             BigInt(setup.size_bound), sizeinc))
    throw V3SetupError("size bound B = " + std::to_string(setup.size_bound) +
                       " is not sufficient for (C, n0, g0)");
  if (!sufficient_segment_bound(mel, setup.n0, setup.g0, BigInt(setup.segment_bound), sizeinc))
    throw V3SetupError("segment bound S = " + std::to_string(setup.segment_bound) +
                       " is not sufficient for (C, n0, g0)");
  BigInt lc = ell(setup.n0, setup.g0, mel, sizeinc);

  // Refuter chooses the start from {(E0,F0)} ∪ Rest
  std::vector<TermPair> rest = enumerate_pairs(g, setup.size_bound, setup.var_limit);
  PairSet choices{{e0, f0}};
  for (const TermPair& p : rest)
    if (!setup.c.contains(p)) choices.push_back(p);
  choices = normalize_pairset(std::move(choices));
  RoundView rv;
  rv.start = {e0, f0};
  rv.round_index = 0;
  auto idx = refuter.pick(bc, rv, choices);
  TermPair start = idx && *idx < choices.size() ? choices[*idx] : TermPair{e0, f0};

  config.ng_threshold = lc;
  Play p = play(bc, start.first, start.second, prover, refuter, config);
  p.ng_threshold = lc;
  return p;
}

// ---------------------------------------------------------------------------
// transcripts
// ---------------------------------------------------------------------------

namespace {

ojson pairset_json(const TermStore& st, const PairSet& b) {
  ojson out = ojson::array();
  for (const TermPair& p : b)
    out.push_back(ojson::array({render_term(st, p.first), render_term(st, p.second)}));
  return out;
}

ojson words_json(const std::vector<RuleId>& w) {
  ojson out = ojson::array();
  for (RuleId r : w) out.push_back(r.id);
  return out;
}

ojson config_json(const GameConfig& c) {
  ojson out;
  out["cap"] = c.cap;
  out["fragment_budget"] = c.fragment_budget;
  out["bfs_budget"] = c.bfs_budget;
  out["max_rounds"] = c.max_rounds;
  out["override_k"] = c.override_k ? ojson(*c.override_k) : ojson(nullptr);
  out["override_head_depth"] = c.override_head_depth ? ojson(*c.override_head_depth) : ojson(nullptr);
  out["proxy"] = c.proxy == GameConfig::Proxy::ApproxAtCap ? "approx_at_cap" : "exact_eqlevel";
  out["ng_threshold"] = c.ng_threshold ? ojson(c.ng_threshold->str()) : ojson(nullptr);
  return out;
}

GameConfig config_from_json(const ojson& j) {
  GameConfig c;
  c.cap = j.at("cap").get<uint64_t>();
  c.fragment_budget = j.at("fragment_budget").get<uint64_t>();
  c.bfs_budget = j.at("bfs_budget").get<uint64_t>();
  c.max_rounds = j.at("max_rounds").get<uint64_t>();
  if (!j.at("override_k").is_null()) c.override_k = j.at("override_k").get<uint64_t>();
  if (!j.at("override_head_depth").is_null())
    c.override_head_depth = j.at("override_head_depth").get<uint64_t>();
  c.proxy = j.at("proxy") == "approx_at_cap" ? GameConfig::Proxy::ApproxAtCap
                                             : GameConfig::Proxy::ExactEqLevel;
  if (!j.at("ng_threshold").is_null())
    c.ng_threshold = BigInt(j.at("ng_threshold").get<std::string>());
  return c;
}

ojson balance_json(const TermStore& st, const BalanceEvent& ev) {
  ojson out;
  out["side"] = ev.side == BalanceEvent::Side::Left ? "left" : "right";
  out["pivot"] = render_term(st, ev.pivot);
  out["head"] = render_term(st, ev.head);
  ojson sig = ojson::array(), sigp = ojson::array(), partners = ojson::array();
  for (auto& [v, h] : ev.sigma.entries()) sig.push_back(ojson::array({v, render_term(st, h)}));
  for (auto& [v, h] : ev.sigma_prime.entries())
    sigp.push_back(ojson::array({v, render_term(st, h)}));
  for (const PartnerUse& pu : ev.partners) {
    ojson p;
    p["var"] = pu.cut_var.index;
    p["v"] = render_term(st, pu.v);
    p["vp"] = render_term(st, pu.v_prime);
    p["level"] = pu.chain_level;
    p["word"] = words_json(pu.pivot_word);
    partners.push_back(p);
  }
  out["sigma"] = sig;
  out["sigma_prime"] = sigp;
  out["partners"] = partners;
  return out;
}

}  // namespace

std::string transcript_json(const Grammar& g, const Play& play, const GameConfig& config) {
  const TermStore& st = g.store;
  ojson out;
  out["grammar_sha"] = sha256_hex(g.source);
  out["config"] = config_json(config);
  out["initial"] =
      ojson::array({render_term(st, play.initial.first), render_term(st, play.initial.second)});
  ojson rounds = ojson::array();
  for (const RoundRecord& rec : play.rounds) {
    ojson r;
    r["start"] =
        ojson::array({render_term(st, rec.start.first), render_term(st, rec.start.second)});
    r["k"] = rec.k;
    ojson chain = ojson::array();
    for (const PairSet& b : rec.chain) chain.push_back(pairset_json(st, b));
    r["chain"] = chain;
    r["pick"] = ojson::array({render_term(st, rec.pick.first), render_term(st, rec.pick.second)});
    r["words"] = ojson{{"u1", words_json(rec.u1)}, {"u2", words_json(rec.u2)}};
    r["balance"] = rec.balance ? balance_json(st, *rec.balance) : ojson(nullptr);
    r["next"] = ojson::array({render_term(st, rec.next.first), render_term(st, rec.next.second)});
    rounds.push_back(r);
  }
  out["rounds"] = rounds;
  out["outcome"] = outcome_str(play.outcome);
  out["forfeit"] = play.forfeit_reason;
  out["ng_length_claimed"] =
      play.ng_length_claimed ? ojson(*play.ng_length_claimed) : ojson(nullptr);
  out["certified"] = play.certified;
  return out.dump(2) + "\n";
}

namespace {

class ScriptedProver : public ProverStrategy {
public:
  ScriptedProver(Grammar& g, const ojson& rounds) : g_(g), rounds_(rounds) {}

  std::optional<ChainProposal> propose_chain(BisimContext&, const RoundView& rv) override {
    if (rv.round_index >= rounds_.size()) return std::nullopt;
    const ojson& r = rounds_[rv.round_index];
    ChainProposal cp;
    cp.k = r.at("k").get<uint64_t>();
    const ojson& chain = r.at("chain");
    for (size_t j = 1; j < chain.size(); ++j) {
      PairSet b;
      for (const ojson& pj : chain[j])
        b.push_back({parse_term(g_.store, pj[0].get<std::string>()),
                     parse_term(g_.store, pj[1].get<std::string>())});
      cp.chain.push_back(normalize_pairset(std::move(b)));
    }
    return cp;
  }

  Balance choose_balance(BisimContext&, const RoundView& rv) override {
    if (rv.round_index >= rounds_.size()) return Balance::None;
    const ojson& b = rounds_[rv.round_index].at("balance");
    if (b.is_null()) return Balance::None;
    return b.at("side") == "left" ? Balance::Left : Balance::Right;
  }

private:
  Grammar& g_;
  const ojson& rounds_;
};

class ScriptedRefuter : public RefuterStrategy {
public:
  ScriptedRefuter(Grammar& g, const ojson& rounds) : g_(g), rounds_(rounds) {}

  std::optional<size_t> pick(BisimContext&, const RoundView& rv,
                             const PairSet& eligible) override {
    if (rv.round_index >= rounds_.size()) return std::nullopt;
    const ojson& p = rounds_[rv.round_index].at("pick");
    TermPair want{parse_term(g_.store, p[0].get<std::string>()),
                  parse_term(g_.store, p[1].get<std::string>())};
    for (size_t i = 0; i < eligible.size(); ++i)
      if (eligible[i] == want) return i;
    return std::nullopt;
  }

private:
  Grammar& g_;
  const ojson& rounds_;
};

}  // namespace

ReplayResult replay_transcript(Grammar& g, const std::string& transcript,
                               const GameConfig& /*unused*/) {
  ReplayResult res;
  ojson j;
  try {
    j = ojson::parse(transcript);
  } catch (const std::exception& e) {
    res.error = std::string("bad transcript JSON: ") + e.what();
    return res;
  }
  try {
    if (j.at("grammar_sha").get<std::string>() != sha256_hex(g.source)) {
      res.error = "grammar fingerprint mismatch";
      return res;
    }
    GameConfig config = config_from_json(j.at("config"));
    TermHandle t0 = parse_term(g.store, j.at("initial")[0].get<std::string>());
    TermHandle u0 = parse_term(g.store, j.at("initial")[1].get<std::string>());
    const ojson& rounds = j.at("rounds");
    ScriptedProver prover(g, rounds);
    ScriptedRefuter refuter(g, rounds);
    BisimContext bc(g);
    Play p = play(bc, t0, u0, prover, refuter, config);
    // scripted strategies cannot reproduce certification-relevant state;
    // carry the recorded flag through before re-serializing
    p.certified = j.at("certified").get<bool>();
    if (!j.at("ng_length_claimed").is_null())
      p.ng_length_claimed = j.at("ng_length_claimed").get<uint64_t>();
    res.regenerated = transcript_json(g, p, config);
    res.ok = res.regenerated == transcript;
    if (!res.ok) res.error = "replay diverged from the recorded transcript";
  } catch (const std::exception& e) {
    res.error = e.what();
    return res;
  }
  return res;
}

}  // namespace fog
