#include "fog/bounds.hpp"

#include <algorithm>
#include <set>
#include <thread>

namespace fog {

// ---------------------------------------------------------------------------
// GrowthFn
// ---------------------------------------------------------------------------

struct GrowthFn::Impl {
  // base layer
  std::vector<BigInt> table;
  std::optional<std::pair<BigInt, BigInt>> tail;  // g(j) = a + b*j past the table
  // derived layer: g'(j) = base(shift + j) + add
  std::shared_ptr<const Impl> base;
  BigInt shift = 0, add = 0;

  BigInt at(const BigInt& j) const {
    if (j < 1) throw Error("GrowthFn: index must be >= 1");
    if (base) return base->at(shift + j) + add;
    if (j <= (BigInt)table.size()) return table[(size_t)(uint64_t)(j - 1)];
    if (tail) return tail->first + tail->second * j;
    throw SegmentExhausted("growth table exhausted at index " + j.str());
  }
  bool defined(const BigInt& j) const {
    if (j < 1) return false;
    if (base) return base->defined(shift + j);
    return j <= (BigInt)table.size() || tail.has_value();
  }
};

GrowthFn::GrowthFn(std::vector<BigInt> table, std::optional<std::pair<BigInt, BigInt>> tail) {
  for (size_t i = 0; i + 1 < table.size(); ++i)
    if (table[i] > table[i + 1]) throw Error("GrowthFn table must be nondecreasing");
  for (const BigInt& v : table)
    if (v < 1) throw Error("GrowthFn values must be positive");
  auto impl = std::make_shared<Impl>();
  impl->table = std::move(table);
  impl->tail = std::move(tail);
  impl_ = impl;
}

GrowthFn GrowthFn::constant(BigInt value, size_t table_len, bool with_tail) {
  std::vector<BigInt> t(table_len, value);
  if (with_tail) return GrowthFn(std::move(t), std::make_pair(value, BigInt(0)));
  return GrowthFn(std::move(t), std::nullopt);
}

BigInt GrowthFn::at(const BigInt& j) const {
  if (!impl_) throw Error("empty GrowthFn");
  return impl_->at(j);
}

bool GrowthFn::defined(const BigInt& j) const { return impl_ && impl_->defined(j); }

GrowthFn GrowthFn::primed(const BigInt& mel, const BigInt& sizeinc) const {
  if (!impl_) throw Error("empty GrowthFn");
  auto impl = std::make_shared<Impl>();
  impl->base = impl_;
  impl->shift = 1 + mel;
  impl->add = 2 * (at(1) + mel * sizeinc);
  GrowthFn g;
  g.impl_ = impl;
  return g;
}

size_t GrowthFn::table_size() const {
  const Impl* i = impl_.get();
  while (i && i->base) i = i->base.get();
  return i ? i->table.size() : 0;
}

// ---------------------------------------------------------------------------
// CandidateSet
// ---------------------------------------------------------------------------

void CandidateSet::add(TermPair p, uint64_t level) {
  pairs_.push_back({p, level});
  std::sort(pairs_.begin(), pairs_.end(),
            [](const CandidatePair& a, const CandidatePair& b) { return a.pair < b.pair; });
}

bool CandidateSet::contains(TermPair p) const {
  for (const CandidatePair& c : pairs_)
    if (c.pair == p) return true;
  return false;
}

BigInt CandidateSet::max_pressize(const TermStore& st) const {
  BigInt m = 0;
  for (const CandidatePair& c : pairs_)
    m = std::max(m, BigInt(st.pressize(c.pair.first) + st.pressize(c.pair.second)));
  return m;
}

std::optional<std::string> CandidateSet::verify(BisimContext& bc, uint64_t budget) const {
  for (const CandidatePair& c : pairs_) {
    EqLevel e = bc.eqlevel(c.pair.first, c.pair.second, c.level + 1, budget);
    if (!(e == EqLevel::finite(c.level)))
      return "claimed eqlevel " + std::to_string(c.level) + " but got " + e.str();
  }
  return std::nullopt;
}

MelFn CandidateSet::mel(const TermStore& st) const {
  // snapshot sizes now; the closure is self-contained
  std::vector<std::pair<BigInt, uint64_t>> sized;
  for (const CandidatePair& c : pairs_)
    sized.push_back({BigInt(st.pressize(c.pair.first) + st.pressize(c.pair.second)), c.level});
  return [sized](const BigInt& b) {
    BigInt m = 0;
    for (auto& [sz, lvl] : sized)
      if (sz <= b) m = std::max(m, BigInt(lvl));
    return m;
  };
}

// ---------------------------------------------------------------------------
// enumeration
// ---------------------------------------------------------------------------

namespace {

// Emits every rooted graph presentation with <= max_nodes nodes where node
// ids appear in first-reference order; interning collapses them to canonical
// terms. Complete: the minimal graph of any term of pressize <= max_nodes is
// emitted under its discovery numbering.
struct TermEnumerator {
  Grammar& g;
  uint64_t max_nodes;
  std::vector<int64_t> labels_avail;  // var -i or nonterminal id
  std::set<TermHandle>& out;

  std::vector<int64_t> label;             // per created node
  std::vector<std::vector<int64_t>> kid;  // -1 = unfilled
  std::vector<std::pair<size_t, size_t>> slots;

  uint32_t arity_of(int64_t lab) const {
    return lab < 0 ? 0 : g.store.arity(NtId{(uint32_t)lab});
  }

  void emit() {
    GraphBuilder gb;
    std::vector<GraphBuilder::Ref> refs;
    for (size_t i = 0; i < label.size(); ++i) {
      if (label[i] < 0)
        refs.push_back(gb.add_var(VarId{(uint32_t)(-label[i])}));
      else
        refs.push_back(gb.add_app(NtId{(uint32_t)label[i]}, arity_of(label[i])));
    }
    for (size_t i = 0; i < label.size(); ++i)
      for (size_t p = 0; p < kid[i].size(); ++p) gb.set_kid(refs[i], p, refs[(size_t)kid[i][p]]);
    out.insert(gb.intern(g.store, refs[0]));
  }

  void fill(size_t slot_idx) {
    if (slot_idx == slots.size()) {
      emit();
      return;
    }
    auto [node, pos] = slots[slot_idx];
    // existing nodes
    for (size_t j = 0; j < label.size(); ++j) {
      kid[node][pos] = (int64_t)j;
      fill(slot_idx + 1);
    }
    // fresh node
    if (label.size() < max_nodes) {
      for (int64_t lab : labels_avail) {
        size_t j = label.size();
        label.push_back(lab);
        kid.push_back(std::vector<int64_t>(arity_of(lab), -1));
        size_t added = arity_of(lab);
        for (size_t p = 0; p < added; ++p) slots.push_back({j, p});
        kid[node][pos] = (int64_t)j;
        fill(slot_idx + 1);
        for (size_t p = 0; p < added; ++p) slots.pop_back();
        label.pop_back();
        kid.pop_back();
      }
    }
    kid[node][pos] = -1;
  }

  void run() {
    for (int64_t lab : labels_avail) {
      label = {lab};
      kid = {std::vector<int64_t>(arity_of(lab), -1)};
      slots.clear();
      for (size_t p = 0; p < kid[0].size(); ++p) slots.push_back({0, p});
      fill(0);
    }
  }
};

}  // namespace

std::vector<TermHandle> enumerate_terms(Grammar& g, uint64_t max_pressize, uint32_t var_limit) {
  std::set<TermHandle> out;
  std::vector<int64_t> labels;
  for (uint32_t v = 1; v <= var_limit; ++v) labels.push_back(-(int64_t)v);
  for (NtId nt : g.nonterminals) labels.push_back((int64_t)nt.id);
  TermEnumerator e{g, max_pressize, labels, out, {}, {}, {}};
  if (max_pressize > 0) e.run();
  std::vector<TermHandle> v(out.begin(), out.end());
  // keep only terms whose canonical size fits (discovery graphs may shrink)
  std::erase_if(v, [&](TermHandle t) { return g.store.pressize(t) > max_pressize; });
  std::sort(v.begin(), v.end());
  return v;
}

std::vector<TermPair> enumerate_pairs(Grammar& g, uint64_t max_pressize, uint32_t var_limit) {
  std::vector<TermHandle> terms =
      enumerate_terms(g, max_pressize > 0 ? max_pressize - 1 : 0, var_limit);
  std::vector<TermPair> out;
  for (TermHandle a : terms)
    for (TermHandle b : terms)
      if (g.store.pressize(a) + g.store.pressize(b) <= max_pressize) out.push_back({a, b});
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// bmel / ell
// ---------------------------------------------------------------------------

EqLevel bmel(BisimContext& bc, uint64_t b, uint32_t var_limit, uint64_t cap, uint64_t budget,
             unsigned jobs) {
  Grammar& g = bc.grammar();
  std::vector<TermPair> pairs = enumerate_pairs(g, b, var_limit);
  if (jobs <= 1 || pairs.size() < 32) {
    EqLevel m = EqLevel::finite(0);
    for (const TermPair& p : pairs) {
      EqLevel e = bc.eqlevel(p.first, p.second, cap, budget);
      if (e.is_omega()) continue;
      if (!e.is_finite())
        throw BmelUndetermined("bmel undetermined: eqlevel " + e.str() + " for a size-" +
                                   std::to_string(b) + " pair",
                               p);
      m = eq_max(m, e);
    }
    return m;
  }
  // each worker clones the grammar; handles stay valid in the clone
  std::vector<EqLevel> results(jobs, EqLevel::finite(0));
  std::vector<std::optional<std::pair<TermPair, std::string>>> failures(jobs);
  std::vector<std::thread> threads;
  for (unsigned w = 0; w < jobs; ++w) {
    threads.emplace_back([&, w]() {
      Grammar local = g;
      BisimContext lbc(local);
      EqLevel m = EqLevel::finite(0);
      for (size_t i = w; i < pairs.size(); i += jobs) {
        EqLevel e = lbc.eqlevel(pairs[i].first, pairs[i].second, cap, budget);
        if (e.is_omega()) continue;
        if (!e.is_finite()) {
          if (!failures[w]) failures[w] = {pairs[i], e.str()};
          return;
        }
        m = eq_max(m, e);
      }
      results[w] = m;
    });
  }
  for (auto& t : threads) t.join();
  std::optional<std::pair<TermPair, std::string>> failure;
  for (auto& f : failures)
    if (f && (!failure || f->first < failure->first)) failure = f;
  if (failure)
    throw BmelUndetermined("bmel undetermined: eqlevel " + failure->second, failure->first);
  EqLevel m = EqLevel::finite(0);
  for (const EqLevel& r : results) m = eq_max(m, r);
  return m;
}

MelFn mel_exact(BisimContext& bc, uint32_t var_limit, uint64_t cap, uint64_t budget,
                unsigned jobs) {
  BisimContext* pbc = &bc;
  return [pbc, var_limit, cap, budget, jobs](const BigInt& b) {
    if (b < 0 || b > 1000000) throw Error("exact bmel: size bound " + b.str() + " too large");
    EqLevel e = bmel(*pbc, (uint64_t)b, var_limit, cap, budget, jobs);
    return BigInt(e.level);
  };
}

BigInt ell(const BigInt& n, const GrowthFn& g, const MelFn& mel, const BigInt& sizeinc,
           EllTrace* trace) {
  if (n > 100000) throw Error("ell: n too large to unfold");
  BigInt mel1 = mel(g.at(1));
  if (trace) trace->mels.push_back(mel1);
  if (n == 0) return 1 + mel1;
  GrowthFn gp = g.primed(mel1, sizeinc);
  return 1 + mel1 + ell(n - 1, gp, mel, sizeinc, trace);
}

bool sufficient_size_bound(const BigInt& c_max_pressize, const MelFn& mel, const BigInt& n,
                           const GrowthFn& g, const BigInt& size_bound, const BigInt& sizeinc) {
  try {
    if (c_max_pressize > size_bound) return false;
    if (g.at(1) > size_bound) return false;
    if (n > 0) {
      BigInt mel1 = mel(g.at(1));
      return sufficient_size_bound(c_max_pressize, mel, n - 1, g.primed(mel1, sizeinc), size_bound,
                                   sizeinc);
    }
    return true;
  } catch (const SegmentExhausted&) {
    return false;
  }
}

bool sufficient_segment_bound(const MelFn& mel, const BigInt& n, const GrowthFn& g,
                              const BigInt& segment_bound, const BigInt& sizeinc) {
  try {
    if (segment_bound < 1) return false;
    if (n == 0) return true;
    BigInt mel1 = mel(g.at(1));
    // least sufficient S' for (n-1, g') gives the weakest requirement
    std::function<BigInt(const BigInt&, const GrowthFn&)> least = [&](const BigInt& m,
                                                                      const GrowthFn& gg) {
      if (m == 0) return BigInt(1);
      BigInt m1 = mel(gg.at(1));
      return 1 + m1 + least(m - 1, gg.primed(m1, sizeinc));
    };
    return segment_bound >= 1 + mel1 + least(n - 1, g.primed(mel1, sizeinc));
  } catch (const SegmentExhausted&) {
    return false;
  }
}

// ---------------------------------------------------------------------------
// (n,g)-sequences
// ---------------------------------------------------------------------------

NgVerdict validate_ng_sequence(BisimContext& bc, const NgPresentation& p, const BigInt& n,
                               const GrowthFn& g, bool require_decreasing, uint64_t cap,
                               uint64_t budget) {
  NgVerdict v;
  TermStore& st = bc.grammar().store;
  if (BigInt(p.sigma.support_size()) > n) {
    v.ok = false;
    v.violations.push_back("support size " + std::to_string(p.sigma.support_size()) +
                           " exceeds n = " + n.str());
  }
  for (size_t j = 0; j < p.heads.size(); ++j) {
    BigInt sz = BigInt(st.pressize(p.heads[j].first) + st.pressize(p.heads[j].second));
    try {
      BigInt bound = g.at(BigInt(j + 1));
      if (sz > bound) {
        v.ok = false;
        v.violations.push_back("pressize " + sz.str() + " at index " + std::to_string(j + 1) +
                               " exceeds g = " + bound.str());
      }
    } catch (const SegmentExhausted&) {
      v.ok = false;
      v.violations.push_back("g undefined at index " + std::to_string(j + 1));
    }
  }
  if (require_decreasing && !p.heads.empty()) {
    std::optional<uint64_t> prev;
    for (size_t j = 0; j < p.heads.size(); ++j) {
      TermHandle a = apply_subst(st, p.heads[j].first, p.sigma);
      TermHandle b = apply_subst(st, p.heads[j].second, p.sigma);
      EqLevel e = bc.eqlevel(a, b, cap, budget);
      if (!e.determined()) {
        v.undetermined = true;
        v.violations.push_back("eqlevel undetermined (" + e.str() + ") at index " +
                               std::to_string(j + 1));
        break;
      }
      if (e.is_omega()) {
        v.ok = false;
        v.violations.push_back("pair at index " + std::to_string(j + 1) +
                               " is equivalent; eqlevel-decreasing requires V_1 !~ V'_1");
        break;
      }
      if (prev && e.level >= *prev) {
        v.ok = false;
        v.violations.push_back("eqlevel not strictly decreasing at index " + std::to_string(j + 1));
        break;
      }
      prev = e.level;
    }
  }
  return v;
}

GrowthFn derived_g0(const GrammarConstants& c, const BigInt& k_eff, const BigInt& d_eff,
                    size_t table_len) {
  // head-size bound from the forcing argument, with overridable M1 / M'_0:
  //   depth(G_l) <= 1 + l*(2k + M0)*mrh,  depth(H_l) <= depth(G_l) + k,
  //   H = d + depth(H_l) + k*mrh,  pair size <= 2*nodes(m, H)^2
  std::vector<BigInt> table;
  BigInt m = c.arity_max;
  for (size_t l = 1; l <= table_len; ++l) {
    BigInt depth_g = 1 + BigInt(l) * (2 * k_eff + c.M0) * c.maxruleheight;
    BigInt h = d_eff + depth_g + k_eff + k_eff * c.maxruleheight;
    BigInt nodes;
    if (m <= 1) {
      nodes = h + 1;
    } else {
      // (m^(h+1) - 1) / (m - 1)
      BigInt p = 1, e = h + 1, b = m;
      while (e > 0) {
        if ((e & 1) != 0) p *= b;
        e >>= 1;
        if (e > 0) b *= b;
      }
      nodes = (p - 1) / (m - 1);
    }
    table.push_back(2 * nodes * nodes);
  }
  return GrowthFn(std::move(table), std::nullopt);
}

// ---------------------------------------------------------------------------
// Lemma 2 brute force
// ---------------------------------------------------------------------------

namespace {

BigInt grammar_sizeinc(const Grammar& g) {
  BigInt s = 0;
  for (const Rule& r : g.rules) s = std::max(s, BigInt(g.store.pressize(r.rhs)));
  return s;
}

}  // namespace

Lemma2Report lemma2_bruteforce_check(BisimContext& bc, uint32_t n, const GrowthFn& g,
                                     const Lemma2Limits& limits) {
  if (n > 1) throw Error("lemma2_bruteforce_check supports n <= 1");
  Grammar& gram = bc.grammar();
  Lemma2Report report;
  BigInt sizeinc = grammar_sizeinc(gram);
  report.ell_value =
      ell(BigInt(n), g, mel_exact(bc, limits.var_limit, limits.cap, limits.budget), sizeinc);

  // substitutions to try
  std::vector<Substitution> sigmas;
  sigmas.push_back({});
  if (n == 1) {
    std::vector<TermHandle> pool = enumerate_terms(gram, limits.pool_max_pressize, limits.var_limit);
    for (uint32_t v = 1; v <= limits.var_limit; ++v)
      for (TermHandle img : pool) {
        Substitution s;
        s.set(VarId{v}, img, gram.store);
        if (!s.empty()) sigmas.push_back(s);
      }
  }

  // per-position candidate pairs; g is nondecreasing so position j allows
  // pressize <= g(j)
  size_t max_pos = limits.max_positions;
  std::vector<std::vector<TermPair>> per_pos;
  for (size_t j = 1; j <= max_pos; ++j) {
    BigInt bound;
    try {
      bound = g.at(BigInt(j));
    } catch (const SegmentExhausted&) {
      break;
    }
    if (bound > 1000000) throw Error("lemma2: growth bound too large for enumeration");
    per_pos.push_back(enumerate_pairs(gram, (uint64_t)bound, limits.var_limit));
  }

  for (const Substitution& sigma : sigmas) {
    // levels of substituted pairs per position
    std::vector<std::vector<uint64_t>> levels(per_pos.size());
    std::map<TermPair, std::optional<uint64_t>> level_of;
    for (size_t j = 0; j < per_pos.size(); ++j) {
      for (const TermPair& p : per_pos[j]) {
        auto it = level_of.find(p);
        if (it == level_of.end()) {
          TermHandle a = apply_subst(gram.store, p.first, sigma);
          TermHandle b = apply_subst(gram.store, p.second, sigma);
          EqLevel e = bc.eqlevel(a, b, limits.cap, limits.budget);
          if (!e.determined())
            throw Error("lemma2: undetermined eqlevel for pair (" +
                        render_term(gram.store, p.first) + ", " + render_term(gram.store, p.second) +
                        ") under a substitution");
          level_of[p] = e.is_omega() ? std::nullopt : std::optional<uint64_t>(e.level);
          ++report.sequences_seen;
        }
        if (level_of[p]) levels[j].push_back(*level_of[p]);
      }
      std::sort(levels[j].begin(), levels[j].end());
      levels[j].erase(std::unique(levels[j].begin(), levels[j].end()), levels[j].end());
    }
    level_of.clear();

    // longest strictly-decreasing chain with e_j drawn from levels[j]
    std::map<std::pair<size_t, uint64_t>, uint64_t> memo;
    std::function<uint64_t(size_t, uint64_t)> best = [&](size_t j, uint64_t below) -> uint64_t {
      if (j >= levels.size()) return 0;
      auto key = std::make_pair(j, below);
      if (auto it = memo.find(key); it != memo.end()) return it->second;
      uint64_t r = 0;
      for (uint64_t lvl : levels[j])
        if (lvl < below) r = std::max(r, 1 + best(j + 1, lvl));
      memo[key] = r;
      return r;
    };
    uint64_t len = best(0, ~0ull);
    report.max_len_found = std::max(report.max_len_found, len);
  }

  report.ok = BigInt(report.max_len_found) <= report.ell_value;
  report.detail = "max eqlevel-decreasing (n,g)-sequence length " +
                  std::to_string(report.max_len_found) + ", ell = " + report.ell_value.str();
  return report;
}

}  // namespace fog
