#include "fog/quotient.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <set>

namespace fog {

TermGraph syntactic_graph(const TermStore& st, TermHandle root,
                          std::vector<TermHandle>* out_terms) {
  TermGraph g;
  std::map<TermHandle, int32_t> idx;
  std::vector<TermHandle> order;
  std::function<int32_t(TermHandle)> visit = [&](TermHandle h) -> int32_t {
    if (auto it = idx.find(h); it != idx.end()) return it->second;
    int32_t id = (int32_t)order.size();
    idx[h] = id;
    order.push_back(h);
    g.nodes.push_back({});  // reserve slot; fill after kids are numbered
    const TermStore::Node& n = st.node(h);
    std::vector<int32_t> kids;
    for (TermHandle k : n.kids) kids.push_back(visit(k));
    g.nodes[(size_t)id] = TermGraph::GNode{n.tag, std::move(kids)};
    return id;
  };
  visit(root);
  if (out_terms) *out_terms = order;
  return g;
}

std::vector<TermHandle> intern_graph(TermStore& st, const TermGraph& g) {
  GraphBuilder gb;
  std::vector<GraphBuilder::Ref> refs;
  for (const TermGraph::GNode& n : g.nodes) {
    if (n.tag < 0)
      refs.push_back(gb.add_var(VarId{(uint32_t)(-n.tag)}));
    else
      refs.push_back(gb.add_app(NtId{(uint32_t)n.tag}, (uint32_t)n.kids.size()));
  }
  for (size_t i = 0; i < g.nodes.size(); ++i)
    for (size_t p = 0; p < g.nodes[i].kids.size(); ++p)
      gb.set_kid(refs[i], p, refs[(size_t)g.nodes[i].kids[p]]);
  std::vector<TermHandle> out;
  for (size_t i = 0; i < g.nodes.size(); ++i) out.push_back(gb.intern(st, refs[i]));
  return out;
}

void validate_partition(const TermGraph& g, const Partition& p) {
  std::vector<int> seen(g.size(), 0);
  for (const auto& block : p) {
    if (block.empty()) throw Error("partition has an empty block");
    for (int32_t n : block) {
      if (n < 0 || (size_t)n >= g.size()) throw Error("partition references a missing node");
      if (seen[(size_t)n]++) throw Error("partition blocks are not disjoint");
    }
  }
  for (size_t i = 0; i < g.size(); ++i)
    if (!seen[i]) throw Error("partition does not cover node " + std::to_string(i));
}

namespace {

// block index per node, and the representative (least canonical term handle,
// falling back to least node index) per block
struct Blocks {
  std::vector<int32_t> block_of;
  std::vector<int32_t> rep;  // per block, a node index
};

Blocks split(TermStore& st, const TermGraph& g, const Partition& p) {
  validate_partition(g, p);
  std::vector<TermHandle> terms = intern_graph(st, g);
  Blocks b;
  b.block_of.assign(g.size(), -1);
  for (size_t bi = 0; bi < p.size(); ++bi) {
    int32_t best = p[bi][0];
    for (int32_t n : p[bi]) {
      b.block_of[(size_t)n] = (int32_t)bi;
      if (terms[(size_t)n] < terms[(size_t)best] ||
          (terms[(size_t)n] == terms[(size_t)best] && n < best))
        best = n;
    }
    b.rep.push_back(best);
  }
  return b;
}

}  // namespace

QuotientResult quotient(TermStore& st, const TermGraph& g, const Partition& p) {
  Blocks b = split(st, g, p);
  QuotientResult out;
  out.representative.resize(g.size());
  for (size_t n = 0; n < g.size(); ++n)
    out.representative[n] = b.rep[(size_t)b.block_of[n]];

  // quotient graph: one node per block, carrying the representative's label
  // and arcs redirected to block representatives
  out.quotient_graph.nodes.resize(p.size());
  for (size_t bi = 0; bi < p.size(); ++bi) {
    const TermGraph::GNode& rn = g.nodes[(size_t)b.rep[bi]];
    TermGraph::GNode qn{rn.tag, {}};
    for (int32_t k : rn.kids) qn.kids.push_back(b.block_of[(size_t)k]);
    out.quotient_graph.nodes[bi] = std::move(qn);
  }
  std::vector<TermHandle> qterms = intern_graph(st, out.quotient_graph);
  out.red.resize(g.size());
  for (size_t n = 0; n < g.size(); ++n) out.red[n] = qterms[(size_t)b.block_of[n]];
  return out;
}

TermHandle red1(TermStore& st, const TermGraph& g, const Partition& p, int32_t node) {
  if (node < 0 || (size_t)node >= g.size()) throw Error("red1: bad node");
  QuotientResult q = quotient(st, g, p);
  const TermGraph::GNode& n = g.nodes[(size_t)node];
  if (n.tag < 0) return st.var(VarId{(uint32_t)(-n.tag)});
  GraphBuilder gb;
  GraphBuilder::Ref root = gb.add_app(NtId{(uint32_t)n.tag}, (uint32_t)n.kids.size());
  for (size_t i = 0; i < n.kids.size(); ++i)
    gb.set_kid(root, i, GraphBuilder::Ref::handle(q.red[(size_t)n.kids[i]]));
  return gb.intern(st, root);
}

std::vector<TermPair> decompose(TermStore& st, const TermGraph& g, const Partition& p) {
  QuotientResult q = quotient(st, g, p);
  std::vector<TermPair> out;
  for (size_t n = 0; n < g.size(); ++n) {
    const TermGraph::GNode& gn = g.nodes[n];
    TermHandle r1;
    if (gn.tag < 0) {
      r1 = st.var(VarId{(uint32_t)(-gn.tag)});
    } else {
      GraphBuilder gb;
      GraphBuilder::Ref root = gb.add_app(NtId{(uint32_t)gn.tag}, (uint32_t)gn.kids.size());
      for (size_t i = 0; i < gn.kids.size(); ++i)
        gb.set_kid(root, i, GraphBuilder::Ref::handle(q.red[(size_t)gn.kids[i]]));
      r1 = gb.intern(st, root);
    }
    out.push_back({r1, q.red[n]});
  }
  return out;
}

Partition least_partition(const TermGraph& g,
                          std::span<const std::pair<int32_t, int32_t>> seeds,
                          std::span<const std::pair<int32_t, int32_t>> marked_arcs) {
  std::vector<int32_t> parent(g.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int32_t(int32_t)> find = [&](int32_t x) {
    while (parent[(size_t)x] != x) {
      parent[(size_t)x] = parent[(size_t)parent[(size_t)x]];
      x = parent[(size_t)x];
    }
    return x;
  };
  auto unite = [&](int32_t a, int32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[(size_t)std::max(a, b)] = std::min(a, b);
  };
  for (auto& [a, b] : seeds) {
    if (a < 0 || b < 0 || (size_t)a >= g.size() || (size_t)b >= g.size())
      throw Error("least_partition: bad seed");
    unite(a, b);
  }
  for (auto& [n, pos] : marked_arcs) {
    if (n < 0 || (size_t)n >= g.size() || pos < 0 ||
        (size_t)pos >= g.nodes[(size_t)n].kids.size())
      throw Error("least_partition: bad arc");
    unite(n, g.nodes[(size_t)n].kids[(size_t)pos]);  // loop arcs unite(n,n): no-op
  }
  std::map<int32_t, std::vector<int32_t>> blocks;
  for (size_t n = 0; n < g.size(); ++n) blocks[find((int32_t)n)].push_back((int32_t)n);
  Partition out;
  for (auto& [root, ns] : blocks) out.push_back(ns);
  return out;
}

Prop8Report prop8_check(BisimContext& bc, const TermGraph& g, const Partition& p, uint64_t cap,
                        uint64_t budget) {
  TermStore& st = bc.grammar().store;
  std::vector<TermHandle> terms = intern_graph(st, g);
  std::vector<TermPair> dec = decompose(st, g, p);
  Prop8Report report;
  report.dec_least = bc.leasteqlev(normalize_pairset(dec), cap, budget);
  for (const auto& block : p) {
    for (size_t i = 0; i < block.size(); ++i)
      for (size_t j = i + 1; j < block.size(); ++j) {
        EqLevel lv = bc.eqlevel(terms[(size_t)block[i]], terms[(size_t)block[j]], cap, budget);
        Prop8Check chk{block[i], block[j], lv, Prop8Check::Status::Undetermined};
        const EqLevel& e = report.dec_least;
        if (e.is_omega()) {
          if (lv.is_omega())
            chk.status = Prop8Check::Status::Holds;
          else if (lv.is_finite())
            chk.status = Prop8Check::Status::Violates;
        } else if (e.is_finite()) {
          if (lv.is_omega() || (lv.is_finite() && lv.level >= e.level) ||
              (lv.kind == EqLevel::Kind::AtLeast && lv.level >= e.level))
            chk.status = Prop8Check::Status::Holds;
          else if (lv.is_finite())
            chk.status = Prop8Check::Status::Violates;
        }
        if (chk.status == Prop8Check::Status::Violates) report.any_violation = true;
        report.checks.push_back(chk);
      }
  }
  return report;
}

}  // namespace fog
