#pragma once

#include "fog/bisim.hpp"

namespace fog {

/// Raw rooted graph presentation (not necessarily minimal); kid entries are
/// node indices, variables are leaves.
struct TermGraph {
  struct GNode {
    int64_t tag;  // >= 0 nonterminal id of the owning store, < 0 variable -index
    std::vector<int32_t> kids;
  };
  std::vector<GNode> nodes;
  size_t size() const { return nodes.size(); }
};

// export the syntactic graph of a term; node 0 is the root, nodes in DFS
// discovery order; out_terms aligns nodes with their canonical handles
TermGraph syntactic_graph(const TermStore& st, TermHandle root, std::vector<TermHandle>* out_terms);

// intern every node of a raw graph; returns the canonical term per node
std::vector<TermHandle> intern_graph(TermStore& st, const TermGraph& g);

/// blocks of node indices; disjoint, exhaustive
using Partition = std::vector<std::vector<int32_t>>;
void validate_partition(const TermGraph& g, const Partition& p);

struct QuotientResult {
  std::vector<int32_t> representative;  // node -> representative node index
  std::vector<TermHandle> red;          // node -> term of its block in the quotient graph
  TermGraph quotient_graph;             // one node per block, representative order
};

QuotientResult quotient(TermStore& st, const TermGraph& g, const Partition& p);
TermHandle red1(TermStore& st, const TermGraph& g, const Partition& p, int32_t node);
// dec_P: one (red1(n), red(n)) pair per node
std::vector<TermPair> decompose(TermStore& st, const TermGraph& g, const Partition& p);

// least partition joining seed pairs and the endpoints of marked arcs
// (arc = (node, kid position)); loop arcs contribute nothing
Partition least_partition(const TermGraph& g, std::span<const std::pair<int32_t, int32_t>> seeds,
                          std::span<const std::pair<int32_t, int32_t>> marked_arcs);

struct Prop8Check {
  int32_t n1, n2;
  EqLevel level;
  enum class Status { Holds, Violates, Undetermined } status;
};

struct Prop8Report {
  EqLevel dec_least;
  std::vector<Prop8Check> checks;
  bool any_violation = false;
};

// eqlevel(n1,n2) >= leasteqlev(dec_P) for same-block nodes, asserted where
// both sides are determined
Prop8Report prop8_check(BisimContext& bc, const TermGraph& g, const Partition& p, uint64_t cap,
                        uint64_t budget);

}  // namespace fog
