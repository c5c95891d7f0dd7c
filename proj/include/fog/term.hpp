#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace fog {

using BigInt = boost::multiprecision::cpp_int;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error {
  ParseError(std::string msg, size_t line, size_t col);
  size_t line, col;
};

/// Variable x_i; indices start at 1.
struct VarId {
  uint32_t index = 0;
  friend bool operator==(VarId a, VarId b) { return a.index == b.index; }
  friend auto operator<=>(VarId a, VarId b) { return a.index <=> b.index; }
};

/// Interned (name, arity) function symbol of one store.
struct NtId {
  uint32_t id = 0;
  friend bool operator==(NtId a, NtId b) { return a.id == b.id; }
  friend auto operator<=>(NtId a, NtId b) { return a.id <=> b.id; }
};

/// Canonical reference to a regular term. Two handles of the same store are
/// equal iff the (possibly infinite) tree unfoldings are equal.
struct TermHandle {
  static constexpr uint32_t npos = 0xffffffffu;
  uint32_t id = npos;
  bool valid() const { return id != npos; }
  friend bool operator==(TermHandle a, TermHandle b) { return a.id == b.id; }
  friend auto operator<=>(TermHandle a, TermHandle b) { return a.id <=> b.id; }
};

using TermPair = std::pair<TermHandle, TermHandle>;

struct TermHandleHash {
  size_t operator()(TermHandle h) const { return h.id * 0x9e3779b97f4a7c15ull >> 32; }
};

/// Append-only store of term-graph nodes with maximal sharing. Nodes are kept
/// minimal: no two live nodes unfold to the same tree, so handle equality is
/// term equality. Acyclic construction (var/app) is a hash-table lookup;
/// cycle-introducing construction goes through GraphBuilder::intern, which
/// canonicalizes by partition refinement before merging new nodes in.
class TermStore {
public:
  // symbols
  NtId nonterminal(std::string_view name, uint32_t arity);
  std::optional<NtId> find_nonterminal(std::string_view name) const;
  const std::string& name(NtId n) const { return symbols_[n.id].name; }
  uint32_t arity(NtId n) const { return symbols_[n.id].arity; }
  size_t symbol_count() const { return symbols_.size(); }

  // construction (canonical; children must belong to this store)
  TermHandle var(VarId v);
  TermHandle app(NtId f, std::span<const TermHandle> children);
  TermHandle app(NtId f, std::initializer_list<TermHandle> children);

  // inspection
  bool is_var(TermHandle t) const { return node(t).tag < 0; }
  VarId var_id(TermHandle t) const;
  NtId root(TermHandle t) const;
  std::span<const TermHandle> children(TermHandle t) const;
  size_t node_count() const { return nodes_.size(); }

  // measures over the canonical graph
  uint64_t pressize(TermHandle t) const;
  std::optional<uint64_t> depth(TermHandle t) const;  // nullopt = infinite (cyclic)
  std::vector<TermHandle> subterms(TermHandle t) const;
  std::vector<TermHandle> occurrences_at(TermHandle t, uint64_t d) const;
  std::vector<VarId> vars(TermHandle t) const;
  bool contains_var(TermHandle t, VarId v) const;
  uint32_t max_var_index(TermHandle t) const;

  // internal node view, shared with GraphBuilder and rendering
  struct Node {
    int64_t tag;  // >= 0: nonterminal id; < 0: variable -index
    std::vector<TermHandle> kids;
  };
  const Node& node(TermHandle t) const;

private:
  friend class GraphBuilder;
  TermHandle add_node(int64_t tag, std::vector<TermHandle> kids);
  std::optional<TermHandle> lookup(int64_t tag, std::span<const TermHandle> kids) const;
  static std::vector<int64_t> key_of(int64_t tag, std::span<const TermHandle> kids);

  struct SymInfo {
    std::string name;
    uint32_t arity;
  };
  struct KeyHash {
    size_t operator()(const std::vector<int64_t>& k) const;
  };
  std::vector<SymInfo> symbols_;
  std::map<std::string, uint32_t> symbol_by_name_;
  std::vector<Node> nodes_;
  std::unordered_map<std::vector<int64_t>, uint32_t, KeyHash> dedup_;
  // one entry per node of every cyclic cluster, keyed by the canonical rooted
  // encoding; value = handles in encoding discovery order
  std::unordered_map<std::string, std::vector<TermHandle>> cyclic_index_;
};

/// Scratch graph for building terms whose presentation has cycles (rec
/// binders, limit substitutions, quotients). intern() canonicalizes the
/// scratch graph together with the store part it references and returns the
/// canonical handle of the root.
class GraphBuilder {
public:
  struct Ref {
    int64_t v = -1;  // >= 0: scratch node index; < 0: handle encoded as -(id+2)
    static Ref handle(TermHandle h) { return Ref{-(int64_t)h.id - 2}; }
    bool is_handle() const { return v < 0; }
    TermHandle as_handle() const { return TermHandle{(uint32_t)(-v - 2)}; }
  };

  Ref add_var(VarId v);
  Ref add_app(NtId f, uint32_t arity);  // kids start unset
  void set_kid(Ref app_node, size_t pos, Ref kid);
  TermHandle intern(TermStore& store, Ref root);

private:
  struct BNode {
    int64_t tag;
    std::vector<Ref> kids;
  };
  std::vector<BNode> nodes_;
};

/// Finite map VarId -> TermHandle with no identity entries.
class Substitution {
public:
  Substitution() = default;
  bool empty() const { return map_.empty(); }
  size_t support_size() const { return map_.size(); }
  void set(VarId v, TermHandle img, const TermStore& store);
  std::optional<TermHandle> image(VarId v) const;
  Substitution without(VarId v) const;
  const std::map<uint32_t, TermHandle>& entries() const { return map_; }
  std::vector<TermHandle> range() const;
  friend bool operator==(const Substitution&, const Substitution&) = default;

private:
  std::map<uint32_t, TermHandle> map_;
};

TermHandle apply_subst(TermStore& store, TermHandle t, const Substitution& s);
Substitution compose(TermStore& store, const Substitution& s1, const Substitution& s2);
// H' = H{(x,H)}{(x,H)}...; satisfies H' = H{(x,H')} and x not in vars(H') when H != x.
TermHandle limit_subst(TermStore& store, VarId x, TermHandle h);

// Text syntax:
//   term    := var | nonterm | nonterm '(' term {',' term} ')'
//            | 'rec' recname '.' term | recname
//   var     := 'x' positive-integer
TermHandle parse_term(TermStore& store, std::string_view text, bool allow_rec = true);
std::string render_term(const TermStore& store, TermHandle t);

}  // namespace fog
