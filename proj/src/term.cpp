#include "fog/term.hpp"

#include <algorithm>
#include <cassert>
#include <cctype>
#include <functional>
#include <set>
#include <sstream>

namespace fog {

ParseError::ParseError(std::string msg, size_t line_, size_t col_)
    : Error(msg + " (line " + std::to_string(line_) + ", col " + std::to_string(col_) + ")"),
      line(line_),
      col(col_) {}

// ---------------------------------------------------------------------------
// TermStore
// ---------------------------------------------------------------------------

size_t TermStore::KeyHash::operator()(const std::vector<int64_t>& k) const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (int64_t x : k) {
    h ^= (uint64_t)x;
    h *= 0x100000001b3ull;
  }
  return (size_t)h;
}

NtId TermStore::nonterminal(std::string_view name, uint32_t arity) {
  auto it = symbol_by_name_.find(std::string(name));
  if (it != symbol_by_name_.end()) {
    if (symbols_[it->second].arity != arity)
      throw Error("nonterminal '" + std::string(name) + "' redeclared with arity " +
                  std::to_string(arity) + " (was " + std::to_string(symbols_[it->second].arity) +
                  ")");
    return NtId{it->second};
  }
  uint32_t id = (uint32_t)symbols_.size();
  symbols_.push_back({std::string(name), arity});
  symbol_by_name_.emplace(std::string(name), id);
  return NtId{id};
}

std::optional<NtId> TermStore::find_nonterminal(std::string_view name) const {
  auto it = symbol_by_name_.find(std::string(name));
  if (it == symbol_by_name_.end()) return std::nullopt;
  return NtId{it->second};
}

const TermStore::Node& TermStore::node(TermHandle t) const {
  if (!t.valid() || t.id >= nodes_.size()) throw Error("invalid term handle");
  return nodes_[t.id];
}

VarId TermStore::var_id(TermHandle t) const {
  const Node& n = node(t);
  if (n.tag >= 0) throw Error("var_id on non-variable term");
  return VarId{(uint32_t)(-n.tag)};
}

NtId TermStore::root(TermHandle t) const {
  const Node& n = node(t);
  if (n.tag < 0) throw Error("root on variable term");
  return NtId{(uint32_t)n.tag};
}

std::span<const TermHandle> TermStore::children(TermHandle t) const {
  const Node& n = node(t);
  return {n.kids.data(), n.kids.size()};
}

std::vector<int64_t> TermStore::key_of(int64_t tag, std::span<const TermHandle> kids) {
  std::vector<int64_t> key;
  key.reserve(kids.size() + 1);
  key.push_back(tag);
  for (TermHandle k : kids) key.push_back((int64_t)k.id);
  return key;
}

std::optional<TermHandle> TermStore::lookup(int64_t tag, std::span<const TermHandle> kids) const {
  auto it = dedup_.find(key_of(tag, kids));
  if (it == dedup_.end()) return std::nullopt;
  return TermHandle{it->second};
}

TermHandle TermStore::add_node(int64_t tag, std::vector<TermHandle> kids) {
  uint32_t id = (uint32_t)nodes_.size();
  dedup_.emplace(key_of(tag, kids), id);
  nodes_.push_back(Node{tag, std::move(kids)});
  return TermHandle{id};
}

TermHandle TermStore::var(VarId v) {
  if (v.index == 0) throw Error("variable indices start at 1");
  int64_t tag = -(int64_t)v.index;
  if (auto h = lookup(tag, {})) return *h;
  return add_node(tag, {});
}

TermHandle TermStore::app(NtId f, std::span<const TermHandle> kids) {
  if (kids.size() != arity(f))
    throw Error("arity mismatch: " + name(f) + "/" + std::to_string(arity(f)) + " applied to " +
                std::to_string(kids.size()) + " children");
  for (TermHandle k : kids) node(k);  // validate
  if (auto h = lookup((int64_t)f.id, kids)) return *h;
  return add_node((int64_t)f.id, std::vector<TermHandle>(kids.begin(), kids.end()));
}

TermHandle TermStore::app(NtId f, std::initializer_list<TermHandle> kids) {
  return app(f, std::span<const TermHandle>(kids.begin(), kids.size()));
}

uint64_t TermStore::pressize(TermHandle t) const {
  return (uint64_t)subterms(t).size();
}

std::vector<TermHandle> TermStore::subterms(TermHandle t) const {
  node(t);
  std::set<TermHandle> seen;
  std::vector<TermHandle> stack{t};
  while (!stack.empty()) {
    TermHandle h = stack.back();
    stack.pop_back();
    if (!seen.insert(h).second) continue;
    for (TermHandle k : node(h).kids) stack.push_back(k);
  }
  return {seen.begin(), seen.end()};
}

std::optional<uint64_t> TermStore::depth(TermHandle t) const {
  // longest root-to-leaf distance; nullopt when the reachable part is cyclic
  enum { White, Grey, Black };
  std::unordered_map<uint32_t, int> colour;
  std::unordered_map<uint32_t, uint64_t> memo;
  bool cyclic = false;
  std::function<uint64_t(TermHandle)> go = [&](TermHandle h) -> uint64_t {
    if (cyclic) return 0;
    auto c = colour.find(h.id);
    if (c != colour.end()) {
      if (c->second == Grey) {
        cyclic = true;
        return 0;
      }
      return memo[h.id];
    }
    colour[h.id] = Grey;
    uint64_t d = 0;
    for (TermHandle k : node(h).kids) d = std::max(d, 1 + go(k));
    colour[h.id] = Black;
    memo[h.id] = d;
    return d;
  };
  uint64_t d = go(t);
  if (cyclic) return std::nullopt;
  return d;
}

std::vector<TermHandle> TermStore::occurrences_at(TermHandle t, uint64_t d) const {
  std::vector<TermHandle> level{t};
  for (uint64_t i = 0; i < d; ++i) {
    std::vector<TermHandle> next;
    for (TermHandle h : level)
      for (TermHandle k : node(h).kids) next.push_back(k);
    level = std::move(next);
  }
  std::sort(level.begin(), level.end());
  return level;
}

std::vector<VarId> TermStore::vars(TermHandle t) const {
  std::vector<VarId> out;
  for (TermHandle s : subterms(t))
    if (is_var(s)) out.push_back(var_id(s));
  std::sort(out.begin(), out.end());
  return out;
}

bool TermStore::contains_var(TermHandle t, VarId v) const {
  for (TermHandle s : subterms(t))
    if (is_var(s) && var_id(s) == v) return true;
  return false;
}

uint32_t TermStore::max_var_index(TermHandle t) const {
  uint32_t m = 0;
  for (VarId v : vars(t)) m = std::max(m, v.index);
  return m;
}

// ---------------------------------------------------------------------------
// GraphBuilder::intern
//
// Canonicalizes the scratch graph against the store: partition refinement
// over scratch nodes plus the store part they reference (initial blocks by
// label, refined by child-block signatures — the DFA-minimization analogue),
// then new blocks are folded in bottom-up by SCC. Acyclic new blocks fold by
// dedup lookup; cyclic clusters by a canonical rooted encoding.
// ---------------------------------------------------------------------------

GraphBuilder::Ref GraphBuilder::add_var(VarId v) {
  if (v.index == 0) throw Error("variable indices start at 1");
  nodes_.push_back(BNode{-(int64_t)v.index, {}});
  return Ref{(int64_t)nodes_.size() - 1};
}

GraphBuilder::Ref GraphBuilder::add_app(NtId f, uint32_t arity) {
  nodes_.push_back(BNode{(int64_t)f.id, std::vector<Ref>(arity)});
  return Ref{(int64_t)nodes_.size() - 1};
}

void GraphBuilder::set_kid(Ref app_node, size_t pos, Ref kid) {
  if (app_node.is_handle()) throw Error("set_kid on handle ref");
  BNode& n = nodes_.at((size_t)app_node.v);
  n.kids.at(pos) = kid;
}

namespace {

// canonical preorder encoding of a cluster rooted at `root`; members carry
// discovery numbers, non-members appear as handle references
std::string encode_cluster(const std::vector<int64_t>& tags,
                           const std::vector<std::vector<int64_t>>& kids,  // >=0 member idx, <0 ~handle id
                           const std::set<int64_t>& members, int64_t root,
                           std::vector<int64_t>* discovery_order) {
  std::string out;
  std::map<int64_t, size_t> num;
  std::function<void(int64_t)> visit = [&](int64_t n) {
    num[n] = num.size();
    if (discovery_order) discovery_order->push_back(n);
    out += "N" + std::to_string(tags[(size_t)n]);
    for (int64_t k : kids[(size_t)n]) {
      if (k < 0 || !members.count(k)) {
        out += "|H" + std::to_string(k);
      } else if (auto it = num.find(k); it != num.end()) {
        out += "|B" + std::to_string(it->second);
      } else {
        out += "|D";
        visit(k);
      }
    }
    out += ";";
  };
  visit(root);
  return out;
}

}  // namespace

TermHandle GraphBuilder::intern(TermStore& store, Ref root) {
  if (root.is_handle()) return root.as_handle();

  // reachable scratch nodes
  std::vector<char> sreach(nodes_.size(), 0);
  std::vector<size_t> stack{(size_t)root.v};
  std::vector<TermHandle> handle_refs;
  while (!stack.empty()) {
    size_t n = stack.back();
    stack.pop_back();
    if (sreach[n]) continue;
    sreach[n] = 1;
    for (const Ref& k : nodes_[n].kids) {
      if (k.is_handle())
        handle_refs.push_back(k.as_handle());
      else if (k.v < 0 || (size_t)k.v >= nodes_.size())
        throw Error("GraphBuilder: unset child");
      else
        stack.push_back((size_t)k.v);
    }
  }

  // store nodes reachable from the handle refs
  std::set<TermHandle> rstore;
  for (TermHandle h : handle_refs) {
    std::vector<TermHandle> st{h};
    while (!st.empty()) {
      TermHandle x = st.back();
      st.pop_back();
      if (!rstore.insert(x).second) continue;
      for (TermHandle k : store.node(x).kids) st.push_back(k);
    }
  }

  // universe: scratch reachables first, then store reachables
  std::vector<size_t> scratch_ids;
  for (size_t i = 0; i < nodes_.size(); ++i)
    if (sreach[i]) scratch_ids.push_back(i);
  std::map<size_t, size_t> scratch_to_u;
  std::map<uint32_t, size_t> store_to_u;
  size_t U = 0;
  for (size_t s : scratch_ids) scratch_to_u[s] = U++;
  for (TermHandle h : rstore) store_to_u[h.id] = U++;

  std::vector<int64_t> tag(U);
  std::vector<std::vector<size_t>> ukids(U);
  std::vector<TermHandle> uhandle(U, TermHandle{});  // valid for store part
  auto resolve = [&](Ref r) -> size_t {
    if (r.is_handle()) return store_to_u.at(r.as_handle().id);
    return scratch_to_u.at((size_t)r.v);
  };
  for (size_t s : scratch_ids) {
    size_t u = scratch_to_u[s];
    tag[u] = nodes_[s].tag;
    for (const Ref& k : nodes_[s].kids) ukids[u].push_back(resolve(k));
  }
  for (auto [hid, u] : store_to_u) {
    const TermStore::Node& n = store.node(TermHandle{hid});
    tag[u] = n.tag;
    uhandle[u] = TermHandle{hid};
    for (TermHandle k : n.kids) ukids[u].push_back(store_to_u.at(k.id));
  }

  // partition refinement: initial blocks by tag, refine by child blocks
  std::vector<size_t> blk(U);
  {
    std::map<int64_t, size_t> by_tag;
    for (size_t u = 0; u < U; ++u) {
      auto [it, fresh] = by_tag.emplace(tag[u], by_tag.size());
      (void)fresh;
      blk[u] = it->second;
    }
  }
  for (;;) {
    std::map<std::vector<size_t>, size_t> sigs;
    std::vector<size_t> nblk(U);
    for (size_t u = 0; u < U; ++u) {
      std::vector<size_t> sig{blk[u]};
      for (size_t k : ukids[u]) sig.push_back(blk[k]);
      auto [it, fresh] = sigs.emplace(std::move(sig), sigs.size());
      (void)fresh;
      nblk[u] = it->second;
    }
    bool changed = false;
    for (size_t u = 0; u < U; ++u)
      if (nblk[u] != blk[u]) changed = true;
    size_t nb = sigs.size();
    blk = std::move(nblk);
    if (!changed) break;
    (void)nb;
  }

  size_t nblocks = 0;
  for (size_t u = 0; u < U; ++u) nblocks = std::max(nblocks, blk[u] + 1);

  // blocks containing a store node resolve to that handle
  std::vector<TermHandle> block_handle(nblocks, TermHandle{});
  std::vector<int64_t> block_member(nblocks, -1);  // a scratch universe member
  for (size_t u = 0; u < U; ++u) {
    if (uhandle[u].valid()) {
      if (block_handle[blk[u]].valid() && !(block_handle[blk[u]] == uhandle[u]))
        throw Error("store invariant broken: two store nodes in one block");
      block_handle[blk[u]] = uhandle[u];
    } else {
      block_member[blk[u]] = (int64_t)u;
    }
  }

  // quotient graph over unresolved blocks
  std::vector<size_t> new_blocks;
  for (size_t b = 0; b < nblocks; ++b)
    if (!block_handle[b].valid()) {
      if (block_member[b] < 0) throw Error("empty block");
      new_blocks.push_back(b);
    }

  // iterative folding: process blocks whose children are all resolved; when
  // blocked, fold one cyclic cluster (an SCC of the remaining block graph)
  auto block_kids = [&](size_t b) {
    std::vector<size_t> out;
    size_t u = (size_t)block_member[b];
    for (size_t k : ukids[u]) out.push_back(blk[k]);
    return out;
  };

  // Tarjan SCC over unresolved block graph
  std::map<size_t, int> index, low;
  std::map<size_t, bool> onstack;
  std::vector<size_t> tstack;
  std::vector<std::vector<size_t>> sccs;  // emitted children-first
  int counter = 0;
  std::function<void(size_t)> strongconnect = [&](size_t b) {
    index[b] = low[b] = counter++;
    tstack.push_back(b);
    onstack[b] = true;
    for (size_t k : block_kids(b)) {
      if (block_handle[k].valid()) continue;
      if (!index.count(k)) {
        strongconnect(k);
        low[b] = std::min(low[b], low[k]);
      } else if (onstack[k]) {
        low[b] = std::min(low[b], index[k]);
      }
    }
    if (low[b] == index[b]) {
      std::vector<size_t> scc;
      for (;;) {
        size_t x = tstack.back();
        tstack.pop_back();
        onstack[x] = false;
        scc.push_back(x);
        if (x == b) break;
      }
      sccs.push_back(std::move(scc));
    }
  };
  for (size_t b : new_blocks)
    if (!index.count(b)) strongconnect(b);

  for (const std::vector<size_t>& scc : sccs) {
    bool cyclic = false;
    std::set<size_t> in_scc(scc.begin(), scc.end());
    for (size_t b : scc)
      for (size_t k : block_kids(b))
        if (in_scc.count(k)) cyclic = true;

    if (!cyclic) {
      size_t b = scc[0];
      size_t u = (size_t)block_member[b];
      std::vector<TermHandle> kids;
      for (size_t k : ukids[u]) {
        if (!block_handle[blk[k]].valid()) throw Error("fold order violated");
        kids.push_back(block_handle[blk[k]]);
      }
      if (auto h = store.lookup(tag[u], kids))
        block_handle[b] = *h;
      else
        block_handle[b] = store.add_node(tag[u], std::move(kids));
      continue;
    }

    // cyclic cluster: canonical encoding lookup, else allocate
    std::vector<int64_t> ctags;
    std::vector<std::vector<int64_t>> ckids;
    std::map<size_t, int64_t> local;  // block -> local index
    for (size_t i = 0; i < scc.size(); ++i) local[scc[i]] = (int64_t)i;
    for (size_t b : scc) {
      size_t u = (size_t)block_member[b];
      ctags.push_back(tag[u]);
      std::vector<int64_t> row;
      for (size_t k : ukids[u]) {
        size_t kb = blk[k];
        if (in_scc.count(kb))
          row.push_back(local[kb]);
        else if (block_handle[kb].valid())
          row.push_back(-(int64_t)block_handle[kb].id - 2);
        else
          throw Error("fold order violated (cyclic)");
      }
      ckids.push_back(std::move(row));
    }
    std::set<int64_t> members;
    for (size_t i = 0; i < scc.size(); ++i) members.insert((int64_t)i);

    std::vector<int64_t> order;
    std::string enc = encode_cluster(ctags, ckids, members, 0, &order);
    auto hit = store.cyclic_index_.find(enc);
    if (hit != store.cyclic_index_.end()) {
      const std::vector<TermHandle>& hs = hit->second;
      for (size_t i = 0; i < order.size(); ++i) block_handle[scc[(size_t)order[i]]] = hs[i];
      continue;
    }
    // allocate fresh handles for the cluster, then fill children
    std::vector<TermHandle> fresh(scc.size());
    for (size_t i = 0; i < scc.size(); ++i) {
      uint32_t id = (uint32_t)store.nodes_.size();
      store.nodes_.push_back(TermStore::Node{ctags[i], {}});
      fresh[i] = TermHandle{id};
    }
    for (size_t i = 0; i < scc.size(); ++i) {
      std::vector<TermHandle> kids;
      for (int64_t k : ckids[i])
        kids.push_back(k >= 0 ? fresh[(size_t)k] : TermHandle{(uint32_t)(-k - 2)});
      store.dedup_.emplace(TermStore::key_of(ctags[i], kids), fresh[i].id);
      store.nodes_[fresh[i].id].kids = std::move(kids);
    }
    for (size_t i = 0; i < scc.size(); ++i) {
      std::vector<int64_t> ord;
      std::string e = encode_cluster(ctags, ckids, members, (int64_t)i, &ord);
      std::vector<TermHandle> hs;
      for (int64_t o : ord) hs.push_back(fresh[(size_t)o]);
      store.cyclic_index_.emplace(std::move(e), std::move(hs));
    }
    for (size_t i = 0; i < scc.size(); ++i) block_handle[scc[i]] = fresh[i];
  }

  return block_handle[blk[scratch_to_u.at((size_t)root.v)]];
}

// ---------------------------------------------------------------------------
// Substitutions
// ---------------------------------------------------------------------------

void Substitution::set(VarId v, TermHandle img, const TermStore& store) {
  if (v.index == 0) throw Error("variable indices start at 1");
  if (store.is_var(img) && store.var_id(img) == v) {
    map_.erase(v.index);
    return;
  }
  map_[v.index] = img;
}

std::optional<TermHandle> Substitution::image(VarId v) const {
  auto it = map_.find(v.index);
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

Substitution Substitution::without(VarId v) const {
  Substitution s = *this;
  s.map_.erase(v.index);
  return s;
}

std::vector<TermHandle> Substitution::range() const {
  std::vector<TermHandle> out;
  for (auto& [v, h] : map_) out.push_back(h);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

TermHandle apply_subst(TermStore& store, TermHandle t, const Substitution& s) {
  if (s.empty()) return t;
  if (store.is_var(t)) {
    if (auto img = s.image(store.var_id(t))) return *img;
    return t;
  }
  // nodes that reach a substituted variable leaf get copied, the rest stay
  std::vector<TermHandle> subs = store.subterms(t);
  std::set<TermHandle> hit;  // reaches a support leaf
  for (;;) {
    bool changed = false;
    for (TermHandle h : subs) {
      if (hit.count(h)) continue;
      bool r = false;
      if (store.is_var(h)) {
        r = s.image(store.var_id(h)).has_value();
      } else {
        for (TermHandle k : store.node(h).kids)
          if (hit.count(k)) r = true;
      }
      if (r) {
        hit.insert(h);
        changed = true;
      }
    }
    if (!changed) break;
  }
  if (!hit.count(t)) return t;

  GraphBuilder gb;
  std::map<TermHandle, GraphBuilder::Ref> copy;
  for (TermHandle h : subs) {
    if (!hit.count(h) || store.is_var(h)) continue;
    copy[h] = gb.add_app(store.root(h), (uint32_t)store.children(h).size());
  }
  auto ref_of = [&](TermHandle h) -> GraphBuilder::Ref {
    if (store.is_var(h)) {
      if (auto img = s.image(store.var_id(h))) return GraphBuilder::Ref::handle(*img);
      return GraphBuilder::Ref::handle(h);
    }
    auto it = copy.find(h);
    if (it != copy.end()) return it->second;
    return GraphBuilder::Ref::handle(h);
  };
  for (auto& [h, r] : copy) {
    auto kids = store.children(h);
    for (size_t i = 0; i < kids.size(); ++i) gb.set_kid(r, i, ref_of(kids[i]));
  }
  return gb.intern(store, copy.at(t));
}

Substitution compose(TermStore& store, const Substitution& s1, const Substitution& s2) {
  Substitution out;
  for (auto& [v, h] : s1.entries()) out.set(VarId{v}, apply_subst(store, h, s2), store);
  for (auto& [v, h] : s2.entries())
    if (!s1.image(VarId{v})) out.set(VarId{v}, h, store);
  return out;
}

TermHandle limit_subst(TermStore& store, VarId x, TermHandle h) {
  if (store.is_var(h)) return h;  // covers H = x and H = other variable
  if (!store.contains_var(h, x)) return h;

  // copy the part of H that reaches the x-leaf; arcs into x go to the new root
  std::vector<TermHandle> subs = store.subterms(h);
  std::set<TermHandle> hit;
  for (;;) {
    bool changed = false;
    for (TermHandle s : subs) {
      if (hit.count(s)) continue;
      bool r = false;
      if (store.is_var(s)) {
        r = store.var_id(s) == x;
      } else {
        for (TermHandle k : store.node(s).kids)
          if (hit.count(k)) r = true;
      }
      if (r) {
        hit.insert(s);
        changed = true;
      }
    }
    if (!changed) break;
  }

  GraphBuilder gb;
  std::map<TermHandle, GraphBuilder::Ref> copy;
  for (TermHandle s : subs) {
    if (!hit.count(s) || store.is_var(s)) continue;
    copy[s] = gb.add_app(store.root(s), (uint32_t)store.children(s).size());
  }
  GraphBuilder::Ref root = copy.at(h);
  auto ref_of = [&](TermHandle s) -> GraphBuilder::Ref {
    if (store.is_var(s) && store.var_id(s) == x) return root;
    auto it = copy.find(s);
    if (it != copy.end()) return it->second;
    return GraphBuilder::Ref::handle(s);
  };
  for (auto& [s, r] : copy) {
    auto kids = store.children(s);
    for (size_t i = 0; i < kids.size(); ++i) gb.set_kid(r, i, ref_of(kids[i]));
  }
  return gb.intern(store, root);
}

// ---------------------------------------------------------------------------
// Text syntax
// ---------------------------------------------------------------------------

namespace {

struct Lexer {
  std::string_view text;
  size_t pos = 0, line = 1, col = 1;

  void skip_ws() {
    while (pos < text.size() && (std::isspace((unsigned char)text[pos]))) {
      if (text[pos] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++pos;
    }
  }
  bool eof() {
    skip_ws();
    return pos >= text.size();
  }
  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }
  char take() {
    char c = peek();
    ++pos;
    ++col;
    return c;
  }
  void expect(char c) {
    if (peek() != c)
      throw ParseError(std::string("expected '") + c + "'", line, col);
    take();
  }
  std::string ident() {
    skip_ws();
    if (pos >= text.size() || !(std::isalpha((unsigned char)text[pos]) || text[pos] == '_'))
      throw ParseError("expected identifier", line, col);
    size_t start = pos;
    while (pos < text.size() &&
           (std::isalnum((unsigned char)text[pos]) || text[pos] == '_')) {
      ++pos;
      ++col;
    }
    return std::string(text.substr(start, pos - start));
  }
};

struct TermParser {
  TermStore& store;
  Lexer lx;
  bool allow_rec;
  GraphBuilder gb;

  GraphBuilder::Ref parse(std::map<std::string, GraphBuilder::Ref> env) {
    std::string id = lx.ident();
    if (id == "rec") {
      if (!allow_rec) throw ParseError("rec binder not allowed here", lx.line, lx.col);
      std::string name = lx.ident();
      lx.expect('.');
      // the binder denotes the body's root node; the body must have structure
      std::string head = lx.ident();
      if (head == "rec") throw ParseError("nested rec binder must name a term", lx.line, lx.col);
      if (auto v = var_of(head)) {
        // rec r . x_i denotes x_i (binder unused); rec r . r is rejected below
        return GraphBuilder::Ref::handle(store.var(*v));
      }
      if (env.count(head) || head == name) {
        if (head == name) throw ParseError("rec binder with no structure: " + name, lx.line, lx.col);
        return env.at(head);
      }
      auto nt = store.find_nonterminal(head);
      if (!nt) throw ParseError("undeclared symbol '" + head + "'", lx.line, lx.col);
      GraphBuilder::Ref node = gb.add_app(*nt, store.arity(*nt));
      env[name] = node;
      parse_args(node, *nt, env);
      return node;
    }
    if (auto v = var_of(id)) return GraphBuilder::Ref::handle(store.var(*v));
    if (env.count(id)) return env.at(id);
    auto nt = store.find_nonterminal(id);
    if (!nt) throw ParseError("undeclared symbol '" + id + "'", lx.line, lx.col);
    GraphBuilder::Ref node = gb.add_app(*nt, store.arity(*nt));
    parse_args(node, *nt, env);
    return node;
  }

  void parse_args(GraphBuilder::Ref node, NtId nt, std::map<std::string, GraphBuilder::Ref>& env) {
    uint32_t m = store.arity(nt);
    if (lx.peek() != '(') {
      if (m != 0)
        throw ParseError("symbol '" + store.name(nt) + "' needs " + std::to_string(m) +
                             " arguments",
                         lx.line, lx.col);
      return;
    }
    lx.take();
    if (m == 0) {  // B() allowed for atoms
      lx.expect(')');
      return;
    }
    for (uint32_t i = 0; i < m; ++i) {
      gb.set_kid(node, i, parse(env));
      if (i + 1 < m)
        lx.expect(',');
      else
        lx.expect(')');
    }
  }

  static std::optional<VarId> var_of(const std::string& id) {
    if (id.size() < 2 || id[0] != 'x') return std::nullopt;
    uint64_t n = 0;
    for (size_t i = 1; i < id.size(); ++i) {
      if (!std::isdigit((unsigned char)id[i])) return std::nullopt;
      n = n * 10 + (uint64_t)(id[i] - '0');
      if (n > 0xffffffffull) throw Error("variable index too large: " + id);
    }
    if (n == 0) return std::nullopt;  // x0 is just an identifier
    return VarId{(uint32_t)n};
  }
};

}  // namespace

TermHandle parse_term(TermStore& store, std::string_view text, bool allow_rec) {
  TermParser p{store, Lexer{text}, allow_rec, {}};
  GraphBuilder::Ref r = p.parse({});
  if (!p.lx.eof())
    throw ParseError("trailing input after term", p.lx.line, p.lx.col);
  return p.gb.intern(store, r);
}

std::string render_term(const TermStore& store, TermHandle t) {
  // nodes lying on a cycle need a rec binder at every fresh occurrence
  std::set<TermHandle> on_cycle;
  {
    std::vector<TermHandle> subs = store.subterms(t);
    for (TermHandle s : subs) {
      // s on a cycle iff s reachable from a child of s
      std::set<TermHandle> seen;
      std::vector<TermHandle> st(store.node(s).kids.begin(), store.node(s).kids.end());
      bool found = false;
      while (!st.empty() && !found) {
        TermHandle x = st.back();
        st.pop_back();
        if (!seen.insert(x).second) continue;
        if (x == s) {
          found = true;
          break;
        }
        for (TermHandle k : store.node(x).kids) st.push_back(k);
      }
      if (found) on_cycle.insert(s);
    }
  }
  std::string out;
  size_t counter = 0;
  std::map<TermHandle, std::string> path_name;
  std::function<void(TermHandle)> go = [&](TermHandle h) {
    if (auto it = path_name.find(h); it != path_name.end()) {
      out += it->second;
      return;
    }
    if (store.is_var(h)) {
      out += "x" + std::to_string(store.var_id(h).index);
      return;
    }
    bool binder = on_cycle.count(h) > 0;
    std::string name;
    if (binder) {
      name = "r" + std::to_string(++counter);
      out += "rec " + name + " . ";
      path_name[h] = name;
    }
    out += store.name(store.root(h));
    auto kids = store.children(h);
    if (!kids.empty()) {
      out += "(";
      for (size_t i = 0; i < kids.size(); ++i) {
        if (i) out += ", ";
        go(kids[i]);
      }
      out += ")";
    }
    if (binder) path_name.erase(h);
  };
  go(t);
  return out;
}

}  // namespace fog
