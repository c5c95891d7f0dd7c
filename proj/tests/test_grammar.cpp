#include <doctest.h>

#include "fog/grammar.hpp"
#include "helpers.hpp"

using namespace fog;
using namespace fog::test;

namespace {

const char* kPaperGrammar = R"(
# the running two-rule example
nonterminal A 3
nonterminal B 0
nonterminal C 2
nonterminal D 2
action a
action b
rule A(x1,x2,x3) a C(D(x3,B),x2)
rule A(x1,x2,x3) b x1
)";

// the A rules of the paper plus popping rules that expose every position, so
// all sink words exist and the constants are well defined
const char* kPaperGrammarFull = R"(
nonterminal A 3
nonterminal B 0
nonterminal C 2
nonterminal D 2
action a
action b
rule A(x1,x2,x3) a C(D(x3,B),x2)
rule A(x1,x2,x3) b x1
rule C(x1,x2) b x1
rule C(x1,x2) a x2
rule D(x1,x2) b x1
rule D(x1,x2) a x2
)";

// A_k(x1) ->a A_{k-1}(A_{k-1}(x1)), ..., A_1(x1) ->a x1
std::string chain_grammar(int k) {
  std::string text = "action a\n";
  for (int i = 1; i <= k; ++i) text += "nonterminal A" + std::to_string(i) + " 1\n";
  for (int i = k; i >= 2; --i) {
    std::string lo = "A" + std::to_string(i - 1);
    text += "rule A" + std::to_string(i) + "(x1) a " + lo + "(" + lo + "(x1))\n";
  }
  text += "rule A1(x1) a x1\n";
  return text;
}

}  // namespace

TEST_SUITE_BEGIN("grammar");

TEST_CASE("parse the paper's rules, validate, dump round-trip") {
  Grammar g = parse_grammar(kPaperGrammar);
  CHECK(g.rules.size() == 2);
  CHECK(g.store.arity(g.rules[0].lhs) == 3);
  CHECK(render_term(g.store, g.rules[0].rhs) == "C(D(x3, B), x2)");
  auto diags = validate(g);
  for (const Diagnostic& d : diags) CHECK(d.severity == Diagnostic::Severity::Warning);
  Grammar g2 = parse_grammar(dump_grammar(g));
  CHECK(dump_grammar(g2) == dump_grammar(g));
}

TEST_CASE("parse rejections and validation findings") {
  CHECK_THROWS_AS(parse_grammar("rule A(x1) a x1\n"), ParseError);  // undeclared
  CHECK_THROWS_AS(
      parse_grammar("nonterminal A 1\naction a\nrule A(x2) a x2\n"),
      ParseError);  // lhs placeholders must be x1..xm
  // rec binder in a rule rhs is a parse-stage rejection
  CHECK_THROWS_AS(parse_grammar("nonterminal A 1\naction a\nrule A(x1) a rec r . A(r)\n"),
                  ParseError);
  // rhs variable out of range is a validation error
  Grammar g = parse_grammar("nonterminal A 1\nnonterminal B 2\naction a\nrule A(x1) a B(x1,x4)\n");
  bool found = false;
  for (const Diagnostic& d : validate(g))
    if (d.severity == Diagnostic::Severity::Error) found = true;
  CHECK(found);
}

TEST_CASE("step_rule follows the paper's transitions") {
  Grammar g = parse_grammar(kPaperGrammar);
  TermHandle e1 = parse_term(g.store, "A(D(x5, C(x2, B)), x5, B)");
  auto t1 = step_rule(g, e1, RuleId{0});
  REQUIRE(t1.has_value());
  CHECK(*t1 == parse_term(g.store, "C(D(B, B), x5)"));
  auto t2 = step_rule(g, e1, RuleId{1});
  REQUIRE(t2.has_value());
  CHECK(*t2 == parse_term(g.store, "D(x5, C(x2, B))"));
  // root mismatch and variables give nothing
  CHECK(!step_rule(g, *t1, RuleId{0}).has_value());
  CHECK(!step_rule(g, g.store.var(VarId{3}), RuleId{0}).has_value());
}

TEST_CASE("steps_action: variable self-loop and per-rule successors") {
  Grammar g = parse_grammar(kPaperGrammar);
  TermHandle x3 = g.store.var(VarId{3});
  auto moves = steps_action(g, x3);
  REQUIRE(moves.size() == 1);
  CHECK(moves[0].first == ActionLabel::variable(VarId{3}));
  CHECK(moves[0].second == x3);
  CHECK(g.label_name(moves[0].first) == "@x3");

  TermHandle e1 = parse_term(g.store, "A(D(x5, C(x2, B)), x5, B)");
  auto em = steps_action(g, e1);
  CHECK(em.size() == 2);
  // vars(successor) included in vars(source)
  for (auto& [a, s] : em) {
    for (VarId v : g.store.vars(s)) CHECK(g.store.contains_var(e1, v));
  }
}

TEST_CASE("path: empty word, iteration, substitution compatibility") {
  Grammar g = parse_grammar(kPaperGrammar);
  TermHandle t = parse_term(g.store, "A(x1, x2, x3)");
  CHECK(path(g, t, {}) == t);
  std::vector<RuleId> w{RuleId{0}};
  auto h = path(g, t, w);
  REQUIRE(h.has_value());
  // F ->w H implies F sigma ->w H sigma
  Substitution s;
  s.set(VarId{1}, parse_term(g.store, "B"), g.store);
  s.set(VarId{2}, parse_term(g.store, "D(B, B)"), g.store);
  auto hs = path(g, apply_subst(g.store, t, s), w);
  REQUIRE(hs.has_value());
  CHECK(*hs == apply_subst(g.store, *h, s));
}

TEST_CASE("sink words: direct rule, chain grammar recurrence, missing") {
  Grammar direct = parse_grammar("nonterminal A 1\naction a\nrule A(x1) a x1\n");
  SinkWords swd = sink_words(direct);
  CHECK(swd.length(direct.nonterminals[0], 1) == BigInt(1));

  // oracle: |w_k| = 1 + 2|w_{k-1}|, so |w_[A_k,1]| = 2^k - 1
  Grammar chain = parse_grammar(chain_grammar(6));
  SinkWords swc = sink_words(chain);
  BigInt expect = 1;
  for (int k = 1; k <= 6; ++k) {
    auto nt = chain.store.find_nonterminal("A" + std::to_string(k));
    REQUIRE(nt.has_value());
    CHECK(swc.length(*nt, 1) == expect);
    expect = 1 + 2 * expect;
  }
  // materialized word really sinks: path(A3(x1), w) = x1
  auto a3 = chain.store.find_nonterminal("A3");
  auto w = swc.word(chain, *a3, 1);
  REQUIRE(w.has_value());
  CHECK(w->size() == 7);
  TermHandle generic = chain.store.app(*a3, {chain.store.var(VarId{1})});
  CHECK(path(chain, generic, *w) == chain.store.var(VarId{1}));

  Grammar dead = parse_grammar("nonterminal A 1\naction a\nrule A(x1) a A(A(x1))\n");
  SinkWords swx = sink_words(dead);
  CHECK(!swx.length(dead.nonterminals[0], 1).has_value());
}

TEST_CASE("sink word minimality against breadth-first search") {
  // oracle: BFS over rule words from A(x1..xm) to x_i, <= 12 applications
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    Grammar g = random_grammar(rng);
    SinkWords sw = sink_words(g);
    for (NtId nt : g.nonterminals) {
      for (uint32_t i = 1; i <= g.store.arity(nt); ++i) {
        std::vector<TermHandle> kids;
        for (uint32_t j = 1; j <= g.store.arity(nt); ++j) kids.push_back(g.store.var(VarId{j}));
        TermHandle start = g.store.app(nt, kids);
        TermHandle target = g.store.var(VarId{i});
        std::optional<uint64_t> bfs;
        std::set<TermHandle> seen{start};
        std::vector<TermHandle> layer{start};
        for (uint64_t d = 1; d <= 12 && !bfs; ++d) {
          std::vector<TermHandle> next;
          for (TermHandle t : layer)
            for (uint32_t r = 0; r < g.rules.size() && !bfs; ++r)
              if (auto s = step_rule(g, t, RuleId{r})) {
                if (*s == target) bfs = d;
                if (seen.insert(*s).second) next.push_back(*s);
              }
          layer = std::move(next);
          if (layer.size() > 4000) break;  // keep the oracle cheap
        }
        auto len = sw.length(nt, i);
        if (bfs) {
          REQUIRE(len.has_value());
          CHECK(*len == BigInt(*bfs));
        } else if (len) {
          CHECK(*len > 12);
        }
      }
    }
  }
}

TEST_CASE("reduce_arities drops unexposable positions") {
  // A/2 never exposes position 2
  Grammar g = parse_grammar(
      "nonterminal A 2\nnonterminal B 0\naction a\naction b\n"
      "rule A(x1,x2) a A(A(x1,x2),x2)\nrule A(x1,x2) b x1\nrule B a B\n");
  Grammar r = reduce_arities(g);
  auto a = r.store.find_nonterminal("A");
  REQUIRE(a.has_value());
  CHECK(r.store.arity(*a) == 1);
  CHECK(sink_words(r).complete(r));
  // idempotence
  Grammar rr = reduce_arities(r);
  CHECK(dump_grammar(rr) == dump_grammar(r));
  // unchanged when already full
  Grammar full = parse_grammar(kPaperGrammarFull);
  CHECK(sink_words(full).complete(full));
  CHECK(dump_grammar(reduce_arities(full)) == dump_grammar(full));
  // the bare paper grammar has dead C and D: every position collapses
  Grammar bare = reduce_arities(parse_grammar(kPaperGrammar));
  CHECK(bare.store.arity(bare.store.find_nonterminal("A").value()) == 1);

  // bounded trace sets agree before/after (depth 8); encode A(B-ish, B-ish)
  // on both sides via matching start terms
  Grammar g2 = g;
  TermHandle before = parse_term(g2.store, "A(B, B)");
  Grammar r2 = r;
  TermHandle after = parse_term(r2.store, "A(B)");
  std::set<std::string> traces_before, traces_after;
  std::function<void(Grammar&, TermHandle, std::string, int, std::set<std::string>&)> walk =
      [&](Grammar& gr, TermHandle t, std::string pre, int d, std::set<std::string>& out) {
        out.insert(pre);
        if (d == 0) return;
        for (auto& [lab, s] : steps_action(gr, t))
          walk(gr, s, pre + gr.label_name(lab) + ".", d - 1, out);
      };
  walk(g2, before, "", 8, traces_before);
  walk(r2, after, "", 8, traces_after);
  CHECK(traces_before == traces_after);
}

TEST_CASE("constants: single popping rule and the chain family") {
  Grammar direct = parse_grammar("nonterminal A 1\naction a\nrule A(x1) a x1\n");
  GrammarConstants c = constants(direct);
  CHECK(c.M0 == 2);
  CHECK(c.maxruleheight == 0);
  CHECK(c.Mprime0 == 0);
  CHECK(c.M1 == 2);
  CHECK(c.sizeinc == 1);
  CHECK(c.arity_max == 1);
  CHECK(c.n0.value() == BigInt(1));

  // sizeinc of the paper's A example = pressize(C(D(x3,B),x2)) = 5
  // (oracle: distinct subterms C(..), D(..), B, x3, x2)
  Grammar paper = parse_grammar(kPaperGrammarFull);
  GrammarConstants cp = constants(paper);
  CHECK(cp.sizeinc == 5);

  // chain k = 10: M0 = 1024 (recurrence oracle: 1 + (2^10 - 1))
  Grammar chain = parse_grammar(chain_grammar(10));
  GrammarConstants cc = constants(chain);
  CHECK(cc.M0 == 1024);

  Grammar incomplete = parse_grammar("nonterminal A 1\naction a\nrule A(x1) a A(A(x1))\n");
  CHECK_THROWS_AS(constants(incomplete), Error);
}

TEST_CASE("path classification and the last non-sink split") {
  // pushing grammar: S grows, pops via b; M0 = 2
  Grammar g = parse_grammar(
      "nonterminal S 1\nnonterminal N 1\naction a\naction b\naction c\n"
      "rule S(x1) a S(N(x1))\nrule S(x1) b x1\nrule N(x1) c x1\n");
  GrammarConstants c = constants(g);
  uint64_t m0 = (uint64_t)c.M0;
  CHECK(m0 == 2);

  TermHandle s0 = parse_term(g.store, "S(N(N(x1)))");
  // w = aa from S(..): every window is root-performable: not sinking
  std::vector<RuleId> aa{RuleId{0}, RuleId{0}};
  PathClass pc = classify_path(g, s0, aa, m0);
  CHECK(!pc.sinking);
  CHECK(pc.first_nonsink_start == 0);

  // |w| < M0 is vacuously sinking
  std::vector<RuleId> just_b{RuleId{1}};
  CHECK(classify_path(g, s0, just_b, m0).sinking);

  // a sink word is sinking window by window
  SinkWords sw = sink_words(g);
  auto sword = sw.word(g, g.store.find_nonterminal("S").value(), 1);
  REQUIRE(sword.has_value());
  CHECK(classify_path(g, s0, *sword, m0).sinking);

  // split of a shortest non-sinking path: aab from S(x9)
  TermHandle t = parse_term(g.store, "S(x9)");
  std::vector<RuleId> aab{RuleId{0}, RuleId{0}, RuleId{1}};
  SplitResult split = split_last_nonsink(g, t, aab, m0);
  TermHandle target = *path(g, t, aab);
  CHECK(apply_subst(g.store, split.head, split.sigma) == target);
  CHECK(g.store.depth(split.head).value_or(~0ull) <= (uint64_t)c.Mprime0);
  CHECK_THROWS_AS(split_last_nonsink(g, s0, just_b, m0), Error);
}

TEST_CASE("substitution compatibility of paths on random grammars") {
  Rng rng(31337);
  for (int trial = 0; trial < 30; ++trial) {
    Grammar g = random_grammar(rng);
    std::vector<NtId> nts = g.nonterminals;
    TermHandle t = random_finite_term(g.store, nts, rng, 2, 3);
    Substitution s;
    s.set(VarId{1}, random_finite_term(g.store, nts, rng, 0, 2), g.store);
    s.set(VarId{2}, random_finite_term(g.store, nts, rng, 0, 2), g.store);
    std::vector<RuleId> w;
    TermHandle cur = t;
    for (int i = 0; i < 4; ++i) {
      bool stepped = false;
      for (uint32_t r = 0; r < g.rules.size(); ++r)
        if (auto nx = step_rule(g, cur, RuleId{r})) {
          w.push_back(RuleId{r});
          cur = *nx;
          stepped = true;
          break;
        }
      if (!stepped) break;
    }
    auto h = path(g, t, w);
    REQUIRE(h.has_value());
    auto hs = path(g, apply_subst(g.store, t, s), w);
    REQUIRE(hs.has_value());
    CHECK(*hs == apply_subst(g.store, *h, s));
  }
}

TEST_SUITE_END();
