#include "doctest.h"

#include "treecaps/ast.hpp"
#include "treecaps/interp.hpp"

using namespace treecaps;

namespace {
void walk_types(const AstTree& t, NodeId id, std::vector<std::string>& out) {
  out.push_back(t.node(id).node_type);
  for (NodeId c : t.node(id).children) walk_types(t, c, out);
}
std::vector<std::string> preorder_types(const AstTree& t) {
  std::vector<std::string> out;
  walk_types(t, t.root, out);
  return out;
}
}  // namespace

TEST_CASE("parse: minimal programs") {
  AstTree t = parse_source("int main(){return 0;}");
  CHECK(t.size() == 5);
  CHECK(preorder_types(t) ==
        std::vector<std::string>{"FunctionDef", "ParamList", "Block", "Return", "IntLit"});

  AstTree t2 = parse_source("int main(){}");
  CHECK(t2.size() == 3);
  CHECK(preorder_types(t2) == std::vector<std::string>{"FunctionDef", "ParamList", "Block"});
}

TEST_CASE("parse: malformed input raises ParseError") {
  CHECK_THROWS_AS(parse_source("int main({"), ParseError);
  CHECK_THROWS_AS(parse_source("int main()"), ParseError);
  CHECK_THROWS_AS(parse_source(""), ParseError);
  CHECK_THROWS_AS(parse_source("int f(){ return 1 + ; }"), ParseError);
}

TEST_CASE("parse: determinism") {
  const std::string src = "int f(int a){ int b = a * 2; if (b > 3) { print(b); } return b; }";
  CHECK(trees_equal(parse_source(src), parse_source(src)));
}

TEST_CASE("json round-trip and schema errors") {
  AstTree t = parse_source("int main(){return 0;}");
  CHECK(trees_equal(json_to_ast(ast_to_json(t)), t));

  // dangling child id
  CHECK_THROWS_AS(
      json_to_ast(R"({"lang":"minic","root":0,"nodes":[
        {"id":0,"type":"FunctionDef","token":"f","children":[99]}]})"),
      SchemaError);
  // cycle: node 1 lists the root as a child
  CHECK_THROWS_AS(
      json_to_ast(R"({"lang":"minic","root":0,"nodes":[
        {"id":0,"type":"FunctionDef","token":"f","children":[1]},
        {"id":1,"type":"Block","token":null,"children":[0]}]})"),
      SchemaError);
}

TEST_CASE("build_vocab: min_count cutoff, UNK, determinism") {
  std::vector<ProgramRecord> ds(2);
  ds[0].ast = parse_source("int f(int i){ i = i + 1; return i; }");
  ds[1].ast = parse_source("int g(int i){ int zz = 1; return i; }");
  Vocabulary v = build_vocab(ds, 2);
  CHECK(v.tokens.at(0) == Vocabulary::kUnkToken);
  CHECK(v.token_index("i") > 0);
  CHECK(v.token_index("zz") == Vocabulary::kUnkIndex);  // single occurrence, below min_count
  Vocabulary v2 = build_vocab(ds, 2);
  CHECK(v.tokens == v2.tokens);
  CHECK(v.type_names == v2.type_names);
}

TEST_CASE("interpreter: hand-computed traces") {
  AstTree gcd = parse_source(
      "int gcd(int a, int b){ while (b != 0) { int t = b; b = a % b; a = t; } print(a); return a; }");
  Trace tr = interpret(gcd, {12, 18});
  CHECK(tr.trap == TrapKind::None);
  CHECK(tr.prints == std::vector<long long>{6});

  AstTree sum = parse_source(
      "int array_sum(int a[3]){ int s = 0; int i = 0; while (i < 3) { s = s + a[i]; i = i + 1; } "
      "print(s); return s; }");
  CHECK(input_arity(sum) == 3);
  Trace ts = interpret(sum, {1, 2, 3});
  CHECK(ts.prints == std::vector<long long>{6});
}

TEST_CASE("interpreter: traps are deterministic outcomes") {
  AstTree loop = parse_source("int f(){ while (1) { int x = 0; } return 0; }");
  CHECK(interpret(loop, {}).trap == TrapKind::StepBudget);

  AstTree div = parse_source("int f(int a){ return a / 0; }");
  CHECK(interpret(div, {3}).trap == TrapKind::DivByZero);

  AstTree oob = parse_source("int f(int a[2]){ return a[5]; }");
  CHECK(interpret(oob, {1, 2}).trap == TrapKind::OutOfBounds);
}

TEST_CASE("validate_tree rejects structural corruption") {
  AstTree t = parse_source("int main(){return 0;}");
  AstTree broken = t;
  broken.node(4).children.push_back(0);  // cycle back to root
  CHECK_THROWS_AS(validate_tree(broken), SchemaError);
}

TEST_CASE("manifest round-trip") {
  std::vector<ProgramRecord> recs(2);
  recs[0].id = "p0";
  recs[0].ast = parse_source("int f(){return 1;}");
  recs[0].label = 3;
  recs[0].split = "train";
  recs[0].test_inputs = {{1, 2}};
  recs[0].gold_traces = {"|exit=1"};
  recs[1].id = "p1";
  recs[1].ast = parse_source("int g(){return 2;}");
  recs[1].name_subwords = std::vector<std::string>{"array", "sum"};
  recs[1].split = "test";
  const std::string path = "/tmp/treecaps_manifest_test.jsonl";
  save_manifest(recs, path);
  std::vector<ProgramRecord> back = load_manifest(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "p0");
  CHECK(back[0].label == 3);
  CHECK(back[0].split == "train");
  CHECK(trees_equal(back[0].ast, recs[0].ast));
  CHECK(back[1].name_subwords == recs[1].name_subwords);
}
