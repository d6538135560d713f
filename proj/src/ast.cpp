#include "treecaps/ast.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace treecaps {

namespace {

using nlohmann::json;

// ---------------------------------------------------------------- lexer

enum class TokKind { Ident, Int, Str, Punct, Kw, Eof };

struct Tok {
  TokKind kind;
  std::string text;
  int line, col;
};

const char* kKeywords[] = {"int", "str", "if", "else", "while", "for", "return", "print"};

bool is_keyword(const std::string& s) {
  for (const char* k : kKeywords)
    if (s == k) return true;
  return false;
}

struct Lexer {
  const std::string& src;
  size_t pos = 0;
  int line = 1, col = 1;

  explicit Lexer(const std::string& s) : src(s) {}

  [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, line, col); }

  void advance() {
    if (src[pos] == '\n') { line++; col = 1; } else { col++; }
    pos++;
  }

  void skip_ws() {
    while (pos < src.size()) {
      char c = src[pos];
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else if (c == '/' && pos + 1 < src.size() && src[pos + 1] == '/') {
        while (pos < src.size() && src[pos] != '\n') advance();
      } else {
        break;
      }
    }
  }

  Tok next() {
    skip_ws();
    if (pos >= src.size()) return {TokKind::Eof, "", line, col};
    int l = line, c = col;
    char ch = src[pos];
    if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
      std::string s;
      while (pos < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_')) {
        s += src[pos];
        advance();
      }
      return {is_keyword(s) ? TokKind::Kw : TokKind::Ident, s, l, c};
    }
    if (std::isdigit(static_cast<unsigned char>(ch))) {
      std::string s;
      while (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos]))) {
        s += src[pos];
        advance();
      }
      return {TokKind::Int, s, l, c};
    }
    if (ch == '"') {
      advance();
      std::string s;
      while (pos < src.size() && src[pos] != '"') {
        if (src[pos] == '\n') fail("unterminated string literal");
        s += src[pos];
        advance();
      }
      if (pos >= src.size()) fail("unterminated string literal");
      advance();
      return {TokKind::Str, s, l, c};
    }
    // multi-char operators first
    static const char* two[] = {"==", "!=", "<=", ">=", "&&", "||"};
    if (pos + 1 < src.size()) {
      std::string p = src.substr(pos, 2);
      for (const char* t : two)
        if (p == t) {
          advance();
          advance();
          return {TokKind::Punct, p, l, c};
        }
    }
    static const std::string single = "+-*/%<>!=(){}[],;";
    if (single.find(ch) != std::string::npos) {
      advance();
      return {TokKind::Punct, std::string(1, ch), l, c};
    }
    fail(std::string("unexpected character '") + ch + "'");
  }
};

// ------------------------------------------------------------- parser

struct Parser {
  Lexer lex;
  Tok cur;
  AstTree tree;

  explicit Parser(const std::string& s) : lex(s) { cur = lex.next(); }

  [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, cur.line, cur.col); }

  void bump() { cur = lex.next(); }

  bool at_punct(const std::string& p) const { return cur.kind == TokKind::Punct && cur.text == p; }
  bool at_kw(const std::string& k) const { return cur.kind == TokKind::Kw && cur.text == k; }

  void expect_punct(const std::string& p) {
    if (!at_punct(p)) fail("expected '" + p + "', got '" + cur.text + "'");
    bump();
  }
  void expect_kw(const std::string& k) {
    if (!at_kw(k)) fail("expected '" + k + "'");
    bump();
  }
  std::string expect_ident() {
    if (cur.kind != TokKind::Ident) fail("expected identifier, got '" + cur.text + "'");
    std::string s = cur.text;
    bump();
    return s;
  }

  NodeId make(const std::string& type, std::optional<std::string> token = std::nullopt) {
    NodeId id = static_cast<NodeId>(tree.nodes.size());
    tree.nodes.push_back({id, type, std::move(token), {}});
    return id;
  }
  void attach(NodeId parent, NodeId child) { tree.node(parent).children.push_back(child); }

  AstTree parse_program() {
    NodeId first = parse_function();
    tree.root = first;
    if (cur.kind != TokKind::Eof) {
      // multiple functions: wrap under a Program node
      NodeId prog = make("Program");
      attach(prog, first);
      while (cur.kind != TokKind::Eof) attach(prog, parse_function());
      tree.root = prog;
    }
    return std::move(tree);
  }

  NodeId parse_function() {
    expect_kw("int");
    std::string name = expect_ident();
    NodeId fn = make("FunctionDef", name);
    expect_punct("(");
    NodeId params = make("ParamList");
    attach(fn, params);
    if (!at_punct(")")) {
      attach(params, parse_param());
      while (at_punct(",")) {
        bump();
        attach(params, parse_param());
      }
    }
    expect_punct(")");
    attach(fn, parse_block());
    return fn;
  }

  NodeId parse_param() {
    expect_kw("int");
    std::string name = expect_ident();
    NodeId p = make("Param");
    attach(p, make("Ident", name));
    if (at_punct("[")) {
      bump();
      if (cur.kind != TokKind::Int) fail("expected array size literal");
      attach(p, make("IntLit", cur.text));
      bump();
      expect_punct("]");
    }
    return p;
  }

  NodeId parse_block() {
    expect_punct("{");
    NodeId b = make("Block");
    while (!at_punct("}")) {
      if (cur.kind == TokKind::Eof) fail("unterminated block");
      attach(b, parse_stmt());
    }
    bump();
    return b;
  }

  NodeId parse_stmt() {
    if (at_kw("int")) {
      NodeId d = parse_decl_no_semi();
      expect_punct(";");
      return d;
    }
    if (at_kw("str")) {
      bump();
      std::string name = expect_ident();
      expect_punct("=");
      if (cur.kind != TokKind::Str) fail("expected string literal");
      NodeId d = make("Decl");
      attach(d, make("Ident", name));
      attach(d, make("StrLit", cur.text));
      bump();
      expect_punct(";");
      return d;
    }
    if (at_kw("if")) {
      bump();
      expect_punct("(");
      NodeId n = make("If");
      attach(n, parse_expr());
      expect_punct(")");
      attach(n, parse_block());
      if (at_kw("else")) {
        bump();
        attach(n, parse_block());
      }
      return n;
    }
    if (at_kw("while")) {
      bump();
      expect_punct("(");
      NodeId n = make("While");
      attach(n, parse_expr());
      expect_punct(")");
      attach(n, parse_block());
      return n;
    }
    if (at_kw("for")) {
      bump();
      expect_punct("(");
      NodeId n = make("For");
      attach(n, at_punct(";") ? make("Empty") : parse_simple_stmt());
      expect_punct(";");
      attach(n, at_punct(";") ? make("Empty") : parse_expr());
      expect_punct(";");
      attach(n, at_punct(")") ? make("Empty") : parse_simple_stmt());
      expect_punct(")");
      attach(n, parse_block());
      return n;
    }
    if (at_kw("return")) {
      bump();
      NodeId n = make("Return");
      if (!at_punct(";")) attach(n, parse_expr());
      expect_punct(";");
      return n;
    }
    if (at_kw("print")) {
      bump();
      expect_punct("(");
      NodeId n = make("Print");
      attach(n, parse_expr());
      expect_punct(")");
      expect_punct(";");
      return n;
    }
    NodeId a = parse_assign_no_semi();
    expect_punct(";");
    return a;
  }

  // declaration or assignment without trailing ';' (for-header position)
  NodeId parse_simple_stmt() {
    if (at_kw("int")) return parse_decl_no_semi();
    return parse_assign_no_semi();
  }

  NodeId parse_decl_no_semi() {
    expect_kw("int");
    std::string name = expect_ident();
    if (at_punct("[")) {
      bump();
      if (cur.kind != TokKind::Int) fail("expected array size literal");
      NodeId d = make("ArrayDecl");
      attach(d, make("Ident", name));
      attach(d, make("IntLit", cur.text));
      bump();
      expect_punct("]");
      return d;
    }
    NodeId d = make("Decl");
    attach(d, make("Ident", name));
    if (at_punct("=")) {
      bump();
      attach(d, parse_expr());
    }
    return d;
  }

  NodeId parse_assign_no_semi() {
    if (cur.kind != TokKind::Ident) fail("expected statement, got '" + cur.text + "'");
    std::string name = expect_ident();
    NodeId target;
    if (at_punct("[")) {
      bump();
      target = make("Index");
      attach(target, make("Ident", name));
      attach(target, parse_expr());
      expect_punct("]");
    } else {
      target = make("Ident", name);
    }
    NodeId a = make("Assign");
    attach(a, target);
    expect_punct("=");
    attach(a, parse_expr());
    return a;
  }

  // precedence climbing: || > && > ==/!= > relational > additive > multiplicative > unary
  NodeId parse_expr() { return parse_or(); }

  NodeId parse_binop_level(NodeId (Parser::*sub)(), std::initializer_list<const char*> ops) {
    NodeId lhs = (this->*sub)();
    for (;;) {
      bool matched = false;
      for (const char* op : ops) {
        if (at_punct(op)) {
          bump();
          NodeId rhs = (this->*sub)();
          NodeId n = make("BinOp", std::string(op));
          attach(n, lhs);
          attach(n, rhs);
          lhs = n;
          matched = true;
          break;
        }
      }
      if (!matched) return lhs;
    }
  }

  NodeId parse_or() { return parse_binop_level(&Parser::parse_and, {"||"}); }
  NodeId parse_and() { return parse_binop_level(&Parser::parse_eq, {"&&"}); }
  NodeId parse_eq() { return parse_binop_level(&Parser::parse_rel, {"==", "!="}); }
  NodeId parse_rel() { return parse_binop_level(&Parser::parse_add, {"<=", ">=", "<", ">"}); }
  NodeId parse_add() { return parse_binop_level(&Parser::parse_mul, {"+", "-"}); }
  NodeId parse_mul() { return parse_binop_level(&Parser::parse_unary, {"*", "/", "%"}); }

  NodeId parse_unary() {
    if (at_punct("-") || at_punct("!")) {
      std::string op = cur.text;
      bump();
      NodeId n = make("UnaryOp", op);
      attach(n, parse_unary());
      return n;
    }
    return parse_primary();
  }

  NodeId parse_primary() {
    if (at_punct("(")) {
      bump();
      NodeId e = parse_expr();
      expect_punct(")");
      return e;
    }
    if (cur.kind == TokKind::Int) {
      NodeId n = make("IntLit", cur.text);
      bump();
      return n;
    }
    if (cur.kind == TokKind::Ident) {
      std::string name = expect_ident();
      if (at_punct("(")) {
        bump();
        NodeId call = make("Call");
        attach(call, make("Ident", name));
        if (!at_punct(")")) {
          attach(call, parse_expr());
          while (at_punct(",")) {
            bump();
            attach(call, parse_expr());
          }
        }
        expect_punct(")");
        return call;
      }
      if (at_punct("[")) {
        bump();
        NodeId idx = make("Index");
        attach(idx, make("Ident", name));
        attach(idx, parse_expr());
        expect_punct("]");
        return idx;
      }
      return make("Ident", name);
    }
    fail("expected expression, got '" + cur.text + "'");
  }
};

void preorder_collect(const AstTree& t, NodeId id, std::vector<NodeId>& out) {
  out.push_back(id);
  for (NodeId c : t.node(id).children) preorder_collect(t, c, out);
}

}  // namespace

AstTree parse_source(const std::string& text) {
  Parser p(text);
  AstTree t = p.parse_program();
  validate_tree(t);
  return t;
}

void validate_tree(const AstTree& tree) {
  const int n = tree.size();
  if (n < 1) throw SchemaError("empty tree");
  if (tree.root < 0 || tree.root >= n) throw SchemaError("root id out of range");
  std::vector<int> parents(static_cast<size_t>(n), -1);
  for (const AstNode& node : tree.nodes) {
    for (NodeId c : node.children) {
      if (c < 0 || c >= n) throw SchemaError("dangling child id " + std::to_string(c));
      if (parents[static_cast<size_t>(c)] != -1)
        throw SchemaError("node " + std::to_string(c) + " has multiple parents");
      parents[static_cast<size_t>(c)] = node.id;
    }
  }
  if (parents[static_cast<size_t>(tree.root)] != -1) throw SchemaError("cycle detected: root has a parent");
  // reachability from root; any unreached node means disconnection, a
  // reached count mismatch with an in-degree-consistent graph means a cycle
  std::vector<char> seen(static_cast<size_t>(n), 0);
  std::vector<NodeId> stack{tree.root};
  int reached = 0;
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    if (seen[static_cast<size_t>(id)]) throw SchemaError("cycle detected");
    seen[static_cast<size_t>(id)] = 1;
    reached++;
    for (NodeId c : tree.node(id).children) stack.push_back(c);
  }
  if (reached != n) throw SchemaError("tree not connected");
  for (int i = 0; i < n; ++i)
    if (tree.nodes[static_cast<size_t>(i)].id != i) throw SchemaError("node id mismatch at index " + std::to_string(i));
}

bool trees_equal(const AstTree& a, const AstTree& b) {
  if (a.size() != b.size()) return false;
  std::vector<NodeId> pa, pb;
  preorder_collect(a, a.root, pa);
  preorder_collect(b, b.root, pb);
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i) {
    const AstNode& na = a.node(pa[i]);
    const AstNode& nb = b.node(pb[i]);
    if (na.node_type != nb.node_type || na.token != nb.token ||
        na.children.size() != nb.children.size())
      return false;
  }
  return true;
}

std::string ast_to_json(const AstTree& tree) {
  validate_tree(tree);
  json doc;
  doc["lang"] = tree.source_lang;
  doc["root"] = tree.root;
  json nodes = json::array();
  for (const AstNode& n : tree.nodes) {
    json jn;
    jn["id"] = n.id;
    jn["type"] = n.node_type;
    if (n.token)
      jn["token"] = *n.token;
    else
      jn["token"] = nullptr;
    jn["children"] = n.children;
    nodes.push_back(std::move(jn));
  }
  doc["nodes"] = std::move(nodes);
  return doc.dump();
}

namespace {
AstTree ast_from_json_obj(const json& doc) {
  AstTree t;
  if (!doc.is_object() || !doc.contains("root") || !doc.contains("nodes"))
    throw SchemaError("AST document missing root/nodes");
  t.source_lang = doc.value("lang", "minic");
  t.root = doc.at("root").get<NodeId>();
  for (const json& jn : doc.at("nodes")) {
    AstNode n;
    n.id = jn.at("id").get<NodeId>();
    n.node_type = jn.at("type").get<std::string>();
    if (jn.contains("token") && !jn.at("token").is_null())
      n.token = jn.at("token").get<std::string>();
    n.children = jn.at("children").get<std::vector<NodeId>>();
    t.nodes.push_back(std::move(n));
  }
  validate_tree(t);
  return t;
}
}  // namespace

AstTree json_to_ast(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed JSON: ") + e.what());
  }
  try {
    return ast_from_json_obj(doc);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("AST schema violation: ") + e.what());
  }
}

// ------------------------------------------------------------ vocabulary

void Vocabulary::rebuild_index() {
  type_index_.clear();
  token_index_.clear();
  for (size_t i = 0; i < type_names.size(); ++i) type_index_[type_names[i]] = static_cast<int>(i);
  for (size_t i = 0; i < tokens.size(); ++i) token_index_[tokens[i]] = static_cast<int>(i);
}

int Vocabulary::type_index(const std::string& t) const {
  auto it = type_index_.find(t);
  if (it == type_index_.end()) throw SchemaError("unknown node type: " + t);
  return it->second;
}

int Vocabulary::token_index(const std::string& t) const {
  auto it = token_index_.find(t);
  return it == token_index_.end() ? kUnkIndex : it->second;
}

Vocabulary build_vocab(const std::vector<ProgramRecord>& dataset, int min_count) {
  if (dataset.empty()) throw SchemaError("build_vocab: empty dataset");
  std::map<std::string, long long> type_counts, token_counts;
  for (const ProgramRecord& r : dataset) {
    for (const AstNode& n : r.ast.nodes) {
      type_counts[n.node_type]++;
      if (n.token) token_counts[*n.token]++;
    }
  }
  auto sorted_by_freq = [](const std::map<std::string, long long>& counts) {
    std::vector<std::pair<std::string, long long>> v(counts.begin(), counts.end());
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    return v;
  };
  Vocabulary vocab;
  vocab.min_count = min_count;
  for (const auto& [name, cnt] : sorted_by_freq(type_counts)) vocab.type_names.push_back(name);
  vocab.tokens.push_back(Vocabulary::kUnkToken);
  for (const auto& [tok, cnt] : sorted_by_freq(token_counts))
    if (cnt >= min_count) vocab.tokens.push_back(tok);
  vocab.rebuild_index();
  return vocab;
}

// -------------------------------------------------------------- manifest

namespace {
json record_to_json(const ProgramRecord& r) {
  json j;
  j["id"] = r.id;
  if (r.source) j["source"] = *r.source;
  j["ast"] = json::parse(ast_to_json(r.ast));
  if (r.label) j["label"] = *r.label;
  if (r.name_subwords) j["name_subwords"] = *r.name_subwords;
  if (!r.test_inputs.empty()) j["test_inputs"] = r.test_inputs;
  if (!r.gold_traces.empty()) j["gold_traces"] = r.gold_traces;
  if (!r.split.empty()) j["split"] = r.split;
  return j;
}

ProgramRecord record_from_json(const json& j, const std::filesystem::path& base_dir) {
  ProgramRecord r;
  r.id = j.at("id").get<std::string>();
  if (j.contains("source") && !j.at("source").is_null()) r.source = j.at("source").get<std::string>();
  const json& ja = j.at("ast");
  if (ja.is_string()) {
    std::ifstream in(base_dir / ja.get<std::string>());
    if (!in) throw SchemaError("cannot open AST file " + ja.get<std::string>());
    std::stringstream ss;
    ss << in.rdbuf();
    r.ast = json_to_ast(ss.str());
  } else {
    r.ast = ast_from_json_obj(ja);
  }
  if (j.contains("label") && !j.at("label").is_null()) r.label = j.at("label").get<int>();
  if (j.contains("name_subwords") && !j.at("name_subwords").is_null())
    r.name_subwords = j.at("name_subwords").get<std::vector<std::string>>();
  if (j.contains("test_inputs"))
    r.test_inputs = j.at("test_inputs").get<std::vector<std::vector<long long>>>();
  if (j.contains("gold_traces")) r.gold_traces = j.at("gold_traces").get<std::vector<std::string>>();
  if (j.contains("split")) r.split = j.at("split").get<std::string>();
  if (r.label.has_value() && r.name_subwords.has_value())
    throw SchemaError("record " + r.id + " has both label and name_subwords");
  return r;
}
}  // namespace

std::vector<ProgramRecord> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open manifest " + path);
  std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<ProgramRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(json::parse(line), base));
    } catch (const json::exception& e) {
      throw SchemaError("manifest " + path + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_manifest(const std::vector<ProgramRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write manifest " + path);
  for (const ProgramRecord& r : records) out << record_to_json(r).dump() << "\n";
}

}  // namespace treecaps
