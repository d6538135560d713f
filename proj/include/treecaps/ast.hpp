#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace treecaps {

using NodeId = int;

// Node types of the mini-C language. Tokens are carried on identifier,
// literal and operator nodes (plus the function name on FunctionDef).
struct AstNode {
  NodeId id = 0;
  std::string node_type;
  std::optional<std::string> token;
  std::vector<NodeId> children;
};

struct AstTree {
  NodeId root = 0;
  std::vector<AstNode> nodes;
  std::string source_lang = "minic";

  const AstNode& node(NodeId id) const { return nodes.at(static_cast<size_t>(id)); }
  AstNode& node(NodeId id) { return nodes.at(static_cast<size_t>(id)); }
  int size() const { return static_cast<int>(nodes.size()); }
};

// Thrown on malformed source or malformed AST documents.
struct ParseError : std::runtime_error {
  int line = 0, column = 0;
  ParseError(const std::string& msg, int line_, int col_)
      : std::runtime_error(msg + " at " + std::to_string(line_) + ":" + std::to_string(col_)),
        line(line_), column(col_) {}
};

struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Vocabulary {
  static constexpr int kUnkIndex = 0;
  static constexpr const char* kUnkToken = "<UNK>";

  std::vector<std::string> type_names;
  std::vector<std::string> tokens;  // tokens[0] == kUnkToken always
  int min_count = 2;

  std::unordered_map<std::string, int> type_index_;
  std::unordered_map<std::string, int> token_index_;

  void rebuild_index();
  int type_index(const std::string& t) const;   // throws on unknown type
  int token_index(const std::string& t) const;  // UNK for unknown tokens
  int num_types() const { return static_cast<int>(type_names.size()); }
  int num_tokens() const { return static_cast<int>(tokens.size()); }
};

struct ProgramRecord {
  std::string id;
  std::optional<std::string> source;
  AstTree ast;
  std::optional<int> label;
  std::optional<std::vector<std::string>> name_subwords;
  std::vector<std::vector<long long>> test_inputs;
  std::vector<std::string> gold_traces;  // serialized traces, parallel to test_inputs
  std::string split;                     // "train" / "val" / "test" / ""
};

// Parses mini-C source. Throws ParseError on malformed input.
AstTree parse_source(const std::string& text);

// Structural tree validation (connectivity, single root, acyclicity,
// unique parents). Throws SchemaError on violation.
void validate_tree(const AstTree& tree);

// Structural equality: same shape, node types and tokens under preorder
// traversal (node ids are not compared).
bool trees_equal(const AstTree& a, const AstTree& b);

// AST JSON schema:
// {"lang":"minic","root":0,"nodes":[{"id":..,"type":..,"token":..|null,"children":[..]}]}
std::string ast_to_json(const AstTree& tree);
AstTree json_to_ast(const std::string& text);

Vocabulary build_vocab(const std::vector<ProgramRecord>& dataset, int min_count = 2);

// Dataset manifest: JSON-lines, one ProgramRecord per line. "ast" may be an
// inline object or a path relative to the manifest file.
std::vector<ProgramRecord> load_manifest(const std::string& path);
void save_manifest(const std::vector<ProgramRecord>& records, const std::string& path);

}  // namespace treecaps
