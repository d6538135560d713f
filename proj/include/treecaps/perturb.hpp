#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "treecaps/ast.hpp"

namespace treecaps {

enum class TransformKind { VariableRenaming, UnusedStatement, PermuteStatement, Identity };

TransformKind transform_kind_from_string(const std::string& s);
std::string to_string(TransformKind k);

struct TransformResult {
  AstTree tree;
  bool applied = false;
  std::string site;  // human-readable description of the chosen site
  std::uint64_t seed = 0;
};

// VN: renames one uniformly chosen declared variable to a fresh name drawn
// uniformly from `name_pool`, excluding every identifier visible in the
// enclosing function. Token-only change; tree shape is untouched.
TransformResult rename_variable(const AstTree& tree, const std::vector<std::string>& name_pool,
                                std::uint64_t seed);

// US: inserts `str u_k = "unused";` (3 nodes: Decl, Ident, StrLit) at a
// uniformly chosen position of a uniformly chosen block.
TransformResult insert_unused(const AstTree& tree, std::uint64_t seed);

// PS: swaps one uniformly chosen adjacent independent statement pair.
TransformResult permute_statements(const AstTree& tree, std::uint64_t seed);

// Conservative statement independence: disjoint def/use/def sets, and
// neither side contains prints, calls, or control flow. Array accesses
// def/use the whole array.
bool independent(const AstTree& tree, NodeId stmt_a, NodeId stmt_b);

TransformResult apply_transform(const AstTree& tree, TransformKind kind,
                                const std::vector<std::string>& name_pool, std::uint64_t seed);

struct RobustnessReport {
  TransformKind kind = TransformKind::Identity;
  double ppc = 0.0;  // percentage of predictions changed, over applied transforms
  int changed = 0;
  int unchanged = 0;
  int inapplicable = 0;
  struct Entry {
    std::string id;
    int before = -1, after = -1;
    bool applied = false;
  };
  std::vector<Entry> entries;

  std::string to_json() const;
};

RobustnessReport ppc(const std::function<int(const AstTree&)>& model_fn,
                     const std::vector<ProgramRecord>& programs, TransformKind kind,
                     const std::vector<std::string>& name_pool, std::uint64_t seed);

}  // namespace treecaps
