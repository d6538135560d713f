#include "treecaps/perturb.hpp"

#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace treecaps {

TransformKind transform_kind_from_string(const std::string& s) {
  if (s == "vn" || s == "variable_renaming") return TransformKind::VariableRenaming;
  if (s == "us" || s == "unused_statement") return TransformKind::UnusedStatement;
  if (s == "ps" || s == "permute_statement") return TransformKind::PermuteStatement;
  if (s == "identity") return TransformKind::Identity;
  throw std::invalid_argument("unknown transform kind: " + s);
}

std::string to_string(TransformKind k) {
  switch (k) {
    case TransformKind::VariableRenaming: return "variable_renaming";
    case TransformKind::UnusedStatement: return "unused_statement";
    case TransformKind::PermuteStatement: return "permute_statement";
    case TransformKind::Identity: return "identity";
  }
  return "?";
}

namespace {

std::vector<NodeId> function_nodes(const AstTree& tree) {
  std::vector<NodeId> fns;
  const AstNode& root = tree.node(tree.root);
  if (root.node_type == "FunctionDef") fns.push_back(root.id);
  else if (root.node_type == "Program")
    for (NodeId c : root.children)
      if (tree.node(c).node_type == "FunctionDef") fns.push_back(c);
  return fns;
}

void collect_subtree(const AstTree& tree, NodeId id, std::vector<NodeId>& out) {
  out.push_back(id);
  for (NodeId c : tree.node(id).children) collect_subtree(tree, c, out);
}

// declared variable names of a function, in preorder
std::vector<std::string> declared_vars(const AstTree& tree, NodeId fn) {
  std::vector<NodeId> subtree;
  collect_subtree(tree, fn, subtree);
  std::vector<std::string> vars;
  std::set<std::string> seen;
  for (NodeId id : subtree) {
    const AstNode& n = tree.node(id);
    if (n.node_type == "Param" || n.node_type == "Decl" || n.node_type == "ArrayDecl") {
      const std::string& name = *tree.node(n.children.at(0)).token;
      if (seen.insert(name).second) vars.push_back(name);
    }
  }
  return vars;
}

std::set<std::string> visible_identifiers(const AstTree& tree, NodeId fn) {
  std::vector<NodeId> subtree;
  collect_subtree(tree, fn, subtree);
  std::set<std::string> names;
  for (NodeId id : subtree) {
    const AstNode& n = tree.node(id);
    if (n.node_type == "Ident" && n.token) names.insert(*n.token);
  }
  for (NodeId f : function_nodes(tree))
    if (tree.node(f).token) names.insert(*tree.node(f).token);
  return names;
}

std::set<std::string> all_tokens(const AstTree& tree) {
  std::set<std::string> out;
  for (const AstNode& n : tree.nodes)
    if (n.token) out.insert(*n.token);
  return out;
}

std::vector<NodeId> block_nodes(const AstTree& tree) {
  std::vector<NodeId> blocks;
  for (const AstNode& n : tree.nodes)
    if (n.node_type == "Block") blocks.push_back(n.id);
  return blocks;
}

struct Effects {
  std::set<std::string> defs, uses;
  bool impure = false;  // prints, calls, or control flow anywhere inside
};

void expr_uses(const AstTree& tree, NodeId id, Effects& e) {
  const AstNode& n = tree.node(id);
  if (n.node_type == "Ident") {
    e.uses.insert(*n.token);
  } else if (n.node_type == "Call" || n.node_type == "Print") {
    e.impure = true;
  }
  for (NodeId c : n.children) expr_uses(tree, c, e);
}

Effects statement_effects(const AstTree& tree, NodeId id) {
  Effects e;
  const AstNode& s = tree.node(id);
  const std::string& t = s.node_type;
  if (t == "Decl") {
    e.defs.insert(*tree.node(s.children.at(0)).token);
    if (s.children.size() == 2 && tree.node(s.children.at(1)).node_type != "StrLit")
      expr_uses(tree, s.children.at(1), e);
  } else if (t == "ArrayDecl") {
    e.defs.insert(*tree.node(s.children.at(0)).token);
  } else if (t == "Assign") {
    const AstNode& target = tree.node(s.children.at(0));
    if (target.node_type == "Ident") {
      e.defs.insert(*target.token);
    } else {  // array element write: def and use of the whole array
      const std::string& arr = *tree.node(target.children.at(0)).token;
      e.defs.insert(arr);
      e.uses.insert(arr);
      expr_uses(tree, target.children.at(1), e);
    }
    expr_uses(tree, s.children.at(1), e);
  } else {
    e.impure = true;  // If / While / For / Return / Print and anything else
  }
  return e;
}

bool sets_disjoint(const std::set<std::string>& a, const std::set<std::string>& b) {
  for (const std::string& x : a)
    if (b.count(x)) return false;
  return true;
}

}  // namespace

bool independent(const AstTree& tree, NodeId stmt_a, NodeId stmt_b) {
  Effects a = statement_effects(tree, stmt_a);
  Effects b = statement_effects(tree, stmt_b);
  if (a.impure || b.impure) return false;
  return sets_disjoint(a.defs, b.uses) && sets_disjoint(a.uses, b.defs) &&
         sets_disjoint(a.defs, b.defs);
}

TransformResult rename_variable(const AstTree& tree, const std::vector<std::string>& name_pool,
                                std::uint64_t seed) {
  if (name_pool.empty()) throw std::invalid_argument("rename_variable: empty name pool");
  std::mt19937_64 rng(seed);
  TransformResult res{tree, false, "", seed};
  struct Site {
    NodeId fn;
    std::string name;
  };
  std::vector<Site> sites;
  for (NodeId fn : function_nodes(tree))
    for (const std::string& v : declared_vars(tree, fn)) sites.push_back({fn, v});
  if (sites.empty()) return res;
  const Site& site = sites[std::uniform_int_distribution<size_t>(0, sites.size() - 1)(rng)];
  std::set<std::string> visible = visible_identifiers(tree, site.fn);
  std::vector<std::string> candidates;
  for (const std::string& c : name_pool)
    if (!visible.count(c)) candidates.push_back(c);
  if (candidates.empty()) return res;
  const std::string& fresh =
      candidates[std::uniform_int_distribution<size_t>(0, candidates.size() - 1)(rng)];
  std::vector<NodeId> subtree;
  collect_subtree(res.tree, site.fn, subtree);
  for (NodeId id : subtree) {
    AstNode& n = res.tree.node(id);
    if (n.node_type == "Ident" && n.token && *n.token == site.name) n.token = fresh;
  }
  res.applied = true;
  res.site = site.name + " -> " + fresh;
  return res;
}

TransformResult insert_unused(const AstTree& tree, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TransformResult res{tree, false, "", seed};
  std::vector<NodeId> blocks = block_nodes(tree);
  if (blocks.empty()) return res;
  NodeId block = blocks[std::uniform_int_distribution<size_t>(0, blocks.size() - 1)(rng)];
  size_t len = res.tree.node(block).children.size();
  size_t pos = std::uniform_int_distribution<size_t>(0, len)(rng);
  std::set<std::string> used = all_tokens(tree);
  int k = 0;
  while (used.count("u_" + std::to_string(k))) k++;
  std::string fresh = "u_" + std::to_string(k);
  NodeId decl = static_cast<NodeId>(res.tree.nodes.size());
  res.tree.nodes.push_back({decl, "Decl", std::nullopt, {decl + 1, decl + 2}});
  res.tree.nodes.push_back({decl + 1, "Ident", fresh, {}});
  res.tree.nodes.push_back({decl + 2, "StrLit", "unused", {}});
  auto& children = res.tree.node(block).children;
  children.insert(children.begin() + static_cast<long>(pos), decl);
  res.applied = true;
  res.site = "block " + std::to_string(block) + " pos " + std::to_string(pos) + " name " + fresh;
  validate_tree(res.tree);
  return res;
}

TransformResult permute_statements(const AstTree& tree, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TransformResult res{tree, false, "", seed};
  struct Pair {
    NodeId block;
    size_t index;
  };
  std::vector<Pair> pairs;
  for (NodeId block : block_nodes(tree)) {
    const auto& stmts = tree.node(block).children;
    for (size_t k = 0; k + 1 < stmts.size(); ++k)
      if (independent(tree, stmts[k], stmts[k + 1])) pairs.push_back({block, k});
  }
  if (pairs.empty()) return res;
  const Pair& p = pairs[std::uniform_int_distribution<size_t>(0, pairs.size() - 1)(rng)];
  auto& stmts = res.tree.node(p.block).children;
  std::swap(stmts[p.index], stmts[p.index + 1]);
  res.applied = true;
  res.site = "block " + std::to_string(p.block) + " pair " + std::to_string(p.index);
  return res;
}

TransformResult apply_transform(const AstTree& tree, TransformKind kind,
                                const std::vector<std::string>& name_pool, std::uint64_t seed) {
  switch (kind) {
    case TransformKind::VariableRenaming: return rename_variable(tree, name_pool, seed);
    case TransformKind::UnusedStatement: return insert_unused(tree, seed);
    case TransformKind::PermuteStatement: return permute_statements(tree, seed);
    case TransformKind::Identity: return {tree, true, "identity", seed};
  }
  throw std::invalid_argument("bad transform kind");
}

std::string RobustnessReport::to_json() const {
  nlohmann::json j;
  j["transform"] = treecaps::to_string(kind);
  j["ppc"] = ppc;
  j["changed"] = changed;
  j["unchanged"] = unchanged;
  j["inapplicable"] = inapplicable;
  nlohmann::json entries_json = nlohmann::json::array();
  for (const Entry& e : entries)
    entries_json.push_back(
        {{"id", e.id}, {"before", e.before}, {"after", e.after}, {"applied", e.applied}});
  j["programs"] = std::move(entries_json);
  return j.dump(2);
}

RobustnessReport ppc(const std::function<int(const AstTree&)>& model_fn,
                     const std::vector<ProgramRecord>& programs, TransformKind kind,
                     const std::vector<std::string>& name_pool, std::uint64_t seed) {
  if (programs.empty()) throw std::invalid_argument("ppc: no programs");
  RobustnessReport report;
  report.kind = kind;
  std::uint64_t i = 0;
  for (const ProgramRecord& rec : programs) {
    std::uint64_t program_seed = seed * 0x9e3779b97f4a7c15ULL + (i++) * 0x100000001b3ULL + 1;
    RobustnessReport::Entry entry;
    entry.id = rec.id;
    try {
      entry.before = model_fn(rec.ast);
      TransformResult tr = apply_transform(rec.ast, kind, name_pool, program_seed);
      entry.applied = tr.applied;
      if (tr.applied) {
        entry.after = model_fn(tr.tree);
        if (entry.after != entry.before) report.changed++;
        else report.unchanged++;
      } else {
        report.inapplicable++;
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("ppc: model failed on program " + rec.id + ": " + e.what());
    }
    report.entries.push_back(std::move(entry));
  }
  int applied = report.changed + report.unchanged;
  report.ppc = applied == 0 ? 0.0 : 100.0 * static_cast<double>(report.changed) / applied;
  return report;
}

}  // namespace treecaps
