#include "treecaps/interp.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <variant>

namespace treecaps {

std::string Trace::to_string() const {
  std::ostringstream os;
  switch (trap) {
    case TrapKind::StepBudget: return "TRAP:step_budget";
    case TrapKind::DivByZero: os << "TRAP:div_by_zero|"; break;
    case TrapKind::OutOfBounds: os << "TRAP:out_of_bounds|"; break;
    case TrapKind::BadProgram: os << "TRAP:bad_program|"; break;
    case TrapKind::None: break;
  }
  for (size_t i = 0; i < prints.size(); ++i) os << (i ? "," : "") << prints[i];
  if (trap == TrapKind::None) os << "|exit=" << exit_value;
  return os.str();
}

namespace {

struct Trap {
  TrapKind kind;
};

struct ReturnSignal {
  long long value;
};

using Value = std::variant<long long, std::vector<long long>, std::string>;

struct Interp {
  const AstTree& tree;
  long long budget;
  Trace trace;
  std::unordered_map<std::string, NodeId> functions;

  Interp(const AstTree& t, long long b) : tree(t), budget(b) {}

  using Env = std::unordered_map<std::string, Value>;

  void tick() {
    if (--budget < 0) throw Trap{TrapKind::StepBudget};
  }

  const AstNode& n(NodeId id) const { return tree.node(id); }

  void collect_functions() {
    const AstNode& root = n(tree.root);
    if (root.node_type == "FunctionDef") {
      functions[root.token.value_or("")] = root.id;
    } else if (root.node_type == "Program") {
      for (NodeId c : root.children)
        if (n(c).node_type == "FunctionDef") functions[n(c).token.value_or("")] = c;
    } else {
      throw std::invalid_argument("not a program tree");
    }
  }

  NodeId entry() const {
    const AstNode& root = n(tree.root);
    if (root.node_type == "FunctionDef") return root.id;
    for (NodeId c : root.children)
      if (n(c).node_type == "FunctionDef") return c;
    throw std::invalid_argument("no function in program");
  }

  long long call(NodeId fn, const std::vector<long long>& args) {
    const AstNode& f = n(fn);
    NodeId params = f.children.at(0);
    Env env;
    size_t pos = 0;
    for (NodeId p : n(params).children) {
      const AstNode& param = n(p);
      std::string name = *n(param.children.at(0)).token;
      if (param.children.size() == 2) {  // array param with fixed size
        long long size = std::stoll(*n(param.children.at(1)).token);
        if (pos + static_cast<size_t>(size) > args.size()) throw Trap{TrapKind::BadProgram};
        std::vector<long long> arr(args.begin() + static_cast<long>(pos),
                                   args.begin() + static_cast<long>(pos + size));
        pos += static_cast<size_t>(size);
        env[name] = std::move(arr);
      } else {
        if (pos >= args.size()) throw Trap{TrapKind::BadProgram};
        env[name] = args[pos++];
      }
    }
    if (pos != args.size()) throw Trap{TrapKind::BadProgram};
    try {
      exec_block(f.children.at(1), env);
    } catch (const ReturnSignal& r) {
      return r.value;
    }
    return 0;
  }

  void exec_block(NodeId block, Env& env) {
    for (NodeId s : n(block).children) exec_stmt(s, env);
  }

  void exec_stmt(NodeId id, Env& env) {
    tick();
    const AstNode& s = n(id);
    const std::string& t = s.node_type;
    if (t == "Decl") {
      std::string name = *n(s.children.at(0)).token;
      if (s.children.size() == 2 && n(s.children.at(1)).node_type == "StrLit") {
        env[name] = *n(s.children.at(1)).token;
      } else if (s.children.size() == 2) {
        env[name] = eval(s.children.at(1), env);
      } else {
        env[name] = 0LL;
      }
    } else if (t == "ArrayDecl") {
      std::string name = *n(s.children.at(0)).token;
      long long size = std::stoll(*n(s.children.at(1)).token);
      env[name] = std::vector<long long>(static_cast<size_t>(size), 0);
    } else if (t == "Assign") {
      const AstNode& target = n(s.children.at(0));
      long long value = eval(s.children.at(1), env);
      if (target.node_type == "Ident") {
        auto it = env.find(*target.token);
        if (it == env.end()) throw Trap{TrapKind::BadProgram};
        it->second = value;
      } else {  // Index
        std::string name = *n(target.children.at(0)).token;
        long long idx = eval(target.children.at(1), env);
        auto it = env.find(name);
        if (it == env.end() || !std::holds_alternative<std::vector<long long>>(it->second))
          throw Trap{TrapKind::BadProgram};
        auto& arr = std::get<std::vector<long long>>(it->second);
        if (idx < 0 || idx >= static_cast<long long>(arr.size())) throw Trap{TrapKind::OutOfBounds};
        arr[static_cast<size_t>(idx)] = value;
      }
    } else if (t == "If") {
      if (eval(s.children.at(0), env) != 0)
        exec_block(s.children.at(1), env);
      else if (s.children.size() == 3)
        exec_block(s.children.at(2), env);
    } else if (t == "While") {
      while (eval(s.children.at(0), env) != 0) exec_block(s.children.at(1), env);
    } else if (t == "For") {
      NodeId init = s.children.at(0), cond = s.children.at(1), step = s.children.at(2),
             body = s.children.at(3);
      if (n(init).node_type != "Empty") exec_stmt(init, env);
      while (n(cond).node_type == "Empty" || eval(cond, env) != 0) {
        exec_block(body, env);
        if (n(step).node_type != "Empty") exec_stmt(step, env);
      }
    } else if (t == "Return") {
      throw ReturnSignal{s.children.empty() ? 0 : eval(s.children.at(0), env)};
    } else if (t == "Print") {
      trace.prints.push_back(eval(s.children.at(0), env));
    } else {
      throw Trap{TrapKind::BadProgram};
    }
  }

  long long eval(NodeId id, Env& env) {
    tick();
    const AstNode& e = n(id);
    const std::string& t = e.node_type;
    if (t == "IntLit") return std::stoll(*e.token);
    if (t == "Ident") {
      auto it = env.find(*e.token);
      if (it == env.end() || !std::holds_alternative<long long>(it->second))
        throw Trap{TrapKind::BadProgram};
      return std::get<long long>(it->second);
    }
    if (t == "Index") {
      std::string name = *n(e.children.at(0)).token;
      long long idx = eval(e.children.at(1), env);
      auto it = env.find(name);
      if (it == env.end() || !std::holds_alternative<std::vector<long long>>(it->second))
        throw Trap{TrapKind::BadProgram};
      const auto& arr = std::get<std::vector<long long>>(it->second);
      if (idx < 0 || idx >= static_cast<long long>(arr.size())) throw Trap{TrapKind::OutOfBounds};
      return arr[static_cast<size_t>(idx)];
    }
    if (t == "UnaryOp") {
      long long v = eval(e.children.at(0), env);
      if (*e.token == "-") return -v;
      if (*e.token == "!") return v == 0 ? 1 : 0;
      throw Trap{TrapKind::BadProgram};
    }
    if (t == "BinOp") {
      const std::string& op = *e.token;
      // short-circuit forms first
      if (op == "&&") {
        if (eval(e.children.at(0), env) == 0) return 0;
        return eval(e.children.at(1), env) != 0 ? 1 : 0;
      }
      if (op == "||") {
        if (eval(e.children.at(0), env) != 0) return 1;
        return eval(e.children.at(1), env) != 0 ? 1 : 0;
      }
      long long a = eval(e.children.at(0), env);
      long long b = eval(e.children.at(1), env);
      if (op == "+") return a + b;
      if (op == "-") return a - b;
      if (op == "*") return a * b;
      if (op == "/") {
        if (b == 0) throw Trap{TrapKind::DivByZero};
        return a / b;
      }
      if (op == "%") {
        if (b == 0) throw Trap{TrapKind::DivByZero};
        return a % b;
      }
      if (op == "==") return a == b ? 1 : 0;
      if (op == "!=") return a != b ? 1 : 0;
      if (op == "<") return a < b ? 1 : 0;
      if (op == "<=") return a <= b ? 1 : 0;
      if (op == ">") return a > b ? 1 : 0;
      if (op == ">=") return a >= b ? 1 : 0;
      throw Trap{TrapKind::BadProgram};
    }
    if (t == "Call") {
      std::string name = *n(e.children.at(0)).token;
      auto it = functions.find(name);
      if (it == functions.end()) throw Trap{TrapKind::BadProgram};
      std::vector<long long> args;
      for (size_t i = 1; i < e.children.size(); ++i) args.push_back(eval(e.children[i], env));
      // scalar args only through calls
      const AstNode& f = n(it->second);
      if (n(f.children.at(0)).children.size() != args.size()) throw Trap{TrapKind::BadProgram};
      return call(it->second, args);
    }
    throw Trap{TrapKind::BadProgram};
  }
};

}  // namespace

int input_arity(const AstTree& tree) {
  Interp interp(tree, 1);
  NodeId fn = interp.entry();
  int arity = 0;
  for (NodeId p : tree.node(tree.node(fn).children.at(0)).children) {
    const AstNode& param = tree.node(p);
    if (param.children.size() == 2)
      arity += static_cast<int>(std::stoll(*tree.node(param.children.at(1)).token));
    else
      arity += 1;
  }
  return arity;
}

Trace interpret(const AstTree& tree, const std::vector<long long>& input, long long step_budget) {
  if (static_cast<int>(input.size()) != input_arity(tree))
    throw std::invalid_argument("input length does not match program arity");
  Interp interp(tree, step_budget);
  interp.collect_functions();
  try {
    interp.trace.exit_value = interp.call(interp.entry(), input);
  } catch (const Trap& t) {
    interp.trace.trap = t.kind;
    if (t.kind == TrapKind::StepBudget) interp.trace.prints.clear();
  }
  return interp.trace;
}

}  // namespace treecaps
