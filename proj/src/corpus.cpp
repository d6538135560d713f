#include "treecaps/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "treecaps/heads.hpp"
#include "treecaps/interp.hpp"

namespace treecaps {

namespace {

// 60-name identifier pool shared across classes so variable renaming has a
// nontrivial vocabulary.
const std::vector<std::string> kIdentPool = {
    "acc",  "arr",   "base", "best",  "bound", "buf",   "cap",  "cnt",   "cur",   "data",
    "dest", "diff",  "elem", "end",   "extra", "first", "flag", "gap",   "goal",  "head",
    "high", "hold",  "idx",  "item",  "iter",  "key",   "last", "left",  "len",   "limit",
    "low",  "mark",  "mid",  "min",   "next",  "num",   "off",  "out",   "pivot", "pos",
    "prev", "probe", "rank", "rem",   "res",   "right", "run",  "seen",  "seq",   "size",
    "slot", "span",  "step", "stop",  "sum",   "tail",  "temp", "total", "val",   "width"};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Gen {
  std::mt19937_64 rng;
  std::vector<std::string> pool = kIdentPool;
  size_t next_name = 0;

  explicit Gen(std::uint64_t seed) : rng(seed) {
    std::shuffle(pool.begin(), pool.end(), rng);
  }
  std::string name() { return pool.at(next_name++); }
  long long rint(long long lo, long long hi) {
    return std::uniform_int_distribution<long long>(lo, hi)(rng);
  }
  bool coin() { return rint(0, 1) == 1; }
};

std::string print_loop(Gen& g, const std::string& a, int n) {
  std::string p = g.name();
  std::ostringstream os;
  if (g.coin()) {
    os << "  for (int " << p << " = 0; " << p << " < " << n << "; " << p << " = " << p
       << " + 1) { print(" << a << "[" << p << "]); }\n";
  } else {
    os << "  int " << p << " = 0;\n  while (" << p << " < " << n << ") { print(" << a << "[" << p
       << "]); " << p << " = " << p << " + 1; }\n";
  }
  return os.str();
}

// Occasional independent constant declaration; gives PS and US realistic sites.
std::string maybe_junk(Gen& g) {
  if (!g.coin()) return "";
  std::ostringstream os;
  if (g.coin())
    os << "  str " << g.name() << " = \"note\";\n";
  else
    os << "  int " << g.name() << " = " << g.rint(0, 99) << ";\n";
  return os.str();
}

struct Instance {
  std::string source;
  std::string func_name;
  std::vector<std::vector<long long>> test_inputs;
};

std::vector<long long> random_array(Gen& g, int n, long long lo, long long hi) {
  std::vector<long long> v(static_cast<size_t>(n));
  for (auto& x : v) x = g.rint(lo, hi);
  return v;
}

Instance gen_bubble_sort(Gen& g) {
  int n = static_cast<int>(g.rint(4, 7));
  std::string a = g.name(), i = g.name(), j = g.name(), t = g.name();
  std::ostringstream os;
  os << "int bubble_sort(int " << a << "[" << n << "]) {\n" << maybe_junk(g);
  os << "  int " << i << " = 0;\n"
     << "  while (" << i << " < " << n << ") {\n"
     << "    int " << j << " = 0;\n"
     << "    while (" << j << " < " << n - 1 << ") {\n"
     << "      if (" << a << "[" << j << "] > " << a << "[" << j << " + 1]) {\n"
     << "        int " << t << " = " << a << "[" << j << "];\n"
     << "        " << a << "[" << j << "] = " << a << "[" << j << " + 1];\n"
     << "        " << a << "[" << j << " + 1] = " << t << ";\n"
     << "      }\n"
     << "      " << j << " = " << j << " + 1;\n"
     << "    }\n"
     << "    " << i << " = " << i << " + 1;\n"
     << "  }\n"
     << print_loop(g, a, n) << "  return 0;\n}\n";
  Instance inst{os.str(), "bubble_sort", {}};
  for (int k = 0; k < 3; ++k) inst.test_inputs.push_back(random_array(g, n, 0, 50));
  return inst;
}

Instance gen_insertion_sort(Gen& g) {
  int n = static_cast<int>(g.rint(4, 7));
  std::string a = g.name(), i = g.name(), j = g.name(), k = g.name();
  std::ostringstream os;
  os << "int insertion_sort(int " << a << "[" << n << "]) {\n" << maybe_junk(g);
  os << "  int " << i << " = 1;\n"
     << "  while (" << i << " < " << n << ") {\n"
     << "    int " << k << " = " << a << "[" << i << "];\n"
     << "    int " << j << " = " << i << " - 1;\n"
     << "    while (" << j << " >= 0 && " << a << "[" << j << "] > " << k << ") {\n"
     << "      " << a << "[" << j << " + 1] = " << a << "[" << j << "];\n"
     << "      " << j << " = " << j << " - 1;\n"
     << "    }\n"
     << "    " << a << "[" << j << " + 1] = " << k << ";\n"
     << "    " << i << " = " << i << " + 1;\n"
     << "  }\n"
     << print_loop(g, a, n) << "  return 0;\n}\n";
  Instance inst{os.str(), "insertion_sort", {}};
  for (int t = 0; t < 3; ++t) inst.test_inputs.push_back(random_array(g, n, 0, 50));
  return inst;
}

Instance gen_selection_sort(Gen& g) {
  int n = static_cast<int>(g.rint(4, 7));
  std::string a = g.name(), i = g.name(), j = g.name(), m = g.name(), t = g.name();
  std::ostringstream os;
  os << "int selection_sort(int " << a << "[" << n << "]) {\n" << maybe_junk(g);
  os << "  int " << i << " = 0;\n"
     << "  while (" << i << " < " << n - 1 << ") {\n"
     << "    int " << m << " = " << i << ";\n"
     << "    int " << j << " = " << i << " + 1;\n"
     << "    while (" << j << " < " << n << ") {\n"
     << "      if (" << a << "[" << j << "] < " << a << "[" << m << "]) { " << m << " = " << j
     << "; }\n"
     << "      " << j << " = " << j << " + 1;\n"
     << "    }\n"
     << "    int " << t << " = " << a << "[" << i << "];\n"
     << "    " << a << "[" << i << "] = " << a << "[" << m << "];\n"
     << "    " << a << "[" << m << "] = " << t << ";\n"
     << "    " << i << " = " << i << " + 1;\n"
     << "  }\n"
     << print_loop(g, a, n) << "  return 0;\n}\n";
  Instance inst{os.str(), "selection_sort", {}};
  for (int t2 = 0; t2 < 3; ++t2) inst.test_inputs.push_back(random_array(g, n, 0, 50));
  return inst;
}

Instance gen_linear_search(Gen& g) {
  int n = static_cast<int>(g.rint(4, 7));
  std::string a = g.name(), x = g.name(), r = g.name(), i = g.name();
  std::ostringstream os;
  os << "int linear_search(int " << a << "[" << n << "], int " << x << ") {\n" << maybe_junk(g);
  os << "  int " << r << " = -1;\n"
     << "  int " << i << " = 0;\n"
     << "  while (" << i << " < " << n << ") {\n"
     << "    if (" << a << "[" << i << "] == " << x << " && " << r << " < 0) { " << r << " = " << i
     << "; }\n"
     << "    " << i << " = " << i << " + 1;\n"
     << "  }\n"
     << "  print(" << r << ");\n  return " << r << ";\n}\n";
  Instance inst{os.str(), "linear_search", {}};
  for (int t = 0; t < 3; ++t) {
    auto arr = random_array(g, n, 0, 9);
    arr.push_back(g.rint(0, 9));  // needle
    inst.test_inputs.push_back(arr);
  }
  return inst;
}

Instance gen_binary_search(Gen& g) {
  int n = static_cast<int>(g.rint(4, 7));
  std::string a = g.name(), x = g.name(), lo = g.name(), hi = g.name(), r = g.name(),
              m = g.name();
  std::ostringstream os;
  os << "int binary_search(int " << a << "[" << n << "], int " << x << ") {\n" << maybe_junk(g);
  os << "  int " << lo << " = 0;\n"
     << "  int " << hi << " = " << n - 1 << ";\n"
     << "  int " << r << " = -1;\n"
     << "  while (" << lo << " <= " << hi << ") {\n"
     << "    int " << m << " = (" << lo << " + " << hi << ") / 2;\n"
     << "    if (" << a << "[" << m << "] == " << x << ") { " << r << " = " << m << "; " << lo
     << " = " << hi << " + 1; } else {\n"
     << "      if (" << a << "[" << m << "] < " << x << ") { " << lo << " = " << m
     << " + 1; } else { " << hi << " = " << m << " - 1; }\n"
     << "    }\n"
     << "  }\n"
     << "  print(" << r << ");\n  return " << r << ";\n}\n";
  Instance inst{os.str(), "binary_search", {}};
  for (int t = 0; t < 3; ++t) {
    auto arr = random_array(g, n, 0, 40);
    std::sort(arr.begin(), arr.end());
    arr.push_back(g.rint(0, 40));
    inst.test_inputs.push_back(arr);
  }
  return inst;
}

Instance gen_array_sum(Gen& g) {
  int n = static_cast<int>(g.rint(4, 7));
  std::string a = g.name(), s = g.name(), i = g.name();
  std::ostringstream os;
  os << "int array_sum(int " << a << "[" << n << "]) {\n" << maybe_junk(g);
  os << "  int " << s << " = 0;\n";
  if (g.coin()) {
    os << "  for (int " << i << " = 0; " << i << " < " << n << "; " << i << " = " << i
       << " + 1) { " << s << " = " << s << " + " << a << "[" << i << "]; }\n";
  } else {
    os << "  int " << i << " = 0;\n  while (" << i << " < " << n << ") { " << s << " = " << s
       << " + " << a << "[" << i << "]; " << i << " = " << i << " + 1; }\n";
  }
  os << "  print(" << s << ");\n  return " << s << ";\n}\n";
  Instance inst{os.str(), "array_sum", {}};
  for (int t = 0; t < 3; ++t) inst.test_inputs.push_back(random_array(g, n, 0, 30));
  return inst;
}

Instance gen_array_max(Gen& g) {
  int n = static_cast<int>(g.rint(4, 7));
  std::string a = g.name(), m = g.name(), i = g.name();
  std::ostringstream os;
  os << "int array_max(int " << a << "[" << n << "]) {\n" << maybe_junk(g);
  os << "  int " << m << " = " << a << "[0];\n"
     << "  for (int " << i << " = 1; " << i << " < " << n << "; " << i << " = " << i
     << " + 1) {\n"
     << "    if (" << a << "[" << i << "] > " << m << ") { " << m << " = " << a << "[" << i
     << "]; }\n"
     << "  }\n"
     << "  print(" << m << ");\n  return " << m << ";\n}\n";
  Instance inst{os.str(), "array_max", {}};
  for (int t = 0; t < 3; ++t) inst.test_inputs.push_back(random_array(g, n, 0, 99));
  return inst;
}

Instance gen_reverse_array(Gen& g) {
  int n = static_cast<int>(g.rint(4, 7));
  std::string a = g.name(), i = g.name(), j = g.name(), t = g.name();
  std::ostringstream os;
  os << "int reverse_array(int " << a << "[" << n << "]) {\n" << maybe_junk(g);
  os << "  int " << i << " = 0;\n"
     << "  int " << j << " = " << n - 1 << ";\n"
     << "  while (" << i << " < " << j << ") {\n"
     << "    int " << t << " = " << a << "[" << i << "];\n"
     << "    " << a << "[" << i << "] = " << a << "[" << j << "];\n"
     << "    " << a << "[" << j << "] = " << t << ";\n"
     << "    " << i << " = " << i << " + 1;\n"
     << "    " << j << " = " << j << " - 1;\n"
     << "  }\n"
     << print_loop(g, a, n) << "  return 0;\n}\n";
  Instance inst{os.str(), "reverse_array", {}};
  for (int t2 = 0; t2 < 3; ++t2) inst.test_inputs.push_back(random_array(g, n, 0, 99));
  return inst;
}

Instance gen_fibonacci(Gen& g) {
  std::string n = g.name(), x = g.name(), y = g.name(), i = g.name(), t = g.name();
  std::ostringstream os;
  os << "int fibonacci(int " << n << ") {\n" << maybe_junk(g);
  os << "  int " << x << " = 0;\n"
     << "  int " << y << " = 1;\n"
     << "  int " << i << " = 0;\n"
     << "  while (" << i << " < " << n << ") {\n"
     << "    int " << t << " = " << x << " + " << y << ";\n"
     << "    " << x << " = " << y << ";\n"
     << "    " << y << " = " << t << ";\n"
     << "    " << i << " = " << i << " + 1;\n"
     << "  }\n"
     << "  print(" << x << ");\n  return " << x << ";\n}\n";
  Instance inst{os.str(), "fibonacci", {}};
  for (int t2 = 0; t2 < 3; ++t2) inst.test_inputs.push_back({g.rint(1, 12)});
  return inst;
}

Instance gen_gcd(Gen& g) {
  std::string u = g.name(), v = g.name(), t = g.name();
  std::ostringstream os;
  os << "int gcd(int " << u << ", int " << v << ") {\n" << maybe_junk(g);
  os << "  while (" << v << " != 0) {\n"
     << "    int " << t << " = " << u << " % " << v << ";\n"
     << "    " << u << " = " << v << ";\n"
     << "    " << v << " = " << t << ";\n"
     << "  }\n"
     << "  print(" << u << ");\n  return " << u << ";\n}\n";
  Instance inst{os.str(), "gcd", {}};
  for (int t2 = 0; t2 < 3; ++t2)
    inst.test_inputs.push_back({g.rint(1, 60), g.rint(1, 60)});
  return inst;
}

using TemplateFn = Instance (*)(Gen&);
const std::array<TemplateFn, 10> kTemplates = {
    gen_bubble_sort, gen_insertion_sort, gen_selection_sort, gen_linear_search,
    gen_binary_search, gen_array_sum, gen_array_max, gen_reverse_array,
    gen_fibonacci, gen_gcd};

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string template_inventory_hash() {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* name : kTemplateNames) h = fnv1a(name, h);
  h = fnv1a("minic-templates-v1", h);
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

DatasetManifest generate(int num_classes, int per_class, std::uint64_t seed) {
  if (num_classes < 1 || num_classes > static_cast<int>(kTemplates.size()) || per_class < 1)
    throw std::invalid_argument("generate: invalid counts");
  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.template_inventory_hash = template_inventory_hash();
  for (int cls = 0; cls < num_classes; ++cls) {
    for (int k = 0; k < per_class; ++k) {
      std::uint64_t record_seed =
          splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(cls) * 1000003ULL +
                                       static_cast<std::uint64_t>(k)));
      Gen g(record_seed);
      Instance inst = kTemplates[static_cast<size_t>(cls)](g);
      ProgramRecord rec;
      rec.id = std::string(kTemplateNames[static_cast<size_t>(cls)]) + "_" + std::to_string(k);
      rec.source = inst.source;
      rec.ast = parse_source(inst.source);
      rec.label = cls;
      rec.test_inputs = inst.test_inputs;
      for (const auto& input : inst.test_inputs) {
        Trace trace = interpret(rec.ast, input);
        if (trace.trap != TrapKind::None)
          throw std::runtime_error("generation self-check: trap in " + rec.id + ": " +
                                   trace.to_string());
        rec.gold_traces.push_back(trace.to_string());
      }
      manifest.records.push_back(std::move(rec));
    }
  }
  return manifest;
}

void split(DatasetManifest& manifest, std::array<double, 3> ratios, std::uint64_t seed) {
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
    throw std::invalid_argument("split: ratios must sum to 1");
  std::map<int, std::vector<size_t>> by_class;
  for (size_t i = 0; i < manifest.records.size(); ++i)
    by_class[manifest.records[i].label.value_or(-1)].push_back(i);
  std::mt19937_64 rng(seed);
  for (auto& [cls, indices] : by_class) {
    if (indices.size() < 3)
      throw std::invalid_argument("split: class " + std::to_string(cls) + " has fewer than 3 records");
    std::shuffle(indices.begin(), indices.end(), rng);
    size_t n = indices.size();
    size_t n_train = static_cast<size_t>(std::llround(ratios[0] * static_cast<double>(n)));
    size_t n_val = static_cast<size_t>(std::llround(ratios[1] * static_cast<double>(n)));
    n_train = std::max<size_t>(1, std::min(n_train, n - 2));
    n_val = std::max<size_t>(1, std::min(n_val, n - n_train - 1));
    for (size_t i = 0; i < n; ++i) {
      std::string s = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
      manifest.records[indices[i]].split = s;
    }
  }
}

DatasetManifest make_naming_dataset(const DatasetManifest& manifest) {
  DatasetManifest out = manifest;
  for (ProgramRecord& rec : out.records) {
    AstNode& root = rec.ast.node(rec.ast.root);
    AstNode* fn = &root;
    if (root.node_type == "Program") fn = &rec.ast.node(root.children.at(0));
    if (fn->node_type != "FunctionDef" || !fn->token)
      throw std::invalid_argument("make_naming_dataset: anonymous function in " + rec.id);
    rec.name_subwords = split_subwords(*fn->token);
    fn->token.reset();
    rec.label.reset();
  }
  return out;
}

std::vector<std::string> build_name_list(const std::vector<ProgramRecord>& records) {
  std::set<std::string> names;
  for (const ProgramRecord& r : records) {
    if (r.split != "train" || !r.name_subwords) continue;
    std::string joined;
    for (const std::string& w : *r.name_subwords) joined += (joined.empty() ? "" : "_") + w;
    names.insert(joined);
  }
  return {names.begin(), names.end()};
}

std::vector<std::string> identifier_pool(const std::vector<ProgramRecord>& records) {
  std::set<std::string> idents;
  for (const ProgramRecord& r : records)
    for (const AstNode& n : r.ast.nodes)
      if (n.node_type == "Ident" && n.token) idents.insert(*n.token);
  return {idents.begin(), idents.end()};
}

void save_dataset(const DatasetManifest& manifest, const std::string& manifest_path) {
  save_manifest(manifest.records, manifest_path);
  nlohmann::json meta{{"seed", manifest.seed},
                      {"template_inventory_hash", manifest.template_inventory_hash},
                      {"num_records", manifest.records.size()}};
  std::ofstream out(manifest_path + ".meta.json");
  out << meta.dump(2) << "\n";
}

DatasetManifest load_dataset(const std::string& manifest_path) {
  DatasetManifest manifest;
  manifest.records = load_manifest(manifest_path);
  std::ifstream in(manifest_path + ".meta.json");
  if (in) {
    nlohmann::json meta = nlohmann::json::parse(in, nullptr, false);
    if (!meta.is_discarded()) {
      manifest.seed = meta.value("seed", 0ULL);
      manifest.template_inventory_hash = meta.value("template_inventory_hash", "");
    }
  }
  return manifest;
}

}  // namespace treecaps
