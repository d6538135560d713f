#include "doctest.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "treecaps/corpus.hpp"
#include "treecaps/interp.hpp"

using namespace treecaps;

TEST_CASE("generate: counting contract and determinism") {
  DatasetManifest m = generate(10, 20, 7);
  CHECK(m.records.size() == 200);
  std::map<int, int> per_class;
  for (const ProgramRecord& r : m.records) per_class[*r.label]++;
  for (int c = 0; c < 10; ++c) CHECK(per_class[c] == 20);

  DatasetManifest m2 = generate(10, 20, 7);
  REQUIRE(m2.records.size() == m.records.size());
  for (size_t i = 0; i < m.records.size(); ++i) {
    CHECK(m.records[i].id == m2.records[i].id);
    CHECK(trees_equal(m.records[i].ast, m2.records[i].ast));
    CHECK(m.records[i].gold_traces == m2.records[i].gold_traces);
  }
}

TEST_CASE("generate: every record interprets to its stored gold trace") {
  DatasetManifest m = generate(10, 4, 13);
  for (const ProgramRecord& r : m.records) {
    REQUIRE(r.test_inputs.size() == 3);
    REQUIRE(r.gold_traces.size() == 3);
    for (size_t i = 0; i < r.test_inputs.size(); ++i) {
      Trace t = interpret(r.ast, r.test_inputs[i]);
      CHECK(t.trap == TrapKind::None);
      CHECK(t.to_string() == r.gold_traces[i]);
    }
  }
}

TEST_CASE("split: stratified 70/20/10") {
  DatasetManifest m = generate(10, 20, 7);
  split(m, {0.7, 0.2, 0.1}, 7);
  std::map<std::string, int> totals;
  std::map<int, std::map<std::string, int>> by_class;
  for (const ProgramRecord& r : m.records) {
    totals[r.split]++;
    by_class[*r.label][r.split]++;
  }
  CHECK(totals["train"] == 140);
  CHECK(totals["val"] == 40);
  CHECK(totals["test"] == 20);
  for (int c = 0; c < 10; ++c) {
    CHECK(by_class[c]["train"] == 14);
    CHECK(by_class[c]["val"] == 4);
    CHECK(by_class[c]["test"] == 2);
  }

  DatasetManifest m2 = generate(10, 20, 7);
  split(m2, {0.7, 0.2, 0.1}, 7);
  for (size_t i = 0; i < m.records.size(); ++i) CHECK(m.records[i].split == m2.records[i].split);
}

TEST_CASE("make_naming_dataset: blanked token, sub-word targets, L from train split") {
  DatasetManifest m = generate(10, 5, 3);
  split(m, {0.7, 0.2, 0.1}, 3);
  DatasetManifest naming = make_naming_dataset(m);
  for (const ProgramRecord& r : naming.records) {
    CHECK_FALSE(r.ast.node(r.ast.root).token.has_value());
    REQUIRE(r.name_subwords.has_value());
  }
  // bubble_sort instance -> target {"bubble","sort"}
  bool saw = false;
  for (const ProgramRecord& r : naming.records)
    if (r.id.rfind("bubble_sort", 0) == 0) {
      CHECK(*r.name_subwords == std::vector<std::string>{"bubble", "sort"});
      saw = true;
    }
  CHECK(saw);

  std::vector<std::string> L = build_name_list(naming.records);
  CHECK(L.size() == 10);  // all ten templates appear in the train split
  CHECK(std::is_sorted(L.begin(), L.end()));
}

TEST_CASE("majority-class baseline is near chance on the test split") {
  DatasetManifest m = generate(10, 20, 7);
  split(m, {0.7, 0.2, 0.1}, 7);
  std::map<int, int> train_counts;
  int test_total = 0, majority_hits = 0;
  for (const ProgramRecord& r : m.records)
    if (r.split == "train") train_counts[*r.label]++;
  int majority = 0;
  for (const auto& [c, n] : train_counts)
    if (n > train_counts[majority]) majority = c;
  for (const ProgramRecord& r : m.records)
    if (r.split == "test") {
      test_total++;
      if (*r.label == majority) majority_hits++;
    }
  CHECK(static_cast<double>(majority_hits) / test_total <= 0.1 + 0.05);
}

TEST_CASE("save/load dataset round-trip with sidecar metadata") {
  DatasetManifest m = generate(3, 4, 99);
  split(m, {0.7, 0.2, 0.1}, 99);
  const std::string path = "/tmp/treecaps_test_corpus.jsonl";
  save_dataset(m, path);
  DatasetManifest back = load_dataset(path);
  CHECK(back.seed == 99);
  CHECK(back.template_inventory_hash == template_inventory_hash());
  REQUIRE(back.records.size() == m.records.size());
  for (size_t i = 0; i < m.records.size(); ++i) {
    CHECK(back.records[i].id == m.records[i].id);
    CHECK(back.records[i].split == m.records[i].split);
    CHECK(back.records[i].label == m.records[i].label);
    CHECK(trees_equal(back.records[i].ast, m.records[i].ast));
    CHECK(back.records[i].gold_traces == m.records[i].gold_traces);
  }
}

TEST_CASE("byte-identical manifests for identical arguments") {
  const std::string p1 = "/tmp/treecaps_gen_a.jsonl", p2 = "/tmp/treecaps_gen_b.jsonl";
  DatasetManifest a = generate(4, 5, 31);
  DatasetManifest b = generate(4, 5, 31);
  save_dataset(a, p1);
  save_dataset(b, p2);
  std::ifstream f1(p1), f2(p2);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());
}

TEST_CASE("identifier_pool collects distinct identifier tokens") {
  DatasetManifest m = generate(2, 2, 1);
  std::vector<std::string> pool = identifier_pool(m.records);
  CHECK(!pool.empty());
  std::set<std::string> uniq(pool.begin(), pool.end());
  CHECK(uniq.size() == pool.size());
}
