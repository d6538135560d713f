#include "doctest.h"

#include <cstdio>
#include <unistd.h>

#include "treecaps/checkpoint.hpp"
#include "treecaps/corpus.hpp"
#include "treecaps/train.hpp"

using namespace treecaps;

namespace {

ModelConfig tiny_config(RoutingKind kind, Task task) {
  ModelConfig cfg;
  cfg.routing_kind = kind;
  cfg.task = task;
  cfg.conv_layers = 2;
  cfg.type_dim = 4;
  cfg.token_dim = 3;
  cfg.n_sc = 3;
  cfg.d_sc = 4;
  cfg.d_cc = 3;
  cfg.routing_iterations = 2;
  cfg.num_classes = 2;
  return cfg;
}

Model tiny_model(Task task = Task::Classify) {
  std::vector<ProgramRecord> ds(1);
  ds[0].ast = parse_source("int f(int a){ if (a > 1) { print(a); } return a + 2; }");
  Vocabulary vocab = build_vocab(ds, 1);
  ModelConfig cfg = tiny_config(RoutingKind::Vts, task);
  std::vector<std::string> names;
  if (task == Task::Name) {
    names = {"alpha", "beta", "gamma"};
    cfg.num_names = 3;
  }
  return init_model(cfg, vocab, names);
}

}  // namespace

TEST_CASE("radam_step: frozen scalar reference trajectory") {
  // constant gradient 1.0, lr = 0.001, default hyperparameters;
  // values from an independent scalar implementation of the update equations
  const double expected[10] = {0.999,
                               0.998,
                               0.997,
                               0.996,
                               0.99598268849700677,
                               0.9959568673844631,
                               0.99592412857038048,
                               0.99588539029374801,
                               0.99584128543462924,
                               0.99579228742167214};
  ParameterStore params;
  params.tensors["w"] = Matrix::Constant(1, 1, 1.0);
  ParameterStore grads;
  grads.tensors["w"] = Matrix::Constant(1, 1, 1.0);
  OptimizerState state = OptimizerState::create(params);
  for (int t = 0; t < 10; ++t) {
    radam_step(params, grads, state, 0.001);
    CHECK(params.at("w")(0, 0) == doctest::Approx(expected[t]).epsilon(1e-12));
  }
  CHECK(state.step == 10);
}

TEST_CASE("radam_step: trivial invariants") {
  ParameterStore params;
  params.tensors["w"] = Matrix::Constant(2, 2, 0.5);
  OptimizerState state = OptimizerState::create(params);

  ParameterStore zero_g = params.zeros_like();
  radam_step(params, zero_g, state, 0.01);
  CHECK(params.at("w")(0, 0) == 0.5);
  CHECK(state.step == 1);

  ParameterStore g = params.zeros_like();
  g.at("w").setConstant(1.0);
  radam_step(params, g, state, 0.0);  // lr = 0 leaves parameters unchanged
  CHECK(params.at("w")(1, 1) == 0.5);

  g.at("w")(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(radam_step(params, g, state, 0.01));
}

TEST_CASE("grad_check: both routings, both tasks") {
  for (RoutingKind kind : {RoutingKind::Vts, RoutingKind::Drsw})
    for (Task task : {Task::Classify, Task::Name}) {
      GradCheckResult res = grad_check(tiny_config(kind, task), 1e-5, 7, 300);
      INFO("routing ", to_string(kind), " task ", to_string(task), " worst ", res.worst_tensor);
      CHECK(res.max_rel_error <= 1e-4);
    }
}

TEST_CASE("gradients: duplicate-sample mean invariance") {
  Model model = tiny_model();
  AstTree t = parse_source("int g(int x){ return x * 3; }");
  ParameterStore g1 = model.params.zeros_like(), g2 = model.params.zeros_like();
  double l1 = gradients(model, {&t}, {1}, g1);
  double l2 = gradients(model, {&t, &t}, {1, 1}, g2);
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
  for (const auto& [name, g] : g1.tensors)
    CHECK((g - g2.at(name)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("batch_gradients: threaded reduction matches serial") {
  Model model = tiny_model();
  AstTree a = parse_source("int g(int x){ return x * 3; }");
  AstTree b = parse_source("int h(int x){ print(x); return x - 1; }");
  AstTree c = parse_source("int k(int x){ if (x > 0) { print(x + 2); } return x - 1; }");
  std::vector<const AstTree*> trees{&a, &b, &c};
  std::vector<int> targets{0, 1, 0};
  ParameterStore g1 = model.params.zeros_like(), g4 = model.params.zeros_like();
  double l1 = batch_gradients(model, trees, targets, g1, 1);
  double l4 = batch_gradients(model, trees, targets, g4, 4);
  CHECK(l1 == doctest::Approx(l4).epsilon(1e-12));
  for (const auto& [name, g] : g1.tensors)
    CHECK((g - g4.at(name)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("forward: determinism and name-task code vector shape") {
  Model model = tiny_model(Task::Name);
  AstTree t = parse_source("int q(int x){ return x + 1; }");
  ForwardCache c1, c2;
  forward(model, t, 1, c1);
  forward(model, t, 1, c2);
  CHECK(c1.loss == c2.loss);
  CHECK((c1.cc_out - c2.cc_out).cwiseAbs().maxCoeff() == 0.0);
  CHECK(c1.cc_out.rows() == 1);  // N_cc = 1 for the naming task
  CHECK(c1.cc_out.cols() == model.cfg.d_cc);
}

TEST_CASE("checkpoint: round-trip, corruption, mismatch") {
  Model model = tiny_model();
  AstTree t = parse_source("int g(int x){ return x * 3; }");
  ForwardCache before;
  forward(model, t, 1, before);

  const std::string path = "/tmp/treecaps_test.ckpt";
  save_checkpoint(model, path);
  Model back = load_checkpoint(path);
  ForwardCache after;
  forward(back, t, 1, after);
  CHECK(before.loss == after.loss);
  CHECK((before.cc_out - after.cc_out).cwiseAbs().maxCoeff() == 0.0);

  // optimizer state round-trip
  OptimizerState opt = OptimizerState::create(model.params);
  opt.step = 5;
  opt.m.at("embed.type").setConstant(0.25);
  save_checkpoint(model, path, &opt);
  OptimizerState opt_back = OptimizerState::create(model.params);
  load_checkpoint(path, &opt_back);
  CHECK(opt_back.step == 5);
  CHECK(opt_back.m.at("embed.type")(0, 0) == 0.25);

  // corrupted magic
  {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f);
    std::fputc('X', f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);

  // truncation
  save_checkpoint(model, path);
  {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    REQUIRE(f);
    std::fseek(f, 0, SEEK_END);
    long size = std::ftell(f);
    std::fclose(f);
    REQUIRE(truncate(path.c_str(), size / 2) == 0);
  }
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  std::remove(path.c_str());
}

TEST_CASE("train: determinism and log schema on a micro corpus") {
  DatasetManifest m = generate(3, 8, 11);
  split(m, {0.7, 0.2, 0.1}, 11);
  ModelConfig cfg = tiny_config(RoutingKind::Vts, Task::Classify);
  cfg.num_classes = 3;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 5;
  TrainResult r1 = train(m.records, cfg);
  TrainResult r2 = train(m.records, cfg);
  REQUIRE(r1.log.size() == r2.log.size());
  for (size_t i = 0; i < r1.log.size(); ++i) {
    CHECK(r1.log[i].epoch == static_cast<int>(i) + 1);
    CHECK(r1.log[i].train_loss == r2.log[i].train_loss);
    CHECK(r1.log[i].val_metric == r2.log[i].val_metric);
  }
}

TEST_CASE("train: single-batch overfit reaches 100%") {
  // one instance of each of 3 classes, trained as a single batch
  DatasetManifest m = generate(3, 2, 21);
  std::vector<ProgramRecord> tiny;
  for (int c = 0; c < 3; ++c)
    for (const ProgramRecord& r : m.records)
      if (*r.label == c && tiny.size() <= static_cast<size_t>(c)) tiny.push_back(r);
  REQUIRE(tiny.size() == 3);

  Vocabulary vocab = build_vocab(tiny, 1);
  ModelConfig cfg = tiny_config(RoutingKind::Vts, Task::Classify);
  cfg.num_classes = 3;
  cfg.conv_layers = 4;
  cfg.n_sc = 8;
  cfg.seed = 2;
  Model model = init_model(cfg, vocab);
  OptimizerState state = OptimizerState::create(model.params);
  std::vector<const AstTree*> trees;
  std::vector<int> targets;
  for (const ProgramRecord& r : tiny) {
    trees.push_back(&r.ast);
    targets.push_back(*r.label);
  }
  bool perfect = false;
  double last_loss = 1e9;
  for (int step = 0; step < 200 && !perfect; ++step) {
    ParameterStore grads = model.params.zeros_like();
    last_loss = gradients(model, trees, targets, grads);
    radam_step(model.params, grads, state, 0.01);
    perfect = true;
    for (size_t i = 0; i < trees.size(); ++i)
      if (predict_class(model, *trees[i]) != targets[i]) perfect = false;
  }
  CHECK(perfect);
  CHECK(last_loss < 0.5);
  CHECK(model.params.all_finite());
}
