#include "treecaps/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <thread>

#include "json.hpp"

#include "treecaps/corpus.hpp"
#include "treecaps/heads.hpp"

namespace treecaps {

namespace {

std::string joined_name(const std::vector<std::string>& subwords) {
  std::string out;
  for (const std::string& w : subwords) out += (out.empty() ? "" : "_") + w;
  return out;
}

struct PreparedDataset {
  std::vector<const ProgramRecord*> train, val, test;
};

PreparedDataset split_records(const std::vector<ProgramRecord>& dataset) {
  PreparedDataset out;
  for (const ProgramRecord& r : dataset) {
    if (r.split == "train") out.train.push_back(&r);
    else if (r.split == "val") out.val.push_back(&r);
    else if (r.split == "test") out.test.push_back(&r);
  }
  return out;
}

int record_target(const ProgramRecord& r, const Model& model) {
  if (model.cfg.task == Task::Classify) return r.label.value_or(-1);
  if (!r.name_subwords) return -1;
  std::string name = joined_name(*r.name_subwords);
  auto it = std::find(model.names.begin(), model.names.end(), name);
  return it == model.names.end() ? -1 : static_cast<int>(it - model.names.begin());
}

}  // namespace

double batch_gradients(const Model& model, const std::vector<const AstTree*>& trees,
                       const std::vector<int>& targets, ParameterStore& grads, int threads) {
  if (trees.empty()) throw std::invalid_argument("batch_gradients: empty batch");
  threads = std::max(1, std::min<int>(threads, static_cast<int>(trees.size())));
  if (threads == 1) return gradients(model, trees, targets, grads);

  std::vector<ParameterStore> partial(static_cast<size_t>(threads), model.params.zeros_like());
  std::vector<double> losses(static_cast<size_t>(threads), 0.0);
  std::vector<std::thread> workers;
  const size_t n = trees.size();
  for (int w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      size_t lo = n * static_cast<size_t>(w) / static_cast<size_t>(threads);
      size_t hi = n * static_cast<size_t>(w + 1) / static_cast<size_t>(threads);
      for (size_t i = lo; i < hi; ++i) {
        ForwardCache cache;
        losses[static_cast<size_t>(w)] += forward(model, *trees[i], targets[i], cache);
        backward(model, *trees[i], targets[i], cache, partial[static_cast<size_t>(w)]);
      }
    });
  }
  for (auto& t : workers) t.join();
  double total_loss = 0.0;
  for (int w = 0; w < threads; ++w) {  // ordered reduction for determinism
    total_loss += losses[static_cast<size_t>(w)];
    for (auto& [name, g] : grads.tensors) g += partial[static_cast<size_t>(w)].at(name);
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& [name, g] : grads.tensors) g *= inv;
  if (!std::isfinite(total_loss)) throw std::runtime_error("non-finite loss in batch");
  return total_loss * inv;
}

TrainResult train(const std::vector<ProgramRecord>& dataset, const ModelConfig& cfg_in,
                  const TrainOptions& opt) {
  PreparedDataset splits = split_records(dataset);
  if (splits.train.empty()) throw std::invalid_argument("train: empty training split");
  if (splits.val.empty()) throw std::invalid_argument("train: empty validation split");

  ModelConfig cfg = cfg_in;
  std::vector<ProgramRecord> train_copy;
  train_copy.reserve(splits.train.size());
  for (const ProgramRecord* r : splits.train) train_copy.push_back(*r);
  Vocabulary vocab = build_vocab(train_copy, 2);

  std::vector<std::string> names;
  if (cfg.task == Task::Name) {
    names = build_name_list(dataset);
    cfg.num_names = static_cast<int>(names.size());
  } else {
    int max_label = 0;
    for (const ProgramRecord* r : splits.train) max_label = std::max(max_label, r->label.value_or(0));
    cfg.num_classes = std::max(cfg.num_classes, max_label + 1);
  }

  Model model = init_model(cfg, vocab, names);
  OptimizerState opt_state = OptimizerState::create(model.params);

  std::vector<int> train_targets;
  std::vector<const AstTree*> train_trees;
  for (const ProgramRecord* r : splits.train) {
    int t = record_target(*r, model);
    if (t < 0) throw std::invalid_argument("train: record " + r->id + " has no usable target");
    train_targets.push_back(t);
    train_trees.push_back(&r->ast);
  }

  std::ofstream log_file;
  if (!opt.metrics_log_path.empty()) log_file.open(opt.metrics_log_path);

  TrainResult result;
  result.best_val = -1.0;
  auto t_start = std::chrono::steady_clock::now();
  int epochs_since_best = 0;

  std::vector<size_t> order(train_trees.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double lr = cfg.lr * std::pow(opt.lr_decay, (epoch - 1) / opt.lr_decay_every);
    std::mt19937_64 rng(cfg.seed * 0x2545f4914f6cdd1dULL + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    int batch_count = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<const AstTree*> trees;
      std::vector<int> targets;
      for (size_t i = start; i < end; ++i) {
        trees.push_back(train_trees[order[i]]);
        targets.push_back(train_targets[order[i]]);
      }
      ParameterStore grads = model.params.zeros_like();
      loss_sum += batch_gradients(model, trees, targets, grads, opt.threads);
      batch_count++;
      radam_step(model.params, grads, opt_state, lr);
    }

    std::vector<ProgramRecord> val_copy;
    for (const ProgramRecord* r : splits.val) val_copy.push_back(*r);
    EvalMetrics val = evaluate(model, val_copy);

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / std::max(1, batch_count);
    em.val_metric = val.accuracy;
    em.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.log.push_back(em);
    if (log_file) {
      nlohmann::json j{{"epoch", em.epoch},
                       {"train_loss", em.train_loss},
                       {"val_metric", em.val_metric},
                       {"wall_time", em.wall_time}};
      log_file << j.dump() << "\n";
      log_file.flush();
    }
    if (opt.verbose)
      std::cerr << "epoch " << epoch << " loss " << em.train_loss << " val " << em.val_metric
                << "\n";

    if (em.val_metric > result.best_val) {
      result.best_val = em.val_metric;
      result.best_epoch = epoch;
      result.best_model = model;
      epochs_since_best = 0;
      if (!opt.checkpoint_path.empty()) save_checkpoint(model, opt.checkpoint_path, &opt_state);
    } else if (++epochs_since_best >= opt.patience) {
      break;
    }
  }
  if (result.best_val < 0.0) {
    result.best_model = model;
    result.best_val = 0.0;
  }
  return result;
}

std::string EvalMetrics::to_json() const {
  nlohmann::json j{{"accuracy", accuracy},   {"precision", precision},
                   {"recall", recall},       {"f1", f1},
                   {"count", count},         {"unpredictable", unpredictable}};
  return j.dump(2);
}

EvalMetrics evaluate(const Model& model, const std::vector<ProgramRecord>& records) {
  EvalMetrics out;
  out.count = static_cast<int>(records.size());
  if (records.empty()) return out;

  if (model.cfg.task == Task::Classify) {
    const int k = model.cfg.num_classes;
    std::vector<int> tp(static_cast<size_t>(k), 0), fp(static_cast<size_t>(k), 0),
        fn(static_cast<size_t>(k), 0);
    int correct = 0;
    for (const ProgramRecord& r : records) {
      int pred = predict_class(model, r.ast);
      int gold = r.label.value_or(-1);
      if (pred == gold) {
        correct++;
        tp[static_cast<size_t>(gold)]++;
      } else {
        if (pred >= 0 && pred < k) fp[static_cast<size_t>(pred)]++;
        if (gold >= 0 && gold < k) fn[static_cast<size_t>(gold)]++;
      }
    }
    out.accuracy = static_cast<double>(correct) / records.size();
    double p_sum = 0, r_sum = 0, f_sum = 0;
    for (int c = 0; c < k; ++c) {
      double p = tp[static_cast<size_t>(c)] + fp[static_cast<size_t>(c)] > 0
                     ? static_cast<double>(tp[static_cast<size_t>(c)]) /
                           (tp[static_cast<size_t>(c)] + fp[static_cast<size_t>(c)])
                     : 0.0;
      double rr = tp[static_cast<size_t>(c)] + fn[static_cast<size_t>(c)] > 0
                      ? static_cast<double>(tp[static_cast<size_t>(c)]) /
                            (tp[static_cast<size_t>(c)] + fn[static_cast<size_t>(c)])
                      : 0.0;
      p_sum += p;
      r_sum += rr;
      f_sum += p + rr > 0 ? 2 * p * rr / (p + rr) : 0.0;
    }
    out.precision = p_sum / k;
    out.recall = r_sum / k;
    out.f1 = f_sum / k;
    return out;
  }

  int correct = 0;
  double p_sum = 0, r_sum = 0, f_sum = 0;
  for (const ProgramRecord& r : records) {
    ForwardCache cache;
    forward(model, r.ast, -1, cache);
    int pred = cache.pred.argmax;
    int gold = record_target(r, model);
    if (gold < 0) out.unpredictable++;
    if (pred == gold && gold >= 0) correct++;
    if (r.name_subwords) {
      SubwordMetrics m =
          subword_metrics(split_subwords(model.names.at(static_cast<size_t>(pred))),
                          *r.name_subwords);
      p_sum += m.precision;
      r_sum += m.recall;
      f_sum += m.f1;
    }
  }
  out.accuracy = static_cast<double>(correct) / records.size();
  out.precision = p_sum / records.size();
  out.recall = r_sum / records.size();
  out.f1 = f_sum / records.size();
  return out;
}

GradCheckResult grad_check(const ModelConfig& cfg, double eps, std::uint64_t seed,
                           int max_coords) {
  // tiny fixed programs; enough structure to reach every parameter
  std::vector<ProgramRecord> records(2);
  records[0].id = "gc0";
  records[0].ast = parse_source("int alpha(int a, int b) { int c = a + b; if (c > 3) { print(c); } return c * a; }");
  records[1].id = "gc1";
  records[1].ast =
      parse_source("int beta(int n) { int s = 0; while (n > 0) { s = s + n; n = n - 1; } print(s); return s; }");
  Vocabulary vocab = build_vocab(records, 1);

  std::vector<std::string> names;
  std::vector<int> targets;
  ModelConfig tiny = cfg;
  tiny.seed = seed;
  if (tiny.task == Task::Name) {
    names = {"alpha", "beta", "gamma", "delta", "eps"};
    tiny.num_names = static_cast<int>(names.size());
    targets = {1, 3};
  } else {
    targets = {0, 1};
  }
  Model model = init_model(tiny, vocab, names);

  std::vector<const AstTree*> trees{&records[0].ast, &records[1].ast};
  ParameterStore grads = model.params.zeros_like();
  gradients(model, trees, targets, grads);

  auto loss_at = [&]() {
    double total = 0.0;
    for (size_t i = 0; i < trees.size(); ++i) {
      ForwardCache cache;
      total += forward(model, *trees[i], targets[i], cache);
    }
    return total / static_cast<double>(trees.size());
  };

  struct Coord {
    std::string tensor;
    int row, col;
  };
  std::vector<Coord> coords;
  for (const auto& [name, t] : model.params.tensors)
    for (int i = 0; i < t.rows(); ++i)
      for (int j = 0; j < t.cols(); ++j) coords.push_back({name, i, j});
  if (static_cast<int>(coords.size()) > max_coords) {
    std::mt19937_64 rng(seed ^ 0xabcdef1234567890ULL);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<size_t>(max_coords));
  }

  GradCheckResult result;
  result.coords_checked = static_cast<int>(coords.size());
  for (const Coord& c : coords) {
    Matrix& t = model.params.at(c.tensor);
    double orig = t(c.row, c.col);
    t(c.row, c.col) = orig + eps;
    double f_plus = loss_at();
    t(c.row, c.col) = orig - eps;
    double f_minus = loss_at();
    t(c.row, c.col) = orig;
    double fd = (f_plus - f_minus) / (2.0 * eps);
    double g = grads.at(c.tensor)(c.row, c.col);
    double denom = std::max(1e-6, std::abs(fd) + std::abs(g));
    double rel = std::abs(fd - g) / denom;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_tensor = c.tensor;
    }
  }
  return result;
}

}  // namespace treecaps
