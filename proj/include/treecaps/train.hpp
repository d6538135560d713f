#pragma once

#include <string>
#include <vector>

#include "treecaps/checkpoint.hpp"
#include "treecaps/model.hpp"

namespace treecaps {

struct TrainOptions {
  int patience = 10;          // early stopping on validation metric
  double lr_decay = 0.5;      // step decay factor
  int lr_decay_every = 20;    // epochs
  int threads = 1;
  std::string metrics_log_path;  // JSON-lines, empty = no log file
  std::string checkpoint_path;   // best-validation checkpoint, empty = no file
  bool verbose = false;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  double wall_time = 0.0;  // seconds since training start
};

struct TrainResult {
  Model best_model;
  std::vector<EpochMetrics> log;
  double best_val = 0.0;
  int best_epoch = 0;
};

// Builds vocabulary (and the name list for the naming task) from the train
// split, trains with RAdam and seeded shuffling, and keeps the best
// validation model. Fully reproducible given cfg.seed.
TrainResult train(const std::vector<ProgramRecord>& dataset, const ModelConfig& cfg,
                  const TrainOptions& opt = {});

struct EvalMetrics {
  double accuracy = 0.0;
  double precision = 0.0;  // sub-word metrics (naming task; = accuracy fields otherwise)
  double recall = 0.0;
  double f1 = 0.0;
  int count = 0;
  int unpredictable = 0;  // gold names outside the closed vocabulary L

  std::string to_json() const;
};

EvalMetrics evaluate(const Model& model, const std::vector<ProgramRecord>& records);

// Mean batch gradients, optionally fanned out over worker threads with a
// deterministic ordered reduction. Returns the mean loss.
double batch_gradients(const Model& model, const std::vector<const AstTree*>& trees,
                       const std::vector<int>& targets, ParameterStore& grads, int threads);

// Compares analytic gradients against central finite differences on a tiny
// model in double precision; returns the max relative error over up to
// `max_coords` sampled coordinates.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  int coords_checked = 0;
};

GradCheckResult grad_check(const ModelConfig& cfg, double eps = 1e-5, std::uint64_t seed = 0,
                           int max_coords = 1000);

}  // namespace treecaps
