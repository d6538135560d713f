#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "treecaps/capsules.hpp"
#include "treecaps/heads.hpp"

namespace treecaps {

enum class Task { Classify, Name };

Task task_from_string(const std::string& s);
std::string to_string(Task t);

struct ModelConfig {
  int conv_layers = 8;  // M
  int type_dim = 30;
  int token_dim = 50;
  FeatureMode feature_mode = FeatureMode::Combine;
  RoutingKind routing_kind = RoutingKind::Vts;
  int routing_iterations = 3;  // r
  int n_sc = 100;
  int d_sc = 16;
  int d_cc = 16;
  Task task = Task::Classify;
  int num_classes = 2;  // kappa; N_cc for classification
  int num_names = 0;    // |L| for name prediction
  double lr = 0.001;
  int batch_size = 32;
  int epochs = 50;
  std::uint64_t seed = 0;
  double drsw_norm_prefilter = 0.0;
  MarginLossConfig margin;

  int n_cc() const { return task == Task::Classify ? num_classes : 1; }
  int feature_dim() const;
  // VTS has no transformation matrices, so its secondary capsules keep the
  // PVC dimension (M); the configured d_sc applies to the DRSW path only.
  int d_sc_effective() const {
    return routing_kind == RoutingKind::Vts ? conv_layers : d_sc;
  }
};

// All named trainable tensors, ordered by name.
struct ParameterStore {
  std::map<std::string, Matrix> tensors;

  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  bool has(const std::string& name) const { return tensors.count(name) > 0; }
  bool all_finite() const;
  ParameterStore zeros_like() const;
};

struct Model {
  ModelConfig cfg;
  Vocabulary vocab;
  std::vector<std::string> names;  // L (name task only)
  ParameterStore params;

  EmbeddingTables embedding_tables() const;
  DrswParams drsw_params() const;
  CcRoutingParams cc_params() const;
  NamePredictorHead name_head() const;
};

Model init_model(const ModelConfig& cfg, const Vocabulary& vocab,
                 const std::vector<std::string>& names = {});

struct ForwardCache {
  EncoderOutput enc;
  PvcResult pvc;
  std::vector<int> prefilter_keep;  // DRSW prefilter survivors (empty = all)
  Matrix routed_input;              // PVC capsules fed to SC routing
  VtsCache vts;
  DynRouteCache drsw;
  std::vector<Matrix> drsw_uhat;
  Matrix sc;  // n_sc x d_sc_effective
  DynRouteCache cc;
  std::vector<Matrix> cc_uhat;
  Matrix cc_out;  // n_cc x d_cc
  Prediction pred;
  double loss = 0.0;
};

// Runs the full pipeline. `target` is a class index or name index; pass -1
// for prediction only (loss stays 0).
double forward(const Model& model, const AstTree& tree, int target, ForwardCache& cache);

// Accumulates gradients of the cached sample's loss into `grads`.
void backward(const Model& model, const AstTree& tree, int target, const ForwardCache& cache,
              ParameterStore& grads);

// Mean-loss gradient over a batch, written into a zero-initialized `grads`
// (see ParameterStore::zeros_like). Returns the mean loss.
double gradients(const Model& model, const std::vector<const AstTree*>& trees,
                 const std::vector<int>& targets, ParameterStore& grads);

int predict_class(const Model& model, const AstTree& tree);

}  // namespace treecaps
