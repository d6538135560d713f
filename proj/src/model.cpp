#include "treecaps/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace treecaps {

Task task_from_string(const std::string& s) {
  if (s == "classify") return Task::Classify;
  if (s == "name") return Task::Name;
  throw std::invalid_argument("unknown task: " + s);
}

std::string to_string(Task t) { return t == Task::Classify ? "classify" : "name"; }

int ModelConfig::feature_dim() const {
  switch (feature_mode) {
    case FeatureMode::Type: return type_dim;
    case FeatureMode::Token: return token_dim;
    case FeatureMode::Combine: return type_dim + token_dim;
  }
  return 0;
}

Matrix& ParameterStore::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw std::invalid_argument("no tensor named " + name);
  return it->second;
}

const Matrix& ParameterStore::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw std::invalid_argument("no tensor named " + name);
  return it->second;
}

bool ParameterStore::all_finite() const {
  for (const auto& [name, t] : tensors)
    if (!t.allFinite()) return false;
  return true;
}

ParameterStore ParameterStore::zeros_like() const {
  ParameterStore out;
  for (const auto& [name, t] : tensors) out.tensors[name] = Matrix::Zero(t.rows(), t.cols());
  return out;
}

EmbeddingTables Model::embedding_tables() const {
  EmbeddingTables t;
  t.mode = cfg.feature_mode;
  if (cfg.feature_mode != FeatureMode::Token) t.type_table = &params.at("embed.type");
  if (cfg.feature_mode != FeatureMode::Type) t.token_table = &params.at("embed.token");
  return t;
}

DrswParams Model::drsw_params() const {
  return {&params.at("route.drsw.w_shared"), cfg.n_sc, cfg.d_sc};
}

CcRoutingParams Model::cc_params() const {
  return {&params.at("route.cc.w"), cfg.n_sc, cfg.n_cc(), cfg.d_cc};
}

NamePredictorHead Model::name_head() const {
  return {&params.at("head.functions_vocab"), &names};
}

namespace {

Matrix uniform_matrix(int rows, int cols, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

}  // namespace

Model init_model(const ModelConfig& cfg, const Vocabulary& vocab,
                 const std::vector<std::string>& names) {
  Model model;
  model.cfg = cfg;
  model.vocab = vocab;
  model.names = names;
  if (cfg.task == Task::Name) {
    if (names.empty()) throw std::invalid_argument("name task requires a name vocabulary");
    model.cfg.num_names = static_cast<int>(names.size());
  }
  std::mt19937_64 rng(cfg.seed);
  const int d = cfg.feature_dim();
  const double conv_scale = std::sqrt(6.0 / (2.0 * d));
  auto& t = model.params.tensors;
  // insertion in a fixed textual order so initialization is reproducible
  if (cfg.feature_mode != FeatureMode::Token)
    t["embed.type"] = uniform_matrix(vocab.num_types(), cfg.type_dim, 0.05, rng);
  if (cfg.feature_mode != FeatureMode::Type)
    t["embed.token"] = uniform_matrix(vocab.num_tokens(), cfg.token_dim, 0.05, rng);
  for (int m = 0; m < cfg.conv_layers; ++m) {
    std::string p = "conv." + std::to_string(m) + ".";
    t[p + "w_top"] = uniform_matrix(d, d, conv_scale, rng);
    t[p + "w_left"] = uniform_matrix(d, d, conv_scale, rng);
    t[p + "w_right"] = uniform_matrix(d, d, conv_scale, rng);
    t[p + "bias"] = Matrix::Zero(d, 1);
  }
  const int d_pvc = cfg.conv_layers;
  if (cfg.routing_kind == RoutingKind::Drsw) {
    double s = std::sqrt(6.0 / (d_pvc + cfg.d_sc));
    t["route.drsw.w_shared"] = uniform_matrix(cfg.n_sc * cfg.d_sc, d_pvc, s, rng);
  }
  {
    double s = std::sqrt(6.0 / (cfg.d_sc_effective() + cfg.d_cc));
    t["route.cc.w"] =
        uniform_matrix(cfg.n_sc * cfg.n_cc() * cfg.d_cc, cfg.d_sc_effective(), s, rng);
  }
  if (cfg.task == Task::Name)
    t["head.functions_vocab"] =
        uniform_matrix(static_cast<int>(names.size()), cfg.d_cc, 0.05, rng);
  return model;
}

namespace {

std::vector<ConvLayerParams> conv_views(const Model& model,
                                        std::vector<Vector>& bias_storage) {
  std::vector<ConvLayerParams> out;
  bias_storage.clear();
  bias_storage.reserve(static_cast<size_t>(model.cfg.conv_layers));
  for (int m = 0; m < model.cfg.conv_layers; ++m) {
    std::string p = "conv." + std::to_string(m) + ".";
    bias_storage.push_back(model.params.at(p + "bias").col(0));
  }
  for (int m = 0; m < model.cfg.conv_layers; ++m) {
    std::string p = "conv." + std::to_string(m) + ".";
    out.push_back({&model.params.at(p + "w_top"), &model.params.at(p + "w_left"),
                   &model.params.at(p + "w_right"), &bias_storage[static_cast<size_t>(m)]});
  }
  return out;
}

}  // namespace

double forward(const Model& model, const AstTree& tree, int target, ForwardCache& cache) {
  const ModelConfig& cfg = model.cfg;
  std::vector<Vector> bias_storage;
  auto layers = conv_views(model, bias_storage);
  cache.enc = encode(tree, model.embedding_tables(), layers, model.vocab);
  cache.pvc = form_pvc(cache.enc);

  if (cfg.routing_kind == RoutingKind::Vts) {
    cache.routed_input = cache.pvc.u;
    cache.sc = vts_route(cache.routed_input, cfg.routing_iterations, cfg.n_sc, &cache.vts);
  } else {
    cache.prefilter_keep.clear();
    if (cfg.drsw_norm_prefilter > 0.0) {
      for (int i = 0; i < cache.pvc.u.rows(); ++i)
        if (cache.pvc.u.row(i).norm() >= cfg.drsw_norm_prefilter)
          cache.prefilter_keep.push_back(i);
      if (cache.prefilter_keep.empty()) cache.prefilter_keep.push_back(0);
      cache.routed_input.resize(static_cast<int>(cache.prefilter_keep.size()), cache.pvc.u.cols());
      for (size_t k = 0; k < cache.prefilter_keep.size(); ++k)
        cache.routed_input.row(static_cast<int>(k)) = cache.pvc.u.row(cache.prefilter_keep[k]);
    } else {
      cache.routed_input = cache.pvc.u;
    }
    cache.sc = drsw_route(cache.routed_input, model.drsw_params(), cfg.routing_iterations,
                          &cache.drsw, &cache.drsw_uhat);
  }
  cache.cc_out =
      cc_route(cache.sc, model.cc_params(), cfg.routing_iterations, &cache.cc, &cache.cc_uhat);

  CapsuleSet cc_set{cache.cc_out, CapsuleLayer::CC};
  if (cfg.task == Task::Classify) {
    cache.pred = classify(cc_set);
    cache.loss = target >= 0 ? margin_loss(cc_set, target, cfg.margin) : 0.0;
  } else {
    Vector v_c = cache.cc_out.row(0).transpose();
    cache.pred = name_logits(v_c, model.name_head());
    cache.loss = target >= 0 ? cross_entropy(cache.pred, target) : 0.0;
  }
  return cache.loss;
}

void backward(const Model& model, const AstTree& tree, int target, const ForwardCache& cache,
              ParameterStore& grads) {
  const ModelConfig& cfg = model.cfg;
  Matrix d_cc_out;
  if (cfg.task == Task::Classify) {
    CapsuleSet cc_set{cache.cc_out, CapsuleLayer::CC};
    d_cc_out = margin_loss_backward(cc_set, target, cfg.margin);
  } else {
    Vector v_c = cache.cc_out.row(0).transpose();
    Vector d_vc =
        cross_entropy_backward(v_c, model.name_head(), target, grads.at("head.functions_vocab"));
    d_cc_out = Matrix::Zero(cache.cc_out.rows(), cache.cc_out.cols());
    d_cc_out.row(0) = d_vc.transpose();
  }

  Matrix d_sc = cc_route_backward(cache.sc, model.cc_params(), cache.cc_uhat, cache.cc, d_cc_out,
                                  grads.at("route.cc.w"));

  Matrix d_pvc_u;
  if (cfg.routing_kind == RoutingKind::Vts) {
    d_pvc_u = vts_route_backward(cache.routed_input, cache.vts, d_sc);
  } else {
    Matrix d_routed = drsw_route_backward(cache.routed_input, model.drsw_params(), cache.drsw_uhat,
                                          cache.drsw, d_sc, grads.at("route.drsw.w_shared"));
    if (!cache.prefilter_keep.empty()) {
      d_pvc_u = Matrix::Zero(cache.pvc.u.rows(), cache.pvc.u.cols());
      for (size_t k = 0; k < cache.prefilter_keep.size(); ++k)
        d_pvc_u.row(cache.prefilter_keep[k]) = d_routed.row(static_cast<int>(k));
    } else {
      d_pvc_u = std::move(d_routed);
    }
  }

  const int nv = tree.size();
  const int d = cfg.feature_dim();
  std::vector<Matrix> d_layers(static_cast<size_t>(cfg.conv_layers), Matrix::Zero(nv, d));
  form_pvc_backward(cache.pvc, d_pvc_u, nv, d, d_layers);

  std::vector<Vector> bias_storage;
  auto layers = conv_views(model, bias_storage);
  Matrix d_input;
  for (int m = cfg.conv_layers - 1; m >= 0; --m) {
    std::string p = "conv." + std::to_string(m) + ".";
    const Matrix& input = m == 0 ? cache.enc.init_features
                                 : cache.enc.layer_features[static_cast<size_t>(m - 1)];
    Vector gbias = grads.at(p + "bias").col(0);
    d_input = conv_layer_backward(input, cache.enc.layer_features[static_cast<size_t>(m)],
                                  d_layers[static_cast<size_t>(m)], tree,
                                  layers[static_cast<size_t>(m)], grads.at(p + "w_top"),
                                  grads.at(p + "w_left"), grads.at(p + "w_right"), gbias);
    grads.at(p + "bias").col(0) = gbias;
    if (m > 0) d_layers[static_cast<size_t>(m - 1)] += d_input;
  }

  Matrix* g_type = cfg.feature_mode != FeatureMode::Token ? &grads.at("embed.type") : nullptr;
  Matrix* g_token = cfg.feature_mode != FeatureMode::Type ? &grads.at("embed.token") : nullptr;
  init_features_backward(tree, model.embedding_tables(), model.vocab, d_input, g_type, g_token);
}

double gradients(const Model& model, const std::vector<const AstTree*>& trees,
                 const std::vector<int>& targets, ParameterStore& grads) {
  if (trees.empty() || trees.size() != targets.size())
    throw std::invalid_argument("gradients: empty or mismatched batch");
  double total_loss = 0.0;
  for (size_t i = 0; i < trees.size(); ++i) {
    ForwardCache cache;
    total_loss += forward(model, *trees[i], targets[i], cache);
    backward(model, *trees[i], targets[i], cache, grads);
  }
  const double inv = 1.0 / static_cast<double>(trees.size());
  for (auto& [name, g] : grads.tensors) g *= inv;
  if (!std::isfinite(total_loss))
    throw std::runtime_error("non-finite loss in batch");
  return total_loss * inv;
}

int predict_class(const Model& model, const AstTree& tree) {
  ForwardCache cache;
  forward(model, tree, -1, cache);
  return cache.pred.argmax;
}

}  // namespace treecaps
