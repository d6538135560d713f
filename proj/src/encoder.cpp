#include "treecaps/encoder.hpp"

#include <stdexcept>

namespace treecaps {

FeatureMode feature_mode_from_string(const std::string& s) {
  if (s == "type") return FeatureMode::Type;
  if (s == "token") return FeatureMode::Token;
  if (s == "combine") return FeatureMode::Combine;
  throw std::invalid_argument("unknown feature mode: " + s);
}

std::string to_string(FeatureMode m) {
  switch (m) {
    case FeatureMode::Type: return "type";
    case FeatureMode::Token: return "token";
    case FeatureMode::Combine: return "combine";
  }
  return "?";
}

int EmbeddingTables::feature_dim() const {
  switch (mode) {
    case FeatureMode::Type: return static_cast<int>(type_table->cols());
    case FeatureMode::Token: return static_cast<int>(token_table->cols());
    case FeatureMode::Combine:
      return static_cast<int>(type_table->cols() + token_table->cols());
  }
  return 0;
}

WindowWeights eta_weights(int window_depth, int node_depth, int position, int sibling_count) {
  if (window_depth != 2) throw std::invalid_argument("only depth-2 windows are supported");
  if (node_depth == 1) return {1.0, 0.0, 0.0};
  if (node_depth != 2) throw std::invalid_argument("node depth must be 1 or 2");
  if (position < 1 || position > sibling_count)
    throw std::invalid_argument("position out of range");
  double right = sibling_count == 1
                     ? 0.5
                     : static_cast<double>(position - 1) / static_cast<double>(sibling_count - 1);
  return {0.0, 1.0 - right, right};
}

Matrix init_node_features(const AstTree& tree, const EmbeddingTables& tables,
                          const Vocabulary& vocab) {
  const int nv = tree.size();
  const bool use_type = tables.mode != FeatureMode::Token;
  const bool use_token = tables.mode != FeatureMode::Type;
  if (use_type && tables.type_table->rows() != vocab.num_types())
    throw std::invalid_argument("type table size does not match vocabulary");
  if (use_token && tables.token_table->rows() != vocab.num_tokens())
    throw std::invalid_argument("token table size does not match vocabulary");
  Matrix x(nv, tables.feature_dim());
  for (int v = 0; v < nv; ++v) {
    const AstNode& node = tree.node(v);
    int col = 0;
    if (use_type) {
      int ti = vocab.type_index(node.node_type);
      x.block(v, col, 1, tables.type_table->cols()) = tables.type_table->row(ti);
      col += static_cast<int>(tables.type_table->cols());
    }
    if (use_token) {
      int ki = node.token ? vocab.token_index(*node.token) : Vocabulary::kUnkIndex;
      x.block(v, col, 1, tables.token_table->cols()) = tables.token_table->row(ki);
    }
  }
  return x;
}

namespace {

// eta-weighted child sums: a_left[v] = sum_k eta_left(k) x[c_k], same for right
void child_sums(const Matrix& features, const AstTree& tree, Matrix& a_left, Matrix& a_right) {
  const int nv = tree.size();
  a_left.setZero(nv, features.cols());
  a_right.setZero(nv, features.cols());
  for (int v = 0; v < nv; ++v) {
    const auto& children = tree.node(v).children;
    const int n = static_cast<int>(children.size());
    for (int k = 0; k < n; ++k) {
      WindowWeights w = eta_weights(2, 2, k + 1, n);
      a_left.row(v) += w.eta_left * features.row(children[static_cast<size_t>(k)]);
      a_right.row(v) += w.eta_right * features.row(children[static_cast<size_t>(k)]);
    }
  }
}

}  // namespace

Matrix conv_layer(const Matrix& features, const AstTree& tree, const ConvLayerParams& params) {
  const int d = static_cast<int>(features.cols());
  if (params.w_top->rows() != d || params.w_top->cols() != d)
    throw std::invalid_argument("conv weight dimension mismatch");
  Matrix a_left, a_right;
  child_sums(features, tree, a_left, a_right);
  Matrix z = features * params.w_top->transpose() + a_left * params.w_left->transpose() +
             a_right * params.w_right->transpose();
  z.rowwise() += params.bias->transpose();
  return z.array().tanh();
}

Matrix conv_layer_backward(const Matrix& input, const Matrix& output, const Matrix& d_output,
                           const AstTree& tree, const ConvLayerParams& params, Matrix& gw_top,
                           Matrix& gw_left, Matrix& gw_right, Vector& gbias) {
  // z = X Wt' + Al Wl' + Ar Wr' + b; y = tanh(z)
  Matrix dz = d_output.array() * (1.0 - output.array().square());
  Matrix a_left, a_right;
  child_sums(input, tree, a_left, a_right);
  gw_top += dz.transpose() * input;
  gw_left += dz.transpose() * a_left;
  gw_right += dz.transpose() * a_right;
  gbias += dz.colwise().sum().transpose();
  Matrix d_input = dz * (*params.w_top);
  Matrix d_a_left = dz * (*params.w_left);
  Matrix d_a_right = dz * (*params.w_right);
  const int nv = tree.size();
  for (int v = 0; v < nv; ++v) {
    const auto& children = tree.node(v).children;
    const int n = static_cast<int>(children.size());
    for (int k = 0; k < n; ++k) {
      WindowWeights w = eta_weights(2, 2, k + 1, n);
      d_input.row(children[static_cast<size_t>(k)]) +=
          w.eta_left * d_a_left.row(v) + w.eta_right * d_a_right.row(v);
    }
  }
  return d_input;
}

EncoderOutput encode(const AstTree& tree, const EmbeddingTables& tables,
                     const std::vector<ConvLayerParams>& layers, const Vocabulary& vocab) {
  EncoderOutput out;
  out.init_features = init_node_features(tree, tables, vocab);
  const Matrix* prev = &out.init_features;
  out.layer_features.reserve(layers.size());
  for (const ConvLayerParams& layer : layers) {
    out.layer_features.push_back(conv_layer(*prev, tree, layer));
    prev = &out.layer_features.back();
  }
  return out;
}

void init_features_backward(const AstTree& tree, const EmbeddingTables& tables,
                            const Vocabulary& vocab, const Matrix& d_init, Matrix* g_type_table,
                            Matrix* g_token_table) {
  const bool use_type = tables.mode != FeatureMode::Token;
  const bool use_token = tables.mode != FeatureMode::Type;
  for (int v = 0; v < tree.size(); ++v) {
    const AstNode& node = tree.node(v);
    int col = 0;
    if (use_type) {
      int ti = vocab.type_index(node.node_type);
      g_type_table->row(ti) += d_init.block(v, col, 1, g_type_table->cols());
      col += static_cast<int>(g_type_table->cols());
    }
    if (use_token) {
      int ki = node.token ? vocab.token_index(*node.token) : Vocabulary::kUnkIndex;
      g_token_table->row(ki) += d_init.block(v, col, 1, g_token_table->cols());
    }
  }
}

}  // namespace treecaps
