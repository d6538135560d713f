#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "treecaps/ast.hpp"

namespace treecaps {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class FeatureMode { Type, Token, Combine };

FeatureMode feature_mode_from_string(const std::string& s);
std::string to_string(FeatureMode m);

struct EmbeddingTables {
  const Matrix* type_table = nullptr;   // |type_names| x type_dim
  const Matrix* token_table = nullptr;  // |tokens| x token_dim
  FeatureMode mode = FeatureMode::Combine;

  int feature_dim() const;
};

struct ConvLayerParams {
  const Matrix* w_top = nullptr;    // D x D
  const Matrix* w_left = nullptr;   // D x D
  const Matrix* w_right = nullptr;  // D x D
  const Vector* bias = nullptr;     // D
};

struct WindowWeights {
  double eta_top, eta_left, eta_right;
};

// Window convention for depth-2 windows (node plus direct children):
// the parent gets (1,0,0); child at position p of n interpolates left/right
// by (p-1)/(n-1), with the only-child case fixed at 0.5/0.5.
WindowWeights eta_weights(int window_depth, int node_depth, int position, int sibling_count);

struct EncoderOutput {
  Matrix init_features;               // |V| x D
  std::vector<Matrix> layer_features; // M matrices, |V| x D
};

Matrix init_node_features(const AstTree& tree, const EmbeddingTables& tables,
                          const Vocabulary& vocab);

Matrix conv_layer(const Matrix& features, const AstTree& tree, const ConvLayerParams& params);

EncoderOutput encode(const AstTree& tree, const EmbeddingTables& tables,
                     const std::vector<ConvLayerParams>& layers, const Vocabulary& vocab);

// Backward pass of one convolution layer.
// `input` is the layer's input features, `output` its tanh output,
// `d_output` the incoming gradient. Weight gradients are accumulated into
// gw_* / gbias; returns the gradient with respect to `input`.
Matrix conv_layer_backward(const Matrix& input, const Matrix& output, const Matrix& d_output,
                           const AstTree& tree, const ConvLayerParams& params, Matrix& gw_top,
                           Matrix& gw_left, Matrix& gw_right, Vector& gbias);

// Scatters d_init (|V| x D) into the embedding gradient tables.
void init_features_backward(const AstTree& tree, const EmbeddingTables& tables,
                            const Vocabulary& vocab, const Matrix& d_init, Matrix* g_type_table,
                            Matrix* g_token_table);

}  // namespace treecaps
