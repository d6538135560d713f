#pragma once

#include <string>
#include <vector>

#include "treecaps/capsules.hpp"

namespace treecaps {

struct MarginLossConfig {
  double m_plus = 0.9;
  double m_minus = 0.1;
  double lambda_down = 0.5;
};

struct Prediction {
  std::vector<double> distribution;
  int argmax = 0;
  double score = 0.0;
};

// Class scores are per-capsule L2 norms; ties resolve to the lowest index.
// All-zero capsules degenerate to a uniform distribution over argmax 0.
Prediction classify(const CapsuleSet& cc);

double margin_loss(const CapsuleSet& cc, int true_class, const MarginLossConfig& cfg);
// Gradient of the margin loss with respect to the capsule vectors.
Matrix margin_loss_backward(const CapsuleSet& cc, int true_class, const MarginLossConfig& cfg);

struct NamePredictorHead {
  const Matrix* functions_vocab = nullptr;  // |L| x d_cc
  const std::vector<std::string>* names = nullptr;
};

Prediction name_logits(const Vector& code_vector, const NamePredictorHead& head);

double cross_entropy(const Prediction& pred, int target);
// Gradients of -log q(target): with respect to v_C and (accumulated) the vocab rows.
Vector cross_entropy_backward(const Vector& code_vector, const NamePredictorHead& head, int target,
                              Matrix& g_functions_vocab);

// camelCase / underscore / digit-boundary splitting, lowercased.
std::vector<std::string> split_subwords(const std::string& name);

struct SubwordMetrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

// Multiset precision/recall/F1 over sub-words.
SubwordMetrics subword_metrics(const std::string& predicted_name, const std::string& gold_name);
SubwordMetrics subword_metrics(const std::vector<std::string>& predicted,
                               const std::vector<std::string>& gold);

}  // namespace treecaps
