#include "treecaps/heads.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <stdexcept>

namespace treecaps {

Prediction classify(const CapsuleSet& cc) {
  const int k = cc.count();
  if (k < 1) throw std::invalid_argument("classify: empty capsule set");
  Prediction p;
  p.distribution.resize(static_cast<size_t>(k));
  double sum = 0.0, best = -1.0;
  for (int i = 0; i < k; ++i) {
    double norm = cc.vectors.row(i).norm();
    p.distribution[static_cast<size_t>(i)] = norm;
    sum += norm;
    if (norm > best) {
      best = norm;
      p.argmax = i;
    }
  }
  if (sum <= 0.0) {  // degenerate all-zero case
    for (double& d : p.distribution) d = 1.0 / k;
    p.argmax = 0;
    p.score = 1.0 / k;
    return p;
  }
  for (double& d : p.distribution) d /= sum;
  p.score = p.distribution[static_cast<size_t>(p.argmax)];
  return p;
}

double margin_loss(const CapsuleSet& cc, int true_class, const MarginLossConfig& cfg) {
  if (true_class < 0 || true_class >= cc.count())
    throw std::invalid_argument("margin_loss: true_class out of range");
  double loss = 0.0;
  for (int k = 0; k < cc.count(); ++k) {
    double norm = cc.vectors.row(k).norm();
    if (k == true_class) {
      double h = std::max(0.0, cfg.m_plus - norm);
      loss += h * h;
    } else {
      double h = std::max(0.0, norm - cfg.m_minus);
      loss += cfg.lambda_down * h * h;
    }
  }
  return loss;
}

Matrix margin_loss_backward(const CapsuleSet& cc, int true_class, const MarginLossConfig& cfg) {
  Matrix grad = Matrix::Zero(cc.vectors.rows(), cc.vectors.cols());
  for (int k = 0; k < cc.count(); ++k) {
    double norm = cc.vectors.row(k).norm();
    if (norm < 1e-300) continue;  // hinge gradient direction undefined at the origin
    if (k == true_class) {
      double h = cfg.m_plus - norm;
      if (h > 0.0) grad.row(k) = (-2.0 * h / norm) * cc.vectors.row(k);
    } else {
      double h = norm - cfg.m_minus;
      if (h > 0.0) grad.row(k) = (2.0 * cfg.lambda_down * h / norm) * cc.vectors.row(k);
    }
  }
  return grad;
}

Prediction name_logits(const Vector& code_vector, const NamePredictorHead& head) {
  const Matrix& vocab = *head.functions_vocab;
  if (vocab.cols() != code_vector.size())
    throw std::invalid_argument("name_logits: dimension mismatch");
  Vector logits = vocab * code_vector;
  double mx = logits.maxCoeff();
  Eigen::ArrayXd e = (logits.array() - mx).exp();
  Eigen::ArrayXd q = e / e.sum();
  Prediction p;
  p.distribution.assign(q.data(), q.data() + q.size());
  int arg = 0;
  logits.maxCoeff(&arg);
  p.argmax = arg;
  p.score = p.distribution[static_cast<size_t>(arg)];
  return p;
}

double cross_entropy(const Prediction& pred, int target) {
  if (target < 0 || target >= static_cast<int>(pred.distribution.size()))
    throw std::invalid_argument("cross_entropy: invalid target index");
  return -std::log(std::max(pred.distribution[static_cast<size_t>(target)], 1e-300));
}

Vector cross_entropy_backward(const Vector& code_vector, const NamePredictorHead& head, int target,
                              Matrix& g_functions_vocab) {
  const Matrix& vocab = *head.functions_vocab;
  Vector logits = vocab * code_vector;
  double mx = logits.maxCoeff();
  Eigen::ArrayXd e = (logits.array() - mx).exp();
  Vector q = (e / e.sum()).matrix();
  q(target) -= 1.0;  // dL/dlogits = q - onehot(target)
  g_functions_vocab += q * code_vector.transpose();
  return vocab.transpose() * q;
}

std::vector<std::string> split_subwords(const std::string& name) {
  std::vector<std::string> parts;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      parts.push_back(cur);
      cur.clear();
    }
  };
  char prev = '\0';
  for (char ch : name) {
    if (ch == '_') {
      flush();
    } else if (std::isupper(static_cast<unsigned char>(ch))) {
      flush();
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (std::isdigit(static_cast<unsigned char>(ch)) !=
               std::isdigit(static_cast<unsigned char>(prev))) {
      // boundary at both edges of a digit run
      flush();
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else {
      cur += ch;
    }
    prev = ch;
  }
  flush();
  return parts;
}

SubwordMetrics subword_metrics(const std::vector<std::string>& predicted,
                               const std::vector<std::string>& gold) {
  std::map<std::string, int> gold_counts;
  for (const std::string& w : gold) gold_counts[w]++;
  int hits = 0;
  for (const std::string& w : predicted) {
    auto it = gold_counts.find(w);
    if (it != gold_counts.end() && it->second > 0) {
      it->second--;
      hits++;
    }
  }
  SubwordMetrics m;
  if (!predicted.empty()) m.precision = static_cast<double>(hits) / predicted.size();
  if (!gold.empty()) m.recall = static_cast<double>(hits) / gold.size();
  if (m.precision + m.recall > 0.0)
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

SubwordMetrics subword_metrics(const std::string& predicted_name, const std::string& gold_name) {
  return subword_metrics(split_subwords(predicted_name), split_subwords(gold_name));
}

}  // namespace treecaps
