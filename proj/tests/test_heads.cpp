#include "doctest.h"

#include <cmath>
#include <random>

#include "treecaps/heads.hpp"

using namespace treecaps;

namespace {
CapsuleSet capsules_with_norms(const std::vector<double>& norms) {
  CapsuleSet cc;
  cc.layer_tag = CapsuleLayer::CC;
  cc.vectors = Matrix::Zero(static_cast<long>(norms.size()), 2);
  for (size_t i = 0; i < norms.size(); ++i) cc.vectors(static_cast<long>(i), 0) = norms[i];
  return cc;
}
}  // namespace

TEST_CASE("classify: argmax, tie rule, distribution") {
  Prediction a = classify(capsules_with_norms({0.9, 0.1}));
  CHECK(a.argmax == 0);
  Prediction tie = classify(capsules_with_norms({0.5, 0.5}));
  CHECK(tie.argmax == 0);
  Prediction d = classify(capsules_with_norms({0.2, 0.3, 0.5}));
  CHECK(d.argmax == 2);
  CHECK(d.distribution[0] == doctest::Approx(0.2));
  CHECK(d.distribution[1] == doctest::Approx(0.3));
  CHECK(d.distribution[2] == doctest::Approx(0.5));

  // scaling invariance of the argmax
  CapsuleSet scaled = capsules_with_norms({0.04, 0.06, 0.1});
  CHECK(classify(scaled).argmax == 2);
}

TEST_CASE("margin_loss: golden values") {
  MarginLossConfig cfg;
  CHECK(margin_loss(capsules_with_norms({0.9, 0.1}), 0, cfg) == doctest::Approx(0.0));
  CHECK(margin_loss(capsules_with_norms({0.0, 0.0}), 0, cfg) == doctest::Approx(0.81));
  CHECK(margin_loss(capsules_with_norms({0.5, 0.5}), 0, cfg) == doctest::Approx(0.24));
}

TEST_CASE("margin_loss_backward matches finite differences") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> dist(-0.8, 0.8);
  MarginLossConfig cfg;
  for (int trial = 0; trial < 30; ++trial) {
    CapsuleSet cc;
    cc.vectors = Matrix(3, 4);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) cc.vectors(i, j) = dist(rng);
    Matrix g = margin_loss_backward(cc, 1, cfg);
    const double eps = 1e-6;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) {
        CapsuleSet p = cc, m = cc;
        p.vectors(i, j) += eps;
        m.vectors(i, j) -= eps;
        double fd = (margin_loss(p, 1, cfg) - margin_loss(m, 1, cfg)) / (2 * eps);
        CHECK(g(i, j) == doctest::Approx(fd).epsilon(1e-4));
      }
  }
}

TEST_CASE("name_logits: softmax of dot products") {
  Matrix vocab(2, 2);
  vocab << 1, 0, 0, 1;
  std::vector<std::string> names{"a", "b"};
  NamePredictorHead head{&vocab, &names};
  Vector vc(2);
  vc << 1, 0;
  Prediction p = name_logits(vc, head);
  CHECK(p.distribution[0] == doctest::Approx(0.73106).epsilon(1e-4));
  CHECK(p.distribution[1] == doctest::Approx(0.26894).epsilon(1e-4));
  CHECK(p.argmax == 0);

  // identical rows give a uniform distribution
  Matrix same(3, 2);
  same << 0.4, -0.2, 0.4, -0.2, 0.4, -0.2;
  std::vector<std::string> n3{"a", "b", "c"};
  NamePredictorHead h3{&same, &n3};
  Prediction u = name_logits(vc, h3);
  for (double q : u.distribution) CHECK(q == doctest::Approx(1.0 / 3));
}

TEST_CASE("cross_entropy: golden values") {
  Prediction p;
  p.distribution = {1.0, 0.0};
  CHECK(cross_entropy(p, 0) == doctest::Approx(0.0));
  p.distribution = {0.25, 0.25, 0.25, 0.25};
  CHECK(cross_entropy(p, 2) == doctest::Approx(std::log(4.0)).epsilon(1e-9));
  p.distribution = {0.5, 0.5};
  CHECK(cross_entropy(p, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("cross_entropy_backward matches finite differences") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> dist(-1, 1);
  Matrix vocab(4, 3);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) vocab(i, j) = dist(rng);
  std::vector<std::string> names{"a", "b", "c", "d"};
  Vector vc(3);
  for (int i = 0; i < 3; ++i) vc(i) = dist(rng);
  const int target = 2;

  NamePredictorHead head{&vocab, &names};
  Matrix g_vocab = Matrix::Zero(4, 3);
  Vector g_vc = cross_entropy_backward(vc, head, target, g_vocab);

  const double eps = 1e-6;
  auto loss = [&](const Vector& v, const Matrix& w) {
    NamePredictorHead h{&w, &names};
    return cross_entropy(name_logits(v, h), target);
  };
  for (int i = 0; i < 3; ++i) {
    Vector vp = vc, vm = vc;
    vp(i) += eps;
    vm(i) -= eps;
    CHECK(g_vc(i) ==
          doctest::Approx((loss(vp, vocab) - loss(vm, vocab)) / (2 * eps)).epsilon(1e-5));
  }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      Matrix wp = vocab, wm = vocab;
      wp(i, j) += eps;
      wm(i, j) -= eps;
      CHECK(g_vocab(i, j) ==
            doctest::Approx((loss(vc, wp) - loss(vc, wm)) / (2 * eps)).epsilon(1e-5));
    }
}

TEST_CASE("split_subwords: camelCase, underscores, digits") {
  CHECK(split_subwords("computeResult") == std::vector<std::string>{"compute", "result"});
  CHECK(split_subwords("result_compute") == std::vector<std::string>{"result", "compute"});
  CHECK(split_subwords("sum2items") == std::vector<std::string>{"sum", "2", "items"});
  CHECK(split_subwords("HTTPServer").size() >= 2);
  CHECK(split_subwords("x") == std::vector<std::string>{"x"});
}

TEST_CASE("subword_metrics: the three worked examples") {
  SubwordMetrics exact = subword_metrics("result_compute", "computeResult");
  CHECK(exact.precision == doctest::Approx(1.0));
  CHECK(exact.recall == doctest::Approx(1.0));
  CHECK(exact.f1 == doctest::Approx(1.0));

  SubwordMetrics partial = subword_metrics("compute", "computeResult");
  CHECK(partial.precision == doctest::Approx(1.0));
  CHECK(partial.recall == doctest::Approx(0.5));

  SubwordMetrics over = subword_metrics("compute_model_result", "computeResult");
  CHECK(over.precision == doctest::Approx(2.0 / 3.0));
  CHECK(over.recall == doctest::Approx(1.0));
}

TEST_CASE("subword_metrics: multiset semantics and zero guard") {
  // duplicated sub-word counts once per occurrence
  SubwordMetrics dup = subword_metrics("sum_sum", "sum");
  CHECK(dup.precision == doctest::Approx(0.5));
  CHECK(dup.recall == doctest::Approx(1.0));

  SubwordMetrics none = subword_metrics("alpha", "beta");
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
}
