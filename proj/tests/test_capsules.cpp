#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <random>

#include "treecaps/capsules.hpp"

using namespace treecaps;

// ---------------------------------------------------------------------------
// Independent brute-force references, written in plain scalar loops against
// the routing pseudocode, deliberately sharing no code with the library.
// ---------------------------------------------------------------------------
namespace ref {

std::vector<double> squash(const std::vector<double>& c) {
  double n2 = 0;
  for (double x : c) n2 += x * x;
  double n = std::sqrt(n2);
  std::vector<double> out(c.size(), 0.0);
  if (n == 0) return out;
  double scale = (n2 / (1 + n2)) / n;
  for (size_t i = 0; i < c.size(); ++i) out[i] = scale * c[i];
  return out;
}

using Mat = std::vector<std::vector<double>>;

// Dynamic routing (shared mechanics of DRSW and CC): uhat[i][j] is the
// prediction vector of child i for parent j.
Mat dynamic_route(const std::vector<Mat>& uhat, int b, int a, int d, int r) {
  Mat alpha(static_cast<size_t>(b), std::vector<double>(static_cast<size_t>(a), 0.0));
  Mat v(static_cast<size_t>(a), std::vector<double>(static_cast<size_t>(d), 0.0));
  for (int it = 0; it < r; ++it) {
    Mat beta = alpha;
    for (int i = 0; i < b; ++i) {
      double mx = *std::max_element(alpha[static_cast<size_t>(i)].begin(),
                                    alpha[static_cast<size_t>(i)].end());
      double z = 0;
      for (int j = 0; j < a; ++j)
        z += std::exp(alpha[static_cast<size_t>(i)][static_cast<size_t>(j)] - mx);
      for (int j = 0; j < a; ++j)
        beta[static_cast<size_t>(i)][static_cast<size_t>(j)] =
            std::exp(alpha[static_cast<size_t>(i)][static_cast<size_t>(j)] - mx) / z;
    }
    for (int j = 0; j < a; ++j) {
      std::vector<double> s(static_cast<size_t>(d), 0.0);
      for (int i = 0; i < b; ++i)
        for (int k = 0; k < d; ++k)
          s[static_cast<size_t>(k)] += beta[static_cast<size_t>(i)][static_cast<size_t>(j)] *
                                       uhat[static_cast<size_t>(i)][static_cast<size_t>(j)]
                                           [static_cast<size_t>(k)];
      v[static_cast<size_t>(j)] = squash(s);
    }
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < a; ++j) {
        double dot = 0;
        for (int k = 0; k < d; ++k)
          dot += uhat[static_cast<size_t>(i)][static_cast<size_t>(j)][static_cast<size_t>(k)] *
                 v[static_cast<size_t>(j)][static_cast<size_t>(k)];
        alpha[static_cast<size_t>(i)][static_cast<size_t>(j)] += dot;
      }
  }
  return v;
}

Mat drsw(const Mat& u, const Mat& w_stacked, int b, int n_sc, int d_sc, int d_pvc, int r) {
  std::vector<Mat> uhat(static_cast<size_t>(b),
                        Mat(static_cast<size_t>(n_sc),
                            std::vector<double>(static_cast<size_t>(d_sc), 0.0)));
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < n_sc; ++j)
      for (int k = 0; k < d_sc; ++k) {
        double s = 0;
        for (int q = 0; q < d_pvc; ++q)
          s += w_stacked[static_cast<size_t>(j * d_sc + k)][static_cast<size_t>(q)] *
               u[static_cast<size_t>(i)][static_cast<size_t>(q)];
        uhat[static_cast<size_t>(i)][static_cast<size_t>(j)][static_cast<size_t>(k)] = s;
      }
  return dynamic_route(uhat, b, n_sc, d_sc, r);
}

// VTS: the alpha update precedes the softmax inside each iteration.
Mat vts(const Mat& u_in, int r, int a) {
  int b = static_cast<int>(u_in.size());
  int d = static_cast<int>(u_in[0].size());
  std::vector<int> idx(static_cast<size_t>(b));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int x, int y) {
    double nx = 0, ny = 0;
    for (double t : u_in[static_cast<size_t>(x)]) nx += t * t;
    for (double t : u_in[static_cast<size_t>(y)]) ny += t * t;
    return nx > ny;
  });
  int a_eff = std::min(a, b);
  Mat v(static_cast<size_t>(a_eff));
  for (int j = 0; j < a_eff; ++j) v[static_cast<size_t>(j)] = u_in[static_cast<size_t>(idx[static_cast<size_t>(j)])];
  Mat alpha(static_cast<size_t>(b), std::vector<double>(static_cast<size_t>(a_eff), 0.0));
  for (int it = 0; it < r; ++it) {
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < a_eff; ++j) {
        double dot = 0;
        for (int k = 0; k < d; ++k)
          dot += u_in[static_cast<size_t>(i)][static_cast<size_t>(k)] *
                 v[static_cast<size_t>(j)][static_cast<size_t>(k)];
        alpha[static_cast<size_t>(i)][static_cast<size_t>(j)] += dot;
      }
    Mat beta = alpha;
    for (int i = 0; i < b; ++i) {
      double mx = *std::max_element(alpha[static_cast<size_t>(i)].begin(),
                                    alpha[static_cast<size_t>(i)].end());
      double z = 0;
      for (int j = 0; j < a_eff; ++j)
        z += std::exp(alpha[static_cast<size_t>(i)][static_cast<size_t>(j)] - mx);
      for (int j = 0; j < a_eff; ++j)
        beta[static_cast<size_t>(i)][static_cast<size_t>(j)] =
            std::exp(alpha[static_cast<size_t>(i)][static_cast<size_t>(j)] - mx) / z;
    }
    for (int j = 0; j < a_eff; ++j) {
      std::vector<double> s(static_cast<size_t>(d), 0.0);
      for (int i = 0; i < b; ++i)
        for (int k = 0; k < d; ++k)
          s[static_cast<size_t>(k)] += beta[static_cast<size_t>(i)][static_cast<size_t>(j)] *
                                       u_in[static_cast<size_t>(i)][static_cast<size_t>(k)];
      v[static_cast<size_t>(j)] = squash(s);
    }
  }
  // pad rule: b < a yields zero rows for the missing capsules
  while (static_cast<int>(v.size()) < a) v.push_back(std::vector<double>(static_cast<size_t>(d), 0.0));
  return v;
}

Mat cc(const Mat& sc, const Mat& w_stacked, int n_sc, int n_cc, int d_cc, int d_in, int r) {
  std::vector<Mat> uhat(static_cast<size_t>(n_sc),
                        Mat(static_cast<size_t>(n_cc),
                            std::vector<double>(static_cast<size_t>(d_cc), 0.0)));
  for (int i = 0; i < n_sc; ++i)
    for (int j = 0; j < n_cc; ++j)
      for (int k = 0; k < d_cc; ++k) {
        double s = 0;
        for (int q = 0; q < d_in; ++q)
          s += w_stacked[static_cast<size_t>((i * n_cc + j) * d_cc + k)][static_cast<size_t>(q)] *
               sc[static_cast<size_t>(i)][static_cast<size_t>(q)];
        uhat[static_cast<size_t>(i)][static_cast<size_t>(j)][static_cast<size_t>(k)] = s;
      }
  return dynamic_route(uhat, n_sc, n_cc, d_cc, r);
}

}  // namespace ref

namespace {

Matrix to_eigen(const ref::Mat& m) {
  Matrix out(static_cast<long>(m.size()), static_cast<long>(m[0].size()));
  for (size_t i = 0; i < m.size(); ++i)
    for (size_t j = 0; j < m[0].size(); ++j)
      out(static_cast<long>(i), static_cast<long>(j)) = m[i][j];
  return out;
}

ref::Mat rand_mat(std::mt19937_64& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ref::Mat m(static_cast<size_t>(r), std::vector<double>(static_cast<size_t>(c)));
  for (auto& row : m)
    for (double& x : row) x = u(rng);
  return m;
}

}  // namespace

TEST_CASE("squash: golden values and invariants") {
  Vector zero = Vector::Zero(2);
  CHECK(squash(zero).norm() == 0.0);

  Vector e = Vector::Zero(3);
  e(1) = 1.0;
  CHECK((squash(e) - 0.5 * e).norm() <= 1e-15);

  Vector c(2);
  c << 3, 4;
  Vector v = squash(c);
  CHECK(v(0) == doctest::Approx(25.0 / 26.0 * 0.6).epsilon(1e-12));
  CHECK(v(1) == doctest::Approx(25.0 / 26.0 * 0.8).epsilon(1e-12));
}

TEST_CASE("squash: invariant suite over 10^4 random vectors") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::uniform_int_distribution<int> dim(1, 8);
  for (int trial = 0; trial < 10000; ++trial) {
    Vector c(dim(rng));
    for (int i = 0; i < c.size(); ++i) c(i) = u(rng);
    Vector v = squash(c);
    double n = c.norm();
    CHECK(v.norm() < 1.0);
    CHECK(v.norm() == doctest::Approx(n * n / (1 + n * n)).epsilon(1e-9));
    if (n > 1e-9) CHECK(c.dot(v) / (n * v.norm()) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("form_pvc: grouping and golden composition") {
  EncoderOutput enc;
  enc.layer_features.push_back(Matrix::Zero(1, 1));
  enc.layer_features.push_back(Matrix::Zero(1, 1));
  PvcResult zero = form_pvc(enc);
  CHECK(zero.u.rows() == 1);
  CHECK(zero.u.cols() == 2);
  CHECK(zero.u.cwiseAbs().maxCoeff() == 0.0);

  enc.layer_features[0](0, 0) = 3;
  enc.layer_features[1](0, 0) = 4;
  PvcResult g = form_pvc(enc);
  CHECK(g.u(0, 0) == doctest::Approx(25.0 / 26.0 * 0.6).epsilon(1e-12));
  CHECK(g.u(0, 1) == doctest::Approx(25.0 / 26.0 * 0.8).epsilon(1e-12));

  // shape contract: |V|=5, D=3, M=2 -> 15 capsules of dim 2, index v*D+d
  EncoderOutput big;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int m = 0; m < 2; ++m) {
    Matrix y(5, 3);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 3; ++j) y(i, j) = u(rng);
    big.layer_features.push_back(y);
  }
  PvcResult p = form_pvc(big);
  CHECK(p.u.rows() == 15);
  CHECK(p.u.cols() == 2);
  for (int v = 0; v < 5; ++v)
    for (int d = 0; d < 3; ++d) {
      Vector c(2);
      c << big.layer_features[0](v, d), big.layer_features[1](v, d);
      Vector s = squash(c);
      CHECK(p.u(v * 3 + d, 0) == doctest::Approx(s(0)).epsilon(1e-12));
      CHECK(p.u(v * 3 + d, 1) == doctest::Approx(s(1)).epsilon(1e-12));
    }
}

TEST_CASE("drsw_route: hand-traced golden cases") {
  // b=2, N_sc=1, identity W, r=1, u1=(0.8,0), u2=(0,0.6) -> squash(0.8,0.6)=(0.4,0.3)
  Matrix u(2, 2);
  u << 0.8, 0, 0, 0.6;
  Matrix w = Matrix::Identity(2, 2);
  DrswParams p{&w, 1, 2};
  Matrix v = drsw_route(u, p, 1);
  CHECK(v(0, 0) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(v(0, 1) == doctest::Approx(0.3).epsilon(1e-12));

  // b=1, N_sc=2, both blocks identity, r=1, u=(1,0) -> both parents squash(0.5,0)=(0.2,0)
  Matrix u2(1, 2);
  u2 << 1, 0;
  Matrix w2(4, 2);
  w2 << 1, 0, 0, 1, 1, 0, 0, 1;
  DrswParams p2{&w2, 2, 2};
  Matrix v2 = drsw_route(u2, p2, 1);
  for (int j = 0; j < 2; ++j) {
    CHECK(v2(j, 0) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(v2(j, 1) == doctest::Approx(0.0).epsilon(1e-12));
  }

  // zero input propagates to zero output for any r
  Matrix z = Matrix::Zero(3, 2);
  CHECK(drsw_route(z, p2, 3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("vts_route: hand-traced golden case and init property") {
  Matrix u(2, 2);
  u << 0.8, 0, 0, 0.6;
  VtsCache cache;
  Matrix v = vts_route(u, 1, 1, &cache);
  CHECK(cache.order == std::vector<int>{0});
  CHECK(v(0, 0) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(v(0, 1) == doctest::Approx(0.3).epsilon(1e-12));

  // b=a: initialization equals norm-sorted input rows
  Matrix u3(3, 2);
  u3 << 0.1, 0.2, 0.9, 0.1, 0.3, 0.3;
  VtsCache c3;
  vts_route(u3, 2, 3, &c3);
  CHECK(c3.order == std::vector<int>{1, 2, 0});
  CHECK((c3.v_init.row(0) - u3.row(1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((c3.v_init.row(1) - u3.row(2)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((c3.v_init.row(2) - u3.row(0)).cwiseAbs().maxCoeff() == 0.0);

  // pad rule: b < a yields zero rows beyond b
  Matrix pad = vts_route(u, 2, 4);
  CHECK(pad.rows() == 4);
  CHECK(pad.row(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(pad.row(3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cc_route: degenerate single-pair case") {
  Matrix sc(1, 3);
  sc << 0.3, -0.4, 0.5;
  Matrix w = Matrix::Identity(3, 3);
  CcRoutingParams p{&w, 1, 1, 3};
  Matrix v = cc_route(sc, p, 1);
  Vector expect = squash(Vector(sc.row(0)));
  CHECK((v.row(0).transpose() - expect).cwiseAbs().maxCoeff() <= 1e-15);

  Matrix z = Matrix::Zero(1, 3);
  CHECK(cc_route(z, p, 3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("routing oracle equivalence on random small instances") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> bd(1, 10), ad(1, 4), dd(1, 4), rd(1, 4);
  double worst = 0;
  for (int trial = 0; trial < 400; ++trial) {
    int b = bd(rng), n_sc = ad(rng), d_sc = dd(rng), d_pvc = dd(rng), r = rd(rng);

    // drsw
    ref::Mat u = rand_mat(rng, b, d_pvc);
    ref::Mat w = rand_mat(rng, n_sc * d_sc, d_pvc);
    Matrix mine_in = to_eigen(u), w_e = to_eigen(w);
    DrswParams dp{&w_e, n_sc, d_sc};
    Matrix mine = drsw_route(mine_in, dp, r);
    Matrix expect = to_eigen(ref::drsw(u, w, b, n_sc, d_sc, d_pvc, r));
    worst = std::max(worst, (mine - expect).cwiseAbs().maxCoeff());

    // vts
    int a = ad(rng);
    Matrix mine_v = vts_route(mine_in, r, a);
    Matrix expect_v = to_eigen(ref::vts(u, r, a));
    worst = std::max(worst, (mine_v - expect_v).cwiseAbs().maxCoeff());

    // cc
    int n_cc = ad(rng), d_cc = dd(rng);
    ref::Mat wcc = rand_mat(rng, b * n_cc * d_cc, d_pvc);
    Matrix wcc_e = to_eigen(wcc);
    CcRoutingParams cp{&wcc_e, b, n_cc, d_cc};
    Matrix mine_c = cc_route(mine_in, cp, r);
    Matrix expect_c = to_eigen(ref::cc(u, wcc, b, n_cc, d_cc, d_pvc, r));
    worst = std::max(worst, (mine_c - expect_c).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("routing beta rows sum to one at every iteration") {
  std::mt19937_64 rng(8);
  ref::Mat u = rand_mat(rng, 7, 3);
  Matrix u_e = to_eigen(u);

  VtsCache vc;
  vts_route(u_e, 3, 4, &vc);
  for (const Matrix& beta : vc.beta)
    for (int i = 0; i < beta.rows(); ++i)
      CHECK(beta.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));

  ref::Mat w = rand_mat(rng, 4 * 3, 3);
  Matrix w_e = to_eigen(w);
  DrswParams dp{&w_e, 4, 3};
  DynRouteCache dc;
  drsw_route(u_e, dp, 3, &dc);
  for (const Matrix& beta : dc.beta)
    for (int i = 0; i < beta.rows(); ++i)
      CHECK(beta.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("vts_route: permutation invariance for distinct norms") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    int b = 6, d = 3;
    Matrix u(b, d);
    std::uniform_real_distribution<double> dist(-1, 1);
    for (int i = 0; i < b; ++i) {
      for (int j = 0; j < d; ++j) u(i, j) = dist(rng);
      u.row(i) *= (1.0 + 0.37 * i);  // enforce distinct norms
    }
    Matrix base = vts_route(u, 3, 4);
    std::vector<int> perm{3, 0, 5, 1, 4, 2};
    Matrix up(b, d);
    for (int i = 0; i < b; ++i) up.row(i) = u.row(perm[static_cast<size_t>(i)]);
    Matrix permuted = vts_route(up, 3, 4);
    CHECK((base - permuted).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("softmax_rows backward matches finite differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-2, 2);
  Matrix logits(3, 4), grad(3, 4);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) { logits(i, j) = dist(rng); grad(i, j) = dist(rng); }
  Matrix out = softmax_rows(logits);
  Matrix g = softmax_rows_backward(out, grad);
  const double eps = 1e-6;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      Matrix lp = logits, lm = logits;
      lp(i, j) += eps;
      lm(i, j) -= eps;
      double fp = (softmax_rows(lp).array() * grad.array()).sum();
      double fm = (softmax_rows(lm).array() * grad.array()).sum();
      CHECK(g(i, j) == doctest::Approx((fp - fm) / (2 * eps)).epsilon(1e-5));
    }
}

TEST_CASE("squash_backward matches finite differences") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> dist(-2, 2);
  for (int trial = 0; trial < 20; ++trial) {
    Vector c(4), grad(4);
    for (int i = 0; i < 4; ++i) { c(i) = dist(rng); grad(i) = dist(rng); }
    Vector g = squash_backward(c, grad);
    const double eps = 1e-6;
    for (int i = 0; i < 4; ++i) {
      Vector cp = c, cm = c;
      cp(i) += eps;
      cm(i) -= eps;
      double fd = (squash(cp).dot(grad) - squash(cm).dot(grad)) / (2 * eps);
      CHECK(g(i) == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}
