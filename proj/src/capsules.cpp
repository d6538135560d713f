#include "treecaps/capsules.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace treecaps {

RoutingKind routing_kind_from_string(const std::string& s) {
  if (s == "drsw") return RoutingKind::Drsw;
  if (s == "vts") return RoutingKind::Vts;
  throw std::invalid_argument("unknown routing kind: " + s);
}

std::string to_string(RoutingKind k) { return k == RoutingKind::Drsw ? "drsw" : "vts"; }

namespace {
constexpr double kNormGuard = 1e-300;
}

Vector squash(const Vector& c) {
  double n2 = c.squaredNorm();
  double n = std::sqrt(n2);
  if (n < kNormGuard) return Vector::Zero(c.size());
  return (n / (1.0 + n2)) * c;
}

Vector squash_backward(const Vector& c, const Vector& grad) {
  double n2 = c.squaredNorm();
  double n = std::sqrt(n2);
  if (n < kNormGuard) return Vector::Zero(c.size());
  // u = s(n) c with s = n/(1+n^2); J = s I + s'(n)/n c c^T, s' = (1-n^2)/(1+n^2)^2
  double s = n / (1.0 + n2);
  double sp = (1.0 - n2) / ((1.0 + n2) * (1.0 + n2));
  return s * grad + (sp / n) * c.dot(grad) * c;
}

Matrix squash_rows(const Matrix& c) {
  Matrix out(c.rows(), c.cols());
  for (int i = 0; i < c.rows(); ++i) out.row(i) = squash(c.row(i)).transpose();
  return out;
}

Matrix squash_rows_backward(const Matrix& c, const Matrix& grad) {
  Matrix out(c.rows(), c.cols());
  for (int i = 0; i < c.rows(); ++i)
    out.row(i) = squash_backward(c.row(i), grad.row(i)).transpose();
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (int i = 0; i < logits.rows(); ++i) {
    double mx = logits.row(i).maxCoeff();
    Eigen::ArrayXd e = (logits.row(i).array() - mx).exp();
    out.row(i) = (e / e.sum()).matrix();
  }
  return out;
}

Matrix softmax_rows_backward(const Matrix& softmax_out, const Matrix& grad) {
  Matrix out(grad.rows(), grad.cols());
  for (int i = 0; i < grad.rows(); ++i) {
    double dot = softmax_out.row(i).dot(grad.row(i));
    out.row(i) = softmax_out.row(i).array() * (grad.row(i).array() - dot);
  }
  return out;
}

// ---- PVC -----------------------------------------------------------------

PvcResult form_pvc(const EncoderOutput& enc) {
  const int m = static_cast<int>(enc.layer_features.size());
  if (m == 0) throw std::invalid_argument("form_pvc: no layer features");
  const int nv = static_cast<int>(enc.layer_features[0].rows());
  const int d = static_cast<int>(enc.layer_features[0].cols());
  PvcResult out;
  out.pre.resize(nv * d, m);
  for (int layer = 0; layer < m; ++layer) {
    const Matrix& y = enc.layer_features[static_cast<size_t>(layer)];
    for (int v = 0; v < nv; ++v)
      for (int f = 0; f < d; ++f) out.pre(v * d + f, layer) = y(v, f);
  }
  out.u = squash_rows(out.pre);
  return out;
}

CapsuleSet form_pvc_capsules(const EncoderOutput& enc) {
  return {form_pvc(enc).u, CapsuleLayer::PVC};
}

void form_pvc_backward(const PvcResult& pvc, const Matrix& d_u, int num_nodes, int feature_dim,
                       std::vector<Matrix>& d_layer_features) {
  Matrix d_pre = squash_rows_backward(pvc.pre, d_u);
  const int m = static_cast<int>(d_pre.cols());
  for (int layer = 0; layer < m; ++layer) {
    Matrix& dy = d_layer_features[static_cast<size_t>(layer)];
    for (int v = 0; v < num_nodes; ++v)
      for (int f = 0; f < feature_dim; ++f) dy(v, f) += d_pre(v * feature_dim + f, layer);
  }
}

// ---- dynamic routing (agreement-based coefficient refinement) ------------

Matrix dynamic_route(const std::vector<Matrix>& uhat, int r, DynRouteCache* cache) {
  const int a = static_cast<int>(uhat.size());
  if (a == 0 || r < 1) throw std::invalid_argument("dynamic_route: bad arguments");
  const int b = static_cast<int>(uhat[0].rows());
  const int d = static_cast<int>(uhat[0].cols());
  Matrix alpha = Matrix::Zero(b, a);
  Matrix v(a, d);
  for (int t = 0; t < r; ++t) {
    Matrix beta = softmax_rows(alpha);
    Matrix s(a, d);
    for (int j = 0; j < a; ++j) s.row(j) = beta.col(j).transpose() * uhat[static_cast<size_t>(j)];
    v = squash_rows(s);
    for (int j = 0; j < a; ++j) alpha.col(j) += uhat[static_cast<size_t>(j)] * v.row(j).transpose();
    if (cache) {
      cache->beta.push_back(std::move(beta));
      cache->s_pre.push_back(std::move(s));
      cache->v.push_back(v);
    }
  }
  return v;
}

std::vector<Matrix> dynamic_route_backward(const std::vector<Matrix>& uhat,
                                           const DynRouteCache& cache, const Matrix& d_out) {
  const int a = static_cast<int>(uhat.size());
  const int b = static_cast<int>(uhat[0].rows());
  const int d = static_cast<int>(uhat[0].cols());
  const int r = static_cast<int>(cache.beta.size());
  std::vector<Matrix> d_uhat(static_cast<size_t>(a), Matrix::Zero(b, d));
  Matrix d_alpha = Matrix::Zero(b, a);  // gradient wrt alpha after iteration t's update
  Matrix d_v = d_out;
  for (int t = r - 1; t >= 0; --t) {
    // alpha_t = alpha_{t-1} + uhat . v_t (no gradient flows through the last update)
    for (int j = 0; j < a; ++j) {
      d_uhat[static_cast<size_t>(j)] += d_alpha.col(j) * cache.v[static_cast<size_t>(t)].row(j);
      d_v.row(j) += d_alpha.col(j).transpose() * uhat[static_cast<size_t>(j)];
    }
    Matrix d_s = squash_rows_backward(cache.s_pre[static_cast<size_t>(t)], d_v);
    Matrix d_beta(b, a);
    for (int j = 0; j < a; ++j) {
      d_beta.col(j) = uhat[static_cast<size_t>(j)] * d_s.row(j).transpose();
      d_uhat[static_cast<size_t>(j)] +=
          cache.beta[static_cast<size_t>(t)].col(j) * d_s.row(j);
    }
    d_alpha += softmax_rows_backward(cache.beta[static_cast<size_t>(t)], d_beta);
    d_v.setZero();
  }
  return d_uhat;
}

// ---- DRSW ----------------------------------------------------------------

namespace {
std::vector<Matrix> drsw_predictions(const Matrix& pvc_u, const DrswParams& params) {
  if (params.w_shared->cols() != pvc_u.cols())
    throw std::invalid_argument("drsw: capsule dimension does not match w_shared");
  std::vector<Matrix> uhat(static_cast<size_t>(params.n_sc));
  for (int j = 0; j < params.n_sc; ++j) {
    auto wj = params.w_shared->middleRows(j * params.d_sc, params.d_sc);  // d_sc x d_pvc
    uhat[static_cast<size_t>(j)] = pvc_u * wj.transpose();                // b x d_sc
  }
  return uhat;
}
}  // namespace

Matrix drsw_route(const Matrix& pvc_u, const DrswParams& params, int r, DynRouteCache* cache,
                  std::vector<Matrix>* uhat_out) {
  if (pvc_u.rows() == 0) throw std::invalid_argument("drsw: empty capsule set");
  std::vector<Matrix> uhat = drsw_predictions(pvc_u, params);
  Matrix v = dynamic_route(uhat, r, cache);
  if (uhat_out) *uhat_out = std::move(uhat);
  return v;
}

CapsuleSet drsw_route(const CapsuleSet& pvc, const DrswParams& params, int r) {
  return {drsw_route(pvc.vectors, params, r), CapsuleLayer::SC};
}

Matrix drsw_route_backward(const Matrix& pvc_u, const DrswParams& params,
                           const std::vector<Matrix>& uhat, const DynRouteCache& cache,
                           const Matrix& d_out, Matrix& g_w_shared) {
  std::vector<Matrix> d_uhat = dynamic_route_backward(uhat, cache, d_out);
  Matrix d_u = Matrix::Zero(pvc_u.rows(), pvc_u.cols());
  for (int j = 0; j < params.n_sc; ++j) {
    auto wj = params.w_shared->middleRows(j * params.d_sc, params.d_sc);
    g_w_shared.middleRows(j * params.d_sc, params.d_sc) +=
        d_uhat[static_cast<size_t>(j)].transpose() * pvc_u;
    d_u += d_uhat[static_cast<size_t>(j)] * wj;
  }
  return d_u;
}

// ---- VTS -----------------------------------------------------------------

Matrix vts_route(const Matrix& pvc_u, int r, int a, VtsCache* cache) {
  if (r < 1 || a < 1) throw std::invalid_argument("vts: bad arguments");
  const int b = static_cast<int>(pvc_u.rows());
  const int d = static_cast<int>(pvc_u.cols());
  const int a_eff = std::min(a, b);
  std::vector<int> order(static_cast<size_t>(b));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> norms(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) norms[static_cast<size_t>(i)] = pvc_u.row(i).norm();
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return norms[static_cast<size_t>(x)] > norms[static_cast<size_t>(y)];
  });
  order.resize(static_cast<size_t>(a_eff));

  Matrix v(a_eff, d);
  for (int j = 0; j < a_eff; ++j) v.row(j) = pvc_u.row(order[static_cast<size_t>(j)]);
  if (cache) {
    cache->order = order;
    cache->a_eff = a_eff;
    cache->v_init = v;
  }
  Matrix alpha = Matrix::Zero(b, a_eff);
  for (int t = 0; t < r; ++t) {
    alpha += pvc_u * v.transpose();  // f_ij = u_i . v_j, accumulated into alpha
    Matrix beta = softmax_rows(alpha);
    Matrix s = beta.transpose() * pvc_u;
    v = squash_rows(s);
    if (cache) {
      cache->beta.push_back(std::move(beta));
      cache->s_pre.push_back(std::move(s));
      cache->v.push_back(v);
    }
  }
  Matrix out = Matrix::Zero(a, d);
  out.topRows(a_eff) = v;
  return out;
}

CapsuleSet vts_route(const CapsuleSet& pvc, int r, int a) {
  return {vts_route(pvc.vectors, r, a), CapsuleLayer::SC};
}

Matrix vts_route_backward(const Matrix& pvc_u, const VtsCache& cache, const Matrix& d_out) {
  const int b = static_cast<int>(pvc_u.rows());
  const int a_eff = cache.a_eff;
  const int r = static_cast<int>(cache.beta.size());
  Matrix d_u = Matrix::Zero(b, pvc_u.cols());
  Matrix d_v = d_out.topRows(a_eff);
  Matrix d_alpha = Matrix::Zero(b, a_eff);  // carried gradient wrt alpha_t
  for (int t = r - 1; t >= 0; --t) {
    Matrix d_s = squash_rows_backward(cache.s_pre[static_cast<size_t>(t)], d_v);
    // s = beta^T u
    Matrix d_beta = pvc_u * d_s.transpose();                     // b x a_eff
    d_u += cache.beta[static_cast<size_t>(t)] * d_s;             // b x D
    d_alpha += softmax_rows_backward(cache.beta[static_cast<size_t>(t)], d_beta);
    // alpha_t = alpha_{t-1} + u v_{t-1}^T
    const Matrix& v_prev = t == 0 ? cache.v_init : cache.v[static_cast<size_t>(t - 1)];
    d_u += d_alpha * v_prev;
    d_v = d_alpha.transpose() * pvc_u;  // gradient wrt v_{t-1} via f
  }
  for (int j = 0; j < a_eff; ++j) d_u.row(cache.order[static_cast<size_t>(j)]) += d_v.row(j);
  return d_u;
}

// ---- CC ------------------------------------------------------------------

namespace {
std::vector<Matrix> cc_predictions(const Matrix& sc_v, const CcRoutingParams& params) {
  if (static_cast<int>(sc_v.rows()) != params.n_sc)
    throw std::invalid_argument("cc: expected exactly n_sc input capsules");
  if (params.w->cols() != sc_v.cols())
    throw std::invalid_argument("cc: capsule dimension does not match w");
  std::vector<Matrix> uhat(static_cast<size_t>(params.n_cc),
                           Matrix(params.n_sc, params.d_cc));
  for (int i = 0; i < params.n_sc; ++i)
    for (int j = 0; j < params.n_cc; ++j) {
      auto wij = params.w->middleRows((i * params.n_cc + j) * params.d_cc, params.d_cc);
      uhat[static_cast<size_t>(j)].row(i) = sc_v.row(i) * wij.transpose();
    }
  return uhat;
}
}  // namespace

Matrix cc_route(const Matrix& sc_v, const CcRoutingParams& params, int r, DynRouteCache* cache,
                std::vector<Matrix>* uhat_out) {
  std::vector<Matrix> uhat = cc_predictions(sc_v, params);
  Matrix v = dynamic_route(uhat, r, cache);
  if (uhat_out) *uhat_out = std::move(uhat);
  return v;
}

CapsuleSet cc_route(const CapsuleSet& sc, const CcRoutingParams& params, int r) {
  return {cc_route(sc.vectors, params, r), CapsuleLayer::CC};
}

Matrix cc_route_backward(const Matrix& sc_v, const CcRoutingParams& params,
                         const std::vector<Matrix>& uhat, const DynRouteCache& cache,
                         const Matrix& d_out, Matrix& g_w) {
  std::vector<Matrix> d_uhat = dynamic_route_backward(uhat, cache, d_out);
  Matrix d_v = Matrix::Zero(sc_v.rows(), sc_v.cols());
  for (int i = 0; i < params.n_sc; ++i)
    for (int j = 0; j < params.n_cc; ++j) {
      auto wij = params.w->middleRows((i * params.n_cc + j) * params.d_cc, params.d_cc);
      g_w.middleRows((i * params.n_cc + j) * params.d_cc, params.d_cc) +=
          d_uhat[static_cast<size_t>(j)].row(i).transpose() * sc_v.row(i);
      d_v.row(i) += d_uhat[static_cast<size_t>(j)].row(i) * wij;
    }
  return d_v;
}

}  // namespace treecaps
