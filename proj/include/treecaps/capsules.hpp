#pragma once

#include <vector>

#include "treecaps/encoder.hpp"

namespace treecaps {

enum class CapsuleLayer { PVC, SC, CC };

struct CapsuleSet {
  Matrix vectors;  // N x Dc
  CapsuleLayer layer_tag = CapsuleLayer::PVC;

  int count() const { return static_cast<int>(vectors.rows()); }
  int dim() const { return static_cast<int>(vectors.cols()); }
};

enum class RoutingKind { Drsw, Vts };

RoutingKind routing_kind_from_string(const std::string& s);
std::string to_string(RoutingKind k);

struct RoutingConfig {
  int iterations = 3;
  int n_sc = 100;
  int d_sc = 16;
  int n_cc = 2;
  int d_cc = 16;
  RoutingKind kind = RoutingKind::Vts;
  double drsw_norm_prefilter = 0.0;  // drop PVC capsules below this norm (0 = off)
};

// v = (|c|^2 / (1 + |c|^2)) * c/|c|, with an explicit zero guard.
Vector squash(const Vector& c);
// Gradient with respect to c given the gradient at squash(c).
Vector squash_backward(const Vector& c, const Vector& grad);

// Row-wise variants.
Matrix squash_rows(const Matrix& c);
Matrix squash_rows_backward(const Matrix& c, const Matrix& grad);

// ---- PVC formation -------------------------------------------------------

// Capsule (v, d) collects coordinate (v, d) across the M convolution layer
// outputs; capsule index is v * D + d.
struct PvcResult {
  Matrix pre;  // N_pvc x M, pre-squash
  Matrix u;    // N_pvc x M, squashed
};

PvcResult form_pvc(const EncoderOutput& enc);
CapsuleSet form_pvc_capsules(const EncoderOutput& enc);

// d_u -> gradients on the M layer feature matrices (accumulated).
void form_pvc_backward(const PvcResult& pvc, const Matrix& d_u, int num_nodes, int feature_dim,
                       std::vector<Matrix>& d_layer_features);

// ---- dynamic routing (shared mechanics of DRSW and CC) -------------------

struct DynRouteCache {
  std::vector<Matrix> beta;   // per iteration, b x a
  std::vector<Matrix> s_pre;  // per iteration, a x D (pre-squash)
  std::vector<Matrix> v;      // per iteration, a x D
};

// uhat[j] holds the prediction vectors for parent j, shape b x D.
Matrix dynamic_route(const std::vector<Matrix>& uhat, int r, DynRouteCache* cache = nullptr);
std::vector<Matrix> dynamic_route_backward(const std::vector<Matrix>& uhat,
                                           const DynRouteCache& cache, const Matrix& d_out);

// ---- DRSW ----------------------------------------------------------------

// One D_pvc x D_sc transformation per SC capsule, shared across children.
// Stored stacked: block rows [j*d_sc, (j+1)*d_sc) form W_j (d_sc x d_pvc).
struct DrswParams {
  const Matrix* w_shared = nullptr;  // (n_sc * d_sc) x d_pvc
  int n_sc = 0;
  int d_sc = 0;
};

Matrix drsw_route(const Matrix& pvc_u, const DrswParams& params, int r,
                  DynRouteCache* cache = nullptr, std::vector<Matrix>* uhat_out = nullptr);
CapsuleSet drsw_route(const CapsuleSet& pvc, const DrswParams& params, int r);

// Returns d(pvc_u); accumulates into g_w_shared.
Matrix drsw_route_backward(const Matrix& pvc_u, const DrswParams& params,
                           const std::vector<Matrix>& uhat, const DynRouteCache& cache,
                           const Matrix& d_out, Matrix& g_w_shared);

// ---- VTS -----------------------------------------------------------------

struct VtsCache {
  std::vector<int> order;      // input indices chosen for initialization
  int a_eff = 0;               // min(a, b)
  Matrix v_init;               // a_eff x D
  std::vector<Matrix> beta;    // per iteration, b x a_eff
  std::vector<Matrix> s_pre;   // per iteration, a_eff x D
  std::vector<Matrix> v;       // per iteration, a_eff x D
};

// VTS: initialize from the a highest-norm inputs (stable sort, ties by
// original index), then r refinement iterations. If b < a the missing
// capsules are zero rows excluded from routing.
Matrix vts_route(const Matrix& pvc_u, int r, int a, VtsCache* cache = nullptr);
CapsuleSet vts_route(const CapsuleSet& pvc, int r, int a);

Matrix vts_route_backward(const Matrix& pvc_u, const VtsCache& cache, const Matrix& d_out);

// ---- CC ------------------------------------------------------------------

// Full per-pair transformations W[i][j] (d_cc x d_in), stacked as block rows
// [(i*n_cc + j)*d_cc, ...).
struct CcRoutingParams {
  const Matrix* w = nullptr;  // (n_sc * n_cc * d_cc) x d_in
  int n_sc = 0;
  int n_cc = 0;
  int d_cc = 0;
};

Matrix cc_route(const Matrix& sc_v, const CcRoutingParams& params, int r,
                DynRouteCache* cache = nullptr, std::vector<Matrix>* uhat_out = nullptr);
CapsuleSet cc_route(const CapsuleSet& sc, const CcRoutingParams& params, int r);

Matrix cc_route_backward(const Matrix& sc_v, const CcRoutingParams& params,
                         const std::vector<Matrix>& uhat, const DynRouteCache& cache,
                         const Matrix& d_out, Matrix& g_w);

// Row-wise softmax and its backward (shared by the routers).
Matrix softmax_rows(const Matrix& logits);
Matrix softmax_rows_backward(const Matrix& softmax_out, const Matrix& grad);

}  // namespace treecaps
