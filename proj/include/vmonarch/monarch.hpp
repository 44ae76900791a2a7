#pragma once

#include <algorithm>
#include <cmath>

#include "vmonarch/gemm.hpp"
#include "vmonarch/mat.hpp"
#include "vmonarch/rowops.hpp"

namespace vmonarch {

// Block-diagonal factor pair representing the attention map. L holds b
// temporal blocks of shape m x m, R holds m spatial blocks of shape b x b.
// After any update both are row-stochastic per block row.
template <class T>
struct MonarchFactors {
    Tensor3<T> L;  // (b, m, m)
    Tensor3<T> R;  // (m, b, b)
};

struct MonarchConfig {
    idx m = 1;
    idx b = 1;
    idx iters = 2;
    double clamp_min = 0.1;    // lower bound applied to c_R before division
    bool clamp_enabled = true; // disabled in exact mode (monotonicity checks)
};

// Intermediates carried between the two half-steps. aL/cL stay empty until the
// first R-update populates them.
template <class T>
struct IterState {
    Tensor3<T> aR;  // (m, b, d)
    Mat<T> cR;      // (m, b)
    Tensor3<T> aL;  // (b, m, d)
    Mat<T> cL;      // (b, m)
};

template <class T>
IterState<T> init_state(const Mat<T>& q, const MonarchConfig& cfg) {
    check_dim(cfg.iters >= 1, "iteration count must be >= 1");
    check_dim(cfg.m >= 1 && cfg.b >= 1, "factor sizes must be >= 1");
    check_dim(q.rows == cfg.m * cfg.b, "N must equal m*b");
    require_finite(q, "Q");

    IterState<T> st;
    st.aR = to_blocked(q, cfg.m, cfg.b);
    st.cR = Mat<T>(cfg.m, cfg.b);
    std::fill(st.cR.data.begin(), st.cR.data.end(), T(1));
    return st;
}

// R half-step: R[k] row i = softmax_l(<aR[k,i], Kb[k,l]> / max(cR[k,i], clamp)),
// then aL[i,k] = sum_l R[k,i,l] Kb[k,l] and cL[i,k] = sum_l R log R.
template <class T>
void r_update(IterState<T>& st, const Tensor3<T>& kb, const MonarchConfig& cfg,
              Tensor3<T>& r_out) {
    const idx m = cfg.m, b = cfg.b;
    check_state(!st.aR.empty(), "r_update requires an initialized state");
    check_dim(kb.d0 == m && kb.d1 == b, "Kb must have shape (m, b, d)");
    check_dim(st.aR.d0 == m && st.aR.d1 == b && st.aR.d2 == kb.d2,
              "aR must have shape (m, b, d)");
    const idx d = kb.d2;

    if (r_out.d0 != m || r_out.d1 != b || r_out.d2 != b) r_out = Tensor3<T>(m, b, b);
    if (st.aL.d0 != b || st.aL.d1 != m || st.aL.d2 != d) st.aL = Tensor3<T>(b, m, d);
    if (st.cL.rows != b || st.cL.cols != m) st.cL = Mat<T>(b, m);

    for (idx k = 0; k < m; ++k) {
        T* rk = r_out.block(k);
        // logits into the R block, then softmax in place
        gemm_nt(b, b, d, st.aR.block(k), d, kb.block(k), d, rk, b);
        for (idx i = 0; i < b; ++i) {
            T* row = rk + i * b;
            T c = st.cR.at(k, i);
            if (cfg.clamp_enabled) {
                c = std::max(c, static_cast<T>(cfg.clamp_min));
            } else {
                check_domain(c > T(0), "c_R <= 0 with clamping disabled");
            }
            const T inv_c = T(1) / c;
            T mx = row[0] * inv_c;
            for (idx l = 0; l < b; ++l) {
                row[l] *= inv_c;
                mx = std::max(mx, row[l]);
            }
            double sum = 0.0;
            for (idx l = 0; l < b; ++l) {
                row[l] = std::exp(row[l] - mx);
                sum += static_cast<double>(row[l]);
            }
            const T inv_sum = static_cast<T>(1.0 / sum);
            double ent = 0.0;
            for (idx l = 0; l < b; ++l) {
                row[l] *= inv_sum;
                ent += static_cast<double>(plogp(row[l]));
            }
            st.cL.at(i, k) = static_cast<T>(ent);
        }
        // aL rows for this k live at stride m*d inside the (b, m, d) tensor
        gemm_nn(b, d, b, rk, b, kb.block(k), d, st.aL.data.data() + k * d, m * d);
    }
}

// L half-step: L[i] row j = softmax_k(<Qb[i,j], aL[i,k]> - cL[i,k]), then
// cR[k,i] = sum_j L[i,j,k] and aR[k,i] = sum_j L[i,j,k] Qb[i,j].
template <class T>
void l_update(IterState<T>& st, const Tensor3<T>& qb, const MonarchConfig& cfg,
              Tensor3<T>& l_out) {
    const idx m = cfg.m, b = cfg.b;
    check_state(!st.aL.empty(), "l_update called before any r_update");
    check_dim(qb.d0 == b && qb.d1 == m, "Qb must have shape (b, m, d)");
    check_dim(st.aL.d0 == b && st.aL.d1 == m && st.aL.d2 == qb.d2,
              "aL must have shape (b, m, d)");
    const idx d = qb.d2;

    if (l_out.d0 != b || l_out.d1 != m || l_out.d2 != m) l_out = Tensor3<T>(b, m, m);
    if (st.aR.d0 != m || st.aR.d1 != b || st.aR.d2 != d) st.aR = Tensor3<T>(m, b, d);
    if (st.cR.rows != m || st.cR.cols != b) st.cR = Mat<T>(m, b);

    for (idx i = 0; i < b; ++i) {
        T* li = l_out.block(i);
        gemm_nt(m, m, d, qb.block(i), d, st.aL.block(i), d, li, m);
        for (idx j = 0; j < m; ++j) {
            T* row = li + j * m;
            T mx = row[0] - st.cL.at(i, 0);
            for (idx k = 0; k < m; ++k) {
                row[k] -= st.cL.at(i, k);
                mx = std::max(mx, row[k]);
            }
            double sum = 0.0;
            for (idx k = 0; k < m; ++k) {
                row[k] = std::exp(row[k] - mx);
                sum += static_cast<double>(row[k]);
            }
            const T inv_sum = static_cast<T>(1.0 / sum);
            for (idx k = 0; k < m; ++k) row[k] *= inv_sum;
        }
        for (idx k = 0; k < m; ++k) {
            double col = 0.0;
            for (idx j = 0; j < m; ++j) col += static_cast<double>(li[j * m + k]);
            st.cR.at(k, i) = static_cast<T>(col);
        }
        // aR rows for this i live at stride b*d inside the (m, b, d) tensor
        gemm_tn(m, d, m, li, m, qb.block(i), d, st.aR.data.data() + i * d, b * d);
    }
}

template <class T>
struct MonarchResult {
    Mat<T> output;
    MonarchFactors<T> factors;
};

// Full alternating-maximization attention: t iterations of the two closed-form
// half-steps, then O = L (R V) assembled through the block layout. Q is
// pre-scaled by 1/sqrt(d) here, once.
template <class T>
MonarchResult<T> monarch_attention(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v,
                                   const MonarchConfig& cfg) {
    const idx n = cfg.m * cfg.b;
    check_dim(q.rows == n && k.rows == n && v.rows == n, "Q, K, V must have m*b rows");
    check_dim(q.cols == k.cols && k.cols == v.cols, "Q, K, V must share head dim");
    const idx d = q.cols;
    check_dim(d >= 1, "head dim must be >= 1");

    Mat<T> qs = q;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
    for (auto& x : qs.data) x *= scale;

    const Tensor3<T> kb = to_blocked(k, cfg.m, cfg.b);
    const Tensor3<T> vb = to_blocked(v, cfg.m, cfg.b);
    const Tensor3<T> qb = to_blocked_permuted(qs, cfg.m, cfg.b);

    IterState<T> st = init_state(qs, cfg);
    MonarchFactors<T> f;
    for (idx t = 0; t < cfg.iters; ++t) {
        r_update(st, kb, cfg, f.R);
        l_update(st, qb, cfg, f.L);
    }

    // y[k,i] = sum_l R[k,i,l] V[k*b+l]; O[j*b+i] = sum_k L[i,j,k] y[k,i]
    Tensor3<T> y(cfg.m, cfg.b, d);
    for (idx kk = 0; kk < cfg.m; ++kk)
        gemm_nn(cfg.b, d, cfg.b, f.R.block(kk), cfg.b, vb.block(kk), d, y.block(kk), d);

    Mat<T> out(n, d);
    for (idx i = 0; i < cfg.b; ++i)
        gemm_nn(cfg.m, d, cfg.m, f.L.block(i), cfg.m, y.data.data() + i * d, cfg.b * d,
                out.data.data() + i * d, cfg.b * d);

    return {std::move(out), std::move(f)};
}

}  // namespace vmonarch
