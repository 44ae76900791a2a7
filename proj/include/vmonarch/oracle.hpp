#pragma once

#include <vector>

#include "vmonarch/gemm.hpp"
#include "vmonarch/mat.hpp"
#include "vmonarch/monarch.hpp"

namespace vmonarch {

// Ground-truth dense attention, always evaluated in double precision.
struct DenseAttnResult {
    Mat<double> output;            // (N_q, d)
    Mat<double> probs;             // (N_q, N_k)
    std::vector<double> logsumexp; // per query row
    std::vector<double> entropy;   // per query row, nats
};

// output = softmax(Q K^T * s) V with s = 1/sqrt(d) when scale is set, 1
// otherwise. Materializes the full probability matrix; callers cap N.
DenseAttnResult dense_attention(const Mat<double>& q, const Mat<double>& k,
                                const Mat<double>& v, bool scale);

// <A, S> + H(A) for a row-stochastic A. Rows must sum to 1 within 1e-4.
double variational_objective(const Mat<double>& a, const Mat<double>& s);

// Dense n x n matrix represented by the factor pair:
// M[j*b + i, k*b + l] = L[i][j,k] * R[k][i,l].
Mat<double> materialize_monarch(const MonarchFactors<double>& f, idx b, idx n);

// Blockwise evaluation of <M, Q K^T * s> + H(M) without forming the n x n
// matrix; equals variational_objective(materialize_monarch(f), Q K^T * s).
double monarch_objective(const MonarchFactors<double>& f, const Mat<double>& q,
                         const Mat<double>& k, bool scale);

// Row-blocked dense attention in the working precision; the quadratic
// baseline for benchmark runs. Does not store the probability matrix.
template <class T>
Mat<T> dense_forward(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, bool scale) {
    check_dim(q.cols == k.cols && k.cols == v.cols, "Q, K, V must share head dim");
    check_dim(k.rows == v.rows, "K and V must share row count");
    check_dim(k.rows >= 1, "attention over empty keys");

    Mat<T> qs = q;
    if (scale) {
        const T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(q.cols)));
        for (auto& x : qs.data) x *= s;
    }

    const idx nq = q.rows, nk = k.rows, d = q.cols;
    const idx block = std::min<idx>(64, std::max<idx>(1, nq));
    Mat<T> out(nq, d);
    Mat<T> scores(block, nk);
    for (idx i0 = 0; i0 < nq; i0 += block) {
        const idx rows = std::min(block, nq - i0);
        gemm_nt(rows, nk, d, qs.row(i0), d, k.row(0), d, scores.row(0), nk);
        for (idx r = 0; r < rows; ++r) {
            T* s = scores.row(r);
            T mx = s[0];
            for (idx j = 1; j < nk; ++j) mx = std::max(mx, s[j]);
            double sum = 0.0;
            for (idx j = 0; j < nk; ++j) {
                s[j] = std::exp(s[j] - mx);
                sum += static_cast<double>(s[j]);
            }
            const T inv = static_cast<T>(1.0 / sum);
            for (idx j = 0; j < nk; ++j) s[j] *= inv;
        }
        gemm_nn(rows, d, nk, scores.row(0), nk, v.row(0), d, out.row(i0), d);
    }
    return out;
}

}  // namespace vmonarch
