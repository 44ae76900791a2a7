#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "vmonarch/gemm.hpp"
#include "vmonarch/mat.hpp"

namespace vmonarch {

struct TileConfig {
    idx b_r = 64;  // query-tile rows
    idx b_c = 64;  // key-tile cols
};

namespace detail {

// Shared online-softmax/online-entropy step. Rescales the running statistics
// to the new maximum, absorbs a chunk of scores, and optionally writes the
// shifted exponentials. Returns the rescale factor; exp(-inf - m) is treated
// as exactly 0 so the first chunk needs no special casing.
template <class T>
double absorb_stats(double& run_max, double& norm_sum, double& ent_acc,
                    const T* scores, idx count, T* p_out) {
    double tile_max = -std::numeric_limits<double>::infinity();
    for (idx j = 0; j < count; ++j)
        tile_max = std::max(tile_max, static_cast<double>(scores[j]));
    const double m_new = std::max(run_max, tile_max);

    double alpha;
    if (std::isinf(run_max)) {
        alpha = 0.0;  // norm_sum and ent_acc are still 0; nothing to rescale
    } else {
        const double delta = run_max - m_new;
        alpha = std::exp(delta);
        // L' = alpha*L + alpha*log(alpha)*S, with log(alpha) = delta exactly
        ent_acc = alpha * ent_acc + alpha * delta * norm_sum;
        norm_sum *= alpha;
    }
    for (idx j = 0; j < count; ++j) {
        const double x = static_cast<double>(scores[j]);
        const double p = std::exp(x - m_new);
        norm_sum += p;
        ent_acc += p * (x - m_new);  // p*log(p) with 0*log(0) = 0
        if (p_out) p_out[j] = static_cast<T>(p);
    }
    run_max = m_new;
    return alpha;
}

}  // namespace detail

// Per-row online statistics: running max m, normalizer sum l, entropy
// accumulator h = sum exp(x-m)(x-m), unnormalized output accumulator.
template <class T>
struct StreamRowState {
    double run_max = -std::numeric_limits<double>::infinity();
    double norm_sum = 0.0;
    double ent_acc = 0.0;
    std::vector<T> out_acc;

    // Absorb scores without output accumulation; exercises the same update
    // the tiled kernel runs.
    void absorb(std::span<const T> scores) {
        const double alpha =
            detail::absorb_stats<T>(run_max, norm_sum, ent_acc, scores.data(),
                                    static_cast<idx>(scores.size()), nullptr);
        if (alpha != 1.0)
            for (auto& x : out_acc) x = static_cast<T>(static_cast<double>(x) * alpha);
    }

    double entropy() const { return std::log(norm_sum) - ent_acc / norm_sum; }
    double logsumexp() const { return run_max + std::log(norm_sum); }
};

template <class T>
struct FlashFwdResult {
    Mat<T> output;          // (N_q, d)
    std::vector<T> lse;     // per query row
    std::vector<T> entropy; // per query row, nats
};

// Tiled single-pass attention with fused entropy. Q must already carry any
// 1/sqrt(d) scaling.
template <class T>
FlashFwdResult<T> flash_entropy_fwd(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v,
                                    TileConfig cfg = {}) {
    check_dim(q.cols == k.cols && k.cols == v.cols, "Q, K, V must share head dim");
    check_dim(k.rows == v.rows, "K and V must share row count");
    check_domain(k.rows >= 1, "attention over empty keys");
    check_dim(cfg.b_r >= 1 && cfg.b_c >= 1, "tile sizes must be >= 1");

    const idx nq = q.rows, nk = k.rows, d = q.cols;
    const idx br = std::min(cfg.b_r, std::max<idx>(nq, 1));
    const idx bc = std::min(cfg.b_c, nk);

    FlashFwdResult<T> res;
    res.output = Mat<T>(nq, d);
    res.lse.resize(nq);
    res.entropy.resize(nq);

    Mat<T> s(br, bc);
    std::vector<double> rmax(br), rsum(br), rent(br);

    for (idx i0 = 0; i0 < nq; i0 += br) {
        const idx rows = std::min(br, nq - i0);
        for (idx r = 0; r < rows; ++r) {
            rmax[r] = -std::numeric_limits<double>::infinity();
            rsum[r] = 0.0;
            rent[r] = 0.0;
        }
        for (idx j0 = 0; j0 < nk; j0 += bc) {
            const idx cols = std::min(bc, nk - j0);
            gemm_nt(rows, cols, d, q.row(i0), d, k.row(j0), d, s.row(0), bc);
            for (idx r = 0; r < rows; ++r) {
                T* srow = s.row(r);
                const double alpha =
                    detail::absorb_stats<T>(rmax[r], rsum[r], rent[r], srow, cols, srow);
                if (alpha != 1.0) {
                    const T a = static_cast<T>(alpha);
                    T* orow = res.output.row(i0 + r);
                    for (idx x = 0; x < d; ++x) orow[x] *= a;
                }
            }
            gemm_nn(rows, d, cols, s.row(0), bc, v.row(j0), d, res.output.row(i0), d,
                    /*accumulate=*/true);
        }
        for (idx r = 0; r < rows; ++r) {
            const T inv = static_cast<T>(1.0 / rsum[r]);
            T* orow = res.output.row(i0 + r);
            for (idx x = 0; x < d; ++x) orow[x] *= inv;
            res.lse[i0 + r] = static_cast<T>(rmax[r] + std::log(rsum[r]));
            res.entropy[i0 + r] = static_cast<T>(std::log(rsum[r]) - rent[r] / rsum[r]);
        }
    }
    return res;
}

template <class T>
struct FlashBwdResult {
    Mat<T> dq, dk, dv;
};

// Tiled backward pass. With entropy_grad off this is the standard attention
// backward dS = P (dP - D); with it on, the per-element correction
// -dH * P * (S - lse + H) is added. lse/entropy must come from a matching
// forward call on the same (pre-scaled) inputs.
template <class T>
FlashBwdResult<T> flash_entropy_bwd(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v,
                                    const Mat<T>& o, const Mat<T>& dout,
                                    const std::vector<T>& lse, const std::vector<T>& entropy,
                                    const std::vector<T>& dentropy, bool entropy_grad,
                                    TileConfig cfg = {}) {
    const idx nq = q.rows, nk = k.rows, d = q.cols;
    check_dim(k.cols == d && v.cols == d && o.cols == d && dout.cols == d,
              "all operands must share head dim");
    check_dim(v.rows == nk, "K and V must share row count");
    check_dim(o.rows == nq && dout.rows == nq, "O and dO must have N_q rows");
    check_dim(static_cast<idx>(lse.size()) == nq, "lse length must equal N_q");
    check_dim(entropy.empty() || static_cast<idx>(entropy.size()) == nq,
              "entropy length must equal N_q");
    check_dim(dentropy.empty() || static_cast<idx>(dentropy.size()) == nq,
              "dH length must equal N_q");
    if (entropy_grad)
        check_dim(!entropy.empty() && !dentropy.empty(),
                  "entropy_grad requires entropy and dH inputs");
    check_domain(nk >= 1, "attention over empty keys");
    check_dim(cfg.b_r >= 1 && cfg.b_c >= 1, "tile sizes must be >= 1");

    FlashBwdResult<T> res{Mat<T>(nq, d), Mat<T>(nk, d), Mat<T>(nk, d)};

    std::vector<T> dvec(nq);  // D = rowsum(dO * O)
    for (idx i = 0; i < nq; ++i) {
        double acc = 0.0;
        const T* orow = o.row(i);
        const T* grow = dout.row(i);
        for (idx x = 0; x < d; ++x) acc += static_cast<double>(orow[x]) * grow[x];
        dvec[i] = static_cast<T>(acc);
    }

    const idx br = std::min(cfg.b_r, nq > 0 ? nq : 1);
    const idx bc = std::min(cfg.b_c, nk);
    Mat<T> s(br, bc), p(br, bc), dsbuf(br, bc);

    for (idx j0 = 0; j0 < nk; j0 += bc) {
        const idx cols = std::min(bc, nk - j0);
        for (idx i0 = 0; i0 < nq; i0 += br) {
            const idx rows = std::min(br, nq - i0);
            gemm_nt(rows, cols, d, q.row(i0), d, k.row(j0), d, s.row(0), bc);
            for (idx r = 0; r < rows; ++r) {
                const T l = lse[i0 + r];
                T* srow = s.row(r);
                T* prow = p.row(r);
                for (idx c = 0; c < cols; ++c) prow[c] = std::exp(srow[c] - l);
            }
            gemm_tn(cols, d, rows, p.row(0), bc, dout.row(i0), d, res.dv.row(j0), d,
                    /*accumulate=*/true);
            gemm_nt(rows, cols, d, dout.row(i0), d, v.row(j0), d, dsbuf.row(0), bc);
            for (idx r = 0; r < rows; ++r) {
                const T di = dvec[i0 + r];
                const T* srow = s.row(r);
                const T* prow = p.row(r);
                T* dsrow = dsbuf.row(r);
                for (idx c = 0; c < cols; ++c) dsrow[c] = prow[c] * (dsrow[c] - di);
                if (entropy_grad) {
                    const T dh = dentropy[i0 + r];
                    const T lh = entropy[i0 + r] - lse[i0 + r];
                    for (idx c = 0; c < cols; ++c)
                        dsrow[c] -= dh * prow[c] * (srow[c] + lh);
                }
            }
            gemm_nn(rows, d, cols, dsbuf.row(0), bc, k.row(j0), d, res.dq.row(i0), d,
                    /*accumulate=*/true);
            gemm_tn(cols, d, rows, dsbuf.row(0), bc, q.row(i0), d, res.dk.row(j0), d,
                    /*accumulate=*/true);
        }
    }
    return res;
}

}  // namespace vmonarch
