#include "vmonarch/oracle.hpp"

#include <cmath>

#include "vmonarch/rowops.hpp"

namespace vmonarch {

DenseAttnResult dense_attention(const Mat<double>& q, const Mat<double>& k,
                                const Mat<double>& v, bool scale) {
    check_dim(q.cols == k.cols && k.cols == v.cols, "Q, K, V must share head dim");
    check_dim(k.rows == v.rows, "K and V must share row count");
    check_dim(k.rows >= 1, "attention over empty keys");

    const idx nq = q.rows, nk = k.rows, d = q.cols;
    const double s = scale ? 1.0 / std::sqrt(static_cast<double>(d)) : 1.0;

    DenseAttnResult res;
    res.probs = Mat<double>(nq, nk);
    res.output = Mat<double>(nq, d);
    res.logsumexp.resize(nq);
    res.entropy.resize(nq);

    Mat<double> qs = q;
    for (auto& x : qs.data) x *= s;

    gemm_nt(nq, nk, d, qs.row(0), d, k.row(0), d, res.probs.row(0), nk);
    for (idx i = 0; i < nq; ++i) {
        double* row = res.probs.row(i);
        double mx = row[0];
        for (idx j = 1; j < nk; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (idx j = 0; j < nk; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        res.logsumexp[i] = mx + std::log(sum);
        double ent = 0.0;
        for (idx j = 0; j < nk; ++j) {
            row[j] /= sum;
            ent -= plogp(row[j]);
        }
        res.entropy[i] = ent;
    }
    gemm_nn(nq, d, nk, res.probs.row(0), nk, v.row(0), d, res.output.row(0), d);
    return res;
}

double variational_objective(const Mat<double>& a, const Mat<double>& s) {
    check_dim(a.rows == s.rows && a.cols == s.cols, "A and S must have matching shapes");
    check_dim(a.cols >= 1, "A must be non-empty");

    double worst = 0.0;
    for (idx i = 0; i < a.rows; ++i) {
        double sum = 0.0;
        for (idx j = 0; j < a.cols; ++j) {
            check_domain(a.at(i, j) >= 0.0, "A has a negative entry");
            sum += a.at(i, j);
        }
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    check_domain(worst <= 1e-4,
                 "A is not row-stochastic; worst row-sum deviation " + std::to_string(worst));

    double obj = 0.0;
    for (idx i = 0; i < a.rows; ++i)
        for (idx j = 0; j < a.cols; ++j)
            obj += a.at(i, j) * s.at(i, j) - plogp(a.at(i, j));
    return obj;
}

Mat<double> materialize_monarch(const MonarchFactors<double>& f, idx b, idx n) {
    check_dim(b >= 1 && n >= 1 && n % b == 0, "n must be a positive multiple of b");
    const idx m = n / b;
    check_dim(f.L.d0 == b && f.L.d1 == m && f.L.d2 == m, "L must have shape (b, m, m)");
    check_dim(f.R.d0 == m && f.R.d1 == b && f.R.d2 == b, "R must have shape (m, b, b)");

    Mat<double> out(n, n);
    for (idx j = 0; j < m; ++j)
        for (idx i = 0; i < b; ++i) {
            double* row = out.row(j * b + i);
            for (idx k = 0; k < m; ++k) {
                const double lw = f.L.at(i, j, k);
                const double* rrow = f.R.row(k, i);
                double* dst = row + k * b;
                for (idx l = 0; l < b; ++l) dst[l] = lw * rrow[l];
            }
        }
    return out;
}

double monarch_objective(const MonarchFactors<double>& f, const Mat<double>& q,
                         const Mat<double>& k, bool scale) {
    const idx b = f.L.d0, m = f.R.d0;
    check_dim(f.L.d1 == m && f.L.d2 == m, "L must have shape (b, m, m)");
    check_dim(f.R.d1 == b && f.R.d2 == b, "R must have shape (m, b, b)");
    check_dim(q.rows == m * b && k.rows == m * b, "Q and K must have m*b rows");
    check_dim(q.cols == k.cols, "Q and K must share head dim");
    const idx d = q.cols;

    Mat<double> qs = q;
    if (scale) {
        const double sc = 1.0 / std::sqrt(static_cast<double>(d));
        for (auto& x : qs.data) x *= sc;
    }
    const Tensor3<double> qb = to_blocked_permuted(qs, m, b);
    const Tensor3<double> kb = to_blocked(k, m, b);

    // Per block pair (i, k): the m x b block of the permuted map is the outer
    // product of L[i][:,k] and R[k][i,:], so both the linear term and the
    // entropy split into cheap factor-wise sums.
    std::vector<double> alpha(d);
    double obj = 0.0;
    for (idx i = 0; i < b; ++i)
        for (idx kk = 0; kk < m; ++kk) {
            for (idx v = 0; v < d; ++v) alpha[v] = 0.0;
            double r_sum = 0.0, r_ent = 0.0;
            const double* rrow = f.R.row(kk, i);
            for (idx l = 0; l < b; ++l) {
                const double r = rrow[l];
                r_sum += r;
                r_ent += plogp(r);
                const double* krow = kb.row(kk, l);
                for (idx v = 0; v < d; ++v) alpha[v] += r * krow[v];
            }
            double lin = 0.0, l_sum = 0.0, l_ent = 0.0;
            for (idx j = 0; j < m; ++j) {
                const double lw = f.L.at(i, j, kk);
                l_sum += lw;
                l_ent += plogp(lw);
                const double* qrow = qb.row(i, j);
                double dot = 0.0;
                for (idx v = 0; v < d; ++v) dot += qrow[v] * alpha[v];
                lin += lw * dot;
            }
            obj += lin - (l_ent * r_sum + l_sum * r_ent);
        }
    return obj;
}

}  // namespace vmonarch
