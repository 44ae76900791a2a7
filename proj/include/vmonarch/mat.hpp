#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "vmonarch/check.hpp"

namespace vmonarch {

using idx = std::int64_t;

// Dense row-major matrix. Element type is float for kernel paths and double
// for oracle paths.
template <class T>
struct Mat {
    idx rows = 0;
    idx cols = 0;
    std::vector<T> data;  // rows * cols, row-major

    Mat() = default;
    Mat(idx r, idx c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c) {
        check_dim(r >= 0 && c >= 0, "Mat dimensions must be non-negative");
    }

    T* row(idx i) { return data.data() + i * cols; }
    const T* row(idx i) const { return data.data() + i * cols; }

    T& at(idx i, idx j) { return data[i * cols + j]; }
    T at(idx i, idx j) const { return data[i * cols + j]; }

    idx size() const { return rows * cols; }
};

// Rank-3 row-major tensor for blocked views: Qb (b,m,d), Kb/Vb (m,b,d),
// R (m,b,b), L (b,m,m).
template <class T>
struct Tensor3 {
    idx d0 = 0, d1 = 0, d2 = 0;
    std::vector<T> data;

    Tensor3() = default;
    Tensor3(idx a, idx b, idx c)
        : d0(a), d1(b), d2(c), data(static_cast<std::size_t>(a) * b * c) {
        check_dim(a >= 0 && b >= 0 && c >= 0, "Tensor3 dimensions must be non-negative");
    }

    T* block(idx i) { return data.data() + i * d1 * d2; }
    const T* block(idx i) const { return data.data() + i * d1 * d2; }

    T* row(idx i, idx j) { return data.data() + (i * d1 + j) * d2; }
    const T* row(idx i, idx j) const { return data.data() + (i * d1 + j) * d2; }

    T& at(idx i, idx j, idx k) { return data[(i * d1 + j) * d2 + k]; }
    T at(idx i, idx j, idx k) const { return data[(i * d1 + j) * d2 + k]; }

    idx size() const { return d0 * d1 * d2; }
    bool empty() const { return data.empty(); }
};

template <class T>
bool all_finite(std::span<const T> v) {
    for (T x : v)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

template <class T>
void require_finite(const Mat<T>& m, const char* name) {
    check_domain(all_finite(std::span<const T>(m.data)),
                 std::string(name) + " contains non-finite values");
}

template <class T>
Mat<double> to_f64(const Mat<T>& m) {
    Mat<double> out(m.rows, m.cols);
    for (idx i = 0; i < m.size(); ++i) out.data[i] = static_cast<double>(m.data[i]);
    return out;
}

template <class T>
Tensor3<double> to_f64(const Tensor3<T>& t) {
    Tensor3<double> out(t.d0, t.d1, t.d2);
    for (idx i = 0; i < t.size(); ++i) out.data[i] = static_cast<double>(t.data[i]);
    return out;
}

// Natural blocked view: X (m*b, d) -> (m, b, d). Pure reshape of a frame-major
// token layout.
template <class T>
Tensor3<T> to_blocked(const Mat<T>& x, idx m, idx b) {
    check_dim(x.rows == m * b, "blocked view requires rows == m*b");
    Tensor3<T> out(m, b, x.cols);
    out.data = x.data;
    return out;
}

// Permuted blocked view: X (m*b, d) -> (b, m, d) with out[i][j] = X row (j*b+i).
// Equivalent to reshape(m,b,d) followed by a transpose of the first two axes.
template <class T>
Tensor3<T> to_blocked_permuted(const Mat<T>& x, idx m, idx b) {
    check_dim(x.rows == m * b, "blocked view requires rows == m*b");
    Tensor3<T> out(b, m, x.cols);
    const idx d = x.cols;
    for (idx j = 0; j < m; ++j)
        for (idx i = 0; i < b; ++i) {
            const T* src = x.row(j * b + i);
            T* dst = out.row(i, j);
            for (idx v = 0; v < d; ++v) dst[v] = src[v];
        }
    return out;
}

}  // namespace vmonarch
