#pragma once

#include <span>
#include <vector>

#include "vmonarch/mat.hpp"

namespace vmonarch {

// Row permutation obtained by reshaping a length-n sequence into an (n/b, b)
// matrix in row-major order, transposing it, and flattening back. The inverse
// is the same construction with block width n/b.
struct Perm {
    idx b = 1;
    idx n = 0;
    std::vector<idx> forward_index;  // output row i reads input row forward_index[i]
};

inline Perm make_perm(idx b, idx n) {
    check_dim(b >= 1 && n >= 1, "permutation requires b >= 1 and n >= 1");
    check_dim(n % b == 0, "permutation requires n divisible by b");
    const idx m = n / b;
    Perm p;
    p.b = b;
    p.n = n;
    p.forward_index.resize(static_cast<std::size_t>(n));
    for (idx j = 0; j < b; ++j)
        for (idx i = 0; i < m; ++i) p.forward_index[j * m + i] = i * b + j;
    return p;
}

template <class T>
std::vector<T> permute_bn(std::span<const T> v, idx b) {
    const Perm p = make_perm(b, static_cast<idx>(v.size()));
    std::vector<T> out(v.size());
    for (idx i = 0; i < p.n; ++i) out[i] = v[p.forward_index[i]];
    return out;
}

template <class T>
Mat<T> permute_bn_rows(const Mat<T>& x, idx b) {
    const Perm p = make_perm(b, x.rows);
    Mat<T> out(x.rows, x.cols);
    for (idx i = 0; i < p.n; ++i) {
        const T* src = x.row(p.forward_index[i]);
        T* dst = out.row(i);
        for (idx v = 0; v < x.cols; ++v) dst[v] = src[v];
    }
    return out;
}

}  // namespace vmonarch
