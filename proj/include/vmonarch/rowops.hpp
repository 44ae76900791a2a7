#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "vmonarch/check.hpp"

namespace vmonarch {

// p * log(p) with the 0*log(0) = 0 convention. Underflowed softmax outputs
// are exact zeros and must contribute nothing.
template <class T>
inline T plogp(T p) {
    return p > T(0) ? p * std::log(p) : T(0);
}

// Max-shifted softmax; safe for large-magnitude inputs.
template <class T>
std::vector<T> row_softmax(std::span<const T> x) {
    check_dim(!x.empty(), "softmax of an empty vector");
    const T m = *std::max_element(x.begin(), x.end());
    std::vector<T> out(x.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - m);
        sum += static_cast<double>(out[i]);
    }
    const T inv = static_cast<T>(1.0 / sum);
    for (auto& p : out) p *= inv;
    return out;
}

template <class T>
T row_entropy(std::span<const T> p) {
    check_dim(!p.empty(), "entropy of an empty vector");
    T h = T(0);
    for (T v : p) {
        check_domain(v >= T(0), "entropy input has a negative entry");
        h -= plogp(v);
    }
    return h;
}

template <class T>
T logsumexp(std::span<const T> x) {
    check_dim(!x.empty(), "logsumexp of an empty vector");
    const T m = *std::max_element(x.begin(), x.end());
    double sum = 0.0;
    for (T v : x) sum += std::exp(static_cast<double>(v - m));
    return m + static_cast<T>(std::log(sum));
}

}  // namespace vmonarch
