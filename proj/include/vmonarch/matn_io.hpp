#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "vmonarch/mat.hpp"

namespace vmonarch {

// Binary tensor container:
//   magic "MATN", u32 version=1, u32 rank, rank x u64 dims,
//   u8 dtype (0 = f32, 1 = f64), little-endian row-major payload.
struct MatnFile {
    std::uint32_t version = 1;
    std::vector<std::uint64_t> dims;
    std::uint8_t dtype = 0;  // 0 = f32, 1 = f64
    std::vector<std::uint8_t> payload;

    std::uint64_t element_count() const;
    std::size_t element_size() const { return dtype == 0 ? 4 : 8; }
};

// Throws std::runtime_error naming the offending field on malformed input.
MatnFile read_matn(const std::string& path);
void write_matn(const std::string& path, const MatnFile& file);

namespace detail {
template <class T>
constexpr std::uint8_t matn_dtype();
template <>
constexpr std::uint8_t matn_dtype<float>() { return 0; }
template <>
constexpr std::uint8_t matn_dtype<double>() { return 1; }
}  // namespace detail

// Typed loaders; dtype must match T and values must be finite.
template <class T>
Mat<T> matn_to_mat(const MatnFile& f) {
    if (f.dims.size() != 2)
        throw std::runtime_error("matn: field 'rank': expected rank 2, got " +
                                 std::to_string(f.dims.size()));
    if (f.dtype != detail::matn_dtype<T>())
        throw std::runtime_error("matn: field 'dtype': does not match requested precision");
    Mat<T> out(static_cast<idx>(f.dims[0]), static_cast<idx>(f.dims[1]));
    std::memcpy(out.data.data(), f.payload.data(), f.payload.size());
    require_finite(out, "matn payload");
    return out;
}

template <class T>
Tensor3<T> matn_to_tensor3(const MatnFile& f) {
    if (f.dims.size() != 3)
        throw std::runtime_error("matn: field 'rank': expected rank 3, got " +
                                 std::to_string(f.dims.size()));
    if (f.dtype != detail::matn_dtype<T>())
        throw std::runtime_error("matn: field 'dtype': does not match requested precision");
    Tensor3<T> out(static_cast<idx>(f.dims[0]), static_cast<idx>(f.dims[1]),
                   static_cast<idx>(f.dims[2]));
    std::memcpy(out.data.data(), f.payload.data(), f.payload.size());
    check_domain(all_finite(std::span<const T>(out.data)),
                 "matn payload contains non-finite values");
    return out;
}

template <class T>
MatnFile mat_to_matn(const Mat<T>& m) {
    MatnFile f;
    f.dims = {static_cast<std::uint64_t>(m.rows), static_cast<std::uint64_t>(m.cols)};
    f.dtype = detail::matn_dtype<T>();
    f.payload.resize(m.data.size() * sizeof(T));
    std::memcpy(f.payload.data(), m.data.data(), f.payload.size());
    return f;
}

template <class T>
MatnFile tensor3_to_matn(const Tensor3<T>& t) {
    MatnFile f;
    f.dims = {static_cast<std::uint64_t>(t.d0), static_cast<std::uint64_t>(t.d1),
              static_cast<std::uint64_t>(t.d2)};
    f.dtype = detail::matn_dtype<T>();
    f.payload.resize(t.data.size() * sizeof(T));
    std::memcpy(f.payload.data(), t.data.data(), f.payload.size());
    return f;
}

}  // namespace vmonarch
