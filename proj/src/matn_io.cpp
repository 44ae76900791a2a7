#include "vmonarch/matn_io.hpp"

#include <cstdio>
#include <limits>
#include <memory>

namespace vmonarch {

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
    throw std::runtime_error("matn: field '" + field + "': " + what);
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void read_bytes(std::FILE* f, void* dst, std::size_t n, const char* field) {
    if (std::fread(dst, 1, n, f) != n) fail(field, "unexpected end of file");
}

}  // namespace

std::uint64_t MatnFile::element_count() const {
    std::uint64_t n = 1;
    for (std::uint64_t d : dims) {
        if (d == 0) return 0;
        if (n > std::numeric_limits<std::uint64_t>::max() / d)
            fail("dims", "dimension product overflows");
        n *= d;
    }
    return n;
}

MatnFile read_matn(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("matn: cannot open '" + path + "'");

    char magic[4];
    read_bytes(f.get(), magic, 4, "magic");
    if (magic[0] != 'M' || magic[1] != 'A' || magic[2] != 'T' || magic[3] != 'N')
        fail("magic", "expected \"MATN\"");

    MatnFile out;
    read_bytes(f.get(), &out.version, 4, "version");
    if (out.version != 1) fail("version", "unsupported version " + std::to_string(out.version));

    std::uint32_t rank = 0;
    read_bytes(f.get(), &rank, 4, "rank");
    if (rank == 0 || rank > 8) fail("rank", "rank " + std::to_string(rank) + " out of range [1,8]");

    out.dims.resize(rank);
    for (std::uint32_t i = 0; i < rank; ++i) read_bytes(f.get(), &out.dims[i], 8, "dims");
    if (out.element_count() == 0) fail("dims", "zero-sized dimension");

    read_bytes(f.get(), &out.dtype, 1, "dtype");
    if (out.dtype > 1) fail("dtype", "expected 0 (f32) or 1 (f64)");

    const std::uint64_t bytes = out.element_count() * out.element_size();
    out.payload.resize(bytes);
    read_bytes(f.get(), out.payload.data(), bytes, "payload");

    std::uint8_t extra;
    if (std::fread(&extra, 1, 1, f.get()) == 1) fail("payload", "trailing bytes after payload");
    return out;
}

void write_matn(const std::string& path, const MatnFile& file) {
    if (file.payload.size() != file.element_count() * file.element_size())
        fail("payload", "size does not match dims and dtype");

    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("matn: cannot open '" + path + "' for writing");

    auto put = [&](const void* p, std::size_t n) {
        if (std::fwrite(p, 1, n, f.get()) != n)
            throw std::runtime_error("matn: short write to '" + path + "'");
    };
    put("MATN", 4);
    put(&file.version, 4);
    const std::uint32_t rank = static_cast<std::uint32_t>(file.dims.size());
    put(&rank, 4);
    for (std::uint64_t d : file.dims) put(&d, 8);
    put(&file.dtype, 1);
    put(file.payload.data(), file.payload.size());
}

}  // namespace vmonarch
