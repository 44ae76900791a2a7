#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "vmonarch/flash_entropy.hpp"
#include "vmonarch/monarch.hpp"

namespace vmonarch {

// Latent video token grid, frame-major: token index = t*(h*w) + r*w + c.
struct TokenGrid {
    idx t_frames = 1;
    idx h = 1;
    idx w = 1;
    idx head_dim = 64;
    idx heads = 1;
    idx batch = 1;

    idx tokens() const { return t_frames * h * w; }
    idx frame_tokens() const { return h * w; }
    idx units() const { return heads * batch; }
};

struct VMonarchConfig {
    idx iters = 2;
    double clamp_min = 0.1;
    bool clamp_enabled = true;
    bool recompute_first_frame = true;
    std::optional<std::pair<idx, idx>> override_m_b;  // ablation factorizations
    TileConfig tiles;  // used by the first-frame recompute kernel
};

// FLOPs convention: 2 FLOPs per multiply-accumulate, matmuls only
// (softmax/exp/log excluded). Counts are per batch*head unit.
struct CostReport {
    double sparsity = 0.0;         // 1 - t(m+b)/(mb), exact
    double sparsity_approx = 0.0;  // 1 - t/m
    std::uint64_t monarch_flops = 0;
    std::uint64_t full_attn_flops = 0;
    std::uint64_t recompute_flops = 0;
    double reduction_ratio = 0.0;
};

struct PresetGrid {
    idx t_frames, h, w;
};

// Registry of paper-anchored latent grids.
std::optional<PresetGrid> preset_grid(std::string_view name);

// Effective factor sizes: (T, HW) unless overridden.
std::pair<idx, idx> factorize(const TokenGrid& grid, const VMonarchConfig& cfg);

double sparsity_estimate(const TokenGrid& grid, const VMonarchConfig& cfg);
double sparsity_approximation(const TokenGrid& grid, const VMonarchConfig& cfg);

CostReport flops_estimate(const TokenGrid& grid, const VMonarchConfig& cfg, idx d);

namespace detail {

template <class T>
Mat<T> prescale_rows(const Mat<T>& q, idx row0, idx rows) {
    Mat<T> out(rows, q.cols);
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(q.cols)));
    for (idx i = 0; i < rows; ++i) {
        const T* src = q.row(row0 + i);
        T* dst = out.row(i);
        for (idx v = 0; v < q.cols; ++v) dst[v] = src[v] * scale;
    }
    return out;
}

}  // namespace detail

// Per-head Monarch attention over the token grid, with optional first-frame
// recomputation: rows [0, h*w) are replaced by exact streaming attention of
// the first frame's queries against all keys. Batch*head units are
// independent; `threads` distributes them.
template <class T>
std::vector<Mat<T>> vmonarch_attention(std::span<const Mat<T>> qs,
                                       std::span<const Mat<T>> ks,
                                       std::span<const Mat<T>> vs,
                                       const TokenGrid& grid, const VMonarchConfig& cfg,
                                       int threads = 1,
                                       std::vector<MonarchFactors<T>>* factors_out = nullptr) {
    const idx units = grid.units();
    check_dim(static_cast<idx>(qs.size()) == units && static_cast<idx>(ks.size()) == units &&
                  static_cast<idx>(vs.size()) == units,
              "expected one Q/K/V matrix per batch*head unit");
    const idx n = grid.tokens();
    for (idx u = 0; u < units; ++u) {
        check_dim(qs[u].rows == n && ks[u].rows == n && vs[u].rows == n,
                  "each head must have T*h*w rows");
        check_dim(qs[u].cols == grid.head_dim && ks[u].cols == grid.head_dim &&
                      vs[u].cols == grid.head_dim,
                  "each head must have head_dim columns");
    }

    const auto [m, b] = factorize(grid, cfg);
    MonarchConfig mc;
    mc.m = m;
    mc.b = b;
    mc.iters = cfg.iters;
    mc.clamp_min = cfg.clamp_min;
    mc.clamp_enabled = cfg.clamp_enabled;

    std::vector<Mat<T>> out(units);
    if (factors_out) factors_out->resize(units);

    auto run_unit = [&](idx u) {
        MonarchResult<T> res = monarch_attention(qs[u], ks[u], vs[u], mc);
        if (cfg.recompute_first_frame) {
            const idx hw = grid.frame_tokens();
            const Mat<T> q0 = detail::prescale_rows(qs[u], 0, hw);
            FlashFwdResult<T> ff = flash_entropy_fwd(q0, ks[u], vs[u], cfg.tiles);
            for (idx i = 0; i < hw; ++i) {
                const T* src = ff.output.row(i);
                T* dst = res.output.row(i);
                for (idx v = 0; v < grid.head_dim; ++v) dst[v] = src[v];
            }
        }
        out[u] = std::move(res.output);
        if (factors_out) (*factors_out)[u] = std::move(res.factors);
    };

    if (threads <= 1 || units <= 1) {
        for (idx u = 0; u < units; ++u) run_unit(u);
    } else {
        const int nt = static_cast<int>(std::min<idx>(threads, units));
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errs(nt);
        for (int t = 0; t < nt; ++t)
            pool.emplace_back([&, t] {
                try {
                    for (idx u = t; u < units; u += nt) run_unit(u);
                } catch (...) {
                    errs[t] = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        for (auto& e : errs)
            if (e) std::rethrow_exception(e);
    }
    return out;
}

}  // namespace vmonarch
