#include "vmonarch/video.hpp"

namespace vmonarch {

std::optional<PresetGrid> preset_grid(std::string_view name) {
    // Latent grids for 448x832 videos at 61/141/321 frames.
    if (name == "wan-61f") return PresetGrid{16, 28, 52};
    if (name == "wan-141f") return PresetGrid{36, 28, 52};
    if (name == "wan-321f") return PresetGrid{81, 28, 52};
    return std::nullopt;
}

std::pair<idx, idx> factorize(const TokenGrid& grid, const VMonarchConfig& cfg) {
    check_dim(grid.t_frames >= 1 && grid.h >= 1 && grid.w >= 1, "grid dims must be positive");
    const idx n = grid.tokens();
    if (cfg.override_m_b) {
        const auto [m, b] = *cfg.override_m_b;
        check_dim(m >= 1 && b >= 1 && m * b == n, "override factor sizes must satisfy m*b = N");
        return {m, b};
    }
    return {grid.t_frames, grid.frame_tokens()};
}

double sparsity_estimate(const TokenGrid& grid, const VMonarchConfig& cfg) {
    const auto [m, b] = factorize(grid, cfg);
    const double n = static_cast<double>(m) * static_cast<double>(b);
    return 1.0 - static_cast<double>(cfg.iters) * (static_cast<double>(m) + b) / n;
}

double sparsity_approximation(const TokenGrid& grid, const VMonarchConfig& cfg) {
    const auto [m, b] = factorize(grid, cfg);
    (void)b;
    return 1.0 - static_cast<double>(cfg.iters) / static_cast<double>(m);
}

CostReport flops_estimate(const TokenGrid& grid, const VMonarchConfig& cfg, idx d) {
    const auto [m, b] = factorize(grid, cfg);
    const std::uint64_t n = static_cast<std::uint64_t>(m) * b;
    const std::uint64_t t = static_cast<std::uint64_t>(cfg.iters);
    const std::uint64_t du = static_cast<std::uint64_t>(d);
    const std::uint64_t mb = static_cast<std::uint64_t>(m) + static_cast<std::uint64_t>(b);

    CostReport rep;
    rep.sparsity = sparsity_estimate(grid, cfg);
    rep.sparsity_approx = sparsity_approximation(grid, cfg);
    // two matmuls per dense attention, 2 FLOPs per MAC
    rep.full_attn_flops = 4 * n * n * du;
    // per iteration: logits + aL in the R step (2*m*b^2*d MACs) and
    // logits + aR in the L step (2*b*m^2*d MACs); assembly adds N*d*(m+b)
    rep.monarch_flops = 2 * (2 * t * n * du * mb + n * du * mb);
    // first frame queries against all keys; row count is h*w regardless of
    // any override factorization
    rep.recompute_flops =
        cfg.recompute_first_frame ? 4 * static_cast<std::uint64_t>(grid.frame_tokens()) * n * du
                                  : 0;
    rep.reduction_ratio = static_cast<double>(rep.full_attn_flops) /
                          static_cast<double>(rep.monarch_flops + rep.recompute_flops);
    return rep;
}

}  // namespace vmonarch
