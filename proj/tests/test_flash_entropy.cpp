#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "test_support.hpp"
#include "vmonarch/flash_entropy.hpp"
#include "vmonarch/oracle.hpp"

using namespace vmonarch;

TEST_CASE("constant score rows give entropy log N_k") {
    const idx n = 37, d = 8;
    auto q = testsup::randn<float>(5, d, 1);
    Mat<float> k(n, d);
    for (idx i = 0; i < n; ++i)
        for (idx c = 0; c < d; ++c) k.at(i, c) = 0.25f * (c + 1);  // identical keys
    auto v = testsup::randn<float>(n, d, 2);
    auto res = flash_entropy_fwd(q, k, v, {8, 8});
    for (idx i = 0; i < 5; ++i)
        CHECK(std::abs(res.entropy[i] - std::log(double(n))) < 1e-5);
}

TEST_CASE("single tile covering all keys matches direct computation exactly") {
    const idx nq = 9, nk = 23, d = 6;
    auto q = testsup::randn<float>(nq, d, 3);
    auto k = testsup::randn<float>(nk, d, 4);
    auto v = testsup::randn<float>(nk, d, 5);
    auto res = flash_entropy_fwd(q, k, v, {16, 64});  // b_c >= nk: one key tile

    // direct path, replicating the kernel's per-step precision
    Mat<float> s(nq, nk);
    gemm_nt(nq, nk, d, q.row(0), d, k.row(0), d, s.row(0), nk);
    for (idx i = 0; i < nq; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (idx j = 0; j < nk; ++j) mx = std::max(mx, double(s.at(i, j)));
        double ell = 0.0, h = 0.0;
        std::vector<float> p(nk);
        for (idx j = 0; j < nk; ++j) {
            const double x = double(s.at(i, j));
            const double e = std::exp(x - mx);
            ell += e;
            h += e * (x - mx);
            p[j] = float(e);
        }
        std::vector<float> out(d, 0.0f);
        for (idx j = 0; j < nk; ++j)
            for (idx c = 0; c < d; ++c) out[c] += p[j] * v.at(j, c);
        const float inv = float(1.0 / ell);
        for (idx c = 0; c < d; ++c) CHECK(res.output.at(i, c) == out[c] * inv);
        CHECK(res.lse[i] == float(mx + std::log(ell)));
        CHECK(res.entropy[i] == float(std::log(ell) - h / ell));
    }
}

TEST_CASE("flash forward matches the dense oracle at N=512") {
    const idx n = 512, d = 32;
    auto q = testsup::randn<float>(n, d, 6);
    auto k = testsup::randn<float>(n, d, 7);
    auto v = testsup::randn<float>(n, d, 8);
    auto res = flash_entropy_fwd(q, k, v, {64, 64});
    auto ref = dense_attention(to_f64(q), to_f64(k), to_f64(v), false);

    CHECK(testsup::max_abs_diff(res.output, ref.output) < 1e-4);
    double worst_h = 0.0, worst_l = 0.0;
    for (idx i = 0; i < n; ++i) {
        worst_h = std::max(worst_h, std::abs(double(res.entropy[i]) - ref.entropy[i]));
        worst_l = std::max(worst_l, std::abs(double(res.lse[i]) - ref.logsumexp[i]));
    }
    CHECK(worst_h < 1e-4);
    CHECK(worst_l < 1e-4);
}

TEST_CASE("flash forward handles rectangular N_q != N_k") {
    auto q = testsup::randn<float>(40, 16, 9);
    auto k = testsup::randn<float>(256, 16, 10);
    auto v = testsup::randn<float>(256, 16, 11);
    auto res = flash_entropy_fwd(q, k, v, {32, 48});
    auto ref = dense_attention(to_f64(q), to_f64(k), to_f64(v), false);
    CHECK(testsup::max_abs_diff(res.output, ref.output) < 1e-4);
    for (idx i = 0; i < 40; ++i)
        CHECK(std::abs(double(res.entropy[i]) - ref.entropy[i]) < 1e-4);
}

TEST_CASE("forward output is independent of tile sizes") {
    const idx n = 384, d = 24;
    auto q = testsup::randn<float>(n, d, 12);
    auto k = testsup::randn<float>(n, d, 13);
    auto v = testsup::randn<float>(n, d, 14);
    const TileConfig cfgs[] = {{16, 16}, {64, 32}, {128, 128}};
    std::vector<FlashFwdResult<float>> results;
    for (const auto& cfg : cfgs) results.push_back(flash_entropy_fwd(q, k, v, cfg));
    for (std::size_t a = 0; a < results.size(); ++a)
        for (std::size_t b = a + 1; b < results.size(); ++b) {
            CHECK(testsup::max_abs_diff(results[a].output, results[b].output) < 2e-4);
            CHECK(testsup::max_abs_diff(std::span<const float>(results[a].entropy),
                                        std::span<const float>(results[b].entropy)) < 2e-4);
            CHECK(testsup::max_abs_diff(std::span<const float>(results[a].lse),
                                        std::span<const float>(results[b].lse)) < 2e-4);
        }
}

TEST_CASE("streamed element-by-element statistics reproduce the entropy") {
    const std::size_t count = 1000;
    auto scores = testsup::randn_vec<double>(count, 15, 3.0);
    StreamRowState<double> st;
    for (double x : scores) st.absorb(std::span<const double>(&x, 1));

    // direct shifted softmax entropy
    const double mx = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    std::vector<double> p(count);
    for (std::size_t i = 0; i < count; ++i) {
        p[i] = std::exp(scores[i] - mx);
        sum += p[i];
    }
    double h = 0.0;
    for (std::size_t i = 0; i < count; ++i) h -= plogp(p[i] / sum);

    CHECK(st.run_max == mx);
    CHECK(std::abs(st.entropy() - h) < 1e-10);
    CHECK(std::abs(st.logsumexp() - (mx + std::log(sum))) < 1e-10);
    CHECK(st.norm_sum > 0.0);
}

TEST_CASE("permuting keys and values jointly leaves results unchanged") {
    const idx n = 128, d = 16;
    auto q = testsup::randn<float>(n, d, 16);
    auto k = testsup::randn<float>(n, d, 17);
    auto v = testsup::randn<float>(n, d, 18);

    std::vector<idx> order(n);
    std::iota(order.begin(), order.end(), idx(0));
    std::mt19937_64 rng(19);
    std::shuffle(order.begin(), order.end(), rng);
    Mat<float> kp(n, d), vp(n, d);
    for (idx i = 0; i < n; ++i)
        for (idx c = 0; c < d; ++c) {
            kp.at(i, c) = k.at(order[i], c);
            vp.at(i, c) = v.at(order[i], c);
        }

    auto a = flash_entropy_fwd(q, k, v, {32, 32});
    auto b = flash_entropy_fwd(q, kp, vp, {32, 32});
    CHECK(testsup::max_abs_diff(a.output, b.output) < 1e-5);
    CHECK(testsup::max_abs_diff(std::span<const float>(a.lse),
                                std::span<const float>(b.lse)) < 1e-5);
    CHECK(testsup::max_abs_diff(std::span<const float>(a.entropy),
                                std::span<const float>(b.entropy)) < 1e-5);
}

TEST_CASE("entropy stays in [0, log N_k]") {
    const idx n = 200, d = 12;
    auto q = testsup::randn<float>(n, d, 20, 2.0);
    auto k = testsup::randn<float>(n, d, 21, 2.0);
    auto v = testsup::randn<float>(n, d, 22);
    auto res = flash_entropy_fwd(q, k, v, {48, 24});
    for (idx i = 0; i < n; ++i) {
        CHECK(res.entropy[i] >= -1e-5);
        CHECK(double(res.entropy[i]) <= std::log(double(n)) + 1e-5);
    }
}

TEST_CASE("flash forward rejects malformed inputs") {
    auto q = testsup::randn<float>(8, 4, 23);
    auto k = testsup::randn<float>(8, 6, 24);
    auto v = testsup::randn<float>(8, 4, 25);
    CHECK_THROWS_AS(flash_entropy_fwd(q, k, v), std::invalid_argument);

    Mat<float> empty_k(0, 4), empty_v(0, 4);
    CHECK_THROWS_AS(flash_entropy_fwd(q, empty_k, empty_v), std::domain_error);
}
