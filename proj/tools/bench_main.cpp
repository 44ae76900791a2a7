// Benchmark and verification harness for the attention kernels: generates or
// loads workloads, runs the dense / flash / monarch / vmonarch paths, and
// emits timing, MAC, sparsity and error reports as JSON or CSV.

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "vmonarch/flash_entropy.hpp"
#include "vmonarch/matn_io.hpp"
#include "vmonarch/monarch.hpp"
#include "vmonarch/oracle.hpp"
#include "vmonarch/video.hpp"

using json = nlohmann::ordered_json;
using namespace vmonarch;

namespace {

constexpr idx kVerifyCap = 8192;  // oracle memory cap

// Validation refusals (exit code 2), as opposed to hard errors (exit code 1).
struct RefusalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string mode;
    std::string preset;
    idx iters = 2;
    double clamp_min = 0.1;
    bool no_clamp = false;
    bool no_recompute = false;
    idx m = 0, b = 0;
    idx n = 0, d = 64;
    idx heads = 1, batch = 1;
    idx br = 64, bc = 64;
    std::uint64_t seed = 0;
    int repeats = 1;
    std::string verify = "off";
    std::string precision = "f32";
    bool csv = false;
    std::string dist = "normal";
    int threads = 1;
    std::string in_path, out_path;
    std::string grid_spec;
    std::string sweep_spec;
};

struct ErrorStats {
    double max_abs = 0.0;
    double rel_fro = 0.0;
};

template <class T>
ErrorStats error_vs(const Mat<T>& got, const Mat<double>& ref) {
    ErrorStats e;
    double num = 0.0, den = 0.0;
    for (idx i = 0; i < got.size(); ++i) {
        const double diff = static_cast<double>(got.data[i]) - ref.data[i];
        e.max_abs = std::max(e.max_abs, std::abs(diff));
        num += diff * diff;
        den += ref.data[i] * ref.data[i];
    }
    e.rel_fro = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    return e;
}

template <class T>
Mat<T> random_mat(idx rows, idx cols, std::uint64_t seed, const std::string& dist) {
    std::mt19937_64 rng(seed);
    Mat<T> m(rows, cols);
    if (dist == "uniform") {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (auto& x : m.data) x = static_cast<T>(u(rng));
    } else {
        std::normal_distribution<double> g(0.0, 1.0);
        for (auto& x : m.data) x = static_cast<T>(g(rng));
    }
    return m;
}

std::optional<TokenGrid> resolve_grid(const Options& opt) {
    if (!opt.preset.empty()) {
        auto p = preset_grid(opt.preset);
        if (!p) throw std::invalid_argument("unknown preset '" + opt.preset + "'");
        return TokenGrid{p->t_frames, p->h, p->w, opt.d, opt.heads, opt.batch};
    }
    if (!opt.grid_spec.empty()) {
        idx t = 0, h = 0, w = 0;
        char x1 = 0, x2 = 0;
        std::istringstream is(opt.grid_spec);
        if (!(is >> t >> x1 >> h >> x2 >> w) || x1 != 'x' || x2 != 'x' || t < 1 || h < 1 || w < 1)
            throw std::invalid_argument("--grid expects TxHxW, e.g. 16x28x52");
        return TokenGrid{t, h, w, opt.d, opt.heads, opt.batch};
    }
    return std::nullopt;
}

VMonarchConfig video_config(const Options& opt) {
    VMonarchConfig cfg;
    cfg.iters = opt.iters;
    cfg.clamp_min = opt.clamp_min;
    cfg.clamp_enabled = !opt.no_clamp;
    cfg.recompute_first_frame = !opt.no_recompute;
    cfg.tiles = TileConfig{opt.br, opt.bc};
    if (opt.m > 0 || opt.b > 0) {
        if (opt.m <= 0 || opt.b <= 0)
            throw std::invalid_argument("--m and --b must be given together");
        cfg.override_m_b = std::pair<idx, idx>{opt.m, opt.b};
    }
    return cfg;
}

class Timer {
  public:
    void start() { t0_ = std::chrono::steady_clock::now(); }
    std::uint64_t stop() {
        const auto t1 = std::chrono::steady_clock::now();
        return static_cast<std::uint64_t>(
            std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0_).count());
    }

  private:
    std::chrono::steady_clock::time_point t0_;
};

std::uint64_t median_ns(std::vector<std::uint64_t> runs) {
    std::sort(runs.begin(), runs.end());
    return runs[runs.size() / 2];
}

template <class T>
struct Workload {
    std::vector<Mat<T>> q, k, v;
    idx n = 0, d = 0;
};

template <class T>
Workload<T> build_workload(const Options& opt, idx n, idx units) {
    Workload<T> w;
    w.n = n;
    w.d = opt.d;
    if (!opt.in_path.empty()) {
        if (units != 1)
            throw std::invalid_argument("--in supports a single batch*head unit");
        auto f = read_matn(opt.in_path);
        auto t = matn_to_tensor3<T>(f);
        if (t.d0 != 3)
            throw std::runtime_error("matn: field 'dims': --in expects a (3, N, d) stack of Q, K, V");
        w.n = t.d1;
        w.d = t.d2;
        for (int s = 0; s < 3; ++s) {
            Mat<T> m(t.d1, t.d2);
            std::copy(t.block(s), t.block(s) + t.d1 * t.d2, m.data.begin());
            (s == 0 ? w.q : s == 1 ? w.k : w.v).push_back(std::move(m));
        }
        return w;
    }
    for (idx u = 0; u < units; ++u) {
        w.q.push_back(random_mat<T>(n, opt.d, opt.seed + 3 * u, opt.dist));
        w.k.push_back(random_mat<T>(n, opt.d, opt.seed + 3 * u + 1, opt.dist));
        w.v.push_back(random_mat<T>(n, opt.d, opt.seed + 3 * u + 2, opt.dist));
    }
    return w;
}

// Reference output for monarch-path verification: the materialized factor map
// applied to V, with first-frame rows overwritten by the dense oracle when
// recomputation is on.
template <class T>
Mat<double> monarch_reference(const MonarchFactors<T>& f, const Mat<T>& q, const Mat<T>& k,
                              const Mat<T>& v, idx b, idx recompute_rows) {
    const idx n = q.rows;
    MonarchFactors<double> f64{to_f64(f.L), to_f64(f.R)};
    auto m = materialize_monarch(f64, b, n);
    auto v64 = to_f64(v);
    Mat<double> ref(n, v.cols);
    gemm_nn(n, v.cols, n, m.row(0), n, v64.row(0), v.cols, ref.row(0), v.cols);
    if (recompute_rows > 0) {
        Mat<double> q0(recompute_rows, q.cols);
        for (idx i = 0; i < recompute_rows; ++i)
            for (idx c = 0; c < q.cols; ++c) q0.at(i, c) = static_cast<double>(q.at(i, c));
        auto dense = dense_attention(q0, to_f64(k), v64, true);
        for (idx i = 0; i < recompute_rows; ++i)
            for (idx c = 0; c < v.cols; ++c) ref.at(i, c) = dense.output.at(i, c);
    }
    return ref;
}

struct RunOutcome {
    std::vector<std::uint64_t> wall_ns;
    std::uint64_t macs = 0;
    std::optional<ErrorStats> err;
    std::optional<CostReport> cost;
    idx n = 0, d = 0, m = 0, b = 0;
};

template <class T>
RunOutcome run_mode(const Options& opt) {
    const auto grid = resolve_grid(opt);
    RunOutcome out;

    idx n = opt.n;
    if (grid) n = grid->tokens();
    if (n <= 0 && opt.in_path.empty())
        throw std::invalid_argument("sequence length missing: pass --n, --grid, --preset or --in");
    const bool verify = opt.verify == "on";
    auto check_verify_cap = [&](idx actual_n) {
        if (verify && actual_n > kVerifyCap)
            throw RefusalError("verify requires N <= " + std::to_string(kVerifyCap) +
                               " (dense oracle memory cap); got N = " + std::to_string(actual_n));
    };
    check_verify_cap(n);

    Timer timer;
    const int reps = std::max(1, opt.repeats);

    if (opt.mode == "dense" || opt.mode == "flash") {
        auto w = build_workload<T>(opt, n, 1);
        check_verify_cap(w.n);
        out.n = w.n;
        out.d = w.d;
        Mat<T> o;
        std::vector<T> entropy;
        macs::reset();
        for (int r = 0; r < reps; ++r) {
            timer.start();
            if (opt.mode == "dense") {
                o = dense_forward(w.q[0], w.k[0], w.v[0], true);
            } else {
                Mat<T> qs = w.q[0];
                const T sc = static_cast<T>(1.0 / std::sqrt(static_cast<double>(w.d)));
                for (auto& x : qs.data) x *= sc;
                auto res = flash_entropy_fwd(qs, w.k[0], w.v[0], TileConfig{opt.br, opt.bc});
                o = std::move(res.output);
                entropy = std::move(res.entropy);
            }
            out.wall_ns.push_back(timer.stop());
            if (r == 0) out.macs = macs::total();
        }
        if (verify) {
            auto ref = dense_attention(to_f64(w.q[0]), to_f64(w.k[0]), to_f64(w.v[0]), true);
            out.err = error_vs(o, ref.output);
        }
        return out;
    }

    if (opt.mode == "monarch") {
        idx m = opt.m, b = opt.b;
        if (grid) {
            VMonarchConfig vc = video_config(opt);
            std::tie(m, b) = factorize(*grid, vc);
        }
        if (m <= 0 || b <= 0)
            throw std::invalid_argument("monarch mode needs --m/--b or a grid/preset");
        out.m = m;
        out.b = b;

        auto w = build_workload<T>(opt, n, 1);
        check_dim(m * b == w.n, "m*b must equal N");
        check_verify_cap(w.n);
        out.n = w.n;
        out.d = w.d;
        MonarchConfig mc{m, b, opt.iters, opt.clamp_min, !opt.no_clamp};
        MonarchResult<T> res;
        macs::reset();
        for (int r = 0; r < reps; ++r) {
            timer.start();
            res = monarch_attention(w.q[0], w.k[0], w.v[0], mc);
            out.wall_ns.push_back(timer.stop());
            if (r == 0) out.macs = macs::total();
        }
        TokenGrid pseudo{m, 1, b, w.d, 1, 1};
        VMonarchConfig vc = video_config(opt);
        vc.override_m_b.reset();
        vc.recompute_first_frame = false;
        out.cost = flops_estimate(pseudo, vc, w.d);
        if (verify)
            out.err = error_vs(res.output,
                               monarch_reference(res.factors, w.q[0], w.k[0], w.v[0], b, 0));
        return out;
    }

    if (opt.mode == "vmonarch") {
        if (!grid) throw std::invalid_argument("vmonarch mode needs --grid or --preset");
        VMonarchConfig vc = video_config(opt);
        const auto [m, b] = factorize(*grid, vc);
        out.m = m;
        out.b = b;
        auto w = build_workload<T>(opt, n, grid->units());
        out.n = n;
        out.d = grid->head_dim;

        std::vector<Mat<T>> o;
        std::vector<MonarchFactors<T>> factors;
        macs::reset();
        for (int r = 0; r < reps; ++r) {
            timer.start();
            o = vmonarch_attention<T>(w.q, w.k, w.v, *grid, vc, opt.threads,
                                      verify ? &factors : nullptr);
            out.wall_ns.push_back(timer.stop());
            if (r == 0) out.macs = macs::total();
        }
        out.cost = flops_estimate(*grid, vc, grid->head_dim);
        if (verify) {
            ErrorStats worst;
            const idx rr = vc.recompute_first_frame ? grid->frame_tokens() : 0;
            for (idx u = 0; u < grid->units(); ++u) {
                auto ref = monarch_reference(factors[u], w.q[u], w.k[u], w.v[u], b, rr);
                auto e = error_vs(o[u], ref);
                worst.max_abs = std::max(worst.max_abs, e.max_abs);
                worst.rel_fro = std::max(worst.rel_fro, e.rel_fro);
            }
            out.err = worst;
        }
        return out;
    }

    throw std::invalid_argument("unknown mode '" + opt.mode + "'");
}

json outcome_to_json(const Options& opt, const RunOutcome& oc, const std::optional<TokenGrid>& grid) {
    json j;
    j["mode"] = opt.mode;
    j["precision"] = opt.precision;
    j["seed"] = opt.seed;
    j["n"] = oc.n;
    j["d"] = oc.d;
    j["m"] = oc.m;
    j["b"] = oc.b;
    j["iters"] = opt.iters;
    j["heads"] = opt.heads;
    j["batch"] = opt.batch;
    j["clamp"] = !opt.no_clamp;
    j["clamp_min"] = opt.clamp_min;
    j["recompute"] = !opt.no_recompute;
    j["br"] = opt.br;
    j["bc"] = opt.bc;
    j["dist"] = opt.dist;
    j["threads"] = opt.threads;
    j["repeats"] = opt.repeats;
    if (grid)
        j["grid"] = {{"t", grid->t_frames}, {"h", grid->h}, {"w", grid->w}};
    else
        j["grid"] = nullptr;
    j["macs"] = oc.macs;
    if (oc.cost) {
        j["cost"] = {{"sparsity", oc.cost->sparsity},
                     {"sparsity_approx", oc.cost->sparsity_approx},
                     {"monarch_flops", oc.cost->monarch_flops},
                     {"full_attn_flops", oc.cost->full_attn_flops},
                     {"recompute_flops", oc.cost->recompute_flops},
                     {"reduction_ratio", oc.cost->reduction_ratio}};
    } else {
        j["cost"] = nullptr;
    }
    if (oc.err)
        j["verify"] = {{"max_abs_err", oc.err->max_abs}, {"rel_fro_err", oc.err->rel_fro}};
    j["wall_ns"] = {{"median", median_ns(oc.wall_ns)}, {"runs", oc.wall_ns}};
    return j;
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

std::string outcome_to_csv(const Options& opt, const RunOutcome& oc) {
    std::ostringstream os;
    os << "mode,precision,seed,n,d,m,b,iters,heads,batch,clamp,clamp_min,recompute,br,bc,dist,"
          "threads,repeats,wall_ns_median,macs,sparsity,sparsity_approx,monarch_flops,"
          "full_attn_flops,recompute_flops,reduction_ratio,max_abs_err,rel_fro_err\n";
    os << opt.mode << ',' << opt.precision << ',' << opt.seed << ',' << oc.n << ',' << oc.d << ','
       << oc.m << ',' << oc.b << ',' << opt.iters << ',' << opt.heads << ',' << opt.batch << ','
       << (!opt.no_clamp ? 1 : 0) << ',' << fmt_double(opt.clamp_min) << ','
       << (!opt.no_recompute ? 1 : 0) << ',' << opt.br << ',' << opt.bc << ',' << opt.dist << ','
       << opt.threads << ',' << opt.repeats << ',' << median_ns(oc.wall_ns) << ',' << oc.macs << ',';
    if (oc.cost)
        os << fmt_double(oc.cost->sparsity) << ',' << fmt_double(oc.cost->sparsity_approx)
           << ',' << oc.cost->monarch_flops << ',' << oc.cost->full_attn_flops << ','
           << oc.cost->recompute_flops << ',' << fmt_double(oc.cost->reduction_ratio) << ',';
    else
        os << ",,,,,,";
    if (oc.err)
        os << fmt_double(oc.err->max_abs) << ',' << fmt_double(oc.err->rel_fro);
    else
        os << ',';
    os << '\n';
    return os.str();
}

// T sweep at fixed (h, w, d): one CSV row per grid comparing the monarch and
// dense paths.
template <class T>
std::string run_sweep(const Options& opt) {
    idx t_from = 0, t_to = 0, t_step = 4;
    {
        std::istringstream is(opt.sweep_spec);
        char c1 = 0, c2 = 0;
        if (!(is >> t_from >> c1 >> t_to) || c1 != ':')
            throw std::invalid_argument("--sweep expects FROM:TO[:STEP]");
        if (is >> c2 >> t_step) {
            if (c2 != ':' || t_step < 1) throw std::invalid_argument("--sweep expects FROM:TO[:STEP]");
        }
    }
    idx h = 8, w = 8;
    if (!opt.grid_spec.empty() || !opt.preset.empty()) {
        Options g = opt;
        auto grid = resolve_grid(g);
        h = grid->h;
        w = grid->w;
    }

    std::ostringstream os;
    os << "T,h,w,n,d,iters,precision,seed,dense_wall_ns,monarch_wall_ns,speedup,dense_macs,"
          "monarch_macs,sparsity,max_abs_err,status\n";

    Timer timer;
    const int reps = std::max(1, opt.repeats);
    for (idx t = t_from; t <= t_to; t += t_step) {
        const idx n = t * h * w;
        Options row_opt = opt;
        row_opt.n = n;
        auto wl = build_workload<T>(row_opt, n, 1);

        MonarchConfig mc{t, h * w, opt.iters, opt.clamp_min, !opt.no_clamp};
        std::vector<std::uint64_t> dense_runs, monarch_runs;
        std::uint64_t dense_macs = 0, monarch_macs = 0;
        Mat<T> dense_out;
        MonarchResult<T> mres;
        macs::reset();
        for (int r = 0; r < reps; ++r) {
            timer.start();
            dense_out = dense_forward(wl.q[0], wl.k[0], wl.v[0], true);
            dense_runs.push_back(timer.stop());
            if (r == 0) dense_macs = macs::total();
        }
        macs::reset();
        for (int r = 0; r < reps; ++r) {
            timer.start();
            mres = monarch_attention(wl.q[0], wl.k[0], wl.v[0], mc);
            monarch_runs.push_back(timer.stop());
            if (r == 0) monarch_macs = macs::total();
        }
        const std::uint64_t dmed = median_ns(dense_runs);
        const std::uint64_t mmed = median_ns(monarch_runs);

        TokenGrid grid{t, h, w, wl.d, 1, 1};
        VMonarchConfig vc = video_config(opt);
        vc.override_m_b.reset();

        std::string status = "ok";
        std::string err_field;
        if (opt.verify == "on") {
            if (n > kVerifyCap) {
                status = "refused:verify-cap";
            } else {
                auto ref = monarch_reference(mres.factors, wl.q[0], wl.k[0], wl.v[0], h * w, 0);
                err_field = fmt_double(error_vs(mres.output, ref).max_abs);
            }
        }
        os << t << ',' << h << ',' << w << ',' << n << ',' << wl.d << ',' << opt.iters << ','
           << opt.precision << ',' << opt.seed << ',' << dmed << ',' << mmed << ','
           << fmt_double(double(dmed) / double(mmed)) << ',' << dense_macs << ','
           << monarch_macs << ',' << fmt_double(sparsity_estimate(grid, vc)) << ','
           << err_field << ',' << status << '\n';
    }
    return os.str();
}

void emit(const Options& opt, const std::string& text) {
    if (!opt.out_path.empty()) {
        std::ofstream f(opt.out_path);
        if (!f) throw std::runtime_error("cannot open --out file '" + opt.out_path + "'");
        f << text;
    } else {
        std::cout << text;
    }
}

template <class T>
int dispatch(const Options& opt) {
    if (!opt.sweep_spec.empty()) {
        emit(opt, run_sweep<T>(opt));
        return 0;
    }
    const auto grid = resolve_grid(opt);
    const RunOutcome oc = run_mode<T>(opt);
    if (opt.csv)
        emit(opt, outcome_to_csv(opt, oc));
    else
        emit(opt, outcome_to_json(opt, oc, grid).dump(2) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    Options opt;
    CLI::App app{"Monarch-factorized attention benchmark harness"};
    app.add_option("--mode", opt.mode, "dense | flash | monarch | vmonarch")
        ->check(CLI::IsMember({"dense", "flash", "monarch", "vmonarch"}));
    app.add_option("--preset", opt.preset, "grid preset: wan-61f | wan-141f | wan-321f");
    app.add_option("--grid", opt.grid_spec, "latent grid TxHxW, e.g. 16x28x52");
    app.add_option("--t", opt.iters, "monarch iterations (default 2)");
    app.add_option("--clamp-min", opt.clamp_min, "c_R lower bound (default 0.1)");
    app.add_flag("--no-clamp", opt.no_clamp, "disable c_R clamping (exact mode)");
    app.add_flag("--no-recompute", opt.no_recompute, "disable first-frame recomputation");
    app.add_option("--m", opt.m, "monarch factor count m (override)");
    app.add_option("--b", opt.b, "monarch block size b (override)");
    app.add_option("--n", opt.n, "sequence length for non-grid modes");
    app.add_option("--d", opt.d, "head dimension (default 64)");
    app.add_option("--heads", opt.heads, "heads per batch entry (default 1)");
    app.add_option("--batch", opt.batch, "batch size (default 1)");
    app.add_option("--br", opt.br, "flash query-tile rows (default 64)");
    app.add_option("--bc", opt.bc, "flash key-tile cols (default 64)");
    app.add_option("--seed", opt.seed, "RNG seed (default 0)");
    app.add_option("--repeats", opt.repeats, "timing repeats, median reported (default 1)");
    app.add_option("--verify", opt.verify, "on | off: compare against the dense/materialized oracle")
        ->check(CLI::IsMember({"on", "off"}));
    app.add_option("--precision", opt.precision, "f32 | f64 (default f32)")
        ->check(CLI::IsMember({"f32", "f64"}));
    app.add_flag("--csv", opt.csv, "emit CSV instead of JSON");
    app.add_option("--dist", opt.dist, "normal | uniform input distribution")
        ->check(CLI::IsMember({"normal", "uniform"}));
    app.add_option("--threads", opt.threads, "worker threads over batch*head units (default 1)");
    app.add_option("--in", opt.in_path, "load Q,K,V from a (3,N,d) MATN tensor");
    app.add_option("--out", opt.out_path, "write the report to a file instead of stdout");
    app.add_option("--sweep", opt.sweep_spec, "T sweep FROM:TO[:STEP] comparing monarch vs dense");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (opt.mode.empty() && opt.sweep_spec.empty()) {
        std::cerr << "error: --mode is required (or use --sweep)\n";
        return 1;
    }

    try {
        if (opt.precision == "f64") return dispatch<double>(opt);
        return dispatch<float>(opt);
    } catch (const RefusalError& e) {
        std::cerr << "refused: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
