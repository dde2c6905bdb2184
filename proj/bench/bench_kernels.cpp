// Serial-vs-OpenMP kernel benchmark. Prints GFLOP/s per kernel for both
// builds plus the speedup, and verifies the outputs agree bit-for-bit.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "crtlab/kernels.hpp"
#include "crtlab/rng.hpp"

using namespace crtlab;

namespace {

double now_s() {
    using clk = std::chrono::steady_clock;
    return std::chrono::duration<double>(clk::now().time_since_epoch()).count();
}

template <class F>
double time_best(const F& fn, int reps = 5) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_s();
        fn();
        best = std::min(best, now_s() - t0);
    }
    return best;
}

std::vector<float> randn(Rng& rng, size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = (float)rng.normal();
    return v;
}

void report(const char* name, double flops, double t_serial, double t_par, bool bitwise) {
    std::printf("%-22s serial %8.2f GF/s   omp %8.2f GF/s   speedup %5.2fx   bitwise %s\n", name,
                flops / t_serial / 1e9, flops / t_par / 1e9, t_serial / t_par, bitwise ? "yes" : "NO");
}

}  // namespace

int main() {
    Rng rng(1234);
    std::printf("threads: %d\n", kern::threads());

    {
        const int m = 256, k = 256, n = 256;
        auto a = randn(rng, (size_t)m * k);
        auto b = randn(rng, (size_t)k * n);
        std::vector<float> c1((size_t)m * n), c2((size_t)m * n);
        const double fl = 2.0 * m * k * n;
        const double ts = time_best([&] { kern::serial::matmul(c1.data(), a.data(), b.data(), m, k, n, false); });
        const double tp = time_best([&] { kern::par::matmul(c2.data(), a.data(), b.data(), m, k, n, false); });
        report("matmul 256^3", fl, ts, tp, !std::memcmp(c1.data(), c2.data(), c1.size() * 4));
    }
    {
        const int m = 256, k = 256, n = 256;
        auto a = randn(rng, (size_t)m * k);
        auto b = randn(rng, (size_t)n * k);
        std::vector<float> c1((size_t)m * n), c2((size_t)m * n);
        const double fl = 2.0 * m * k * n;
        const double ts = time_best([&] { kern::serial::matmul_nt(c1.data(), a.data(), b.data(), m, k, n, false); });
        const double tp = time_best([&] { kern::par::matmul_nt(c2.data(), a.data(), b.data(), m, k, n, false); });
        report("matmul_nt 256^3", fl, ts, tp, !std::memcmp(c1.data(), c2.data(), c1.size() * 4));
    }
    {
        kern::ConvDims d{8, 32, 32, 32, 32, 3, 3, 1, 1, 32, 32};
        auto x = randn(rng, (size_t)d.batch * d.in_ch * d.in_h * d.in_w);
        auto w = randn(rng, (size_t)d.out_ch * d.in_ch * 9);
        auto bias = randn(rng, d.out_ch);
        const size_t ny = (size_t)d.batch * d.out_ch * d.out_h * d.out_w;
        std::vector<float> y1(ny), y2(ny);
        const double fl = 2.0 * d.batch * d.out_ch * d.out_h * d.out_w * d.in_ch * 9;
        const double ts = time_best([&] { kern::serial::conv2d_fwd(y1.data(), x.data(), w.data(), bias.data(), d); });
        const double tp = time_best([&] { kern::par::conv2d_fwd(y2.data(), x.data(), w.data(), bias.data(), d); });
        report("conv3x3 b8c32 32x32", fl, ts, tp, !std::memcmp(y1.data(), y2.data(), ny * 4));

        auto gy = randn(rng, ny);
        std::vector<float> gw1(w.size(), 0.f), gw2(w.size(), 0.f);
        const double ts2 = time_best([&] {
            std::fill(gw1.begin(), gw1.end(), 0.f);
            kern::serial::conv2d_bwd_weight(gw1.data(), x.data(), gy.data(), d);
        });
        const double tp2 = time_best([&] {
            std::fill(gw2.begin(), gw2.end(), 0.f);
            kern::par::conv2d_bwd_weight(gw2.data(), x.data(), gy.data(), d);
        });
        report("conv3x3 bwd_weight", fl, ts2, tp2, !std::memcmp(gw1.data(), gw2.data(), gw1.size() * 4));
    }
    {
        const int64_t rows = 4096;
        const int dd = 256;
        auto x = randn(rng, (size_t)rows * dd);
        auto gamma = randn(rng, dd), beta = randn(rng, dd);
        std::vector<float> y1(x.size()), y2(x.size()), mu(rows), rs(rows);
        const double fl = 8.0 * rows * dd;
        const double ts = time_best([&] {
            kern::serial::layernorm_fwd(y1.data(), mu.data(), rs.data(), x.data(), gamma.data(), beta.data(), rows, dd, 1e-5f);
        });
        const double tp = time_best([&] {
            kern::par::layernorm_fwd(y2.data(), mu.data(), rs.data(), x.data(), gamma.data(), beta.data(), rows, dd, 1e-5f);
        });
        report("layernorm 4096x256", fl, ts, tp, !std::memcmp(y1.data(), y2.data(), y1.size() * 4));
    }
    return 0;
}
