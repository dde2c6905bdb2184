#include <array>
#include <cmath>
#include <cstring>
#include <vector>

#include "crtlab/kernels.hpp"
#include "crtlab/rng.hpp"
#include "doctest.h"

using namespace crtlab;

namespace {

std::vector<float> randn(Rng& rng, size_t n, double scale = 1.0) {
    std::vector<float> v(n);
    for (auto& x : v) x = (float)rng.normal(0.0, scale);
    return v;
}

// Textbook triple loop, independent of the kernel loop order.
void naive_matmul(std::vector<float>& c, const std::vector<float>& a, const std::vector<float>& b, int m,
                  int k, int n) {
    c.assign((size_t)m * n, 0.f);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int kk = 0; kk < k; ++kk) s += (double)a[i * k + kk] * b[kk * n + j];
            c[i * n + j] = (float)s;
        }
}

// Direct convolution written independently of the kernel.
void naive_conv(std::vector<float>& y, const std::vector<float>& x, const std::vector<float>& w,
                const std::vector<float>& bias, const kern::ConvDims& d) {
    y.assign((size_t)d.batch * d.out_ch * d.out_h * d.out_w, 0.f);
    for (int b = 0; b < d.batch; ++b)
        for (int oc = 0; oc < d.out_ch; ++oc)
            for (int oy = 0; oy < d.out_h; ++oy)
                for (int ox = 0; ox < d.out_w; ++ox) {
                    double s = bias.empty() ? 0.0 : bias[oc];
                    for (int ic = 0; ic < d.in_ch; ++ic)
                        for (int ky = 0; ky < d.kh; ++ky)
                            for (int kx = 0; kx < d.kw; ++kx) {
                                const int iy = oy * d.stride + ky - d.pad;
                                const int ix = ox * d.stride + kx - d.pad;
                                if (iy < 0 || iy >= d.in_h || ix < 0 || ix >= d.in_w) continue;
                                s += (double)x[((b * d.in_ch + ic) * d.in_h + iy) * d.in_w + ix] *
                                     w[((oc * d.in_ch + ic) * d.kh + ky) * d.kw + kx];
                            }
                    y[((b * d.out_ch + oc) * d.out_h + oy) * d.out_w + ox] = (float)s;
                }
}

}  // namespace

TEST_CASE("matmul matches naive triple loop") {
    Rng rng(11);
    const std::vector<std::array<int, 3>> cases = {{5, 7, 3}, {16, 16, 16}, {1, 33, 9}};
    for (auto [m, k, n] : cases) {
        auto a = randn(rng, (size_t)m * k);
        auto b = randn(rng, (size_t)k * n);
        std::vector<float> c((size_t)m * n), ref;
        kern::par::matmul(c.data(), a.data(), b.data(), m, k, n, false);
        naive_matmul(ref, a, b, m, k, n);
        for (size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-4));
    }
}

TEST_CASE("serial and parallel builds are bit-identical") {
    Rng rng(42);
    const int m = 13, k = 37, n = 11;
    auto a = randn(rng, (size_t)m * k);
    auto b = randn(rng, (size_t)k * n);
    std::vector<float> c1((size_t)m * n), c2((size_t)m * n);
    kern::serial::matmul(c1.data(), a.data(), b.data(), m, k, n, false);
    kern::par::matmul(c2.data(), a.data(), b.data(), m, k, n, false);
    CHECK(std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(float)) == 0);

    std::vector<float> d1((size_t)m * n), d2((size_t)m * n);
    kern::serial::matmul_nt(d1.data(), a.data(), b.data(), m, k, n, false);  // b misused as [n,k], fine
    kern::par::matmul_nt(d2.data(), a.data(), b.data(), m, k, n, false);
    CHECK(std::memcmp(d1.data(), d2.data(), d1.size() * sizeof(float)) == 0);

    kern::ConvDims cd{2, 3, 9, 9, 4, 3, 3, 2, 1, 5, 5};
    auto x = randn(rng, (size_t)cd.batch * cd.in_ch * cd.in_h * cd.in_w);
    auto w = randn(rng, (size_t)cd.out_ch * cd.in_ch * cd.kh * cd.kw);
    auto bias = randn(rng, cd.out_ch);
    const size_t ny = (size_t)cd.batch * cd.out_ch * cd.out_h * cd.out_w;
    std::vector<float> y1(ny), y2(ny);
    kern::serial::conv2d_fwd(y1.data(), x.data(), w.data(), bias.data(), cd);
    kern::par::conv2d_fwd(y2.data(), x.data(), w.data(), bias.data(), cd);
    CHECK(std::memcmp(y1.data(), y2.data(), ny * sizeof(float)) == 0);

    // backward kernels
    auto gy = randn(rng, ny);
    std::vector<float> gx1(x.size(), 0.f), gx2(x.size(), 0.f);
    kern::serial::conv2d_bwd_data(gx1.data(), gy.data(), w.data(), cd);
    kern::par::conv2d_bwd_data(gx2.data(), gy.data(), w.data(), cd);
    CHECK(std::memcmp(gx1.data(), gx2.data(), gx1.size() * sizeof(float)) == 0);

    std::vector<float> gw1(w.size(), 0.f), gw2(w.size(), 0.f);
    kern::serial::conv2d_bwd_weight(gw1.data(), x.data(), gy.data(), cd);
    kern::par::conv2d_bwd_weight(gw2.data(), x.data(), gy.data(), cd);
    CHECK(std::memcmp(gw1.data(), gw2.data(), gw1.size() * sizeof(float)) == 0);

    const int64_t rows = 17;
    const int dd = 29;
    auto xx = randn(rng, (size_t)rows * dd);
    auto gamma = randn(rng, dd);
    auto beta = randn(rng, dd);
    std::vector<float> o1(xx.size()), o2(xx.size()), mu(rows), rs(rows);
    kern::serial::layernorm_fwd(o1.data(), mu.data(), rs.data(), xx.data(), gamma.data(), beta.data(), rows,
                                dd, 1e-5f);
    kern::par::layernorm_fwd(o2.data(), mu.data(), rs.data(), xx.data(), gamma.data(), beta.data(), rows,
                             dd, 1e-5f);
    CHECK(std::memcmp(o1.data(), o2.data(), o1.size() * sizeof(float)) == 0);
}

TEST_CASE("conv2d forward matches naive direct convolution") {
    Rng rng(7);
    for (int stride : {1, 2}) {
        kern::ConvDims d;
        d.batch = 2;
        d.in_ch = 3;
        d.in_h = 8;
        d.in_w = 8;
        d.out_ch = 5;
        d.kh = 3;
        d.kw = 3;
        d.stride = stride;
        d.pad = 1;
        d.out_h = (d.in_h + 2 * d.pad - d.kh) / stride + 1;
        d.out_w = (d.in_w + 2 * d.pad - d.kw) / stride + 1;
        auto x = randn(rng, (size_t)d.batch * d.in_ch * d.in_h * d.in_w);
        auto w = randn(rng, (size_t)d.out_ch * d.in_ch * d.kh * d.kw);
        auto bias = randn(rng, d.out_ch);
        std::vector<float> y((size_t)d.batch * d.out_ch * d.out_h * d.out_w), ref;
        kern::par::conv2d_fwd(y.data(), x.data(), w.data(), bias.data(), d);
        naive_conv(ref, x, w, bias, d);
        for (size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-4));
    }
}

TEST_CASE("softmax rows sum to one and causal rows ignore the future") {
    Rng rng(3);
    const int nb = 4, n = 9;
    auto s = randn(rng, (size_t)nb * n * n);
    std::vector<float> p(s.size());
    kern::par::softmax_causal_fwd(p.data(), s.data(), nb, n);
    for (int b = 0; b < nb; ++b)
        for (int i = 0; i < n; ++i) {
            double sum = 0;
            for (int j = 0; j < n; ++j) {
                const float v = p[(b * n + i) * n + j];
                if (j > i) CHECK(v == 0.f);
                sum += v;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
        }
}
