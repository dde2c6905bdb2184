#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "crtlab/quantize.hpp"
#include "crtlab/rng.hpp"
#include "doctest.h"

using namespace crtlab;
using G = ad::Graph<float>;

namespace {

// Independent brute-force cosine argmax, written without the normalization
// shortcuts of the implementation.
int brute_cosine_argmax(const float* z, const float* table, int k, int d) {
    double best = -2.0;
    int best_r = 0;
    for (int r = 0; r < k; ++r) {
        double dot = 0, zn = 0, rn = 0;
        for (int j = 0; j < d; ++j) {
            dot += (double)z[j] * table[r * d + j];
            zn += (double)z[j] * z[j];
            rn += (double)table[r * d + j] * table[r * d + j];
        }
        const double c = dot / (std::sqrt(zn) * std::sqrt(rn));
        if (c > best) {
            best = c;
            best_r = r;
        }
    }
    return best_r;
}

}  // namespace

TEST_CASE("vq_lookup: axis-aligned and tie cases") {
    const std::vector<float> table = {1, 0, 0, 1};  // rows (1,0), (0,1)
    int idx = -1;
    const std::vector<float> z1 = {0.9f, 0.1f};
    vq::vq_lookup(z1.data(), 1, table.data(), 2, 2, &idx, nullptr);
    CHECK(idx == 0);
    const std::vector<float> z2 = {1.f, 1.f};  // equidistant: tie goes to the lowest index
    vq::vq_lookup(z2.data(), 1, table.data(), 2, 2, &idx, nullptr);
    CHECK(idx == 0);
}

TEST_CASE("vq_lookup: zero vector quantizes to 0 and counts as degenerate") {
    const std::vector<float> table = {1, 0, 0, 1};
    const std::vector<float> z = {0.f, 0.f};
    int idx = -1;
    int64_t degen = 0;
    vq::vq_lookup(z.data(), 1, table.data(), 2, 2, &idx, &degen);
    CHECK(idx == 0);
    CHECK(degen == 1);
}

TEST_CASE("vq_lookup equals brute-force cosine argmax on random codebooks") {
    Rng rng(2024);
    for (int rep = 0; rep < 4; ++rep) {
        const int k = 64, d = 8;
        std::vector<float> table(k * d);
        vq::init_codebook(table, k, d, rng);
        const int n = 500;
        std::vector<float> z(n * d);
        for (auto& v : z) v = (float)rng.normal();
        std::vector<int> idx(n);
        vq::vq_lookup(z.data(), n, table.data(), k, d, idx.data(), nullptr);
        for (int i = 0; i < n; ++i)
            CHECK(idx[i] == brute_cosine_argmax(z.data() + i * d, table.data(), k, d));
    }
}

TEST_CASE("vq_losses: formula values and gradient routing") {
    // z = e -> both zero
    {
        G g;
        std::vector<float> z = {0.5f, -0.25f};
        auto zi = g.leaf({1, 2}, z.data(), true);
        auto ei = g.leaf({1, 2}, z.data(), true);
        auto l = vq::vq_losses(g, zi, ei, 0.25);
        CHECK(g.val(l.codebook)[0] == 0.f);
        CHECK(g.val(l.commit)[0] == 0.f);
    }
    // z=(1,0), e=(0,0), beta=0.25 -> (1.0, 0.25)
    {
        G g;
        std::vector<float> z = {1.f, 0.f}, e = {0.f, 0.f};
        auto zi = g.leaf({1, 2}, z.data(), true);
        auto ei = g.leaf({1, 2}, e.data(), true);
        auto l = vq::vq_losses(g, zi, ei, 0.25);
        CHECK(g.val(l.codebook)[0] == doctest::Approx(1.0));
        CHECK(g.val(l.commit)[0] == doctest::Approx(0.25));
        // commitment reaches z but not e; codebook reaches e but not z
        auto total = g.add(l.codebook, l.commit);
        g.backward(total);
        CHECK(g.grad(zi)[0] == doctest::Approx(0.25 * 2.0 * 1.0));  // d/dz beta*(z-e)^2
        CHECK(g.grad(ei)[0] == doctest::Approx(-2.0 * 1.0));        // d/de (z-e)^2
    }
    // isolate: only the codebook term -> z gets nothing
    {
        G g;
        std::vector<float> z = {1.f, 0.f}, e = {0.f, 0.f};
        auto zi = g.leaf({1, 2}, z.data(), true);
        auto ei = g.leaf({1, 2}, e.data(), true);
        auto l = vq::vq_losses(g, zi, ei, 0.25);
        g.backward(l.codebook);
        CHECK(g.grad(zi)[0] == 0.f);
        CHECK(g.grad(ei)[0] != 0.f);
    }
}

TEST_CASE("vq_apply: quantized output is an exact codebook row") {
    Rng rng(5);
    const int k = 16, d = 4, n = 32;
    std::vector<float> table(k * d);
    vq::init_codebook(table, k, d, rng);
    std::vector<float> z(n * d);
    for (auto& v : z) v = (float)rng.normal();
    G g;
    auto zi = g.leaf({n, d}, z.data(), true);
    auto ti = g.leaf({k, d}, table.data(), true);
    vq::UsageHistogram usage(k);
    auto out = vq::vq_apply(g, zi, ti, 0.25, &usage);
    for (int i = 0; i < n; ++i) {
        const int idx = out.indices[i];
        CHECK(idx < k);
        for (int j = 0; j < d; ++j)
            CHECK(g.val(out.quantized)[i * d + j] == table[idx * d + j]);
    }
    CHECK(usage.total() == n);
}

TEST_CASE("straight-through gradient at z is bitwise the incoming gradient") {
    Rng rng(9);
    const int n = 6, d = 3;
    std::vector<float> z(n * d), e(n * d), w(n * d);
    for (auto& v : z) v = (float)rng.normal();
    for (auto& v : e) v = (float)rng.normal();
    for (auto& v : w) v = (float)rng.normal();
    G g;
    auto zi = g.leaf({n, d}, z.data(), true);
    auto st = g.straight_through(zi, e.data());
    auto wi = g.leaf({n, d}, w.data(), false);
    auto loss = g.sum_all(g.mul(st, wi));
    g.backward(loss);
    // grad at st equals grad at z exactly
    CHECK(std::memcmp(g.grad(st).data(), g.grad(zi).data(), sizeof(float) * n * d) == 0);
}

TEST_CASE("fsq: grid projection, mixed radix, round-trips") {
    const std::vector<int> levels = {2, 2};
    // per-dim indices (1,0) -> composite 2 (first dimension most significant)
    const int pd[2] = {1, 0};
    CHECK(vq::fsq_composite_index(pd, levels) == 2);

    // a bounded vector already on grid points is a fixed point
    std::vector<float> v = {1.f, -1.f};
    int idx = -1;
    std::vector<float> q(2);
    vq::fsq_project(v.data(), 1, levels, &idx, q.data());
    CHECK(q[0] == v[0]);
    CHECK(q[1] == v[1]);
    CHECK(idx == 2);

    // index -> grid point -> re-quantize -> same index, for every index
    const std::vector<int> levels2 = {3, 5, 4};
    int total = 3 * 5 * 4;
    for (int i = 0; i < total; ++i) {
        std::vector<float> p(3);
        vq::fsq_index_to_point(i, levels2, p.data());
        int back = -1;
        vq::fsq_project(p.data(), 1, levels2, &back, nullptr);
        CHECK(back == i);
    }

    // composite index always below the radix product
    Rng rng(77);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<float> x(3);
        for (auto& t : x) t = (float)rng.normal(0, 2);
        std::vector<float> b(3);
        for (int j = 0; j < 3; ++j) b[j] = std::tanh(x[j]);
        int ci = -1;
        vq::fsq_project(b.data(), 1, levels2, &ci, nullptr);
        CHECK(ci >= 0);
        CHECK(ci < total);
    }
}

TEST_CASE("fsq_apply: quantized values are exact grid points and ST passes gradients") {
    Rng rng(11);
    const std::vector<int> levels = {4, 4};
    const int n = 20;
    std::vector<float> z(n * 2);
    for (auto& v : z) v = (float)rng.normal();
    G g;
    auto zi = g.leaf({n, 2}, z.data(), true);
    auto out = vq::fsq_apply(g, zi, levels, nullptr);
    for (int i = 0; i < n; ++i) {
        std::vector<float> p(2);
        vq::fsq_index_to_point(out.indices[i], levels, p.data());
        CHECK(g.val(out.quantized)[i * 2 + 0] == p[0]);
        CHECK(g.val(out.quantized)[i * 2 + 1] == p[1]);
    }
    auto loss = g.sum_all(out.quantized);
    g.backward(loss);
    // gradient reaches z through tanh backward (finite, nonzero)
    double s = 0;
    for (float v : g.grad(zi)) s += std::abs(v);
    CHECK(s > 0);
}

TEST_CASE("utilization: fractions and recount oracle") {
    vq::UsageHistogram h(16);
    CHECK_THROWS_AS(vq::utilization(h), ValidationError);
    h.counts[3] = 10;
    CHECK(vq::utilization(h) == doctest::Approx(1.0 / 16));
    for (auto& c : h.counts) c = 1;
    CHECK(vq::utilization(h) == doctest::Approx(1.0));

    // recount from a raw token dump
    Rng rng(4);
    vq::TokenDump dump;
    dump.codes = 32;
    dump.grid_h = 4;
    dump.grid_w = 4;
    dump.image_count = 10;
    dump.tokens.resize(160);
    for (auto& t : dump.tokens) t = (int32_t)rng.below(17);  // uses only codes < 17
    vq::UsageHistogram h2(dump.codes);
    for (int32_t t : dump.tokens) h2.counts[t] += 1;
    int used = 0;
    std::vector<int> seen(dump.codes, 0);
    for (int32_t t : dump.tokens) seen[t] = 1;
    for (int v : seen) used += v;
    CHECK(vq::utilization(h2) == doctest::Approx((double)used / dump.codes));
}

TEST_CASE("token dump: round-trip and malformed input") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "crtlab_test_tok";
    fs::create_directories(dir);
    const auto path = (dir / "t.tok").string();

    Rng rng(8);
    vq::TokenDump d;
    d.codes = 64;
    d.grid_h = 4;
    d.grid_w = 4;
    d.image_count = 7;
    d.tokens.resize(7 * 16);
    for (auto& t : d.tokens) t = (int32_t)rng.below(64);
    vq::write_token_dump(path, d);
    auto r = vq::read_token_dump(path);
    CHECK(r.codes == d.codes);
    CHECK(r.grid_h == d.grid_h);
    CHECK(r.grid_w == d.grid_w);
    CHECK(r.image_count == d.image_count);
    CHECK(r.tokens == d.tokens);

    std::ofstream bad(dir / "bad.tok", std::ios::binary);
    bad << "not a dump";
    bad.close();
    CHECK_THROWS_AS(vq::read_token_dump((dir / "bad.tok").string()), ValidationError);
    fs::remove_all(dir);
}
