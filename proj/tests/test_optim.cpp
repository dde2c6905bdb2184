#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "crtlab/checkpoint.hpp"
#include "crtlab/optim.hpp"
#include "crtlab/rng.hpp"
#include "doctest.h"

using namespace crtlab;
using opt::AdamWConfig;
using opt::Param;
using opt::ParamStore;
using opt::ScheduleKind;
using opt::ScheduleSpec;

TEST_CASE("adamw: zero gradient and zero decay leaves parameter unchanged") {
    ParamStore store;
    auto& p = store.create("p", {3}, [](std::span<float> w) { w[0] = 1.f, w[1] = -2.f, w[2] = 0.5f; });
    std::vector<float> g(3, 0.f);
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    adamw_step(p, g, cfg);
    CHECK(p.w[0] == 1.f);
    CHECK(p.w[1] == -2.f);
    CHECK(p.w[2] == 0.5f);
    CHECK(p.step == 1);
}

TEST_CASE("adamw: single step from zero moments matches hand evaluation") {
    // g=1, lr=0.1, betas=(0.9,0.95), wd=0:
    //   m=0.1, v=0.05, mhat=1, vhat=1 -> update = -0.1 * 1/(1+1e-8)
    ParamStore store;
    auto& p = store.create("p", {1}, [](std::span<float> w) { w[0] = 0.f; });
    std::vector<float> g = {1.f};
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.beta1 = 0.9;
    cfg.beta2 = 0.95;
    cfg.weight_decay = 0.0;
    adamw_step(p, g, cfg);
    const double expect = -0.1 * (1.0 / (1.0 + 1e-8));
    CHECK(p.w[0] == doctest::Approx(expect).epsilon(1e-6));  // stored as float32
}

TEST_CASE("adamw: decoupled weight decay") {
    // wd=0.1, g=0, w=1.0, lr=0.1 -> w = 1 - 0.1*0.1*1 = 0.99
    ParamStore store;
    auto& p = store.create("p", {1}, [](std::span<float> w) { w[0] = 1.f; });
    std::vector<float> g = {0.f};
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.1;
    adamw_step(p, g, cfg);
    CHECK(p.w[0] == doctest::Approx(0.99).epsilon(1e-7));
}

TEST_CASE("adamw: non-finite gradient raises an error naming the parameter") {
    ParamStore store;
    auto& p = store.create("enc.block0.w", {2}, nullptr);
    std::vector<float> g = {1.f, std::nanf("")};
    try {
        adamw_step(p, g, AdamWConfig{});
        FAIL("expected throw");
    } catch (const RuntimeFailure& e) {
        CHECK(std::string(e.what()).find("enc.block0.w") != std::string::npos);
    }
}

TEST_CASE("adamw: identical seeds give identical trajectories") {
    auto run = [] {
        Rng rng(7);
        ParamStore store;
        auto& p = store.create("p", {8}, [&](std::span<float> w) {
            for (auto& v : w) v = (float)rng.normal();
        });
        AdamWConfig cfg;
        cfg.lr = 1e-2;
        Rng grng(13);
        for (int i = 0; i < 25; ++i) {
            std::vector<float> g(8);
            for (auto& v : g) v = (float)grng.normal();
            adamw_step(p, g, cfg);
        }
        return p.w;
    };
    auto a = run();
    auto b = run();
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

TEST_CASE("schedules: GAN-style cosine ramp window") {
    ScheduleSpec s;
    s.kind = ScheduleKind::CosineRampWindow;
    s.base = 0.5;
    s.window_start = 20000;
    s.window_len = 2000;
    s.total = 400000;
    CHECK(schedule_at(s, 0) == 0.0);
    CHECK(schedule_at(s, 20000) == 0.0);
    CHECK(schedule_at(s, 22000) == doctest::Approx(0.5));
    CHECK(schedule_at(s, 21000) == doctest::Approx(0.25));  // half-cosine midpoint
    CHECK(schedule_at(s, 399999) == doctest::Approx(0.5));
}

TEST_CASE("schedules: warmup variants and clamping") {
    ScheduleSpec s;
    s.kind = ScheduleKind::WarmupConstant;
    s.base = 1e-4;
    s.warm_start = 1e-5;
    s.warmup = 3000;
    s.total = 10000;
    CHECK(schedule_at(s, 0) == doctest::Approx(1e-5));
    CHECK(schedule_at(s, 3000) == doctest::Approx(1e-4));
    CHECK(schedule_at(s, 1500) == doctest::Approx((1e-5 + 1e-4) / 2));
    bool clamped = false;
    CHECK(schedule_at(s, 20000, &clamped) == doctest::Approx(1e-4));
    CHECK(clamped);

    ScheduleSpec c;
    c.kind = ScheduleKind::WarmupCosine;
    c.base = 3e-3;
    c.warm_start = 3e-4;
    c.warmup = 100;
    c.total = 1100;
    CHECK(schedule_at(c, 0) == doctest::Approx(3e-4));
    CHECK(schedule_at(c, 100) == doctest::Approx(3e-3));
    CHECK(schedule_at(c, 600) == doctest::Approx(3e-3 * 0.5));
    CHECK(schedule_at(c, 1100) == doctest::Approx(0.0).epsilon(1e-12));
    for (int64_t t = 0; t <= 1100; t += 37) CHECK(schedule_at(c, t) >= 0.0);

    ScheduleSpec bad;
    bad.warmup = 10;
    bad.total = 5;
    CHECK_THROWS_AS(schedule_at(bad, 0), ValidationError);
}

TEST_CASE("checkpoint round-trip preserves parameters and optimizer state") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "crtlab_test_ckpt";
    fs::create_directories(dir);
    const auto path = (dir / "model.ckpt").string();

    Rng rng(3);
    ParamStore store;
    store.create("a.w", {4, 3}, [&](std::span<float> w) {
        for (auto& v : w) v = (float)rng.normal();
    });
    store.create("b.bias", {7}, [&](std::span<float> w) {
        for (auto& v : w) v = (float)rng.normal();
    });
    AdamWConfig cfg;
    for (auto& p : store.items()) {
        std::vector<float> g(p->w.size(), 0.25f);
        adamw_step(*p, g, cfg);
    }
    ckpt::save(path, store, "{\"kind\":\"test\"}");

    ParamStore loaded;
    const std::string meta = ckpt::load(path, loaded);
    CHECK(meta == "{\"kind\":\"test\"}");
    REQUIRE(loaded.size() == store.size());
    for (size_t i = 0; i < store.items().size(); ++i) {
        const auto& a = *store.items()[i];
        const auto& b = *loaded.items()[i];
        CHECK(a.name == b.name);
        CHECK(a.shape == b.shape);
        CHECK(a.step == b.step);
        CHECK(std::memcmp(a.w.data(), b.w.data(), a.w.size() * sizeof(float)) == 0);
        CHECK(std::memcmp(a.m.data(), b.m.data(), a.m.size() * sizeof(float)) == 0);
        CHECK(std::memcmp(a.v.data(), b.v.data(), a.v.size() * sizeof(float)) == 0);
    }
    fs::remove_all(dir);
}
