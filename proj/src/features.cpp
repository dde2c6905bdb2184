#include "crtlab/features.hpp"

#include <cmath>

#include "crtlab/rng.hpp"

namespace crtlab::metrics {

FeatureExtractor::FeatureExtractor(uint64_t seed) : seed_(seed) {
    Rng rng(seed);
    int in_ch = 3;
    for (int s = 0; s < 3; ++s) {
        const int oc = kWidths[s];
        w_[s].resize((size_t)oc * in_ch * 9);
        const double std = std::sqrt(2.0 / (in_ch * 9));
        for (auto& v : w_[s]) v = (float)rng.normal(0.0, std);
        b_[s].assign(oc, 0.f);
        in_ch = oc;
    }
}

FeatureExtractor::Stages FeatureExtractor::build(nets::Gf& g, nets::Id image) const {
    Stages out;
    auto x = image;
    for (int s = 0; s < 3; ++s) {
        const int ic = s == 0 ? 3 : kWidths[s - 1];
        auto w = g.leaf({kWidths[s], ic, 3, 3}, w_[s].data(), false, "fx.w");
        auto b = g.leaf({kWidths[s]}, b_[s].data(), false, "fx.b");
        x = g.silu(g.conv2d(x, w, b, 2, 1));
        out.maps.push_back(x);
    }
    out.pooled = g.global_avg_pool(x);
    return out;
}

std::vector<float> FeatureExtractor::features(const float* images, int batch, int side) const {
    nets::Gf g;
    auto img = g.leaf({batch, 3, side, side}, images, false, "images");
    auto st = build(g, img);
    auto v = g.val(st.pooled);
    return {v.begin(), v.end()};
}

nets::Id perceptual_proxy(nets::Gf& g, const FeatureExtractor& fx, nets::Id x, nets::Id y) {
    auto sx = fx.build(g, x);
    auto sy = fx.build(g, y);
    nets::Id acc = nets::Gf::kNone;
    for (size_t s = 0; s < sx.maps.size(); ++s) {
        auto term = g.mean_all(g.square(g.sub(sx.maps[s], sy.maps[s])));
        acc = acc == nets::Gf::kNone ? term : g.add(acc, term);
    }
    return g.scale(acc, 1.f / (float)sx.maps.size());
}

}  // namespace crtlab::metrics
