#include "crtlab/nets.hpp"

#include <cmath>

namespace crtlab::nets {

namespace {

opt::ParamStore::Init conv_init(Rng& rng, int fan_in) {
    const double std = std::sqrt(2.0 / fan_in);
    return [&rng, std](std::span<float> w) {
        for (auto& v : w) v = (float)rng.normal(0.0, std);
    };
}

opt::ParamStore::Init normal_init(Rng& rng, double std) {
    return [&rng, std](std::span<float> w) {
        for (auto& v : w) v = (float)rng.normal(0.0, std);
    };
}

opt::ParamStore::Init const_init(float c) {
    return [c](std::span<float> w) {
        for (auto& v : w) v = c;
    };
}

}  // namespace

Id nchw_to_rows(Gf& g, Id x) {
    const Shape& s = g.shape(x);
    if (s.size() != 4) shape_error("nchw_to_rows", "expected 4-d, got " + shape_str(s));
    const int b = s[0], c = s[1], hw = s[2] * s[3];
    auto v = g.reshape(x, {b, c, hw, 1});
    auto p = g.permute_0213(v);  // [b, hw, c, 1]
    return g.reshape(p, {b * hw, c});
}

Id rows_to_nchw(Gf& g, Id rows, int b, int c, int h, int w) {
    const Shape& s = g.shape(rows);
    if (s.size() != 2 || s[0] != b * h * w || s[1] != c)
        shape_error("rows_to_nchw", "rows " + shape_str(s) + " do not match target layout");
    auto v = g.reshape(rows, {b, h * w, c, 1});
    auto p = g.permute_0213(v);  // [b, c, hw, 1]
    return g.reshape(p, {b, c, h, w});
}

Id linear(Gf& g, opt::Bindings& bind, Id rows, opt::Param& w, opt::Param* b) {
    auto y = g.matmul(rows, bind.bind(g, w));
    if (b) y = g.add_bias(y, bind.bind(g, *b));
    return y;
}

// --- autoencoder ---

void AutoencoderConfig::validate() const {
    int f = 1;
    for (size_t i = 0; i < widths.size(); ++i) f *= 2;
    if (f != downsample)
        throw ValidationError("autoencoder: downsample must equal 2^stages (stages = width count)");
    if (image_side % downsample != 0)
        throw ValidationError("autoencoder: image side must be divisible by the downsample factor");
    if (res_blocks < 0 || latent_width < 1 || code_dim < 1)
        throw ValidationError("autoencoder: bad widths");
}

Autoencoder::Autoencoder(const AutoencoderConfig& cfg, opt::ParamStore& store, Rng& rng)
    : cfg_(cfg), store_(&store) {
    cfg_.validate();
    auto conv = [&](const std::string& name, int oc, int ic, int k) {
        store.get_or_create(name + ".w", {oc, ic, k, k}, conv_init(rng, ic * k * k));
        store.get_or_create(name + ".b", {oc}, const_init(0.f));
    };
    // encoder
    conv("enc.stem", cfg_.widths[0], 3, 3);
    for (int s = 0; s < cfg_.stages(); ++s) {
        const int w = cfg_.widths[s];
        for (int r = 0; r < cfg_.res_blocks; ++r) {
            conv("enc.s" + std::to_string(s) + ".b" + std::to_string(r) + ".c1", w, w, 3);
            conv("enc.s" + std::to_string(s) + ".b" + std::to_string(r) + ".c2", w, w, 3);
        }
        const int wn = s + 1 < cfg_.stages() ? cfg_.widths[s + 1] : w;
        conv("enc.down" + std::to_string(s), wn, w, 3);
    }
    conv("enc.head", cfg_.latent_width, cfg_.widths.back(), 3);
    // code projection (no bias, so zero maps to zero)
    store.get_or_create("quant.proj.w", {cfg_.latent_width, cfg_.code_dim},
                        normal_init(rng, std::sqrt(1.0 / cfg_.latent_width)));
    // decoder
    store.get_or_create("dec.expand.w", {cfg_.code_dim, cfg_.latent_width},
                        normal_init(rng, std::sqrt(1.0 / cfg_.code_dim)));
    store.get_or_create("dec.expand.b", {cfg_.latent_width}, const_init(0.f));
    conv("dec.head", cfg_.widths.back(), cfg_.latent_width, 3);
    for (int s = cfg_.stages() - 1; s >= 0; --s) {
        const int w = cfg_.widths[s];
        for (int r = 0; r < cfg_.res_blocks; ++r) {
            conv("dec.s" + std::to_string(s) + ".b" + std::to_string(r) + ".c1", w, w, 3);
            conv("dec.s" + std::to_string(s) + ".b" + std::to_string(r) + ".c2", w, w, 3);
        }
        const int wn = s > 0 ? cfg_.widths[s - 1] : cfg_.widths[0];
        conv("dec.up" + std::to_string(s), wn, w, 3);
    }
    conv("dec.out", 3, cfg_.widths[0], 3);
}

Id Autoencoder::res_block(Gf& g, opt::Bindings& bind, Id x, const std::string& prefix) {
    auto& store = *store_;
    auto h = g.silu(x);
    h = g.conv2d(h, bind.bind(g, store.get(prefix + ".c1.w")), bind.bind(g, store.get(prefix + ".c1.b")),
                 1, 1);
    h = g.silu(h);
    h = g.conv2d(h, bind.bind(g, store.get(prefix + ".c2.w")), bind.bind(g, store.get(prefix + ".c2.b")),
                 1, 1);
    return g.add(x, h);
}

Id Autoencoder::encode(Gf& g, opt::Bindings& bind, Id image, int batch, int side) {
    const Shape& s = g.shape(image);
    if (s.size() != 4 || s[0] != batch || s[1] != 3 || s[2] != side || s[3] != side)
        shape_error("encode", "expected [B,3,S,S], got " + shape_str(s));
    if (side % cfg_.downsample != 0)
        throw ValidationError("encode: side " + std::to_string(side) + " not divisible by f");
    auto& store = *store_;
    auto x = g.conv2d(image, bind.bind(g, store.get("enc.stem.w")), bind.bind(g, store.get("enc.stem.b")),
                      1, 1);
    for (int st = 0; st < cfg_.stages(); ++st) {
        for (int r = 0; r < cfg_.res_blocks; ++r)
            x = res_block(g, bind, x, "enc.s" + std::to_string(st) + ".b" + std::to_string(r));
        x = g.conv2d(g.silu(x), bind.bind(g, store.get("enc.down" + std::to_string(st) + ".w")),
                     bind.bind(g, store.get("enc.down" + std::to_string(st) + ".b")), 2, 1);
    }
    x = g.conv2d(g.silu(x), bind.bind(g, store.get("enc.head.w")), bind.bind(g, store.get("enc.head.b")),
                 1, 1);
    auto rows = nchw_to_rows(g, x);  // [B*(S/f)^2, latent_width]
    return g.matmul(rows, bind.bind(g, store.get("quant.proj.w")));
}

Id Autoencoder::decode(Gf& g, opt::Bindings& bind, Id rows, int batch, int side) {
    const int gs = side / cfg_.downsample;
    const Shape& s = g.shape(rows);
    if (s.size() != 2 || s[0] != batch * gs * gs || s[1] != cfg_.code_dim)
        shape_error("decode", "expected [B*g*g,d], got " + shape_str(s));
    auto& store = *store_;
    auto expanded = g.add_bias(g.matmul(rows, bind.bind(g, store.get("dec.expand.w"))),
                               bind.bind(g, store.get("dec.expand.b")));
    auto x = rows_to_nchw(g, expanded, batch, cfg_.latent_width, gs, gs);
    x = g.conv2d(x, bind.bind(g, store.get("dec.head.w")), bind.bind(g, store.get("dec.head.b")), 1, 1);
    for (int st = cfg_.stages() - 1; st >= 0; --st) {
        for (int r = 0; r < cfg_.res_blocks; ++r)
            x = res_block(g, bind, x, "dec.s" + std::to_string(st) + ".b" + std::to_string(r));
        x = g.upsample2x(x);
        x = g.conv2d(g.silu(x), bind.bind(g, store.get("dec.up" + std::to_string(st) + ".w")),
                     bind.bind(g, store.get("dec.up" + std::to_string(st) + ".b")), 1, 1);
    }
    x = g.conv2d(g.silu(x), bind.bind(g, store.get("dec.out.w")), bind.bind(g, store.get("dec.out.b")), 1,
                 1);
    return g.tanh_(x);
}

// --- PatchGAN critic ---

PatchDiscriminator::PatchDiscriminator(const DiscriminatorConfig& cfg, opt::ParamStore& store, Rng& rng)
    : cfg_(cfg), store_(&store) {
    auto conv = [&](const std::string& name, int oc, int ic, int k) {
        store.get_or_create(name + ".w", {oc, ic, k, k}, conv_init(rng, ic * k * k));
        store.get_or_create(name + ".b", {oc}, const_init(0.f));
    };
    const int w = cfg_.base_width;
    conv("disc.c0", w, 3, 3);
    conv("disc.c1", 2 * w, w, 3);
    conv("disc.c2", 4 * w, 2 * w, 3);
    store.get_or_create("disc.out.w", {1, 4 * w, 1, 1}, conv_init(rng, 4 * w));
    store.get_or_create("disc.out.b", {1}, const_init(0.f));
}

Id PatchDiscriminator::score(Gf& g, opt::Bindings& bind, Id image) {
    auto& store = *store_;
    auto x = g.leaky_relu(g.conv2d(image, bind.bind(g, store.get("disc.c0.w")),
                                   bind.bind(g, store.get("disc.c0.b")), 2, 1),
                          0.2f);
    x = g.leaky_relu(g.conv2d(x, bind.bind(g, store.get("disc.c1.w")),
                              bind.bind(g, store.get("disc.c1.b")), 2, 1),
                     0.2f);
    x = g.leaky_relu(g.conv2d(x, bind.bind(g, store.get("disc.c2.w")),
                              bind.bind(g, store.get("disc.c2.b")), 2, 1),
                     0.2f);
    x = g.conv2d(x, bind.bind(g, store.get("disc.out.w")), bind.bind(g, store.get("disc.out.b")), 1, 0);
    return g.mean_all(x);
}

GanLosses gan_losses(Gf& g, Id critic_real, Id critic_fake) {
    GanLosses out;
    out.disc = g.sub(critic_fake, critic_real);
    out.gen = g.scale(critic_fake, -1.f);
    return out;
}

// --- transformer body ---

void TransformerConfig::validate() const {
    if (layers < 1 || heads < 1) throw ValidationError("transformer: layers and heads must be >= 1");
    if (dim != 64 * heads) throw ValidationError("transformer: dim must be 64 per head");
}

TransformerBody::TransformerBody(const TransformerConfig& cfg, std::string prefix, opt::ParamStore& store,
                                 Rng& rng)
    : cfg_(cfg), prefix_(std::move(prefix)), store_(&store) {
    cfg_.validate();
    const int d = cfg_.dim;
    const double wstd = 0.02;
    const double pstd = 0.02 / std::sqrt(2.0 * cfg_.layers);  // residual projections
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = prefix_ + ".l" + std::to_string(l);
        store.get_or_create(p + ".ln1.g", {d}, const_init(1.f));
        store.get_or_create(p + ".ln1.b", {d}, const_init(0.f));
        store.get_or_create(p + ".attn.wq", {d, d}, normal_init(rng, wstd));
        store.get_or_create(p + ".attn.wk", {d, d}, normal_init(rng, wstd));
        store.get_or_create(p + ".attn.wv", {d, d}, normal_init(rng, wstd));
        store.get_or_create(p + ".attn.wo", {d, d}, normal_init(rng, pstd));
        store.get_or_create(p + ".attn.bo", {d}, const_init(0.f));
        store.get_or_create(p + ".attn.qg", {cfg_.head_dim()}, const_init(1.f));
        store.get_or_create(p + ".attn.kg", {cfg_.head_dim()}, const_init(1.f));
        store.get_or_create(p + ".ln2.g", {d}, const_init(1.f));
        store.get_or_create(p + ".ln2.b", {d}, const_init(0.f));
        store.get_or_create(p + ".mlp.w1", {d, 4 * d}, normal_init(rng, wstd));
        store.get_or_create(p + ".mlp.b1", {4 * d}, const_init(0.f));
        store.get_or_create(p + ".mlp.w2", {4 * d, d}, normal_init(rng, pstd));
        store.get_or_create(p + ".mlp.b2", {d}, const_init(0.f));
    }
    store.get_or_create(prefix_ + ".lnf.g", {d}, const_init(1.f));
    store.get_or_create(prefix_ + ".lnf.b", {d}, const_init(0.f));
}

Id TransformerBody::apply(Gf& g, opt::Bindings& bind, Id rows, int batch, int seq) {
    auto& store = *store_;
    const int d = cfg_.dim, h = cfg_.heads, hd = cfg_.head_dim();
    const Shape& s = g.shape(rows);
    if (s.size() != 2 || s[0] != batch * seq || s[1] != d)
        shape_error("transformer", "expected [B*S,dim], got " + shape_str(s));
    const float inv_sqrt = 1.0f / std::sqrt((float)hd);
    auto x = rows;
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = prefix_ + ".l" + std::to_string(l);
        auto xn = g.layer_norm(x, bind.bind(g, store.get(p + ".ln1.g")),
                               bind.bind(g, store.get(p + ".ln1.b")), 1e-5f);
        auto q = g.matmul(xn, bind.bind(g, store.get(p + ".attn.wq")));
        auto k = g.matmul(xn, bind.bind(g, store.get(p + ".attn.wk")));
        auto v = g.matmul(xn, bind.bind(g, store.get(p + ".attn.wv")));
        // QK layer normalization per head
        q = g.layer_norm(g.reshape(q, {batch * seq * h, hd}), bind.bind(g, store.get(p + ".attn.qg")),
                         Gf::kNone, 1e-5f);
        k = g.layer_norm(g.reshape(k, {batch * seq * h, hd}), bind.bind(g, store.get(p + ".attn.kg")),
                         Gf::kNone, 1e-5f);
        auto to_heads = [&](Id t) {
            return g.reshape(g.permute_0213(g.reshape(t, {batch, seq, h, hd})), {batch * h, seq, hd});
        };
        auto qh = to_heads(q);
        auto kh = to_heads(k);
        auto vh = to_heads(g.reshape(v, {batch * seq * h, hd}));
        auto scores = g.scale(g.bmm_nt(qh, kh), inv_sqrt);
        auto probs = g.softmax_causal(scores);
        auto ctx = g.bmm(probs, vh);  // [B*h, S, hd]
        auto merged = g.reshape(g.permute_0213(g.reshape(ctx, {batch, h, seq, hd})), {batch * seq, d});
        auto attn_out = g.add_bias(g.matmul(merged, bind.bind(g, store.get(p + ".attn.wo"))),
                                   bind.bind(g, store.get(p + ".attn.bo")));
        x = g.add(x, attn_out);
        auto xn2 = g.layer_norm(x, bind.bind(g, store.get(p + ".ln2.g")),
                                bind.bind(g, store.get(p + ".ln2.b")), 1e-5f);
        auto hmid = g.gelu(g.add_bias(g.matmul(xn2, bind.bind(g, store.get(p + ".mlp.w1"))),
                                      bind.bind(g, store.get(p + ".mlp.b1"))));
        auto mlp_out = g.add_bias(g.matmul(hmid, bind.bind(g, store.get(p + ".mlp.w2"))),
                                  bind.bind(g, store.get(p + ".mlp.b2")));
        x = g.add(x, mlp_out);
    }
    return g.layer_norm(x, bind.bind(g, store.get(prefix_ + ".lnf.g")),
                        bind.bind(g, store.get(prefix_ + ".lnf.b")), 1e-5f);
}

}  // namespace crtlab::nets
