#include "crtlab/graph.hpp"

#include <cmath>
#include <cstring>
#include <memory>
#include <utility>

namespace crtlab::ad {

namespace {

// Route to the OpenMP or the serial reference build.
#define CRTLAB_DISPATCH(fn, ...)                      \
    do {                                              \
        if (kern::use_parallel())                     \
            kern::par::fn(__VA_ARGS__);               \
        else                                          \
            kern::serial::fn(__VA_ARGS__);            \
    } while (0)

template <class T>
void k_unary_fwd(int which, T* y, const T* x, int64_t n, T arg) {
    CRTLAB_DISPATCH(unary_fwd, which, y, x, n, arg);
}
template <class T>
void k_unary_bwd(int which, T* gx, const T* x, const T* gy, int64_t n, T arg) {
    CRTLAB_DISPATCH(unary_bwd, which, gx, x, gy, n, arg);
}

template <class T>
void acc_add(T* dst, const T* src, int64_t n) {
    for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
}
template <class T>
void acc_add_scaled(T* dst, const T* src, T c, int64_t n) {
    for (int64_t i = 0; i < n; ++i) dst[i] += c * src[i];
}

}  // namespace

template <class T>
typename Graph<T>::Id Graph<T>::push(Shape shape, bool rg, const char* op, int64_t fwd_flops,
                                     int64_t bwd_flops) {
    Node n;
    n.shape = std::move(shape);
    n.val.resize(numel(n.shape));
    n.rg = rg;
    n.op = op;
    n.bwd_flops = bwd_flops;
    if (rg) n.grad.assign(n.val.size(), T(0));
    nodes_.push_back(std::move(n));
    fwd_flops_ += fwd_flops;
    return (Id)nodes_.size() - 1;
}

template <class T>
std::span<const T> Graph<T>::grad(Id id) const {
    const Node& n = at(id);
    if (!n.rg) throw Error(std::string("graph: node has no gradient (op ") + n.op + ")");
    return {n.grad.data(), n.grad.size()};
}

template <class T>
typename Graph<T>::Id Graph<T>::leaf(const Shape& shape, const T* data, bool requires_grad,
                                     const char* tag) {
    Id id = push(shape, requires_grad, tag, 0, 0);
    std::memcpy(nodes_[id].val.data(), data, sizeof(T) * nodes_[id].val.size());
    return id;
}

template <class T>
typename Graph<T>::Id Graph<T>::scalar(T v, bool requires_grad) {
    return leaf({1}, &v, requires_grad, "scalar");
}

template <class T>
typename Graph<T>::Id Graph<T>::add(Id a, Id b) {
    if (at(a).shape != at(b).shape) shape_error("add", at(a).shape, at(b).shape);
    const int64_t n = (int64_t)at(a).val.size();
    Id y = push(at(a).shape, at(a).rg || at(b).rg, "add", n, n);
    const T* av = at(a).val.data();
    const T* bv = at(b).val.data();
    T* yv = at(y).val.data();
    for (int64_t i = 0; i < n; ++i) yv[i] = av[i] + bv[i];
    if (at(y).rg)
        at(y).bwd = [this, a, b, y, n] {
            const T* g = at(y).grad.data();
            if (at(a).rg) acc_add(at(a).grad.data(), g, n);
            if (at(b).rg) acc_add(at(b).grad.data(), g, n);
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::sub(Id a, Id b) {
    if (at(a).shape != at(b).shape) shape_error("sub", at(a).shape, at(b).shape);
    const int64_t n = (int64_t)at(a).val.size();
    Id y = push(at(a).shape, at(a).rg || at(b).rg, "sub", n, n);
    const T* av = at(a).val.data();
    const T* bv = at(b).val.data();
    T* yv = at(y).val.data();
    for (int64_t i = 0; i < n; ++i) yv[i] = av[i] - bv[i];
    if (at(y).rg)
        at(y).bwd = [this, a, b, y, n] {
            const T* g = at(y).grad.data();
            if (at(a).rg) acc_add(at(a).grad.data(), g, n);
            if (at(b).rg) acc_add_scaled(at(b).grad.data(), g, T(-1), n);
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::mul(Id a, Id b) {
    if (at(a).shape != at(b).shape) shape_error("mul", at(a).shape, at(b).shape);
    const int64_t n = (int64_t)at(a).val.size();
    Id y = push(at(a).shape, at(a).rg || at(b).rg, "mul", n, 2 * n);
    const T* av = at(a).val.data();
    const T* bv = at(b).val.data();
    T* yv = at(y).val.data();
    for (int64_t i = 0; i < n; ++i) yv[i] = av[i] * bv[i];
    if (at(y).rg)
        at(y).bwd = [this, a, b, y, n] {
            const T* g = at(y).grad.data();
            if (at(a).rg) {
                const T* bvv = at(b).val.data();
                T* ga = at(a).grad.data();
                for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * bvv[i];
            }
            if (at(b).rg) {
                const T* avv = at(a).val.data();
                T* gb = at(b).grad.data();
                for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * avv[i];
            }
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::scale(Id a, T c) {
    const int64_t n = (int64_t)at(a).val.size();
    Id y = push(at(a).shape, at(a).rg, "scale", n, n);
    const T* av = at(a).val.data();
    T* yv = at(y).val.data();
    for (int64_t i = 0; i < n; ++i) yv[i] = c * av[i];
    if (at(y).rg)
        at(y).bwd = [this, a, y, c, n] { acc_add_scaled(at(a).grad.data(), at(y).grad.data(), c, n); };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::grad_scale(Id a, T c) {
    const int64_t n = (int64_t)at(a).val.size();
    Id y = push(at(a).shape, at(a).rg, "grad_scale", 0, n);
    std::memcpy(at(y).val.data(), at(a).val.data(), sizeof(T) * n);
    if (at(y).rg)
        at(y).bwd = [this, a, y, c, n] { acc_add_scaled(at(a).grad.data(), at(y).grad.data(), c, n); };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::stop_grad(Id a) {
    const int64_t n = (int64_t)at(a).val.size();
    Id y = push(at(a).shape, false, "stop_grad", 0, 0);
    std::memcpy(at(y).val.data(), at(a).val.data(), sizeof(T) * n);
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::straight_through(Id z, const T* forwarded) {
    const int64_t n = (int64_t)at(z).val.size();
    Id y = push(at(z).shape, at(z).rg, "straight_through", 0, 0);
    std::memcpy(at(y).val.data(), forwarded, sizeof(T) * n);
    if (at(y).rg)
        at(y).bwd = [this, z, y, n] { acc_add(at(z).grad.data(), at(y).grad.data(), n); };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::silu(Id a) {
    const int64_t n = (int64_t)at(a).val.size();
    Id y = push(at(a).shape, at(a).rg, "silu", 4 * n, 5 * n);
    k_unary_fwd<T>(kern::kSilu, at(y).val.data(), at(a).val.data(), n, T(0));
    if (at(y).rg)
        at(y).bwd = [this, a, y, n] {
            k_unary_bwd<T>(kern::kSilu, at(a).grad.data(), at(a).val.data(), at(y).grad.data(), n, T(0));
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::gelu(Id a) {
    const int64_t n = (int64_t)at(a).val.size();
    Id y = push(at(a).shape, at(a).rg, "gelu", 8 * n, 10 * n);
    k_unary_fwd<T>(kern::kGelu, at(y).val.data(), at(a).val.data(), n, T(0));
    if (at(y).rg)
        at(y).bwd = [this, a, y, n] {
            k_unary_bwd<T>(kern::kGelu, at(a).grad.data(), at(a).val.data(), at(y).grad.data(), n, T(0));
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::tanh_(Id a) {
    const int64_t n = (int64_t)at(a).val.size();
    Id y = push(at(a).shape, at(a).rg, "tanh", 4 * n, 4 * n);
    k_unary_fwd<T>(kern::kTanh, at(y).val.data(), at(a).val.data(), n, T(0));
    if (at(y).rg)
        at(y).bwd = [this, a, y, n] {
            k_unary_bwd<T>(kern::kTanh, at(a).grad.data(), at(a).val.data(), at(y).grad.data(), n, T(0));
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::relu(Id a) {
    const int64_t n = (int64_t)at(a).val.size();
    Id y = push(at(a).shape, at(a).rg, "relu", n, n);
    k_unary_fwd<T>(kern::kRelu, at(y).val.data(), at(a).val.data(), n, T(0));
    if (at(y).rg)
        at(y).bwd = [this, a, y, n] {
            k_unary_bwd<T>(kern::kRelu, at(a).grad.data(), at(a).val.data(), at(y).grad.data(), n, T(0));
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::leaky_relu(Id a, T slope) {
    const int64_t n = (int64_t)at(a).val.size();
    Id y = push(at(a).shape, at(a).rg, "leaky_relu", n, n);
    k_unary_fwd<T>(kern::kLeakyRelu, at(y).val.data(), at(a).val.data(), n, slope);
    if (at(y).rg)
        at(y).bwd = [this, a, y, n, slope] {
            k_unary_bwd<T>(kern::kLeakyRelu, at(a).grad.data(), at(a).val.data(), at(y).grad.data(), n,
                           slope);
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::square(Id a) {
    const int64_t n = (int64_t)at(a).val.size();
    Id y = push(at(a).shape, at(a).rg, "square", n, 2 * n);
    k_unary_fwd<T>(kern::kSquare, at(y).val.data(), at(a).val.data(), n, T(0));
    if (at(y).rg)
        at(y).bwd = [this, a, y, n] {
            k_unary_bwd<T>(kern::kSquare, at(a).grad.data(), at(a).val.data(), at(y).grad.data(), n, T(0));
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::matmul(Id a, Id b) {
    const Shape& sa = at(a).shape;
    const Shape& sb = at(b).shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) shape_error("matmul", sa, sb);
    const int m = sa[0], k = sa[1], n = sb[1];
    const int64_t f = 2LL * m * k * n;
    Id y = push({m, n}, at(a).rg || at(b).rg, "matmul", f, 2 * f);
    CRTLAB_DISPATCH(matmul, at(y).val.data(), at(a).val.data(), at(b).val.data(), m, k, n, false);
    if (at(y).rg)
        at(y).bwd = [this, a, b, y, m, k, n] {
            const T* g = at(y).grad.data();
            if (at(a).rg) CRTLAB_DISPATCH(matmul_nt, at(a).grad.data(), g, at(b).val.data(), m, n, k, true);
            if (at(b).rg) CRTLAB_DISPATCH(matmul_tn, at(b).grad.data(), at(a).val.data(), g, m, k, n, true);
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::bmm(Id a, Id b) {
    const Shape& sa = at(a).shape;
    const Shape& sb = at(b).shape;
    if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[1]) shape_error("bmm", sa, sb);
    const int nb = sa[0], m = sa[1], k = sa[2], n = sb[2];
    const int64_t f = 2LL * nb * m * k * n;
    Id y = push({nb, m, n}, at(a).rg || at(b).rg, "bmm", f, 2 * f);
    CRTLAB_DISPATCH(bmm, at(y).val.data(), at(a).val.data(), at(b).val.data(), nb, m, k, n, false);
    if (at(y).rg)
        at(y).bwd = [this, a, b, y, nb, m, k, n] {
            const T* g = at(y).grad.data();
            if (at(a).rg) CRTLAB_DISPATCH(bmm_nt, at(a).grad.data(), g, at(b).val.data(), nb, m, n, k, true);
            if (at(b).rg) CRTLAB_DISPATCH(bmm_tn, at(b).grad.data(), at(a).val.data(), g, nb, m, k, n, true);
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::bmm_nt(Id a, Id b) {
    const Shape& sa = at(a).shape;
    const Shape& sb = at(b).shape;
    if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[2]) shape_error("bmm_nt", sa, sb);
    const int nb = sa[0], m = sa[1], k = sa[2], n = sb[1];
    const int64_t f = 2LL * nb * m * k * n;
    Id y = push({nb, m, n}, at(a).rg || at(b).rg, "bmm_nt", f, 2 * f);
    CRTLAB_DISPATCH(bmm_nt, at(y).val.data(), at(a).val.data(), at(b).val.data(), nb, m, k, n, false);
    if (at(y).rg)
        at(y).bwd = [this, a, b, y, nb, m, k, n] {
            const T* g = at(y).grad.data();
            if (at(a).rg) CRTLAB_DISPATCH(bmm, at(a).grad.data(), g, at(b).val.data(), nb, m, n, k, true);
            if (at(b).rg) CRTLAB_DISPATCH(bmm_tn, at(b).grad.data(), g, at(a).val.data(), nb, m, n, k, true);
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::add_bias(Id a, Id bias) {
    const Shape& sa = at(a).shape;
    const Shape& sb = at(bias).shape;
    if (sa.size() < 1 || sb.size() != 1 || sa.back() != sb[0]) shape_error("add_bias", sa, sb);
    const int d = sb[0];
    const int64_t rows = numel(sa) / d;
    Id y = push(sa, at(a).rg || at(bias).rg, "add_bias", rows * d, rows * d);
    const T* av = at(a).val.data();
    const T* bv = at(bias).val.data();
    T* yv = at(y).val.data();
    for (int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < d; ++j) yv[r * d + j] = av[r * d + j] + bv[j];
    if (at(y).rg)
        at(y).bwd = [this, a, bias, y, rows, d] {
            const T* g = at(y).grad.data();
            if (at(a).rg) acc_add(at(a).grad.data(), g, rows * d);
            if (at(bias).rg) {
                T* gb = at(bias).grad.data();
                for (int64_t r = 0; r < rows; ++r)
                    for (int j = 0; j < d; ++j) gb[j] += g[r * d + j];
            }
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::conv2d(Id x, Id w, Id bias, int stride, int pad) {
    const Shape& sx = at(x).shape;
    const Shape& sw = at(w).shape;
    if (sx.size() != 4 || sw.size() != 4 || sx[1] != sw[1]) shape_error("conv2d", sx, sw);
    if (stride < 1) shape_error("conv2d", "stride must be >= 1");
    kern::ConvDims d;
    d.batch = sx[0];
    d.in_ch = sx[1];
    d.in_h = sx[2];
    d.in_w = sx[3];
    d.out_ch = sw[0];
    d.kh = sw[2];
    d.kw = sw[3];
    d.stride = stride;
    d.pad = pad;
    d.out_h = (d.in_h + 2 * pad - d.kh) / stride + 1;
    d.out_w = (d.in_w + 2 * pad - d.kw) / stride + 1;
    if (d.out_h <= 0 || d.out_w <= 0) shape_error("conv2d", "empty output " + shape_str(sx));
    const bool has_bias = bias != kNone;
    if (has_bias && (at(bias).shape.size() != 1 || at(bias).shape[0] != d.out_ch))
        shape_error("conv2d bias", at(bias).shape, {d.out_ch});
    const int64_t f = 2LL * d.batch * d.out_ch * d.out_h * d.out_w * d.in_ch * d.kh * d.kw;
    bool rg = at(x).rg || at(w).rg || (has_bias && at(bias).rg);
    Id y = push({d.batch, d.out_ch, d.out_h, d.out_w}, rg, "conv2d", f, 2 * f);
    CRTLAB_DISPATCH(conv2d_fwd, at(y).val.data(), at(x).val.data(), at(w).val.data(),
                    has_bias ? at(bias).val.data() : nullptr, d);
    if (rg)
        at(y).bwd = [this, x, w, bias, y, d, has_bias] {
            const T* g = at(y).grad.data();
            if (at(x).rg) CRTLAB_DISPATCH(conv2d_bwd_data, at(x).grad.data(), g, at(w).val.data(), d);
            if (at(w).rg) CRTLAB_DISPATCH(conv2d_bwd_weight, at(w).grad.data(), at(x).val.data(), g, d);
            if (has_bias && at(bias).rg) CRTLAB_DISPATCH(conv2d_bwd_bias, at(bias).grad.data(), g, d);
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::upsample2x(Id x) {
    const Shape& s = at(x).shape;
    if (s.size() != 4) shape_error("upsample2x", "expected 4-d input " + shape_str(s));
    const int b = s[0], c = s[1], h = s[2], w = s[3];
    Id y = push({b, c, 2 * h, 2 * w}, at(x).rg, "upsample2x", numel(s), numel(s));
    CRTLAB_DISPATCH(upsample2x_fwd, at(y).val.data(), at(x).val.data(), b, c, h, w);
    if (at(y).rg)
        at(y).bwd = [this, x, y, b, c, h, w] {
            CRTLAB_DISPATCH(upsample2x_bwd, at(x).grad.data(), at(y).grad.data(), b, c, h, w);
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::global_avg_pool(Id x) {
    const Shape& s = at(x).shape;
    if (s.size() != 4) shape_error("global_avg_pool", "expected 4-d input " + shape_str(s));
    const int b = s[0], c = s[1], hw = s[2] * s[3];
    Id y = push({b, c}, at(x).rg, "global_avg_pool", numel(s), numel(s));
    CRTLAB_DISPATCH(gap_fwd, at(y).val.data(), at(x).val.data(), b, c, hw);
    if (at(y).rg)
        at(y).bwd = [this, x, y, b, c, hw] {
            CRTLAB_DISPATCH(gap_bwd, at(x).grad.data(), at(y).grad.data(), b, c, hw);
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::layer_norm(Id x, Id gamma, Id beta, T eps) {
    const Shape& s = at(x).shape;
    if (s.empty()) shape_error("layer_norm", "scalar input");
    const int d = s.back();
    const int64_t rows = numel(s) / d;
    const bool hg = gamma != kNone, hb = beta != kNone;
    if (hg && (at(gamma).shape.size() != 1 || at(gamma).shape[0] != d))
        shape_error("layer_norm gamma", at(gamma).shape, {d});
    if (hb && (at(beta).shape.size() != 1 || at(beta).shape[0] != d))
        shape_error("layer_norm beta", at(beta).shape, {d});
    bool rg = at(x).rg || (hg && at(gamma).rg) || (hb && at(beta).rg);
    Id y = push(s, rg, "layer_norm", 8 * rows * d, 12 * rows * d);
    auto mean = std::make_shared<std::vector<T>>(rows);
    auto rstd = std::make_shared<std::vector<T>>(rows);
    CRTLAB_DISPATCH(layernorm_fwd, at(y).val.data(), mean->data(), rstd->data(), at(x).val.data(),
                    hg ? at(gamma).val.data() : nullptr, hb ? at(beta).val.data() : nullptr, rows, d, eps);
    if (rg)
        at(y).bwd = [this, x, gamma, beta, y, rows, d, hg, hb, mean, rstd] {
            CRTLAB_DISPATCH(layernorm_bwd, at(x).rg ? at(x).grad.data() : nullptr,
                            hg && at(gamma).rg ? at(gamma).grad.data() : nullptr,
                            hb && at(beta).rg ? at(beta).grad.data() : nullptr, at(y).grad.data(),
                            at(x).val.data(), mean->data(), rstd->data(),
                            hg ? at(gamma).val.data() : nullptr, rows, d);
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::softmax_causal(Id scores) {
    const Shape& s = at(scores).shape;
    if (s.size() != 3 || s[1] != s[2]) shape_error("softmax_causal", "expected [B,N,N], got " + shape_str(s));
    const int nb = s[0], n = s[1];
    Id y = push(s, at(scores).rg, "softmax_causal", 4LL * nb * n * n, 3LL * nb * n * n);
    CRTLAB_DISPATCH(softmax_causal_fwd, at(y).val.data(), at(scores).val.data(), nb, n);
    if (at(y).rg)
        at(y).bwd = [this, scores, y, nb, n] {
            CRTLAB_DISPATCH(softmax_causal_bwd, at(scores).grad.data(), at(y).val.data(), at(y).grad.data(),
                            nb, n);
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::cross_entropy_rows(Id logits, std::vector<int> targets) {
    const Shape& s = at(logits).shape;
    if (s.size() != 2) shape_error("cross_entropy", "expected [M,K], got " + shape_str(s));
    const int64_t rows = s[0];
    const int k = s[1];
    if ((int64_t)targets.size() != rows) shape_error("cross_entropy", "target count mismatch");
    for (int t : targets)
        if (t < 0 || t >= k) throw ValidationError("cross_entropy: target index out of range");
    Id y = push({(int)rows}, at(logits).rg, "cross_entropy", 5 * rows * k, 2 * rows * k);
    auto probs = std::make_shared<std::vector<T>>(rows * k);
    auto tgt = std::make_shared<std::vector<int>>(std::move(targets));
    CRTLAB_DISPATCH(ce_rows_fwd, at(y).val.data(), probs->data(), at(logits).val.data(), tgt->data(), rows,
                    k);
    if (at(y).rg)
        at(y).bwd = [this, logits, y, rows, k, probs, tgt] {
            CRTLAB_DISPATCH(ce_rows_bwd, at(logits).grad.data(), probs->data(), tgt->data(),
                            at(y).grad.data(), rows, k);
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::logsumexp_rows(Id logits) {
    const Shape& s = at(logits).shape;
    if (s.size() != 2) shape_error("logsumexp", "expected [M,K], got " + shape_str(s));
    const int64_t rows = s[0];
    const int k = s[1];
    Id y = push({(int)rows}, at(logits).rg, "logsumexp", 3 * rows * k, 3 * rows * k);
    CRTLAB_DISPATCH(lse_rows_fwd, at(y).val.data(), at(logits).val.data(), rows, k);
    if (at(y).rg)
        at(y).bwd = [this, logits, y, rows, k] {
            CRTLAB_DISPATCH(lse_rows_bwd, at(logits).grad.data(), at(logits).val.data(), at(y).val.data(),
                            at(y).grad.data(), rows, k);
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::mean_all(Id a) {
    const int64_t n = (int64_t)at(a).val.size();
    Id y = push({1}, at(a).rg, "mean_all", n, n);
    const T* av = at(a).val.data();
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += av[i];
        s1 += av[i + 1];
        s2 += av[i + 2];
        s3 += av[i + 3];
    }
    T rest = 0;
    for (; i < n; ++i) rest += av[i];
    at(y).val[0] = (((s0 + s1) + (s2 + s3)) + rest) / T(n);
    if (at(y).rg)
        at(y).bwd = [this, a, y, n] {
            const T g = at(y).grad[0] / T(n);
            T* ga = at(a).grad.data();
            for (int64_t j = 0; j < n; ++j) ga[j] += g;
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::sum_all(Id a) {
    const int64_t n = (int64_t)at(a).val.size();
    Id y = push({1}, at(a).rg, "sum_all", n, n);
    const T* av = at(a).val.data();
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += av[i];
        s1 += av[i + 1];
        s2 += av[i + 2];
        s3 += av[i + 3];
    }
    T rest = 0;
    for (; i < n; ++i) rest += av[i];
    at(y).val[0] = ((s0 + s1) + (s2 + s3)) + rest;
    if (at(y).rg)
        at(y).bwd = [this, a, y, n] {
            const T g = at(y).grad[0];
            T* ga = at(a).grad.data();
            for (int64_t j = 0; j < n; ++j) ga[j] += g;
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::reshape(Id a, const Shape& shape) {
    if (numel(shape) != numel(at(a).shape)) shape_error("reshape", at(a).shape, shape);
    const int64_t n = (int64_t)at(a).val.size();
    Id y = push(shape, at(a).rg, "reshape", 0, 0);
    std::memcpy(at(y).val.data(), at(a).val.data(), sizeof(T) * n);
    if (at(y).rg)
        at(y).bwd = [this, a, y, n] { acc_add(at(a).grad.data(), at(y).grad.data(), n); };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::slice_rows(Id a, int start, int len) {
    const Shape& s = at(a).shape;
    if (s.size() != 2 || start < 0 || len < 0 || start + len > s[0])
        shape_error("slice_rows", "bad range on " + shape_str(s));
    const int d = s[1];
    Id y = push({len, d}, at(a).rg, "slice_rows", 0, 0);
    std::memcpy(at(y).val.data(), at(a).val.data() + (int64_t)start * d, sizeof(T) * (int64_t)len * d);
    if (at(y).rg)
        at(y).bwd = [this, a, y, start, len, d] {
            acc_add(at(a).grad.data() + (int64_t)start * d, at(y).grad.data(), (int64_t)len * d);
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::concat_rows(Id a, Id b) {
    const Shape& sa = at(a).shape;
    const Shape& sb = at(b).shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[1]) shape_error("concat_rows", sa, sb);
    const int d = sa[1];
    const int64_t na = (int64_t)sa[0] * d, nb = (int64_t)sb[0] * d;
    Id y = push({sa[0] + sb[0], d}, at(a).rg || at(b).rg, "concat_rows", 0, 0);
    std::memcpy(at(y).val.data(), at(a).val.data(), sizeof(T) * na);
    std::memcpy(at(y).val.data() + na, at(b).val.data(), sizeof(T) * nb);
    if (at(y).rg)
        at(y).bwd = [this, a, b, y, na, nb] {
            const T* g = at(y).grad.data();
            if (at(a).rg) acc_add(at(a).grad.data(), g, na);
            if (at(b).rg) acc_add(at(b).grad.data(), g + na, nb);
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::permute_0213(Id a) {
    const Shape& s = at(a).shape;
    if (s.size() != 4) shape_error("permute_0213", "expected 4-d input " + shape_str(s));
    const int d0 = s[0], d1 = s[1], d2 = s[2], d3 = s[3];
    Id y = push({d0, d2, d1, d3}, at(a).rg, "permute_0213", 0, 0);
    const T* av = at(a).val.data();
    T* yv = at(y).val.data();
    for (int i0 = 0; i0 < d0; ++i0)
        for (int i1 = 0; i1 < d1; ++i1)
            for (int i2 = 0; i2 < d2; ++i2)
                std::memcpy(yv + (((int64_t)i0 * d2 + i2) * d1 + i1) * d3,
                            av + (((int64_t)i0 * d1 + i1) * d2 + i2) * d3, sizeof(T) * d3);
    if (at(y).rg)
        at(y).bwd = [this, a, y, d0, d1, d2, d3] {
            const T* g = at(y).grad.data();
            T* ga = at(a).grad.data();
            for (int i0 = 0; i0 < d0; ++i0)
                for (int i1 = 0; i1 < d1; ++i1)
                    for (int i2 = 0; i2 < d2; ++i2) {
                        const T* src = g + (((int64_t)i0 * d2 + i2) * d1 + i1) * d3;
                        T* dst = ga + (((int64_t)i0 * d1 + i1) * d2 + i2) * d3;
                        for (int i3 = 0; i3 < d3; ++i3) dst[i3] += src[i3];
                    }
        };
    return y;
}

template <class T>
typename Graph<T>::Id Graph<T>::embedding(Id table, std::vector<int> idx) {
    const Shape& s = at(table).shape;
    if (s.size() != 2) shape_error("embedding", "expected [V,D] table, got " + shape_str(s));
    const int v = s[0], d = s[1];
    for (int i : idx)
        if (i < 0 || i >= v) throw ValidationError("embedding: index out of range");
    const int64_t m = (int64_t)idx.size();
    Id y = push({(int)m, d}, at(table).rg, "embedding", 0, m * d);
    auto ii = std::make_shared<std::vector<int>>(std::move(idx));
    CRTLAB_DISPATCH(embedding_fwd, at(y).val.data(), at(table).val.data(), ii->data(), m, d);
    if (at(y).rg)
        at(y).bwd = [this, table, y, m, d, ii] {
            CRTLAB_DISPATCH(embedding_bwd, at(table).grad.data(), at(y).grad.data(), ii->data(), m, d);
        };
    return y;
}

template <class T>
void Graph<T>::backward(Id loss) {
    Node& ln = at(loss);
    if (numel(ln.shape) != 1)
        throw ValidationError("backward: loss must be scalar, got " + shape_str(ln.shape));
    if (backward_done_) throw Error("backward: already run on this graph");
    backward_done_ = true;
    if (!ln.rg) return;  // nothing upstream requires grad
    ln.grad[0] = T(1);
    for (Id i = loss; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.rg && n.bwd) {
            n.bwd();
            bwd_flops_ += n.bwd_flops;
        }
    }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace crtlab::ad
