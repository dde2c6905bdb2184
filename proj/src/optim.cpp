#include "crtlab/optim.hpp"

#include <cmath>

namespace crtlab::opt {

Param& ParamStore::create(const std::string& name, const Shape& shape, const Init& init) {
    if (find(name)) throw Error("param already exists: " + name);
    auto p = std::make_unique<Param>();
    p->name = name;
    p->shape = shape;
    p->w.assign(numel(shape), 0.f);
    p->m.assign(p->w.size(), 0.f);
    p->v.assign(p->w.size(), 0.f);
    if (init) init({p->w.data(), p->w.size()});
    items_.push_back(std::move(p));
    return *items_.back();
}

Param& ParamStore::get_or_create(const std::string& name, const Shape& shape, const Init& init) {
    if (Param* p = find(name)) {
        if (p->shape != shape) shape_error(("param " + name).c_str(), p->shape, shape);
        return *p;
    }
    return create(name, shape, init);
}

Param* ParamStore::find(const std::string& name) {
    for (auto& p : items_)
        if (p->name == name) return p.get();
    return nullptr;
}

Param& ParamStore::get(const std::string& name) {
    if (Param* p = find(name)) return *p;
    throw Error("param not found: " + name);
}

int64_t ParamStore::total_count() const {
    int64_t n = 0;
    for (const auto& p : items_) n += p->count();
    return n;
}

void adamw_step(Param& p, std::span<const float> grad, const AdamWConfig& cfg) {
    if (grad.size() != p.w.size()) shape_error(("adamw " + p.name).c_str(), "gradient size mismatch");
    for (float g : grad)
        if (!std::isfinite(g)) throw RuntimeFailure("adamw: non-finite gradient in parameter " + p.name);
    p.step += 1;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, (double)p.step);
    const double bc2 = 1.0 - std::pow(b2, (double)p.step);
    for (size_t i = 0; i < p.w.size(); ++i) {
        const double g = grad[i];
        const double m = b1 * p.m[i] + (1.0 - b1) * g;
        const double v = b2 * p.v[i] + (1.0 - b2) * g * g;
        p.m[i] = (float)m;
        p.v[i] = (float)v;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        double w = p.w[i];
        w -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * w);
        p.w[i] = (float)w;
    }
}

ad::Graph<float>::Id Bindings::bind(ad::Graph<float>& g, Param& p) {
    for (const auto& b : items_)
        if (b.p == &p) return b.id;
    auto id = g.leaf(p.shape, p.w.data(), trainable_, p.name.c_str());
    items_.push_back({&p, id});
    return id;
}

void Bindings::step(ad::Graph<float>& g, const AdamWConfig& cfg) {
    if (!trainable_) throw Error("bindings: cannot step a frozen group");
    for (auto& b : items_) adamw_step(*b.p, g.grad(b.id), cfg);
}

double Bindings::grad_norm(const ad::Graph<float>& g) const {
    double s = 0;
    for (const auto& b : items_)
        for (float v : g.grad(b.id)) s += (double)v * v;
    return std::sqrt(s);
}

void ScheduleSpec::validate() const {
    if (warmup < 0 || total < 0 || warmup > total)
        throw ValidationError("schedule: warmup must be within [0, total]");
    if (base < 0 || warm_start < 0) throw ValidationError("schedule: negative rate");
    if (kind == ScheduleKind::CosineRampWindow && window_len < 0)
        throw ValidationError("schedule: negative window length");
}

double schedule_at(const ScheduleSpec& spec, int64_t step, bool* clamped) {
    spec.validate();
    if (clamped) *clamped = false;
    if (spec.total > 0 && step > spec.total) {
        step = spec.total;
        if (clamped) *clamped = true;
    }
    if (step < 0) throw ValidationError("schedule: negative step");
    switch (spec.kind) {
        case ScheduleKind::Constant:
            return spec.base;
        case ScheduleKind::WarmupConstant:
            if (spec.warmup > 0 && step < spec.warmup)
                return spec.warm_start +
                       (spec.base - spec.warm_start) * (double)step / (double)spec.warmup;
            return spec.base;
        case ScheduleKind::WarmupCosine: {
            if (spec.warmup > 0 && step < spec.warmup)
                return spec.warm_start +
                       (spec.base - spec.warm_start) * (double)step / (double)spec.warmup;
            const int64_t span = spec.total - spec.warmup;
            if (span <= 0) return spec.base;
            const double t = (double)(step - spec.warmup) / (double)span;
            return spec.base * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
        }
        case ScheduleKind::CosineRampWindow: {
            if (step <= spec.window_start) return 0.0;
            if (spec.window_len <= 0 || step >= spec.window_start + spec.window_len) return spec.base;
            const double t = (double)(step - spec.window_start) / (double)spec.window_len;
            return 0.5 * spec.base * (1.0 - std::cos(3.14159265358979323846 * t));
        }
    }
    throw Error("schedule: unknown kind");
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "constant") return ScheduleKind::Constant;
    if (s == "warmup-constant") return ScheduleKind::WarmupConstant;
    if (s == "warmup-cosine") return ScheduleKind::WarmupCosine;
    if (s == "cosine-ramp-window") return ScheduleKind::CosineRampWindow;
    throw ValidationError("unknown schedule kind: " + s);
}

}  // namespace crtlab::opt
