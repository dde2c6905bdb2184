#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "crtlab/common.hpp"
#include "crtlab/graph.hpp"

namespace crtlab::opt {

// A named trainable tensor with AdamW state. Training precision is 32-bit.
struct Param {
    std::string name;
    Shape shape;
    std::vector<float> w;
    std::vector<float> m;  // first moment
    std::vector<float> v;  // second moment
    int64_t step = 0;

    int64_t count() const { return (int64_t)w.size(); }
};

// Owns parameters in creation order; names are unique paths like
// "enc.stage0.block0.conv1.w". Creation order is the checkpoint record order.
class ParamStore {
  public:
    using Init = std::function<void(std::span<float>)>;

    Param& get_or_create(const std::string& name, const Shape& shape, const Init& init);
    Param& create(const std::string& name, const Shape& shape, const Init& init);
    Param* find(const std::string& name);
    Param& get(const std::string& name);

    std::vector<std::unique_ptr<Param>>& items() { return items_; }
    const std::vector<std::unique_ptr<Param>>& items() const { return items_; }
    int64_t total_count() const;
    size_t size() const { return items_.size(); }

  private:
    std::vector<std::unique_ptr<Param>> items_;
};

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Decoupled weight decay Adam. Throws RuntimeFailure naming the parameter on
// a non-finite gradient.
void adamw_step(Param& p, std::span<const float> grad, const AdamWConfig& cfg);

// Tracks which graph leaf each parameter was staged to in the current step.
struct BoundParam {
    Param* p = nullptr;
    ad::Graph<float>::Id id = -1;
};

// Stages parameters into a graph as leaves, once each, and steps them as one
// optimizer group afterwards. A frozen binding stages without gradients.
class Bindings {
  public:
    explicit Bindings(bool trainable = true) : trainable_(trainable) {}

    ad::Graph<float>::Id bind(ad::Graph<float>& g, Param& p);
    void step(ad::Graph<float>& g, const AdamWConfig& cfg);
    // L2 norm of all bound gradients, for diagnostics.
    double grad_norm(const ad::Graph<float>& g) const;
    const std::vector<BoundParam>& items() const { return items_; }
    bool trainable() const { return trainable_; }
    void clear() { items_.clear(); }

  private:
    bool trainable_ = true;
    std::vector<BoundParam> items_;
};

enum class ScheduleKind {
    Constant,
    WarmupConstant,     // linear warmup from warm_start to base, then base
    WarmupCosine,       // linear warmup, then cosine decay from base to 0 at total
    CosineRampWindow,   // 0 before window, half-cosine rise to base inside it, base after
};

struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::Constant;
    double base = 0.0;
    double warm_start = 0.0;
    int64_t warmup = 0;
    int64_t total = 0;
    int64_t window_start = 0;
    int64_t window_len = 0;

    void validate() const;
};

// Piecewise schedule value. Steps past `total` clamp; `clamped` reports it.
double schedule_at(const ScheduleSpec& spec, int64_t step, bool* clamped = nullptr);

ScheduleKind schedule_kind_from_string(const std::string& s);

}  // namespace crtlab::opt
