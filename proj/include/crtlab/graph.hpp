#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "crtlab/common.hpp"
#include "crtlab/kernels.hpp"

namespace crtlab::ad {

// Reverse-mode tape. Ops append nodes in creation order; backward() walks the
// tape in reverse, so creation order is the topological order. One graph is
// built per training step and then dropped.
//
// Values are owned per node. Gradients are allocated (zeroed) for nodes on a
// requires-grad path and accumulate across consumers; backward() may only be
// called once per graph.
template <class T>
class Graph {
  public:
    using Id = int;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // --- leaves ---
    Id leaf(const Shape& shape, const T* data, bool requires_grad, const char* tag = "leaf");
    Id scalar(T v, bool requires_grad = false);

    // --- elementwise ---
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);
    Id scale(Id a, T c);
    Id silu(Id a);
    Id gelu(Id a);
    Id tanh_(Id a);
    Id relu(Id a);
    Id leaky_relu(Id a, T slope);
    Id square(Id a);

    // --- linear algebra ---
    Id matmul(Id a, Id b);                  // [m,k] x [k,n]
    Id bmm(Id a, Id b);                     // [B,m,k] x [B,k,n]
    Id bmm_nt(Id a, Id b);                  // [B,m,k] x [B,n,k]^T -> [B,m,n]
    Id add_bias(Id a, Id bias);             // rows [m,D] + [D]

    // --- convolution & spatial ---
    Id conv2d(Id x, Id w, Id bias, int stride, int pad);  // bias may be kNone
    Id upsample2x(Id x);
    Id global_avg_pool(Id x);               // [B,C,H,W] -> [B,C]

    // --- normalization, attention, losses ---
    Id layer_norm(Id x, Id gamma, Id beta, T eps);        // over last dim; gamma/beta may be kNone
    Id softmax_causal(Id scores);                         // [B,N,N]
    Id cross_entropy_rows(Id logits, std::vector<int> targets);  // [M,K] -> [M]
    Id logsumexp_rows(Id logits);                         // [M,K] -> [M]
    Id mean_all(Id a);                                    // -> [1]
    Id sum_all(Id a);                                     // -> [1]

    // --- shape ---
    Id reshape(Id a, const Shape& shape);
    Id slice_rows(Id a, int start, int len);
    Id concat_rows(Id a, Id b);
    Id permute_0213(Id a);                                // [d0,d1,d2,d3] -> [d0,d2,d1,d3]

    // --- gradient plumbing ---
    Id stop_grad(Id a);
    Id grad_scale(Id a, T c);                             // identity forward, grad *= c backward
    Id straight_through(Id z, const T* forwarded);        // forward replaced, grad passes to z
    Id embedding(Id table, std::vector<int> idx);         // [V,D] gather -> [M,D]

    void backward(Id loss);

    const Shape& shape(Id id) const { return at(id).shape; }
    std::span<const T> val(Id id) const { return {at(id).val.data(), at(id).val.size()}; }
    std::span<T> val_mut(Id id) { return {at(id).val.data(), at(id).val.size()}; }
    std::span<const T> grad(Id id) const;
    bool requires_grad(Id id) const { return at(id).rg; }
    size_t node_count() const { return nodes_.size(); }

    // FLOP accounting: forward accumulates at op creation, backward when run.
    int64_t forward_flops() const { return fwd_flops_; }
    int64_t backward_flops() const { return bwd_flops_; }
    int64_t total_flops() const { return fwd_flops_ + bwd_flops_; }

    static constexpr Id kNone = -1;

  private:
    struct Node {
        Shape shape;
        std::vector<T> val;
        std::vector<T> grad;
        bool rg = false;
        const char* op = "leaf";
        int64_t bwd_flops = 0;
        std::function<void()> bwd;
    };

    Node& at(Id id) {
        if (id < 0 || id >= (Id)nodes_.size()) throw Error("graph: bad node id");
        return nodes_[id];
    }
    const Node& at(Id id) const {
        if (id < 0 || id >= (Id)nodes_.size()) throw Error("graph: bad node id");
        return nodes_[id];
    }

    Id push(Shape shape, bool rg, const char* op, int64_t fwd_flops, int64_t bwd_flops);
    void want_grad(Node& n) {
        if (n.rg && n.grad.empty()) n.grad.assign(n.val.size(), T(0));
    }

    std::deque<Node> nodes_;
    int64_t fwd_flops_ = 0;
    int64_t bwd_flops_ = 0;
    bool backward_done_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace crtlab::ad
