#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crtlab/common.hpp"
#include "crtlab/graph.hpp"
#include "crtlab/rng.hpp"

namespace crtlab::vq {

enum class Mode { VQ, FSQ };

struct QuantizerConfig {
    Mode mode = Mode::VQ;
    int codes = 128;               // K
    int dim = 8;                   // code dimension d
    double beta = 0.25;            // commitment weight
    int input_dim = 128;           // encoder latent width before projection
    std::vector<int> fsq_levels;   // per-dimension level counts (FSQ)

    int effective_codes() const;
    void validate() const;
};

// Usage accounting for a codebook (or FSQ grid) of K entries. Lookup is pure
// and parallel across tokens; counts are merged per batch on one thread.
struct UsageHistogram {
    std::vector<int64_t> counts;
    int64_t degenerate_inputs = 0;  // zero-vector lookups quantized to index 0

    explicit UsageHistogram(int k = 0) : counts(k, 0) {}
    void reset() { std::fill(counts.begin(), counts.end(), 0); degenerate_inputs = 0; }
    int64_t total() const;
};

// fraction of codes with count > 0; throws on an empty histogram
double utilization(const UsageHistogram& h);

// Cosine-distance argmax over codebook rows; ties break to the lowest index.
// A zero query quantizes to index 0 and bumps the degenerate counter.
void vq_lookup(const float* z, int64_t n_vec, const float* table, int k, int d, int* out_idx,
               int64_t* degenerate);

// Codebook loss mean||sg(z) - e||^2 and commitment beta*mean||z - sg(e)||^2,
// means over vectors (rows), stop-gradients placed so the codebook term
// reaches e only and the commitment term reaches z only.
struct VqLosses {
    ad::Graph<float>::Id codebook;
    ad::Graph<float>::Id commit;
};
VqLosses vq_losses(ad::Graph<float>& g, ad::Graph<float>::Id z, ad::Graph<float>::Id e, double beta);

// Graph-side quantization: lookup on the current values, then the VQ losses
// and a straight-through node forwarding the selected rows.
struct VqApply {
    ad::Graph<float>::Id quantized;      // [n, d], straight-through
    ad::Graph<float>::Id codebook_loss;  // scalar
    ad::Graph<float>::Id commit_loss;    // scalar, includes beta
    std::vector<int> indices;
};
VqApply vq_apply(ad::Graph<float>& g, ad::Graph<float>::Id z, ad::Graph<float>::Id table, double beta,
                 UsageHistogram* usage);

// --- FSQ ---

// Uniform grid of L points on [-1, 1] per dimension. fsq_project quantizes an
// already-bounded vector (idempotent); fsq_quantize applies the tanh bound
// first. Composite indices are big-endian mixed radix over the dimensions.
void fsq_project(const float* v, int64_t n_vec, const std::vector<int>& levels, int* out_idx,
                 float* out_q);
void fsq_index_to_point(int index, const std::vector<int>& levels, float* out);
int fsq_composite_index(const int* per_dim, const std::vector<int>& levels);

struct FsqApply {
    ad::Graph<float>::Id quantized;  // [n, d], straight-through after tanh
    std::vector<int> indices;
};
FsqApply fsq_apply(ad::Graph<float>& g, ad::Graph<float>::Id z, const std::vector<int>& levels,
                   UsageHistogram* usage);

// Codebook initialization: spherical draws, L2-normalized rows.
void init_codebook(std::span<float> table, int k, int d, Rng& rng);

// --- token dumps ---
// Binary interchange: magic, version, K, grid height, grid width, image
// count, then row-major int32 little-endian indices per image.
struct TokenDump {
    int32_t codes = 0;
    int32_t grid_h = 0;
    int32_t grid_w = 0;
    int32_t image_count = 0;
    std::vector<int32_t> tokens;

    int tokens_per_image() const { return grid_h * grid_w; }
    std::span<const int32_t> image(int i) const {
        return {tokens.data() + (size_t)i * grid_h * grid_w, (size_t)grid_h * grid_w};
    }
};

void write_token_dump(const std::string& path, const TokenDump& dump);
TokenDump read_token_dump(const std::string& path);

}  // namespace crtlab::vq
