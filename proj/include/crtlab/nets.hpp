#pragma once

#include <string>
#include <vector>

#include "crtlab/common.hpp"
#include "crtlab/graph.hpp"
#include "crtlab/optim.hpp"
#include "crtlab/rng.hpp"

namespace crtlab::nets {

using Gf = ad::Graph<float>;
using Id = Gf::Id;

// [B,C,H,W] -> [B*H*W, C] rows in raster order (y-major), and back.
Id nchw_to_rows(Gf& g, Id x);
Id rows_to_nchw(Gf& g, Id rows, int b, int c, int h, int w);

// --- convolutional auto-encoder (stage 1) ---

struct AutoencoderConfig {
    int image_side = 32;                  // R
    int downsample = 8;                   // f; stages = log2(f)
    std::vector<int> widths = {32, 64, 128};
    int res_blocks = 2;
    int latent_width = 128;               // channels before the code projection
    int code_dim = 8;                     // d after projection

    int stages() const { return (int)widths.size(); }
    int grid_side(int side) const { return side / downsample; }
    void validate() const;
};

// Fully convolutional, so any input side divisible by f works.
class Autoencoder {
  public:
    Autoencoder(const AutoencoderConfig& cfg, opt::ParamStore& store, Rng& rng);

    // image [B,3,S,S] -> pre-quantization latent rows [B*(S/f)^2, d]
    Id encode(Gf& g, opt::Bindings& bind, Id image, int batch, int side);
    // quantized rows [B*(S/f)^2, d] -> image [B,3,S,S] in [-1,1]
    Id decode(Gf& g, opt::Bindings& bind, Id rows, int batch, int side);

    const AutoencoderConfig& config() const { return cfg_; }

  private:
    Id res_block(Gf& g, opt::Bindings& bind, Id x, const std::string& prefix);
    AutoencoderConfig cfg_;
    opt::ParamStore* store_;
};

// --- patch critic (Wasserstein objective) ---

struct DiscriminatorConfig {
    int base_width = 32;
};

class PatchDiscriminator {
  public:
    PatchDiscriminator(const DiscriminatorConfig& cfg, opt::ParamStore& store, Rng& rng);
    // image [B,3,S,S] -> mean critic score, scalar
    Id score(Gf& g, opt::Bindings& bind, Id image);

  private:
    DiscriminatorConfig cfg_;
    opt::ParamStore* store_;
};

// disc loss = E[critic(fake)] - E[critic(real)], gen loss = -E[critic(fake)]
struct GanLosses {
    Id disc;
    Id gen;
};
GanLosses gan_losses(Gf& g, Id critic_real, Id critic_fake);

// --- causal transformer body (stage 2 and the CRT regularizer) ---

struct TransformerConfig {
    int layers = 4;
    int heads = 4;
    int dim = 256;  // 64 per head
    void validate() const;
    int head_dim() const { return dim / heads; }
};

// Pre-norm blocks with QK layer normalization inside attention and a GELU
// MLP. Operates on token rows [B*S, dim].
class TransformerBody {
  public:
    TransformerBody(const TransformerConfig& cfg, std::string prefix, opt::ParamStore& store, Rng& rng);
    Id apply(Gf& g, opt::Bindings& bind, Id rows, int batch, int seq);
    const TransformerConfig& config() const { return cfg_; }

  private:
    TransformerConfig cfg_;
    std::string prefix_;
    opt::ParamStore* store_;
};

// Linear layer over rows: y = x W + b (bias optional).
Id linear(Gf& g, opt::Bindings& bind, Id rows, opt::Param& w, opt::Param* b);

}  // namespace crtlab::nets
