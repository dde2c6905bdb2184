#pragma once

#include <cstdint>
#include <vector>

#include "crtlab/graph.hpp"
#include "crtlab/nets.hpp"

namespace crtlab::metrics {

// Frozen convolutional feature extractor. Weights are generated from a fixed
// published seed and never trained; metric values are therefore comparable
// only within this artifact. Three stride-2 SiLU stages (3->16->32->64), then
// global average pooling to a 64-wide vector.
class FeatureExtractor {
  public:
    static constexpr uint64_t kDefaultSeed = 0x5EEDFEA7u;
    static constexpr int kFeatureDim = 64;

    explicit FeatureExtractor(uint64_t seed = kDefaultSeed);

    struct Stages {
        std::vector<nets::Id> maps;  // post-activation feature maps per stage
        nets::Id pooled;             // [B, 64]
    };
    // Builds frozen ops into an existing graph; gradients flow to the image.
    Stages build(nets::Gf& g, nets::Id image) const;

    // Convenience eval path: images [B,3,S,S] -> row-major [B,64] features.
    std::vector<float> features(const float* images, int batch, int side) const;

    uint64_t seed() const { return seed_; }

  private:
    uint64_t seed_;
    std::vector<float> w_[3], b_[3];
    static constexpr int kWidths[3] = {16, 32, 64};
};

// Mean over stages of the elementwise mean squared distance between frozen
// feature maps of the two images. Symmetric, zero iff features match.
nets::Id perceptual_proxy(nets::Gf& g, const FeatureExtractor& fx, nets::Id x, nets::Id y);

}  // namespace crtlab::metrics
