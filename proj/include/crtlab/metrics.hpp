#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "crtlab/common.hpp"
#include "crtlab/features.hpp"
#include "crtlab/quantize.hpp"

namespace crtlab::metrics {

// --- Fréchet feature distance ---

struct GaussianStats {
    std::vector<double> mean;  // [d]
    std::vector<double> cov;   // [d, d], symmetric, unbiased (n-1)
    int64_t n = 0;
    int dim() const { return (int)mean.size(); }
};

// Two-pass moments over per-image feature rows; deterministic for a fixed
// image order (extraction may run in parallel, accumulation is ordered).
GaussianStats collect_stats(const std::vector<float>& features, int64_t n, int dim);
GaussianStats collect_stats_images(const FeatureExtractor& fx, const float* images, int64_t n, int side);

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)); the matrix square root
// goes through a symmetric eigendecomposition of S_a^(1/2) S_b S_a^(1/2).
// Small negative eigenvalues clamp to zero; below -1e-6 is an error. A
// 1e-6 * I shrinkage stabilizes small-sample covariances.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// --- pixel metrics (unit-range [0,1] images) ---

struct PsnrResult {
    double db;        // capped at 99.0
    bool exact_match; // MSE was exactly zero
};
PsnrResult psnr(const float* x, const float* y, int64_t n, double max_value);

// 5-scale MS-SSIM with the reference weights, 11-tap Gaussian window
// sigma 1.5, on grayscale-converted images. Small images use fewer scales
// with renormalized weights; below one usable scale is an error.
double ms_ssim(const float* x, const float* y, int h, int w, int channels, double max_value);

// --- token entropy analytics ---

struct EntropyReport {
    std::vector<double> per_position_bits;  // H(X_i), length N
    double total_bits = 0;                  // pooled distribution entropy
    double mean_position_bits = 0;          // expected per-position entropy
    double skew = 0;                        // 1 - 2^H_pos / 2^H_tot
    double utilization = 0;
    bool degenerate = false;                // constant stream
    int positions = 0;
    int64_t sequences = 0;
};

EntropyReport entropy_report(const vq::TokenDump& dump);

// Upper bounds on H(X_i | X_0..X_{i-1}) in nats: the per-position marginal
// entropies, converted. This is the one bits-to-nats boundary.
std::vector<double> conditional_entropy_bound_nats(const EntropyReport& report);

}  // namespace crtlab::metrics
