#include "crtlab/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace crtlab::vq {

int QuantizerConfig::effective_codes() const {
    if (mode == Mode::VQ) return codes;
    int64_t p = 1;
    for (int l : fsq_levels) p *= l;
    return (int)p;
}

void QuantizerConfig::validate() const {
    if (mode == Mode::VQ) {
        if (codes < 2) throw ValidationError("quantizer: VQ needs K >= 2");
        if (dim < 1) throw ValidationError("quantizer: VQ needs d >= 1");
    } else {
        if (fsq_levels.empty()) throw ValidationError("quantizer: FSQ needs levels");
        for (int l : fsq_levels)
            if (l < 2) throw ValidationError("quantizer: FSQ levels must be >= 2");
        if ((int)fsq_levels.size() != dim)
            throw ValidationError("quantizer: FSQ level count must equal code dimension");
    }
    if (beta < 0) throw ValidationError("quantizer: negative commitment beta");
}

int64_t UsageHistogram::total() const {
    int64_t s = 0;
    for (int64_t c : counts) s += c;
    return s;
}

double utilization(const UsageHistogram& h) {
    if (h.counts.empty() || h.total() == 0) throw ValidationError("utilization: empty histogram");
    int64_t used = 0;
    for (int64_t c : h.counts)
        if (c > 0) ++used;
    return (double)used / (double)h.counts.size();
}

void vq_lookup(const float* z, int64_t n_vec, const float* table, int k, int d, int* out_idx,
               int64_t* degenerate) {
    std::vector<double> row_norm(k);
    for (int r = 0; r < k; ++r) {
        double s = 0;
        for (int j = 0; j < d; ++j) s += (double)table[r * d + j] * table[r * d + j];
        row_norm[r] = std::sqrt(s);
    }
    int64_t degen = 0;
    // Each query is independent; the scan over rows is ascending so ties keep
    // the lowest index.
    for (int64_t i = 0; i < n_vec; ++i) {
        const float* zi = z + i * d;
        double zn = 0;
        for (int j = 0; j < d; ++j) zn += (double)zi[j] * zi[j];
        if (zn == 0.0) {
            out_idx[i] = 0;
            ++degen;
            continue;
        }
        zn = std::sqrt(zn);
        double best = -2.0;
        int best_r = 0;
        for (int r = 0; r < k; ++r) {
            double dot = 0;
            for (int j = 0; j < d; ++j) dot += (double)zi[j] * table[r * d + j];
            const double denom = zn * row_norm[r];
            const double cosine = denom > 0 ? dot / denom : -1.0;
            if (cosine > best) {
                best = cosine;
                best_r = r;
            }
        }
        out_idx[i] = best_r;
    }
    if (degenerate) *degenerate += degen;
}

VqLosses vq_losses(ad::Graph<float>& g, ad::Graph<float>::Id z, ad::Graph<float>::Id e, double beta) {
    const Shape& zs = g.shape(z);
    if (zs != g.shape(e)) shape_error("vq_losses", zs, g.shape(e));
    if (zs.size() != 2) shape_error("vq_losses", "expected [n,d], got " + shape_str(zs));
    const int64_t n = zs[0];
    VqLosses out;
    out.codebook = g.scale(g.sum_all(g.square(g.sub(g.stop_grad(z), e))), 1.f / (float)n);
    out.commit = g.scale(g.sum_all(g.square(g.sub(z, g.stop_grad(e)))), (float)(beta / (double)n));
    return out;
}

VqApply vq_apply(ad::Graph<float>& g, ad::Graph<float>::Id z, ad::Graph<float>::Id table, double beta,
                 UsageHistogram* usage) {
    const Shape& zs = g.shape(z);
    const Shape& ts = g.shape(table);
    if (zs.size() != 2 || ts.size() != 2 || zs[1] != ts[1]) shape_error("vq_apply", zs, ts);
    const int64_t n = zs[0];
    const int k = ts[0], d = ts[1];

    VqApply out;
    out.indices.resize(n);
    vq_lookup(g.val(z).data(), n, g.val(table).data(), k, d, out.indices.data(),
              usage ? &usage->degenerate_inputs : nullptr);
    if (usage) {
        for (int idx : out.indices) usage->counts[idx] += 1;
    }

    auto e = g.embedding(table, out.indices);
    const VqLosses losses = vq_losses(g, z, e, beta);
    out.codebook_loss = losses.codebook;
    out.commit_loss = losses.commit;
    out.quantized = g.straight_through(z, g.val(e).data());
    return out;
}

void fsq_project(const float* v, int64_t n_vec, const std::vector<int>& levels, int* out_idx,
                 float* out_q) {
    const int d = (int)levels.size();
    for (int64_t i = 0; i < n_vec; ++i) {
        int composite = 0;
        for (int j = 0; j < d; ++j) {
            const int l = levels[j];
            const float x = v[i * d + j];
            const float t = (x + 1.f) * 0.5f * (float)(l - 1);
            int q = (int)std::lround((double)t);
            q = std::clamp(q, 0, l - 1);
            composite = composite * l + q;
            if (out_q) out_q[i * d + j] = 2.f * (float)q / (float)(l - 1) - 1.f;
        }
        if (out_idx) out_idx[i] = composite;
    }
}

void fsq_index_to_point(int index, const std::vector<int>& levels, float* out) {
    const int d = (int)levels.size();
    for (int j = d - 1; j >= 0; --j) {
        const int l = levels[j];
        const int q = index % l;
        index /= l;
        out[j] = 2.f * (float)q / (float)(l - 1) - 1.f;
    }
}

int fsq_composite_index(const int* per_dim, const std::vector<int>& levels) {
    int composite = 0;
    for (size_t j = 0; j < levels.size(); ++j) composite = composite * levels[j] + per_dim[j];
    return composite;
}

FsqApply fsq_apply(ad::Graph<float>& g, ad::Graph<float>::Id z, const std::vector<int>& levels,
                   UsageHistogram* usage) {
    const Shape& zs = g.shape(z);
    if (zs.size() != 2 || zs[1] != (int)levels.size())
        shape_error("fsq_apply", "latent width does not match level count " + shape_str(zs));
    const int64_t n = zs[0];
    const int d = (int)levels.size();

    auto bounded = g.tanh_(z);
    FsqApply out;
    out.indices.resize(n);
    std::vector<float> q((size_t)n * d);
    fsq_project(g.val(bounded).data(), n, levels, out.indices.data(), q.data());
    if (usage)
        for (int idx : out.indices) usage->counts[idx] += 1;
    out.quantized = g.straight_through(bounded, q.data());
    return out;
}

void init_codebook(std::span<float> table, int k, int d, Rng& rng) {
    for (int r = 0; r < k; ++r) {
        double norm = 0;
        do {
            norm = 0;
            for (int j = 0; j < d; ++j) {
                const double v = rng.normal();
                table[r * d + j] = (float)v;
                norm += v * v;
            }
        } while (norm == 0.0);
        const float inv = (float)(1.0 / std::sqrt(norm));
        for (int j = 0; j < d; ++j) table[r * d + j] *= inv;
    }
}

namespace {
constexpr char kTokMagic[8] = {'C', 'R', 'T', 'T', 'O', 'K', '1', '\0'};
constexpr uint32_t kTokVersion = 1;
}  // namespace

void write_token_dump(const std::string& path, const TokenDump& dump) {
    if ((int64_t)dump.tokens.size() != (int64_t)dump.image_count * dump.grid_h * dump.grid_w)
        throw ValidationError("token dump: token count does not match header");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw RuntimeFailure("token dump: cannot write " + path);
    os.write(kTokMagic, sizeof(kTokMagic));
    auto put = [&os](uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
    put(kTokVersion);
    put((uint32_t)dump.codes);
    put((uint32_t)dump.grid_h);
    put((uint32_t)dump.grid_w);
    put((uint32_t)dump.image_count);
    os.write(reinterpret_cast<const char*>(dump.tokens.data()),
             (std::streamsize)(dump.tokens.size() * sizeof(int32_t)));
    if (!os) throw RuntimeFailure("token dump: write failed " + path);
}

TokenDump read_token_dump(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("token dump: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kTokMagic, sizeof(kTokMagic)) != 0)
        throw ValidationError("token dump: bad magic in " + path);
    auto take = [&is, &path]() {
        uint32_t v;
        is.read(reinterpret_cast<char*>(&v), 4);
        if (!is) throw ValidationError("token dump: truncated header in " + path);
        return v;
    };
    const uint32_t version = take();
    if (version != kTokVersion) throw ValidationError("token dump: unsupported version");
    TokenDump d;
    d.codes = (int32_t)take();
    d.grid_h = (int32_t)take();
    d.grid_w = (int32_t)take();
    d.image_count = (int32_t)take();
    if (d.codes <= 0 || d.grid_h <= 0 || d.grid_w <= 0 || d.image_count < 0)
        throw ValidationError("token dump: malformed header in " + path);
    d.tokens.resize((size_t)d.image_count * d.grid_h * d.grid_w);
    is.read(reinterpret_cast<char*>(d.tokens.data()),
            (std::streamsize)(d.tokens.size() * sizeof(int32_t)));
    if (!is) throw ValidationError("token dump: truncated payload in " + path);
    for (int32_t t : d.tokens)
        if (t < 0 || t >= d.codes) throw ValidationError("token dump: index out of range in " + path);
    return d;
}

}  // namespace crtlab::vq
