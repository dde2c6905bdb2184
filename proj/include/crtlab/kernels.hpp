#pragma once

#include <cstdint>

// Dense compute kernels. Each kernel exists in two builds: kern::serial (plain
// loops, the reference) and kern::par (OpenMP). Both are generated from the
// same loop bodies and each output cell is reduced in the same order by
// exactly one thread, so results are bit-identical between the two variants
// and across thread counts. Backward kernels accumulate (+=) into gradients.

namespace crtlab::kern {

struct ConvDims {
    int batch, in_ch, in_h, in_w;
    int out_ch, kh, kw;
    int stride, pad;
    int out_h, out_w;
};

// unary op selectors for unary_fwd/unary_bwd
enum UnaryOp : int {
    kSilu = 0,
    kGelu = 1,
    kTanh = 2,
    kRelu = 3,
    kLeakyRelu = 4,  // arg = negative slope
    kSquare = 5,
};

#define CRTLAB_KERNEL_DECLS                                                                                  \
    template <class T>                                                                                       \
    void matmul(T* c, const T* a, const T* b, int m, int k, int n, bool acc);                                \
    template <class T>                                                                                       \
    void matmul_nt(T* c, const T* a, const T* b, int m, int k, int n, bool acc);                             \
    template <class T>                                                                                       \
    void matmul_tn(T* c, const T* a, const T* b, int m, int k, int n, bool acc);                             \
    template <class T>                                                                                       \
    void bmm(T* c, const T* a, const T* b, int nb, int m, int k, int n, bool acc);                           \
    template <class T>                                                                                       \
    void bmm_nt(T* c, const T* a, const T* b, int nb, int m, int k, int n, bool acc);                        \
    template <class T>                                                                                       \
    void bmm_tn(T* c, const T* a, const T* b, int nb, int m, int k, int n, bool acc);                        \
    template <class T>                                                                                       \
    void conv2d_fwd(T* y, const T* x, const T* w, const T* bias, const ConvDims& d);                         \
    template <class T>                                                                                       \
    void conv2d_bwd_data(T* gx, const T* gy, const T* w, const ConvDims& d);                                 \
    template <class T>                                                                                       \
    void conv2d_bwd_weight(T* gw, const T* x, const T* gy, const ConvDims& d);                               \
    template <class T>                                                                                       \
    void conv2d_bwd_bias(T* gb, const T* gy, const ConvDims& d);                                             \
    template <class T>                                                                                       \
    void upsample2x_fwd(T* y, const T* x, int b, int c, int h, int w);                                       \
    template <class T>                                                                                       \
    void upsample2x_bwd(T* gx, const T* gy, int b, int c, int h, int w);                                     \
    template <class T>                                                                                       \
    void gap_fwd(T* y, const T* x, int b, int c, int hw);                                                    \
    template <class T>                                                                                       \
    void gap_bwd(T* gx, const T* gy, int b, int c, int hw);                                                  \
    template <class T>                                                                                       \
    void layernorm_fwd(T* y, T* mean, T* rstd, const T* x, const T* gamma, const T* beta, int64_t rows,      \
                       int d, T eps);                                                                        \
    template <class T>                                                                                       \
    void layernorm_bwd(T* gx, T* ggamma, T* gbeta, const T* gy, const T* x, const T* mean, const T* rstd,    \
                       const T* gamma, int64_t rows, int d);                                                 \
    template <class T>                                                                                       \
    void softmax_causal_fwd(T* p, const T* s, int nb, int n);                                                \
    template <class T>                                                                                       \
    void softmax_causal_bwd(T* gs, const T* p, const T* gp, int nb, int n);                                  \
    template <class T>                                                                                       \
    void softmax_rows(T* p, const T* x, int64_t rows, int d);                                                \
    template <class T>                                                                                       \
    void ce_rows_fwd(T* loss, T* probs, const T* logits, const int* targets, int64_t rows, int k);           \
    template <class T>                                                                                       \
    void ce_rows_bwd(T* glogits, const T* probs, const int* targets, const T* gloss, int64_t rows, int k);   \
    template <class T>                                                                                       \
    void lse_rows_fwd(T* lse, const T* logits, int64_t rows, int k);                                         \
    template <class T>                                                                                       \
    void lse_rows_bwd(T* glogits, const T* logits, const T* lse, const T* glse, int64_t rows, int k);        \
    template <class T>                                                                                       \
    void embedding_fwd(T* y, const T* table, const int* idx, int64_t m, int d);                              \
    template <class T>                                                                                       \
    void embedding_bwd(T* gtable, const T* gy, const int* idx, int64_t m, int d);                            \
    template <class T>                                                                                       \
    void unary_fwd(int which, T* y, const T* x, int64_t n, T arg);                                           \
    template <class T>                                                                                       \
    void unary_bwd(int which, T* gx, const T* x, const T* gy, int64_t n, T arg);

namespace serial {
CRTLAB_KERNEL_DECLS
}

namespace par {
CRTLAB_KERNEL_DECLS
}

#undef CRTLAB_KERNEL_DECLS

// Runtime switch between the two builds; default is the OpenMP build.
bool& use_parallel();

// Thread count used by the parallel build (recorded in run metadata).
void set_threads(int n);
int threads();

}  // namespace crtlab::kern
