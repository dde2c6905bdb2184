#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "crtlab/kernels.hpp"

#define CRTLAB_KERN_NS crtlab::kern::par
#define CRTLAB_OMP_FOR _Pragma("omp parallel for schedule(static)")

#include "kernels_body.inc"

namespace crtlab::kern {

bool& use_parallel() {
    static bool enabled = true;
    return enabled;
}

void set_threads(int n) {
    if (n < 1) n = 1;
    omp_set_num_threads(n);
}

int threads() { return omp_get_max_threads(); }

}  // namespace crtlab::kern
