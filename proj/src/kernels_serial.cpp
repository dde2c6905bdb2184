#include <algorithm>
#include <cmath>
#include <cstdint>

#include "crtlab/kernels.hpp"

// Reference build: identical loop bodies, no OpenMP.
#define CRTLAB_KERN_NS crtlab::kern::serial
#define CRTLAB_OMP_FOR

#include "kernels_body.inc"
