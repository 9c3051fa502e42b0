#include "pdda/kernels.hpp"

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace pdda::kernels {

void flush_denormals() {
#if defined(__SSE__)
    thread_local bool done = false;
    if (done) return;
    constexpr unsigned kFtzDaz = 0x8040;
#pragma omp parallel
    _mm_setcsr(_mm_getcsr() | kFtzDaz);
    _mm_setcsr(_mm_getcsr() | kFtzDaz);
    done = true;
#endif
}

}  // namespace pdda::kernels
