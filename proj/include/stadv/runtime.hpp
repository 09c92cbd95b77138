#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace stadv {

// Tape buffers are allocated and released in waves; keeping freed memory
// mapped avoids returning it to the kernel and faulting it back every batch.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

}  // namespace stadv
