#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace occage {

// Keeps large tensor buffers on the heap instead of fresh mmap regions, so
// repeated forward/backward passes reuse already-faulted pages. Call once at
// program start; a no-op off glibc.
inline void configure_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace occage
