#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace gazevit {

// Keeps large training buffers in the heap instead of returning them to the
// OS after every step. Call once at program start; no-op outside glibc.
inline void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
    mallopt(M_TOP_PAD, 64 * 1024 * 1024);
#endif
}

}  // namespace gazevit
