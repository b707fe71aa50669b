#pragma once

#include <cstdint>
#include <functional>

namespace tcvsr {

/// Worker count used by kernels. Initialised from TCVSR_THREADS (default:
/// hardware concurrency). Kernels only split independent output ranges, so
/// results do not depend on this value.
int num_threads();
void set_num_threads(int n);

/// Calls fn(begin, end) over contiguous chunks covering [0, n). Chunks never
/// smaller than min_chunk.
void parallel_for(std::int64_t n, std::int64_t min_chunk,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace tcvsr
