#pragma once

#include <cstddef>
#include <functional>

namespace dfetrack {

// Number of worker threads the library may use. Honours the
// DFE_TRACK_THREADS environment variable as an upper bound.
int worker_count();

// Runs body(i) for i in [0, n). Indices are split into contiguous chunks,
// one per worker; body must only write state owned by index i so that the
// result does not depend on the schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace dfetrack
