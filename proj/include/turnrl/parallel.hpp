#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace turnrl {

// Thread cap for parallel kernels: TURNRL_THREADS when set and positive,
// otherwise the OpenMP default. Always 1 in builds without OpenMP.
int max_threads();

// Runs fn(i) for i in [0, n). Iterations must write disjoint outputs; the
// caller merges in index order so results do not depend on scheduling.
// The first exception thrown by any iteration is rethrown after the loop.
template <typename Fn>
void parallel_for(std::size_t n, bool parallel, Fn&& fn) {
  if (!parallel || n < 2 || max_threads() < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
#ifdef _OPENMP
  std::exception_ptr error;
  std::mutex error_mutex;
  const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic) num_threads(max_threads())
  for (long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
#else
  for (std::size_t i = 0; i < n; ++i) fn(i);
#endif
}

}  // namespace turnrl
