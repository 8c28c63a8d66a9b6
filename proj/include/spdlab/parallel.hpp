#pragma once

// Cell-parallel execution. run_cells_serial is the reference; run_cells runs
// the same body under OpenMP. Results land in index order either way, so the
// two are interchangeable for deterministic bodies.

#include <cstddef>
#include <exception>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spdlab {

template <typename Result, typename Body>
std::vector<Result> run_cells_serial(std::size_t n, Body&& body) {
  std::vector<Result> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = body(i);
  return out;
}

/// jobs <= 0 uses the OpenMP default team size.
template <typename Result, typename Body>
std::vector<Result> run_cells(std::size_t n, int jobs, Body&& body) {
#ifdef _OPENMP
  if (jobs == 1 || n < 2) return run_cells_serial<Result>(n, body);
  std::vector<Result> out(n);
  std::exception_ptr failure;
  const int threads = jobs > 0 ? jobs : omp_get_max_threads();
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (long long i = 0; i < count; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(spdlab_run_cells_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
#else
  (void)jobs;
  return run_cells_serial<Result>(n, body);
#endif
}

}  // namespace spdlab
