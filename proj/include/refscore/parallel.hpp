#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

#include "refscore/kernels.hpp"

namespace refscore {

/// Runs body(i) for i in [0, n), serially or across OpenMP threads. Iterations
/// must write disjoint outputs. The first exception thrown by any iteration is
/// rethrown on the calling thread once the loop finishes.
template <typename Body>
void parallel_for(std::size_t n, kernels::Exec exec, Body&& body) {
  if (exec == kernels::Exec::serial) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      const std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace refscore
