#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace mfg {

/// Selects between the serial reference loop and the OpenMP kernel.
///
/// Both paths write each index's result into its own slot and leave every
/// reduction to the caller, so they produce bit-identical output.
enum class Execution { serial, parallel };

template <typename Fn>
void for_each_index(std::size_t count, Execution exec, Fn&& fn) {
  if (exec == Execution::serial || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const long n = static_cast<long>(count);
#pragma omp parallel for schedule(dynamic, 4)
  for (long i = 0; i < n; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace mfg
