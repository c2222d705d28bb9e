#pragma once

#include <omp.h>

#include <chrono>

namespace thc {

/// Thread count for the library's OpenMP regions. Results never depend on it.
inline void set_num_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

inline int num_threads() { return omp_get_max_threads(); }

class Stopwatch {
 public:
  Stopwatch() : start_(clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(clock::now() - start_).count(); }
  void reset() { start_ = clock::now(); }

 private:
  using clock = std::chrono::steady_clock;
  clock::time_point start_;
};

}  // namespace thc
