#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <numeric>
#include <vector>

#include "thc/error.hpp"
#include "thc/types.hpp"

namespace thc {

namespace detail {

// FFTW's planner is not reentrant; executing a finished plan is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};

}  // namespace detail

/// SIMD-aligned complex scratch array owned by FFTW's allocator.
class FftBuffer {
 public:
  FftBuffer() = default;
  explicit FftBuffer(std::size_t size)
      : data_(static_cast<cplx*>(fftw_malloc(sizeof(cplx) * (size == 0 ? 1 : size)))), size_(size) {
    if (!data_) throw std::bad_alloc();
  }

  cplx* data() noexcept { return data_.get(); }
  const cplx* data() const noexcept { return data_.get(); }
  std::size_t size() const noexcept { return size_; }
  cplx& operator[](std::size_t k) noexcept { return data_[k]; }
  const cplx& operator[](std::size_t k) const noexcept { return data_[k]; }

 private:
  std::unique_ptr<cplx[], detail::FftwFree> data_;
  std::size_t size_ = 0;
};

/// In-place complex DFT of a row-major array with the given extents.
///
/// Forward is unnormalized with kernel e^{-2 pi i k x / m}; backward carries
/// no 1/n either, callers divide. Plans use FFTW_ESTIMATE so the algorithm
/// (and therefore every rounding) is fixed for a given size. Buffers passed
/// to forward()/backward() must come from FftBuffer, which guarantees the
/// alignment the plan was made for.
class FftPlan {
 public:
  explicit FftPlan(std::vector<int> extents) : extents_(std::move(extents)) {
    detail::require(!extents_.empty(), "FftPlan: no extents");
    size_ = std::accumulate(extents_.begin(), extents_.end(), std::size_t{1},
                            [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    FftBuffer scratch(size_);
    auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
    const int rank = static_cast<int>(extents_.size());
    std::lock_guard lock(detail::fftw_planner_mutex());
    forward_ = fftw_plan_dft(rank, extents_.data(), p, p, FFTW_FORWARD, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft(rank, extents_.data(), p, p, FFTW_BACKWARD, FFTW_ESTIMATE);
    if (!forward_ || !backward_) throw NumericalError("FftPlan: FFTW planning failed");
  }

  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  ~FftPlan() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    if (forward_) fftw_destroy_plan(forward_);
    if (backward_) fftw_destroy_plan(backward_);
  }

  std::size_t size() const noexcept { return size_; }
  const std::vector<int>& extents() const noexcept { return extents_; }

  void forward(FftBuffer& buffer) const { execute(forward_, buffer); }
  void backward(FftBuffer& buffer) const { execute(backward_, buffer); }

 private:
  void execute(fftw_plan plan, FftBuffer& buffer) const {
    detail::require(buffer.size() == size_, "FftPlan: buffer size mismatch");
    auto* p = reinterpret_cast<fftw_complex*>(buffer.data());
    fftw_execute_dft(plan, p, p);
  }

  std::vector<int> extents_;
  std::size_t size_ = 0;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

}  // namespace thc
