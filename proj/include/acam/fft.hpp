#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <fftw3.h>

#include "acam/error.hpp"

namespace acam {

namespace detail {
// FFTW's planner is not re-entrant.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex mu;
  return mu;
}
}  // namespace detail

/// Real-to-complex / complex-to-real transform pair of fixed length, backed by
/// FFTW with FFTW_ESTIMATE plans (deterministic across runs). Executing a
/// plan is thread-safe; one instance must not be used from two threads at once.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    if (n_ < 2) throw InvalidArgument("FFT length must be at least 2");
    real_.reset(fftw_alloc_real(n_));
    spec_.reset(fftw_alloc_complex(bins()));
    if (!real_ || !spec_) throw Error("FFTW allocation failed");
    std::lock_guard lock(detail::fftw_planner_mutex());
    fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), real_.get(), spec_.get(), FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n_), spec_.get(), real_.get(), FFTW_ESTIMATE);
    if (!fwd_ || !inv_) throw Error("FFTW planning failed");
  }

  ~RealFft() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    if (fwd_) fftw_destroy_plan(fwd_);
    if (inv_) fftw_destroy_plan(inv_);
  }

  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return n_ / 2 + 1; }

  // Zero-pads (or truncates) `x` to the transform length.
  std::vector<std::complex<double>> forward(std::span<const double> x) {
    for (std::size_t i = 0; i < n_; ++i) real_.get()[i] = i < x.size() ? x[i] : 0.0;
    fftw_execute(fwd_);
    std::vector<std::complex<double>> out(bins());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = {spec_.get()[k][0], spec_.get()[k][1]};
    return out;
  }

  // Unnormalized inverse: forward then inverse scales by n.
  std::vector<double> inverse(std::span<const std::complex<double>> spectrum) {
    if (spectrum.size() != bins()) throw DimensionMismatch("spectrum length does not match FFT size");
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
      spec_.get()[k][0] = spectrum[k].real();
      spec_.get()[k][1] = spectrum[k].imag();
    }
    fftw_execute(inv_);
    return std::vector<double>(real_.get(), real_.get() + n_);
  }

 private:
  struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
  };

  std::size_t n_;
  std::unique_ptr<double, FftwFree> real_;
  std::unique_ptr<fftw_complex, FftwFree> spec_;
  fftw_plan fwd_ = nullptr;
  fftw_plan inv_ = nullptr;
};

}  // namespace acam
