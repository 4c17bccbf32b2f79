#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace fastnose {

using cplx = std::complex<double>;

/// Forward DFT X_k = sum_n x_n exp(-2 pi i k n / N) for any N >= 1.
///
/// Lengths whose prime factors are all <= 16 use a recursive mixed-radix
/// Cooley-Tukey pass with directly evaluated twiddles; anything else goes
/// through Bluestein's chirp-z convolution on a power-of-two plan.
class FftPlan {
public:
  explicit FftPlan(std::size_t n);
  ~FftPlan();
  FftPlan(FftPlan&&) noexcept;
  FftPlan& operator=(FftPlan&&) noexcept;

  std::size_t size() const { return n_; }
  bool uses_bluestein() const { return bluestein_ != nullptr; }

  void forward(std::span<const cplx> in, std::span<cplx> out) const;
  std::vector<cplx> forward(std::span<const cplx> in) const;
  std::vector<cplx> forward_real(std::span<const double> in) const;

private:
  struct Bluestein;

  void recurse(const cplx* in, std::size_t stride, cplx* out, std::size_t n, std::size_t level) const;

  std::size_t n_;
  std::vector<std::size_t> factors_;
  std::vector<cplx> twiddle_;
  std::unique_ptr<Bluestein> bluestein_;
};

std::vector<cplx> fft(std::span<const cplx> x);
std::vector<cplx> fft_real(std::span<const double> x);

/// Direct O(n^2) DFT, used as the test oracle. Intended for n <= 4096.
std::vector<cplx> dft_reference(std::span<const cplx> x);

}  // namespace fastnose
