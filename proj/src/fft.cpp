#include "fastnose/fft.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fastnose {

namespace {

constexpr std::size_t kMaxRadix = 16;

cplx unit_root(std::size_t k, std::size_t n) {
  const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
  return {std::cos(angle), std::sin(angle)};
}

std::vector<std::size_t> factorize(std::size_t n) {
  std::vector<std::size_t> f;
  while (n % 4 == 0) {
    f.push_back(4);
    n /= 4;
  }
  for (std::size_t p = 2; p * p <= n; ++p) {
    while (n % p == 0) {
      f.push_back(p);
      n /= p;
    }
  }
  if (n > 1) f.push_back(n);
  return f;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

}  // namespace

struct FftPlan::Bluestein {
  std::size_t m;
  std::vector<cplx> chirp;       // exp(-i pi k^2 / n), k < n
  std::vector<cplx> kernel_fft;  // FFT of conj chirp, wrapped to length m
  FftPlan inner;
  FftPlan::Bluestein* self() { return this; }

  Bluestein(std::size_t n) : m(next_pow2(2 * n - 1)), chirp(n), inner(m) {
    for (std::size_t k = 0; k < n; ++k) {
      // k^2 mod 2n keeps the angle argument small and exact.
      const std::size_t k2 = (k * k) % (2 * n);
      const double angle = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
      chirp[k] = {std::cos(angle), std::sin(angle)};
    }
    std::vector<cplx> b(m, cplx{});
    b[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k) {
      b[k] = std::conj(chirp[k]);
      b[m - k] = std::conj(chirp[k]);
    }
    kernel_fft = inner.forward(b);
  }
};

FftPlan::FftPlan(std::size_t n) : n_(n) {
  if (n == 0) throw std::invalid_argument("FFT length must be >= 1");
  factors_ = factorize(n);
  for (std::size_t p : factors_) {
    if (p > kMaxRadix) {
      bluestein_ = std::make_unique<Bluestein>(n);
      factors_.clear();
      return;
    }
  }
  twiddle_.resize(n);
  for (std::size_t k = 0; k < n; ++k) twiddle_[k] = unit_root(k, n);
}

FftPlan::~FftPlan() = default;
FftPlan::FftPlan(FftPlan&&) noexcept = default;
FftPlan& FftPlan::operator=(FftPlan&&) noexcept = default;

void FftPlan::recurse(const cplx* in, std::size_t stride, cplx* out, std::size_t n,
                      std::size_t level) const {
  if (n == 1) {
    out[0] = in[0];
    return;
  }
  const std::size_t p = factors_[level];
  const std::size_t m = n / p;
  for (std::size_t r = 0; r < p; ++r) recurse(in + r * stride, stride * p, out + r * m, m, level + 1);

  const std::size_t tw_stride = n_ / n;
  const std::size_t root_stride = n_ / p;
  std::array<cplx, kMaxRadix> t{};
  std::array<cplx, kMaxRadix> res{};
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t r = 0; r < p; ++r) t[r] = out[r * m + k] * twiddle_[r * k * tw_stride];
    if (p == 2) {
      res[0] = t[0] + t[1];
      res[1] = t[0] - t[1];
    } else if (p == 4) {
      const cplx a = t[0] + t[2], b = t[0] - t[2];
      const cplx c = t[1] + t[3], d = t[1] - t[3];
      const cplx d_rot{d.imag(), -d.real()};  // -i * d
      res[0] = a + c;
      res[1] = b + d_rot;
      res[2] = a - c;
      res[3] = b - d_rot;
    } else {
      for (std::size_t q = 0; q < p; ++q) {
        cplx s = t[0];
        for (std::size_t r = 1; r < p; ++r) s += t[r] * twiddle_[((r * q) % p) * root_stride];
        res[q] = s;
      }
    }
    for (std::size_t q = 0; q < p; ++q) out[k + q * m] = res[q];
  }
}

void FftPlan::forward(std::span<const cplx> in, std::span<cplx> out) const {
  if (in.size() != n_ || out.size() != n_) throw std::invalid_argument("FFT size mismatch");
  if (bluestein_) {
    const auto& bs = *bluestein_;
    std::vector<cplx> a(bs.m, cplx{});
    for (std::size_t k = 0; k < n_; ++k) a[k] = in[k] * bs.chirp[k];
    auto fa = bs.inner.forward(a);
    for (std::size_t k = 0; k < bs.m; ++k) fa[k] *= bs.kernel_fft[k];
    // Inverse via conjugation trick.
    for (auto& v : fa) v = std::conj(v);
    auto conv = bs.inner.forward(fa);
    const double scale = 1.0 / static_cast<double>(bs.m);
    for (std::size_t k = 0; k < n_; ++k) out[k] = std::conj(conv[k]) * scale * bs.chirp[k];
    return;
  }
  if (in.data() == out.data()) {
    std::vector<cplx> copy(in.begin(), in.end());
    recurse(copy.data(), 1, out.data(), n_, 0);
  } else {
    recurse(in.data(), 1, out.data(), n_, 0);
  }
}

std::vector<cplx> FftPlan::forward(std::span<const cplx> in) const {
  std::vector<cplx> out(n_);
  forward(in, out);
  return out;
}

std::vector<cplx> FftPlan::forward_real(std::span<const double> in) const {
  std::vector<cplx> c(in.begin(), in.end());
  return forward(c);
}

std::vector<cplx> fft(std::span<const cplx> x) { return FftPlan(x.size()).forward(x); }

std::vector<cplx> fft_real(std::span<const double> x) { return FftPlan(x.size()).forward_real(x); }

std::vector<cplx> dft_reference(std::span<const cplx> x) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx s{};
    for (std::size_t j = 0; j < n; ++j) {
      // (j*k) mod n keeps the angle exact for the table-free oracle.
      s += x[j] * unit_root((j * k) % n, n);
    }
    out[k] = s;
  }
  return out;
}

}  // namespace fastnose
