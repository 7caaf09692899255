#include "hnoseg/fft.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace hnoseg::fft {
namespace {

using cd = std::complex<double>;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Twiddle table for radix-2 length n: e^{-2*pi*i*k/n}, k < n/2.
const std::vector<cd>& twiddles(std::size_t n) {
  static std::map<std::size_t, std::vector<cd>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<cd> w(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double theta = -2.0 * std::numbers::pi *
                         static_cast<double>(k) / static_cast<double>(n);
    w[k] = cd(std::cos(theta), std::sin(theta));
  }
  return cache.emplace(n, std::move(w)).first->second;
}

void fft_radix2(cd* a, std::size_t n, bool inverse) {
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const auto& w = twiddles(n);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t step = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        cd tw = w[k * step];
        if (inverse) tw = std::conj(tw);
        const cd u = a[i + k];
        const cd v = a[i + k + len / 2] * tw;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

void dft_direct(cd* a, std::size_t n, bool inverse) {
  std::vector<cd> out(n, cd(0.0, 0.0));
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t m = 0; m < n; ++m) {
      const double theta = sign * 2.0 * std::numbers::pi *
                           static_cast<double>(k * m % n) /
                           static_cast<double>(n);
      out[k] += a[m] * cd(std::cos(theta), std::sin(theta));
    }
  }
  for (std::size_t k = 0; k < n; ++k) a[k] = out[k];
}

// 3D FFT over a contiguous [X,Y,Z] complex array, unnormalized.
void fft3(cd* a, std::size_t nx, std::size_t ny, std::size_t nz) {
  // z axis: contiguous lines.
  for (std::size_t xy = 0; xy < nx * ny; ++xy) transform(a + xy * nz, nz, false);
  // y axis: stride nz.
  std::vector<cd> line(ny);
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t z = 0; z < nz; ++z) {
      cd* base = a + x * ny * nz + z;
      for (std::size_t y = 0; y < ny; ++y) line[y] = base[y * nz];
      transform(line.data(), ny, false);
      for (std::size_t y = 0; y < ny; ++y) base[y * nz] = line[y];
    }
  }
  // x axis: stride ny*nz.
  line.resize(nx);
  for (std::size_t yz = 0; yz < ny * nz; ++yz) {
    cd* base = a + yz;
    for (std::size_t x = 0; x < nx; ++x) line[x] = base[x * ny * nz];
    transform(line.data(), nx, false);
    for (std::size_t x = 0; x < nx; ++x) base[x * ny * nz] = line[x];
  }
}

}  // namespace

void transform(cd* a, std::size_t n, bool inverse) {
  if (n <= 1) return;
  if (is_pow2(n)) {
    fft_radix2(a, n, inverse);
  } else {
    dft_direct(a, n, inverse);
  }
}

std::vector<cd> dft3_real(const double* x, std::size_t nx, std::size_t ny,
                          std::size_t nz) {
  std::vector<cd> buf(nx * ny * nz);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = cd(x[i], 0.0);
  fft3(buf.data(), nx, ny, nz);
  return buf;
}

Tensor dht3(const Tensor& x, bool normalize) {
  if (x.rank() != 4) {
    throw std::invalid_argument("dht3: expected [C,X,Y,Z], got " +
                                shape_str(x.shape()));
  }
  const std::size_t c = x.dim(0), nx = x.dim(1), ny = x.dim(2), nz = x.dim(3);
  const std::size_t vol = nx * ny * nz;
  const double norm = normalize ? 1.0 / static_cast<double>(vol) : 1.0;
  Tensor out(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    auto spec = dft3_real(x.data() + ch * vol, nx, ny, nz);
    double* o = out.data() + ch * vol;
    for (std::size_t i = 0; i < vol; ++i) {
      o[i] = (spec[i].real() - spec[i].imag()) * norm;
    }
  }
  return out;
}

}  // namespace hnoseg::fft
