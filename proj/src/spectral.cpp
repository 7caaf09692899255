#include "hnoseg/spectral.hpp"

#include <stdexcept>

namespace hnoseg::spectral {

namespace {
GridSize grid_of(const ad::Var& x) {
  const Shape& s = x.shape();
  return {s[1], s[2], s[3]};
}

void check_channels(std::size_t cin, const ad::Var& W, const char* op) {
  if (W.shape()[1] != cin) {
    throw std::invalid_argument(std::string(op) + ": channel mismatch, " +
                                "weights expect " +
                                std::to_string(W.shape()[1]) + " got " +
                                std::to_string(cin));
  }
}
}  // namespace

SpectrumReal dht_forward(ad::Var x) {
  return SpectrumReal{ad::dht_forward_full(x), grid_of(x)};
}

ad::Var dht_inverse(const SpectrumReal& s) {
  if (!s.full_band()) {
    throw std::invalid_argument(
        "dht_inverse: cropped spectrum " + shape_str(s.coeffs.shape()) +
        "; mode_pad to the full grid first");
  }
  return ad::dht_inverse_full(s.coeffs);
}

SpectrumComplex dft_forward(ad::Var x) {
  // For real x: Re F = (H(k)+H(-k))/2, Im F = (H(-k)-H(k))/2.
  ad::Var h = ad::dht_forward_full(x);
  ad::Var hr = ad::reverse3(h);
  ad::Var re = ad::scale(ad::add(h, hr), 0.5);
  ad::Var im = ad::scale(ad::sub(hr, h), 0.5);
  return SpectrumComplex{re, im, grid_of(x)};
}

ad::Var dft_inverse(const SpectrumComplex& s) {
  const Shape& sh = s.re.shape();
  if (sh[1] != s.grid[0] || sh[2] != s.grid[1] || sh[3] != s.grid[2]) {
    throw std::invalid_argument(
        "dft_inverse: cropped spectrum; mode_pad to the full grid first");
  }
  // Real(F^-1 Z) = H^-1( (re + rev(re) - im + rev(im)) / 2 )
  ad::Var mix = ad::scale(
      ad::add(ad::sub(ad::add(s.re, ad::reverse3(s.re)), s.im),
              ad::reverse3(s.im)),
      0.5);
  return ad::dht_inverse_full(mix);
}

SpectrumReal mode_crop(const SpectrumReal& s, KMax k_max) {
  return SpectrumReal{ad::mode_crop(s.coeffs, k_max), s.grid};
}

SpectrumReal mode_pad(const SpectrumReal& s) {
  return SpectrumReal{ad::mode_pad(s.coeffs, s.grid), s.grid};
}

SpectrumComplex mode_crop(const SpectrumComplex& s, KMax k_max) {
  return SpectrumComplex{ad::mode_crop(s.re, k_max),
                         ad::mode_crop(s.im, k_max), s.grid};
}

SpectrumComplex mode_pad(const SpectrumComplex& s) {
  return SpectrumComplex{ad::mode_pad(s.re, s.grid),
                         ad::mode_pad(s.im, s.grid), s.grid};
}

SpectrumReal hartley_conv_full(const SpectrumReal& s, ad::Var W) {
  const Shape& ws = W.shape();
  const Shape& us = s.coeffs.shape();
  if (ws.size() != 5 || ws[1] != us[0] || ws[2] != us[1] || ws[3] != us[2] ||
      ws[4] != us[3]) {
    throw std::invalid_argument("hartley_conv_full: shape mismatch, W " +
                                shape_str(ws) + " vs spectrum " +
                                shape_str(us));
  }
  ad::Var u = s.coeffs;
  ad::Var ur = ad::reverse3(u);
  ad::Var even = ad::add(u, ur);
  ad::Var odd = ad::sub(u, ur);
  ad::Var out = ad::scale(ad::add(ad::mode_matmul(W, even),
                                  ad::mode_matmul(ad::reverse3(W), odd)),
                          0.5);
  return SpectrumReal{out, s.grid};
}

SpectrumReal hartley_conv_shared(const SpectrumReal& s, ad::Var W) {
  check_channels(s.coeffs.shape()[0], W, "hartley_conv_shared");
  return SpectrumReal{ad::channel_linear(s.coeffs, W), s.grid};
}

SpectrumReal hartley_conv_shared_nonlinear(const SpectrumReal& s, ad::Var W,
                                           bool residual) {
  check_channels(s.coeffs.shape()[0], W, "hartley_conv_shared_nonlinear");
  ad::Var y = ad::channel_linear(s.coeffs, W);
  if (residual) {
    if (W.shape()[0] != W.shape()[1]) {
      throw std::invalid_argument(
          "hartley_conv_shared_nonlinear: residual needs square weights");
    }
    y = ad::add(y, s.coeffs);
  }
  return SpectrumReal{ad::selu(y), s.grid};
}

SpectrumComplex fourier_conv_shared(const SpectrumComplex& s, ad::Var Wre,
                                    ad::Var Wim) {
  check_channels(s.re.shape()[0], Wre, "fourier_conv_shared");
  require_same_shape(Wre.value(), Wim.value(), "fourier_conv_shared");
  ad::Var re = ad::sub(ad::channel_linear(s.re, Wre),
                       ad::channel_linear(s.im, Wim));
  ad::Var im = ad::add(ad::channel_linear(s.im, Wre),
                       ad::channel_linear(s.re, Wim));
  return SpectrumComplex{re, im, s.grid};
}

SpectrumComplex fourier_conv_permode(const SpectrumComplex& s, ad::Var Wre,
                                     ad::Var Wim) {
  require_same_shape(Wre.value(), Wim.value(), "fourier_conv_permode");
  ad::Var re = ad::sub(ad::mode_matmul(Wre, s.re), ad::mode_matmul(Wim, s.im));
  ad::Var im = ad::add(ad::mode_matmul(Wre, s.im), ad::mode_matmul(Wim, s.re));
  return SpectrumComplex{re, im, s.grid};
}

}  // namespace hnoseg::spectral
