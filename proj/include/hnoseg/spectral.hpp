// Hartley/Fourier spectra with grid metadata and the frequency-domain
// convolution operators.
//
// Convention: the forward transforms divide by the voxel count, the inverses
// do not. Under this normalization the coefficients of a band-limited field
// are resolution-invariant (Fourier-series-like), which is what lets a model
// trained at one resolution run at another.
//
// Cropped bands store, per dimension, the low indices {0..k-1} followed by
// the high (negative-frequency) indices {N-k..N-1}. Frequency negation on a
// cropped band is taken modulo the band size; on a full-grid spectrum this
// coincides with k -> N-k.

#pragma once

#include <array>

#include "hnoseg/autodiff.hpp"

namespace hnoseg::spectral {

using GridSize = std::array<std::size_t, 3>;
using KMax = std::array<std::size_t, 3>;

struct SpectrumReal {
  ad::Var coeffs;  // [C, 2kx, 2ky, 2kz] or full [C, X, Y, Z]
  GridSize grid;   // originating spatial dims

  bool full_band() const {
    const auto& s = coeffs.shape();
    return s[1] == grid[0] && s[2] == grid[1] && s[3] == grid[2];
  }
};

struct SpectrumComplex {
  ad::Var re;
  ad::Var im;
  GridSize grid;
};

SpectrumReal dht_forward(ad::Var x);
// Requires a full-grid spectrum; mode_pad cropped spectra first.
ad::Var dht_inverse(const SpectrumReal& s);

SpectrumComplex dft_forward(ad::Var x);
// Real part of the inverse DFT.
ad::Var dft_inverse(const SpectrumComplex& s);

SpectrumReal mode_crop(const SpectrumReal& s, KMax k_max);
SpectrumReal mode_pad(const SpectrumReal& s);
SpectrumComplex mode_crop(const SpectrumComplex& s, KMax k_max);
SpectrumComplex mode_pad(const SpectrumComplex& s);

// Per-mode weights W [Cout,Cin,2kx,2ky,2kz]:
//   out(k) = 1/2 [ W(k)(U(k)+U(-k)) + W(-k)(U(k)-U(-k)) ]
SpectrumReal hartley_conv_full(const SpectrumReal& s, ad::Var W);

// Shared weights W [Cout,Cin]: out(k) = W U(k) for every retained mode.
SpectrumReal hartley_conv_shared(const SpectrumReal& s, ad::Var W);

// out(k) = selu(W U(k)); with residual = true the applied matrix is I + W
// (identity path exact, Cout == Cin).
SpectrumReal hartley_conv_shared_nonlinear(const SpectrumReal& s, ad::Var W,
                                           bool residual = false);

// Shared complex weights (Wre + i Wim) [Cout,Cin], matrix-vector product per
// retained mode.
SpectrumComplex fourier_conv_shared(const SpectrumComplex& s, ad::Var Wre,
                                    ad::Var Wim);

// Per-mode complex weights [Cout,Cin,2kx,2ky,2kz] each.
SpectrumComplex fourier_conv_permode(const SpectrumComplex& s, ad::Var Wre,
                                     ad::Var Wim);

}  // namespace hnoseg::spectral
