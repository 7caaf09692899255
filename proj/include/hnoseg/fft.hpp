// Mixed-size FFT backend and the multidimensional cas transform built on it.
//
// Power-of-two lengths use iterative radix-2 Cooley-Tukey; other lengths
// fall back to direct O(n^2) evaluation (grids here are small composites, no
// Bluestein needed). The 3D Hartley transform is computed per channel as
// Real - Imag of the 3D DFT, which is the convention under which the
// frequency-negation identities hold with componentwise mod-N indices.

#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "hnoseg/tensor.hpp"

namespace hnoseg::fft {

// In-place 1D transform, unnormalized. inverse=true uses e^{+i...}.
void transform(std::complex<double>* a, std::size_t n, bool inverse);

// 3D DFT of one real scalar field [X,Y,Z], unnormalized, forward sign.
std::vector<std::complex<double>> dft3_real(const double* x, std::size_t nx,
                                            std::size_t ny, std::size_t nz);

// Channelwise 3D cas transform of [C,X,Y,Z]. If normalize, divides by
// X*Y*Z (the forward DHT); otherwise unnormalized (the inverse DHT).
Tensor dht3(const Tensor& x, bool normalize);

}  // namespace hnoseg::fft
