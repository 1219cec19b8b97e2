#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace ebms {

// Real FFT pair backed by FFTW.  Plans are cached per size behind a
// mutex; execution uses the new-array interface, so calls are safe from
// concurrent threads.  n must be even; pick it with good_fft_size.

// forward: n reals -> n/2 + 1 complex bins
std::vector<std::complex<double>> rfft(const std::vector<double>& x,
                                       std::size_t n);

// inverse of rfft, normalized by 1/n
std::vector<double> irfft(const std::vector<std::complex<double>>& spec,
                          std::size_t n);

std::size_t next_pow2(std::size_t n);

// smallest even 5-smooth (2^a 3^b 5^c) integer >= n
std::size_t good_fft_size(std::size_t n);

}  // namespace ebms
