#include "ebms/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <mutex>

#include "ebms/errors.hpp"

namespace ebms {

namespace {

std::mutex plan_mutex;
std::map<std::size_t, fftw_plan> fwd_plans;
std::map<std::size_t, fftw_plan> inv_plans;

// Plan creation is not thread safe in FFTW; execution with new arrays
// is.  FFTW_UNALIGNED keeps the cached plan valid for whatever buffers
// std::vector hands us.
fftw_plan plan_for(std::size_t n, bool forward) {
  std::lock_guard<std::mutex> lock(plan_mutex);
  auto& cache = forward ? fwd_plans : inv_plans;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  std::vector<double> re(n);
  std::vector<std::complex<double>> cx(n / 2 + 1);
  fftw_plan plan;
  if (forward)
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), re.data(),
                                reinterpret_cast<fftw_complex*>(cx.data()),
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
  else
    plan = fftw_plan_dft_c2r_1d(static_cast<int>(n),
                                reinterpret_cast<fftw_complex*>(cx.data()),
                                re.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  require(plan != nullptr, ErrorKind::BadInput, "FFTW failed to plan");
  cache.emplace(n, plan);
  return plan;
}

// per-thread staging buffers so repeated transforms do not churn the
// allocator
thread_local std::vector<double> scratch_real;
thread_local std::vector<std::complex<double>> scratch_cplx;

}  // namespace

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::size_t good_fft_size(std::size_t n) {
  // smallest even 5-smooth integer >= n; FFTW's mixed-radix kernels
  // handle these at power-of-two speed with far less padding
  if (n < 2) return 2;
  std::size_t best = next_pow2(n);
  for (std::size_t p5 = 1; p5 < best; p5 *= 5)
    for (std::size_t p35 = p5; p35 < best; p35 *= 3) {
      std::size_t c = p35;
      while (c < n) c *= 2;
      if (c % 2) c *= 2;
      best = std::min(best, c);
    }
  return best;
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x,
                                       std::size_t n) {
  require(n > 0 && n % 2 == 0, ErrorKind::BadInput, "FFT size must be even");
  require(x.size() <= n, ErrorKind::BadInput, "FFT input longer than n");
  fftw_plan plan = plan_for(n, true);
  scratch_real.assign(n, 0.0);
  std::copy(x.begin(), x.end(), scratch_real.begin());
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_execute_dft_r2c(plan, scratch_real.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& spec,
                          std::size_t n) {
  require(n > 0 && n % 2 == 0, ErrorKind::BadInput, "FFT size must be even");
  require(spec.size() == n / 2 + 1, ErrorKind::BadInput,
          "spectrum length must be n/2 + 1");
  fftw_plan plan = plan_for(n, false);
  // c2r destroys its input; stage a copy
  scratch_cplx.assign(spec.begin(), spec.end());
  std::vector<double> out(n);
  fftw_execute_dft_c2r(plan, reinterpret_cast<fftw_complex*>(scratch_cplx.data()),
                       out.data());
  const double scale = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= scale;
  return out;
}

}  // namespace ebms
