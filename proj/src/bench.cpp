#include "ebms/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "ebms/empbayes.hpp"
#include "ebms/simulate.hpp"

namespace ebms {

namespace {

double sup_diff(const OccupancyGrid& a, const OccupancyGrid& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.probs.size(); ++i)
    for (std::size_t k = 0; k < a.probs[i].size(); ++k)
      m = std::max(m, std::abs(a.probs[i][k] - b.probs[i][k]));
  return m;
}

template <typename F>
double time_median_ms(F&& f, int repeats) {
  std::vector<double> times;
  for (int r = 0; r < std::max(1, repeats); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace

HazardBundle benchmark_bundle(std::uint64_t seed) {
  SimSpec spec;
  spec.structure = study_structure("linear");
  spec.n_patients = 1000;
  spec.n_covariates = 0;
  spec.baseline = {PiecewiseRate::constant(1.0), PiecewiseRate::constant(0.7),
                   PiecewiseRate::constant(0.5)};
  spec.c_admin = 6.0;
  spec.seed = seed;
  Dataset cohort = simulate_cohort(spec);
  FitOptions fopt;
  fopt.scale = TimeScale::clock_reset;
  MultiStateFit fit = fit_cox_mle(cohort, spec.structure, fopt);
  return baseline_hazards(fit, spec.structure);
}

std::vector<BenchEntry> run_benchmark(const BenchOptions& opt) {
  HazardBundle bundle = benchmark_bundle(opt.seed);
  const int init = bundle.structure.root();
  const int K = opt.K;

  std::vector<BenchEntry> entries;

  OccupancyGrid reference;
  {
    BenchEntry e;
    e.estimator = "sampler";
    e.n_paths = opt.reference_paths;
    e.K = K;
    const auto t0 = std::chrono::steady_clock::now();
    reference = occupancy_sampled(bundle, opt.reference_paths, init,
                                  opt.seed + 1, K, opt.t_max);
    const auto t1 = std::chrono::steady_clock::now();
    e.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    e.sup_diff_vs_reference = std::numeric_limits<double>::quiet_NaN();
    entries.push_back(e);
  }

  for (int n : opt.sampler_sizes) {
    BenchEntry e;
    e.estimator = "sampler";
    e.n_paths = n;
    e.K = K;
    OccupancyGrid occ;
    const int reps = n == opt.sampler_sizes.back() ? opt.repeats : 1;
    e.wall_ms = time_median_ms(
        [&]() {
          occ = occupancy_sampled(bundle, n, init, opt.seed + 2, K, opt.t_max);
        },
        reps);
    e.sup_diff_vs_reference = sup_diff(occ, reference);
    entries.push_back(e);
  }

  {
    BenchEntry e;
    e.estimator = "fft";
    e.K = K;
    OccupancyGrid occ;
    e.wall_ms = time_median_ms(
        [&]() {
          occ = occupancy_fft(discretize_kernels(bundle, K, opt.t_max), init);
        },
        opt.repeats);
    e.sup_diff_vs_reference = sup_diff(occ, reference);
    entries.push_back(e);
  }
  return entries;
}

nlohmann::ordered_json bench_to_json(const std::vector<BenchEntry>& entries) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["estimator"] = e.estimator;
    if (e.estimator == "sampler") j["n_paths"] = e.n_paths;
    j["K"] = e.K;
    j["wall_ms"] = e.wall_ms;
    if (std::isnan(e.sup_diff_vs_reference))
      j["sup_diff_vs_reference"] = nullptr;
    else
      j["sup_diff_vs_reference"] = e.sup_diff_vs_reference;
    arr.push_back(j);
  }
  return arr;
}

}  // namespace ebms
