#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ebms/cumhaz.hpp"
#include "ebms/occupancy.hpp"

namespace ebms {

struct BenchEntry {
  std::string estimator;  // "fft", "direct" or "sampler"
  int n_paths = 0;        // sampler only
  int K = 0;
  double wall_ms = 0.0;
  // sup-norm distance to the large-sample reference curve; NaN for the
  // reference itself
  double sup_diff_vs_reference = 0.0;
};

struct BenchOptions {
  std::uint64_t seed = 7;
  int K = 10000;
  double t_max = 10.0;
  std::vector<int> sampler_sizes = {100, 1000, 10000};
  int reference_paths = 100000;
  int repeats = 3;  // median-of wall times for fft and the largest sampler
};

// Timing fixture: a four-state chain fitted without covariates on a
// simulated cohort, then every occupancy estimator run on the same
// hazard bundle.  Returns one entry per estimator plus the reference
// sampler.
std::vector<BenchEntry> run_benchmark(const BenchOptions& opt = {});

nlohmann::ordered_json bench_to_json(const std::vector<BenchEntry>& entries);

// convenience for tests: the bundle the benchmark times
HazardBundle benchmark_bundle(std::uint64_t seed);

}  // namespace ebms
