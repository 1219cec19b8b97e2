#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ebms/cumhaz.hpp"

namespace ebms {

// State occupation probabilities on the uniform grid t_k = k * dt,
// k = 0..K: probs[state][k] = P(X(t_k) = state | X(0) = initial_state).
struct OccupancyGrid {
  int initial_state = 0;
  int K = 0;
  double dt = 0.0;
  std::vector<std::vector<double>> probs;  // [state][k]
  // largest amount by which a raw estimate left [0, 1] before clipping
  double clip_excess = 0.0;
  // set when t_max ran past the last observed hazard jump, where the
  // curves are flat extrapolations
  bool horizon_warning = false;

  double time(int k) const { return k * dt; }
};

// Sojourn-scale building blocks on the grid, for clock-reset tree
// models: survivor[i][k] is the probability of still being in state i a
// sojourn time t_k after entering it, and density[e][k] the probability
// that the stay ends during cell k via transition e.  Cell masses are
// split exactly: survivor[i][k] - survivor[i][k+1] equals the sum of
// density[e][k] over outbound transitions, so occupation probabilities
// telescope to one by construction.
struct SojournKernels {
  TransitionStructure structure;
  int K = 0;
  double dt = 0.0;
  bool horizon_warning = false;
  std::vector<std::vector<double>> survivor;      // [state][0..K]
  std::map<int, std::vector<double>> density;     // [trans][0..K-1]
};

SojournKernels discretize_kernels(const HazardBundle& bundle, int K,
                                  double t_max);

// Exact discrete convolution of the kernels along each root-to-state
// path (quadratic in K).
OccupancyGrid occupancy_direct(const SojournKernels& kernels,
                               int initial_state);

// Same quantity computed in the frequency domain.  Arrival kernels are
// truncated back to the grid after each stage -- the readout never
// looks past cell K, so this matches occupancy_direct to rounding
// error while every transform stays at one shared size.
OccupancyGrid occupancy_fft(const SojournKernels& kernels, int initial_state);

// Aalen-Johansen product-limit estimator on the global clock for
// acyclic structures; works with clock_forward bundles.
OccupancyGrid occupancy_aalen_johansen(const HazardBundle& bundle,
                                       int initial_state, int K, double t_max);

// Monte Carlo path sampler (both clocks).  Deterministic in
// (seed, n_paths) regardless of thread count: paths are drawn in fixed
// blocks with per-block substreams and integer counts are merged.
struct SampleOptions {
  int threads = 1;
  int block = 4096;
};

OccupancyGrid occupancy_sampled(const HazardBundle& bundle, int n_paths,
                                int initial_state, std::uint64_t seed, int K,
                                double t_max, const SampleOptions& opt = {});

// time,state_<name>... with one row per grid point
void write_occupancy_csv(const std::string& path, const OccupancyGrid& grid,
                         const TransitionStructure& s);

}  // namespace ebms
