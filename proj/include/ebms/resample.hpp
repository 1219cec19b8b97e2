#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ebms/cumhaz.hpp"
#include "ebms/empbayes.hpp"
#include "ebms/occupancy.hpp"

namespace ebms {

// type-7 sample quantile (linear interpolation between order statistics)
double quantile_type7(std::vector<double> values, double q);

struct BootOptions {
  int B = 200;
  double level = 0.95;
  std::uint64_t seed = 1;
  int threads = 1;
  bool do_cumhaz = false;
  bool do_occupancy = false;
  int K = 500;          // percentile-band grid
  double t_max = 0.0;   // 0: last jump of the full-data bundle
  int initial_state = -1;  // -1: structure root
};

// pointwise percentile band on the shared grid
struct Band {
  std::vector<double> point;
  std::vector<double> lower;
  std::vector<double> upper;
};

struct BootstrapResult {
  int B = 0;
  double level = 0.95;
  int n_failed = 0;  // non-converged or error-raising replicates
  int K = 0;
  double dt = 0.0;

  std::vector<std::string> coef_names;
  std::vector<double> coef_point, coef_lower, coef_upper;
  // per-replicate coefficient draws (failed replicates all-NaN); row
  // b is replicate b, column order matches coef_names
  std::vector<std::vector<double>> coef_draws;

  std::map<int, Band> cumhaz;    // per transition, when requested
  std::vector<Band> occupancy;   // per state, when requested
};

// Nonparametric bootstrap of the full shrinkage pipeline: patients are
// resampled with replacement (duplicates count as distinct patients),
// the fit plus requested downstream curves are recomputed per
// replicate, and percentile intervals are taken over the replicates
// that converged.  Deterministic in (seed, B) regardless of threads.
BootstrapResult bootstrap_intervals(const Dataset& d,
                                    const TransitionStructure& s,
                                    const PriorGrouping& grouping,
                                    const FitOptions& fopt,
                                    const std::vector<PatientRow>& patient,
                                    const BootOptions& opt);

// Leave-one-out predicted occupancy: each patient's curves come from a
// fit on everyone else, evaluated at their own covariates.
struct LooOptions {
  int K = 500;
  double t_max = 0.0;      // 0: last jump of the full-data bundle
  int initial_state = -1;  // -1: structure root
  int threads = 1;
};

struct LooResult {
  int K = 0;
  double dt = 0.0;
  std::vector<std::string> ids;                 // processed patients
  std::map<std::string, OccupancyGrid> grids;   // successes
  std::map<std::string, std::string> failures;  // id -> reason
};

LooResult loo_predictions(const Dataset& d, const TransitionStructure& s,
                          const PriorGrouping& grouping, const FitOptions& fopt,
                          const LooOptions& opt = {});

}  // namespace ebms
