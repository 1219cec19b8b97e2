#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ebms/coxfit.hpp"
#include "ebms/dataset.hpp"
#include "ebms/structure.hpp"

namespace ebms {

struct FitOptions {
  TimeScale scale = TimeScale::clock_reset;
  NewtonOptions newton{};
  // outer empirical-Bayes loop
  int max_outer = 50;
  double outer_tol = 1e-4;  // relative sigma2 change, absolute mu change
  double sigma2_init = 0.1;
  double sigma2_floor = 1e-6;
  double df_floor = 1e-3;
  // when true the group mean is refreshed before the variance in each
  // outer step; both orders share the same fixed points
  bool mu_before_sigma = true;
  // groups listed here keep the given variance, excluded from updates
  std::map<std::string, double> fixed_sigma2;
};

struct GroupEstimate {
  double mu = 0.0;
  double sigma2 = 0.0;
  double df = 0.0;
};

// Fitted multi-state model: coefficients on the (possibly expanded)
// covariate columns, prior-group summaries, and per-stratum baseline
// cumulative hazards at the all-zero covariate profile.
struct MultiStateFit {
  TimeScale scale = TimeScale::clock_reset;
  std::vector<ColumnInfo> columns;
  Eigen::VectorXd beta;
  std::vector<std::string> column_group;  // empty for unpenalized fits
  std::map<std::string, GroupEstimate> groups;
  bool converged = false;
  int iters = 0;  // outer iterations (penalized) or Newton iterations
  CoxSolution inner;
  std::map<int, int> transition_type;     // transition id -> covariate type
  std::map<int, int> transition_stratum;  // transition id -> stratum
  std::map<int, StepFunction> baselines;  // stratum -> cumulative hazard

  // inner product over the columns live for this transition; profile is
  // in the fitted (expanded) covariate space
  double linear_predictor(int trans, const std::vector<double>& profile) const;
};

// Empirical-Bayes ridge Cox fit.  Alternates a penalized Newton solve
// with moment updates of each group's prior mean (only for groups in
// estimated_mean_groups) and variance, where the effective degrees of
// freedom subtract the shrinkage spent on the group:
//   df_g = p_g - sum_{j in g} [(-H_pen)^{-1}]_{jj} / sigma2_g.
// Groups whose df collapses below df_floor raise DegenerateGroup.
MultiStateFit fit_empirical_bayes(const Dataset& d,
                                  const TransitionStructure& s,
                                  const PriorGrouping& grouping,
                                  const FitOptions& opt = {});

// Unpenalized (maximum partial likelihood) fit; same output shape with
// no prior groups
MultiStateFit fit_cox_mle(const Dataset& d, const TransitionStructure& s,
                          const FitOptions& opt = {});

// transition id -> exp(linear predictor) under the fit
std::map<int, double> relative_hazards(const MultiStateFit& fit,
                                       const std::vector<double>& profile);

nlohmann::ordered_json fit_to_json(const MultiStateFit& fit);

// Rebuilds a usable fit from the serialized coefficients plus the data
// that produced them (baselines are a deterministic function of both).
MultiStateFit fit_from_json(const nlohmann::ordered_json& j, const Dataset& d,
                            const TransitionStructure& s, TimeScale scale);

}  // namespace ebms
