#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ebms/dataset.hpp"
#include "ebms/step_function.hpp"
#include "ebms/structure.hpp"

namespace ebms {

// Piecewise-constant hazard rate on [0, inf); rates[i] applies on
// [breaks[i], breaks[i+1]) with breaks[0] == 0.
struct PiecewiseRate {
  std::vector<double> breaks{0.0};
  std::vector<double> rates{1.0};

  static PiecewiseRate constant(double r) {
    PiecewiseRate p;
    p.rates = {r};
    return p;
  }

  double cumulative(double t) const;
  // smallest t with cumulative(t) >= target; +inf if the total mass
  // stays below target
  double invert(double target) const;
};

// Cohort generator for tree-structured clock-reset models: dichotomous
// covariates, proportional transition hazards on the sojourn scale,
// optional administrative and random censoring.
struct SimSpec {
  TransitionStructure structure;
  int n_patients = 100;
  int n_covariates = 10;
  std::vector<PiecewiseRate> baseline;      // per transition; default rate 1
  std::vector<Eigen::VectorXd> true_beta;   // per transition; empty -> auto
  // auto coefficients: +-beta_scale * sqrt(10 / p) with random signs,
  // keeping Var(beta'Z) independent of p
  double beta_scale = 0.3;
  double c_admin = std::numeric_limits<double>::infinity();
  double censor_rate = 0.0;  // extra exponential censoring; 0 = none
  std::uint64_t seed = 1;
};

// the per-transition coefficient vectors the generator will use
std::vector<Eigen::VectorXd> resolve_true_beta(const SimSpec& spec);

// long-format dataset with covariate columns x1..xp (unexpanded)
Dataset simulate_cohort(const SimSpec& spec);

// exact cumulative hazard of transition `trans` for covariate vector z
// under the generator, evaluated as a step function on a K-cell grid
// (used to build discretized ground truth)
StepFunction true_cumhaz_on_grid(const SimSpec& spec,
                                 const std::vector<Eigen::VectorXd>& beta,
                                 int trans, const Eigen::VectorXd& z, int K,
                                 double t_max);

// ---------------------------------------------------------------------
// simulation study: shrinkage fits vs unpenalized fits vs a null model

TransitionStructure study_structure(const std::string& name);
// the three named layouts on four states
std::vector<std::string> study_structure_names();

struct StudyScenario {
  std::string structure_name;  // linear | competing_risks | m_structure
  int n = 100;
  int p = 10;
};

struct StudyRow {
  std::string target;  // coefficients | relative_hazards | occupancy
  std::string method;  // eb | standard | null
  std::string structure_name;
  int n = 0;
  int p = 0;
  int replicate = 0;
  double error = 0.0;  // NaN when na
  bool na = false;
};

struct StudyOptions {
  int replicates = 50;
  std::uint64_t seed = 1;
  int threads = 1;
  double c_admin = 3.0;
  double beta_scale = 0.3;
  // evaluation grid: t_max = eval_points * 0.5 * (batch median event
  // sojourn), probed at eval_points equally spaced times
  int K = 3500;
  int eval_points = 7;
  int truth_refine = 4;     // truth grid is truth_refine * K cells
  double na_beta_bound = 15.0;  // |beta| above this counts as divergence
};

std::vector<StudyRow> run_study(const std::vector<StudyScenario>& scenarios,
                                const StudyOptions& opt = {});

// a,m,G,n,p,replicate,error,na_flag with error printed as NA for failed
// replicates
void write_study_csv(const std::string& path, const std::vector<StudyRow>& rows);

// median of |rows| errors over non-NA replicates for one cell; +inf when
// every replicate failed
double study_median_error(const std::vector<StudyRow>& rows,
                          const std::string& target, const std::string& method,
                          const std::string& structure_name, int n, int p);

// share of NA replicates in one (method, structure, n, p) cell
double study_na_rate(const std::vector<StudyRow>& rows,
                     const std::string& method,
                     const std::string& structure_name, int n, int p);

}  // namespace ebms
