#pragma once

#include <map>
#include <vector>

#include <Eigen/Dense>

#include "ebms/dataset.hpp"
#include "ebms/step_function.hpp"

namespace ebms {

// clock_forward: hazards live on the global time axis, rows enter the
// risk set at t_start (left truncation).  clock_reset: hazards live on
// the sojourn axis, every row enters at 0 and exits at `time`.
enum class TimeScale { clock_forward, clock_reset };

inline const char* time_scale_name(TimeScale s) {
  return s == TimeScale::clock_forward ? "clock_forward" : "clock_reset";
}

// Quadratic penalty -(1/2) sum_j precision[j] * (beta[j] - mean[j])^2.
// precision 0 turns the penalty off for that coordinate.
struct PenaltySpec {
  Eigen::VectorXd mean;
  Eigen::VectorXd precision;

  static PenaltySpec none(int p) {
    PenaltySpec s;
    s.mean = Eigen::VectorXd::Zero(p);
    s.precision = Eigen::VectorXd::Zero(p);
    return s;
  }
};

struct NewtonOptions {
  double tol = 1e-8;  // sup norm of the penalized gradient
  int max_iter = 50;
};

struct CoxSolution {
  Eigen::VectorXd beta;
  double loglik = 0.0;            // penalized log partial likelihood at beta
  double gradient_norm = 0.0;     // sup norm at beta
  Eigen::VectorXd inv_neg_hessian_diag;  // diag of (-H_pen)^{-1} at beta
  bool converged = false;
  int n_iter = 0;
};

// Prepared stratified Cox partial likelihood with Breslow tie handling.
// Rows are grouped by stratum and pre-sorted into deterministic total
// orders, so values, gradients and Hessians are bitwise independent of
// the input record permutation.  Covariate columns are centered
// internally; the partial likelihood is invariant under column shifts,
// so results need no back-transformation (the baseline estimator undoes
// the shift explicitly).
class PartialLikelihood {
 public:
  PartialLikelihood(const Dataset& d, TimeScale scale);

  int n_covariates() const { return p_; }
  int n_rows() const { return n_; }
  TimeScale scale() const { return scale_; }

  double value(const Eigen::VectorXd& beta, const PenaltySpec& pen) const;
  // returns the value; grad/hess are the penalized derivatives
  double value_grad_hess(const Eigen::VectorXd& beta, const PenaltySpec& pen,
                         Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const;

  // Breslow cumulative hazard per stratum at the all-zero covariate
  // profile (original, uncentered scale)
  std::map<int, StepFunction> breslow_baselines(const Eigen::VectorXd& beta) const;

 private:
  struct Stratum {
    // rows sorted by (exit, entry, id, trans): entry/exit on the active
    // scale, X the centered design
    std::vector<double> entry;
    std::vector<double> exit;
    Eigen::MatrixXd x;
    // row visit orders for the descending-time sweep
    std::vector<int> by_exit;   // descending exit
    std::vector<int> by_entry;  // descending entry
    // distinct event times ascending with tie counts and covariate sums
    std::vector<double> event_time;
    std::vector<int> event_count;
    Eigen::MatrixXd event_xsum;  // one row per event time
  };

  template <bool WithDerivs>
  double accumulate(const Eigen::VectorXd& beta, const PenaltySpec& pen,
                    Eigen::VectorXd* grad, Eigen::MatrixXd* hess) const;

  int p_ = 0;
  int n_ = 0;
  TimeScale scale_;
  Eigen::VectorXd center_;  // subtracted column means
  std::map<int, Stratum> strata_;
};

// Penalized Newton-Raphson with step halving.  Factorization failures
// are retried once with a small diagonal jitter, then reported as
// SingularHessian; running past max_iter yields converged == false
// rather than an exception.
CoxSolution newton_solve(const PartialLikelihood& pl, const PenaltySpec& pen,
                         const Eigen::VectorXd& init,
                         const NewtonOptions& opt = {});

}  // namespace ebms
