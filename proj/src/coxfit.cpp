#include "ebms/coxfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ebms/errors.hpp"

namespace ebms {

namespace {

// deterministic total order; (id, trans) breaks remaining ties
struct RowKey {
  double primary;
  double secondary;
  const std::string* id;
  int trans;

  bool operator<(const RowKey& o) const {
    if (primary != o.primary) return primary < o.primary;
    if (secondary != o.secondary) return secondary < o.secondary;
    if (*id != *o.id) return *id < *o.id;
    return trans < o.trans;
  }
};

}  // namespace

PartialLikelihood::PartialLikelihood(const Dataset& d, TimeScale scale)
    : p_(d.n_covariates()), n_(static_cast<int>(d.records.size())), scale_(scale) {
  center_ = Eigen::VectorXd::Zero(p_);

  // bucket record indices by stratum in canonical (exit, entry, id,
  // trans) order
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < n_; ++i)
    groups[d.records[static_cast<std::size_t>(i)].stratum].push_back(i);

  auto entry_of = [&](const EventRecord& r) {
    return scale_ == TimeScale::clock_forward ? r.t_start : 0.0;
  };
  auto exit_of = [&](const EventRecord& r) {
    return scale_ == TimeScale::clock_forward ? r.t_stop : r.time;
  };

  for (auto& [key, idx] : groups) {
    (void)key;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      const auto& ra = d.records[static_cast<std::size_t>(a)];
      const auto& rb = d.records[static_cast<std::size_t>(b)];
      return RowKey{exit_of(ra), entry_of(ra), &ra.id, ra.trans} <
             RowKey{exit_of(rb), entry_of(rb), &rb.id, rb.trans};
    });
  }

  // column means summed in canonical (stratum, exit, entry, id, trans)
  // order, so the centering (and every downstream quantity) ignores
  // record permutations bit for bit
  if (n_ > 0 && p_ > 0) {
    for (auto& [key, idx] : groups) {
      (void)key;
      for (int i : idx)
        for (int j = 0; j < p_; ++j)
          center_[j] += d.records[static_cast<std::size_t>(i)]
                            .covariates[static_cast<std::size_t>(j)];
    }
    center_ /= static_cast<double>(n_);
  }

  for (auto& [key, idx] : groups) {
    Stratum st;
    const int m = static_cast<int>(idx.size());
    st.entry.resize(static_cast<std::size_t>(m));
    st.exit.resize(static_cast<std::size_t>(m));
    st.x.resize(m, p_);
    for (int i = 0; i < m; ++i) {
      const auto& r = d.records[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
      st.entry[static_cast<std::size_t>(i)] = entry_of(r);
      st.exit[static_cast<std::size_t>(i)] = exit_of(r);
      require(st.exit[static_cast<std::size_t>(i)] > st.entry[static_cast<std::size_t>(i)],
              ErrorKind::InconsistentInterval,
              "row for id " + r.id + " has nonpositive exposure");
      for (int j = 0; j < p_; ++j)
        st.x(i, j) = r.covariates[static_cast<std::size_t>(j)] - center_[j];
    }

    // canonical order is ascending by exit, so the descending-exit
    // visit order is its reverse; entry needs its own sort
    st.by_exit.resize(static_cast<std::size_t>(m));
    std::iota(st.by_exit.begin(), st.by_exit.end(), 0);
    std::reverse(st.by_exit.begin(), st.by_exit.end());
    st.by_entry = st.by_exit;
    std::stable_sort(st.by_entry.begin(), st.by_entry.end(), [&](int a, int b) {
      return st.entry[static_cast<std::size_t>(a)] > st.entry[static_cast<std::size_t>(b)];
    });

    // distinct event times with multiplicities and covariate sums
    for (int i = 0; i < m; ++i) {
      const auto& r = d.records[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
      if (r.status != 1) continue;
      double t = st.exit[static_cast<std::size_t>(i)];
      if (st.event_time.empty() || st.event_time.back() != t) {
        st.event_time.push_back(t);
        st.event_count.push_back(0);
      }
      ++st.event_count.back();
    }
    st.event_xsum = Eigen::MatrixXd::Zero(
        static_cast<Eigen::Index>(st.event_time.size()), p_);
    {
      int e = 0;
      for (int i = 0; i < m; ++i) {
        const auto& r = d.records[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
        if (r.status != 1) continue;
        while (st.event_time[static_cast<std::size_t>(e)] !=
               st.exit[static_cast<std::size_t>(i)])
          ++e;
        st.event_xsum.row(e) += st.x.row(i);
      }
    }
    strata_.emplace(key, std::move(st));
  }
}

// Descending-time sweep over one stratum.  Risk sums over
// {entry < t <= exit} are maintained incrementally: rows join when the
// sweep passes their exit and leave when it passes their entry.  Linear
// predictors are shifted by their stratum max so exp() cannot overflow;
// the shift cancels in every ratio and is added back to log S0.
template <bool WithDerivs>
double PartialLikelihood::accumulate(const Eigen::VectorXd& beta,
                                     const PenaltySpec& pen,
                                     Eigen::VectorXd* grad,
                                     Eigen::MatrixXd* hess) const {
  double value = 0.0;
  if (WithDerivs) {
    grad->setZero(p_);
    hess->setZero(p_, p_);
  }

  Eigen::VectorXd s1(p_);
  Eigen::MatrixXd s2;
  Eigen::VectorXd u(p_);
  if (WithDerivs) s2.setZero(p_, p_);

  for (const auto& [key, st] : strata_) {
    (void)key;
    const int m = static_cast<int>(st.entry.size());
    if (st.event_time.empty() || m == 0) continue;

    Eigen::VectorXd eta = st.x * beta;
    const double shift = eta.maxCoeff();
    Eigen::VectorXd w = (eta.array() - shift).exp();

    double s0 = 0.0;
    s1.setZero();
    if (WithDerivs) s2.setZero();
    int at_risk = 0;
    std::size_t a = 0, b = 0;

    for (int e = static_cast<int>(st.event_time.size()) - 1; e >= 0; --e) {
      const double t = st.event_time[static_cast<std::size_t>(e)];
      while (a < st.by_exit.size() &&
             st.exit[static_cast<std::size_t>(st.by_exit[a])] >= t) {
        const int r = st.by_exit[a++];
        const double wr = w[r];
        s0 += wr;
        if (WithDerivs) {
          s1.noalias() += wr * st.x.row(r).transpose();
          s2.noalias() += wr * (st.x.row(r).transpose() * st.x.row(r));
        }
        ++at_risk;
      }
      while (b < st.by_entry.size() &&
             st.entry[static_cast<std::size_t>(st.by_entry[b])] >= t) {
        const int r = st.by_entry[b++];
        const double wr = w[r];
        s0 -= wr;
        if (WithDerivs) {
          s1.noalias() -= wr * st.x.row(r).transpose();
          s2.noalias() -= wr * (st.x.row(r).transpose() * st.x.row(r));
        }
        --at_risk;
      }
      require(at_risk > 0 && s0 > 0.0, ErrorKind::EmptyRiskSet,
              "empty risk set at event time " + std::to_string(t));

      const double dt = st.event_count[static_cast<std::size_t>(e)];
      value += st.event_xsum.row(e).dot(beta) - dt * (std::log(s0) + shift);
      if (WithDerivs) {
        u = s1 / s0;
        grad->noalias() += st.event_xsum.row(e).transpose() - dt * u;
        hess->noalias() -= dt * (s2 / s0 - u * u.transpose());
      }
    }
  }

  if (pen.precision.size() > 0) {
    for (int j = 0; j < p_; ++j) {
      const double dev = beta[j] - pen.mean[j];
      value -= 0.5 * pen.precision[j] * dev * dev;
      if (WithDerivs) {
        (*grad)[j] -= pen.precision[j] * dev;
        (*hess)(j, j) -= pen.precision[j];
      }
    }
  }
  return value;
}

double PartialLikelihood::value(const Eigen::VectorXd& beta,
                                const PenaltySpec& pen) const {
  require(beta.size() == p_, ErrorKind::BadInput, "beta length mismatch");
  return accumulate<false>(beta, pen, nullptr, nullptr);
}

double PartialLikelihood::value_grad_hess(const Eigen::VectorXd& beta,
                                          const PenaltySpec& pen,
                                          Eigen::VectorXd& grad,
                                          Eigen::MatrixXd& hess) const {
  require(beta.size() == p_, ErrorKind::BadInput, "beta length mismatch");
  return accumulate<true>(beta, pen, &grad, &hess);
}

std::map<int, StepFunction> PartialLikelihood::breslow_baselines(
    const Eigen::VectorXd& beta) const {
  require(beta.size() == p_, ErrorKind::BadInput, "beta length mismatch");
  std::map<int, StepFunction> out;
  // centered risk sums describe exp((x - c)'beta); the baseline at the
  // all-zero original profile divides by exp(c'beta) once
  const double center_lp = center_.dot(beta);

  for (const auto& [key, st] : strata_) {
    StepFunction fn;
    const int m = static_cast<int>(st.entry.size());
    const int ne = static_cast<int>(st.event_time.size());
    if (ne > 0) {
      Eigen::VectorXd eta = st.x * beta;
      const double shift = eta.maxCoeff();
      Eigen::VectorXd w = (eta.array() - shift).exp();
      std::vector<double> s0_at_event(static_cast<std::size_t>(ne));
      double s0 = 0.0;
      int at_risk = 0;
      std::size_t a = 0, b = 0;
      for (int e = ne - 1; e >= 0; --e) {
        const double t = st.event_time[static_cast<std::size_t>(e)];
        while (a < st.by_exit.size() &&
               st.exit[static_cast<std::size_t>(st.by_exit[a])] >= t)
          s0 += w[st.by_exit[a++]], ++at_risk;
        while (b < st.by_entry.size() &&
               st.entry[static_cast<std::size_t>(st.by_entry[b])] >= t)
          s0 -= w[st.by_entry[b++]], --at_risk;
        require(at_risk > 0 && s0 > 0.0, ErrorKind::EmptyRiskSet,
                "empty risk set at event time " + std::to_string(t));
        s0_at_event[static_cast<std::size_t>(e)] = s0;
      }
      for (int e = 0; e < ne; ++e) {
        const double dt = st.event_count[static_cast<std::size_t>(e)];
        const double denom =
            s0_at_event[static_cast<std::size_t>(e)] * std::exp(shift + center_lp);
        fn.add_jump(st.event_time[static_cast<std::size_t>(e)], dt / denom);
      }
    }
    (void)m;
    out.emplace(key, std::move(fn));
  }
  return out;
}

CoxSolution newton_solve(const PartialLikelihood& pl, const PenaltySpec& pen,
                         const Eigen::VectorXd& init, const NewtonOptions& opt) {
  const int p = pl.n_covariates();
  require(init.size() == p, ErrorKind::BadInput, "initial beta length mismatch");
  require(pen.mean.size() == p && pen.precision.size() == p, ErrorKind::BadInput,
          "penalty dimension mismatch");

  CoxSolution sol;
  sol.beta = init;
  sol.inv_neg_hessian_diag = Eigen::VectorXd::Zero(p);
  if (p == 0) {
    sol.loglik = pl.value(sol.beta, pen);
    sol.converged = true;
    return sol;
  }

  Eigen::VectorXd grad(p);
  Eigen::MatrixXd hess(p, p);
  double val = pl.value_grad_hess(sol.beta, pen, grad, hess);

  // Cholesky of -H with one jittered retry
  auto factor = [&](const Eigen::MatrixXd& h) {
    Eigen::LLT<Eigen::MatrixXd> llt((-h).eval());
    if (llt.info() != Eigen::Success) {
      Eigen::MatrixXd jittered = -h;
      jittered.diagonal().array() += 1e-10;
      llt.compute(jittered);
      require(llt.info() == Eigen::Success, ErrorKind::SingularHessian,
              "penalized Hessian is singular");
    }
    return llt;
  };

  for (int iter = 0; iter < opt.max_iter; ++iter) {
    sol.gradient_norm = grad.lpNorm<Eigen::Infinity>();
    if (sol.gradient_norm < opt.tol) {
      sol.converged = true;
      break;
    }
    auto llt = factor(hess);
    Eigen::VectorXd step = llt.solve(grad);

    // step halving: accept the first candidate that does not decrease
    // the objective (NaN counts as a decrease)
    double t = 1.0;
    Eigen::VectorXd cand;
    const double slack = 1e-12 * (1.0 + std::abs(val));
    for (int h = 0; h < 20; ++h, t *= 0.5) {
      cand = sol.beta + t * step;
      const double v = pl.value(cand, pen);
      if (v >= val - slack && std::isfinite(v)) break;
    }
    sol.beta = cand;
    val = pl.value_grad_hess(sol.beta, pen, grad, hess);
    sol.n_iter = iter + 1;
  }
  if (!sol.converged) {
    sol.gradient_norm = grad.lpNorm<Eigen::Infinity>();
    sol.converged = sol.gradient_norm < opt.tol;
  }

  sol.loglik = val;
  auto llt = factor(hess);
  sol.inv_neg_hessian_diag =
      llt.solve(Eigen::MatrixXd::Identity(p, p)).diagonal();
  return sol;
}

}  // namespace ebms
