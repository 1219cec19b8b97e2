#include "ebms/empbayes.hpp"

#include <algorithm>
#include <cmath>

#include "ebms/errors.hpp"

namespace ebms {

namespace {

void attach_transition_metadata(MultiStateFit& fit, const Dataset& d,
                                const TransitionStructure& s) {
  fit.transition_type = d.transition_type;
  fit.transition_stratum = transition_strata(d);
  (void)s;
}

}  // namespace

double MultiStateFit::linear_predictor(int trans,
                                       const std::vector<double>& profile) const {
  require(profile.size() == columns.size(), ErrorKind::BadInput,
          "profile length does not match fitted columns");
  auto it = transition_type.find(trans);
  const int type = it == transition_type.end() ? 0 : it->second;
  double lp = 0.0;
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (columns[j].type == 0 || columns[j].type == type)
      lp += beta[static_cast<Eigen::Index>(j)] * profile[j];
  return lp;
}

MultiStateFit fit_empirical_bayes(const Dataset& d, const TransitionStructure& s,
                                  const PriorGrouping& grouping,
                                  const FitOptions& opt) {
  const int p = d.n_covariates();
  require(static_cast<int>(grouping.column_group.size()) == p,
          ErrorKind::BadInput, "grouping does not cover the covariate columns");
  validate_dataset(d, s);

  PartialLikelihood pl(d, opt.scale);
  const std::vector<int> gidx = grouping.column_group_index();
  const int G = grouping.n_groups();

  std::vector<int> group_size(static_cast<std::size_t>(G), 0);
  for (int g : gidx) ++group_size[static_cast<std::size_t>(g)];
  for (int g = 0; g < G; ++g)
    require(group_size[static_cast<std::size_t>(g)] > 0, ErrorKind::BadInput,
            "prior group '" + grouping.group_names[static_cast<std::size_t>(g)] +
                "' has no columns");

  std::vector<bool> update_sigma(static_cast<std::size_t>(G), true);
  std::vector<bool> update_mu(static_cast<std::size_t>(G), false);
  std::vector<double> mu(static_cast<std::size_t>(G), 0.0);
  std::vector<double> sigma2(static_cast<std::size_t>(G), opt.sigma2_init);
  std::vector<double> df(static_cast<std::size_t>(G), 0.0);
  for (int g = 0; g < G; ++g) {
    const std::string& name = grouping.group_names[static_cast<std::size_t>(g)];
    if (auto it = opt.fixed_sigma2.find(name); it != opt.fixed_sigma2.end()) {
      update_sigma[static_cast<std::size_t>(g)] = false;
      sigma2[static_cast<std::size_t>(g)] = it->second;
      require(it->second > 0.0, ErrorKind::BadInput,
              "fixed variance for group '" + name + "' must be positive");
    }
    if (grouping.estimated_mean_groups.count(name))
      update_mu[static_cast<std::size_t>(g)] = true;
  }

  MultiStateFit fit;
  fit.scale = opt.scale;
  fit.columns = d.columns;
  fit.column_group = grouping.column_group;
  fit.beta = Eigen::VectorXd::Zero(p);

  PenaltySpec pen = PenaltySpec::none(p);
  bool anything_updates =
      std::any_of(update_sigma.begin(), update_sigma.end(), [](bool b) { return b; }) ||
      std::any_of(update_mu.begin(), update_mu.end(), [](bool b) { return b; });

  for (int outer = 0; outer < opt.max_outer; ++outer) {
    for (int j = 0; j < p; ++j) {
      const int g = gidx[static_cast<std::size_t>(j)];
      pen.mean[j] = mu[static_cast<std::size_t>(g)];
      pen.precision[j] = 1.0 / sigma2[static_cast<std::size_t>(g)];
    }
    fit.inner = newton_solve(pl, pen, fit.beta, opt.newton);
    fit.beta = fit.inner.beta;
    fit.iters = outer + 1;
    if (!fit.inner.converged) {
      fit.converged = false;
      break;
    }

    // group moments of the current posterior mode
    std::vector<double> sum_beta(static_cast<std::size_t>(G), 0.0);
    std::vector<double> sum_v(static_cast<std::size_t>(G), 0.0);
    for (int j = 0; j < p; ++j) {
      const int g = gidx[static_cast<std::size_t>(j)];
      sum_beta[static_cast<std::size_t>(g)] += fit.beta[j];
      sum_v[static_cast<std::size_t>(g)] += fit.inner.inv_neg_hessian_diag[j];
    }

    double delta = 0.0;
    std::vector<double> mu_new = mu;
    for (int g = 0; g < G; ++g)
      if (update_mu[static_cast<std::size_t>(g)])
        mu_new[static_cast<std::size_t>(g)] =
            sum_beta[static_cast<std::size_t>(g)] /
            group_size[static_cast<std::size_t>(g)];

    const std::vector<double>& mu_for_sigma = opt.mu_before_sigma ? mu_new : mu;
    for (int g = 0; g < G; ++g) {
      // shrinkage-corrected degrees of freedom at the current variance
      df[static_cast<std::size_t>(g)] =
          group_size[static_cast<std::size_t>(g)] -
          sum_v[static_cast<std::size_t>(g)] / sigma2[static_cast<std::size_t>(g)];
      if (!update_sigma[static_cast<std::size_t>(g)]) continue;
      require(df[static_cast<std::size_t>(g)] > opt.df_floor,
              ErrorKind::DegenerateGroup,
              "group '" + grouping.group_names[static_cast<std::size_t>(g)] +
                  "' has no effective degrees of freedom");
      double ss = 0.0;
      for (int j = 0; j < p; ++j)
        if (gidx[static_cast<std::size_t>(j)] == g) {
          const double dev = fit.beta[j] - mu_for_sigma[static_cast<std::size_t>(g)];
          ss += dev * dev;
        }
      const double next =
          std::max(opt.sigma2_floor, ss / df[static_cast<std::size_t>(g)]);
      delta = std::max(delta, std::abs(next - sigma2[static_cast<std::size_t>(g)]) /
                                  std::max(sigma2[static_cast<std::size_t>(g)],
                                           opt.sigma2_floor));
      sigma2[static_cast<std::size_t>(g)] = next;
    }
    for (int g = 0; g < G; ++g)
      if (update_mu[static_cast<std::size_t>(g)]) {
        delta = std::max(delta, std::abs(mu_new[static_cast<std::size_t>(g)] -
                                         mu[static_cast<std::size_t>(g)]));
        mu[static_cast<std::size_t>(g)] = mu_new[static_cast<std::size_t>(g)];
      }

    if (!anything_updates || delta < opt.outer_tol) {
      fit.converged = true;
      break;
    }
  }

  for (int g = 0; g < G; ++g)
    fit.groups[grouping.group_names[static_cast<std::size_t>(g)]] = GroupEstimate{
        mu[static_cast<std::size_t>(g)], sigma2[static_cast<std::size_t>(g)],
        df[static_cast<std::size_t>(g)]};
  fit.baselines = pl.breslow_baselines(fit.beta);
  attach_transition_metadata(fit, d, s);
  return fit;
}

MultiStateFit fit_cox_mle(const Dataset& d, const TransitionStructure& s,
                          const FitOptions& opt) {
  validate_dataset(d, s);
  PartialLikelihood pl(d, opt.scale);
  MultiStateFit fit;
  fit.scale = opt.scale;
  fit.columns = d.columns;
  fit.inner = newton_solve(pl, PenaltySpec::none(pl.n_covariates()),
                           Eigen::VectorXd::Zero(pl.n_covariates()), opt.newton);
  fit.beta = fit.inner.beta;
  fit.converged = fit.inner.converged;
  fit.iters = fit.inner.n_iter;
  fit.baselines = pl.breslow_baselines(fit.beta);
  attach_transition_metadata(fit, d, s);
  return fit;
}

std::map<int, double> relative_hazards(const MultiStateFit& fit,
                                       const std::vector<double>& profile) {
  std::map<int, double> out;
  for (const auto& [trans, type] : fit.transition_type)
    out[trans] = std::exp(fit.linear_predictor(trans, profile));
  if (out.empty())
    for (const auto& [trans, stratum] : fit.transition_stratum)
      out[trans] = std::exp(fit.linear_predictor(trans, profile));
  return out;
}

nlohmann::ordered_json fit_to_json(const MultiStateFit& fit) {
  nlohmann::ordered_json j;
  j["beta"] = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < fit.columns.size(); ++k)
    j["beta"][fit.columns[k].name] = fit.beta[static_cast<Eigen::Index>(k)];
  j["groups"] = nlohmann::ordered_json::object();
  for (const auto& [name, g] : fit.groups)
    j["groups"][name] = {{"mu", g.mu}, {"sigma2", g.sigma2}, {"df", g.df}};
  j["converged"] = fit.converged;
  j["iters"] = fit.iters;
  return j;
}

MultiStateFit fit_from_json(const nlohmann::ordered_json& j, const Dataset& d,
                            const TransitionStructure& s, TimeScale scale) {
  require(j.contains("beta"), ErrorKind::BadInput, "fit json lacks 'beta'");
  validate_dataset(d, s);
  MultiStateFit fit;
  fit.scale = scale;
  fit.columns = d.columns;
  fit.beta = Eigen::VectorXd::Zero(d.n_covariates());
  for (const auto& [name, value] : j.at("beta").items()) {
    int idx = d.column_index(name);
    require(idx >= 0, ErrorKind::MissingColumn,
            "fit refers to unknown column '" + name + "'");
    fit.beta[idx] = value.get<double>();
  }
  if (j.contains("groups"))
    for (const auto& [name, g] : j.at("groups").items())
      fit.groups[name] = GroupEstimate{g.value("mu", 0.0), g.value("sigma2", 0.0),
                                       g.value("df", 0.0)};
  fit.converged = j.value("converged", true);
  fit.iters = j.value("iters", 0);
  PartialLikelihood pl(d, scale);
  fit.baselines = pl.breslow_baselines(fit.beta);
  attach_transition_metadata(fit, d, s);
  return fit;
}

}  // namespace ebms
