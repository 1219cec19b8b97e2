#include "ebms/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <thread>

#include "ebms/cumhaz.hpp"
#include "ebms/empbayes.hpp"
#include "ebms/errors.hpp"
#include "ebms/occupancy.hpp"
#include "ebms/rng.hpp"

namespace ebms {

namespace {

constexpr std::uint64_t kSaltBeta = 0x62657461ULL;      // coefficient signs
constexpr std::uint64_t kSaltPatient = 0x70617468ULL;   // patient streams
constexpr std::uint64_t kSaltScenario = 0x7363656eULL;  // per-scenario seeds
constexpr std::uint64_t kSaltReplicate = 0x72657065ULL;
constexpr std::uint64_t kSaltProfile = 0x6f6f73ULL;     // held-out profile

std::string format_double(double v) {
  char buf[40];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

}  // namespace

double PiecewiseRate::cumulative(double t) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    const double lo = breaks[i];
    if (t <= lo) break;
    const double hi =
        i + 1 < breaks.size() ? std::min(breaks[i + 1], t) : t;
    acc += rates[i] * (hi - lo);
  }
  return acc;
}

double PiecewiseRate::invert(double target) const {
  if (target <= 0.0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    const double lo = breaks[i];
    const bool last = i + 1 >= breaks.size();
    const double len = last ? std::numeric_limits<double>::infinity()
                            : breaks[i + 1] - lo;
    if (rates[i] > 0.0) {
      const double gain = rates[i] * len;
      if (acc + gain >= target) return lo + (target - acc) / rates[i];
      acc += gain;
    }
  }
  return std::numeric_limits<double>::infinity();
}

std::vector<Eigen::VectorXd> resolve_true_beta(const SimSpec& spec) {
  const int T = spec.structure.n_transitions();
  const int p = spec.n_covariates;
  if (!spec.true_beta.empty()) {
    require(static_cast<int>(spec.true_beta.size()) == T, ErrorKind::BadInput,
            "true_beta needs one vector per transition");
    for (const auto& b : spec.true_beta)
      require(b.size() == p, ErrorKind::BadInput,
              "true_beta vectors must have length p");
    return spec.true_beta;
  }
  std::vector<Eigen::VectorXd> beta(static_cast<std::size_t>(T));
  const double mag = spec.beta_scale * std::sqrt(10.0 / std::max(1, p));
  for (int t = 0; t < T; ++t) {
    Rng rng(spec.seed, static_cast<std::uint64_t>(t + 1), kSaltBeta);
    beta[static_cast<std::size_t>(t)] = Eigen::VectorXd(p);
    for (int j = 0; j < p; ++j)
      beta[static_cast<std::size_t>(t)][j] = rng.bernoulli(0.5) ? mag : -mag;
  }
  return beta;
}

Dataset simulate_cohort(const SimSpec& spec) {
  const TransitionStructure& s = spec.structure;
  require(s.is_tree(), ErrorKind::NotTree, "the generator needs a tree");
  require(spec.n_patients > 0 && spec.n_covariates >= 0, ErrorKind::BadInput,
          "bad cohort request");
  const int T = s.n_transitions();
  std::vector<PiecewiseRate> base = spec.baseline;
  if (base.empty())
    base.assign(static_cast<std::size_t>(T), PiecewiseRate::constant(1.0));
  require(static_cast<int>(base.size()) == T, ErrorKind::BadInput,
          "baseline needs one rate function per transition");
  const auto beta = resolve_true_beta(spec);

  Dataset d;
  for (int j = 1; j <= spec.n_covariates; ++j)
    d.columns.push_back({"x" + std::to_string(j), 0});

  for (int i = 0; i < spec.n_patients; ++i) {
    Rng rng(spec.seed, static_cast<std::uint64_t>(i), kSaltPatient);
    std::vector<double> z(static_cast<std::size_t>(spec.n_covariates));
    Eigen::VectorXd zv(spec.n_covariates);
    for (int j = 0; j < spec.n_covariates; ++j) {
      z[static_cast<std::size_t>(j)] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      zv[j] = z[static_cast<std::size_t>(j)];
    }
    double censor = spec.c_admin;
    if (spec.censor_rate > 0.0)
      censor = std::min(censor, rng.exponential(spec.censor_rate));

    int state = s.root();
    double t = 0.0;
    const std::string id = std::to_string(i + 1);
    for (;;) {
      const auto& outs = s.out_transitions(state);
      if (outs.empty()) break;
      // competing sojourn draws, one per outbound transition
      double best = std::numeric_limits<double>::infinity();
      int winner = 0;
      for (int e : outs) {
        const double lp = beta[static_cast<std::size_t>(e - 1)].dot(zv);
        const double draw = rng.exponential(1.0);
        const double sojourn =
            base[static_cast<std::size_t>(e - 1)].invert(draw * std::exp(-lp));
        if (t + sojourn < best) {
          best = t + sojourn;
          winner = e;
        }
      }
      const double stop = std::min(best, censor);
      if (stop > t) {
        for (int e : outs) {
          EventRecord r;
          r.id = id;
          r.from = state;
          r.to = s.transition(e).to;
          r.trans = e;
          r.t_start = t;
          r.t_stop = stop;
          r.time = stop - t;
          r.status = (best <= censor && e == winner) ? 1 : 0;
          r.stratum = e;
          r.covariates = z;
          d.records.push_back(std::move(r));
        }
      }
      if (best <= censor && std::isfinite(best)) {
        state = s.transition(winner).to;
        t = best;
      } else {
        break;
      }
    }
  }
  validate_dataset(d, s);
  return d;
}

StepFunction true_cumhaz_on_grid(const SimSpec& spec,
                                 const std::vector<Eigen::VectorXd>& beta,
                                 int trans, const Eigen::VectorXd& z, int K,
                                 double t_max) {
  std::vector<PiecewiseRate> base = spec.baseline;
  if (base.empty())
    base.assign(static_cast<std::size_t>(spec.structure.n_transitions()),
                PiecewiseRate::constant(1.0));
  const double lp = beta[static_cast<std::size_t>(trans - 1)].dot(z);
  const double scale = std::exp(lp);
  const PiecewiseRate& b = base[static_cast<std::size_t>(trans - 1)];
  StepFunction fn;
  const double dt = t_max / K;
  double prev = 0.0;
  for (int k = 1; k <= K; ++k) {
    const double cur = scale * b.cumulative(k * dt);
    fn.add_jump(k * dt, cur - prev);
    prev = cur;
  }
  return fn;
}

TransitionStructure study_structure(const std::string& name) {
  const std::vector<std::string> states = {"1", "2", "3", "4"};
  if (name == "linear")
    return TransitionStructure::build(states, {{0, 1}, {1, 2}, {2, 3}});
  if (name == "competing_risks")
    return TransitionStructure::build(states, {{0, 1}, {0, 2}, {0, 3}});
  if (name == "m_structure")
    return TransitionStructure::build(states, {{0, 1}, {0, 2}, {1, 3}});
  fail(ErrorKind::BadInput, "unknown study structure '" + name + "'");
}

std::vector<std::string> study_structure_names() {
  return {"linear", "competing_risks", "m_structure"};
}

namespace {

struct ScenarioContext {
  TransitionStructure structure;
  std::vector<Eigen::VectorXd> beta;
  SimSpec base_spec;
  double t_max = 0.0;
  std::uint64_t scen_seed = 0;
};

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// mean absolute coefficient error in the expanded layout: column
// (base j, type tau) sits at j * T + (tau - 1)
double coefficient_error(const Eigen::VectorXd& est,
                         const std::vector<Eigen::VectorXd>& truth, int p,
                         int T) {
  double acc = 0.0;
  for (int j = 0; j < p; ++j)
    for (int tau = 1; tau <= T; ++tau) {
      const double b = est.size() == 0
                           ? 0.0
                           : est[static_cast<Eigen::Index>(j * T + tau - 1)];
      acc += std::abs(b - truth[static_cast<std::size_t>(tau - 1)][j]);
    }
  return acc / (p * T);
}

struct ReplicateRows {
  std::vector<StudyRow> rows;
};

ReplicateRows run_replicate(const ScenarioContext& ctx, const StudyScenario& sc,
                            int rep, const StudyOptions& opt) {
  const int T = ctx.structure.n_transitions();
  const int K = opt.K;
  const int fineK = opt.truth_refine * K;

  SimSpec spec = ctx.base_spec;
  spec.seed = derive_seed(ctx.scen_seed, static_cast<std::uint64_t>(rep),
                          kSaltReplicate);
  Dataset cohort = simulate_cohort(spec);
  Dataset data = expand_covariates(cohort, per_transition_partition(ctx.structure));

  // held-out subject and its ground truth
  Rng prof_rng(spec.seed, 0, kSaltProfile);
  Eigen::VectorXd zstar(sc.p);
  for (int j = 0; j < sc.p; ++j) zstar[j] = prof_rng.bernoulli(0.5) ? 1.0 : 0.0;

  std::vector<double> truth_relhaz(static_cast<std::size_t>(T));
  for (int e = 1; e <= T; ++e)
    truth_relhaz[static_cast<std::size_t>(e - 1)] =
        std::exp(ctx.beta[static_cast<std::size_t>(e - 1)].dot(zstar));

  HazardBundle truth_bundle;
  truth_bundle.scale = TimeScale::clock_reset;
  truth_bundle.structure = ctx.structure;
  for (int e = 1; e <= T; ++e)
    truth_bundle.cumhaz[e] =
        true_cumhaz_on_grid(spec, ctx.beta, e, zstar, fineK, ctx.t_max);
  const OccupancyGrid truth_occ =
      occupancy_fft(discretize_kernels(truth_bundle, fineK, ctx.t_max),
                    ctx.structure.root());

  // expanded profile and per-transition patient rows for z*
  std::vector<double> zbase(static_cast<std::size_t>(sc.p));
  for (int j = 0; j < sc.p; ++j) zbase[static_cast<std::size_t>(j)] = zstar[j];
  std::vector<double> zprof(data.columns.size(), 0.0);
  for (std::size_t c = 0; c < data.columns.size(); ++c)
    zprof[c] = zbase[c / static_cast<std::size_t>(T)];

  auto occupancy_error = [&](const MultiStateFit& fit) {
    std::vector<PatientRow> rows;
    for (int e = 1; e <= T; ++e) {
      PatientRow r;
      r.trans = e;
      auto st = fit.transition_stratum.find(e);
      r.stratum = st == fit.transition_stratum.end() ? e : st->second;
      r.covariates.assign(fit.columns.size(), 0.0);
      if (!fit.columns.empty())
        r.covariates = expand_profile(zbase, sc.p, e, data);
      rows.push_back(std::move(r));
    }
    HazardBundle bundle = subject_hazards(fit, ctx.structure, rows);
    const OccupancyGrid occ =
        occupancy_fft(discretize_kernels(bundle, K, ctx.t_max),
                      ctx.structure.root());
    double acc = 0.0;
    int cnt = 0;
    for (int j = 1; j <= opt.eval_points; ++j) {
      const int k = j * (K / opt.eval_points);
      const int fk = opt.truth_refine * k;
      for (int i = 0; i < ctx.structure.n_states(); ++i) {
        acc += std::abs(
            occ.probs[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] -
            truth_occ.probs[static_cast<std::size_t>(i)]
                           [static_cast<std::size_t>(fk)]);
        ++cnt;
      }
    }
    return acc / cnt;
  };

  auto relhaz_error = [&](const MultiStateFit& fit) {
    double acc = 0.0;
    for (int e = 1; e <= T; ++e) {
      const double lp =
          fit.columns.empty() ? 0.0 : fit.linear_predictor(e, zprof);
      acc += std::abs(std::exp(lp) - truth_relhaz[static_cast<std::size_t>(e - 1)]);
    }
    return acc / T;
  };

  FitOptions fopt;
  fopt.scale = TimeScale::clock_reset;

  ReplicateRows out;
  auto push = [&](const std::string& method, bool na, double coef_err,
                  double rh_err, double occ_err) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.rows.push_back({"coefficients", method, sc.structure_name, sc.n, sc.p,
                        rep, na ? nan : coef_err, na});
    out.rows.push_back({"relative_hazards", method, sc.structure_name, sc.n,
                        sc.p, rep, na ? nan : rh_err, na});
    out.rows.push_back({"occupancy", method, sc.structure_name, sc.n, sc.p, rep,
                        na ? nan : occ_err, na});
  };

  // unpenalized
  try {
    MultiStateFit fit = fit_cox_mle(data, ctx.structure, fopt);
    const bool na = !fit.converged ||
                    fit.beta.lpNorm<Eigen::Infinity>() > opt.na_beta_bound;
    if (na)
      push("standard", true, 0, 0, 0);
    else
      push("standard", false, coefficient_error(fit.beta, ctx.beta, sc.p, T),
           relhaz_error(fit), occupancy_error(fit));
  } catch (const Error&) {
    push("standard", true, 0, 0, 0);
  }

  // shrinkage, one prior group per transition
  try {
    MultiStateFit fit = fit_empirical_bayes(
        data, ctx.structure, PriorGrouping::by_column_type(data), fopt);
    const bool na = !fit.converged ||
                    fit.beta.lpNorm<Eigen::Infinity>() > opt.na_beta_bound;
    if (na)
      push("eb", true, 0, 0, 0);
    else
      push("eb", false, coefficient_error(fit.beta, ctx.beta, sc.p, T),
           relhaz_error(fit), occupancy_error(fit));
  } catch (const Error&) {
    push("eb", true, 0, 0, 0);
  }

  // covariate-free reference
  try {
    Dataset null_data = data;
    null_data.columns.clear();
    for (auto& r : null_data.records) r.covariates.clear();
    MultiStateFit fit = fit_cox_mle(null_data, ctx.structure, fopt);
    push("null", false,
         coefficient_error(Eigen::VectorXd(), ctx.beta, sc.p, T),
         relhaz_error(fit), occupancy_error(fit));
  } catch (const Error&) {
    push("null", true, 0, 0, 0);
  }

  return out;
}

}  // namespace

std::vector<StudyRow> run_study(const std::vector<StudyScenario>& scenarios,
                                const StudyOptions& opt) {
  require(opt.K % opt.eval_points == 0, ErrorKind::BadInput,
          "K must be a multiple of eval_points");
  std::vector<StudyRow> all;

  for (std::size_t si = 0; si < scenarios.size(); ++si) {
    const StudyScenario& sc = scenarios[si];
    ScenarioContext ctx;
    ctx.structure = study_structure(sc.structure_name);
    ctx.scen_seed = derive_seed(opt.seed, si, kSaltScenario);

    ctx.base_spec.structure = ctx.structure;
    ctx.base_spec.n_patients = sc.n;
    ctx.base_spec.n_covariates = sc.p;
    ctx.base_spec.beta_scale = opt.beta_scale;
    ctx.base_spec.c_admin = opt.c_admin;
    ctx.base_spec.seed = derive_seed(ctx.scen_seed, 0, kSaltReplicate);
    ctx.beta = resolve_true_beta(ctx.base_spec);

    // evaluation horizon from the first replicate's event sojourns
    {
      Dataset probe = simulate_cohort(ctx.base_spec);
      std::vector<double> event_times;
      for (const auto& r : probe.records)
        if (r.status == 1) event_times.push_back(r.time);
      double med = median_of(event_times);
      if (!std::isfinite(med) || med <= 0.0) med = 1.0;
      ctx.t_max = 0.5 * opt.eval_points * med;
    }

    const int R = opt.replicates;
    std::vector<ReplicateRows> results(static_cast<std::size_t>(R));
    const int n_threads = std::max(1, opt.threads);
    if (n_threads == 1) {
      for (int r = 0; r < R; ++r)
        results[static_cast<std::size_t>(r)] = run_replicate(ctx, sc, r, opt);
    } else {
      std::atomic<int> next{0};
      std::vector<std::thread> pool;
      for (int w = 0; w < n_threads; ++w)
        pool.emplace_back([&]() {
          for (;;) {
            const int r = next.fetch_add(1);
            if (r >= R) return;
            results[static_cast<std::size_t>(r)] = run_replicate(ctx, sc, r, opt);
          }
        });
      for (auto& th : pool) th.join();
    }
    for (const auto& rr : results)
      all.insert(all.end(), rr.rows.begin(), rr.rows.end());
  }
  return all;
}

void write_study_csv(const std::string& path, const std::vector<StudyRow>& rows) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::BadInput, "cannot write '" + path + "'");
  out << "a,m,G,n,p,replicate,error,na_flag\n";
  for (const auto& r : rows) {
    out << r.target << ',' << r.method << ',' << r.structure_name << ',' << r.n
        << ',' << r.p << ',' << r.replicate << ',';
    if (r.na)
      out << "NA";
    else
      out << format_double(r.error);
    out << ',' << (r.na ? 1 : 0) << '\n';
  }
}

double study_median_error(const std::vector<StudyRow>& rows,
                          const std::string& target, const std::string& method,
                          const std::string& structure_name, int n, int p) {
  std::vector<double> errs;
  for (const auto& r : rows)
    if (!r.na && r.target == target && r.method == method &&
        r.structure_name == structure_name && r.n == n && r.p == p)
      errs.push_back(r.error);
  if (errs.empty()) return std::numeric_limits<double>::infinity();
  return median_of(errs);
}

double study_na_rate(const std::vector<StudyRow>& rows,
                     const std::string& method,
                     const std::string& structure_name, int n, int p) {
  int na = 0, total = 0;
  for (const auto& r : rows)
    if (r.method == method && r.target == "coefficients" &&
        r.structure_name == structure_name && r.n == n && r.p == p) {
      ++total;
      na += r.na ? 1 : 0;
    }
  return total == 0 ? 0.0 : static_cast<double>(na) / total;
}

}  // namespace ebms
