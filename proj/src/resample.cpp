#include "ebms/resample.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "ebms/errors.hpp"
#include "ebms/rng.hpp"

namespace ebms {

namespace {

constexpr std::uint64_t kSaltBoot = 0x626f6f74ULL;

// covariate rows of one patient for every structure transition; rows
// the patient never contributed are synthesized from their time-fixed
// base covariates
std::vector<PatientRow> rows_for_patient(const Dataset& d,
                                         const TransitionStructure& s,
                                         const std::string& id,
                                         const std::map<int, int>& strata) {
  std::map<int, const EventRecord*> own;
  const EventRecord* any = nullptr;
  for (const auto& r : d.records)
    if (r.id == id) {
      if (!any) any = &r;
      own.emplace(r.trans, &r);
    }
  require(any != nullptr, ErrorKind::BadInput, "unknown patient '" + id + "'");

  // reconstruct the base covariate vector from one expanded row
  std::vector<double> base;
  int p_base = d.n_covariates();
  if (d.expanded()) {
    std::vector<int> types;
    for (const auto& [trans, type] : d.transition_type) types.push_back(type);
    std::sort(types.begin(), types.end());
    types.erase(std::unique(types.begin(), types.end()), types.end());
    const int T = static_cast<int>(types.size());
    p_base = d.n_covariates() / T;
    const int own_type = d.type_of(any->trans);
    const int block = static_cast<int>(
        std::lower_bound(types.begin(), types.end(), own_type) - types.begin());
    for (int j = 0; j < p_base; ++j)
      base.push_back(any->covariates[static_cast<std::size_t>(j * T + block)]);
  } else {
    base = any->covariates;
  }

  std::vector<PatientRow> rows;
  for (const auto& t : s.transitions()) {
    PatientRow r;
    r.trans = t.id;
    auto st = strata.find(t.id);
    r.stratum = st == strata.end() ? 0 : st->second;
    auto rec = own.find(t.id);
    if (rec != own.end()) {
      r.covariates = rec->second->covariates;
      r.stratum = rec->second->stratum;
    } else {
      r.covariates = expand_profile(base, p_base, t.id, d);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

// resample patients with replacement; the k-th draw becomes a fresh
// patient "<orig>#<k>" so duplicates stay distinct
Dataset resample_patients(const Dataset& d,
                          const std::vector<std::string>& ids,
                          const std::vector<std::vector<std::size_t>>& by_patient,
                          Rng& rng) {
  Dataset out;
  out.columns = d.columns;
  out.transition_type = d.transition_type;
  const std::size_t n = ids.size();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t pick = rng.below(n);
    for (std::size_t ri : by_patient[pick]) {
      EventRecord r = d.records[ri];
      r.id += "#" + std::to_string(k);
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

OccupancyGrid occupancy_for(const MultiStateFit& fit,
                            const TransitionStructure& s,
                            const std::vector<PatientRow>& patient, int K,
                            double t_max, int initial_state) {
  HazardBundle bundle = subject_hazards(fit, s, patient);
  if (fit.scale == TimeScale::clock_reset)
    return occupancy_fft(discretize_kernels(bundle, K, t_max), initial_state);
  return occupancy_aalen_johansen(bundle, initial_state, K, t_max);
}

int resolve_initial_state(int requested, const TransitionStructure& s) {
  if (requested >= 0) {
    require(requested < s.n_states(), ErrorKind::BadInput,
            "initial state out of range");
    return requested;
  }
  return s.root();
}

}  // namespace

double quantile_type7(std::vector<double> values, double q) {
  require(!values.empty(), ErrorKind::BadInput,
          "quantile of an empty sample");
  require(q >= 0.0 && q <= 1.0, ErrorKind::BadInput, "q outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

BootstrapResult bootstrap_intervals(const Dataset& d,
                                    const TransitionStructure& s,
                                    const PriorGrouping& grouping,
                                    const FitOptions& fopt,
                                    const std::vector<PatientRow>& patient,
                                    const BootOptions& opt) {
  require(opt.B >= 1, ErrorKind::BadInput, "need at least one replicate");
  require(opt.level > 0.0 && opt.level < 1.0, ErrorKind::BadInput,
          "level must be in (0, 1)");

  MultiStateFit full = fit_empirical_bayes(d, s, grouping, fopt);
  require(full.converged, ErrorKind::NotConverged,
          "full-data fit did not converge");

  BootstrapResult res;
  res.B = opt.B;
  res.level = opt.level;
  res.K = opt.K;
  for (const auto& c : d.columns) res.coef_names.push_back(c.name);
  const int p = d.n_covariates();
  res.coef_point.assign(static_cast<std::size_t>(p), 0.0);
  for (int j = 0; j < p; ++j)
    res.coef_point[static_cast<std::size_t>(j)] = full.beta[j];

  const bool curves = opt.do_cumhaz || opt.do_occupancy;
  HazardBundle full_bundle;
  double t_max = opt.t_max;
  int init = 0;
  if (curves) {
    full_bundle = subject_hazards(full, s, patient);
    if (t_max <= 0.0) t_max = full_bundle.last_jump_time();
    require(t_max > 0.0, ErrorKind::BadInput,
            "no events to define a time horizon");
    res.dt = t_max / opt.K;
    if (opt.do_occupancy) init = resolve_initial_state(opt.initial_state, s);
  }

  // point curves
  std::map<int, std::vector<double>> point_cumhaz;
  OccupancyGrid point_occ;
  if (opt.do_cumhaz)
    for (const auto& [trans, fn] : full_bundle.cumhaz)
      point_cumhaz[trans] = fn.on_grid(opt.K, res.dt);
  if (opt.do_occupancy)
    point_occ = occupancy_for(full, s, patient, opt.K, t_max, init);

  // replicate storage: draws[b] empty means failed
  struct Draw {
    bool ok = false;
    std::vector<double> coef;
    std::map<int, std::vector<double>> cumhaz;
    std::vector<std::vector<double>> occupancy;
  };
  std::vector<Draw> draws(static_cast<std::size_t>(opt.B));

  const auto ids = patient_ids(d);
  require(!ids.empty(), ErrorKind::BadInput, "dataset has no patients");
  std::map<std::string, std::size_t> id_index;
  for (std::size_t i = 0; i < ids.size(); ++i) id_index[ids[i]] = i;
  std::vector<std::vector<std::size_t>> by_patient(ids.size());
  for (std::size_t ri = 0; ri < d.records.size(); ++ri)
    by_patient[id_index[d.records[ri].id]].push_back(ri);

  auto run_one = [&](int b) {
    Rng rng(opt.seed, static_cast<std::uint64_t>(b), kSaltBoot);
    Draw& out = draws[static_cast<std::size_t>(b)];
    try {
      Dataset rd = resample_patients(d, ids, by_patient, rng);
      MultiStateFit fit = fit_empirical_bayes(rd, s, grouping, fopt);
      if (!fit.converged) return;
      out.coef.resize(static_cast<std::size_t>(p));
      for (int j = 0; j < p; ++j)
        out.coef[static_cast<std::size_t>(j)] = fit.beta[j];
      if (curves) {
        HazardBundle bundle = subject_hazards(fit, s, patient);
        if (opt.do_cumhaz)
          for (const auto& [trans, fn] : bundle.cumhaz)
            out.cumhaz[trans] = fn.on_grid(opt.K, res.dt);
        if (opt.do_occupancy) {
          OccupancyGrid occ = occupancy_for(fit, s, patient, opt.K, t_max, init);
          out.occupancy = std::move(occ.probs);
        }
      }
      out.ok = true;
    } catch (const Error& e) {
      if (e.is_validation()) throw;  // a bug, not a resampling failure
      out.ok = false;
    }
  };

  const int n_threads = std::max(1, opt.threads);
  if (n_threads == 1) {
    for (int b = 0; b < opt.B; ++b) run_one(b);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w)
      pool.emplace_back([&]() {
        for (;;) {
          const int b = next.fetch_add(1);
          if (b >= opt.B) return;
          run_one(b);
        }
      });
    for (auto& th : pool) th.join();
  }

  std::vector<int> ok;
  for (int b = 0; b < opt.B; ++b)
    if (draws[static_cast<std::size_t>(b)].ok) ok.push_back(b);
  res.n_failed = opt.B - static_cast<int>(ok.size());
  require(!ok.empty(), ErrorKind::AllReplicatesFailed,
          "every bootstrap replicate failed");

  const double alpha = 1.0 - opt.level;
  auto band = [&](auto&& value_of) {
    std::vector<double> sample(ok.size());
    for (std::size_t i = 0; i < ok.size(); ++i)
      sample[i] = value_of(draws[static_cast<std::size_t>(ok[i])]);
    return std::pair<double, double>{quantile_type7(sample, alpha / 2.0),
                                     quantile_type7(sample, 1.0 - alpha / 2.0)};
  };

  res.coef_draws.assign(static_cast<std::size_t>(opt.B),
                        std::vector<double>(static_cast<std::size_t>(p),
                                            std::numeric_limits<double>::quiet_NaN()));
  for (int b = 0; b < opt.B; ++b)
    if (draws[static_cast<std::size_t>(b)].ok)
      res.coef_draws[static_cast<std::size_t>(b)] =
          draws[static_cast<std::size_t>(b)].coef;

  res.coef_lower.resize(static_cast<std::size_t>(p));
  res.coef_upper.resize(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) {
    auto [lo, hi] = band([&](const Draw& dr) {
      return dr.coef[static_cast<std::size_t>(j)];
    });
    res.coef_lower[static_cast<std::size_t>(j)] = lo;
    res.coef_upper[static_cast<std::size_t>(j)] = hi;
  }

  if (opt.do_cumhaz)
    for (const auto& [trans, point] : point_cumhaz) {
      Band bd;
      bd.point = point;
      bd.lower.resize(point.size());
      bd.upper.resize(point.size());
      for (std::size_t k = 0; k < point.size(); ++k) {
        auto [lo, hi] = band([&](const Draw& dr) {
          auto it = dr.cumhaz.find(trans);
          return it == dr.cumhaz.end() ? 0.0 : it->second[k];
        });
        bd.lower[k] = lo;
        bd.upper[k] = hi;
      }
      res.cumhaz.emplace(trans, std::move(bd));
    }

  if (opt.do_occupancy) {
    res.occupancy.resize(point_occ.probs.size());
    for (std::size_t i = 0; i < point_occ.probs.size(); ++i) {
      Band bd;
      bd.point = point_occ.probs[i];
      bd.lower.resize(bd.point.size());
      bd.upper.resize(bd.point.size());
      for (std::size_t k = 0; k < bd.point.size(); ++k) {
        auto [lo, hi] = band([&](const Draw& dr) { return dr.occupancy[i][k]; });
        bd.lower[k] = lo;
        bd.upper[k] = hi;
      }
      res.occupancy[i] = std::move(bd);
    }
  }
  return res;
}

LooResult loo_predictions(const Dataset& d, const TransitionStructure& s,
                          const PriorGrouping& grouping, const FitOptions& fopt,
                          const LooOptions& opt) {
  LooResult res;
  res.K = opt.K;
  res.ids = patient_ids(d);
  require(res.ids.size() >= 2, ErrorKind::BadInput,
          "leave-one-out needs at least two patients");

  const auto strata = transition_strata(d);
  MultiStateFit full = fit_empirical_bayes(d, s, grouping, fopt);
  HazardBundle full_bundle = baseline_hazards(full, s);
  double t_max = opt.t_max;
  if (t_max <= 0.0) t_max = full_bundle.last_jump_time();
  require(t_max > 0.0, ErrorKind::BadInput, "no events to define a horizon");
  res.dt = t_max / opt.K;
  const int init = resolve_initial_state(opt.initial_state, s);

  struct Slot {
    bool ok = false;
    OccupancyGrid grid;
    std::string error;
  };
  std::vector<Slot> slots(res.ids.size());

  auto run_one = [&](std::size_t i) {
    const std::string& id = res.ids[i];
    Slot& slot = slots[i];
    try {
      Dataset rest;
      rest.columns = d.columns;
      rest.transition_type = d.transition_type;
      for (const auto& r : d.records)
        if (r.id != id) rest.records.push_back(r);
      MultiStateFit fit = fit_empirical_bayes(rest, s, grouping, fopt);
      require(fit.converged, ErrorKind::NotConverged,
              "fit without patient did not converge");
      const auto rows = rows_for_patient(d, s, id, strata);
      slot.grid = occupancy_for(fit, s, rows, opt.K, t_max, init);
      slot.ok = true;
    } catch (const Error& e) {
      slot.error = e.what();
    }
  };

  const int n_threads = std::max(1, opt.threads);
  if (n_threads == 1) {
    for (std::size_t i = 0; i < res.ids.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w)
      pool.emplace_back([&]() {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= res.ids.size()) return;
          run_one(i);
        }
      });
    for (auto& th : pool) th.join();
  }

  for (std::size_t i = 0; i < res.ids.size(); ++i) {
    if (slots[i].ok)
      res.grids.emplace(res.ids[i], std::move(slots[i].grid));
    else
      res.failures.emplace(res.ids[i], slots[i].error);
  }
  return res;
}

}  // namespace ebms
