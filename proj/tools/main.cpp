// ebms: empirical-Bayes multi-state survival engine.
//
// Subcommands: fit, msfit, probtrans, boot, loo, simulate, study, bench.
// Exit codes: 0 success, 2 invalid input, 3 numerical failure.  Errors
// are reported as one JSON object on stderr.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ebms/bench.hpp"
#include "ebms/cumhaz.hpp"
#include "ebms/dataset.hpp"
#include "ebms/empbayes.hpp"
#include "ebms/errors.hpp"
#include "ebms/occupancy.hpp"
#include "ebms/resample.hpp"
#include "ebms/simulate.hpp"
#include "ebms/structure.hpp"

namespace {

using nlohmann::ordered_json;

ebms::TimeScale parse_scale(const std::string& name) {
  if (name == "clock_reset") return ebms::TimeScale::clock_reset;
  if (name == "clock_forward") return ebms::TimeScale::clock_forward;
  ebms::fail(ebms::ErrorKind::BadInput,
             "scale must be clock_reset or clock_forward, got '" + name + "'");
}

ordered_json read_json_file(const std::string& path) {
  std::ifstream in(path);
  ebms::require(in.good(), ebms::ErrorKind::BadInput,
                "cannot open '" + path + "'");
  try {
    return ordered_json::parse(in);
  } catch (const std::exception& e) {
    ebms::fail(ebms::ErrorKind::BadInput,
               "cannot parse '" + path + "': " + e.what());
  }
}

void write_json_file(const std::string& path, const ordered_json& j) {
  std::ofstream out(path);
  ebms::require(out.good(), ebms::ErrorKind::BadInput,
                "cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

ebms::TransitionStructure load_structure(const std::string& path) {
  return ebms::TransitionStructure::from_json(read_json_file(path));
}

struct DataArgs {
  std::string data_path;
  std::string structure_path;
  std::string scale_name = "clock_reset";
  bool expand = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--data", data_path, "long-format event CSV")->required();
    cmd->add_option("--structure", structure_path, "structure JSON")->required();
    cmd->add_option("--scale", scale_name,
                    "clock_reset (sojourn hazards) or clock_forward");
    cmd->add_flag("--expand", expand,
                  "give every transition its own copy of each covariate");
  }

  ebms::TimeScale scale() const { return parse_scale(scale_name); }

  std::pair<ebms::Dataset, ebms::TransitionStructure> load() const {
    auto s = load_structure(structure_path);
    auto d = ebms::load_long_csv(data_path, s);
    if (expand)
      d = ebms::expand_covariates(d, ebms::per_transition_partition(s));
    return {std::move(d), std::move(s)};
  }
};

ebms::PriorGrouping resolve_grouping(const std::string& grouping_path,
                                     bool estimate_means,
                                     const ebms::Dataset& d) {
  ebms::PriorGrouping g;
  if (!grouping_path.empty())
    g = ebms::PriorGrouping::from_json(read_json_file(grouping_path), d);
  else if (d.expanded())
    g = ebms::PriorGrouping::by_column_type(d);
  else
    g = ebms::PriorGrouping::single_group(d);
  if (estimate_means)
    for (const auto& name : g.group_names) g.estimated_mean_groups.insert(name);
  return g;
}

int resolve_initial(int one_based, const ebms::TransitionStructure& s) {
  if (one_based <= 0) return s.root();
  ebms::require(one_based <= s.n_states(), ebms::ErrorKind::BadInput,
                "initial state out of range");
  return one_based - 1;
}

void warn_horizon(bool flagged) {
  if (flagged)
    std::cerr << R"({"warning":"HorizonBeyondData","message":)"
              << R"("t_max runs past the last observed event; curves are flat there"})"
              << std::endl;
}

// ------------------------------------------------------------------ fit

struct FitArgs {
  DataArgs data;
  std::string grouping_path;
  std::string method = "eb";
  bool estimate_means = false;
  double sigma2_init = 0.1;
  int max_outer = 50;
  double outer_tol = 1e-4;
  std::vector<std::string> fixed_sigma2;  // group=value
  std::string out_path;
};

void run_fit(const FitArgs& a) {
  auto [d, s] = a.data.load();
  ebms::FitOptions opt;
  opt.scale = a.data.scale();
  opt.sigma2_init = a.sigma2_init;
  opt.max_outer = a.max_outer;
  opt.outer_tol = a.outer_tol;
  for (const auto& kv : a.fixed_sigma2) {
    auto pos = kv.find('=');
    ebms::require(pos != std::string::npos, ebms::ErrorKind::BadInput,
                  "--fixed-sigma2 expects group=value");
    opt.fixed_sigma2[kv.substr(0, pos)] = std::stod(kv.substr(pos + 1));
  }

  ebms::MultiStateFit fit;
  if (a.method == "eb") {
    fit = ebms::fit_empirical_bayes(
        d, s, resolve_grouping(a.grouping_path, a.estimate_means, d), opt);
  } else if (a.method == "mle") {
    fit = ebms::fit_cox_mle(d, s, opt);
  } else {
    ebms::fail(ebms::ErrorKind::BadInput,
               "method must be eb or mle, got '" + a.method + "'");
  }
  write_json_file(a.out_path, ebms::fit_to_json(fit));
  ebms::require(fit.converged, ebms::ErrorKind::NotConverged,
                "fit did not converge (output written anyway)");
}

// ------------------------------------------------- msfit and probtrans

struct PredictArgs {
  DataArgs data;
  std::string fit_path;
  std::string patient_path;
  std::string out_path;
};

ebms::HazardBundle rebuild_bundle(const PredictArgs& a,
                                  ebms::TransitionStructure& s_out) {
  auto [d, s] = a.data.load();
  auto fit = ebms::fit_from_json(read_json_file(a.fit_path), d, s,
                                 a.data.scale());
  std::vector<ebms::PatientRow> rows;
  if (a.patient_path.empty()) {
    for (const auto& t : s.transitions()) {
      ebms::PatientRow r;
      r.trans = t.id;
      auto st = fit.transition_stratum.find(t.id);
      r.stratum = st == fit.transition_stratum.end() ? 0 : st->second;
      r.covariates.assign(fit.columns.size(), 0.0);
      rows.push_back(std::move(r));
    }
  } else {
    rows = ebms::load_patient_csv(a.patient_path, s, fit);
  }
  auto bundle = ebms::subject_hazards(fit, s, rows);
  s_out = s;
  return bundle;
}

void run_msfit(const PredictArgs& a) {
  ebms::TransitionStructure s;
  ebms::write_bundle_csv(a.out_path, rebuild_bundle(a, s));
}

struct ProbtransArgs {
  PredictArgs predict;
  std::string estimator = "fft";
  int K = 10000;
  double t_max = 0.0;
  int initial_state = 0;  // 1-based; 0 = root
  int n_paths = 10000;
  std::uint64_t seed = 1;
};

void run_probtrans(const ProbtransArgs& a) {
  ebms::TransitionStructure s;
  auto bundle = rebuild_bundle(a.predict, s);
  double t_max = a.t_max > 0.0 ? a.t_max : bundle.last_jump_time();
  ebms::require(t_max > 0.0, ebms::ErrorKind::BadInput,
                "no events define a horizon; pass --t-max");
  const int init = resolve_initial(a.initial_state, s);

  ebms::OccupancyGrid grid;
  if (a.estimator == "fft") {
    grid = ebms::occupancy_fft(ebms::discretize_kernels(bundle, a.K, t_max), init);
  } else if (a.estimator == "direct") {
    grid = ebms::occupancy_direct(ebms::discretize_kernels(bundle, a.K, t_max),
                                  init);
  } else if (a.estimator == "aj") {
    grid = ebms::occupancy_aalen_johansen(bundle, init, a.K, t_max);
  } else if (a.estimator == "sample") {
    grid = ebms::occupancy_sampled(bundle, a.n_paths, init, a.seed, a.K, t_max);
  } else {
    ebms::fail(ebms::ErrorKind::BadInput,
               "estimator must be fft, direct, aj or sample");
  }
  warn_horizon(grid.horizon_warning);
  ebms::write_occupancy_csv(a.predict.out_path, grid, s);
}

// ----------------------------------------------------------------- boot

struct BootArgs {
  DataArgs data;
  std::string grouping_path;
  bool estimate_means = false;
  std::string patient_path;
  std::string targets = "coef";
  int B = 200;
  double level = 0.95;
  std::uint64_t seed = 1;
  int threads = 1;
  int K = 500;
  double t_max = 0.0;
  int initial_state = 0;
  std::string out_path;
};

void run_boot(const BootArgs& a) {
  auto [d, s] = a.data.load();
  auto grouping = resolve_grouping(a.grouping_path, a.estimate_means, d);
  ebms::FitOptions fopt;
  fopt.scale = a.data.scale();

  ebms::BootOptions opt;
  opt.B = a.B;
  opt.level = a.level;
  opt.seed = a.seed;
  opt.threads = a.threads;
  opt.K = a.K;
  opt.t_max = a.t_max;
  opt.initial_state = a.initial_state <= 0 ? -1 : a.initial_state - 1;
  for (const auto& t : {std::string("cumhaz"), std::string("occupancy")}) {
    if (a.targets.find(t) != std::string::npos) {
      if (t == "cumhaz") opt.do_cumhaz = true;
      if (t == "occupancy") opt.do_occupancy = true;
    }
  }

  std::vector<ebms::PatientRow> patient;
  if (!a.patient_path.empty()) {
    // patient rows are interpreted against the full-data fit layout
    auto fit = ebms::fit_empirical_bayes(d, s, grouping, fopt);
    patient = ebms::load_patient_csv(a.patient_path, s, fit);
  } else {
    for (const auto& t : s.transitions()) {
      ebms::PatientRow r;
      r.trans = t.id;
      r.stratum = 0;
      r.covariates.assign(d.columns.size(), 0.0);
      patient.push_back(std::move(r));
    }
    auto strata = ebms::transition_strata(d);
    for (auto& r : patient)
      if (auto it = strata.find(r.trans); it != strata.end())
        r.stratum = it->second;
  }

  auto res = ebms::bootstrap_intervals(d, s, grouping, fopt, patient, opt);

  ordered_json j;
  j["B"] = res.B;
  j["level"] = res.level;
  j["n_failed"] = res.n_failed;
  j["coefficients"] = ordered_json::object();
  for (std::size_t i = 0; i < res.coef_names.size(); ++i)
    j["coefficients"][res.coef_names[i]] = {{"point", res.coef_point[i]},
                                            {"lower", res.coef_lower[i]},
                                            {"upper", res.coef_upper[i]}};
  auto band_json = [&](const ebms::Band& b) {
    ordered_json out;
    std::vector<double> times;
    for (std::size_t k = 0; k < b.point.size(); ++k)
      times.push_back(static_cast<double>(k) * res.dt);
    out["time"] = times;
    out["point"] = b.point;
    out["lower"] = b.lower;
    out["upper"] = b.upper;
    return out;
  };
  if (opt.do_cumhaz) {
    j["cumhaz"] = ordered_json::object();
    for (const auto& [trans, band] : res.cumhaz)
      j["cumhaz"][std::to_string(trans)] = band_json(band);
  }
  if (opt.do_occupancy) {
    j["occupancy"] = ordered_json::object();
    for (std::size_t i = 0; i < res.occupancy.size(); ++i)
      j["occupancy"]["state_" + std::to_string(i + 1)] =
          band_json(res.occupancy[i]);
  }
  write_json_file(a.out_path, j);
}

// ------------------------------------------------------------------ loo

struct LooArgs {
  DataArgs data;
  std::string grouping_path;
  bool estimate_means = false;
  int K = 500;
  double t_max = 0.0;
  int initial_state = 0;
  int threads = 1;
  std::string out_dir;
};

void run_loo(const LooArgs& a) {
  auto [d, s] = a.data.load();
  ebms::FitOptions fopt;
  fopt.scale = a.data.scale();
  ebms::LooOptions opt;
  opt.K = a.K;
  opt.t_max = a.t_max;
  opt.initial_state = a.initial_state <= 0 ? -1 : a.initial_state - 1;
  opt.threads = a.threads;

  auto res = ebms::loo_predictions(
      d, s, resolve_grouping(a.grouping_path, a.estimate_means, d), fopt, opt);

  std::error_code ec;
  std::filesystem::create_directories(a.out_dir, ec);
  for (const auto& [id, grid] : res.grids)
    ebms::write_occupancy_csv(a.out_dir + "/" + id + ".csv", grid, s);
  ordered_json failures = ordered_json::object();
  for (const auto& [id, why] : res.failures) failures[id] = why;
  ordered_json index;
  index["ids"] = res.ids;
  index["K"] = res.K;
  index["dt"] = res.dt;
  index["failures"] = failures;
  write_json_file(a.out_dir + "/index.json", index);
}

// ------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string structure_name = "linear";
  std::string structure_path;
  int n = 100;
  int p = 10;
  std::uint64_t seed = 1;
  double c_admin = 3.0;
  double censor_rate = 0.0;
  double beta_scale = 0.3;
  std::string out_path;
  std::string structure_out;
  std::string beta_out;
};

void run_simulate(const SimulateArgs& a) {
  ebms::SimSpec spec;
  spec.structure = a.structure_path.empty()
                       ? ebms::study_structure(a.structure_name)
                       : load_structure(a.structure_path);
  spec.n_patients = a.n;
  spec.n_covariates = a.p;
  spec.seed = a.seed;
  spec.c_admin = a.c_admin;
  spec.censor_rate = a.censor_rate;
  spec.beta_scale = a.beta_scale;

  ebms::Dataset d = ebms::simulate_cohort(spec);
  ebms::write_long_csv(a.out_path, d, spec.structure);
  if (!a.structure_out.empty())
    write_json_file(a.structure_out, spec.structure.to_json());
  if (!a.beta_out.empty()) {
    const auto beta = ebms::resolve_true_beta(spec);
    ordered_json j = ordered_json::object();
    for (std::size_t t = 0; t < beta.size(); ++t) {
      std::vector<double> v(beta[t].data(), beta[t].data() + beta[t].size());
      j[std::to_string(t + 1)] = v;
    }
    write_json_file(a.beta_out, j);
  }
}

// ---------------------------------------------------------------- study

struct StudyArgs {
  std::vector<std::string> structures = {"linear", "competing_risks"};
  std::vector<int> ns = {100};
  std::vector<int> ps = {10, 40};
  int replicates = 50;
  std::uint64_t seed = 1;
  int threads = 1;
  double c_admin = 3.0;
  int K = 3500;
  std::string out_path;
};

void run_study_cmd(const StudyArgs& a) {
  std::vector<ebms::StudyScenario> scenarios;
  for (const auto& g : a.structures)
    for (int n : a.ns)
      for (int p : a.ps) scenarios.push_back({g, n, p});
  ebms::StudyOptions opt;
  opt.replicates = a.replicates;
  opt.seed = a.seed;
  opt.threads = a.threads;
  opt.c_admin = a.c_admin;
  opt.K = a.K;
  auto rows = ebms::run_study(scenarios, opt);
  ebms::write_study_csv(a.out_path, rows);
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::uint64_t seed = 7;
  int K = 10000;
  double t_max = 10.0;
  std::string out_path;
};

void run_bench(const BenchArgs& a) {
  ebms::BenchOptions opt;
  opt.seed = a.seed;
  opt.K = a.K;
  opt.t_max = a.t_max;
  write_json_file(a.out_path, ebms::bench_to_json(ebms::run_benchmark(opt)));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"empirical-Bayes multi-state survival engine"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "fit transition hazards");
  fit_args.data.attach(fit_cmd);
  fit_cmd->add_option("--grouping", fit_args.grouping_path,
                      "prior grouping JSON (column -> group)");
  fit_cmd->add_option("--method", fit_args.method, "eb (default) or mle");
  fit_cmd->add_flag("--estimate-means", fit_args.estimate_means,
                    "estimate prior means instead of fixing them at zero");
  fit_cmd->add_option("--sigma2-init", fit_args.sigma2_init);
  fit_cmd->add_option("--max-outer", fit_args.max_outer);
  fit_cmd->add_option("--outer-tol", fit_args.outer_tol);
  fit_cmd->add_option("--fixed-sigma2", fit_args.fixed_sigma2,
                      "group=value, keeps that group's variance fixed");
  fit_cmd->add_option("--out", fit_args.out_path, "fit JSON")->required();

  PredictArgs msfit_args;
  auto* msfit_cmd =
      app.add_subcommand("msfit", "per-transition cumulative hazards");
  msfit_args.data.attach(msfit_cmd);
  msfit_cmd->add_option("--fit", msfit_args.fit_path, "fit JSON")->required();
  msfit_cmd->add_option("--patient", msfit_args.patient_path,
                        "patient CSV (trans,strata,covariates); default zero profile");
  msfit_cmd->add_option("--out", msfit_args.out_path, "cumulative-hazard CSV")
      ->required();

  ProbtransArgs pt_args;
  auto* pt_cmd =
      app.add_subcommand("probtrans", "state occupation probabilities");
  pt_args.predict.data.attach(pt_cmd);
  pt_cmd->add_option("--fit", pt_args.predict.fit_path, "fit JSON")->required();
  pt_cmd->add_option("--patient", pt_args.predict.patient_path,
                     "patient CSV; default zero profile");
  pt_cmd->add_option("--estimator", pt_args.estimator,
                     "fft (default), direct, aj or sample");
  pt_cmd->add_option("--K", pt_args.K, "grid cells (default 10000)");
  pt_cmd->add_option("--t-max", pt_args.t_max,
                     "horizon; default last observed event");
  pt_cmd->add_option("--initial-state", pt_args.initial_state,
                     "1-based initial state; default root");
  pt_cmd->add_option("--n-paths", pt_args.n_paths, "sampler paths");
  pt_cmd->add_option("--seed", pt_args.seed, "sampler seed");
  pt_cmd->add_option("--out", pt_args.predict.out_path, "occupancy CSV")
      ->required();

  BootArgs boot_args;
  auto* boot_cmd = app.add_subcommand("boot", "bootstrap percentile intervals");
  boot_args.data.attach(boot_cmd);
  boot_cmd->add_option("--grouping", boot_args.grouping_path);
  boot_cmd->add_flag("--estimate-means", boot_args.estimate_means);
  boot_cmd->add_option("--patient", boot_args.patient_path,
                       "patient CSV for curve targets; default zero profile");
  boot_cmd->add_option("--targets", boot_args.targets,
                       "comma list: coef,cumhaz,occupancy");
  boot_cmd->add_option("--B", boot_args.B, "replicates (default 200)");
  boot_cmd->add_option("--level", boot_args.level, "interval level");
  boot_cmd->add_option("--seed", boot_args.seed);
  boot_cmd->add_option("--threads", boot_args.threads);
  boot_cmd->add_option("--K", boot_args.K, "curve grid cells");
  boot_cmd->add_option("--t-max", boot_args.t_max);
  boot_cmd->add_option("--initial-state", boot_args.initial_state);
  boot_cmd->add_option("--out", boot_args.out_path, "intervals JSON")->required();

  LooArgs loo_args;
  auto* loo_cmd =
      app.add_subcommand("loo", "leave-one-out predicted occupancies");
  loo_args.data.attach(loo_cmd);
  loo_cmd->add_option("--grouping", loo_args.grouping_path);
  loo_cmd->add_flag("--estimate-means", loo_args.estimate_means);
  loo_cmd->add_option("--K", loo_args.K);
  loo_cmd->add_option("--t-max", loo_args.t_max);
  loo_cmd->add_option("--initial-state", loo_args.initial_state);
  loo_cmd->add_option("--threads", loo_args.threads);
  loo_cmd->add_option("--out", loo_args.out_dir, "output directory")->required();

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic cohort");
  sim_cmd->add_option("--structure-name", sim_args.structure_name,
                      "linear, competing_risks or m_structure");
  sim_cmd->add_option("--structure", sim_args.structure_path,
                      "structure JSON (overrides --structure-name)");
  sim_cmd->add_option("--n", sim_args.n, "patients");
  sim_cmd->add_option("--p", sim_args.p, "covariates");
  sim_cmd->add_option("--seed", sim_args.seed);
  sim_cmd->add_option("--c-admin", sim_args.c_admin, "administrative censoring");
  sim_cmd->add_option("--censor-rate", sim_args.censor_rate,
                      "extra exponential censoring rate");
  sim_cmd->add_option("--beta-scale", sim_args.beta_scale);
  sim_cmd->add_option("--out", sim_args.out_path, "data CSV")->required();
  sim_cmd->add_option("--structure-out", sim_args.structure_out);
  sim_cmd->add_option("--beta-out", sim_args.beta_out);

  StudyArgs study_args;
  auto* study_cmd =
      app.add_subcommand("study", "shrinkage-vs-baseline simulation study");
  study_cmd->add_option("--structures", study_args.structures,
                        "structure names (repeatable)");
  study_cmd->add_option("--n", study_args.ns, "cohort sizes");
  study_cmd->add_option("--p", study_args.ps, "covariate counts");
  study_cmd->add_option("--replicates", study_args.replicates);
  study_cmd->add_option("--seed", study_args.seed);
  study_cmd->add_option("--threads", study_args.threads);
  study_cmd->add_option("--c-admin", study_args.c_admin);
  study_cmd->add_option("--K", study_args.K);
  study_cmd->add_option("--out", study_args.out_path, "study CSV")->required();

  BenchArgs bench_args;
  auto* bench_cmd =
      app.add_subcommand("bench", "estimator timing and accuracy report");
  bench_cmd->add_option("--seed", bench_args.seed);
  bench_cmd->add_option("--K", bench_args.K);
  bench_cmd->add_option("--t-max", bench_args.t_max);
  bench_cmd->add_option("--out", bench_args.out_path, "bench JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit_cmd->parsed()) run_fit(fit_args);
    if (msfit_cmd->parsed()) run_msfit(msfit_args);
    if (pt_cmd->parsed()) run_probtrans(pt_args);
    if (boot_cmd->parsed()) run_boot(boot_args);
    if (loo_cmd->parsed()) run_loo(loo_args);
    if (sim_cmd->parsed()) run_simulate(sim_args);
    if (study_cmd->parsed()) run_study_cmd(study_args);
    if (bench_cmd->parsed()) run_bench(bench_args);
  } catch (const ebms::Error& e) {
    nlohmann::json err;
    err["error"] = ebms::kind_name(e.kind());
    err["message"] = e.what();
    std::cerr << err.dump() << std::endl;
    return e.is_validation() ? 2 : 3;
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["error"] = "Internal";
    err["message"] = e.what();
    std::cerr << err.dump() << std::endl;
    return 3;
  }
  return 0;
}
