#pragma once

// Shared fixtures and reference implementations for the test suites.
// The reference code is deliberately naive (quadratic risk-set scans,
// scalar loops) so it cannot share bugs with the production sweeps.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ebms/coxfit.hpp"
#include "ebms/dataset.hpp"
#include "ebms/occupancy.hpp"
#include "ebms/rng.hpp"
#include "ebms/simulate.hpp"
#include "ebms/step_function.hpp"
#include "ebms/structure.hpp"

namespace testutil {

// ---------------------------------------------------------------- fixtures

inline ebms::TransitionStructure two_state() {
  return ebms::TransitionStructure::build({"1", "2"}, {{0, 1}});
}

inline ebms::TransitionStructure chain3() {
  return ebms::TransitionStructure::build({"1", "2", "3"}, {{0, 1}, {1, 2}});
}

inline ebms::TransitionStructure chain4() {
  return ebms::TransitionStructure::build({"1", "2", "3", "4"},
                                          {{0, 1}, {1, 2}, {2, 3}});
}

inline ebms::TransitionStructure competing3() {
  return ebms::TransitionStructure::build({"1", "2", "3"}, {{0, 1}, {0, 2}});
}

// temporary directory removed on scope exit
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ebms_test_" + std::to_string(counter.fetch_add(1)) + "_" +
             std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

// dataset shell with columns x1..xp and no rows
inline ebms::Dataset cox_dataset(int p) {
  ebms::Dataset d;
  for (int j = 1; j <= p; ++j)
    d.columns.push_back({"x" + std::to_string(j), 0});
  return d;
}

inline void add_row(ebms::Dataset& d, std::string id, int trans, int stratum,
                    double t_start, double t_stop, int status,
                    std::vector<double> covs) {
  ebms::EventRecord r;
  r.id = std::move(id);
  r.from = 0;
  r.to = 1;
  r.trans = trans;
  r.t_start = t_start;
  r.t_stop = t_stop;
  r.time = t_stop - t_start;
  r.status = status;
  r.stratum = stratum;
  r.covariates = std::move(covs);
  d.records.push_back(std::move(r));
}

// random single-transition survival rows; exit times live on a lattice
// so ties occur, and `staggered` adds lattice entry times (left
// truncation on the global clock)
inline ebms::Dataset random_cox_dataset(ebms::Rng& rng, int n, int p,
                                        int n_strata, bool staggered) {
  ebms::Dataset d = cox_dataset(p);
  for (int i = 0; i < n; ++i) {
    const double entry = staggered ? 0.25 * static_cast<double>(rng.below(3)) : 0.0;
    const double len = 0.25 * (1.0 + static_cast<double>(rng.below(12)));
    std::vector<double> covs(static_cast<std::size_t>(p));
    for (auto& c : covs) c = 2.0 * rng.uniform() - 1.0;
    add_row(d, "s" + std::to_string(i), 1,
            1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_strata))),
            entry, entry + len, rng.bernoulli(0.7) ? 1 : 0, std::move(covs));
  }
  return d;
}

// simulated three-state cohort, optionally expanded per transition
inline std::pair<ebms::Dataset, ebms::TransitionStructure> small_cohort(
    int n, int p, std::uint64_t seed, bool expand, double c_admin = 4.0) {
  ebms::SimSpec spec;
  spec.structure = chain3();
  spec.n_patients = n;
  spec.n_covariates = p;
  spec.c_admin = c_admin;
  spec.seed = seed;
  ebms::Dataset d = ebms::simulate_cohort(spec);
  if (expand)
    d = ebms::expand_covariates(d, ebms::per_transition_partition(spec.structure));
  return {std::move(d), spec.structure};
}

// ------------------------------------------------- naive Cox reference

// Breslow partial likelihood by direct risk-set scans: every event row
// contributes its own term, risk sets are rebuilt from scratch per
// event, no centering, no sorting.
struct NaiveCox {
  std::vector<double> entry, exit_;
  std::vector<int> status, stratum;
  std::vector<Eigen::VectorXd> x;
  int p = 0;

  static NaiveCox from(const ebms::Dataset& d, ebms::TimeScale scale) {
    NaiveCox n;
    n.p = d.n_covariates();
    const bool reset = scale == ebms::TimeScale::clock_reset;
    for (const auto& r : d.records) {
      n.entry.push_back(reset ? 0.0 : r.t_start);
      n.exit_.push_back(reset ? r.time : r.t_stop);
      n.status.push_back(r.status);
      n.stratum.push_back(r.stratum);
      Eigen::VectorXd xi(n.p);
      for (int j = 0; j < n.p; ++j)
        xi[j] = r.covariates[static_cast<std::size_t>(j)];
      n.x.push_back(std::move(xi));
    }
    return n;
  }

  double value_grad_hess(const Eigen::VectorXd& beta, Eigen::VectorXd& grad,
                         Eigen::MatrixXd& hess) const {
    double ll = 0.0;
    grad = Eigen::VectorXd::Zero(p);
    hess = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t i = 0; i < exit_.size(); ++i) {
      if (status[i] != 1) continue;
      const double t = exit_[i];
      double s0 = 0.0;
      Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
      Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
      for (std::size_t j = 0; j < exit_.size(); ++j) {
        if (stratum[j] != stratum[i]) continue;
        if (!(entry[j] < t && t <= exit_[j])) continue;
        const double w = std::exp(x[j].dot(beta));
        s0 += w;
        s1 += w * x[j];
        s2 += w * x[j] * x[j].transpose();
      }
      ll += x[i].dot(beta) - std::log(s0);
      grad += x[i] - s1 / s0;
      hess -= s2 / s0 - (s1 / s0) * (s1 / s0).transpose();
    }
    return ll;
  }

  double value(const Eigen::VectorXd& beta) const {
    Eigen::VectorXd g;
    Eigen::MatrixXd h;
    return value_grad_hess(beta, g, h);
  }

  // Breslow baseline cumulative hazards per stratum at the zero profile
  std::map<int, ebms::StepFunction> breslow(const Eigen::VectorXd& beta) const {
    std::map<int, std::map<double, int>> events;  // stratum -> time -> count
    for (std::size_t i = 0; i < exit_.size(); ++i)
      if (status[i] == 1) ++events[stratum[i]][exit_[i]];
    std::map<int, ebms::StepFunction> out;
    for (const auto& [st, times] : events) {
      ebms::StepFunction f;
      for (const auto& [t, count] : times) {
        double s0 = 0.0;
        for (std::size_t j = 0; j < exit_.size(); ++j)
          if (stratum[j] == st && entry[j] < t && t <= exit_[j])
            s0 += std::exp(x[j].dot(beta));
        f.add_jump(t, count / s0);
      }
      out[st] = std::move(f);
    }
    return out;
  }
};

// ------------------------------------------------------------- misc

inline double grid_sup_diff(const ebms::OccupancyGrid& a,
                            const ebms::OccupancyGrid& b) {
  double sup = 0.0;
  for (std::size_t i = 0; i < a.probs.size(); ++i)
    for (std::size_t k = 0; k < a.probs[i].size(); ++k)
      sup = std::max(sup, std::abs(a.probs[i][k] - b.probs[i][k]));
  return sup;
}

inline double worst_sum_gap(const ebms::OccupancyGrid& g) {
  double worst = 0.0;
  for (int k = 0; k <= g.K; ++k) {
    double sum = 0.0;
    for (const auto& pv : g.probs) sum += pv[static_cast<std::size_t>(k)];
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// numeric CSV body (everything after the header line)
inline std::vector<std::vector<double>> read_csv_body(const std::string& path,
                                                      std::string* header = nullptr) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  if (header) *header = line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace testutil

// asserts that the statement throws ebms::Error with the given kind
#define CHECK_KIND(stmt, wanted)                                        \
  do {                                                                  \
    bool caught_ = false;                                               \
    try {                                                               \
      stmt;                                                             \
    } catch (const ebms::Error& e_) {                                   \
      caught_ = true;                                                   \
      CHECK(std::string(ebms::kind_name(e_.kind())) == #wanted);        \
    }                                                                   \
    CHECK_MESSAGE(caught_, "expected an error of kind " #wanted);       \
  } while (0)
