#include <doctest.h>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "ebms/cumhaz.hpp"
#include "ebms/empbayes.hpp"
#include "ebms/errors.hpp"
#include "helpers.hpp"

using namespace ebms;

TEST_SUITE_BEGIN("cumhaz");

namespace {

struct Fixture {
  Dataset data;
  TransitionStructure structure;
  MultiStateFit fit;
};

Fixture fitted_cohort() {
  auto [d, s] = testutil::small_cohort(120, 2, 31, /*expand=*/true);
  auto grouping = PriorGrouping::by_column_type(d);
  Fixture f{std::move(d), std::move(s), {}};
  f.fit = fit_empirical_bayes(f.data, f.structure, grouping);
  REQUIRE(f.fit.converged);
  return f;
}

std::vector<PatientRow> rows_for(const Fixture& f, const std::vector<double>& base) {
  std::vector<PatientRow> rows;
  for (const auto& t : f.structure.transitions()) {
    PatientRow r;
    r.trans = t.id;
    r.stratum = f.fit.transition_stratum.at(t.id);
    r.covariates = expand_profile(base, static_cast<int>(base.size()), t.id, f.data);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace

TEST_CASE("subject curves are the stratum baselines scaled by exp(lp)") {
  const auto f = fitted_cohort();
  const std::vector<double> base{1.0, 0.0};
  const auto rows = rows_for(f, base);
  const auto bundle = subject_hazards(f.fit, f.structure, rows);

  REQUIRE(bundle.cumhaz.size() == 2);
  CHECK(bundle.scale == TimeScale::clock_reset);
  for (const auto& t : f.structure.transitions()) {
    const auto& curve = bundle.cumhaz.at(t.id);
    const auto& baseline = f.fit.baselines.at(f.fit.transition_stratum.at(t.id));
    const double lp = f.fit.linear_predictor(
        t.id, rows[static_cast<std::size_t>(t.id - 1)].covariates);
    REQUIRE(curve.times.size() == baseline.times.size());
    for (std::size_t i = 0; i < curve.times.size(); ++i) {
      CHECK(curve.times[i] == baseline.times[i]);
      CHECK(curve.values[i] ==
            doctest::Approx(baseline.values[i] * std::exp(lp)).epsilon(1e-12));
    }
  }
  CHECK(bundle.last_jump_time() > 0.0);

  // the zero profile is exactly the baseline bundle
  const auto zero = baseline_hazards(f.fit, f.structure);
  for (const auto& [trans, curve] : zero.cumhaz) {
    const auto& baseline = f.fit.baselines.at(f.fit.transition_stratum.at(trans));
    CHECK(curve.values == baseline.values);
  }
}

TEST_CASE("incomplete or inconsistent patient rows are rejected") {
  const auto f = fitted_cohort();
  auto rows = rows_for(f, {0.5, -0.5});

  auto missing = rows;
  missing.pop_back();
  CHECK_KIND((void)subject_hazards(f.fit, f.structure, missing),
             MissingTransitionRow);

  auto duplicated = rows;
  duplicated.push_back(rows[0]);
  CHECK_KIND((void)subject_hazards(f.fit, f.structure, duplicated),
             MissingTransitionRow);

  auto bad_stratum = rows;
  bad_stratum[0].stratum = 99;
  CHECK_KIND((void)subject_hazards(f.fit, f.structure, bad_stratum), BadInput);

  auto bad_trans = rows;
  bad_trans[0].trans = 9;
  CHECK_KIND((void)subject_hazards(f.fit, f.structure, bad_trans),
             UnknownTransition);
}

TEST_CASE("bundle csv carries every curve with its origin anchor") {
  const auto f = fitted_cohort();
  const auto bundle = baseline_hazards(f.fit, f.structure);
  testutil::TempDir tmp;
  const auto path = tmp.file("bundle.csv");
  write_bundle_csv(path, bundle);

  std::string header;
  const auto rows = testutil::read_csv_body(path, &header);
  CHECK(header == "trans,time,cumhaz");
  std::size_t expected = 0;
  for (const auto& [trans, curve] : bundle.cumhaz) expected += curve.times.size();
  REQUIRE(rows.size() == expected);

  // first row of each transition is the (0, 0) anchor; times ascend
  int prev_trans = 0;
  double prev_time = -1.0;
  for (const auto& row : rows) {
    REQUIRE(row.size() == 3);
    const int trans = static_cast<int>(row[0]);
    if (trans != prev_trans) {
      CHECK(row[1] == 0.0);
      CHECK(row[2] == 0.0);
      prev_trans = trans;
    } else {
      CHECK(row[1] > prev_time);
    }
    prev_time = row[1];
  }
}

TEST_CASE("patient csv expands base covariates into the fitted layout") {
  const auto f = fitted_cohort();
  testutil::TempDir tmp;
  const auto path = tmp.file("patient.csv");
  {
    std::ofstream out(path);
    out << "trans,strata,x1,x2\n";
    out << "1,1,0.5,1\n";
    out << "2,2,0.5,1\n";
  }
  const auto rows = load_patient_csv(path, f.structure, f.fit);
  REQUIRE(rows.size() == 2);
  const auto want = rows_for(f, {0.5, 1.0});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].trans == want[i].trans);
    CHECK(rows[i].stratum == want[i].stratum);
    CHECK(rows[i].covariates == want[i].covariates);
  }

  // header must spell the base covariates exactly
  {
    std::ofstream out(path);
    out << "trans,strata,x1\n1,1,0.5\n";
  }
  CHECK_KIND((void)load_patient_csv(path, f.structure, f.fit), MissingColumn);
  {
    std::ofstream out(path);
    out << "trans,strata,x1,x2\n1,1,0.5,oops\n";
  }
  CHECK_KIND((void)load_patient_csv(path, f.structure, f.fit), BadInput);
}

TEST_CASE("unexpanded fits use the covariates as-is") {
  auto [d, s] = testutil::small_cohort(100, 2, 17, /*expand=*/false);
  const auto fit = fit_cox_mle(d, s);
  REQUIRE(fit.converged);

  testutil::TempDir tmp;
  const auto path = tmp.file("patient.csv");
  {
    std::ofstream out(path);
    out << "trans,strata,x1,x2\n";
    out << "1,1,1,0\n";
    out << "2,2,1,0\n";
  }
  const auto rows = load_patient_csv(path, s, fit);
  REQUIRE(rows.size() == 2);
  CHECK((rows[0].covariates == std::vector<double>{1.0, 0.0}));

  const auto bundle = subject_hazards(fit, s, rows);
  const double lp = fit.beta[0];  // x1 coefficient only
  const auto& baseline = fit.baselines.at(1);
  CHECK(bundle.cumhaz.at(1).last_value() ==
        doctest::Approx(baseline.last_value() * std::exp(lp)).epsilon(1e-12));
}

TEST_SUITE_END();
