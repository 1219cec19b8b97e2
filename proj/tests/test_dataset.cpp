#include <doctest.h>

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ebms/dataset.hpp"
#include "ebms/errors.hpp"
#include "ebms/simulate.hpp"
#include "helpers.hpp"

using namespace ebms;

TEST_SUITE_BEGIN("dataset");

namespace {

// one complete visit of `id` at the root of a two-transition fork
void add_fork_visit(Dataset& d, const std::string& id, double stop,
                    int event_trans, double x) {
  for (int trans = 1; trans <= 2; ++trans) {
    EventRecord r;
    r.id = id;
    r.from = 0;
    r.to = trans;  // fork: 1 -> 2 and 1 -> 3
    r.trans = trans;
    r.t_start = 0.0;
    r.t_stop = stop;
    r.time = stop;
    r.status = trans == event_trans ? 1 : 0;
    r.stratum = trans;
    r.covariates = {x};
    d.records.push_back(std::move(r));
  }
}

Dataset fork_dataset() {
  Dataset d = testutil::cox_dataset(1);
  add_fork_visit(d, "a", 1.0, 1, 0.5);
  add_fork_visit(d, "b", 2.0, 2, -0.5);
  add_fork_visit(d, "c", 3.0, 0, 1.0);
  return d;
}

}  // namespace

TEST_CASE("csv write/load round trip is byte stable") {
  SimSpec spec;
  spec.structure = testutil::chain3();
  spec.n_patients = 20;
  spec.n_covariates = 3;
  spec.c_admin = 4.0;
  spec.seed = 5;
  const Dataset d = simulate_cohort(spec);

  testutil::TempDir tmp;
  const auto p1 = tmp.file("a.csv");
  const auto p2 = tmp.file("b.csv");
  write_long_csv(p1, d, spec.structure);
  const Dataset d2 = load_long_csv(p1, spec.structure);
  write_long_csv(p2, d2, spec.structure);
  CHECK(testutil::read_file(p1) == testutil::read_file(p2));

  REQUIRE(d2.records.size() == d.records.size());
  REQUIRE(d2.columns.size() == d.columns.size());
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    CHECK(d2.records[i].id == d.records[i].id);
    CHECK(d2.records[i].trans == d.records[i].trans);
    CHECK(d2.records[i].from == d.records[i].from);
    CHECK(d2.records[i].t_stop == d.records[i].t_stop);
    CHECK(d2.records[i].status == d.records[i].status);
    CHECK(d2.records[i].covariates == d.records[i].covariates);
  }
  validate_dataset(d2, spec.structure);
}

TEST_CASE("csv loader rejects malformed files") {
  testutil::TempDir tmp;
  const auto s = testutil::two_state();

  const auto path = tmp.file("bad.csv");
  {
    std::ofstream out(path);
    out << "id,from,to,trans,Tstart,Tstop,status,time,strata\n";  // swapped
  }
  CHECK_KIND(load_long_csv(path, s), MissingColumn);

  {
    std::ofstream out(path);
    out << "id,from,to,trans,Tstart,Tstop,time,status,strata,x1\n";
    out << "1,1,2,1,0,1,1,1,1\n";  // short row
  }
  CHECK_KIND(load_long_csv(path, s), BadInput);

  {
    std::ofstream out(path);
    out << "id,from,to,trans,Tstart,Tstop,time,status,strata,x1\n";
    out << "1,1,2,1,0,1,1,1,1,oops\n";
  }
  CHECK_KIND(load_long_csv(path, s), BadInput);

  CHECK_KIND(load_long_csv(tmp.file("absent.csv"), s), BadInput);
}

TEST_CASE("validation catches each structural defect") {
  const auto fork = testutil::competing3();
  CHECK_NOTHROW(validate_dataset(fork_dataset(), fork));

  SUBCASE("unknown transition") {
    Dataset d = fork_dataset();
    d.records[0].trans = 7;
    CHECK_KIND(validate_dataset(d, fork), UnknownTransition);
    d = fork_dataset();
    d.records[0].to = 2;  // states no longer match trans 1
    CHECK_KIND(validate_dataset(d, fork), UnknownTransition);
  }
  SUBCASE("bad status") {
    Dataset d = fork_dataset();
    d.records[0].status = 2;
    CHECK_KIND(validate_dataset(d, fork), BadInput);
  }
  SUBCASE("intervals") {
    Dataset d = fork_dataset();
    d.records[0].t_stop = d.records[0].t_start;
    CHECK_KIND(validate_dataset(d, fork), InconsistentInterval);
    d = fork_dataset();
    d.records[0].time = d.records[0].time + 0.5;  // != Tstop - Tstart
    CHECK_KIND(validate_dataset(d, fork), InconsistentInterval);
    d = fork_dataset();
    d.records[1].t_stop = 9.0;  // outbound rows disagree
    d.records[1].time = 9.0;
    CHECK_KIND(validate_dataset(d, fork), InconsistentInterval);
  }
  SUBCASE("visit composition") {
    Dataset d = fork_dataset();
    d.records.erase(d.records.begin());  // visit covers 1 of 2 transitions
    CHECK_KIND(validate_dataset(d, fork), IncompleteOutboundSet);
    d = fork_dataset();
    d.records[1] = d.records[0];  // same transition twice
    CHECK_KIND(validate_dataset(d, fork), IncompleteOutboundSet);
    d = fork_dataset();
    d.records[0].status = 1;
    d.records[1].status = 1;
    CHECK_KIND(validate_dataset(d, fork), DuplicateStatusOne);
  }
  SUBCASE("strata constant per transition") {
    Dataset d = fork_dataset();
    d.records[0].stratum = 9;  // trans 1 appears under 9 and 1
    CHECK_KIND(validate_dataset(d, fork), BadInput);
  }
  SUBCASE("covariate hygiene") {
    Dataset d = fork_dataset();
    d.records[0].covariates = {1.0, 2.0};
    CHECK_KIND(validate_dataset(d, fork), BadInput);
    d = fork_dataset();
    d.records[0].covariates = {std::nan("")};
    CHECK_KIND(validate_dataset(d, fork), BadInput);
  }
}

TEST_CASE("patient helpers") {
  const Dataset d = fork_dataset();
  CHECK((patient_ids(d) == std::vector<std::string>{"a", "b", "c"}));
  const auto rows = patient_covariate_rows(d, "b");
  REQUIRE(rows.size() == 2);
  CHECK(rows.at(1) == std::vector<double>{-0.5});
  CHECK(rows.at(2) == std::vector<double>{-0.5});
  const auto strata = transition_strata(d);
  CHECK(strata.at(1) == 1);
  CHECK(strata.at(2) == 2);
}

TEST_CASE("per-transition expansion layout and values") {
  const auto fork = testutil::competing3();
  const Dataset base = fork_dataset();
  const auto part = per_transition_partition(fork);
  REQUIRE((part == std::map<int, int>{{1, 1}, {2, 2}}));

  const Dataset e = expand_covariates(base, part);
  CHECK(e.expanded());
  REQUIRE(e.columns.size() == 2);  // one base column, two types
  CHECK(e.columns[0].name == "x1.1");
  CHECK(e.columns[0].type == 1);
  CHECK(e.columns[1].name == "x1.2");
  CHECK(e.columns[1].type == 2);
  CHECK(e.type_of(1) == 1);
  CHECK(e.type_of(2) == 2);
  CHECK(e.column_index("x1.2") == 1);
  CHECK(e.column_index("nope") == -1);

  for (const auto& r : e.records) {
    const auto& orig = base.records[static_cast<std::size_t>(
        &r - e.records.data())];
    if (r.trans == 1) {
      CHECK((r.covariates == std::vector<double>{orig.covariates[0], 0.0}));
    } else {
      CHECK((r.covariates == std::vector<double>{0.0, orig.covariates[0]}));
    }
  }
  validate_dataset(e, fork);

  CHECK_KIND(expand_covariates(e, part), BadInput);      // already expanded
  CHECK_KIND(expand_covariates(base, {{1, 0}, {2, 1}}), BadInput);
  CHECK_KIND(expand_covariates(base, {{1, 1}}), UnknownTransition);

  // shared type: both transitions read the same coefficient block
  const Dataset shared = expand_covariates(base, {{1, 1}, {2, 1}});
  REQUIRE(shared.columns.size() == 1);
  CHECK(shared.columns[0].name == "x1.1");
  CHECK(shared.records[0].covariates == std::vector<double>{0.5});
  CHECK(shared.records[1].covariates == std::vector<double>{0.5});
}

TEST_CASE("multi-column expansion keeps the block order") {
  Dataset d = testutil::cox_dataset(2);
  testutil::add_row(d, "a", 1, 1, 0.0, 1.0, 1, {3.0, 4.0});
  const Dataset e = expand_covariates(d, {{1, 1}, {2, 2}});
  REQUIRE(e.columns.size() == 4);
  CHECK(e.columns[0].name == "x1.1");
  CHECK(e.columns[1].name == "x1.2");
  CHECK(e.columns[2].name == "x2.1");
  CHECK(e.columns[3].name == "x2.2");
  CHECK((e.records[0].covariates == std::vector<double>{3.0, 0.0, 4.0, 0.0}));

  const auto prof = expand_profile({3.0, 4.0}, 2, 2, e);
  CHECK((prof == std::vector<double>{0.0, 3.0, 0.0, 4.0}));
  const auto prof1 = expand_profile({3.0, 4.0}, 2, 1, e);
  CHECK((prof1 == std::vector<double>{3.0, 0.0, 4.0, 0.0}));
}

TEST_CASE("prior groupings") {
  const auto fork = testutil::competing3();
  const Dataset e = expand_covariates(fork_dataset(), per_transition_partition(fork));

  const auto single = PriorGrouping::single_group(e);
  CHECK(single.n_groups() == 1);
  CHECK((single.column_group == std::vector<std::string>{"all", "all"}));

  const auto by_type = PriorGrouping::by_column_type(e);
  CHECK((by_type.group_names == std::vector<std::string>{"type1", "type2"}));
  CHECK((by_type.column_group == std::vector<std::string>{"type1", "type2"}));
  CHECK(by_type.group_index("type2") == 1);
  CHECK(by_type.group_index("nope") == -1);
  CHECK((by_type.column_group_index() == std::vector<int>{0, 1}));

  // flat column -> group object
  const auto flat = PriorGrouping::from_json(
      nlohmann::json{{"x1.1", "g1"}, {"x1.2", "g2"}}, e);
  CHECK(flat.n_groups() == 2);
  CHECK(flat.estimated_mean_groups.empty());

  // assignments + estimated means
  nlohmann::json j;
  j["assignments"] = {{"x1.1", "g"}, {"x1.2", "g"}};
  j["estimated_mean"] = {"g"};
  const auto with_mean = PriorGrouping::from_json(j, e);
  CHECK(with_mean.n_groups() == 1);
  CHECK(with_mean.estimated_mean_groups.count("g") == 1);

  // round trip through json
  auto g2 = PriorGrouping::from_json(with_mean.to_json(e), e);
  CHECK(g2.column_group == with_mean.column_group);
  CHECK(g2.estimated_mean_groups == with_mean.estimated_mean_groups);

  CHECK_KIND(PriorGrouping::from_json(nlohmann::json{{"zzz", "g"}}, e),
             MissingColumn);
  CHECK_KIND(PriorGrouping::from_json(nlohmann::json{{"x1.1", "g"}}, e),
             MissingColumn);  // x1.2 uncovered
  nlohmann::json bad;
  bad["assignments"] = {{"x1.1", "g"}, {"x1.2", "g"}};
  bad["estimated_mean"] = {"other"};
  CHECK_KIND(PriorGrouping::from_json(bad, e), BadInput);
}

TEST_SUITE_END();
