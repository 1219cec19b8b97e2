#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ebms/structure.hpp"

namespace ebms {

// One row of the long-format event table: patient `id` was at risk for
// transition `trans` (from -> to) over (t_start, t_stop] on the global
// clock, `time` = t_stop - t_start is the sojourn-scale exposure, and
// status says whether the transition fired at t_stop.
struct EventRecord {
  std::string id;
  int from = 0;  // 0-based state
  int to = 0;    // 0-based state
  int trans = 0; // 1-based transition id
  double t_start = 0.0;
  double t_stop = 0.0;
  double time = 0.0;
  int status = 0;
  int stratum = 0;
  std::vector<double> covariates;
};

// type == 0: column applies to every transition (unexpanded data);
// type > 0: column was produced by transition-specific expansion and is
// live only for transitions of that type.
struct ColumnInfo {
  std::string name;
  int type = 0;
};

struct Dataset {
  std::vector<EventRecord> records;
  std::vector<ColumnInfo> columns;
  // transition id -> covariate type; empty until expansion
  std::map<int, int> transition_type;

  bool expanded() const { return !transition_type.empty(); }
  int n_covariates() const { return static_cast<int>(columns.size()); }
  int column_index(const std::string& name) const;  // -1 if absent
  // covariate type of a transition (0 when unexpanded)
  int type_of(int trans) const;
};

// fixed leading columns of the long-format CSV
extern const std::vector<std::string> kRequiredColumns;

Dataset load_long_csv(const std::string& path, const TransitionStructure& s);
void write_long_csv(const std::string& path, const Dataset& d,
                    const TransitionStructure& s);

// structural checks: transitions consistent with s, intervals coherent,
// each visited state contributes a complete outbound row set with at
// most one event among them, strata constant per transition
void validate_dataset(const Dataset& d, const TransitionStructure& s);

// distinct patient ids in order of first appearance
std::vector<std::string> patient_ids(const Dataset& d);

// covariate rows of one patient keyed by transition id (uses the
// earliest row per transition; covariates are time-fixed)
std::map<int, std::vector<double>> patient_covariate_rows(const Dataset& d,
                                                          const std::string& id);

// transition id -> stratum; fails if a transition appears under two
// strata
std::map<int, int> transition_strata(const Dataset& d);

// the canonical expansion partition: each transition its own type
std::map<int, int> per_transition_partition(const TransitionStructure& s);

// replaces each covariate column by one copy per type: column (x, type)
// is named "x.type", equals x on rows whose transition has that type and
// 0 elsewhere.  Column order: for each base column, types ascending.
Dataset expand_covariates(const Dataset& d, const std::map<int, int>& partition);

// expands a single covariate vector (base space) into the layout of an
// expanded dataset, restricted to one transition: live block gets the
// base values, every other block 0
std::vector<double> expand_profile(const std::vector<double>& base,
                                   int n_base, int trans,
                                   const Dataset& expanded);

// Ridge-prior layout: every covariate column belongs to exactly one
// group; groups share a variance and (optionally) an estimated mean.
struct PriorGrouping {
  std::vector<std::string> column_group;        // per dataset column
  std::vector<std::string> group_names;         // first-appearance order
  std::set<std::string> estimated_mean_groups;  // others have mean fixed at 0

  int n_groups() const { return static_cast<int>(group_names.size()); }
  int group_index(const std::string& g) const;
  std::vector<int> column_group_index() const;  // per column

  static PriorGrouping single_group(const Dataset& d,
                                    const std::string& name = "all");
  static PriorGrouping by_column_type(const Dataset& d);
  static PriorGrouping from_json(const nlohmann::json& j, const Dataset& d);
  nlohmann::json to_json(const Dataset& d) const;
};

}  // namespace ebms
