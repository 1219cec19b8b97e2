#include "ebms/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ebms/errors.hpp"

namespace ebms {

const std::vector<std::string> kRequiredColumns = {
    "id", "from", "to", "trans", "Tstart", "Tstop", "time", "status", "strata"};

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  const char* b = s.data();
  const char* e = b + s.size();
  double v = 0.0;
  auto [p, ec] = std::from_chars(b, e, v);
  require(ec == std::errc() && p == e, ErrorKind::BadInput,
          "cannot parse number '" + s + "' in column " + what);
  return v;
}

int parse_int(const std::string& s, const std::string& what) {
  const char* b = s.data();
  const char* e = b + s.size();
  int v = 0;
  auto [p, ec] = std::from_chars(b, e, v);
  require(ec == std::errc() && p == e, ErrorKind::BadInput,
          "cannot parse integer '" + s + "' in column " + what);
  return v;
}

std::string format_double(double v) {
  char buf[40];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

}  // namespace

int Dataset::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name) return static_cast<int>(i);
  return -1;
}

int Dataset::type_of(int trans) const {
  auto it = transition_type.find(trans);
  return it == transition_type.end() ? 0 : it->second;
}

Dataset load_long_csv(const std::string& path, const TransitionStructure& s) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::BadInput, "cannot open '" + path + "'");

  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::BadInput,
          "'" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv_line(line);
  require(header.size() >= kRequiredColumns.size(), ErrorKind::MissingColumn,
          "header has " + std::to_string(header.size()) +
              " columns; expected at least " +
              std::to_string(kRequiredColumns.size()));
  for (std::size_t i = 0; i < kRequiredColumns.size(); ++i)
    require(header[i] == kRequiredColumns[i], ErrorKind::MissingColumn,
            "column " + std::to_string(i + 1) + " must be '" +
                kRequiredColumns[i] + "', found '" + header[i] + "'");

  Dataset d;
  for (std::size_t i = kRequiredColumns.size(); i < header.size(); ++i) {
    require(!header[i].empty(), ErrorKind::MissingColumn,
            "covariate column " + std::to_string(i + 1) + " has no name");
    d.columns.push_back({header[i], 0});
  }
  const std::size_t ncol = header.size();

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    require(fields.size() == ncol, ErrorKind::BadInput,
            "line " + std::to_string(lineno) + " has " +
                std::to_string(fields.size()) + " fields; expected " +
                std::to_string(ncol));
    EventRecord r;
    r.id = fields[0];
    r.from = parse_int(fields[1], "from") - 1;
    r.to = parse_int(fields[2], "to") - 1;
    r.trans = parse_int(fields[3], "trans");
    r.t_start = parse_double(fields[4], "Tstart");
    r.t_stop = parse_double(fields[5], "Tstop");
    r.time = parse_double(fields[6], "time");
    r.status = parse_int(fields[7], "status");
    r.stratum = parse_int(fields[8], "strata");
    r.covariates.reserve(ncol - kRequiredColumns.size());
    for (std::size_t i = kRequiredColumns.size(); i < ncol; ++i)
      r.covariates.push_back(parse_double(fields[i], header[i]));
    d.records.push_back(std::move(r));
  }

  validate_dataset(d, s);
  return d;
}

void write_long_csv(const std::string& path, const Dataset& d,
                    const TransitionStructure& s) {
  (void)s;
  std::ofstream out(path);
  require(out.good(), ErrorKind::BadInput, "cannot write '" + path + "'");
  for (std::size_t i = 0; i < kRequiredColumns.size(); ++i) {
    if (i) out << ',';
    out << kRequiredColumns[i];
  }
  for (const auto& c : d.columns) out << ',' << c.name;
  out << '\n';
  for (const auto& r : d.records) {
    out << r.id << ',' << (r.from + 1) << ',' << (r.to + 1) << ',' << r.trans
        << ',' << format_double(r.t_start) << ',' << format_double(r.t_stop)
        << ',' << format_double(r.time) << ',' << r.status << ',' << r.stratum;
    for (double v : r.covariates) out << ',' << format_double(v);
    out << '\n';
  }
}

void validate_dataset(const Dataset& d, const TransitionStructure& s) {
  const int S = s.n_states();
  const std::size_t p = d.columns.size();
  // (id, from, t_start) -> transition rows seen for that visit
  std::map<std::tuple<std::string, int, double>, std::vector<const EventRecord*>>
      visits;

  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& r = d.records[i];
    const std::string where = "row " + std::to_string(i + 1) + " (id=" + r.id + ")";
    require(r.from >= 0 && r.from < S && r.to >= 0 && r.to < S,
            ErrorKind::UnknownTransition, where + ": state out of range");
    require(r.trans >= 1 && r.trans <= s.n_transitions(),
            ErrorKind::UnknownTransition,
            where + ": transition id " + std::to_string(r.trans));
    const auto& t = s.transition(r.trans);
    require(t.from == r.from && t.to == r.to, ErrorKind::UnknownTransition,
            where + ": trans " + std::to_string(r.trans) +
                " does not connect the given states");
    require(r.status == 0 || r.status == 1, ErrorKind::BadInput,
            where + ": status must be 0 or 1");
    require(r.t_stop > r.t_start, ErrorKind::InconsistentInterval,
            where + ": Tstop must exceed Tstart");
    require(r.time > 0.0, ErrorKind::InconsistentInterval,
            where + ": time must be positive");
    double gap = std::abs(r.time - (r.t_stop - r.t_start));
    require(gap <= 1e-8 * std::max(1.0, std::abs(r.t_stop)),
            ErrorKind::InconsistentInterval,
            where + ": time must equal Tstop - Tstart");
    require(r.covariates.size() == p, ErrorKind::BadInput,
            where + ": covariate count mismatch");
    for (double v : r.covariates)
      require(std::isfinite(v), ErrorKind::BadInput,
              where + ": covariates must be finite");
    visits[{r.id, r.from, r.t_start}].push_back(&r);
  }

  // each visit must carry the full outbound set over one interval, with
  // at most one event
  for (const auto& [key, rows] : visits) {
    const auto& [id, from, t0] = key;
    const auto& outs = s.out_transitions(from);
    const std::string where =
        "patient " + id + ", state " + s.state_names()[static_cast<std::size_t>(from)];
    std::set<int> seen;
    int n_events = 0;
    for (const auto* r : rows) {
      require(seen.insert(r->trans).second, ErrorKind::IncompleteOutboundSet,
              where + ": transition " + std::to_string(r->trans) +
                  " appears twice in one visit");
      require(r->t_stop == rows.front()->t_stop, ErrorKind::InconsistentInterval,
              where + ": outbound rows disagree on Tstop");
      n_events += r->status;
    }
    require(n_events <= 1, ErrorKind::DuplicateStatusOne,
            where + ": more than one status=1 row in a visit");
    require(seen.size() == outs.size(), ErrorKind::IncompleteOutboundSet,
            where + ": visit covers " + std::to_string(seen.size()) + " of " +
                std::to_string(outs.size()) + " outbound transitions");
  }

  transition_strata(d);  // throws on inconsistency
}

std::vector<std::string> patient_ids(const Dataset& d) {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& r : d.records)
    if (seen.insert(r.id).second) ids.push_back(r.id);
  return ids;
}

std::map<int, std::vector<double>> patient_covariate_rows(const Dataset& d,
                                                          const std::string& id) {
  std::map<int, std::vector<double>> rows;
  for (const auto& r : d.records)
    if (r.id == id && !rows.count(r.trans)) rows[r.trans] = r.covariates;
  return rows;
}

std::map<int, int> transition_strata(const Dataset& d) {
  std::map<int, int> strata;
  for (const auto& r : d.records) {
    auto [it, inserted] = strata.insert({r.trans, r.stratum});
    require(inserted || it->second == r.stratum, ErrorKind::BadInput,
            "transition " + std::to_string(r.trans) +
                " appears under two strata");
  }
  return strata;
}

std::map<int, int> per_transition_partition(const TransitionStructure& s) {
  std::map<int, int> part;
  for (const auto& t : s.transitions()) part[t.id] = t.id;
  return part;
}

Dataset expand_covariates(const Dataset& d, const std::map<int, int>& partition) {
  require(!d.expanded(), ErrorKind::BadInput, "dataset is already expanded");
  std::vector<int> types;
  for (const auto& [trans, type] : partition) {
    require(type >= 1, ErrorKind::BadInput, "covariate types must be >= 1");
    types.push_back(type);
  }
  std::sort(types.begin(), types.end());
  types.erase(std::unique(types.begin(), types.end()), types.end());
  const int T = static_cast<int>(types.size());
  const int p = d.n_covariates();

  Dataset out;
  out.transition_type = partition;
  out.columns.reserve(static_cast<std::size_t>(p) * static_cast<std::size_t>(T));
  for (const auto& c : d.columns)
    for (int type : types)
      out.columns.push_back({c.name + "." + std::to_string(type), type});

  out.records.reserve(d.records.size());
  for (const auto& r : d.records) {
    auto it = partition.find(r.trans);
    require(it != partition.end(), ErrorKind::UnknownTransition,
            "transition " + std::to_string(r.trans) +
                " missing from the type partition");
    const int type = it->second;
    const int block = static_cast<int>(
        std::lower_bound(types.begin(), types.end(), type) - types.begin());
    EventRecord e = r;
    e.covariates.assign(out.columns.size(), 0.0);
    for (int j = 0; j < p; ++j)
      e.covariates[static_cast<std::size_t>(j * T + block)] =
          r.covariates[static_cast<std::size_t>(j)];
    out.records.push_back(std::move(e));
  }
  return out;
}

std::vector<double> expand_profile(const std::vector<double>& base, int n_base,
                                   int trans, const Dataset& expanded) {
  require(static_cast<int>(base.size()) == n_base, ErrorKind::BadInput,
          "profile length mismatch");
  std::vector<double> out(expanded.columns.size(), 0.0);
  if (!expanded.expanded()) {
    require(n_base == expanded.n_covariates(), ErrorKind::BadInput,
            "profile length mismatch");
    return base;
  }
  const int type = expanded.type_of(trans);
  const int T = static_cast<int>(expanded.columns.size()) / std::max(1, n_base);
  require(n_base * T == static_cast<int>(expanded.columns.size()),
          ErrorKind::BadInput, "profile length mismatch");
  for (int j = 0; j < static_cast<int>(expanded.columns.size()); ++j) {
    if (expanded.columns[static_cast<std::size_t>(j)].type == type)
      out[static_cast<std::size_t>(j)] = base[static_cast<std::size_t>(j / T)];
  }
  return out;
}

int PriorGrouping::group_index(const std::string& g) const {
  for (std::size_t i = 0; i < group_names.size(); ++i)
    if (group_names[i] == g) return static_cast<int>(i);
  return -1;
}

std::vector<int> PriorGrouping::column_group_index() const {
  std::vector<int> idx(column_group.size());
  for (std::size_t j = 0; j < column_group.size(); ++j) {
    int g = group_index(column_group[j]);
    require(g >= 0, ErrorKind::BadInput,
            "column group '" + column_group[j] + "' is not listed");
    idx[j] = g;
  }
  return idx;
}

PriorGrouping PriorGrouping::single_group(const Dataset& d,
                                          const std::string& name) {
  PriorGrouping g;
  g.column_group.assign(d.columns.size(), name);
  if (!d.columns.empty()) g.group_names.push_back(name);
  return g;
}

PriorGrouping PriorGrouping::by_column_type(const Dataset& d) {
  PriorGrouping g;
  for (const auto& c : d.columns) {
    std::string name = "type" + std::to_string(c.type);
    g.column_group.push_back(name);
    if (g.group_index(name) < 0) g.group_names.push_back(name);
  }
  return g;
}

PriorGrouping PriorGrouping::from_json(const nlohmann::json& j,
                                       const Dataset& d) {
  require(j.is_object(), ErrorKind::BadInput,
          "grouping json must be an object");
  const nlohmann::json* assign = &j;
  PriorGrouping g;
  if (j.contains("assignments")) {
    assign = &j.at("assignments");
    if (j.contains("estimated_mean"))
      for (const auto& name : j.at("estimated_mean"))
        g.estimated_mean_groups.insert(name.get<std::string>());
  }
  require(assign->is_object(), ErrorKind::BadInput,
          "grouping assignments must map column names to group names");
  g.column_group.assign(d.columns.size(), "");
  for (const auto& [col, grp] : assign->items()) {
    int idx = d.column_index(col);
    require(idx >= 0, ErrorKind::MissingColumn,
            "grouping refers to unknown column '" + col + "'");
    g.column_group[static_cast<std::size_t>(idx)] = grp.get<std::string>();
  }
  for (std::size_t jcol = 0; jcol < d.columns.size(); ++jcol) {
    require(!g.column_group[jcol].empty(), ErrorKind::MissingColumn,
            "column '" + d.columns[jcol].name + "' has no group");
    if (g.group_index(g.column_group[jcol]) < 0)
      g.group_names.push_back(g.column_group[jcol]);
  }
  for (const auto& name : g.estimated_mean_groups)
    require(g.group_index(name) >= 0, ErrorKind::BadInput,
            "estimated_mean group '" + name + "' assigns no columns");
  return g;
}

nlohmann::json PriorGrouping::to_json(const Dataset& d) const {
  nlohmann::json assign = nlohmann::json::object();
  for (std::size_t j = 0; j < column_group.size(); ++j)
    assign[d.columns[j].name] = column_group[j];
  if (estimated_mean_groups.empty()) return assign;
  nlohmann::json out;
  out["assignments"] = assign;
  out["estimated_mean"] = estimated_mean_groups;
  return out;
}

}  // namespace ebms
