#include "ebms/cumhaz.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ebms/errors.hpp"

namespace ebms {

namespace {

std::string format_double(double v) {
  char buf[40];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

// base covariate names of a fit, in block order; for unexpanded fits the
// column names themselves
std::vector<std::string> base_names(const MultiStateFit& fit) {
  std::vector<std::string> names;
  int first_type = 0;
  for (const auto& c : fit.columns)
    if (c.type > 0) {
      first_type = first_type == 0 ? c.type : std::min(first_type, c.type);
    }
  for (const auto& c : fit.columns) {
    if (first_type == 0) {
      names.push_back(c.name);
    } else if (c.type == first_type) {
      std::string suffix = "." + std::to_string(c.type);
      names.push_back(c.name.substr(0, c.name.size() - suffix.size()));
    }
  }
  return names;
}

}  // namespace

double HazardBundle::last_jump_time() const {
  double t = 0.0;
  for (const auto& [trans, fn] : cumhaz) t = std::max(t, fn.last_time());
  return t;
}

HazardBundle subject_hazards(const MultiStateFit& fit,
                             const TransitionStructure& s,
                             const std::vector<PatientRow>& rows) {
  std::map<int, const PatientRow*> by_trans;
  for (const auto& r : rows) {
    require(r.trans >= 1 && r.trans <= s.n_transitions(),
            ErrorKind::UnknownTransition,
            "patient row for unknown transition " + std::to_string(r.trans));
    require(by_trans.emplace(r.trans, &r).second, ErrorKind::MissingTransitionRow,
            "two patient rows for transition " + std::to_string(r.trans));
  }

  HazardBundle bundle;
  bundle.scale = fit.scale;
  bundle.structure = s;
  for (const auto& t : s.transitions()) {
    auto it = by_trans.find(t.id);
    require(it != by_trans.end(), ErrorKind::MissingTransitionRow,
            "no patient row for transition " + std::to_string(t.id));
    const PatientRow& row = *it->second;

    auto st = fit.transition_stratum.find(t.id);
    if (st == fit.transition_stratum.end()) {
      // transition never observed in training: flat hazard
      bundle.cumhaz[t.id] = StepFunction{};
      continue;
    }
    require(row.stratum == st->second, ErrorKind::BadInput,
            "patient row stratum " + std::to_string(row.stratum) +
                " does not match fitted stratum " + std::to_string(st->second) +
                " for transition " + std::to_string(t.id));
    auto base = fit.baselines.find(st->second);
    require(base != fit.baselines.end(), ErrorKind::BadInput,
            "no baseline for stratum " + std::to_string(st->second));
    const double lp = fit.linear_predictor(t.id, row.covariates);
    bundle.cumhaz[t.id] = base->second.scaled(std::exp(lp));
  }
  return bundle;
}

HazardBundle baseline_hazards(const MultiStateFit& fit,
                              const TransitionStructure& s) {
  std::vector<PatientRow> rows;
  for (const auto& t : s.transitions()) {
    PatientRow r;
    r.trans = t.id;
    auto st = fit.transition_stratum.find(t.id);
    r.stratum = st == fit.transition_stratum.end() ? 0 : st->second;
    r.covariates.assign(fit.columns.size(), 0.0);
    rows.push_back(std::move(r));
  }
  return subject_hazards(fit, s, rows);
}

void write_bundle_csv(const std::string& path, const HazardBundle& bundle) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::BadInput, "cannot write '" + path + "'");
  out << "trans,time,cumhaz\n";
  for (const auto& [trans, fn] : bundle.cumhaz)
    for (std::size_t i = 0; i < fn.times.size(); ++i)
      out << trans << ',' << format_double(fn.times[i]) << ','
          << format_double(fn.values[i]) << '\n';
}

std::vector<PatientRow> load_patient_csv(const std::string& path,
                                         const TransitionStructure& s,
                                         const MultiStateFit& fit) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::BadInput, "cannot open '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::BadInput,
          "'" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) header.push_back(f);
  }
  require(header.size() >= 2 && header[0] == "trans" && header[1] == "strata",
          ErrorKind::MissingColumn,
          "patient file must start with columns 'trans,strata'");
  const auto bases = base_names(fit);
  require(header.size() == bases.size() + 2, ErrorKind::MissingColumn,
          "patient file must carry the " + std::to_string(bases.size()) +
              " fitted covariates");
  for (std::size_t j = 0; j < bases.size(); ++j)
    require(header[j + 2] == bases[j], ErrorKind::MissingColumn,
            "patient column '" + header[j + 2] + "' should be '" + bases[j] + "'");

  std::vector<PatientRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    require(fields.size() == header.size(), ErrorKind::BadInput,
            "patient row has " + std::to_string(fields.size()) + " fields");

    PatientRow r;
    auto parse_int = [&](const std::string& v) {
      int out = 0;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
      require(ec == std::errc() && p == v.data() + v.size(), ErrorKind::BadInput,
              "cannot parse integer '" + v + "' in patient file");
      return out;
    };
    r.trans = parse_int(fields[0]);
    r.stratum = parse_int(fields[1]);

    std::vector<double> base(bases.size());
    for (std::size_t j = 0; j < bases.size(); ++j) {
      const std::string& v = fields[j + 2];
      double val = 0.0;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), val);
      require(ec == std::errc() && p == v.data() + v.size(), ErrorKind::BadInput,
              "cannot parse number '" + v + "' in patient file");
      base[j] = val;
    }

    // place base values into the covariate block live for this row's
    // transition
    r.covariates.assign(fit.columns.size(), 0.0);
    auto tt = fit.transition_type.find(r.trans);
    const int type = tt == fit.transition_type.end() ? 0 : tt->second;
    if (type == 0) {
      require(base.size() == fit.columns.size(), ErrorKind::BadInput,
              "covariate count mismatch in patient file");
      r.covariates = base;
    } else {
      std::size_t k = 0;
      for (std::size_t j = 0; j < fit.columns.size(); ++j) {
        std::string expect = bases[k] + "." + std::to_string(type);
        if (fit.columns[j].type == type && fit.columns[j].name == expect) {
          r.covariates[j] = base[k];
          if (++k == bases.size()) break;
        }
      }
      require(k == bases.size(), ErrorKind::BadInput,
              "could not map patient covariates onto fitted columns");
    }
    rows.push_back(std::move(r));
  }
  (void)s;
  return rows;
}

}  // namespace ebms
