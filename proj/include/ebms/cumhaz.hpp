#pragma once

#include <map>
#include <string>
#include <vector>

#include "ebms/empbayes.hpp"
#include "ebms/step_function.hpp"
#include "ebms/structure.hpp"

namespace ebms {

// Per-transition cumulative hazards for one covariate profile; the
// common input of every occupation-probability estimator.
struct HazardBundle {
  TimeScale scale = TimeScale::clock_reset;
  TransitionStructure structure;
  std::map<int, StepFunction> cumhaz;  // transition id -> curve

  double last_jump_time() const;  // 0 when no transition has jumps
};

// Covariate values of one subject for one transition, in the fitted
// (expanded) covariate space.
struct PatientRow {
  int trans = 0;
  int stratum = 0;
  std::vector<double> covariates;
};

// Breslow transition hazards for a subject: the stratum baseline scaled
// by exp(linear predictor) per transition.  Every structure transition
// needs exactly one row (MissingTransitionRow otherwise), and row strata
// must match the strata seen in training.
HazardBundle subject_hazards(const MultiStateFit& fit,
                             const TransitionStructure& s,
                             const std::vector<PatientRow>& rows);

// all-zero covariate profile
HazardBundle baseline_hazards(const MultiStateFit& fit,
                              const TransitionStructure& s);

// long format: trans,time,cumhaz with rows ordered by transition then
// time, including the (0, 0) anchor of each curve
void write_bundle_csv(const std::string& path, const HazardBundle& bundle);

// patient file: one row per transition with the base (unexpanded)
// covariates; expansion into the fitted space happens here
std::vector<PatientRow> load_patient_csv(const std::string& path,
                                         const TransitionStructure& s,
                                         const MultiStateFit& fit);

}  // namespace ebms
