#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

#include "ebms/errors.hpp"

namespace ebms {

// Right-continuous nondecreasing step function anchored at (0, 0); the
// canonical representation of a cumulative hazard.  times is strictly
// increasing with times[0] == 0, values[0] == 0.
struct StepFunction {
  std::vector<double> times{0.0};
  std::vector<double> values{0.0};

  std::size_t n_jumps() const { return times.size() - 1; }
  double last_time() const { return times.back(); }
  double last_value() const { return values.back(); }

  // value at t; 0 left of the origin
  double operator()(double t) const {
    if (t < times.front()) return 0.0;
    auto it = std::upper_bound(times.begin(), times.end(), t);
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
  }

  // appends a jump of size delta at time t
  void add_jump(double t, double delta) {
    require(t > times.back(), ErrorKind::BadInput,
            "step function jumps must be added in increasing time order");
    require(delta >= 0.0, ErrorKind::BadInput,
            "cumulative hazard increments must be nonnegative");
    times.push_back(t);
    values.push_back(values.back() + delta);
  }

  // smallest jump time u with value(u) >= target, or +inf if the total
  // mass never reaches target (inverse used for sampling event times)
  double first_time_reaching(double target) const {
    auto it = std::lower_bound(values.begin(), values.end(), target);
    if (it == values.end()) return std::numeric_limits<double>::infinity();
    return times[static_cast<std::size_t>(it - values.begin())];
  }

  // values on the uniform grid t_k = k * dt, k = 0..K (single sweep)
  std::vector<double> on_grid(int K, double dt) const {
    std::vector<double> out(static_cast<std::size_t>(K) + 1);
    std::size_t j = 0;
    for (int k = 0; k <= K; ++k) {
      double t = k * dt;
      while (j + 1 < times.size() && times[j + 1] <= t) ++j;
      out[static_cast<std::size_t>(k)] = values[j];
    }
    return out;
  }

  // multiplies every value by c > 0 (proportional-hazards rescaling)
  StepFunction scaled(double c) const {
    StepFunction out(*this);
    for (double& v : out.values) v *= c;
    return out;
  }
};

}  // namespace ebms
