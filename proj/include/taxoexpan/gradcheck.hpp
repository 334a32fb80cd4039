#pragma once

#include <functional>
#include <string>
#include <vector>

#include "taxoexpan/diff.hpp"

namespace taxoexpan {

struct GradCheckOptions {
  int seeds = 10;
  double step = 1e-5;       // central-difference half width
  double tolerance = 1e-4;  // on |analytic - numeric| / max(|analytic|, |numeric|, floor)
  double floor = 1e-5;
  // Coordinates sampled per parameter tensor (all of them when smaller).
  int coordinates_per_tensor = 12;
};

struct GradCheckResult {
  std::string name;
  std::uint64_t seed = 0;
  double max_error = 0.0;
  int checked = 0;
  // Coordinates whose +-step passes crossed a ReLU kink.
  int skipped = 0;
  bool passed = false;
};

// Compares Backward() against central differences of `build` for every
// parameter in `params`. `build` must read each parameter through
// Tape::Param() and be deterministic.
GradCheckResult CheckGradients(const std::string& name, std::vector<diff::Parameter*> params,
                               const std::function<diff::Var(diff::Tape&)>& build,
                               const GradCheckOptions& options, std::uint64_t seed);

// Every differentiable primitive, each over `options.seeds` random inputs.
std::vector<GradCheckResult> RunPrimitiveChecks(const GradCheckOptions& options = {});
// The full training objective for every architecture, readout, matcher and
// loss combination on a small random taxonomy, over `options.seeds` seeds.
std::vector<GradCheckResult> RunModelChecks(const GradCheckOptions& options = {});
std::vector<GradCheckResult> RunGradientChecks(const GradCheckOptions& options = {});

}  // namespace taxoexpan
