#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace snv {

struct SimplexOptions {
  int max_evaluations = 3000;  // per restart
  int restarts = 2;            // extra starts from the best point after the first
  double initial_step = 0.05;  // fraction of each parameter's bound range
  double f_tolerance = 1e-14;  // absolute spread of simplex losses
  double x_tolerance = 1e-9;   // simplex diameter in range units
};

struct SimplexResult {
  std::vector<double> x;
  double f = 0.0;
  int evaluations = 0;
  bool converged = false;
  /// Best loss after every accepted step; never increases.
  std::vector<double> accepted_log;
};

using Objective = std::function<double(const std::vector<double>&)>;

/// Nelder-Mead in box-normalized coordinates; trial points are clamped to the
/// bounds. Restarts rebuild the simplex around the incumbent with step signs
/// drawn from `seed`.
SimplexResult nelder_mead(const Objective& f, const std::vector<double>& x0,
                          const std::vector<double>& lower, const std::vector<double>& upper,
                          const SimplexOptions& opts, std::uint64_t seed);

}  // namespace snv
