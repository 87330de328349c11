#pragma once

#include <vector>

#include "snv/params.hpp"

namespace snv {

struct CoherenceParams {
  // Enters T2 exactly as printed; in that formula it acts like a time scale
  // (T2 -> 2 gamma when lambda_B gamma >> 1).
  double gamma_phonon = 0.0;
  double temperature = 1.7;  // K, metadata only

  void validate() const;
};

namespace presets {
/// gamma calibrated so the broker T2 exceeds 1 s at 928 GHz strain for
/// upsilon in [0.1, 1] MHz.
CoherenceParams coherence_1p7k();
}  // namespace presets

struct LambdaEff {
  double lambda_b = 0.0;  // Hz, branch dependence of the broker transition
  double lambda_m = 0.0;  // Hz, branch dependence of the memory transition
};

/// Second-order branch dependences (upper minus lower branch), with
/// s = 2 alpha / Delta and Delta = sqrt(lambda^2 + 4 alpha^2):
///   lambda_B = 2 upsilon lambda / Delta - (A_perp^2 / 2 Delta)(1 - s^2),
///   lambda_M = 0.
LambdaEff lambda_eff(const ManifoldParams& params);

/// The same quantities from zero-field diagonalization: broker difference of
/// the 1_B and 0_B pair means, memory difference of the 0_B splittings.
LambdaEff lambda_eff_diagonalized(const ManifoldParams& params);

/// T2 = 4 pi / (|lambda_B| (1 - exp(-2 pi / (|lambda_B| gamma)))).
/// lambda_B = 0 returns +infinity (unbounded).
double t2_phonon(double lambda_b, const CoherenceParams& coh);

struct CoherencePoint {
  double upsilon = 0.0;  // Hz, signed as used
  double alpha = 0.0;    // Hz
  double lambda_b = 0.0;
  double t2 = 0.0;       // s
};

/// Evaluates lambda_eff and t2_phonon over |upsilon| x alpha. sign_convention
/// +1 gives upsilon lambda > 0, -1 gives upsilon lambda < 0. Row-major in upsilon.
std::vector<CoherencePoint> coherence_map(const ManifoldParams& base,
                                          const std::vector<double>& upsilon_grid,
                                          const std::vector<double>& alpha_grid,
                                          int sign_convention, const CoherenceParams& coh,
                                          unsigned threads = 1);

/// Zero of lambda_B in upsilon at fixed strain: upsilon* = A_perp^2 lambda / (4 Delta^2).
double lambda_b_zero_upsilon(const ManifoldParams& params);

}  // namespace snv
