#include "snv/coherence.hpp"

#include <cmath>
#include <limits>

#include "snv/error.hpp"
#include "snv/parallel.hpp"
#include "snv/spinmodel.hpp"

namespace snv {

void CoherenceParams::validate() const {
  if (!std::isfinite(gamma_phonon) || gamma_phonon < 0.0) throw InputError("gamma_phonon must be >= 0");
  if (!std::isfinite(temperature) || temperature < 0.0) throw InputError("temperature must be >= 0");
}

CoherenceParams presets::coherence_1p7k() { return {1.0, 1.7}; }

LambdaEff lambda_eff(const ManifoldParams& p) {
  p.validate();
  const double delta = p.branch_splitting();
  if (!(delta > 0.0)) throw InputError("lambda_eff: Delta = 0");
  const double s = 2.0 * p.strain_magnitude() / delta;
  LambdaEff r;
  r.lambda_b = 2.0 * p.upsilon_ioc * p.lambda_soc / delta -
               p.a_perp * p.a_perp / (2.0 * delta) * (1.0 - s * s);
  r.lambda_m = 0.0;
  return r;
}

LambdaEff lambda_eff_diagonalized(const ManifoldParams& p) {
  const EigenSystem es = solve_manifold(p, MagneticField{});
  auto e = [&](Branch b, Qubit q) { return es.energy(b, q); };
  auto broker = [&](Branch b) {
    return 0.5 * (e(b, Qubit::q1B0M) + e(b, Qubit::q1B1M)) - 0.5 * (e(b, Qubit::q0B0M) + e(b, Qubit::q0B1M));
  };
  auto memory = [&](Branch b) { return std::abs(e(b, Qubit::q0B1M) - e(b, Qubit::q0B0M)); };
  return {broker(Branch::upper) - broker(Branch::lower), memory(Branch::upper) - memory(Branch::lower)};
}

double t2_phonon(double lambda_b, const CoherenceParams& coh) {
  coh.validate();
  if (!std::isfinite(lambda_b)) throw InputError("lambda_B must be finite");
  const double l = std::abs(lambda_b);
  if (l == 0.0) return std::numeric_limits<double>::infinity();
  if (coh.gamma_phonon == 0.0) return 4.0 * M_PI / l;
  // -expm1(-x) keeps precision when 2 pi / (l gamma) is tiny.
  return 4.0 * M_PI / (l * -std::expm1(-2.0 * M_PI / (l * coh.gamma_phonon)));
}

std::vector<CoherencePoint> coherence_map(const ManifoldParams& base,
                                          const std::vector<double>& upsilon_grid,
                                          const std::vector<double>& alpha_grid,
                                          int sign_convention, const CoherenceParams& coh,
                                          unsigned threads) {
  if (sign_convention != 1 && sign_convention != -1) throw InputError("sign_convention must be +1 or -1");
  if (upsilon_grid.empty() || alpha_grid.empty()) throw InputError("coherence map grids must be non-empty");
  coh.validate();
  const double lam_sign = base.lambda_soc >= 0.0 ? 1.0 : -1.0;
  const std::size_t na = alpha_grid.size();
  std::vector<CoherencePoint> out(upsilon_grid.size() * na);
  parallel_for(out.size(), threads, [&](std::size_t k) {
    ManifoldParams p = base;
    p.upsilon_ioc = sign_convention * lam_sign * std::abs(upsilon_grid[k / na]);
    p.strain_egx = alpha_grid[k % na];
    p.strain_egy = 0.0;
    const double lb = lambda_eff(p).lambda_b;
    out[k] = {p.upsilon_ioc, p.strain_egx, lb, t2_phonon(lb, coh)};
  });
  return out;
}

double lambda_b_zero_upsilon(const ManifoldParams& p) {
  const double delta = p.branch_splitting();
  if (!(delta > 0.0)) throw InputError("Delta = 0");
  return p.a_perp * p.a_perp * p.lambda_soc / (4.0 * delta * delta);
}

}  // namespace snv
