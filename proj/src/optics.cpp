#include "snv/optics.hpp"

#include <algorithm>
#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

#include "snv/error.hpp"
#include "snv/parallel.hpp"
#include "snv/rng.hpp"

namespace snv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Branching below this is eigenvector round-off, not physics.
constexpr double kLeakFloor = 1e-13;

void require_positive(double v, const char* what) {
  if (!std::isfinite(v) || v <= 0.0) throw InputError(std::string(what) + " must be positive and finite");
}

}  // namespace

DipoleSet DipoleSet::standard() {
  // Columns: e_+ = -(x + iy)/sqrt2, e_- = (x - iy)/sqrt2 in the real (x, y) basis.
  const double r = 1.0 / std::sqrt(2.0);
  Pauli u;
  u << Complex(-r, 0), Complex(r, 0), Complex(0, -r), Complex(0, -r);
  Pauli rx, ry;
  rx << 1, 0, 0, -1;
  ry << 0, -1, -1, 0;
  const Pauli id = Pauli::Identity();
  DipoleSet d;
  d.px = pauli::kron(u.adjoint() * rx * u, id, id);
  d.py = pauli::kron(u.adjoint() * ry * u, id, id);
  d.pz = pauli::kron(u.adjoint() * id * u, id, id);
  return d;
}

BranchingMatrix dipole_strengths(const EigenSystem& ground, const EigenSystem& excited,
                                 const DipoleSet& dipoles) {
  const Operator p = dipoles.sum();
  const auto gi = ground.lower_qubit_indices();
  const auto ei = excited.lower_qubit_indices();
  BranchingMatrix m;
  for (int i = 0; i < 4; ++i) {
    const StateVector pe = p.adjoint() * excited.states.col(ei[i]);
    for (int j = 0; j < 4; ++j) m(i, j) = std::norm(pe.dot(ground.states.col(gi[j])));
  }
  return m;
}

CyclicityResult cyclicity(const EigenSystem& ground, const EigenSystem& excited,
                          const DipoleSet& dipoles) {
  const BranchingMatrix s = dipole_strengths(ground, excited, dipoles);
  const double scale = s.maxCoeff();
  CyclicityResult r;
  for (int i = 0; i < 4; ++i) {
    const double total = s.row(i).sum();
    r.defined[i] = scale > 0.0 && total > 1e-14 * scale;
    if (!r.defined[i]) {
      r.lambda[i] = kNaN;
      continue;
    }
    r.branching.row(i) = s.row(i) / total;
    const double leak = 1.0 - r.branching.row(i).maxCoeff();
    r.lambda[i] = leak > kLeakFloor ? 1.0 / leak : kInf;
  }

  // f0: excited 1_B states decaying out of the ground 1_B pair.
  r.lambda_f0 = kInf;
  r.leakage_f0 = 0.0;
  bool any = false;
  for (int i : {2, 3}) {
    if (!r.defined[i]) continue;
    any = true;
    const double leak = r.branching(i, 0) + r.branching(i, 1);
    r.leakage_f0 = std::max(r.leakage_f0, leak);
    r.lambda_f0 = std::min(r.lambda_f0, leak > kLeakFloor ? 1.0 / leak : kInf);
  }
  if (!any) r.lambda_f0 = kNaN;

  auto line = [&](int i) {
    if (!r.defined[i]) return kNaN;
    const double leak = 1.0 - r.branching(i, i);
    return leak > kLeakFloor ? 1.0 / leak : kInf;
  };
  r.lambda_f1 = line(0);
  r.lambda_f2 = line(1);
  return r;
}

std::vector<CyclicityMapRow> cyclicity_map(const ManifoldParams& ground,
                                           const ManifoldParams& excited, const DipoleSet& dipoles,
                                           const std::vector<double>& bx_grid,
                                           const std::vector<double>& bz_grid, unsigned threads) {
  if (bx_grid.empty() || bz_grid.empty()) throw InputError("cyclicity map grids must be non-empty");
  const std::size_t nz = bz_grid.size();
  std::vector<CyclicityMapRow> rows(bx_grid.size() * nz);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const MagneticField b{bx_grid[k / nz], 0.0, bz_grid[k % nz]};
      const auto g = solve_manifold(ground, b);
      const auto e = solve_manifold(excited, b);
      rows[k] = {b.bx, b.bz, cyclicity(g, e, dipoles).lambda_f0};
    }
  };
  parallel_for(rows.size(), threads, [&](std::size_t k) { work(k, k + 1); });
  return rows;
}

double cyclicity_from_lifetimes(double tau_pol, double tau) {
  require_positive(tau_pol, "tau_pol");
  require_positive(tau, "tau");
  return tau_pol / (2.0 * tau);
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd RateModel::generator() const {
  const int g = ground_count(), e = excited_count();
  if (excitation.rows() != e || excitation.cols() != g)
    throw InputError("rate model: excitation and decay shapes differ");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(g + e, g + e);
  for (int i = 0; i < e; ++i) {
    for (int j = 0; j < g; ++j) {
      const double up = excitation(i, j);
      const double down = decay(i, j) + excitation(i, j);  // spontaneous + stimulated
      if (up < 0.0 || decay(i, j) < 0.0) throw InputError("rate model: negative rate");
      m(g + i, j) += up;
      m(j, j) -= up;
      m(j, g + i) += down;
      m(g + i, g + i) -= down;
    }
  }
  return m;
}

RateSolution solve_rate_model(const RateModel& model, const Eigen::VectorXd& initial,
                              double duration, int samples) {
  const Eigen::MatrixXd m = model.generator();
  const int n = static_cast<int>(m.rows());
  if (initial.size() != n) throw InputError("rate model: initial population size mismatch");
  if (!(duration > 0.0) || samples < 2) throw InputError("rate model: bad time window");
  const int g = model.ground_count();

  RateSolution sol;
  const double dt = duration / (samples - 1);
  const Eigen::MatrixXd step = (m * dt).exp();
  Eigen::VectorXd p = initial;
  for (int k = 0; k < samples; ++k) {
    if (k > 0) p = step * p;
    sol.times.push_back(k * dt);
    sol.populations.push_back(p);
    double f = 0.0;
    for (int i = 0; i < model.excited_count(); ++i) f += model.decay.row(i).sum() * p(g + i);
    sol.fluorescence.push_back(f);
  }

  // Relaxation rates: eigenvalues of the generator (real parts are <= 0).
  Eigen::EigenSolver<Eigen::MatrixXd> es(m);
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  std::vector<double> rates;
  for (int k = 0; k < n; ++k) rates.push_back(-es.eigenvalues()(k).real());
  std::sort(rates.begin(), rates.end());
  const int zeros = static_cast<int>(
      std::count_if(rates.begin(), rates.end(), [&](double r) { return std::abs(r) < 1e-9 * scale; }));
  sol.unique_steady_state = zeros == 1;
  sol.slowest_rate = zeros < n ? rates[zeros] : 0.0;
  sol.converged = sol.slowest_rate * duration > 5.0;

  if (sol.unique_steady_state) {
    // Null vector of M with unit total population.
    Eigen::MatrixXd a = m;
    a.row(n - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(n - 1) = 1.0;
    sol.steady_state = a.fullPivLu().solve(rhs);
  } else {
    sol.steady_state = sol.populations.back();
  }
  return sol;
}

double fit_polarization_time(const RateSolution& sol, double skip_time) {
  const double f_end = sol.fluorescence.back();
  std::size_t k0 = 0;
  while (k0 < sol.times.size() && sol.times[k0] < skip_time) ++k0;
  if (k0 >= sol.times.size()) return kNaN;
  const double excess0 = sol.fluorescence[k0] - f_end;
  if (!(std::abs(excess0) > 1e-12 * std::max(1.0, std::abs(f_end)))) return kNaN;
  // Log-linear fit over the stretch where the excess is between 95% and 5%.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (std::size_t k = k0; k < sol.times.size(); ++k) {
    const double r = (sol.fluorescence[k] - f_end) / excess0;
    if (r > 0.95 || r < 0.05) continue;
    const double x = sol.times[k], y = std::log(r);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  if (count < 3) return kNaN;
  const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  return slope < 0.0 ? -1.0 / slope : kNaN;
}

double peak_frequency(const EigenSystem& ground, const EigenSystem& excited, PeakId peak) {
  if (peak == PeakId::other) throw InputError("pump line must be f0, f1 or f2");
  return optical_transitions(ground, excited, 0.0).peak(peak).frequency;
}

PumpResult pump_dynamics(const EigenSystem& ground, const EigenSystem& excited,
                         const DipoleSet& dipoles, const PumpSettings& s,
                         const std::array<double, 4>& initial) {
  if (!std::isfinite(s.pump_frequency)) throw InputError("pump frequency must be finite");
  if (!std::isfinite(s.rabi) || s.rabi < 0.0) throw InputError("rabi must be non-negative");
  require_positive(s.linewidth, "linewidth");
  require_positive(s.duration, "duration");
  require_positive(s.lifetime, "lifetime");
  double total0 = 0.0;
  for (double v : initial) {
    if (!(v >= 0.0)) throw InputError("initial populations must be non-negative");
    total0 += v;
  }
  if (std::abs(total0 - 1.0) > 1e-9) throw InputError("initial populations must sum to 1");

  const BranchingMatrix strength = dipole_strengths(ground, excited, dipoles);
  const double smax = strength.maxCoeff();
  const CyclicityResult cyc = cyclicity(ground, excited, dipoles);
  const auto gi = ground.lower_qubit_indices();
  const auto ei = excited.lower_qubit_indices();

  RateModel model;
  model.decay = Eigen::MatrixXd::Zero(4, 4);
  model.excitation = Eigen::MatrixXd::Zero(4, 4);
  const double gamma = 1.0 / s.lifetime;
  const double two_pi = 2.0 * M_PI;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (cyc.defined[i]) model.decay(i, j) = gamma * cyc.branching(i, j);
      const double line = excited.energies(ei[i]) - ground.energies(gi[j]);
      const double x = 2.0 * (s.pump_frequency - line) / s.linewidth;
      // Incoherent two-level rate (2 pi Omega)^2 / (2 pi FWHM) on a Lorentzian.
      const double w = smax > 0.0 ? strength(i, j) / smax : 0.0;
      model.excitation(i, j) = two_pi * s.rabi * s.rabi / s.linewidth * w / (1.0 + x * x);
    }
  }

  Eigen::VectorXd p0 = Eigen::VectorXd::Zero(8);
  for (int j = 0; j < 4; ++j) p0(j) = initial[j];
  const RateSolution sol = solve_rate_model(model, p0, s.duration);

  PumpResult r;
  r.converged = sol.converged;
  const Eigen::VectorXd& end = sol.populations.back();
  const Eigen::VectorXd& fin = sol.converged ? sol.steady_state : end;
  if (!sol.converged) {
    r.diagnostic = "pumping did not reach steady state within the pump window (slowest rate " +
                   std::to_string(sol.slowest_rate) + " 1/s); reporting end-of-window populations";
  }
  double gsum = fin.head(4).sum();
  double esum = end.head(4).sum();
  for (int j = 0; j < 4; ++j) {
    r.populations[j] = gsum > 0.0 ? fin(j) / gsum : initial[j];
    r.polarization[j] = r.populations[j];
    r.final_populations[j] = esum > 0.0 ? end(j) / esum : initial[j];
  }
  r.tau_pol = fit_polarization_time(sol, 20.0 * s.lifetime);
  return r;
}

// ---------------------------------------------------------------------------

double excitation_fidelity(double delta_omega, double tau, double n) {
  if (!(n >= 0.0)) throw InputError("n must be non-negative");
  if (!(tau >= 0.0)) throw InputError("tau must be non-negative");
  if (!std::isfinite(delta_omega)) throw InputError("delta_omega must be finite");
  const double x = delta_omega * tau;
  return 0.5 * (1.0 + std::exp(-0.5 * n * std::log1p(x * x)));
}

MonteCarloEstimate excitation_fidelity_mc(double delta_omega, double tau, std::uint64_t n,
                                          std::uint64_t trials, std::uint64_t seed) {
  if (trials < 1000) throw InputError("excitation_fidelity_mc needs at least 1000 trials");
  require_positive(tau, "tau");
  if (!std::isfinite(delta_omega)) throw InputError("delta_omega must be finite");
  Rng rng(seed);
  std::exponential_distribution<double> dwell(1.0 / tau);
  double sc = 0, ss = 0, scc = 0, sss = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    double total = 0.0;
    for (std::uint64_t k = 0; k < n; ++k) total += dwell(rng);
    const double phi = delta_omega * total;
    const double c = std::cos(phi), si = std::sin(phi);
    sc += c;
    ss += si;
    scc += c * c;
    sss += si * si;
  }
  const double m = static_cast<double>(trials);
  const double mc = sc / m, ms = ss / m;
  const double var = std::max(0.0, scc / m - mc * mc) + std::max(0.0, sss / m - ms * ms);
  MonteCarloEstimate est;
  est.value = 0.5 * (1.0 + std::hypot(mc, ms));
  est.stderr_ = 0.5 * std::sqrt(var / (m - 1.0));
  return est;
}

ExcitationBudget max_excitations(double delta_omega, double tau, double f_min) {
  if (!(f_min > 0.5 && f_min < 1.0)) throw InputError("f_min must lie in (1/2, 1)");
  require_positive(tau, "tau");
  if (!std::isfinite(delta_omega)) throw InputError("delta_omega must be finite");
  ExcitationBudget b;
  const double x = delta_omega * tau;
  const double per = std::log1p(x * x);
  if (per == 0.0) {
    b.unbounded = true;
    return b;
  }
  const double limit = -2.0 * std::log(2.0 * f_min - 1.0) / per;
  if (limit >= 1.8e19) {
    b.unbounded = true;
    return b;
  }
  auto n = static_cast<std::uint64_t>(std::floor(limit));
  // Guard the floor against rounding at exact boundaries.
  while (n > 0 && excitation_fidelity(delta_omega, tau, static_cast<double>(n)) < f_min) --n;
  while (excitation_fidelity(delta_omega, tau, static_cast<double>(n + 1)) >= f_min) ++n;
  b.count = n;
  return b;
}

double collection_efficiency(double detected_rate, double tau) {
  if (!(detected_rate >= 0.0) || !std::isfinite(detected_rate))
    throw InputError("detected rate must be non-negative");
  require_positive(tau, "tau");
  return detected_rate * 2.0 * tau;
}

}  // namespace snv
