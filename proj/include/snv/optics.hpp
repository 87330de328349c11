#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "snv/spectrum.hpp"
#include "snv/spinmodel.hpp"

namespace snv {

/// Orbital dipole operators e_g -> e_u in the product basis (identity on both
/// spins). Group-theory operators of the real basis, p_x = diag(1,-1),
/// p_y = -sigma_x, p_z = 1, expressed in the circular basis
/// e_+ = -(x + iy)/sqrt2, e_- = (x - iy)/sqrt2: p_z keeps e_+/-, p_x and p_y
/// exchange them.
struct DipoleSet {
  Operator px;
  Operator py;
  Operator pz;

  Operator sum() const { return px + py + pz; }
  static DipoleSet standard();
};

/// Rows: excited lower-branch states, columns: ground lower-branch states,
/// both ordered 0B0M, 0B1M, 1B0M, 1B1M.
using BranchingMatrix = Eigen::Matrix4d;

/// |<exc_i| sum_k p_k |gnd_j>|^2 over the lower branches, unnormalized.
BranchingMatrix dipole_strengths(const EigenSystem& ground, const EigenSystem& excited,
                                 const DipoleSet& dipoles);

struct CyclicityResult {
  BranchingMatrix branching = BranchingMatrix::Zero();  // rows sum to 1 where defined
  std::array<double, 4> lambda{};   // 1 / (1 - max_j row_ij); inf when a row is pure
  std::array<bool, 4> defined{};    // false when the state has no emission at all
  double lambda_f0 = 0.0;  // min over excited 1_B states of 1 / (branching out of ground 1_B)
  double leakage_f0 = 0.0; // max over excited 1_B states of branching out of ground 1_B
  double lambda_f1 = 0.0;  // 0_B0_M line
  double lambda_f2 = 0.0;  // 0_B1_M line
};

CyclicityResult cyclicity(const EigenSystem& ground, const EigenSystem& excited,
                          const DipoleSet& dipoles);

struct CyclicityMapRow {
  double bx_tesla = 0.0;
  double bz_tesla = 0.0;
  double lambda_f0 = 0.0;
};

/// f0 cyclicity over a (transverse x, axial z) field grid; row-major in bx.
std::vector<CyclicityMapRow> cyclicity_map(const ManifoldParams& ground,
                                           const ManifoldParams& excited, const DipoleSet& dipoles,
                                           const std::vector<double>& bx_grid,
                                           const std::vector<double>& bz_grid,
                                           unsigned threads = 1);

/// Lambda = tau_pol / (2 tau).
double cyclicity_from_lifetimes(double tau_pol, double tau);

// ---------------------------------------------------------------------------
// Rate-equation optical pumping

/// Classical rate model: G ground and E excited levels. Populations are
/// ordered ground first, then excited.
struct RateModel {
  Eigen::MatrixXd decay;       // E x G, per-level decay rates (1/s) excited -> ground
  Eigen::MatrixXd excitation;  // E x G, pump rates ground -> excited (stimulated return equal)

  int ground_count() const { return static_cast<int>(decay.cols()); }
  int excited_count() const { return static_cast<int>(decay.rows()); }
  Eigen::MatrixXd generator() const;  // dP/dt = M P
};

struct RateSolution {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> populations;  // one per time
  std::vector<double> fluorescence;          // total excited-state decay rate (1/s)
  Eigen::VectorXd steady_state;
  bool unique_steady_state = false;
  bool converged = false;  // relaxation finished within the simulated window
  double slowest_rate = 0.0;
};

RateSolution solve_rate_model(const RateModel& model, const Eigen::VectorXd& initial,
                              double duration, int samples = 400);

/// Exponential time constant of fluorescence(t) - fluorescence(end), fitted on
/// the decay after the optical transient. NaN when there is no decay to fit.
double fit_polarization_time(const RateSolution& sol, double skip_time);

struct PumpSettings {
  double pump_frequency = 0.0;  // Hz, on the optical table axis (zpl = 0)
  double rabi = 50e6;           // Hz
  double linewidth = 61.859e6;  // Hz FWHM
  double duration = 10e-6;      // s
  double lifetime = 6e-9;       // s
};

struct PumpResult {
  std::array<double, 4> populations{};   // ground, ordered 0B0M, 0B1M, 1B0M, 1B1M (sum 1)
  std::array<double, 4> polarization{};  // population / sum; equals populations here
  std::array<double, 4> final_populations{};  // at the end of the pump window
  double tau_pol = 0.0;                  // s
  bool converged = true;
  std::string diagnostic;
};

/// Pump frequency of a spin-conserving peak (zpl = 0).
double peak_frequency(const EigenSystem& ground, const EigenSystem& excited, PeakId peak);

PumpResult pump_dynamics(const EigenSystem& ground, const EigenSystem& excited,
                         const DipoleSet& dipoles, const PumpSettings& settings,
                         const std::array<double, 4>& initial = {0.25, 0.25, 0.25, 0.25});

// ---------------------------------------------------------------------------
// Memory fidelity under repeated optical excitation

/// F = (1 + (1 + dw^2 tau^2)^(-n/2)) / 2, dw in rad/s.
double excitation_fidelity(double delta_omega, double tau, double n);

struct MonteCarloEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

/// Samples n exponential dwell times per trial and returns
/// (1 + |<exp(i dw T)>|) / 2. The error is half the standard error of the
/// complex mean (both quadratures), so it also bounds the bias of the modulus.
MonteCarloEstimate excitation_fidelity_mc(double delta_omega, double tau, std::uint64_t n,
                                          std::uint64_t trials, std::uint64_t seed);

struct ExcitationBudget {
  bool unbounded = false;
  std::uint64_t count = 0;
};

/// Largest n with excitation_fidelity >= f_min.
ExcitationBudget max_excitations(double delta_omega, double tau, double f_min);

/// eta = detected_rate / (1 / (2 tau)) for a saturated emitter.
double collection_efficiency(double detected_rate, double tau);

}  // namespace snv
