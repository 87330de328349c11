#pragma once

#include <json.hpp>

namespace snv {

// Field-to-frequency conversion constants. All Hamiltonian entries are linear
// frequencies (Hz) with h = 1.
inline constexpr double kBohrMagnetonHzPerTesla = 13.996244936e9;  // mu_B / h
inline constexpr double kSn117GyromagneticHzPerTesla = -15.261e6;  // g_I mu_N / h

/// Hamiltonian coefficients for one electronic manifold (ground or excited).
struct ManifoldParams {
  double lambda_soc = 0.0;    // electron spin-orbit, Hz
  double upsilon_ioc = 0.0;   // nuclear spin-orbit, Hz
  double a_perp = 0.0;        // hyperfine A_perp, Hz
  double a_par = 0.0;         // hyperfine A_par, Hz
  double strain_egx = 0.0;    // Hz
  double strain_egy = 0.0;    // Hz
  double orbital_quench_q = 0.0;
  double g_electron = 2.0;
  double nuclear_gyromag = kSn117GyromagneticHzPerTesla;  // Hz/T, signed

  /// Throws InputError on non-finite values or q outside [0, 1].
  void validate() const;

  /// Strain magnitude sqrt(egx^2 + egy^2).
  double strain_magnitude() const;
  /// Branch splitting sqrt(lambda^2 + 4 alpha^2) of the full Hamiltonian.
  double branch_splitting() const;
  /// Electron Zeeman conversion g_e * mu_B / h in Hz/T.
  double electron_hz_per_tesla() const { return g_electron * kBohrMagnetonHzPerTesla; }

  bool operator==(const ManifoldParams&) const = default;
};

/// Static magnetic field in Tesla, defect frame (z along the symmetry axis).
struct MagneticField {
  double bx = 0.0;
  double by = 0.0;
  double bz = 0.0;

  void validate() const;
  bool operator==(const MagneticField&) const = default;

  /// Field whose electron Zeeman energies g_e mu_B B / h equal the given
  /// frequencies. This is how fitted "b" values in Hz are expressed.
  static MagneticField from_electron_frequency(double bx_hz, double by_hz, double bz_hz,
                                               double g_electron = 2.0);
};

namespace presets {

/// Ground manifold at the best-fit values of the Rabi/Ramsey fit
/// (lambda = 830 GHz and q = 0.171 held fixed).
ManifoldParams ground_fitted();
/// Ground manifold with the rounded device estimates (671/674 MHz, 928 GHz).
ManifoldParams ground_table();
/// Excited manifold: device estimates plus the calibrated spin-orbit (3.02 THz)
/// and orbital quenching factor, neither of which is measured.
ManifoldParams excited_default();

/// Residual DC field from the fit: b_x = 6.03 MHz, b_z = 1.55 MHz (electron units).
MagneticField fitted_dc_field();

inline constexpr double kFittedDriveBx = 8.92e6;  // Hz, AC drive strength
inline constexpr double kFittedDriveBz = 5.00e6;  // Hz
inline constexpr double kOpticalLifetime = 6e-9;  // s
inline constexpr double kSivLifetime = 1.7e-9;    // s, assumed for the SiV comparison
inline constexpr double kPleLinewidth = 61.859e6; // Hz FWHM

}  // namespace presets

void to_json(nlohmann::json& j, const ManifoldParams& p);
void from_json(const nlohmann::json& j, ManifoldParams& p);
void to_json(nlohmann::json& j, const MagneticField& b);
void from_json(const nlohmann::json& j, MagneticField& b);

}  // namespace snv
