#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <string>
#include <string_view>

#include "snv/params.hpp"

namespace snv {

using Complex = std::complex<double>;

// Product basis |e_g+>,|e_g-> (x) |up>,|down> (x) |Up>,|Down>,
// index = 4*orbital + 2*electron + nuclear.
inline constexpr int kDim = 8;
using Operator = Eigen::Matrix<Complex, kDim, kDim>;
using StateVector = Eigen::Matrix<Complex, kDim, 1>;
using Pauli = Eigen::Matrix2cd;

inline constexpr int basis_index(int orbital, int electron, int nuclear) {
  return 4 * orbital + 2 * electron + nuclear;
}

namespace pauli {
Pauli identity();
Pauli x();
Pauli y();
Pauli z();
/// Kronecker product orbital (x) electron (x) nuclear.
Operator kron(const Pauli& orbital, const Pauli& electron, const Pauli& nuclear);
}  // namespace pauli

enum class Branch { lower, upper };
enum class Qubit { q0B0M, q0B1M, q1B0M, q1B1M };

struct Label {
  Branch branch = Branch::lower;
  Qubit qubit = Qubit::q0B0M;
  bool operator==(const Label&) const = default;
};

std::string_view to_string(Branch b);
std::string_view to_string(Qubit q);
std::string to_string(const Label& l);
bool is_bright(Qubit q);  // 1_B states

/// Labeled eigensystem of one manifold; energies ascending.
struct EigenSystem {
  Eigen::Matrix<double, kDim, 1> energies;
  Operator states;  // column k is the eigenvector for energies(k)
  std::array<Label, kDim> labels;

  int index(Branch b, Qubit q) const;
  double energy(Branch b, Qubit q) const { return energies(index(b, q)); }
  StateVector state(Branch b, Qubit q) const { return states.col(index(b, q)); }
  /// Indices of the four lower-branch states ordered 0B0M, 0B1M, 1B0M, 1B1M.
  std::array<int, 4> lower_qubit_indices() const;
};

/// Zeeman operator (electron, nuclear, orbital) for a field in Tesla.
Operator zeeman_operator(const ManifoldParams& params, const MagneticField& field);

/// Zero-field spin-orbit, strain, hyperfine and nuclear spin-orbit terms plus Zeeman.
Operator build_hamiltonian(const ManifoldParams& params, const MagneticField& field);

/// Diagonalize and label. Labeling:
///  - branch by energy (lower four / upper four);
///  - the two states with the largest aligned-spin weight per branch are 1_B;
///  - the m_J = 0 pair is split by the sign of <sigma_n^L (x) (sx sx + sy sy)/2>,
///    n the strain axis folded into the +x half plane: positive -> 0_B1_M in the
///    lower branch, negative -> 0_B1_M in the upper branch;
///  - 1_B0_M / 1_B1_M follow the transverse-drive partners sigma_x^S|0_B0_M>,
///    sigma_x^S|0_B1_M> projected onto the 1_B pair. A degenerate pair is
///    replaced by those projected partners, which fixes the zero-field gauge.
EigenSystem eigensystem(const Operator& h, const ManifoldParams& params);

/// Convenience: build + diagonalize.
EigenSystem solve_manifold(const ManifoldParams& params, const MagneticField& field);

struct LabeledEnergy {
  Label label;
  double energy = 0.0;
};

/// Perturbative energies (order 1 or 2) for all eight labels, ordered like
/// EigenSystem labels of a lower-then-upper listing:
/// per branch 0B0M, 0B1M, 1B0M, 1B1M. Strain ratio 2*alpha/Delta_tot.
std::array<LabeledEnergy, kDim> closed_form_energies(const ManifoldParams& params, int order);

/// Smallest Delta_tot / max(|A_perp|, |A_par|, |upsilon|) for which the
/// closed forms are considered valid without a warning.
inline constexpr double kClosedFormMinRatio = 100.0;
bool closed_form_well_conditioned(const ManifoldParams& params);

}  // namespace snv
