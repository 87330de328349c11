#include "snv/spinmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "snv/error.hpp"

namespace snv {

namespace pauli {

Pauli identity() { return Pauli::Identity(); }

Pauli x() {
  Pauli m;
  m << 0.0, 1.0, 1.0, 0.0;
  return m;
}

Pauli y() {
  Pauli m;
  m << 0.0, Complex(0.0, -1.0), Complex(0.0, 1.0), 0.0;
  return m;
}

Pauli z() {
  Pauli m;
  m << 1.0, 0.0, 0.0, -1.0;
  return m;
}

Operator kron(const Pauli& orbital, const Pauli& electron, const Pauli& nuclear) {
  Operator out;
  for (int a = 0; a < 2; ++a)
    for (int ap = 0; ap < 2; ++ap)
      for (int b = 0; b < 2; ++b)
        for (int bp = 0; bp < 2; ++bp)
          for (int c = 0; c < 2; ++c)
            for (int cp = 0; cp < 2; ++cp)
              out(basis_index(a, b, c), basis_index(ap, bp, cp)) =
                  orbital(a, ap) * electron(b, bp) * nuclear(c, cp);
  return out;
}

}  // namespace pauli

std::string_view to_string(Branch b) { return b == Branch::lower ? "lower" : "upper"; }

std::string_view to_string(Qubit q) {
  switch (q) {
    case Qubit::q0B0M: return "0_B0_M";
    case Qubit::q0B1M: return "0_B1_M";
    case Qubit::q1B0M: return "1_B0_M";
    case Qubit::q1B1M: return "1_B1_M";
  }
  return "?";
}

std::string to_string(const Label& l) {
  return std::string(to_string(l.branch)) + ":" + std::string(to_string(l.qubit));
}

bool is_bright(Qubit q) { return q == Qubit::q1B0M || q == Qubit::q1B1M; }

int EigenSystem::index(Branch b, Qubit q) const {
  for (int k = 0; k < kDim; ++k)
    if (labels[k].branch == b && labels[k].qubit == q) return k;
  throw InputError("eigensystem is missing label " + to_string(Label{b, q}));
}

std::array<int, 4> EigenSystem::lower_qubit_indices() const {
  return {index(Branch::lower, Qubit::q0B0M), index(Branch::lower, Qubit::q0B1M),
          index(Branch::lower, Qubit::q1B0M), index(Branch::lower, Qubit::q1B1M)};
}

Operator zeeman_operator(const ManifoldParams& p, const MagneticField& b) {
  using namespace pauli;
  const Pauli I = identity();
  const double ke = 0.5 * p.electron_hz_per_tesla();
  const double kn = 0.5 * p.nuclear_gyromag;
  Operator h = ke * (b.bx * kron(I, x(), I) + b.by * kron(I, y(), I) + b.bz * kron(I, z(), I));
  h += kn * (b.bx * kron(I, I, x()) + b.by * kron(I, I, y()) + b.bz * kron(I, I, z()));
  h += (ke * p.orbital_quench_q * b.bz) * kron(z(), I, I);
  return h;
}

Operator build_hamiltonian(const ManifoldParams& p, const MagneticField& b) {
  p.validate();
  b.validate();
  using namespace pauli;
  const Pauli I = identity();
  Operator h = (0.5 * p.lambda_soc) * kron(z(), z(), I);
  h += (0.5 * p.upsilon_ioc) * kron(z(), I, z());
  h -= p.strain_egx * kron(x(), I, I);
  h -= p.strain_egy * kron(y(), I, I);
  h += (0.25 * p.a_perp) * (kron(I, x(), x()) + kron(I, y(), y()));
  h += (0.25 * p.a_par) * kron(I, z(), z());
  h += zeeman_operator(p, b);
  return h;
}

namespace {

// Strain axis folded into (-pi/2, pi/2] so that a sign flip of the strain keeps
// the same reference axis.
double folded_strain_angle(const ManifoldParams& p) {
  if (p.strain_egx == 0.0 && p.strain_egy == 0.0) return 0.0;
  double phi = std::atan2(p.strain_egy, p.strain_egx);
  if (phi > std::numbers::pi / 2) phi -= std::numbers::pi;
  if (phi <= -std::numbers::pi / 2) phi += std::numbers::pi;
  return phi;
}

Operator exchange_character(const ManifoldParams& p) {
  using namespace pauli;
  const Pauli I = identity();
  const double phi = folded_strain_angle(p);
  const Pauli axis = std::cos(phi) * x() + std::sin(phi) * y();
  const Operator flipflop = 0.5 * (kron(I, x(), x()) + kron(I, y(), y()));
  return kron(axis, I, I) * flipflop;
}

double expectation(const Operator& op, const StateVector& v) { return (v.adjoint() * op * v)(0).real(); }

void fix_phase(StateVector& v) {
  int best = 0;
  for (int k = 1; k < kDim; ++k)
    if (std::abs(v(k)) > std::abs(v(best)) + 1e-12) best = k;
  const Complex ph = v(best) / std::abs(v(best));
  v /= ph;
}

void label_branch(EigenSystem& es, const std::array<int, 4>& idx, Branch branch,
                  const ManifoldParams& p, double degeneracy_tol) {
  Operator aligned = Operator::Zero();
  for (int o = 0; o < 2; ++o)
    for (int s = 0; s < 2; ++s) aligned(basis_index(o, s, s), basis_index(o, s, s)) = 1.0;

  std::array<int, 4> order = idx;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return expectation(aligned, es.states.col(a)) < expectation(aligned, es.states.col(b));
  });
  std::array<int, 2> dark = {std::min(order[0], order[1]), std::max(order[0], order[1])};
  std::array<int, 2> bright = {std::min(order[2], order[3]), std::max(order[2], order[3])};

  // m_J = 0 pair
  const Operator K = exchange_character(p);
  if (std::abs(es.energies(dark[0]) - es.energies(dark[1])) < degeneracy_tol) {
    Eigen::Matrix2cd sub;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        sub(i, j) = (es.states.col(dark[i]).adjoint() * K * es.states.col(dark[j]))(0);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> solver(sub);
    Eigen::Matrix<Complex, kDim, 2> basis;
    basis.col(0) = es.states.col(dark[0]);
    basis.col(1) = es.states.col(dark[1]);
    const Eigen::Matrix<Complex, kDim, 2> rotated = basis * solver.eigenvectors();
    es.states.col(dark[0]) = rotated.col(0);
    es.states.col(dark[1]) = rotated.col(1);
  }
  const double k0 = expectation(K, es.states.col(dark[0]));
  const double k1 = expectation(K, es.states.col(dark[1]));
  int d1;  // index of 0_B1_M
  if (std::abs(k0 - k1) < 1e-12) {
    d1 = dark[1];  // no exchange character to go by: higher energy
  } else if (branch == Branch::lower) {
    d1 = k0 > k1 ? dark[0] : dark[1];
  } else {
    d1 = k0 < k1 ? dark[0] : dark[1];
  }
  const int d0 = d1 == dark[0] ? dark[1] : dark[0];
  es.labels[d0] = {branch, Qubit::q0B0M};
  es.labels[d1] = {branch, Qubit::q0B1M};

  // 1_B pair, defined through the transverse-drive partners of the m_J = 0 states.
  using namespace pauli;
  const Operator sx = kron(identity(), x(), identity());
  const StateVector u0 = es.states.col(bright[0]);
  const StateVector u1 = es.states.col(bright[1]);
  auto project = [&](const StateVector& v) -> StateVector {
    return u0 * (u0.adjoint() * v)(0) + u1 * (u1.adjoint() * v)(0);
  };
  StateVector r0 = project(sx * es.states.col(d0));
  StateVector r1 = project(sx * es.states.col(d1));

  if (std::abs(es.energies(bright[0]) - es.energies(bright[1])) < degeneracy_tol &&
      r0.norm() > 1e-8) {
    r0.normalize();
    r1 -= r0 * (r0.adjoint() * r1)(0);
    if (r1.norm() > 1e-8) {
      r1.normalize();
    } else {
      // r1 parallel to r0: complete the pair with the orthogonal complement.
      r1 = u0 - r0 * (r0.adjoint() * u0)(0);
      if (r1.norm() < 1e-8) r1 = u1 - r0 * (r0.adjoint() * u1)(0);
      r1.normalize();
    }
    es.states.col(bright[0]) = r0;
    es.states.col(bright[1]) = r1;
    es.labels[bright[0]] = {branch, Qubit::q1B0M};
    es.labels[bright[1]] = {branch, Qubit::q1B1M};
    return;
  }
  const StateVector& ref = r0.norm() >= r1.norm() ? r0 : r1;
  const bool ref_is_zero = r0.norm() >= r1.norm();
  const double c0 = std::abs((ref.adjoint() * u0)(0));
  const double c1 = std::abs((ref.adjoint() * u1)(0));
  const int match = c0 >= c1 ? bright[0] : bright[1];
  const int other = match == bright[0] ? bright[1] : bright[0];
  es.labels[match] = {branch, ref_is_zero ? Qubit::q1B0M : Qubit::q1B1M};
  es.labels[other] = {branch, ref_is_zero ? Qubit::q1B1M : Qubit::q1B0M};
}

}  // namespace

EigenSystem eigensystem(const Operator& h, const ManifoldParams& params) {
  const double scale = h.cwiseAbs().maxCoeff();
  if (!std::isfinite(scale)) throw InputError("Hamiltonian has non-finite entries");
  if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0))
    throw InputError("Hamiltonian is not Hermitian");

  Eigen::SelfAdjointEigenSolver<Operator> solver(h);
  if (solver.info() != Eigen::Success) throw NumericalError("eigensolver failed");

  EigenSystem es;
  es.energies = solver.eigenvalues();
  es.states = solver.eigenvectors();

  const double spread = std::max(es.energies(3) - es.energies(0), es.energies(7) - es.energies(4));
  if (!(es.energies(4) - es.energies(3) > spread))
    throw NumericalError("branch separation does not exceed the intra-branch spread");

  const double tol = 1e-10 * std::max(es.energies.cwiseAbs().maxCoeff(), 1.0);
  label_branch(es, {0, 1, 2, 3}, Branch::lower, params, tol);
  label_branch(es, {4, 5, 6, 7}, Branch::upper, params, tol);
  for (int k = 0; k < kDim; ++k) {
    StateVector v = es.states.col(k);
    fix_phase(v);
    es.states.col(k) = v;
  }
  return es;
}

EigenSystem solve_manifold(const ManifoldParams& params, const MagneticField& field) {
  return eigensystem(build_hamiltonian(params, field), params);
}

bool closed_form_well_conditioned(const ManifoldParams& p) {
  const double largest = std::max({std::abs(p.a_perp), std::abs(p.a_par), std::abs(p.upsilon_ioc)});
  if (largest == 0.0) return true;
  return p.branch_splitting() / largest >= kClosedFormMinRatio;
}

std::array<LabeledEnergy, kDim> closed_form_energies(const ManifoldParams& p, int order) {
  p.validate();
  if (order != 1 && order != 2) throw InputError("closed-form order must be 1 or 2");
  const double delta = p.branch_splitting();
  if (delta == 0.0) throw InputError("branch splitting is zero; closed forms are singular");

  const double phi = folded_strain_angle(p);
  const double alpha = p.strain_egx * std::cos(phi) + p.strain_egy * std::sin(phi);
  const double s = 2.0 * alpha / delta;
  const double c = p.lambda_soc / delta;
  const double ups = p.upsilon_ioc * c / 2.0;  // first-order nuclear spin-orbit shift
  const double hf2 = order == 2 ? p.a_perp * p.a_perp / (4.0 * delta) * (1.0 - s * s) : 0.0;

  std::array<LabeledEnergy, kDim> out;
  int k = 0;
  for (Branch b : {Branch::lower, Branch::upper}) {
    const double sg = b == Branch::lower ? -1.0 : 1.0;
    const double dark_centre = -p.a_par / 4.0 + sg * (delta / 2.0 - ups + hf2);
    const double bright = p.a_par / 4.0 + sg * (delta / 2.0 + ups);
    out[k++] = {{b, Qubit::q0B0M}, dark_centre - 0.5 * p.a_perp * s};
    out[k++] = {{b, Qubit::q0B1M}, dark_centre + 0.5 * p.a_perp * s};
    out[k++] = {{b, Qubit::q1B0M}, bright};
    out[k++] = {{b, Qubit::q1B1M}, bright};
  }
  return out;
}

}  // namespace snv
