#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "oracle.hpp"
#include "snv/error.hpp"
#include "snv/spinmodel.hpp"

using namespace snv;

namespace {

double spectral_scale(const Operator& h) { return h.cwiseAbs().rowwise().sum().maxCoeff(); }

}  // namespace

TEST_CASE("hamiltonian matches the term-by-term construction") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> b(-5e-3, 5e-3);
  for (int k = 0; k < 200; ++k) {
    const ManifoldParams p = oracle::random_params(rng);
    const MagneticField f{b(rng), b(rng), b(rng)};
    const Operator h = build_hamiltonian(p, f);
    const oracle::M8 ref = oracle::hamiltonian(p, f.bx, f.by, f.bz);
    CHECK((h - ref).cwiseAbs().maxCoeff() <= 1e-9 * spectral_scale(h));
    CHECK((h - h.adjoint()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("eigensystem is orthonormal, sorted and fully labeled") {
  std::mt19937_64 rng(12);
  for (int k = 0; k < 200; ++k) {
    const ManifoldParams p = oracle::random_params(rng);
    const MagneticField f{1e-4, 0.0, 2e-4};
    const Operator h = build_hamiltonian(p, f);
    const EigenSystem es = eigensystem(h, p);
    const double scale = spectral_scale(h);
    CHECK((es.states.adjoint() * es.states - Operator::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((h * es.states - es.states * es.energies.asDiagonal()).cwiseAbs().maxCoeff() < 1e-12 * scale);
    for (int i = 1; i < kDim; ++i) CHECK(es.energies(i - 1) <= es.energies(i));
    std::set<std::pair<int, int>> seen;
    for (const auto& l : es.labels) seen.insert({static_cast<int>(l.branch), static_cast<int>(l.qubit)});
    CHECK(seen.size() == 8);
    for (int i = 0; i < 4; ++i) CHECK(es.labels[i].branch == Branch::lower);
  }
}

TEST_CASE("zero field keeps the 1_B pair degenerate in both branches") {
  std::mt19937_64 rng(13);
  for (int k = 0; k < 2000; ++k) {
    const ManifoldParams p = oracle::random_params(rng);
    const Operator h = build_hamiltonian(p, {});
    const EigenSystem es = eigensystem(h, p);
    const double tol = 64 * std::numeric_limits<double>::epsilon() * spectral_scale(h);
    for (Branch br : {Branch::lower, Branch::upper})
      CHECK(std::abs(es.energy(br, Qubit::q1B0M) - es.energy(br, Qubit::q1B1M)) <= tol);
  }
}

TEST_CASE("1_B states carry the aligned-spin weight") {
  const ManifoldParams p = presets::ground_fitted();
  const EigenSystem es = solve_manifold(p, presets::fitted_dc_field());
  for (Branch br : {Branch::lower, Branch::upper}) {
    const double w1 = std::min(oracle::aligned_weight(es.state(br, Qubit::q1B0M)),
                               oracle::aligned_weight(es.state(br, Qubit::q1B1M)));
    const double w0 = std::max(oracle::aligned_weight(es.state(br, Qubit::q0B0M)),
                               oracle::aligned_weight(es.state(br, Qubit::q0B1M)));
    CHECK(w1 > 0.9);
    CHECK(w0 < 0.1);
  }
}

TEST_CASE("perturbative energies track diagonalization") {
  ManifoldParams p = presets::ground_fitted();
  p.upsilon_ioc = 0.5e6;
  REQUIRE(closed_form_well_conditioned(p));
  const EigenSystem es = solve_manifold(p, {});
  const double a = std::max(std::abs(p.a_perp), std::abs(p.a_par));
  const double delta = p.branch_splitting();
  for (int order : {1, 2}) {
    const auto cf = closed_form_energies(p, order);
    // Residual shifts: A^2/Delta after first order, A^3/Delta^2 (plus the
    // mixed strain/nuclear spin-orbit term) after second.
    const double bound = order == 1 ? 2.0 * a * a / delta : 0.01 * a * a / delta;
    for (const auto& le : cf) CHECK(std::abs(le.energy - es.energy(le.label.branch, le.label.qubit)) < bound);
  }
}

TEST_CASE("field helpers") {
  const MagneticField f = MagneticField::from_electron_frequency(6.03e6, 0.0, 1.55e6);
  CHECK(f.bx * 2.0 * kBohrMagnetonHzPerTesla == doctest::Approx(6.03e6).epsilon(1e-12));
  CHECK(f.bz * 2.0 * kBohrMagnetonHzPerTesla == doctest::Approx(1.55e6).epsilon(1e-12));
  CHECK(presets::ground_fitted().branch_splitting() ==
        doctest::Approx(std::sqrt(830e9 * 830e9 + 4 * 928.4e9 * 928.4e9)));
}

TEST_CASE("parameter validation") {
  ManifoldParams p = presets::ground_fitted();
  p.a_par = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(p.validate(), InputError);
  p = presets::ground_fitted();
  p.orbital_quench_q = 1.5;
  CHECK_THROWS_AS(p.validate(), InputError);
  CHECK_THROWS_AS(build_hamiltonian(p, {}), InputError);
  MagneticField f{std::numeric_limits<double>::infinity(), 0, 0};
  CHECK_THROWS_AS(f.validate(), InputError);

  nlohmann::json j = {{"a_perp", 1e6}, {"bogus", 1.0}};
  ManifoldParams q;
  CHECK_THROWS_AS(from_json(j, q), InputError);
  j = {{"a_perp", 1e6}};
  from_json(j, q);
  CHECK(q.a_perp == 1e6);
  nlohmann::json back;
  to_json(back, presets::excited_default());
  ManifoldParams r;
  from_json(back, r);
  CHECK(r == presets::excited_default());
}
