#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "oracle.hpp"
#include "snv/error.hpp"
#include "snv/optics.hpp"

using namespace snv;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kTwoPi = 2.0 * std::numbers::pi;

EigenSystem ground_at(const MagneticField& b) { return solve_manifold(presets::ground_fitted(), b); }
EigenSystem excited_at(const MagneticField& b) { return solve_manifold(presets::excited_default(), b); }

Operator spin_op(int which, int k) {
  Pauli s = k == 1 ? pauli::x() : k == 2 ? pauli::y() : pauli::z();
  return which == 0 ? pauli::kron(pauli::identity(), s, pauli::identity())
                    : pauli::kron(pauli::identity(), pauli::identity(), s);
}

}  // namespace

TEST_CASE("dipoles act on the orbital factor only") {
  const DipoleSet d = DipoleSet::standard();
  for (const Operator* p : {&d.px, &d.py, &d.pz}) {
    CHECK(p->cwiseAbs().maxCoeff() > 0.0);
    for (int which : {0, 1})
      for (int k : {1, 2, 3}) {
        const Operator s = spin_op(which, k);
        CHECK(((*p) * s - s * (*p)).cwiseAbs().maxCoeff() < 1e-15);
      }
  }
}

TEST_CASE("branching rows are probability distributions") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> b(-1e-3, 1e-3);
  const DipoleSet d = DipoleSet::standard();
  for (int k = 0; k < 200; ++k) {
    const MagneticField f{b(rng), b(rng), b(rng)};
    const CyclicityResult c = cyclicity(solve_manifold(oracle::random_params(rng), f),
                                        solve_manifold(oracle::random_params(rng), f), d);
    for (int i = 0; i < 4; ++i) {
      if (!c.defined[i]) continue;
      CHECK(c.branching.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(c.branching.row(i).minCoeff() >= 0.0);
      const double expect = 1.0 / (1.0 - c.branching.row(i).maxCoeff());
      if (std::isfinite(expect)) CHECK(c.lambda[i] == doctest::Approx(expect).epsilon(1e-9));
    }
  }
}

TEST_CASE("f0 cycles perfectly at zero field") {
  const CyclicityResult c = cyclicity(ground_at({}), excited_at({}), DipoleSet::standard());
  CHECK(c.leakage_f0 < 1e-12);
  CHECK(c.lambda_f0 == kInf);
}

TEST_CASE("transverse field opens f0 leakage") {
  const DipoleSet d = DipoleSet::standard();
  const MagneticField b{200e-6, 0, 0};
  const double l200 = cyclicity(ground_at(b), excited_at(b), d).lambda_f0;
  CHECK(l200 >= 85.0);
  CHECK(l200 <= 180.0);
  double prev = kInf;
  for (int k = 1; k <= 40; ++k) {
    const MagneticField f{k * 25e-6, 0, 0};
    const double l = cyclicity(ground_at(f), excited_at(f), d).lambda_f0;
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("cyclicity map layout") {
  const std::vector<double> bx = {0.0, 1e-4, 2e-4}, bz = {0.0, 5e-5};
  const auto rows = cyclicity_map(presets::ground_fitted(), presets::excited_default(), DipoleSet::standard(),
                                  bx, bz, 2);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].lambda_f0 == kInf);
  CHECK(rows[3].bx_tesla == 1e-4);
  CHECK(rows[3].bz_tesla == 5e-5);
  const MagneticField f{2e-4, 0, 5e-5};
  CHECK(rows[5].lambda_f0 == cyclicity(ground_at(f), excited_at(f), DipoleSet::standard()).lambda_f0);
}

TEST_CASE("cyclicity from lifetimes") {
  CHECK(cyclicity_from_lifetimes(1.589e-6, 6e-9) == doctest::Approx(132.4).epsilon(1e-3));
  CHECK(cyclicity_from_lifetimes(12e-9, 6e-9) == 1.0);
  CHECK(cyclicity_from_lifetimes(364.9e-9, 6e-9) == doctest::Approx(30.41).epsilon(1e-3));
  CHECK_THROWS_AS(cyclicity_from_lifetimes(0.0, 6e-9), InputError);
  CHECK_THROWS_AS(cyclicity_from_lifetimes(1e-6, -1.0), InputError);
}

TEST_CASE("two-level pumping time is 2 tau Lambda") {
  // Cycling ground state g0 leaks into a dark g1 once per Lambda photons;
  // under saturation half the population sits in the excited state.
  for (double lambda : {20.0, 132.44}) {
    const double tau = 6e-9, gamma = 1.0 / tau;
    RateModel m;
    m.decay = Eigen::MatrixXd(1, 2);
    m.decay << gamma * (1.0 - 1.0 / lambda), gamma / lambda;
    m.excitation = Eigen::MatrixXd(1, 2);
    m.excitation << 1000.0 * gamma, 0.0;
    Eigen::VectorXd p0(3);
    p0 << 1.0, 0.0, 0.0;
    const double expect = 2.0 * tau * lambda;
    const RateSolution sol = solve_rate_model(m, p0, 12.0 * expect, 2000);
    CHECK(fit_polarization_time(sol, 20.0 * tau) == doctest::Approx(expect).epsilon(0.1));
    CHECK(sol.steady_state(1) == doctest::Approx(1.0).epsilon(1e-9));
    for (const auto& p : sol.populations) CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("no pump, no dynamics") {
  RateModel m;
  m.decay = Eigen::MatrixXd::Constant(4, 4, 0.25e8);
  m.excitation = Eigen::MatrixXd::Zero(4, 4);
  Eigen::VectorXd p0 = Eigen::VectorXd::Zero(8);
  p0.head(4) << 0.1, 0.2, 0.3, 0.4;
  const RateSolution sol = solve_rate_model(m, p0, 1e-6);
  CHECK((sol.populations.back() - p0).cwiseAbs().maxCoeff() < 1e-12);

  PumpSettings s;
  s.rabi = 0.0;
  const PumpResult r = pump_dynamics(ground_at({}), excited_at({}), DipoleSet::standard(), s, {0.1, 0.2, 0.3, 0.4});
  CHECK(r.final_populations[0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(r.final_populations[3] == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("pumping on f2 at the fitted field polarizes into 0B0M") {
  const EigenSystem g = ground_at(presets::fitted_dc_field()), e = excited_at(presets::fitted_dc_field());
  PumpSettings s;
  s.pump_frequency = peak_frequency(g, e, PeakId::f2);
  const PumpResult a = pump_dynamics(g, e, DipoleSet::standard(), s);
  CHECK(a.final_populations[0] > 0.9);
  double sum = 0.0;
  for (double p : a.populations) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    sum += p;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(a.tau_pol > 0.0);
  CHECK(a.tau_pol < s.duration);
  // Steady state does not remember where it started.
  const PumpResult b = pump_dynamics(g, e, DipoleSet::standard(), s, {0.0, 0.0, 1.0, 0.0});
  if (a.converged && b.converged)
    for (int j = 0; j < 4; ++j) CHECK(a.populations[j] == doctest::Approx(b.populations[j]).epsilon(1e-6));
}

TEST_CASE("excitation fidelity closed form") {
  const double dw = kTwoPi * 10.4e3, tau = 6e-9;
  CHECK(excitation_fidelity(dw, tau, 0) == 1.0);
  CHECK(excitation_fidelity(0.0, tau, 1e9) == 1.0);
  CHECK(excitation_fidelity(dw, tau, 1.37e6) == doctest::Approx(0.95).epsilon(0.002));
  double prev = 1.0;
  for (double n = 1; n < 1e8; n *= 3) {
    const double f = excitation_fidelity(dw, tau, n);
    CHECK(f < 1.0);
    CHECK(f <= prev);
    CHECK(f >= 0.5);
    CHECK(excitation_fidelity(2 * dw, tau, n) <= f);
    prev = f;
  }
}

TEST_CASE("Monte Carlo dwell-time oracle agrees with the closed form") {
  const double tau = 6e-9;
  std::uint64_t seed = 5;
  for (double x : {0.01, 0.1, 1.0})
    for (std::uint64_t n : {1ull, 10ull, 100ull}) {
      const auto mc = excitation_fidelity_mc(x / tau, tau, n, 4000, seed++);
      CHECK(std::abs(mc.value - excitation_fidelity(x / tau, tau, static_cast<double>(n))) <=
            3.0 * mc.stderr_ + 1e-12);
    }
  CHECK(excitation_fidelity_mc(0.0, tau, 50, 1000, 1).value == 1.0);
  const auto a = excitation_fidelity_mc(1e8, tau, 7, 1000, 42);
  const auto b = excitation_fidelity_mc(1e8, tau, 7, 1000, 42);
  CHECK(a.value == b.value);
  CHECK(a.stderr_ == b.stderr_);
  CHECK_THROWS_AS(excitation_fidelity_mc(1e8, tau, 7, 999, 42), InputError);
}

TEST_CASE("excitation budget") {
  const ExcitationBudget sn = max_excitations(kTwoPi * 10.4e3, 6e-9, 0.95);
  CHECK_FALSE(sn.unbounded);
  CHECK(static_cast<double>(sn.count) == doctest::Approx(1.37e6).epsilon(0.01));
  CHECK(excitation_fidelity(kTwoPi * 10.4e3, 6e-9, static_cast<double>(sn.count)) >= 0.95);
  CHECK(excitation_fidelity(kTwoPi * 10.4e3, 6e-9, static_cast<double>(sn.count + 1)) < 0.95);
  CHECK(max_excitations(kTwoPi * 35e6, presets::kSivLifetime, 0.95).count == 1);
  CHECK(max_excitations(0.0, 6e-9, 0.95).unbounded);
  CHECK(max_excitations(kTwoPi * 10.4e3, 6e-9, 0.51).count > max_excitations(kTwoPi * 10.4e3, 6e-9, 0.9).count);
  CHECK_THROWS_AS(max_excitations(1.0, 6e-9, 0.5), InputError);
}

TEST_CASE("collection efficiency") {
  CHECK(collection_efficiency(11.67e3, 6e-9) == doctest::Approx(1.4e-4).epsilon(0.001));
  CHECK(collection_efficiency(1.0 / 12e-9, 6e-9) == doctest::Approx(1.0));
  CHECK(collection_efficiency(0.0, 6e-9) == 0.0);
}
