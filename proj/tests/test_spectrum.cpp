#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracle.hpp"
#include "snv/spectrum.hpp"

using namespace snv;

namespace {

double lorentz(double x, double x0, double fwhm) {
  const double h = 0.5 * fwhm;
  return h * h / ((x - x0) * (x - x0) + h * h);
}

EigenSystem fitted_ground() { return solve_manifold(presets::ground_fitted(), presets::fitted_dc_field()); }

}  // namespace

TEST_CASE("microwave lines at the fitted point") {
  const TransitionTable t = mw_transitions(fitted_ground());
  REQUIRE(t.entries.size() == 3);
  CHECK(t.microwave(Qubit::q0B0M, Qubit::q1B0M) == doctest::Approx(643.3e6).epsilon(1.5e6 / 643.3e6));
  CHECK(t.microwave(Qubit::q0B0M, Qubit::q0B1M) == doctest::Approx(612.4e6).epsilon(1.5e6 / 612.4e6));
  CHECK(t.microwave(Qubit::q0B1M, Qubit::q1B1M) == doctest::Approx(31.3e6).epsilon(1.5e6 / 31.3e6));
  for (const auto& e : t.entries) CHECK(e.frequency >= 0.0);

  const TransitionTable z = mw_transitions(solve_manifold(presets::ground_fitted(), {}));
  CHECK(z.microwave(Qubit::q0B0M, Qubit::q1B0M) == doctest::Approx(643.2e6).epsilon(0.3e6 / 643e6));
  CHECK(z.microwave(Qubit::q0B0M, Qubit::q0B1M) == doctest::Approx(612.6e6).epsilon(0.3e6 / 612e6));
  CHECK(z.microwave(Qubit::q0B1M, Qubit::q1B1M) == doctest::Approx(30.6e6).epsilon(0.3e6 / 30.6e6));
}

TEST_CASE("zero strain puts the memory line at A_par / 2") {
  ManifoldParams p = presets::ground_table();
  p.strain_egx = p.strain_egy = 0.0;
  const TransitionTable t = mw_transitions(solve_manifold(p, {}));
  // No strain: the transverse hyperfine only enters at second order.
  const double tol = p.a_perp * p.a_perp / std::abs(p.lambda_soc);
  CHECK(std::abs(t.microwave(Qubit::q0B0M, Qubit::q1B0M) - p.a_par / 2) < tol);
  CHECK(std::abs(t.microwave(Qubit::q0B0M, Qubit::q0B1M)) < tol);
  CHECK(std::abs(t.microwave(Qubit::q0B1M, Qubit::q1B1M) - p.a_par / 2) < tol);
}

TEST_CASE("axial field splits the two memory lines symmetrically") {
  const ManifoldParams p = presets::ground_fitted();
  const TransitionTable t0 = mw_transitions(solve_manifold(p, {}));
  const double bz = 5e-6;  // T
  const TransitionTable t1 = mw_transitions(solve_manifold(p, {0, 0, bz}));
  const double d_blue = t1.microwave(Qubit::q0B0M, Qubit::q1B0M) - t0.microwave(Qubit::q0B0M, Qubit::q1B0M);
  const double d_green = t1.microwave(Qubit::q0B1M, Qubit::q1B1M) - t0.microwave(Qubit::q0B1M, Qubit::q1B1M);
  CHECK(std::abs(d_blue) > 10e3);
  CHECK(d_blue * d_green < 0.0);
  CHECK(std::abs(d_blue + d_green) < 0.02 * std::abs(d_blue));
}

TEST_CASE("optical hyperfine splitting") {
  ManifoldParams g = presets::ground_table(), e = presets::excited_default();
  CHECK(optical_hyperfine_splitting(g, e) == doctest::Approx(453e6).epsilon(1e-12));
  g.strain_egx = e.strain_egx = 0.0;
  CHECK(optical_hyperfine_splitting(g, e) == 453e6);

  const TransitionTable t = optical_transitions(solve_manifold(presets::ground_fitted(), {}),
                                                solve_manifold(presets::excited_default(), {}));
  CHECK(std::abs(t.peak(PeakId::f1).frequency - t.peak(PeakId::f2).frequency) ==
        doctest::Approx(675.9e6).epsilon(2e6 / 675.9e6));
}

TEST_CASE("optical table structure") {
  const EigenSystem g = solve_manifold(presets::ground_fitted(), {});
  const EigenSystem e = solve_manifold(presets::excited_default(), {});
  const TransitionTable t = optical_transitions(g, e, 0.0);
  CHECK(t.entries.size() == 16);
  int f0 = 0;
  double f0_freq[2] = {0, 0};
  for (const auto& x : t.entries) {
    CHECK(x.kind == TransitionKind::optical);
    CHECK(x.from.branch == Branch::lower);
    CHECK(x.to.branch == Branch::lower);
    if (x.peak == PeakId::f0) f0_freq[f0++] = x.frequency;
    if (x.peak != PeakId::other) CHECK(x.from.qubit == x.to.qubit);
  }
  REQUIRE(f0 == 2);
  CHECK(f0_freq[0] == doctest::Approx(f0_freq[1]).epsilon(1e-15));

  const double zpl = 484.1e12;
  const TransitionTable s = optical_transitions(g, e, zpl);
  for (std::size_t i = 0; i < t.entries.size(); ++i)
    CHECK(s.entries[i].frequency - t.entries[i].frequency == doctest::Approx(zpl).epsilon(1e-12));
}

TEST_CASE("single Lorentzian") {
  TransitionTable t;
  t.entries.push_back({{}, {}, 10e6, TransitionKind::optical, PeakId::f0});
  const double w = 60e6;
  const std::vector<double> grid = {10e6, 10e6 - w / 2, 10e6 + w / 2, 10e6 + 3 * w};
  const SpectrumTrace s = ple_spectrum(t, w, {1.0}, grid);
  CHECK(s.intensity[0] == doctest::Approx(1.0));
  CHECK(s.intensity[1] == doctest::Approx(0.5));
  CHECK(s.intensity[2] == doctest::Approx(0.5));
  CHECK(s.intensity[3] == doctest::Approx(lorentz(grid[3], 10e6, w)));
  CHECK(ple_spectrum(TransitionTable{}, w, {}, {}).intensity.empty());
}

TEST_CASE("PLE integral equals pi/2 * linewidth * sum of weights") {
  const TransitionTable t = optical_transitions(fitted_ground(), solve_manifold(presets::excited_default(),
                                                                                presets::fitted_dc_field()));
  std::vector<double> weights(t.entries.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) sum += weights[i] = 0.5 + 0.1 * static_cast<double>(i % 4);
  const double w = presets::kPleLinewidth;
  const auto grid = ple_grid(t, w, 400001, 2000.0);
  const SpectrumTrace s = ple_spectrum(t, w, weights, grid);
  double integral = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    integral += 0.5 * (s.intensity[i] + s.intensity[i - 1]) * (grid[i] - grid[i - 1]);
  CHECK(integral == doctest::Approx(std::numbers::pi / 2 * w * sum).epsilon(0.01));
}

TEST_CASE("three resolved PLE peaks") {
  const TransitionTable t = optical_transitions(fitted_ground(), solve_manifold(presets::excited_default(),
                                                                                presets::fitted_dc_field()));
  const double w = presets::kPleLinewidth;
  const double f1 = t.peak(PeakId::f1).frequency, f2 = t.peak(PeakId::f2).frequency;
  const double f0 = t.peak(PeakId::f0).frequency;
  // f2 is the spin-conserving 0_B line next to f0.
  CHECK(std::abs(f2 - f0) < std::abs(f1 - f0));
  // Valley between the outer pair, without the middle line.
  TransitionTable outer;
  for (const auto& e : t.entries)
    if (e.peak == PeakId::f1 || e.peak == PeakId::f2) outer.entries.push_back(e);
  const auto grid = ple_grid(outer, w, 20001, 1.0);
  const SpectrumTrace s = ple_spectrum(outer, w, {}, grid);
  double valley = 1e9, peak = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] > std::min(f1, f2) && grid[i] < std::max(f1, f2)) valley = std::min(valley, s.intensity[i]);
    peak = std::max(peak, s.intensity[i]);
  }
  CHECK(valley < 0.05 * peak);
  // Default weights keep only the spin-conserving lines.
  const SpectrumTrace all = ple_spectrum(t, w, {}, {f1});
  double expect = 0.0;
  for (const auto& e : t.entries)
    if (e.peak != PeakId::other) expect += lorentz(f1, e.frequency, w);
  CHECK(all.intensity[0] == doctest::Approx(expect));
}

TEST_CASE("memory detuning") {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 1000; ++k) {
    const ManifoldParams g = oracle::random_params(rng), e = oracle::random_params(rng);
    const EigenSystem eg = solve_manifold(g, {}), ee = solve_manifold(e, {});
    const double scale = std::max(eg.energies.cwiseAbs().maxCoeff(), ee.energies.cwiseAbs().maxCoeff());
    CHECK(std::abs(memory_detuning(eg, ee)) <= 1e-14 * scale);
  }
  const double dm = memory_detuning(fitted_ground(), solve_manifold(presets::excited_default(),
                                                                    presets::fitted_dc_field()));
  CHECK(std::abs(dm) == doctest::Approx(10.4e3).epsilon(0.5));
}
