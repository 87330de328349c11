#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "oracle.hpp"
#include "snv/coherence.hpp"
#include "snv/error.hpp"

using namespace snv;

namespace {

// Upper minus lower branch: broker = mean(1_B) - mean(0_B), from a plain
// eigensolve of the element-wise Hamiltonian.
double broker_difference(const ManifoldParams& p) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<std::complex<double>, 8, 8>> es(oracle::hamiltonian(p, 0, 0, 0));
  double b[2] = {0, 0}, z[2] = {0, 0};
  for (int k = 0; k < 8; ++k) {
    const int branch = k < 4 ? 0 : 1;
    const double e = es.eigenvalues()(k);
    if (oracle::aligned_weight(es.eigenvectors().col(k)) > 0.5)
      b[branch] += 0.5 * e;
    else
      z[branch] += 0.5 * e;
  }
  return (b[1] - z[1]) - (b[0] - z[0]);
}

ManifoldParams strained(double upsilon, double alpha) {
  ManifoldParams p = presets::ground_table();
  p.upsilon_ioc = upsilon;
  p.strain_egx = alpha;
  p.strain_egy = 0.0;
  return p;
}

}  // namespace

TEST_CASE("memory branch dependence vanishes") {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 200; ++k) CHECK(lambda_eff(oracle::random_params(rng)).lambda_m == 0.0);
}

TEST_CASE("broker branch dependence matches diagonalization") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ups(0.05e6, 2e6), strain(50e9, 1.5e12), sgn(-1, 1);
  int checked = 0;
  for (int k = 0; k < 400; ++k) {
    ManifoldParams p = strained((sgn(rng) < 0 ? -1 : 1) * ups(rng), strain(rng));
    if (p.branch_splitting() / std::abs(p.a_perp) <= 500.0) continue;
    const double exact = broker_difference(p);
    const double lb = lambda_eff(p).lambda_b;
    // Near the ridge both vanish; compare to the size of the pieces there.
    const double scale = std::max(std::abs(exact), 0.05 * p.a_perp * p.a_perp / p.branch_splitting());
    CHECK(std::abs(lb - exact) <= 0.1 * scale);
    CHECK(lambda_eff_diagonalized(p).lambda_b == doctest::Approx(exact).epsilon(1e-3).scale(scale));
    ++checked;
  }
  CHECK(checked > 300);
}

TEST_CASE("T2 limits") {
  CoherenceParams c;
  for (double lb : {1e3, 1e5, 1e7}) {
    c.gamma_phonon = 1e4 / lb;  // lambda_B gamma >> 1
    CHECK(t2_phonon(lb, c) == doctest::Approx(2.0 * c.gamma_phonon).epsilon(0.01));
    c.gamma_phonon = 1e-3 / lb;  // lambda_B gamma << 1
    CHECK(t2_phonon(lb, c) == doctest::Approx(4.0 * std::numbers::pi / lb).epsilon(0.01));
    CHECK(t2_phonon(-lb, c) == t2_phonon(lb, c));
  }
  CHECK(t2_phonon(0.0, presets::coherence_1p7k()) == std::numeric_limits<double>::infinity());
  c.gamma_phonon = -1.0;
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("T2 falls as the broker dependence grows") {
  const CoherenceParams c = presets::coherence_1p7k();
  double prev = std::numeric_limits<double>::infinity();
  for (double lb = 1.0; lb < 1e9; lb *= 4.0) {
    const double t = t2_phonon(lb, c);
    CHECK(t < prev);
    prev = t;
  }
}

TEST_CASE("broker ridge") {
  const ManifoldParams p = strained(0.0, 928.4e9);
  const double u0 = lambda_b_zero_upsilon(p);
  CHECK(u0 * p.lambda_soc > 0.0);
  ManifoldParams at = p;
  at.upsilon_ioc = u0;
  CHECK(std::abs(lambda_eff(at).lambda_b) < 1e-6 * p.a_perp * p.a_perp / p.branch_splitting());
  // Diagonalization changes sign across it too.
  ManifoldParams below = p, above = p;
  below.upsilon_ioc = 0.5 * u0;
  above.upsilon_ioc = 1.5 * u0;
  CHECK(broker_difference(below) * broker_difference(above) < 0.0);
}

TEST_CASE("coherence map layout and sign convention") {
  const ManifoldParams base = presets::ground_table();
  const std::vector<double> ups = {0.1e6, 0.5e6, 1e6}, alpha = {100e9, 500e9};
  const auto plus = coherence_map(base, ups, alpha, +1, presets::coherence_1p7k(), 2);
  const auto minus = coherence_map(base, ups, alpha, -1, presets::coherence_1p7k());
  REQUIRE(plus.size() == 6);
  for (std::size_t i = 0; i < plus.size(); ++i) {
    CHECK(plus[i].upsilon * base.lambda_soc > 0.0);
    CHECK(minus[i].upsilon * base.lambda_soc < 0.0);
    CHECK(plus[i].alpha == alpha[i % 2]);
    CHECK(std::abs(plus[i].upsilon) == ups[i / 2]);
    const ManifoldParams p = strained(plus[i].upsilon, plus[i].alpha);
    CHECK(plus[i].lambda_b == lambda_eff(p).lambda_b);
    CHECK(plus[i].t2 == t2_phonon(plus[i].lambda_b, presets::coherence_1p7k()));
  }
  CHECK_THROWS_AS(coherence_map(base, ups, alpha, 0, presets::coherence_1p7k()), InputError);
  CHECK_THROWS_AS(coherence_map(base, {}, alpha, 1, presets::coherence_1p7k()), InputError);
}
