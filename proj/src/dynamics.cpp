#include "snv/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numeric>
#include <random>

#include "snv/error.hpp"
#include "snv/parallel.hpp"
#include "snv/rng.hpp"

namespace snv {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;
// Usable coherence window for decay fits; below it sampling noise dominates.
constexpr double kFitLow = 0.1;
constexpr double kFitHigh = 0.95;
const Complex kI(0.0, 1.0);

using Energies = Eigen::Matrix<double, kDim, 1>;

/// exp(-i 2 pi (diag(e) + v) dt) for Hermitian v.
Operator step_propagator(const Energies& e, const Operator& v, double dt) {
  Operator h = v;
  h.diagonal() += e.cast<Complex>();
  Eigen::SelfAdjointEigenSolver<Operator> es(h);
  if (es.info() != Eigen::Success) throw NumericalError("step diagonalization failed");
  Eigen::Matrix<Complex, kDim, 1> ph;
  for (int k = 0; k < kDim; ++k) ph(k) = std::exp(-kI * (kTwoPi * es.eigenvalues()(k) * dt));
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

double unitarity_error(const Operator& u) {
  return (u.adjoint() * u - Operator::Identity()).cwiseAbs().maxCoeff();
}

/// H0 in its own eigenbasis plus the unit drive operators, energies shifted by
/// the lower-branch mean (a global phase).
struct Frame {
  EigenSystem es;
  Energies e;
  double shift = 0.0;
  Operator vx;  // per Hz of amplitude_x
  Operator vz;  // per Hz of amplitude_z
  std::array<int, 4> lower{};

  Frame(const ManifoldParams& params, const MagneticField& field)
      : es(solve_manifold(params, field)) {
    lower = es.lower_qubit_indices();
    for (int i : lower) shift += es.energies(i) / 4.0;
    e = es.energies.array() - shift;
    const double g = params.g_electron;
    const Operator zx = zeeman_operator(params, MagneticField::from_electron_frequency(1.0, 0.0, 0.0, g));
    const Operator zz = zeeman_operator(params, MagneticField::from_electron_frequency(0.0, 0.0, 1.0, g));
    vx = es.states.adjoint() * zx * es.states;
    vz = es.states.adjoint() * zz * es.states;
  }

  Operator drive(double ax, double az) const { return ax * vx + az * vz; }
  int idx(Qubit q) const { return es.index(Branch::lower, q); }

  double max_lower_transition() const {
    double m = 0.0;
    for (int a : lower)
      for (int b : lower) m = std::max(m, std::abs(es.energies(a) - es.energies(b)));
    return m;
  }
};

/// Always-on periodic drive starting at t = 0 with dt = period / m. Partial
/// propagators within one period plus binary powers of the period propagator
/// give U(n dt) for any n.
class PeriodicEngine {
 public:
  PeriodicEngine(const Energies& e, const Operator& v, double f, double phase, int m) : m_(m) {
    dt_ = 1.0 / (f * m);
    partial_.resize(m + 1);
    partial_[0].setIdentity();
    for (int r = 0; r < m; ++r) {
      const double c = std::cos(kTwoPi * (r + 0.5) / m + phase);
      partial_[r + 1] = step_propagator(e, c * v, dt_) * partial_[r];
    }
    pow2_.push_back(partial_[m]);
  }

  double dt() const { return dt_; }

  Operator at(std::int64_t n) const {
    if (n < 0) throw InputError("negative time index");
    std::int64_t k = n / m_;
    const int r = static_cast<int>(n % m_);
    Operator p = Operator::Identity();
    for (std::size_t j = 0; k > 0; ++j, k >>= 1) {
      while (pow2_.size() <= j) pow2_.push_back(pow2_.back() * pow2_.back());
      if (k & 1) p = pow2_[j] * p;
    }
    return partial_[r] * p;
  }

 private:
  int m_;
  double dt_ = 0.0;
  std::vector<Operator> partial_;
  mutable std::vector<Operator> pow2_;  // engine is used by one thread only
};

int steps_per_period(double f, double f_max, int samples) {
  if (!(f > 0.0) || !std::isfinite(f)) throw InputError("drive frequency must be positive");
  if (samples < kMinSamplesPerPeriod)
    throw InputError("samples_per_period must be at least " + std::to_string(kMinSamplesPerPeriod));
  return static_cast<int>(std::ceil(samples * std::max(f, f_max) / f - 1e-9));
}

void ideal_swap(StateVector& psi, int a, int b) {
  const Complex pa = psi(a), pb = psi(b);
  psi(a) = -kI * pb;
  psi(b) = -kI * pa;
}

double bright_population(const Frame& fr, const StateVector& psi) {
  return std::norm(psi(fr.idx(Qubit::q1B0M))) + std::norm(psi(fr.idx(Qubit::q1B1M)));
}

struct Routing {
  bool pre_purple = false;
  bool post_green = false;
};

Routing routing(MwTransition t) {
  switch (t) {
    case MwTransition::purple: return {false, true};
    case MwTransition::green: return {true, false};
    case MwTransition::blue: break;
  }
  return {};
}

StateVector initial_state(const Frame& fr, MwTransition t) {
  StateVector psi = StateVector::Zero();
  psi(fr.idx(Qubit::q0B0M)) = 1.0;
  if (routing(t).pre_purple) ideal_swap(psi, fr.idx(Qubit::q0B0M), fr.idx(Qubit::q0B1M));
  return psi;
}

double readout(const Frame& fr, MwTransition t, StateVector psi) {
  if (routing(t).post_green) ideal_swap(psi, fr.idx(Qubit::q0B1M), fr.idx(Qubit::q1B1M));
  return bright_population(fr, psi);
}

void check_grid(const std::vector<double>& g, const char* what, bool allow_zero) {
  if (g.empty()) throw InputError(std::string(what) + " grid must be non-empty");
  for (double v : g) {
    if (!std::isfinite(v) || v < 0.0 || (!allow_zero && v == 0.0))
      throw InputError(std::string(what) + " grid values must be finite and " +
                       (allow_zero ? "non-negative" : "positive"));
  }
}

/// Physicists' Gauss-Hermite rule by Golub-Welsch; weights normalized to 1.
void gauss_hermite(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 1.0);
  if (n == 1) return;
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  for (int k = 0; k < n; ++k) {
    x[k] = es.eigenvalues()(k);
    w[k] = es.eigenvectors()(0, k) * es.eigenvectors()(0, k);
  }
}

/// Standard deviation of the accumulated detuning integral over a delay (Hz s).
double phase_sd(const NoiseModel& noise, double t) {
  switch (noise.kind) {
    case NoiseKind::none: return 0.0;
    case NoiseKind::quasi_static_gaussian: return noise.sigma * t;
    case NoiseKind::ornstein_uhlenbeck: {
      const double tc = noise.correlation_time, u = t / tc;
      return noise.sigma * tc * std::sqrt(std::max(0.0, 2.0 * (u - 1.0 + std::exp(-u))));
    }
  }
  return 0.0;
}

std::vector<int> noise_levels(const Frame& fr, MwTransition t) {
  if (t == MwTransition::purple) return {fr.idx(Qubit::q0B1M)};
  return {fr.idx(Qubit::q1B0M), fr.idx(Qubit::q1B1M)};
}

}  // namespace

// ---------------------------------------------------------------------------

void PulseProgram::validate() const {
  if (segments.empty()) throw InputError("pulse program must contain at least one segment");
  for (const auto& s : segments) {
    if (!std::isfinite(s.duration) || s.duration < 0.0)
      throw InputError("segment duration must be finite and non-negative");
    if (!std::isfinite(s.frequency) || !std::isfinite(s.amplitude_x) ||
        !std::isfinite(s.amplitude_z) || !std::isfinite(s.phase))
      throw InputError("segment values must be finite");
    if (!s.is_free() && !(s.frequency > 0.0))
      throw InputError("driven segment needs a positive frequency");
  }
}

double PulseProgram::duration() const {
  double t = 0.0;
  for (const auto& s : segments) t += s.duration;
  return t;
}

Operator bright_projector(const EigenSystem& es) {
  Operator p = Operator::Zero();
  for (Qubit q : {Qubit::q1B0M, Qubit::q1B1M}) {
    const StateVector v = es.state(Branch::lower, q);
    p += v * v.adjoint();
  }
  return p;
}

double fastest_frequency(const EigenSystem& es, const PulseProgram& program) {
  double m = 0.0;
  const auto lower = es.lower_qubit_indices();
  for (int a : lower)
    for (int b : lower) m = std::max(m, std::abs(es.energies(a) - es.energies(b)));
  for (const auto& s : program.segments)
    if (!s.is_free() && s.duration > 0.0) m = std::max(m, s.frequency);
  return m;
}

PropagationResult propagate(const ManifoldParams& params, const MagneticField& field,
                            const PulseProgram& program, double timestep) {
  program.validate();
  if (!(timestep > 0.0) || !std::isfinite(timestep)) throw InputError("timestep must be positive");
  const Frame fr(params, field);
  const bool driven = std::any_of(program.segments.begin(), program.segments.end(),
                                  [](const DriveSegment& s) { return !s.is_free() && s.duration > 0.0; });
  if (driven) {
    const double required = 1.0 / (kMinSamplesPerPeriod * fastest_frequency(fr.es, program));
    if (timestep > required * (1.0 + 1e-12))
      throw InputError("timestep too coarse: " + std::to_string(timestep) + " s > required " +
                       std::to_string(required) + " s");
  }

  Operator u = Operator::Identity();
  double t = 0.0;
  for (const auto& s : program.segments) {
    if (s.duration == 0.0) continue;
    if (s.is_free()) {
      Eigen::Matrix<Complex, kDim, 1> ph;
      for (int k = 0; k < kDim; ++k) ph(k) = std::exp(-kI * (kTwoPi * fr.e(k) * s.duration));
      u = ph.asDiagonal() * u;
    } else {
      const auto n = static_cast<std::int64_t>(std::ceil(s.duration / timestep - 1e-9));
      const double h = s.duration / static_cast<double>(n);
      const Operator v = fr.drive(s.amplitude_x, s.amplitude_z);
      Operator seg = Operator::Identity();
      for (std::int64_t j = 0; j < n; ++j) {
        const double c = std::cos(kTwoPi * s.frequency * (t + (j + 0.5) * h) + s.phase);
        seg = step_propagator(fr.e, c * v, h) * seg;
      }
      if (unitarity_error(seg) > 1e-9) throw NumericalError("segment propagator lost unitarity");
      u = seg * u;
    }
    t += s.duration;
  }

  PropagationResult r;
  const Complex global = std::exp(-kI * (kTwoPi * fr.shift * t));
  r.unitary = global * (fr.es.states * u * fr.es.states.adjoint());
  r.state = r.unitary * fr.es.state(Branch::lower, program.init);
  r.bright_population = (r.state.adjoint() * bright_projector(fr.es) * r.state)(0).real();
  return r;
}

// ---------------------------------------------------------------------------

std::string_view to_string(MwTransition t) {
  switch (t) {
    case MwTransition::blue: return "blue";
    case MwTransition::purple: return "purple";
    case MwTransition::green: return "green";
  }
  return "?";
}

MwTransition mw_transition_from_string(std::string_view s) {
  if (s == "blue") return MwTransition::blue;
  if (s == "purple") return MwTransition::purple;
  if (s == "green") return MwTransition::green;
  throw InputError("unknown transition '" + std::string(s) + "' (blue|purple|green)");
}

std::pair<Qubit, Qubit> transition_qubits(MwTransition t) {
  switch (t) {
    case MwTransition::blue: return {Qubit::q0B0M, Qubit::q1B0M};
    case MwTransition::purple: return {Qubit::q0B0M, Qubit::q0B1M};
    case MwTransition::green: return {Qubit::q0B1M, Qubit::q1B1M};
  }
  return {};
}

std::string_view to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::none: return "none";
    case NoiseKind::quasi_static_gaussian: return "quasi-static-gaussian";
    case NoiseKind::ornstein_uhlenbeck: return "ornstein-uhlenbeck";
  }
  return "?";
}

NoiseKind noise_kind_from_string(std::string_view s) {
  if (s == "none") return NoiseKind::none;
  if (s == "quasi-static-gaussian") return NoiseKind::quasi_static_gaussian;
  if (s == "ornstein-uhlenbeck") return NoiseKind::ornstein_uhlenbeck;
  throw InputError("unknown noise kind '" + std::string(s) + "'");
}

void NoiseModel::validate() const {
  if (!std::isfinite(sigma) || sigma < 0.0) throw InputError("noise sigma must be >= 0");
  if (samples < 1) throw InputError("noise samples must be >= 1");
  if (kind == NoiseKind::ornstein_uhlenbeck && !(correlation_time > 0.0))
    throw InputError("OU noise needs a positive correlation_time");
}

void SignalMap::validate() const {
  if (frequency.empty() || duration.empty()) throw InputError("signal map grids must be non-empty");
  if (signal.rows() != static_cast<Eigen::Index>(frequency.size()) ||
      signal.cols() != static_cast<Eigen::Index>(duration.size()))
    throw InputError("signal map shape does not match its grids");
  for (Eigen::Index i = 0; i < signal.size(); ++i) {
    const double v = signal.data()[i];
    if (!std::isfinite(v)) throw InputError("signal map contains non-finite values");
  }
}

TransitionDrive transition_drive(const ManifoldParams& params, const MagneticField& field,
                                 const DriveAmplitude& drive, MwTransition t) {
  const Frame fr(params, field);
  const auto [qa, qb] = transition_qubits(t);
  const int a = fr.idx(qa), b = fr.idx(qb);
  return {std::abs(fr.es.energies(b) - fr.es.energies(a)), std::abs(fr.drive(drive.bx, drive.bz)(a, b))};
}

SignalMap rabi_map(const ManifoldParams& params, const MagneticField& field,
                   const DriveAmplitude& drive, MwTransition t,
                   const std::vector<double>& freq_grid, const std::vector<double>& time_grid,
                   const MapOptions& opts) {
  check_grid(freq_grid, "frequency", false);
  check_grid(time_grid, "duration", true);
  const Frame fr(params, field);
  const Operator v = fr.drive(drive.bx, drive.bz);
  const double f_max = fr.max_lower_transition();
  const StateVector psi0 = initial_state(fr, t);

  SignalMap map{freq_grid, time_grid, Eigen::MatrixXd(freq_grid.size(), time_grid.size())};
  parallel_for(freq_grid.size(), opts.threads, [&](std::size_t i) {
    const double f = freq_grid[i];
    const PeriodicEngine eng(fr.e, v, f, 0.0, steps_per_period(f, f_max, opts.samples_per_period));
    for (std::size_t j = 0; j < time_grid.size(); ++j) {
      const auto n = std::llround(time_grid[j] / eng.dt());
      map.signal(i, j) = readout(fr, t, eng.at(n) * psi0);
    }
  });
  return map;
}

SignalMap ramsey_map(const ManifoldParams& params, const MagneticField& field,
                     const DriveAmplitude& drive, MwTransition t,
                     const std::vector<double>& freq_grid, const std::vector<double>& delay_grid,
                     const NoiseModel& noise, double pi_half, const MapOptions& opts) {
  check_grid(freq_grid, "frequency", false);
  check_grid(delay_grid, "delay", true);
  noise.validate();
  const Frame fr(params, field);
  const Operator v = fr.drive(drive.bx, drive.bz);
  const double f_max = fr.max_lower_transition();
  if (!(pi_half > 0.0)) {
    const auto [qa, qb] = transition_qubits(t);
    const double rabi = std::abs(v(fr.idx(qa), fr.idx(qb)));
    if (!(rabi > 0.0)) throw InputError("drive does not couple the tested transition");
    pi_half = 1.0 / (4.0 * rabi);
  }
  std::vector<double> nodes, weights;
  gauss_hermite(noise.kind == NoiseKind::none || noise.sigma == 0.0 ? 1 : noise.samples, nodes, weights);
  const std::vector<int> shifted = noise_levels(fr, t);
  const StateVector psi0 = initial_state(fr, t);

  SignalMap map{freq_grid, delay_grid, Eigen::MatrixXd(freq_grid.size(), delay_grid.size())};
  parallel_for(freq_grid.size(), opts.threads, [&](std::size_t i) {
    const double f = freq_grid[i];
    const PeriodicEngine eng(fr.e, v, f, 0.0, steps_per_period(f, f_max, opts.samples_per_period));
    const std::int64_t np = std::max<std::int64_t>(1, std::llround(pi_half / eng.dt()));
    const StateVector psi1 = eng.at(np) * psi0;
    for (std::size_t j = 0; j < delay_grid.size(); ++j) {
      const std::int64_t nd = std::llround(delay_grid[j] / eng.dt());
      const double tau = static_cast<double>(nd) * eng.dt();
      const Operator u2 = eng.at(2 * np + nd) * eng.at(np + nd).adjoint();
      StateVector free = psi1;
      for (int k = 0; k < kDim; ++k) free(k) *= std::exp(-kI * (kTwoPi * fr.e(k) * tau));
      const double sd = phase_sd(noise, tau);
      double s = 0.0;
      for (std::size_t q = 0; q < nodes.size(); ++q) {
        StateVector psi = free;
        const Complex kick = std::exp(-kI * (kTwoPi * std::sqrt(2.0) * nodes[q] * sd));
        for (int k : shifted) psi(k) *= kick;
        s += weights[q] * readout(fr, t, u2 * psi);
      }
      map.signal(i, j) = s;
    }
  });
  return map;
}

// ---------------------------------------------------------------------------

StretchedFit fit_stretched_exponential(const std::vector<double>& t, const std::vector<double>& c) {
  if (t.size() != c.size()) throw InputError("decay fit: size mismatch");
  StretchedFit fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (!(t[k] > 0.0) || !(c[k] > kFitLow && c[k] < kFitHigh)) continue;
    const double x = std::log(t[k]), y = std::log(-std::log(c[k]));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 3) {
    fit.message = "fewer than three points inside the usable decay window";
    return fit;
  }
  const double den = n * sxx - sx * sx;
  if (!(std::abs(den) > 0.0)) {
    fit.message = "degenerate time axis";
    return fit;
  }
  fit.beta = (n * sxy - sx * sy) / den;
  const double icpt = (sy - fit.beta * sx) / n;
  if (!(fit.beta > 0.0)) {
    fit.message = "coherence does not decay";
    return fit;
  }
  fit.t_decay = std::exp(-icpt / fit.beta);
  fit.converged = std::isfinite(fit.t_decay);
  if (!fit.converged) fit.message = "non-finite decay time";
  return fit;
}

DecayCurve ramsey_decay(const ManifoldParams& params, const MagneticField& field,
                        const DriveAmplitude& drive, MwTransition t,
                        const std::vector<double>& delay_grid, const NoiseModel& noise,
                        const MapOptions& opts) {
  check_grid(delay_grid, "delay", true);
  const double f = transition_drive(params, field, drive, t).frequency;
  std::vector<double> delays{0.0};
  delays.insert(delays.end(), delay_grid.begin(), delay_grid.end());
  const SignalMap m = ramsey_map(params, field, drive, t, {f}, delays, noise, 0.0, opts);
  const double c0 = 2.0 * m.signal(0, 0) - 1.0;
  if (!(std::abs(c0) > 1e-6)) throw NumericalError("Ramsey sequence has no contrast at zero delay");
  DecayCurve d;
  d.delay = delay_grid;
  for (std::size_t j = 0; j < delay_grid.size(); ++j)
    d.coherence.push_back((2.0 * m.signal(0, j + 1) - 1.0) / c0);
  d.fit = fit_stretched_exponential(d.delay, d.coherence);
  return d;
}

std::vector<double> fringe_spectrum(const std::vector<double>& t, const std::vector<double>& y,
                                    const std::vector<double>& freqs) {
  if (t.size() != y.size() || t.empty()) throw InputError("fringe spectrum: bad samples");
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  std::vector<double> out;
  out.reserve(freqs.size());
  for (double f : freqs) {
    Complex acc(0.0, 0.0);
    for (std::size_t k = 0; k < t.size(); ++k) acc += (y[k] - mean) * std::exp(-kI * (kTwoPi * f * t[k]));
    out.push_back(std::abs(acc));
  }
  return out;
}

std::vector<double> fringe_peaks(const std::vector<double>& t, const std::vector<double>& y,
                                 double f_max, int count, double rel_threshold) {
  if (t.size() < 4) throw InputError("fringe peaks: need at least four samples");
  const double window = *std::max_element(t.begin(), t.end()) - *std::min_element(t.begin(), t.end());
  if (!(window > 0.0) || !(f_max > 0.0)) throw InputError("fringe peaks: bad window");
  const double df = 1.0 / (16.0 * window);
  const auto n = static_cast<std::size_t>(std::ceil(f_max / df)) + 1;
  std::vector<double> freqs(n);
  for (std::size_t k = 0; k < n; ++k) freqs[k] = k * df;
  // Hann taper against the sidelobes of the finite delay window.
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  const double t0 = *std::min_element(t.begin(), t.end());
  std::vector<double> tapered(y.size());
  for (std::size_t k = 0; k < y.size(); ++k)
    tapered[k] = (y[k] - mean) * std::pow(std::sin(M_PI * (t[k] - t0) / window), 2);
  const std::vector<double> s = fringe_spectrum(t, tapered, freqs);
  const double top = *std::max_element(s.begin(), s.end());

  std::vector<std::pair<double, double>> peaks;  // (height, frequency)
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (s[k] < s[k - 1] || s[k] < s[k + 1] || s[k] < rel_threshold * top) continue;
    const double den = s[k - 1] - 2.0 * s[k] + s[k + 1];
    const double off = den != 0.0 ? 0.5 * (s[k - 1] - s[k + 1]) / den : 0.0;
    peaks.emplace_back(s[k], freqs[k] + std::clamp(off, -0.5, 0.5) * df);
  }
  std::sort(peaks.begin(), peaks.end(), [](auto& a, auto& b) { return a.first > b.first; });
  std::vector<double> out;
  for (std::size_t k = 0; k < peaks.size() && static_cast<int>(k) < count; ++k) out.push_back(peaks[k].second);
  std::sort(out.begin(), out.end());
  return out;
}

DecayCurve decoupling_scan(int n_pulses, const std::vector<double>& delay_grid,
                           const NoiseModel& noise, std::uint64_t seed, int steps) {
  if (n_pulses < 0) throw InputError("n_pulses must be >= 0");
  if (steps < 1) throw InputError("steps must be >= 1");
  check_grid(delay_grid, "delay", true);
  noise.validate();

  using Spinor = Eigen::Vector2cd;
  Eigen::Matrix2cd px, py;
  px << 0, -kI, -kI, 0;   // R_X(pi)
  py << 0, -1.0, 1.0, 0;  // R_Y(pi)

  DecayCurve d;
  d.delay = delay_grid;
  for (std::size_t i = 0; i < delay_grid.size(); ++i) {
    const double tau = delay_grid[i];
    if (tau == 0.0 || noise.kind == NoiseKind::none || noise.sigma == 0.0) {
      d.coherence.push_back(1.0);
      continue;
    }
    Rng rng(derive_seed(seed, i));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double h = tau / steps;
    const double rho = noise.kind == NoiseKind::ornstein_uhlenbeck ? std::exp(-h / noise.correlation_time) : 1.0;
    const double kick = noise.sigma * std::sqrt(std::max(0.0, 1.0 - rho * rho));
    Complex acc(0.0, 0.0);
    for (int s = 0; s < noise.samples; ++s) {
      Spinor psi(1.0 / std::sqrt(2.0), Complex(0.0, -1.0 / std::sqrt(2.0)));  // after R_X(pi/2)
      double delta = noise.sigma * normal(rng);
      int next = 1;
      auto free = [&](double dt) {
        const double ph = M_PI * delta * dt;
        psi(0) *= std::exp(-kI * ph);
        psi(1) *= std::exp(kI * ph);
      };
      for (int k = 0; k < steps; ++k) {
        const double t0 = k * h, t1 = (k + 1) * h;
        double t = t0;
        while (next <= n_pulses && (next - 0.5) * tau / n_pulses < t1) {
          const double tp = (next - 0.5) * tau / n_pulses;
          free(tp - t);
          psi = ((next % 2 == 1) ? px : py) * psi;
          t = tp;
          ++next;
        }
        free(t1 - t);
        if (noise.kind == NoiseKind::ornstein_uhlenbeck) delta = rho * delta + kick * normal(rng);
      }
      acc += psi(0) * std::conj(psi(1));
    }
    d.coherence.push_back(2.0 * std::abs(acc) / noise.samples);
  }
  d.fit = fit_stretched_exponential(d.delay, d.coherence);
  return d;
}

// ---------------------------------------------------------------------------

namespace {

using Gate = Eigen::Matrix2cd;

Gate rotation(int axis, double angle) {
  Gate s;
  if (axis == 0)
    s << 0, 1, 1, 0;
  else
    s << 0, -kI, kI, 0;
  return std::cos(angle / 2) * Gate::Identity() - kI * std::sin(angle / 2) * s;
}

std::array<Gate, 8> rb_gate_set() {
  return {rotation(0, M_PI / 2), rotation(0, -M_PI / 2), rotation(0, M_PI), rotation(0, -M_PI),
          rotation(1, M_PI / 2), rotation(1, -M_PI / 2), rotation(1, M_PI), rotation(1, -M_PI)};
}

std::array<Gate, 3> paulis() {
  Gate x, y, z;
  x << 0, 1, 1, 0;
  y << 0, -kI, kI, 0;
  z << 1, 0, 0, -1;
  return {x, y, z};
}

}  // namespace

RbResult fit_rb_decay(const std::vector<int>& lengths, const std::vector<double>& survival) {
  if (lengths.size() != survival.size() || lengths.size() < 3)
    throw InputError("RB fit needs at least three lengths");
  RbResult r;
  r.lengths = lengths;
  r.mean_survival = survival;
  const auto [lo, hi] = std::minmax_element(survival.begin(), survival.end());
  const double mean = std::accumulate(survival.begin(), survival.end(), 0.0) / survival.size();

  // Linear least squares for (A, B) at fixed p; returns SSR.
  auto solve = [&](double p, double& a, double& b) {
    double s1 = 0, sx = 0, sxx = 0, sy = 0, sxy = 0;
    for (std::size_t k = 0; k < lengths.size(); ++k) {
      const double x = std::pow(p, lengths[k]);
      s1 += 1;
      sx += x;
      sxx += x * x;
      sy += survival[k];
      sxy += x * survival[k];
    }
    const double den = s1 * sxx - sx * sx;
    if (std::abs(den) < 1e-300) {
      a = 0;
      b = sy / s1;
    } else {
      a = (s1 * sxy - sx * sy) / den;
      b = (sy - a * sx) / s1;
    }
    double ssr = 0;
    for (std::size_t k = 0; k < lengths.size(); ++k) {
      const double e = a * std::pow(p, lengths[k]) + b - survival[k];
      ssr += e * e;
    }
    return ssr;
  };

  if (*hi - *lo < 1e-9) {
    r.degenerate = true;
    r.offset = mean;
    r.message = "flat survival curve; decay not identifiable";
    return r;
  }

  constexpr double p_lo = 1e-4, p_hi = 1.0 - 1e-9;
  constexpr int coarse = 4000;
  double best_p = p_lo, best = std::numeric_limits<double>::infinity(), a = 0, b = 0;
  for (int k = 0; k <= coarse; ++k) {
    const double p = p_lo + (p_hi - p_lo) * k / coarse;
    const double ssr = solve(p, a, b);
    if (ssr < best) {
      best = ssr;
      best_p = p;
    }
  }
  // Golden-section refinement around the coarse optimum.
  const double width = (p_hi - p_lo) / coarse;
  double x0 = std::max(p_lo, best_p - width), x1 = std::min(p_hi, best_p + width);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = x1 - g * (x1 - x0), d = x0 + g * (x1 - x0);
  double fc = solve(c, a, b), fd = solve(d, a, b);
  for (int it = 0; it < 200 && x1 - x0 > 1e-14; ++it) {
    if (fc < fd) {
      x1 = d;
      d = c;
      fd = fc;
      c = x1 - g * (x1 - x0);
      fc = solve(c, a, b);
    } else {
      x0 = c;
      c = d;
      fc = fd;
      d = x0 + g * (x1 - x0);
      fd = solve(d, a, b);
    }
  }
  r.decay = 0.5 * (x0 + x1);
  solve(r.decay, r.amplitude, r.offset);
  r.fidelity = 1.0 - (1.0 - r.decay) / 2.0;
  if (r.decay >= p_hi - 1e-6 || std::abs(r.amplitude) < 1e-6) {
    r.degenerate = true;
    r.message = "decay not identifiable from the survival curve";
  }
  return r;
}

RbResult rb_simulate(double gate_fidelity, const std::vector<int>& lengths,
                     int sequences_per_length, std::uint64_t seed, double readout_contrast,
                     unsigned threads) {
  if (!(gate_fidelity >= 0.5 && gate_fidelity <= 1.0))
    throw InputError("gate fidelity must lie in [0.5, 1]");
  if (lengths.empty() || sequences_per_length < 2) throw InputError("RB needs lengths and >= 2 sequences");
  for (int n : lengths)
    if (n < 0) throw InputError("RB lengths must be >= 0");
  if (!(readout_contrast >= 0.0 && readout_contrast <= 1.0))
    throw InputError("readout contrast must lie in [0, 1]");

  const auto gates = rb_gate_set();
  const auto pl = paulis();
  const double eps = (1.0 - (2.0 * gate_fidelity - 1.0)) / 4.0;

  std::vector<double> mean(lengths.size()), err(lengths.size());
  parallel_for(lengths.size(), threads, [&](std::size_t li) {
    Rng rng(derive_seed(seed, li));
    std::uniform_int_distribution<int> pick(0, 7);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto noisy = [&](const Gate& g, Eigen::Vector2cd& psi) {
      psi = g * psi;
      const double r = u01(rng);
      if (r < 3.0 * eps) psi = pl[static_cast<int>(r / eps) % 3] * psi;
    };
    double s = 0, ss = 0;
    for (int q = 0; q < sequences_per_length; ++q) {
      Eigen::Vector2cd psi(1.0, 0.0);
      Gate ideal = Gate::Identity();
      for (int k = 0; k < lengths[li]; ++k) {
        const Gate& g = gates[pick(rng)];
        ideal = g * ideal;
        noisy(g, psi);
      }
      // Recovery slot sending the ideal outcome to |1>. The slot always costs
      // one gate error (an idle slot when no rotation is needed), so the
      // survival amplitude does not depend on N through the recovery choice.
      const Eigen::Vector2cd out = ideal * Eigen::Vector2cd(1.0, 0.0);
      Gate recovery = Gate::Identity();
      if (std::norm(out(1)) < 1.0 - 1e-9) {
        bool found = false;
        for (const Gate& g : gates) {
          if (std::norm((g * out)(1)) > 1.0 - 1e-9) {
            recovery = g;
            found = true;
            break;
          }
        }
        if (!found) throw NumericalError("no recovery gate in the RB set");
      }
      noisy(recovery, psi);
      const double p1 = std::norm(psi(1));
      const double v = 0.5 + readout_contrast * (p1 - 0.5);
      s += v;
      ss += v * v;
    }
    const double m = s / sequences_per_length;
    mean[li] = m;
    err[li] = std::sqrt(std::max(0.0, ss / sequences_per_length - m * m) / (sequences_per_length - 1));
  });

  RbResult r;
  if (lengths.size() >= 3) {
    r = fit_rb_decay(lengths, mean);
  } else {
    r.lengths = lengths;
    r.mean_survival = mean;
    r.degenerate = true;
    r.message = "fewer than three lengths; no fit";
  }
  r.stderr_ = err;
  return r;
}

double clifford_adjust(double physical_fidelity) {
  if (!(physical_fidelity >= 0.0 && physical_fidelity <= 1.0))
    throw InputError("fidelity must lie in [0, 1]");
  return 1.0 - (8.0 / 13.0) * (1.0 - physical_fidelity);
}

}  // namespace snv
