#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "snv/params.hpp"
#include "snv/spinmodel.hpp"

namespace snv {

/// One rectangular drive segment. The AC field is
/// (amplitude_x x + amplitude_z z) cos(2 pi f t + phase), amplitudes in
/// electron Zeeman units (Hz) like the DC "b" values, t absolute program time.
/// Zero amplitudes make the segment a free-evolution gap.
struct DriveSegment {
  double frequency = 0.0;
  double amplitude_x = 0.0;
  double amplitude_z = 0.0;
  double phase = 0.0;
  double duration = 0.0;

  bool is_free() const { return amplitude_x == 0.0 && amplitude_z == 0.0; }
};

/// Lower-branch initial state, ordered drive segments, readout on the lower
/// 1_B pair.
struct PulseProgram {
  Qubit init = Qubit::q0B0M;
  std::vector<DriveSegment> segments;

  void validate() const;
  double duration() const;
};

/// Projector onto the lower-branch 1_B pair (lab basis).
Operator bright_projector(const EigenSystem& es);

struct PropagationResult {
  Operator unitary;    // lab basis, full program
  StateVector state;   // lab basis, unitary applied to the init state
  double bright_population = 0.0;
};

/// Largest lower-branch transition frequency and the fastest drive frequency.
double fastest_frequency(const EigenSystem& es, const PulseProgram& program);

/// Lab-frame piecewise-constant propagation of the full 8-level Hamiltonian.
/// Each driven segment is cut into steps no longer than `timestep`, the drive
/// sampled at step midpoints; gaps are propagated exactly. Throws InputError
/// when timestep > 1 / (20 * fastest_frequency).
PropagationResult propagate(const ManifoldParams& params, const MagneticField& field,
                            const PulseProgram& program, double timestep);

inline constexpr int kMinSamplesPerPeriod = 20;

// ---------------------------------------------------------------------------
// Signal maps

/// Lower-branch microwave transitions by their figure colours:
/// blue 0B0M-1B0M, purple 0B0M-0B1M, green 0B1M-1B1M.
enum class MwTransition { blue, purple, green };
std::string_view to_string(MwTransition t);
MwTransition mw_transition_from_string(std::string_view s);
/// Labeled (lower, upper) qubit pair of a transition.
std::pair<Qubit, Qubit> transition_qubits(MwTransition t);

struct DriveAmplitude {
  double bx = 8.92e6;  // Hz
  double bz = 5.00e6;  // Hz
};

enum class NoiseKind { none, quasi_static_gaussian, ornstein_uhlenbeck };
std::string_view to_string(NoiseKind k);
NoiseKind noise_kind_from_string(std::string_view s);

struct NoiseModel {
  NoiseKind kind = NoiseKind::none;
  double sigma = 0.0;             // Hz, rms detuning
  double correlation_time = 0.0;  // s, OU only
  int samples = 1;                // quadrature nodes or Monte Carlo trajectories

  void validate() const;
};

/// Rows: frequency, columns: duration (or delay).
struct SignalMap {
  std::vector<double> frequency;  // Hz
  std::vector<double> duration;   // s
  Eigen::MatrixXd signal;

  double at(std::size_t f, std::size_t t) const { return signal(f, t); }
  void validate() const;
};

struct MapOptions {
  int samples_per_period = kMinSamplesPerPeriod;
  unsigned threads = 1;
};

/// Transition frequency and drive matrix element |V_ab| (Hz) of the labeled
/// pair; a resonant pi pulse lasts 1 / (2 |V_ab|).
struct TransitionDrive {
  double frequency = 0.0;
  double rabi = 0.0;
};
TransitionDrive transition_drive(const ManifoldParams& params, const MagneticField& field,
                                 const DriveAmplitude& drive, MwTransition t);

/// Init 0B0M, test drive, bright readout. Routing with ideal instantaneous pi
/// swaps: purple is followed by a green swap, green is preceded by a purple
/// swap, blue is read directly.
SignalMap rabi_map(const ManifoldParams& params, const MagneticField& field,
                   const DriveAmplitude& drive, MwTransition t,
                   const std::vector<double>& freq_grid, const std::vector<double>& time_grid,
                   const MapOptions& opts = {});

/// pi/2 - delay - pi/2 with the same routing as rabi_map. pi_half <= 0 uses the
/// calibrated 1 / (4 |V_ab|) of the labeled pair. Noise detunes the levels on
/// the far side of the tested transition during the delay (quasi-static or OU,
/// both Gaussian in accumulated phase and averaged by Gauss-Hermite quadrature).
SignalMap ramsey_map(const ManifoldParams& params, const MagneticField& field,
                     const DriveAmplitude& drive, MwTransition t,
                     const std::vector<double>& freq_grid, const std::vector<double>& delay_grid,
                     const NoiseModel& noise, double pi_half = 0.0, const MapOptions& opts = {});

// ---------------------------------------------------------------------------
// Decay fits and spectral analysis

/// C(t) = exp(-(t/T)^beta), fitted linearly in log(-log C) on 0.1 < C < 0.95.
struct StretchedFit {
  double t_decay = 0.0;
  double beta = 0.0;
  bool converged = false;
  std::string message;
};
StretchedFit fit_stretched_exponential(const std::vector<double>& t, const std::vector<double>& c);

struct DecayCurve {
  std::vector<double> delay;
  std::vector<double> coherence;
  StretchedFit fit;
};

/// Resonant Ramsey column normalized to its zero-delay contrast.
DecayCurve ramsey_decay(const ManifoldParams& params, const MagneticField& field,
                        const DriveAmplitude& drive, MwTransition t,
                        const std::vector<double>& delay_grid, const NoiseModel& noise,
                        const MapOptions& opts = {});

/// Magnitudes of the discrete-time Fourier transform of the mean-removed
/// samples at `freqs` (Hz).
std::vector<double> fringe_spectrum(const std::vector<double>& t, const std::vector<double>& y,
                                    const std::vector<double>& freqs);
/// Frequencies of the `count` strongest local maxima of the Hann-tapered fringe spectrum,
/// ignoring maxima below `rel_threshold` of the strongest. Ascending order.
std::vector<double> fringe_peaks(const std::vector<double>& t, const std::vector<double>& y,
                                 double f_max, int count = 2, double rel_threshold = 0.2);

/// Two-level dephasing under noise with n ideal XY pi pulses at positions
/// (k - 1/2) t / n. Coherence 2|<rho_01>| averaged over trajectories; OU noise
/// is sampled exactly on `steps` points per delay.
DecayCurve decoupling_scan(int n_pulses, const std::vector<double>& delay_grid,
                           const NoiseModel& noise, std::uint64_t seed, int steps = 400);

// ---------------------------------------------------------------------------
// Randomized benchmarking

struct RbResult {
  std::vector<int> lengths;
  std::vector<double> mean_survival;
  std::vector<double> stderr_;
  double amplitude = 0.0;  // A in A p^N + B
  double offset = 0.0;     // B
  double decay = 1.0;      // p
  double fidelity = 1.0;   // 1 - (1 - p) / 2
  bool degenerate = false; // flat curve, p not identifiable
  std::string message;
};

/// Random sequences over {R_X(+-pi/2), R_X(+-pi), R_Y(+-pi/2), R_Y(+-pi)}; a final
/// gate from the set (or an idle slot) maps the ideal outcome to the bright
/// state. Every gate and the final slot carry a Pauli-twirled depolarizing
/// error with p = 2F - 1, sampled per gate. Survival is 0.5 + readout_contrast (P_bright - 0.5).
RbResult rb_simulate(double gate_fidelity, const std::vector<int>& lengths,
                     int sequences_per_length, std::uint64_t seed,
                     double readout_contrast = 1.0, unsigned threads = 1);

/// Fit A p^N + B by a bounded 1-D search in p with linear least squares in (A, B).
RbResult fit_rb_decay(const std::vector<int>& lengths, const std::vector<double>& survival);

/// Spread physical-gate infidelity over 13 Clifford generators of which the
/// five phase-frame gates are perfect: F_C = 1 - (8/13)(1 - F).
double clifford_adjust(double physical_fidelity);

}  // namespace snv
