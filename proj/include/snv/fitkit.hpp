#pragma once

#include <string>
#include <vector>

#include "snv/csv.hpp"
#include "snv/dynamics.hpp"
#include "snv/simplex.hpp"
#include "snv/spectrum.hpp"

namespace snv {

enum class ExperimentKind { rabi, ramsey };
std::string_view to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(std::string_view s);

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::rabi;
  MwTransition transition = MwTransition::blue;
  std::vector<double> freq_grid;  // Hz
  std::vector<double> time_grid;  // s (drive duration or Ramsey delay)
  NoiseModel noise;               // Ramsey only
  double pi_half = 0.0;           // Ramsey only; <= 0 uses the calibrated value
  int samples_per_period = kMinSamplesPerPeriod;

  void validate() const;
  /// Pre/post pi routing implied by the transition (init 0B0M, bright readout).
  bool has_pre_pi() const { return transition == MwTransition::green; }
  bool has_post_pi() const { return transition == MwTransition::purple; }
};

/// Everything the simulated maps depend on. DC field in electron units (Hz).
struct ModelPoint {
  ManifoldParams params;
  double bx = 0.0;
  double by = 0.0;
  double bz = 0.0;
  DriveAmplitude drive;

  MagneticField field() const {
    return MagneticField::from_electron_frequency(bx, by, bz, params.g_electron);
  }
};

/// Fitted-model values: ground params, b = (6.03, 0, 1.55) MHz, drive (8.92, 5.00) MHz.
ModelPoint fitted_model();

/// Names accepted in FreeParameter::name:
/// b_x b_y b_z drive_bx drive_bz a_par a_perp alpha_x alpha_y lambda upsilon q.
double get_parameter(const ModelPoint& m, const std::string& name);
void set_parameter(ModelPoint& m, const std::string& name, double value);

struct FreeParameter {
  std::string name;
  double initial = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct Dataset {
  ExperimentSpec spec;
  SignalMap data;
};

struct FitProblem {
  std::vector<Dataset> datasets;
  ModelPoint fixed = fitted_model();  // values of everything not free
  std::vector<FreeParameter> free;
  SimplexOptions optimizer;
  bool nuisance = false;  // per-dataset amplitude/offset
  /// First match model transition frequencies to resonances estimated from
  /// the Rabi datasets, then minimize the map loss from there.
  bool anchor_resonances = true;
  /// Levenberg-Marquardt refinement on the residuals after the simplex (0 = off).
  int polish_rounds = 2;
  /// Profile evaluations along the least-determined parameter after the
  /// polish, each one re-solving the others (0 = off).
  int profile_steps = 32;
  /// The main simplex search only uses grid times up to this value (s);
  /// the polish rounds use everything. <= 0 disables the split.
  double early_horizon = 2e-6;
  unsigned threads = 1;

  void validate() const;
};

struct FitResult {
  ModelPoint best;
  std::vector<std::string> names;
  std::vector<double> values;
  std::vector<double> relative_errors;  // curvature based, >= 0 (NaN if undetermined)
  double loss = 0.0;
  std::vector<Eigen::MatrixXd> residuals;            // data - model, per dataset
  std::vector<std::pair<double, double>> nuisance;  // (amplitude, offset) per dataset
  TransitionTable transitions;                      // derived at the best point
  std::vector<double> loss_log;                     // monotone acceptance log
  int evaluations = 0;
  bool converged = false;
  std::string warning;
};

/// Delegates to rabi_map / ramsey_map with the spec's routing.
SignalMap simulate_experiment(const ModelPoint& model, const ExperimentSpec& spec, unsigned threads = 1);

/// Sum of squared residuals; fills residuals and nuisance pairs when given.
double fit_loss(const FitProblem& problem, const ModelPoint& model,
                std::vector<Eigen::MatrixXd>* residuals = nullptr,
                std::vector<std::pair<double, double>>* nuisance = nullptr);

/// Drive frequency of maximal time-averaged signal, refined by a parabola.
double estimate_resonance(const SignalMap& data);

FitResult fit_parameters(const FitProblem& problem, std::uint64_t seed);

/// Signal CSV plus its "# kind", "# transition" (and optional noise) metadata.
std::pair<ExperimentSpec, SignalMap> load_signal_csv(const std::string& path);
CsvMeta experiment_meta(const ExperimentSpec& spec);
ExperimentSpec experiment_from_meta(const CsvMeta& meta, const SignalMap& map);

}  // namespace snv
