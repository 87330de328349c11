#include "snv/fitkit.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <utility>

#include "snv/error.hpp"

namespace snv {

std::string_view to_string(ExperimentKind k) { return k == ExperimentKind::rabi ? "rabi" : "ramsey"; }

ExperimentKind experiment_kind_from_string(std::string_view s) {
  if (s == "rabi") return ExperimentKind::rabi;
  if (s == "ramsey") return ExperimentKind::ramsey;
  throw InputError("unknown experiment kind '" + std::string(s) + "' (rabi|ramsey)");
}

void ExperimentSpec::validate() const {
  if (freq_grid.empty() || time_grid.empty()) throw InputError("experiment grids must be non-empty");
  if (samples_per_period < kMinSamplesPerPeriod)
    throw InputError("samples_per_period must be at least " + std::to_string(kMinSamplesPerPeriod));
  if (!std::isfinite(pi_half)) throw InputError("pi_half must be finite");
  noise.validate();
}

ModelPoint fitted_model() {
  ModelPoint m;
  m.params = presets::ground_fitted();
  m.bx = 6.03e6;
  m.by = 0.0;
  m.bz = 1.55e6;
  m.drive = {presets::kFittedDriveBx, presets::kFittedDriveBz};
  return m;
}

namespace {

double* parameter_slot(ModelPoint& m, const std::string& name) {
  if (name == "b_x") return &m.bx;
  if (name == "b_y") return &m.by;
  if (name == "b_z") return &m.bz;
  if (name == "drive_bx") return &m.drive.bx;
  if (name == "drive_bz") return &m.drive.bz;
  if (name == "a_par") return &m.params.a_par;
  if (name == "a_perp") return &m.params.a_perp;
  if (name == "alpha_x") return &m.params.strain_egx;
  if (name == "alpha_y") return &m.params.strain_egy;
  if (name == "lambda") return &m.params.lambda_soc;
  if (name == "upsilon") return &m.params.upsilon_ioc;
  if (name == "q") return &m.params.orbital_quench_q;
  throw InputError("unknown fit parameter '" + name + "'");
}

}  // namespace

double get_parameter(const ModelPoint& m, const std::string& name) {
  return *parameter_slot(const_cast<ModelPoint&>(m), name);
}

void set_parameter(ModelPoint& m, const std::string& name, double value) { *parameter_slot(m, name) = value; }

void FitProblem::validate() const {
  if (datasets.empty()) throw InputError("fit problem needs at least one dataset");
  for (const auto& d : datasets) {
    d.spec.validate();
    d.data.validate();
    if (d.data.frequency != d.spec.freq_grid || d.data.duration != d.spec.time_grid)
      throw InputError("dataset grids differ from its experiment spec");
  }
  for (std::size_t i = 0; i < free.size(); ++i) {
    const auto& p = free[i];
    get_parameter(fixed, p.name);
    if (!(p.lower < p.upper)) throw InputError("bounds of '" + p.name + "' are not ordered");
    if (p.initial < p.lower || p.initial > p.upper)
      throw InputError("initial value of '" + p.name + "' lies outside its bounds");
    for (std::size_t j = 0; j < i; ++j)
      if (free[j].name == p.name) throw InputError("parameter '" + p.name + "' listed twice");
  }
}

SignalMap simulate_experiment(const ModelPoint& model, const ExperimentSpec& spec, unsigned threads) {
  spec.validate();
  const MapOptions opts{spec.samples_per_period, threads};
  if (spec.kind == ExperimentKind::rabi)
    return rabi_map(model.params, model.field(), model.drive, spec.transition, spec.freq_grid,
                    spec.time_grid, opts);
  return ramsey_map(model.params, model.field(), model.drive, spec.transition, spec.freq_grid,
                    spec.time_grid, spec.noise, spec.pi_half, opts);
}

double fit_loss(const FitProblem& problem, const ModelPoint& model,
                std::vector<Eigen::MatrixXd>* residuals,
                std::vector<std::pair<double, double>>* nuisance) {
  double loss = 0.0;
  if (residuals) residuals->clear();
  if (nuisance) nuisance->clear();
  for (const auto& d : problem.datasets) {
    const Eigen::MatrixXd m = simulate_experiment(model, d.spec, problem.threads).signal;
    double a = 1.0, b = 0.0;
    if (problem.nuisance) {
      const double n = static_cast<double>(m.size());
      const double sm = m.sum(), sd = d.data.signal.sum();
      const double smm = m.squaredNorm(), smd = (m.array() * d.data.signal.array()).sum();
      const double den = n * smm - sm * sm;
      if (den > 1e-12 * n * n) {
        a = (n * smd - sm * sd) / den;
        b = (sd - a * sm) / n;
      }
    }
    const Eigen::MatrixXd r = d.data.signal - (a * m).array().matrix() - Eigen::MatrixXd::Constant(m.rows(), m.cols(), b);
    loss += r.squaredNorm();
    if (residuals) residuals->push_back(r);
    if (nuisance) nuisance->emplace_back(a, b);
  }
  return loss;
}

namespace {

// Small on purpose: a relative change of 1e-3 in a hyperfine constant moves a
// line by ~0.3 MHz, which wraps a 40 us Ramsey phase many times.
std::vector<double> difference_steps(const std::vector<double>& x, const std::vector<double>& lo,
                                     const std::vector<double>& hi) {
  std::vector<double> h(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) h[i] = 1e-6 * (x[i] != 0.0 ? std::abs(x[i]) : (hi[i] - lo[i]));
  return h;
}

struct PolishResult {
  std::vector<double> x;
  double f = 0.0;
  std::vector<double> accepted;
  int evaluations = 0;
};

// Central-difference Jacobian of the residuals, columns per unit of h.
Eigen::MatrixXd residual_jacobian(const std::function<Eigen::VectorXd(const std::vector<double>&)>& r,
                                  const std::vector<double>& x, const std::vector<double>& h) {
  Eigen::MatrixXd j;
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> a = x, b = x;
    a[i] += h[i];
    b[i] -= h[i];
    const Eigen::VectorXd d = (r(a) - r(b)) / 2.0;
    if (j.size() == 0) j.resize(d.size(), static_cast<Eigen::Index>(x.size()));
    j.col(static_cast<Eigen::Index>(i)) = d;
  }
  return j;
}

PolishResult lm_polish(const std::function<Eigen::VectorXd(const std::vector<double>&)>& residuals,
                       std::vector<double> x, double f, const std::vector<double>& lo,
                       const std::vector<double>& hi, int rounds) {
  PolishResult out;
  const std::size_t k = x.size();
  double mu = 1e-3;
  // Each round is one Jacobian; damping retries reuse it.
  for (int it = 0; it < 20 * rounds; ++it) {
    const std::vector<double> h = difference_steps(x, lo, hi);
    Eigen::VectorXd r;
    Eigen::MatrixXd j;
    try {
      r = residuals(x);
      j = residual_jacobian(residuals, x, h);
    } catch (const NumericalError&) {
      break;
    }
    out.evaluations += static_cast<int>(2 * k + 1);
    const Eigen::MatrixXd jtj = j.transpose() * j;
    const Eigen::VectorXd g = j.transpose() * r;
    bool improved = false, stalled = false;
    for (int tries = 0; tries < 12 && !improved; ++tries) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += mu * jtj.diagonal().cwiseMax(1e-30);
      // r = data - model, so the model step solves J dz = r.
      const Eigen::VectorXd dz = a.ldlt().solve(g);
      std::vector<double> y = x;
      for (std::size_t i = 0; i < k; ++i)
        y[i] = std::clamp(x[i] - dz(static_cast<Eigen::Index>(i)) * h[i], lo[i], hi[i]);
      double fy = std::numeric_limits<double>::infinity();
      try {
        fy = residuals(y).squaredNorm();
      } catch (const NumericalError&) {
      }
      ++out.evaluations;
      if (fy < f) {
        improved = true;
        const double gain = (f - fy) / f;
        x = y;
        f = fy;
        out.accepted.push_back(f);
        mu = std::max(mu / 10.0, 1e-12);
        stalled = gain < 1e-10;
      } else {
        mu *= 10.0;
      }
    }
    if (!improved || stalled || f <= 0.0) break;
  }
  out.x = x;
  out.f = f;
  return out;
}

}  // namespace

double estimate_resonance(const SignalMap& data) {
  data.validate();
  const Eigen::VectorXd mean = data.signal.rowwise().mean();
  Eigen::Index k = 0;
  mean.maxCoeff(&k);
  const auto& f = data.frequency;
  if (k == 0 || k + 1 == mean.size()) return f[k];
  // Parabola through the three columns around the maximum.
  const double x0 = f[k - 1], x1 = f[k], x2 = f[k + 1];
  const double y0 = mean(k - 1), y1 = mean(k), y2 = mean(k + 1);
  const double den = (x0 - x1) * (x0 - x2) * (x1 - x2);
  const double a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den;
  const double b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / den;
  if (!(a < 0.0)) return x1;
  return std::clamp(-b / (2.0 * a), x0, x2);
}

FitResult fit_parameters(const FitProblem& problem, std::uint64_t seed) {
  problem.validate();
  const std::size_t k = problem.free.size();
  std::vector<double> x0(k), lo(k), hi(k);
  for (std::size_t i = 0; i < k; ++i) {
    x0[i] = problem.free[i].initial;
    lo[i] = problem.free[i].lower;
    hi[i] = problem.free[i].upper;
  }
  auto model_at = [&](const std::vector<double>& x) {
    ModelPoint m = problem.fixed;
    for (std::size_t i = 0; i < k; ++i) set_parameter(m, problem.free[i].name, x[i]);
    return m;
  };
  auto objective = [&](const std::vector<double>& x) {
    try {
      return fit_loss(problem, model_at(x));
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  auto residual_vector = [&](const std::vector<double>& x) {
    std::vector<Eigen::MatrixXd> res;
    fit_loss(problem, model_at(x), &res);
    Eigen::Index n = 0;
    for (const auto& m : res) n += m.size();
    Eigen::VectorXd v(n);
    n = 0;
    for (const auto& m : res) {
      v.segment(n, m.size()) = m.reshaped();
      n += m.size();
    }
    return v;
  };

  FitResult r;
  SimplexResult s;
  if (k == 0) {
    s.x = {};
    s.f = objective({});
    s.evaluations = 1;
    s.converged = true;
    s.accepted_log = {s.f};
    r.warning = "no free parameters; loss evaluated at the fixed point";
  } else {
    // Stage 1: place the model resonances on the ones seen in the Rabi data.
    // The map loss is flat once a resonance leaves the measured window, so
    // the full fit starts from here.
    std::vector<std::pair<MwTransition, double>> anchors;
    if (problem.anchor_resonances) {
      for (const auto& d : problem.datasets)
        if (d.spec.kind == ExperimentKind::rabi && d.data.frequency.size() >= 3)
          anchors.emplace_back(d.spec.transition, estimate_resonance(d.data));
    }
    std::vector<double> start = x0;
    if (!anchors.empty()) {
      auto anchor_loss = [&](const std::vector<double>& x) {
        try {
          const ModelPoint m = model_at(x);
          const EigenSystem es = solve_manifold(m.params, m.field());
          double l = 0.0;
          for (const auto& [t, f] : anchors) {
            const auto [qa, qb] = transition_qubits(t);
            const double fm = std::abs(es.energy(Branch::lower, qb) - es.energy(Branch::lower, qa));
            l += std::pow((fm - f) / 1e6, 2);
          }
          return l;
        } catch (const std::exception&) {
          return std::numeric_limits<double>::infinity();
        }
      };
      SimplexOptions o = problem.optimizer;
      o.restarts = 0;
      o.f_tolerance = 1e-6;
      start = nelder_mead(anchor_loss, x0, lo, hi, o, seed).x;
    }
    // Stage 2 sees only the early part of each record: late Ramsey phases wrap
    // unless the frequencies are already close.
    FitProblem early = problem;
    bool truncated = false;
    if (problem.early_horizon > 0.0) {
      for (auto& d : early.datasets) {
        std::vector<Eigen::Index> keep;
        for (std::size_t j = 0; j < d.spec.time_grid.size(); ++j)
          if (d.spec.time_grid[j] <= problem.early_horizon) keep.push_back(static_cast<Eigen::Index>(j));
        if (keep.size() < 3 || keep.size() == d.spec.time_grid.size()) continue;
        truncated = true;
        std::vector<double> t;
        Eigen::MatrixXd sig(d.data.signal.rows(), static_cast<Eigen::Index>(keep.size()));
        for (std::size_t c = 0; c < keep.size(); ++c) {
          t.push_back(d.spec.time_grid[static_cast<std::size_t>(keep[c])]);
          sig.col(static_cast<Eigen::Index>(c)) = d.data.signal.col(keep[c]);
        }
        d.spec.time_grid = t;
        d.data.duration = t;
        d.data.signal = sig;
      }
    }
    auto early_objective = [&](const std::vector<double>& x) {
      try {
        return fit_loss(early, model_at(x));
      } catch (const NumericalError&) {
        return std::numeric_limits<double>::infinity();
      }
    };
    s = nelder_mead(truncated ? Objective(early_objective) : Objective(objective), start, lo, hi,
                    problem.optimizer, seed);
    if (truncated) {
      // The log tracks the full loss from here on.
      s.f = objective(s.x);
      s.accepted_log = {s.f};
    }

    // Stage 3: Levenberg-Marquardt on the residual vector. Transverse couplings
    // and the strain mixing enter the lower branch mostly as products, which
    // leaves a long shallow valley the simplex crawls along. J^T J resolves
    // that direction where a finite-difference Hessian of the loss can't.
    if (problem.polish_rounds > 0 && std::isfinite(s.f)) {
      const PolishResult p = lm_polish(residual_vector, s.x, s.f, lo, hi, problem.polish_rounds);
      s.evaluations += p.evaluations;
      s.accepted_log.insert(s.accepted_log.end(), p.accepted.begin(), p.accepted.end());
      if (p.f < s.f) {
        s.x = p.x;
        s.f = p.f;
      }
    }
    // Stage 4: the valley left after the polish is curved, so LM steps along
    // it stall. Walk it instead: fix the parameter J^T J knows least about,
    // re-solve the rest, and do a parabolic search on that profile.
    if (problem.profile_steps > 0 && problem.polish_rounds > 0 && k >= 2 && std::isfinite(s.f) && s.f > 0.0) {
      std::size_t weak = 0;
      // Valley direction in parameter units, normalized to d x[weak] = 1.
      std::vector<double> tangent(k, 0.0);
      try {
        const std::vector<double> h = difference_steps(s.x, lo, hi);
        const Eigen::MatrixXd j = residual_jacobian(residual_vector, s.x, h);
        s.evaluations += static_cast<int>(2 * k);
        const Eigen::MatrixXd jtj = j.transpose() * j;
        const Eigen::VectorXd var = jtj.completeOrthogonalDecomposition().pseudoInverse().diagonal().cwiseAbs();
        Eigen::Index w = 0;
        var.maxCoeff(&w);
        weak = static_cast<std::size_t>(w);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jtj);
        const Eigen::VectorXd v = es.eigenvectors().col(0);
        if (v(w) != 0.0)
          for (std::size_t i = 0; i < k; ++i) tangent[i] = v(static_cast<Eigen::Index>(i)) * h[i] / (v(w) * h[weak]);
      } catch (const NumericalError&) {
      }
      std::vector<double> rlo, rhi;
      for (std::size_t i = 0; i < k; ++i)
        if (i != weak) {
          rlo.push_back(lo[i]);
          rhi.push_back(hi[i]);
        }
      // Returns the re-solved point with x[weak] = a.
      auto profile = [&](double a) {
        std::vector<double> full = s.x;
        full[weak] = a;
        auto expand = [&](const std::vector<double>& y) {
          std::vector<double> z = full;
          for (std::size_t i = 0, c = 0; i < k; ++i)
            if (i != weak) z[i] = y[c++];
          return z;
        };
        auto reduced = [&](const std::vector<double>& y) { return residual_vector(expand(y)); };
        std::vector<double> y;
        for (std::size_t i = 0; i < k; ++i)
          if (i != weak) y.push_back(std::clamp(s.x[i] + (a - s.x[weak]) * tangent[i], lo[i], hi[i]));
        full = expand(y);
        const double f0 = objective(full);
        ++s.evaluations;
        if (!std::isfinite(f0)) return std::make_pair(f0, full);
        const PolishResult p = lm_polish(reduced, y, f0, rlo, rhi, problem.polish_rounds);
        s.evaluations += p.evaluations;
        return std::make_pair(p.f, expand(p.x));
      };
      auto take = [&](const std::pair<double, std::vector<double>>& c) {
        if (!(c.first < s.f)) return false;
        // Secant through the last two valley points follows its curvature.
        const double da = c.second[weak] - s.x[weak];
        if (da != 0.0)
          for (std::size_t i = 0; i < k; ++i) tangent[i] = (c.second[i] - s.x[i]) / da;
        s.f = c.first;
        s.x = c.second;
        s.accepted_log.push_back(s.f);
        return true;
      };
      const double span = hi[weak] - lo[weak];
      double step = 0.02 * (s.x[weak] != 0.0 ? std::abs(s.x[weak]) : span);
      double cap = span;  // a bracket bounds later steps
      auto inside = [&](double a) { return std::clamp(a, lo[weak], hi[weak]); };
      // Stops once the bracket is finer than 1e-4 of the value.
      const double finest = std::max(1e-4 * std::abs(s.x[weak]), 1e-9 * span);
      for (int used = 0; used < problem.profile_steps && std::abs(step) > finest;) {
        const double a = s.x[weak], fa = s.f;
        const auto plus = profile(inside(a + step));
        ++used;
        if (take(plus)) {
          step = std::copysign(std::min(2.0 * std::abs(step), cap), step);
          continue;
        }
        if (used >= problem.profile_steps) break;
        const auto minus = profile(inside(a - step));
        ++used;
        if (take(minus)) {
          step = -std::copysign(std::min(2.0 * std::abs(step), cap), step);
          continue;
        }
        // Bracketed: jump to the vertex of the parabola through the three.
        const double den = plus.first + minus.first - 2.0 * fa;
        if (den > 0.0 && used < problem.profile_steps) {
          take(profile(inside(a + 0.5 * step * (minus.first - plus.first) / den)));
          ++used;
        }
        step *= 0.25;
        cap = std::abs(step);
      }
    }
    if (!s.converged) r.warning = "simplex stopped at the evaluation limit; best point so far reported";
  }
  r.best = model_at(s.x);
  r.values = s.x;
  r.loss = fit_loss(problem, r.best, &r.residuals, &r.nuisance);
  r.loss_log = s.accepted_log;
  r.evaluations = s.evaluations;
  r.converged = s.converged;
  for (const auto& p : problem.free) r.names.push_back(p.name);

  // Curvature errors from the Gauss-Newton Hessian: Cov = s^2 (J^T J)^-1,
  // s^2 = loss / (N - k).
  r.relative_errors.assign(k, std::numeric_limits<double>::quiet_NaN());
  if (k > 0) {
    try {
      const std::vector<double> h = difference_steps(s.x, lo, hi);
      const Eigen::MatrixXd j = residual_jacobian(residual_vector, s.x, h);
      const double n_points = static_cast<double>(j.rows());
      const double dof = n_points > static_cast<double>(k) ? n_points - static_cast<double>(k) : 1.0;
      const Eigen::MatrixXd cov =
          (r.loss / dof) * (j.transpose() * j).completeOrthogonalDecomposition().pseudoInverse();
      for (std::size_t i = 0; i < k; ++i) {
        const double v = std::abs(cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i))) * h[i] * h[i];
        if (std::isfinite(v) && s.x[i] != 0.0) r.relative_errors[i] = std::sqrt(v) / std::abs(s.x[i]);
      }
    } catch (const NumericalError&) {
    }
  }
  r.transitions = mw_transitions(solve_manifold(r.best.params, r.best.field()));
  return r;
}

CsvMeta experiment_meta(const ExperimentSpec& spec) {
  CsvMeta m;
  m["kind"] = std::string(to_string(spec.kind));
  m["transition"] = std::string(to_string(spec.transition));
  m["samples_per_period"] = std::to_string(spec.samples_per_period);
  if (spec.kind == ExperimentKind::ramsey) {
    std::ostringstream os;
    os.precision(17);
    m["noise_kind"] = std::string(to_string(spec.noise.kind));
    os << spec.noise.sigma;
    m["noise_sigma"] = os.str();
    os.str("");
    os << spec.noise.correlation_time;
    m["noise_correlation_time"] = os.str();
    m["noise_samples"] = std::to_string(spec.noise.samples);
    os.str("");
    os << spec.pi_half;
    m["pi_half"] = os.str();
  }
  return m;
}

ExperimentSpec experiment_from_meta(const CsvMeta& meta, const SignalMap& map) {
  auto get = [&](const std::string& key) -> const std::string* {
    const auto it = meta.find(key);
    return it == meta.end() ? nullptr : &it->second;
  };
  auto number = [&](const std::string& key, double fallback) {
    const std::string* v = get(key);
    if (!v) return fallback;
    try {
      std::size_t used = 0;
      const double d = std::stod(*v, &used);
      if (used != v->size()) throw std::invalid_argument(key);
      return d;
    } catch (const std::exception&) {
      throw InputError("metadata '" + key + "' is not a number");
    }
  };
  ExperimentSpec s;
  if (const auto* k = get("kind")) s.kind = experiment_kind_from_string(*k);
  if (const auto* t = get("transition")) s.transition = mw_transition_from_string(*t);
  if (const auto* n = get("noise_kind")) s.noise.kind = noise_kind_from_string(*n);
  s.noise.sigma = number("noise_sigma", 0.0);
  s.noise.correlation_time = number("noise_correlation_time", 0.0);
  s.noise.samples = static_cast<int>(number("noise_samples", 1));
  s.pi_half = number("pi_half", 0.0);
  s.samples_per_period = static_cast<int>(number("samples_per_period", kMinSamplesPerPeriod));
  s.freq_grid = map.frequency;
  s.time_grid = map.duration;
  s.validate();
  return s;
}

std::pair<ExperimentSpec, SignalMap> load_signal_csv(const std::string& path) {
  SignalFile f = read_signal_csv_file(path);
  ExperimentSpec spec = experiment_from_meta(f.meta, f.map);
  return {spec, f.map};
}

}  // namespace snv
