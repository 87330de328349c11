#include "snv/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "snv/coherence.hpp"
#include "snv/csv.hpp"
#include "snv/dynamics.hpp"
#include "snv/fitkit.hpp"
#include "snv/optics.hpp"
#include "snv/rng.hpp"
#include "snv/spectrum.hpp"

namespace snv::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// JSON object reader that remembers which keys were read so leftovers can be
// reported as unknown.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw SchemaError(path_.empty() ? "/" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_ + "/" + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json* get(const std::string& key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  double number(const std::string& key, std::optional<double> def = std::nullopt) {
    const json* v = get(key);
    if (!v) return require(key, def);
    if (!v->is_number()) throw SchemaError(at(key), "expected a number");
    const double d = v->get<double>();
    if (!std::isfinite(d)) throw SchemaError(at(key), "must be finite");
    return d;
  }

  long long integer(const std::string& key, std::optional<long long> def = std::nullopt) {
    const json* v = get(key);
    if (!v) return require(key, def);
    if (!v->is_number_integer()) throw SchemaError(at(key), "expected an integer");
    return v->get<long long>();
  }

  bool boolean(const std::string& key, bool def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_boolean()) throw SchemaError(at(key), "expected true or false");
    return v->get<bool>();
  }

  std::string string(const std::string& key, std::optional<std::string> def = std::nullopt) {
    const json* v = get(key);
    if (!v) return require(key, def);
    if (!v->is_string()) throw SchemaError(at(key), "expected a string");
    return v->get<std::string>();
  }

  // Either an explicit array or {"start", "stop", "count"[, "spacing": "linear"|"log"]}.
  std::vector<double> grid(const std::string& key, std::optional<std::vector<double>> def = std::nullopt) {
    const json* v = get(key);
    if (!v) return require(key, def);
    std::vector<double> out;
    if (v->is_array()) {
      for (std::size_t i = 0; i < v->size(); ++i) {
        const json& e = (*v)[i];
        if (!e.is_number() || !std::isfinite(e.get<double>()))
          throw SchemaError(at(key) + "/" + std::to_string(i), "expected a finite number");
        out.push_back(e.get<double>());
      }
    } else {
      Node g(*v, at(key));
      const double start = g.number("start"), stop = g.number("stop");
      const long long count = g.integer("count");
      const std::string spacing = g.string("spacing", "linear");
      g.finish();
      if (count < 1) throw SchemaError(at(key) + "/count", "must be at least 1");
      if (spacing != "linear" && spacing != "log")
        throw SchemaError(at(key) + "/spacing", "expected 'linear' or 'log'");
      if (spacing == "log" && !(start > 0 && stop > 0))
        throw SchemaError(at(key), "log spacing needs positive start and stop");
      for (long long i = 0; i < count; ++i) {
        const double u = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
        out.push_back(spacing == "linear" ? start + u * (stop - start)
                                          : std::exp(std::log(start) + u * (std::log(stop) - std::log(start))));
      }
    }
    if (out.empty()) throw SchemaError(at(key), "grid must not be empty");
    return out;
  }

  Node child(const std::string& key) {
    static const json kEmpty = json::object();
    const json* v = get(key);
    return Node(v ? *v : kEmpty, at(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw SchemaError(at(it.key()), "unknown key");
  }

  const json& raw() const { return j_; }

 private:
  template <class T>
  T require(const std::string& key, const std::optional<T>& def) const {
    if (!def) throw SchemaError(at(key), "required");
    return *def;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

std::string num(double v) { return format_number(v); }

json jnum(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

struct Context {
  ManifoldParams ground;
  ManifoldParams excited;
  MagneticField field;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  Provenance prov;
  fs::path out_dir;
  fs::path config_dir;
  std::vector<std::string> written;
};

void write_file(Context& ctx, const std::string& name, const std::string& content) {
  const fs::path p = ctx.out_dir / name;
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open " + p.string() + " for writing");
  f << content;
  f.close();
  if (!f) throw IoError("write failed: " + p.string());
  ctx.written.push_back(p.string());
}

void write_json(Context& ctx, const std::string& name, json body) {
  body["provenance"] = {{"version", ctx.prov.version}, {"config_hash", ctx.prov.config_hash}};
  write_file(ctx, name, body.dump(2) + "\n");
}

void write_table(Context& ctx, const std::string& name, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream os;
  write_table_csv(os, header, rows, &ctx.prov);
  write_file(ctx, name, os.str());
}

ManifoldParams manifold_block(Node& top, const std::string& key, ManifoldParams base) {
  const json* v = top.get(key);
  if (!v) return base;
  try {
    from_json(*v, base);
  } catch (const InputError& e) {
    throw SchemaError(top.at(key), e.what());
  }
  return base;
}

PeakId peak_from_string(const std::string& s, const std::string& path) {
  if (s == "f0") return PeakId::f0;
  if (s == "f1") return PeakId::f1;
  if (s == "f2") return PeakId::f2;
  throw SchemaError(path, "expected f0, f1 or f2");
}

template <class F>
auto with_path(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const SchemaError&) {
    throw;
  } catch (const InputError& e) {
    throw SchemaError(path, e.what());
  }
}

MwTransition transition_option(Node& o) {
  const std::string s = o.string("transition");
  return with_path(o.at("transition"), [&] { return mw_transition_from_string(s); });
}

NoiseModel noise_option(Node& o) {
  NoiseModel n;
  if (!o.has("noise")) return n;
  Node b = o.child("noise");
  const std::string kind = b.string("kind", "none");
  n.kind = with_path(b.at("kind"), [&] { return noise_kind_from_string(kind); });
  n.sigma = b.number("sigma_hz", 0.0);
  n.correlation_time = b.number("correlation_time_s", 0.0);
  n.samples = static_cast<int>(b.integer("samples", 1));
  b.finish();
  with_path(o.at("noise"), [&] { n.validate(); return 0; });
  return n;
}

DriveAmplitude drive_option(Node& o) {
  DriveAmplitude d;
  d.bx = o.number("drive_bx_hz", d.bx);
  d.bz = o.number("drive_bz_hz", d.bz);
  return d;
}

// --- commands --------------------------------------------------------------

json levels_json(const EigenSystem& es) {
  json arr = json::array();
  for (int k = 0; k < kDim; ++k)
    arr.push_back({{"label", to_string(es.labels[k])}, {"energy_hz", es.energies(k)}});
  return arr;
}

void cmd_levels(Context& ctx, Node& o) {
  const std::string which = o.string("manifold", "both");
  o.finish();
  if (which != "ground" && which != "excited" && which != "both")
    throw SchemaError(o.at("manifold"), "expected ground, excited or both");
  json body;
  if (which != "excited") body["ground"] = levels_json(solve_manifold(ctx.ground, ctx.field));
  if (which != "ground") body["excited"] = levels_json(solve_manifold(ctx.excited, ctx.field));
  write_json(ctx, "levels.json", body);
}

std::vector<std::string> transition_row(const Transition& t) {
  return {to_string(t.from), to_string(t.to), num(t.frequency), std::string(to_string(t.kind)),
          std::string(to_string(t.peak))};
}

void cmd_transitions(Context& ctx, Node& o) {
  const double zpl = o.number("zpl_hz", 0.0);
  o.finish();
  const EigenSystem g = solve_manifold(ctx.ground, ctx.field);
  const EigenSystem e = solve_manifold(ctx.excited, ctx.field);
  std::vector<std::vector<std::string>> rows;
  for (const auto& t : mw_transitions(g).entries) rows.push_back(transition_row(t));
  for (const auto& t : optical_transitions(g, e, zpl).entries) rows.push_back(transition_row(t));
  write_table(ctx, "transitions.csv", {"from", "to", "frequency_hz", "kind", "peak_id"}, rows);
}

void cmd_ple(Context& ctx, Node& o) {
  const double zpl = o.number("zpl_hz", 0.0);
  const double linewidth = o.number("linewidth_hz", presets::kPleLinewidth);
  const long long points = o.integer("points", 2001);
  const double margin = o.number("margin_linewidths", 10.0);
  std::vector<double> weights;
  if (o.has("weights")) weights = o.grid("weights");
  o.finish();
  if (!(linewidth > 0)) throw SchemaError(o.at("linewidth_hz"), "must be positive");
  if (points < 2) throw SchemaError(o.at("points"), "must be at least 2");
  const TransitionTable table = optical_transitions(solve_manifold(ctx.ground, ctx.field),
                                                    solve_manifold(ctx.excited, ctx.field), zpl);
  if (!weights.empty() && weights.size() != table.entries.size())
    throw SchemaError(o.at("weights"), "expected one weight per optical line (" +
                                           std::to_string(table.entries.size()) + ")");
  const auto grid = ple_grid(table, linewidth, static_cast<std::size_t>(points), margin);
  const SpectrumTrace tr = ple_spectrum(table, linewidth, weights, grid);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < tr.frequency.size(); ++i) rows.push_back({num(tr.frequency[i]), num(tr.intensity[i])});
  write_table(ctx, "ple.csv", {"frequency_hz", "intensity"}, rows);
}

void cmd_cyclicity_map(Context& ctx, Node& o) {
  const auto bx = o.grid("bx_T", std::vector<double>{0.0, 200e-6, 1e-3});
  const auto bz = o.grid("bz_T", std::vector<double>{0.0});
  o.finish();
  const auto rows_in = cyclicity_map(ctx.ground, ctx.excited, DipoleSet::standard(), bx, bz, ctx.threads);
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : rows_in) rows.push_back({num(r.bx_tesla), num(r.bz_tesla), num(r.lambda_f0)});
  write_table(ctx, "cyclicity_map.csv", {"bx_T", "bz_T", "lambda_f0"}, rows);
}

json qubit_values(const std::array<double, 4>& v) {
  static const Qubit order[] = {Qubit::q0B0M, Qubit::q0B1M, Qubit::q1B0M, Qubit::q1B1M};
  json j;
  for (int i = 0; i < 4; ++i) j[std::string(to_string(order[i]))] = v[i];
  return j;
}

void cmd_pump(Context& ctx, Node& o) {
  const EigenSystem g = solve_manifold(ctx.ground, ctx.field);
  const EigenSystem e = solve_manifold(ctx.excited, ctx.field);
  PumpSettings s;
  std::string line = "f2";
  if (o.has("pump_frequency_hz")) {
    if (o.has("peak")) throw SchemaError(o.at("peak"), "give either peak or pump_frequency_hz");
    s.pump_frequency = o.number("pump_frequency_hz");
    line = "custom";
  } else {
    line = o.string("peak", "f2");
    s.pump_frequency = peak_frequency(g, e, peak_from_string(line, o.at("peak")));
  }
  s.rabi = o.number("rabi_hz", s.rabi);
  s.linewidth = o.number("linewidth_hz", s.linewidth);
  s.duration = o.number("duration_s", s.duration);
  s.lifetime = o.number("lifetime_s", s.lifetime);
  o.finish();
  const PumpResult r = with_path("/options", [&] { return pump_dynamics(g, e, DipoleSet::standard(), s); });
  write_json(ctx, "pump.json",
             {{"pump_line", line},
              {"pump_frequency_hz", s.pump_frequency},
              {"populations", qubit_values(r.populations)},
              {"final_populations", qubit_values(r.final_populations)},
              {"tau_pol_s", jnum(r.tau_pol)},
              {"converged", r.converged},
              {"diagnostic", r.diagnostic}});
}

void cmd_fidelity_budget(Context& ctx, Node& o) {
  double dw = 0.0;
  std::string source = "config";
  if (o.has("delta_omega_rad_s")) {
    dw = o.number("delta_omega_rad_s");
  } else {
    dw = 2.0 * std::numbers::pi * memory_detuning(solve_manifold(ctx.ground, ctx.field),
                                      solve_manifold(ctx.excited, ctx.field));
    source = "memory_detuning";
  }
  const double tau = o.number("tau_s", presets::kOpticalLifetime);
  const double f_min = o.number("f_min", 0.95);
  const auto n_grid = o.grid("n", std::vector<double>{1, 10, 100, 1000, 1e4, 1e5, 1e6, 1e7});
  const long long trials = o.integer("mc_trials", 0);
  o.finish();
  if (!(tau > 0)) throw SchemaError(o.at("tau_s"), "must be positive");
  if (!(f_min > 0.5 && f_min < 1.0)) throw SchemaError(o.at("f_min"), "must lie in (0.5, 1)");
  if (trials != 0 && trials < 1000) throw SchemaError(o.at("mc_trials"), "0 or at least 1000");
  for (std::size_t i = 0; i < n_grid.size(); ++i)
    if (n_grid[i] < 0 || n_grid[i] != std::floor(n_grid[i]))
      throw SchemaError(o.at("n") + "/" + std::to_string(i), "excitation counts are non-negative integers");

  std::vector<std::string> header = {"n", "fidelity"};
  if (trials) header.insert(header.end(), {"fidelity_mc", "stderr_mc"});
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    std::vector<std::string> r = {num(n_grid[i]), num(excitation_fidelity(dw, tau, n_grid[i]))};
    if (trials) {
      const auto mc = excitation_fidelity_mc(dw, tau, static_cast<std::uint64_t>(n_grid[i]),
                                             static_cast<std::uint64_t>(trials), derive_seed(ctx.seed, i));
      r.push_back(num(mc.value));
      r.push_back(num(mc.stderr_));
    }
    rows.push_back(r);
  }
  write_table(ctx, "fidelity_budget.csv", header, rows);
  const ExcitationBudget b = max_excitations(dw, tau, f_min);
  write_json(ctx, "fidelity_budget.json",
             {{"delta_omega_rad_s", dw},
              {"delta_omega_source", source},
              {"tau_s", tau},
              {"f_min", f_min},
              {"unbounded", b.unbounded},
              {"n_max", b.unbounded ? json("inf") : json(b.count)}});
}

ExperimentSpec map_spec(Node& o, ExperimentKind kind) {
  ExperimentSpec s;
  s.kind = kind;
  s.transition = transition_option(o);
  s.freq_grid = o.grid("freq_grid_hz");
  s.time_grid = o.grid(kind == ExperimentKind::rabi ? "time_grid_s" : "delay_grid_s");
  s.samples_per_period = static_cast<int>(o.integer("samples_per_period", kMinSamplesPerPeriod));
  if (kind == ExperimentKind::ramsey) {
    s.noise = noise_option(o);
    s.pi_half = o.number("pi_half_s", 0.0);
  }
  with_path("/options", [&] { s.validate(); return 0; });
  return s;
}

void cmd_map(Context& ctx, Node& o, ExperimentKind kind) {
  ModelPoint m;
  m.params = ctx.ground;
  const ExperimentSpec s = map_spec(o, kind);
  m.drive = drive_option(o);
  o.finish();
  // The model point carries the field in electron units.
  const double k = ctx.ground.electron_hz_per_tesla();
  m.bx = ctx.field.bx * k;
  m.by = ctx.field.by * k;
  m.bz = ctx.field.bz * k;
  const SignalMap map = simulate_experiment(m, s, ctx.threads);
  std::ostringstream os;
  write_signal_csv(os, map, experiment_meta(s), &ctx.prov);
  write_file(ctx, std::string(to_string(kind)) + ".csv", os.str());
}

void cmd_decouple(Context& ctx, Node& o) {
  const long long n = o.integer("n_pulses", 0);
  const auto delays = o.grid("delay_grid_s");
  NoiseModel noise = noise_option(o);
  const long long steps = o.integer("steps", 400);
  o.finish();
  if (n < 0) throw SchemaError(o.at("n_pulses"), "must be non-negative");
  if (steps < 2) throw SchemaError(o.at("steps"), "must be at least 2");
  const DecayCurve c = with_path("/options", [&] {
    return decoupling_scan(static_cast<int>(n), delays, noise, ctx.seed, static_cast<int>(steps));
  });
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < c.delay.size(); ++i) rows.push_back({num(c.delay[i]), num(c.coherence[i])});
  write_table(ctx, "decouple.csv", {"delay_s", "coherence"}, rows);
  write_json(ctx, "decouple.json",
             {{"n_pulses", n},
              {"t2_s", jnum(c.fit.t_decay)},
              {"beta", jnum(c.fit.beta)},
              {"converged", c.fit.converged},
              {"message", c.fit.message}});
}

void cmd_rb(Context& ctx, Node& o) {
  const double f = o.number("gate_fidelity");
  std::vector<double> lengths_d = o.grid(
      "lengths", std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 10, 12, 14, 16, 20, 24, 28, 32, 40, 48, 64, 80, 100, 128});
  const long long seqs = o.integer("sequences", 1000);
  const double contrast = o.number("readout_contrast", 1.0);
  o.finish();
  std::vector<int> lengths;
  for (std::size_t i = 0; i < lengths_d.size(); ++i) {
    if (lengths_d[i] < 0 || lengths_d[i] != std::floor(lengths_d[i]))
      throw SchemaError(o.at("lengths") + "/" + std::to_string(i), "lengths are non-negative integers");
    lengths.push_back(static_cast<int>(lengths_d[i]));
  }
  const RbResult r = with_path("/options", [&] {
    return rb_simulate(f, lengths, static_cast<int>(seqs), ctx.seed, contrast, ctx.threads);
  });
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < r.lengths.size(); ++i)
    rows.push_back({std::to_string(r.lengths[i]), num(r.mean_survival[i]), num(r.stderr_[i])});
  write_table(ctx, "rb.csv", {"length", "mean_survival", "stderr"}, rows);
  write_json(ctx, "rb.json",
             {{"injected_fidelity", f},
              {"amplitude", r.amplitude},
              {"offset", r.offset},
              {"decay", r.decay},
              {"fidelity", r.fidelity},
              {"clifford_fidelity", clifford_adjust(std::clamp(r.fidelity, 0.0, 1.0))},
              {"degenerate", r.degenerate},
              {"message", r.message}});
}

void cmd_coherence_map(Context& ctx, Node& o) {
  const auto ups = o.grid("upsilon_grid_hz", std::vector<double>{0.1e6, 0.5e6, 1e6});
  const auto alphas = o.grid("alpha_grid_hz", std::vector<double>{ctx.ground.strain_egx});
  const long long sign = o.integer("upsilon_lambda_sign", 1);
  CoherenceParams coh = presets::coherence_1p7k();
  coh.gamma_phonon = o.number("gamma_phonon", coh.gamma_phonon);
  coh.temperature = o.number("temperature_k", coh.temperature);
  o.finish();
  if (sign != 1 && sign != -1) throw SchemaError(o.at("upsilon_lambda_sign"), "expected 1 or -1");
  with_path("/options", [&] { coh.validate(); return 0; });
  const auto pts = coherence_map(ctx.ground, ups, alphas, static_cast<int>(sign), coh, ctx.threads);
  std::vector<std::vector<std::string>> rows;
  for (const auto& p : pts) rows.push_back({num(p.upsilon), num(p.alpha), num(p.t2)});
  write_table(ctx, "coherence_map.csv", {"upsilon_hz", "alpha_hz", "t2_s"}, rows);
}

void cmd_fit(Context& ctx, Node& o) {
  FitProblem p;
  p.fixed.params = ctx.ground;
  const double k = ctx.ground.electron_hz_per_tesla();
  p.fixed.bx = ctx.field.bx * k;
  p.fixed.by = ctx.field.by * k;
  p.fixed.bz = ctx.field.bz * k;
  p.fixed.drive = drive_option(o);

  const json* ds = o.get("datasets");
  if (!ds || !ds->is_array() || ds->empty()) throw SchemaError(o.at("datasets"), "expected a non-empty array of CSV paths");
  for (std::size_t i = 0; i < ds->size(); ++i) {
    const std::string path = o.at("datasets") + "/" + std::to_string(i);
    if (!(*ds)[i].is_string()) throw SchemaError(path, "expected a path");
    fs::path f = (*ds)[i].get<std::string>();
    if (f.is_relative()) f = ctx.config_dir / f;
    if (!fs::exists(f)) throw SchemaError(path, "file not found: " + f.string());
    auto [spec, map] = with_path(path, [&] { return load_signal_csv(f.string()); });
    p.datasets.push_back({spec, map});
  }

  const json* fr = o.get("free");
  if (fr && !fr->is_array()) throw SchemaError(o.at("free"), "expected an array");
  if (fr) {
    for (std::size_t i = 0; i < fr->size(); ++i) {
      Node e((*fr)[i], o.at("free") + "/" + std::to_string(i));
      FreeParameter fp;
      fp.name = e.string("name");
      const double current = with_path(e.at("name"), [&] { return get_parameter(p.fixed, fp.name); });
      fp.initial = e.number("initial", current);
      const double span = std::max(0.2 * std::abs(fp.initial), 1.0);
      fp.lower = e.number("lower", fp.initial - span);
      fp.upper = e.number("upper", fp.initial + span);
      e.finish();
      p.free.push_back(fp);
    }
  }
  p.nuisance = o.boolean("nuisance", false);
  p.anchor_resonances = o.boolean("anchor_resonances", true);
  p.optimizer.max_evaluations = static_cast<int>(o.integer("max_evaluations", p.optimizer.max_evaluations));
  p.optimizer.restarts = static_cast<int>(o.integer("restarts", p.optimizer.restarts));
  p.optimizer.initial_step = o.number("initial_step", p.optimizer.initial_step);
  o.finish();
  p.threads = ctx.threads;
  with_path("/options", [&] { p.validate(); return 0; });

  const FitResult r = fit_parameters(p, ctx.seed);
  json params = json::array();
  for (std::size_t i = 0; i < r.names.size(); ++i)
    params.push_back({{"name", r.names[i]}, {"value", r.values[i]}, {"relative_error", jnum(r.relative_errors[i])}});
  json residuals = json::array();
  for (std::size_t d = 0; d < r.residuals.size(); ++d) {
    const auto& m = r.residuals[d];
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(row);
    }
    json entry = {{"dataset", (*ds)[d]}, {"rms", std::sqrt(m.squaredNorm() / static_cast<double>(m.size()))},
                  {"residual", rows}};
    if (p.nuisance) entry["nuisance"] = {{"amplitude", r.nuisance[d].first}, {"offset", r.nuisance[d].second}};
    residuals.push_back(entry);
  }
  json trans = json::array();
  for (const auto& t : r.transitions.entries)
    trans.push_back({{"from", to_string(t.from)}, {"to", to_string(t.to)}, {"frequency_hz", t.frequency}});
  write_json(ctx, "fit_report.json",
             {{"parameters", params},
              {"loss", r.loss},
              {"loss_log", r.loss_log},
              {"evaluations", r.evaluations},
              {"converged", r.converged},
              {"warning", r.warning},
              {"transitions", trans},
              {"datasets", residuals}});
}

using Handler = std::function<void(Context&, Node&)>;

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> h = {
      {"levels", cmd_levels},
      {"transitions", cmd_transitions},
      {"ple", cmd_ple},
      {"cyclicity-map", cmd_cyclicity_map},
      {"pump", cmd_pump},
      {"fidelity-budget", cmd_fidelity_budget},
      {"rabi", [](Context& c, Node& o) { cmd_map(c, o, ExperimentKind::rabi); }},
      {"ramsey", [](Context& c, Node& o) { cmd_map(c, o, ExperimentKind::ramsey); }},
      {"decouple", cmd_decouple},
      {"rb", cmd_rb},
      {"coherence-map", cmd_coherence_map},
      {"fit", cmd_fit},
  };
  return h;
}

void emit_error(std::ostream& err, ExitCode code, const std::string& kind, const std::string& message,
                const std::string& path = {}) {
  json e = {{"error", kind}, {"message", message}, {"exit_code", static_cast<int>(code)}};
  if (!path.empty()) e["path"] = path;
  err << e.dump() << "\n";
}

}  // namespace

const std::vector<std::string>& commands() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [k, _] : handlers()) v.push_back(k);
    return v;
  }();
  return names;
}

json effective_config(const json& config) {
  if (!config.is_object()) throw SchemaError("/", "config must be a JSON object");
  json e = config;
  e.erase("out");
  e.erase("threads");
  if (!e.contains("seed")) e["seed"] = 1;
  return e;
}

std::string config_hash(const json& effective) { return fnv1a_hex(effective.dump()); }

std::vector<std::string> execute(const json& config, const std::string& out_dir, const std::string& config_dir) {
  Node top(config, "");
  Context ctx;
  const std::string command = top.string("command");
  const auto it = handlers().find(command);
  if (it == handlers().end()) throw SchemaError("/command", "unknown command '" + command + "'");
  const long long seed = top.integer("seed", 1);
  if (seed < 0) throw SchemaError("/seed", "must be non-negative");
  ctx.seed = static_cast<std::uint64_t>(seed);
  const long long threads = top.integer("threads", 1);
  if (threads < 1 || threads > 256) throw SchemaError("/threads", "must lie in [1, 256]");
  ctx.threads = static_cast<unsigned>(threads);
  top.get("out");  // consumed by run()

  ctx.ground = manifold_block(top, "ground", presets::ground_fitted());
  ctx.excited = manifold_block(top, "excited", presets::excited_default());
  if (top.has("field") && top.has("field_hz")) throw SchemaError("/field_hz", "give either field or field_hz");
  if (const json* f = top.get("field")) {
    ctx.field = with_path("/field", [&] { return f->get<MagneticField>(); });
  }
  if (const json* f = top.get("field_hz")) {
    const MagneticField hz = with_path("/field_hz", [&] { return f->get<MagneticField>(); });
    ctx.field = MagneticField::from_electron_frequency(hz.bx, hz.by, hz.bz, ctx.ground.g_electron);
  }
  Node options = top.child("options");
  top.finish();

  ctx.prov.config_hash = config_hash(effective_config(config));
  ctx.out_dir = out_dir;
  ctx.config_dir = config_dir;
  std::error_code ec;
  fs::create_directories(ctx.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());
  it->second(ctx, options);
  return ctx.written;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Electro-nuclear spin simulator for tin-vacancy color centers", "snvsim"};
  std::string config_path, out_dir;
  std::optional<long long> seed;
  std::optional<long long> threads;
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--out", out_dir, std::string("output directory (default $") + kOutDirEnv + " or .)");
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--threads", threads, "overrides the config thread count");
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();  // program name
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    emit_error(err, kInput, "input", e.what());
    return kInput;
  }

  try {
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open config " + config_path);
    json config;
    try {
      config = json::parse(in);
    } catch (const json::parse_error& e) {
      throw SchemaError("/", std::string("invalid JSON: ") + e.what());
    }
    if (!config.is_object()) throw SchemaError("/", "config must be a JSON object");
    if (seed) config["seed"] = *seed;
    if (threads) config["threads"] = *threads;
    if (out_dir.empty() && config.contains("out")) {
      if (!config["out"].is_string()) throw SchemaError("/out", "expected a string");
      out_dir = config["out"].get<std::string>();
    }
    if (out_dir.empty()) {
      const char* env = std::getenv(kOutDirEnv);
      out_dir = env && *env ? env : ".";
    }
    const fs::path dir = fs::path(config_path).parent_path();
    for (const auto& f : execute(config, out_dir, dir.empty() ? "." : dir.string())) out << f << "\n";
    return kOk;
  } catch (const SchemaError& e) {
    emit_error(err, kInput, "input", e.what(), e.path());
    return kInput;
  } catch (const InputError& e) {
    emit_error(err, kInput, "input", e.what());
    return kInput;
  } catch (const NumericalError& e) {
    emit_error(err, kNumerical, "numerical", e.what());
    return kNumerical;
  } catch (const IoError& e) {
    emit_error(err, kIo, "io", e.what());
    return kIo;
  } catch (const std::exception& e) {
    emit_error(err, kInternal, "internal", e.what());
    return kInternal;
  }
}

}  // namespace snv::cli
