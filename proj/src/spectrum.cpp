#include "snv/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "snv/error.hpp"

namespace snv {

std::string_view to_string(TransitionKind k) {
  return k == TransitionKind::microwave ? "microwave" : "optical";
}

std::string_view to_string(PeakId p) {
  switch (p) {
    case PeakId::f0: return "f0";
    case PeakId::f1: return "f1";
    case PeakId::f2: return "f2";
    case PeakId::other: return "other";
  }
  return "other";
}

const Transition& TransitionTable::peak(PeakId id) const {
  for (const auto& t : entries)
    if (t.peak == id) return t;
  throw InputError("transition table has no peak " + std::string(to_string(id)));
}

double TransitionTable::microwave(Qubit a, Qubit b) const {
  for (const auto& t : entries) {
    if (t.kind != TransitionKind::microwave) continue;
    if ((t.from.qubit == a && t.to.qubit == b) || (t.from.qubit == b && t.to.qubit == a))
      return t.frequency;
  }
  throw InputError("no microwave transition " + std::string(to_string(a)) + " <-> " +
                   std::string(to_string(b)));
}

TransitionTable mw_transitions(const EigenSystem& ground) {
  TransitionTable table;
  const std::pair<Qubit, Qubit> pairs[] = {{Qubit::q0B0M, Qubit::q1B0M},
                                           {Qubit::q0B0M, Qubit::q0B1M},
                                           {Qubit::q0B1M, Qubit::q1B1M}};
  for (const auto& [a, b] : pairs) {
    const double f = std::abs(ground.energy(Branch::lower, b) - ground.energy(Branch::lower, a));
    table.entries.push_back({{Branch::lower, a}, {Branch::lower, b}, f, TransitionKind::microwave,
                             PeakId::other});
  }
  return table;
}

TransitionTable optical_transitions(const EigenSystem& ground, const EigenSystem& excited,
                                    double zpl) {
  constexpr Qubit kQubits[] = {Qubit::q0B0M, Qubit::q0B1M, Qubit::q1B0M, Qubit::q1B1M};
  // Both manifolds must carry every lower-branch label exactly once.
  for (Qubit q : kQubits) {
    (void)ground.index(Branch::lower, q);
    (void)excited.index(Branch::lower, q);
  }
  TransitionTable table;
  for (Qubit g : kQubits) {
    for (Qubit e : kQubits) {
      Transition t;
      t.from = {Branch::lower, g};
      t.to = {Branch::lower, e};
      t.frequency = zpl + excited.energy(Branch::lower, e) - ground.energy(Branch::lower, g);
      t.kind = TransitionKind::optical;
      if (g == e) {
        if (is_bright(g)) t.peak = PeakId::f0;
        else t.peak = g == Qubit::q0B1M ? PeakId::f2 : PeakId::f1;
      }
      table.entries.push_back(t);
    }
  }
  return table;
}

double optical_hyperfine_splitting(const ManifoldParams& ground, const ManifoldParams& excited) {
  return 0.5 * (ground.a_par - excited.a_par);
}

double optical_hyperfine_splitting(const TransitionTable& optical) {
  double f0 = 0.0;
  int n0 = 0;
  double dark = 0.0;
  int nd = 0;
  for (const auto& t : optical.entries) {
    if (t.peak == PeakId::f0) {
      f0 += t.frequency;
      ++n0;
    } else if (t.peak == PeakId::f1 || t.peak == PeakId::f2) {
      dark += t.frequency;
      ++nd;
    }
  }
  if (n0 == 0 || nd == 0) throw InputError("table lacks spin-conserving optical peaks");
  return std::abs(dark / nd - f0 / n0);
}

namespace {

std::vector<double> effective_weights(const TransitionTable& table,
                                      const std::vector<double>& weights) {
  if (weights.empty()) {
    std::vector<double> w;
    w.reserve(table.entries.size());
    for (const auto& t : table.entries)
      w.push_back(t.kind == TransitionKind::optical && t.peak != PeakId::other ? 1.0 : 0.0);
    return w;
  }
  if (weights.size() != table.entries.size())
    throw InputError("ple_spectrum: one weight per table entry required");
  for (double w : weights)
    if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("ple_spectrum: weights must be >= 0");
  return weights;
}

}  // namespace

SpectrumTrace ple_spectrum(const TransitionTable& table, double linewidth,
                           const std::vector<double>& weights, const std::vector<double>& grid) {
  if (!(linewidth > 0.0) || !std::isfinite(linewidth))
    throw InputError("ple_spectrum: linewidth must be positive");
  SpectrumTrace trace;
  trace.linewidth = linewidth;
  if (table.entries.empty()) return trace;
  const std::vector<double> w = effective_weights(table, weights);
  trace.frequency = grid;
  trace.intensity.assign(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double sum = 0.0;
    for (std::size_t k = 0; k < table.entries.size(); ++k) {
      if (w[k] == 0.0) continue;
      const double x = 2.0 * (grid[i] - table.entries[k].frequency) / linewidth;
      sum += w[k] / (1.0 + x * x);
    }
    trace.intensity[i] = sum;
  }
  return trace;
}

std::vector<double> ple_grid(const TransitionTable& table, double linewidth, std::size_t points,
                             double margin_linewidths) {
  if (table.entries.empty() || points < 2) return {};
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& t : table.entries) {
    if (t.peak == PeakId::other && t.kind == TransitionKind::optical) continue;
    lo = std::min(lo, t.frequency);
    hi = std::max(hi, t.frequency);
  }
  if (!std::isfinite(lo)) return {};
  lo -= margin_linewidths * linewidth;
  hi += margin_linewidths * linewidth;
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i)
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  return grid;
}

double memory_detuning(const EigenSystem& ground, const EigenSystem& excited) {
  const double exc = excited.energy(Branch::lower, Qubit::q1B1M) -
                     excited.energy(Branch::lower, Qubit::q1B0M);
  const double gnd = ground.energy(Branch::lower, Qubit::q1B1M) -
                     ground.energy(Branch::lower, Qubit::q1B0M);
  return exc - gnd;
}

}  // namespace snv
