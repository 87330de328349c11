#pragma once

#include <string>
#include <vector>

#include "snv/spinmodel.hpp"

namespace snv {

enum class TransitionKind { microwave, optical };
enum class PeakId { f0, f1, f2, other };

std::string_view to_string(TransitionKind k);
std::string_view to_string(PeakId p);

struct Transition {
  Label from;  // ground label for optical lines
  Label to;    // excited label for optical lines
  double frequency = 0.0;  // Hz
  TransitionKind kind = TransitionKind::microwave;
  PeakId peak = PeakId::other;
};

struct TransitionTable {
  std::vector<Transition> entries;

  /// First entry carrying the peak id; throws if absent.
  const Transition& peak(PeakId id) const;
  /// Frequency of a microwave entry between two lower-branch qubit labels.
  double microwave(Qubit a, Qubit b) const;
};

/// Lower-branch microwave lines: 0B0M<->1B0M, 0B0M<->0B1M, 0B1M<->1B1M.
TransitionTable mw_transitions(const EigenSystem& ground);

/// All 16 lower-branch optical lines at zpl + (E_exc - E_gnd).
/// Spin-conserving lines (matching qubit labels) carry peak ids:
/// f0 = 1_B lines, f2 = 0_B1_M line (closest to f0), f1 = 0_B0_M line.
TransitionTable optical_transitions(const EigenSystem& ground, const EigenSystem& excited,
                                    double zpl = 0.0);

/// Zero-strain optical hyperfine splitting (A_par^gnd - A_par^exc) / 2.
double optical_hyperfine_splitting(const ManifoldParams& ground, const ManifoldParams& excited);
/// |mean(f1, f2) - mean(f0 lines)| read off a table.
double optical_hyperfine_splitting(const TransitionTable& optical);

struct SpectrumTrace {
  std::vector<double> frequency;  // Hz, same axis as the transition table
  std::vector<double> intensity;  // a.u.
  double linewidth = 0.0;         // Hz FWHM
};

/// Sum of Lorentzians with peak height = weight. Empty weights: 1 for
/// spin-conserving lines, 0 otherwise. Otherwise one weight per table entry.
SpectrumTrace ple_spectrum(const TransitionTable& table, double linewidth,
                           const std::vector<double>& weights, const std::vector<double>& grid);

/// Uniform grid covering all weighted lines with a margin of `margin_linewidths`.
std::vector<double> ple_grid(const TransitionTable& table, double linewidth, std::size_t points,
                             double margin_linewidths = 10.0);

/// [E_exc(1B1M) - E_exc(1B0M)] - [E_gnd(1B1M) - E_gnd(1B0M)] in Hz (lower branches).
double memory_detuning(const EigenSystem& ground, const EigenSystem& excited);

}  // namespace snv
