#include "snv/params.hpp"

#include <cmath>
#include <string>

#include "snv/error.hpp"

namespace snv {

namespace {

void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw InputError(std::string("non-finite parameter: ") + name);
}

}  // namespace

void ManifoldParams::validate() const {
  require_finite(lambda_soc, "lambda_soc");
  require_finite(upsilon_ioc, "upsilon_ioc");
  require_finite(a_perp, "a_perp");
  require_finite(a_par, "a_par");
  require_finite(strain_egx, "strain_egx");
  require_finite(strain_egy, "strain_egy");
  require_finite(orbital_quench_q, "orbital_quench_q");
  require_finite(g_electron, "g_electron");
  require_finite(nuclear_gyromag, "nuclear_gyromag");
  if (orbital_quench_q < 0.0 || orbital_quench_q > 1.0)
    throw InputError("orbital_quench_q must lie in [0, 1]");
}

double ManifoldParams::strain_magnitude() const { return std::hypot(strain_egx, strain_egy); }

double ManifoldParams::branch_splitting() const {
  const double a = strain_magnitude();
  return std::sqrt(lambda_soc * lambda_soc + 4.0 * a * a);
}

void MagneticField::validate() const {
  require_finite(bx, "bx");
  require_finite(by, "by");
  require_finite(bz, "bz");
}

MagneticField MagneticField::from_electron_frequency(double bx_hz, double by_hz, double bz_hz,
                                                     double g_electron) {
  const double k = g_electron * kBohrMagnetonHzPerTesla;
  return {bx_hz / k, by_hz / k, bz_hz / k};
}

namespace presets {

ManifoldParams ground_fitted() {
  ManifoldParams p;
  p.lambda_soc = 830e9;
  p.upsilon_ioc = 0.0;
  p.a_perp = 670.95e6;
  p.a_par = 673.8e6;
  p.strain_egx = 928.4e9;
  p.strain_egy = 0.0;
  p.orbital_quench_q = 0.171;
  return p;
}

ManifoldParams ground_table() {
  ManifoldParams p = ground_fitted();
  p.a_perp = 671e6;
  p.a_par = 674e6;
  p.strain_egx = 928e9;
  return p;
}

ManifoldParams excited_default() {
  ManifoldParams p;
  p.lambda_soc = 3.02e12;
  p.upsilon_ioc = 0.0;
  p.a_perp = 464e6;
  p.a_par = -232e6;
  p.strain_egx = -209e9;
  p.strain_egy = 0.0;
  // Calibrated so the memory detuning at the fitted DC field is +10.4 kHz.
  p.orbital_quench_q = 0.0555;
  return p;
}

MagneticField fitted_dc_field() { return MagneticField::from_electron_frequency(6.03e6, 0.0, 1.55e6); }

}  // namespace presets

void to_json(nlohmann::json& j, const ManifoldParams& p) {
  j = nlohmann::json{{"lambda_soc", p.lambda_soc},
                     {"upsilon_ioc", p.upsilon_ioc},
                     {"a_perp", p.a_perp},
                     {"a_par", p.a_par},
                     {"strain_egx", p.strain_egx},
                     {"strain_egy", p.strain_egy},
                     {"orbital_quench_q", p.orbital_quench_q},
                     {"g_electron", p.g_electron},
                     {"nuclear_gyromag", p.nuclear_gyromag}};
}

void from_json(const nlohmann::json& j, ManifoldParams& p) {
  if (!j.is_object()) throw InputError("manifold parameters must be a JSON object");
  static const char* const kKeys[] = {"lambda_soc", "upsilon_ioc",      "a_perp",
                                      "a_par",      "strain_egx",       "strain_egy",
                                      "orbital_quench_q", "g_electron", "nuclear_gyromag"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : kKeys) known = known || it.key() == k;
    if (!known) throw InputError("unknown manifold parameter: " + it.key());
  }
  auto get = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number()) throw InputError(std::string("parameter must be a number: ") + key);
    out = j.at(key).get<double>();
  };
  get("lambda_soc", p.lambda_soc);
  get("upsilon_ioc", p.upsilon_ioc);
  get("a_perp", p.a_perp);
  get("a_par", p.a_par);
  get("strain_egx", p.strain_egx);
  get("strain_egy", p.strain_egy);
  get("orbital_quench_q", p.orbital_quench_q);
  get("g_electron", p.g_electron);
  get("nuclear_gyromag", p.nuclear_gyromag);
  p.validate();
}

void to_json(nlohmann::json& j, const MagneticField& b) {
  j = nlohmann::json{{"bx", b.bx}, {"by", b.by}, {"bz", b.bz}};
}

void from_json(const nlohmann::json& j, MagneticField& b) {
  if (!j.is_object()) throw InputError("field must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "bx" && it.key() != "by" && it.key() != "bz")
      throw InputError("unknown field component: " + it.key());
  b.bx = j.value("bx", 0.0);
  b.by = j.value("by", 0.0);
  b.bz = j.value("bz", 0.0);
  b.validate();
}

}  // namespace snv
