#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <sys/wait.h>

#include "snv/cli.hpp"
#include "snv/dynamics.hpp"
#include "snv/fitkit.hpp"
#include "snv/optics.hpp"

using namespace snv;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("snvsim_test_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }

  fs::path config(const json& j, const std::string& name = "config.json") const {
    const fs::path p = dir / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  args.insert(args.begin(), "snvsim");
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

json error_json(const Outcome& o) { return json::parse(o.err); }

}  // namespace

TEST_CASE("levels dispatches to the eigensolver") {
  Scratch s("levels");
  const json cfg = {{"command", "levels"}, {"ground", presets::ground_table()}};
  const auto o = run_cli({"--config", s.config(cfg).string(), "--out", (s.dir / "o").string()});
  REQUIRE(o.code == 0);
  const json j = json::parse(slurp(s.dir / "o" / "levels.json"));
  const EigenSystem es = solve_manifold(presets::ground_table(), {});
  REQUIRE(j["ground"].size() == 8);
  for (int k = 0; k < kDim; ++k) {
    CHECK(j["ground"][k]["energy_hz"].get<double>() == es.energies(k));
    CHECK(j["ground"][k]["label"] == to_string(es.labels[k]));
  }
  CHECK(j["excited"].size() == 8);
  CHECK(j["provenance"]["config_hash"] == cli::config_hash(cli::effective_config(cfg)));
}

TEST_CASE("fidelity budget") {
  Scratch s("budget");
  const json cfg = {{"command", "fidelity-budget"},
                    {"options", {{"delta_omega_rad_s", 2 * std::numbers::pi * 10.4e3}, {"tau_s", 6e-9}}}};
  const auto o = run_cli({"--config", s.config(cfg).string(), "--out", s.dir.string()});
  REQUIRE(o.code == 0);
  const json j = json::parse(slurp(s.dir / "fidelity_budget.json"));
  const auto n = j["n_max"].get<std::uint64_t>();
  CHECK(n == max_excitations(2 * std::numbers::pi * 10.4e3, 6e-9, 0.95).count);
  CHECK(static_cast<double>(n) == doctest::Approx(1.37e6).epsilon(0.01));
  const std::string csv = slurp(s.dir / "fidelity_budget.csv");
  CHECK(csv.rfind("# snvsim ", 0) == 0);
  CHECK(csv.find("n,fidelity\n") != std::string::npos);
}

TEST_CASE("same config and seed give byte-identical files") {
  Scratch s("determinism");
  const json cfg = {{"command", "rb"}, {"seed", 11}, {"options", {{"gate_fidelity", 0.95}, {"sequences", 100}}}};
  const auto p = s.config(cfg);
  REQUIRE(run_cli({"--config", p.string(), "--out", (s.dir / "a").string()}).code == 0);
  REQUIRE(run_cli({"--config", p.string(), "--out", (s.dir / "b").string(), "--threads", "2"}).code == 0);
  for (const char* f : {"rb.csv", "rb.json"}) CHECK(slurp(s.dir / "a" / f) == slurp(s.dir / "b" / f));
  REQUIRE(run_cli({"--config", p.string(), "--out", (s.dir / "c").string(), "--seed", "12"}).code == 0);
  CHECK(slurp(s.dir / "a" / "rb.csv") != slurp(s.dir / "c" / "rb.csv"));
}

TEST_CASE("config hash follows the config") {
  const json a = {{"command", "levels"}};
  json b = a;
  b["field"] = {{"bx", 1e-4}, {"by", 0.0}, {"bz", 0.0}};
  CHECK(cli::config_hash(cli::effective_config(a)) != cli::config_hash(cli::effective_config(b)));
  json c = a;
  c["out"] = "/elsewhere";
  c["threads"] = 4;
  CHECK(cli::config_hash(cli::effective_config(a)) == cli::config_hash(cli::effective_config(c)));
  json d = a;
  d["seed"] = 1;
  CHECK(cli::config_hash(cli::effective_config(a)) == cli::config_hash(cli::effective_config(d)));
}

TEST_CASE("errors are machine readable") {
  Scratch s("errors");
  SUBCASE("unknown command") {
    const auto o = run_cli({"--config", s.config({{"command", "bogus"}}).string(), "--out", s.dir.string()});
    CHECK(o.code == cli::kInput);
    CHECK(error_json(o)["path"] == "/command");
    CHECK(error_json(o)["exit_code"] == 2);
  }
  SUBCASE("bad option value names its path") {
    const json cfg = {{"command", "fidelity-budget"}, {"options", {{"f_min", 1.5}}}};
    const auto o = run_cli({"--config", s.config(cfg).string(), "--out", s.dir.string()});
    CHECK(o.code == cli::kInput);
    CHECK(error_json(o)["path"] == "/options/f_min");
  }
  SUBCASE("unknown key") {
    const json cfg = {{"command", "levels"}, {"options", {{"manifolds", "ground"}}}};
    const auto o = run_cli({"--config", s.config(cfg).string(), "--out", s.dir.string()});
    CHECK(o.code == cli::kInput);
    CHECK(error_json(o)["path"] == "/options/manifolds");
  }
  SUBCASE("ground block") {
    const json cfg = {{"command", "levels"}, {"ground", {{"lambda_soc", "fast"}}}};
    const auto o = run_cli({"--config", s.config(cfg).string(), "--out", s.dir.string()});
    CHECK(o.code == cli::kInput);
    CHECK(error_json(o)["path"] == "/ground");
  }
  SUBCASE("missing dataset") {
    const json cfg = {{"command", "fit"}, {"options", {{"datasets", {"nope.csv"}}}}};
    const auto o = run_cli({"--config", s.config(cfg).string(), "--out", s.dir.string()});
    CHECK(o.code == cli::kInput);
    CHECK(error_json(o)["path"] == "/options/datasets/0");
  }
  SUBCASE("missing config file") {
    const auto o = run_cli({"--config", (s.dir / "absent.json").string()});
    CHECK(o.code == cli::kIo);
    CHECK(error_json(o)["error"] == "io");
  }
  SUBCASE("malformed json") {
    std::ofstream(s.dir / "bad.json") << "{ nope";
    const auto o = run_cli({"--config", (s.dir / "bad.json").string()});
    CHECK(o.code == cli::kInput);
  }
  SUBCASE("missing flag") {
    CHECK(run_cli({}).code == cli::kInput);
  }
}

TEST_CASE("rabi command output equals the library map") {
  Scratch s("rabi");
  const ModelPoint m = fitted_model();
  const TransitionDrive td = transition_drive(m.params, m.field(), m.drive, MwTransition::purple);
  const json cfg = {{"command", "rabi"},
                    {"field_hz", {{"bx", m.bx}, {"by", 0.0}, {"bz", m.bz}}},
                    {"options",
                     {{"transition", "purple"},
                      {"freq_grid_hz", {td.frequency - 1e6, td.frequency, td.frequency + 1e6}},
                      {"time_grid_s", {{"start", 0.0}, {"stop", 400e-9}, {"count", 11}}}}}};
  REQUIRE(run_cli({"--config", s.config(cfg).string(), "--out", s.dir.string()}).code == 0);
  const SignalFile f = read_signal_csv_file((s.dir / "rabi.csv").string());
  std::vector<double> times;
  for (int j = 0; j < 11; ++j) times.push_back(400e-9 * j / 10.0);
  const SignalMap lib = rabi_map(m.params, m.field(), m.drive, MwTransition::purple, f.map.frequency, times);
  REQUIRE(f.map.signal.rows() == 3);
  REQUIRE(f.map.signal.cols() == 11);
  CHECK((f.map.signal - lib.signal).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(f.meta.at("transition") == "purple");
}

TEST_CASE("fit command reads datasets relative to the config") {
  Scratch s("fit");
  ModelPoint m = fitted_model();
  const TransitionDrive td = transition_drive(m.params, m.field(), m.drive, MwTransition::purple);
  ExperimentSpec spec;
  spec.transition = MwTransition::purple;
  spec.freq_grid = {td.frequency - 1e6, td.frequency, td.frequency + 1e6};
  for (int j = 0; j < 12; ++j) spec.time_grid.push_back(j * 40e-9);
  {
    std::ofstream out(s.dir / "purple.csv");
    write_signal_csv(out, simulate_experiment(m, spec), experiment_meta(spec));
  }
  const json cfg = {{"command", "fit"},
                    {"field_hz", {{"bx", m.bx}, {"by", 0.0}, {"bz", m.bz}}},
                    {"options",
                     {{"datasets", {"purple.csv"}},
                      {"free", {{{"name", "drive_bx"}, {"initial", 1.02 * m.drive.bx}}}},
                      {"max_evaluations", 200},
                      {"restarts", 0}}}};
  const auto o = run_cli({"--config", s.config(cfg).string(), "--out", (s.dir / "out").string()});
  REQUIRE(o.code == 0);
  const json j = json::parse(slurp(s.dir / "out" / "fit_report.json"));
  CHECK(j["parameters"][0]["name"] == "drive_bx");
  CHECK(j["parameters"][0]["value"].get<double>() == doctest::Approx(m.drive.bx).epsilon(1e-3));
  CHECK(j["loss"].get<double>() >= 0.0);
}

TEST_CASE("executable entry point and output directory precedence") {
  Scratch s("exe");
  const fs::path cfg = s.config({{"command", "levels"}, {"options", {{"manifold", "ground"}}}});
  const std::string exe = SNVSIM_EXE;
  const std::string env_dir = (s.dir / "env").string();
  const std::string cmd = std::string(cli::kOutDirEnv) + "=" + env_dir + " " + exe + " --config " + cfg.string() +
                          " > " + (s.dir / "stdout").string() + " 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(s.dir / "env" / "levels.json"));
  const std::string bad = exe + " --config " + (s.dir / "absent.json").string() + " 2> " + (s.dir / "err").string();
  const int status = std::system(bad.c_str());
  CHECK(WEXITSTATUS(status) == cli::kIo);
  CHECK(json::parse(slurp(s.dir / "err"))["exit_code"] == cli::kIo);
}
