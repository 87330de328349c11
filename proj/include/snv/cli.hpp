#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "snv/error.hpp"

namespace snv::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kInput = 2, kNumerical = 3, kIo = 4 };

/// Config value rejected; `path` is a JSON pointer into the config.
class SchemaError : public InputError {
 public:
  SchemaError(std::string path, const std::string& what)
      : InputError(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr const char* kOutDirEnv = "SNVSIM_OUT_DIR";

const std::vector<std::string>& commands();

/// Config with command-line overrides applied and defaults made explicit
/// where they matter for the hash. Output location and thread count are
/// left out: they do not change results.
nlohmann::json effective_config(const nlohmann::json& config);
std::string config_hash(const nlohmann::json& effective);

/// Runs one command. `config_dir` resolves relative dataset paths. Returns
/// the written files. Throws SchemaError, InputError, NumericalError, IoError.
std::vector<std::string> execute(const nlohmann::json& config, const std::string& out_dir,
                                 const std::string& config_dir = ".");

/// Full command line: flags --config, --out, --seed, --threads. Errors go to
/// `err` as one JSON object; the return value is the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace snv::cli
