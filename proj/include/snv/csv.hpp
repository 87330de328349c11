#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "snv/dynamics.hpp"

namespace snv {

inline constexpr std::string_view kVersion = "0.1.0";

/// 64-bit FNV-1a of a byte string, as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

struct Provenance {
  std::string version{kVersion};
  std::string config_hash;
};

/// "# snvsim <version>" and "# config_hash <hash>" comment lines.
void write_provenance(std::ostream& os, const Provenance& p);

/// %.17g; round-trips doubles, prints inf/nan.
std::string format_number(double v);

/// Provenance comments, header row, then the rows as given.
void write_table_csv(std::ostream& os, const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows,
                     const Provenance* prov = nullptr);

using CsvMeta = std::map<std::string, std::string>;

/// Comment header (provenance, then "# key: value" metadata), the
/// `freq_hz,duration_s,signal` header and one row per grid point.
void write_signal_csv(std::ostream& os, const SignalMap& map, const CsvMeta& meta = {},
                      const Provenance* prov = nullptr);

struct SignalFile {
  CsvMeta meta;
  SignalMap map;
};

/// Parses the signal schema. Errors (InputError) carry `source:line` and name
/// the offending column or grid coordinates.
SignalFile read_signal_csv(std::istream& is, const std::string& source = "<stream>");
SignalFile read_signal_csv_file(const std::string& path);

}  // namespace snv
