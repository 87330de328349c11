#include "snv/csv.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "snv/error.hpp"

namespace snv {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string fmt(double v) { return format_number(v); }

}  // namespace

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_table_csv(std::ostream& os, const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows, const Provenance* prov) {
  if (prov) write_provenance(os, *prov);
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw InputError("table row width differs from header");
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << '\n';
  }
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_provenance(std::ostream& os, const Provenance& p) {
  os << "# snvsim " << p.version << "\n# config_hash " << p.config_hash << "\n";
}

void write_signal_csv(std::ostream& os, const SignalMap& map, const CsvMeta& meta,
                      const Provenance* prov) {
  map.validate();
  if (prov) write_provenance(os, *prov);
  for (const auto& [k, v] : meta) os << "# " << k << ": " << v << "\n";
  os << "freq_hz,duration_s,signal\n";
  for (std::size_t i = 0; i < map.frequency.size(); ++i)
    for (std::size_t j = 0; j < map.duration.size(); ++j)
      os << fmt(map.frequency[i]) << ',' << fmt(map.duration[j]) << ',' << fmt(map.signal(i, j)) << '\n';
}

SignalFile read_signal_csv(std::istream& is, const std::string& source) {
  SignalFile out;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) -> InputError {
    return InputError(source + ":" + std::to_string(lineno) + ": " + msg);
  };

  std::vector<std::string> header;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const std::string body = trim(std::string_view(t).substr(1));
      const auto colon = body.find(':');
      if (colon != std::string::npos) out.meta[trim(body.substr(0, colon))] = trim(body.substr(colon + 1));
      continue;
    }
    header = split(t);
    break;
  }
  if (header.empty()) throw fail("missing header row");
  std::array<int, 3> col{-1, -1, -1};
  const std::array<const char*, 3> names{"freq_hz", "duration_s", "signal"};
  for (int c = 0; c < 3; ++c) {
    const auto it = std::find(header.begin(), header.end(), names[c]);
    if (it == header.end()) throw fail(std::string("missing header column '") + names[c] + "'");
    col[c] = static_cast<int>(it - header.begin());
  }

  struct Row {
    double f, d, s;
    int line;
  };
  std::vector<Row> rows;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto cells = split(t);
    if (cells.size() != header.size())
      throw fail("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(cells.size()));
    std::array<double, 3> v{};
    for (int c = 0; c < 3; ++c) {
      const std::string& cell = cells[col[c]];
      const char* b = cell.data();
      const char* e = b + cell.size();
      const auto [ptr, ec] = std::from_chars(b, e, v[c]);
      if (ec != std::errc() || ptr != e) throw fail(std::string("malformed value in column '") + names[c] + "'");
      if (!std::isfinite(v[c])) throw fail(std::string("non-finite value in column '") + names[c] + "'");
    }
    rows.push_back({v[0], v[1], v[2], lineno});
  }
  if (rows.empty()) throw fail("no data rows");

  std::vector<double> fs, ds;
  for (const auto& r : rows) {
    fs.push_back(r.f);
    ds.push_back(r.d);
  }
  std::sort(fs.begin(), fs.end());
  fs.erase(std::unique(fs.begin(), fs.end()), fs.end());
  std::sort(ds.begin(), ds.end());
  ds.erase(std::unique(ds.begin(), ds.end()), ds.end());

  Eigen::MatrixXd sig = Eigen::MatrixXd::Constant(fs.size(), ds.size(), std::nan(""));
  std::vector<int> seen(fs.size() * ds.size(), 0);
  for (const auto& r : rows) {
    const auto i = std::lower_bound(fs.begin(), fs.end(), r.f) - fs.begin();
    const auto j = std::lower_bound(ds.begin(), ds.end(), r.d) - ds.begin();
    if (seen[i * ds.size() + j]) {
      lineno = r.line;
      throw fail("duplicate grid point freq_hz=" + fmt(r.f) + " duration_s=" + fmt(r.d));
    }
    seen[i * ds.size() + j] = r.line;
    sig(i, j) = r.s;
  }
  for (std::size_t i = 0; i < fs.size(); ++i)
    for (std::size_t j = 0; j < ds.size(); ++j)
      if (!seen[i * ds.size() + j])
        throw InputError(source + ": non-rectangular grid, missing point freq_hz=" + fmt(fs[i]) +
                         " duration_s=" + fmt(ds[j]));
  out.map = SignalMap{fs, ds, sig};
  return out;
}

SignalFile read_signal_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return read_signal_csv(in, path);
}

}  // namespace snv
