#pragma once

// Trace persistence: CSV rows at full double precision and the two-column plot data.

#include "higgsflow/flow.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace higgsflow {

inline constexpr const char* kTraceHeader = "t,L,dev_sup,dev_l2,min_eig,deg_drift,dt";

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace detail

inline std::string trace_csv(const FlowTrace& trace) {
  std::string out = std::string(kTraceHeader) + "\n";
  for (const auto& r : trace.rows) {
    out += detail::fmt17(r.t) + ',' + detail::fmt17(r.L) + ',' + detail::fmt17(r.dev_sup) + ',' +
           detail::fmt17(r.dev_l2) + ',' + detail::fmt17(r.min_eig) + ',' + detail::fmt17(r.deg_drift) +
           ',' + detail::fmt17(r.dt) + '\n';
  }
  return out;
}

inline std::string plot_data(const FlowTrace& trace) {
  std::string out;
  for (const auto& r : trace.rows) out += detail::fmt17(r.t) + ' ' + detail::fmt17(r.dev_sup) + '\n';
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = detail::open_for_write(path);
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::vector<TraceRow> parse_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader)
    throw IoError("trace csv: missing or unexpected header");
  std::vector<TraceRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    double v[7];
    std::istringstream fields(line);
    std::string cell;
    int k = 0;
    while (std::getline(fields, cell, ',')) {
      if (k >= 7) throw IoError("trace csv line " + std::to_string(lineno) + ": too many fields");
      // strtod rather than stod: subnormal values set ERANGE but are still exact
      char* end = nullptr;
      v[k] = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v[k]))
        throw IoError("trace csv line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      ++k;
    }
    if (k != 7) throw IoError("trace csv line " + std::to_string(lineno) + ": expected 7 fields");
    rows.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6]});
  }
  return rows;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace higgsflow
