#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/crc.hpp>

#include "forkjoin/metrics.hpp"

namespace forkjoin {

// Fixed 17-significant-digit rendering; round-trips every double exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string crc32_hex(const std::string& bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", crc.checksum());
  return buf;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << bytes;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline constexpr const char* kCcdfHeader = "tau,empirical_survival,ci_halfwidth,bound_survival";

// Four-column CCDF table: tau, empirical_survival, ci_halfwidth, bound_survival.
inline std::string ccdf_csv(const CcdfEstimate& ccdf, const std::vector<double>& bound) {
  std::ostringstream out;
  out << kCcdfHeader << '\n';
  for (std::size_t i = 0; i < ccdf.grid.size(); ++i)
    out << format_double(ccdf.grid[i]) << ',' << format_double(ccdf.survival[i]) << ','
        << format_double(ccdf.ci_halfwidth[i]) << ',' << format_double(bound[i]) << '\n';
  return out.str();
}

struct CcdfTable {
  std::vector<double> tau;
  std::vector<double> survival;
  std::vector<double> ci_halfwidth;
  std::vector<double> bound;
};

inline CcdfTable parse_ccdf_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCcdfHeader)
    throw std::runtime_error("not a CCDF table: unexpected header '" + line + "'");
  CcdfTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    double v[4];
    for (double& x : v) {
      if (!std::getline(row, cell, ',')) throw std::runtime_error("short CCDF row: " + line);
      x = std::stod(cell);
    }
    t.tau.push_back(v[0]);
    t.survival.push_back(v[1]);
    t.ci_halfwidth.push_back(v[2]);
    t.bound.push_back(v[3]);
  }
  return t;
}

}  // namespace forkjoin
