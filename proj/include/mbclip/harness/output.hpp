#pragma once

// CSV/JSON emission. Floats use 17 significant digits so values round-trip.
// Files are written to a sibling temp name and renamed into place.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mbclip/optimizer.hpp"

namespace mbclip::harness {

inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Short form for console tables.
inline std::string fmt6(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

inline void write_atomically(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline constexpr const char* kRunCsvHeader =
    "t,loss,grad_norm,clip_bound,dragger_count,zero_rho_event\n";

inline std::string run_csv(const RunSummary& s) {
  std::string out = kRunCsvHeader;
  for (const auto& r : s.records) {
    out += std::to_string(r.t);
    out += ',';
    out += fmt17(r.loss);
    out += ',';
    out += fmt17(r.true_grad_norm);
    out += ',';
    if (r.clip_bound) out += fmt17(*r.clip_bound);
    out += ',';
    out += std::to_string(r.dragger_count);
    out += ',';
    out += r.zero_rho_event ? '1' : '0';
    out += '\n';
  }
  return out;
}

/// Plain comma-joined rows; cells are already formatted.
inline std::string csv_table(const std::vector<std::string>& header,
                             const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out.str();
}

/// Space-padded columns for the console.
inline std::string text_table(const std::vector<std::string>& header,
                              const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) {
      width[i] = std::max(width[i], r[i].size());
    }
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out << (i ? "  " : "") << cells[i];
      if (i + 1 < cells.size()) out << std::string(width[i] - cells[i].size(), ' ');
    }
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out.str();
}

}  // namespace mbclip::harness
