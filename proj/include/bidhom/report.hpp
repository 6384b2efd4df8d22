#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bidhom {

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

std::string format_g17(double v);

/// RFC-style CSV: fields containing commas, quotes, or newlines are quoted
/// with doubled inner quotes; rows end with \n. Byte-deterministic.
void write_csv(const std::vector<std::vector<std::string>>& rows, const std::string& path);

struct SvgSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

/// Static standalone SVG plot (linear or log-log) with axes, tick labels and
/// one polyline per series. Empty input produces axes only. Deterministic.
void write_svg_plot(const std::vector<SvgSeries>& series, const std::string& path,
                    const std::string& xlabel, const std::string& ylabel, bool loglog);

}  // namespace bidhom
