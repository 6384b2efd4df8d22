#include "bidhom/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace bidhom {

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string csv_quote(const std::string& field) {
  bool needs = field.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

std::string format_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string format_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

void write_csv(const std::vector<std::vector<std::string>>& rows, const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << csv_quote(row[i]);
      if (i + 1 < row.size()) out << ',';
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

void write_svg_plot(const std::vector<SvgSeries>& series, const std::string& path,
                    const std::string& xlabel, const std::string& ylabel, bool loglog) {
  const double W = 640, H = 480, ml = 70, mr = 20, mt = 20, mb = 50;
  const double px0 = ml, px1 = W - mr, py0 = H - mb, py1 = mt;

  // data ranges (log-log drops nonpositive points)
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      if (loglog && (x <= 0 || y <= 0)) continue;
      double xv = loglog ? std::log10(x) : x;
      double yv = loglog ? std::log10(y) : y;
      xmin = std::min(xmin, xv);
      xmax = std::max(xmax, xv);
      ymin = std::min(ymin, yv);
      ymax = std::max(ymax, yv);
    }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax - xmin < 1e-12) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  auto X = [&](double vx) { return px0 + (vx - xmin) / (xmax - xmin) * (px1 - px0); };
  auto Y = [&](double vy) { return py0 + (vy - ymin) / (ymax - ymin) * (py1 - py0); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                 "#8c564b"};

  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
         "viewBox=\"0 0 640 480\">\n"
      << "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  // axes
  out << "<line x1=\"" << format_coord(px0) << "\" y1=\"" << format_coord(py0) << "\" x2=\""
      << format_coord(px1) << "\" y2=\"" << format_coord(py0)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  out << "<line x1=\"" << format_coord(px0) << "\" y1=\"" << format_coord(py0) << "\" x2=\""
      << format_coord(px0) << "\" y2=\"" << format_coord(py1)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  // ticks: 5 per axis
  for (int i = 0; i <= 4; ++i) {
    double fx = xmin + (xmax - xmin) * i / 4.0;
    double fy = ymin + (ymax - ymin) * i / 4.0;
    double tx = X(fx), ty = Y(fy);
    out << "<line x1=\"" << format_coord(tx) << "\" y1=\"" << format_coord(py0) << "\" x2=\""
        << format_coord(tx) << "\" y2=\"" << format_coord(py0 + 5)
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << format_coord(tx) << "\" y=\"" << format_coord(py0 + 18)
        << "\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\">"
        << format_tick(loglog ? std::pow(10.0, fx) : fx) << "</text>\n";
    out << "<line x1=\"" << format_coord(px0 - 5) << "\" y1=\"" << format_coord(ty) << "\" x2=\""
        << format_coord(px0) << "\" y2=\"" << format_coord(ty)
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << format_coord(px0 - 8) << "\" y=\"" << format_coord(ty + 4)
        << "\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">"
        << format_tick(loglog ? std::pow(10.0, fy) : fy) << "</text>\n";
  }
  out << "<text x=\"" << format_coord((px0 + px1) / 2) << "\" y=\"" << format_coord(H - 12)
      << "\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\">" << xlabel
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << format_coord((py0 + py1) / 2)
      << "\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "transform=\"rotate(-90 16 "
      << format_coord((py0 + py1) / 2) << ")\">" << ylabel << "</text>\n";

  int ci = 0;
  for (const auto& s : series) {
    std::string pts;
    for (auto [x, y] : s.points) {
      if (loglog && (x <= 0 || y <= 0)) continue;
      double vx = loglog ? std::log10(x) : x;
      double vy = loglog ? std::log10(y) : y;
      pts += format_coord(X(vx)) + "," + format_coord(Y(vy)) + " ";
    }
    const char* color = colors[ci % 6];
    if (!pts.empty()) {
      pts.pop_back();
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
          << pts << "\"/>\n";
    }
    out << "<text x=\"" << format_coord(px1 - 6) << "\" y=\"" << format_coord(py1 + 14 + 14 * ci)
        << "\" font-size=\"12\" text-anchor=\"end\" font-family=\"sans-serif\" fill=\"" << color
        << "\">" << s.label << "</text>\n";
    ++ci;
  }
  out << "</svg>\n";
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace bidhom
