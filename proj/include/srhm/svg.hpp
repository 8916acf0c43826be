#pragma once

#include <string>
#include <utility>
#include <vector>

namespace srhm {

// Minimal deterministic SVG writer: fixed-precision coordinates via
// std::to_chars, no timestamps, elements appear in call order, so equal call
// sequences give byte-identical files.
struct SvgCanvas {
  double width = 640, height = 480;
  std::string body;

  SvgCanvas(double w, double h) : width(w), height(h) {}

  void line(double x1, double y1, double x2, double y2,
            const std::string& stroke, double stroke_width = 1.0,
            const std::string& dash = "");
  void polyline(const std::vector<std::pair<double, double>>& pts,
                const std::string& stroke, double stroke_width = 1.0);
  void circle(double cx, double cy, double r, const std::string& fill,
              double opacity = 1.0);
  void rect(double x, double y, double w, double h, const std::string& fill);
  // anchor: "start" | "middle" | "end"
  void text(double x, double y, const std::string& s, double size = 12.0,
            const std::string& anchor = "start",
            const std::string& fill = "#333333");

  std::string render() const;
};

// fixed two-decimal coordinate formatting used by the canvas
std::string svg_coord(double x);

// shortest round-trip decimal form, used by every CSV the harness writes
std::string fmt_double(double x);

}  // namespace srhm
