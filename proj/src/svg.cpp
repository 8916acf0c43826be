#include <srhm/svg.hpp>

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace srhm {

std::string svg_coord(double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("non-finite coordinate");
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed, 2);
  return std::string(buf, r.ptr);
}

std::string fmt_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

void SvgCanvas::line(double x1, double y1, double x2, double y2,
                     const std::string& stroke, double stroke_width,
                     const std::string& dash) {
  body += "<line x1=\"" + svg_coord(x1) + "\" y1=\"" + svg_coord(y1) +
          "\" x2=\"" + svg_coord(x2) + "\" y2=\"" + svg_coord(y2) +
          "\" stroke=\"" + stroke + "\" stroke-width=\"" +
          svg_coord(stroke_width) + "\"";
  if (!dash.empty()) body += " stroke-dasharray=\"" + dash + "\"";
  body += "/>\n";
}

void SvgCanvas::polyline(const std::vector<std::pair<double, double>>& pts,
                         const std::string& stroke, double stroke_width) {
  body += "<polyline fill=\"none\" stroke=\"" + stroke +
          "\" stroke-width=\"" + svg_coord(stroke_width) + "\" points=\"";
  for (size_t i = 0; i < pts.size(); ++i) {
    if (i) body += ' ';
    body += svg_coord(pts[i].first) + "," + svg_coord(pts[i].second);
  }
  body += "\"/>\n";
}

void SvgCanvas::circle(double cx, double cy, double r, const std::string& fill,
                       double opacity) {
  body += "<circle cx=\"" + svg_coord(cx) + "\" cy=\"" + svg_coord(cy) +
          "\" r=\"" + svg_coord(r) + "\" fill=\"" + fill + "\"";
  if (opacity < 1.0) body += " fill-opacity=\"" + svg_coord(opacity) + "\"";
  body += "/>\n";
}

void SvgCanvas::rect(double x, double y, double w, double h,
                     const std::string& fill) {
  body += "<rect x=\"" + svg_coord(x) + "\" y=\"" + svg_coord(y) +
          "\" width=\"" + svg_coord(w) + "\" height=\"" + svg_coord(h) +
          "\" fill=\"" + fill + "\"/>\n";
}

void SvgCanvas::text(double x, double y, const std::string& s, double size,
                     const std::string& anchor, const std::string& fill) {
  std::string esc;
  for (char c : s) {
    if (c == '&')
      esc += "&amp;";
    else if (c == '<')
      esc += "&lt;";
    else if (c == '>')
      esc += "&gt;";
    else
      esc += c;
  }
  body += "<text x=\"" + svg_coord(x) + "\" y=\"" + svg_coord(y) +
          "\" font-family=\"sans-serif\" font-size=\"" + svg_coord(size) +
          "\" text-anchor=\"" + anchor + "\" fill=\"" + fill + "\">" + esc +
          "</text>\n";
}

std::string SvgCanvas::render() const {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         svg_coord(width) + "\" height=\"" + svg_coord(height) +
         "\" viewBox=\"0 0 " + svg_coord(width) + " " + svg_coord(height) +
         "\">\n<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n" +
         body + "</svg>\n";
}

}  // namespace srhm
