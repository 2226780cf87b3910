#include "rpna/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "json_io.hpp"

namespace rpna {

std::string svg_number(double v) {
  if (!std::isfinite(v)) v = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string svg_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string_view palette_color(std::size_t index) {
  static constexpr std::array<std::string_view, 10> colors = {
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
      "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[index % colors.size()];
}

std::string heat_color(double value) {
  const double t = std::clamp(std::isfinite(value) ? value : 0.0, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(49 + t * (215 - 49)));
  const int g = static_cast<int>(std::lround(130 + t * (48 - 130)));
  const int b = static_cast<int>(std::lround(189 + t * (39 - 189)));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

SvgDocument::SvgDocument(double width, double height) : width_(width), height_(height) {}

void SvgDocument::line(double x1, double y1, double x2, double y2, std::string_view stroke,
                       double width) {
  body_ += "<line x1=\"" + svg_number(x1) + "\" y1=\"" + svg_number(y1) + "\" x2=\"" +
           svg_number(x2) + "\" y2=\"" + svg_number(y2) + "\" stroke=\"" + std::string(stroke) +
           "\" stroke-width=\"" + svg_number(width) + "\"/>\n";
}

void SvgDocument::rect(double x, double y, double w, double h, std::string_view fill,
                       std::string_view stroke) {
  body_ += "<rect x=\"" + svg_number(x) + "\" y=\"" + svg_number(y) + "\" width=\"" +
           svg_number(w) + "\" height=\"" + svg_number(h) + "\" fill=\"" + std::string(fill) +
           "\" stroke=\"" + std::string(stroke) + "\"/>\n";
}

void SvgDocument::circle(double cx, double cy, double r, std::string_view fill) {
  body_ += "<circle cx=\"" + svg_number(cx) + "\" cy=\"" + svg_number(cy) + "\" r=\"" +
           svg_number(r) + "\" fill=\"" + std::string(fill) + "\"/>\n";
}

void SvgDocument::polyline(const std::vector<std::pair<double, double>>& points,
                           std::string_view stroke, double width) {
  std::string pts;
  for (const auto& [x, y] : points) {
    if (!pts.empty()) pts += ' ';
    pts += svg_number(x) + "," + svg_number(y);
  }
  body_ += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + std::string(stroke) +
           "\" stroke-width=\"" + svg_number(width) + "\"/>\n";
}

void SvgDocument::text(double x, double y, std::string_view content, double size,
                       std::string_view anchor, double rotate) {
  body_ += "<text x=\"" + svg_number(x) + "\" y=\"" + svg_number(y) + "\" font-size=\"" +
           svg_number(size) + "\" font-family=\"sans-serif\" text-anchor=\"" +
           std::string(anchor) + "\"";
  if (rotate != 0.0) {
    body_ += " transform=\"rotate(" + svg_number(rotate) + " " + svg_number(x) + " " +
             svg_number(y) + ")\"";
  }
  body_ += ">" + svg_escape(content) + "</text>\n";
}

std::string SvgDocument::str() const {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg_number(width_) +
         "\" height=\"" + svg_number(height_) + "\" viewBox=\"0 0 " + svg_number(width_) + " " +
         svg_number(height_) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n" +
         body_ + "</svg>\n";
}

void SvgDocument::write(const std::filesystem::path& path) const { write_text_file(path, str()); }

}  // namespace rpna
