#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rpna {

/// Tiny SVG builder. Coordinates are printed with two decimals so output is
/// byte-stable across runs.
class SvgDocument {
 public:
  SvgDocument(double width, double height);

  void line(double x1, double y1, double x2, double y2, std::string_view stroke = "#000",
            double width = 1.0);
  void rect(double x, double y, double w, double h, std::string_view fill,
            std::string_view stroke = "none");
  void circle(double cx, double cy, double r, std::string_view fill);
  void polyline(const std::vector<std::pair<double, double>>& points, std::string_view stroke,
                double width = 1.5);
  /// anchor is one of start, middle, end.
  void text(double x, double y, std::string_view content, double size = 10.0,
            std::string_view anchor = "start", double rotate = 0.0);

  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  double width_;
  double height_;
  std::string body_;
};

std::string svg_number(double v);
std::string svg_escape(std::string_view text);

/// Fixed palette indexed modulo its size.
std::string_view palette_color(std::size_t index);

/// Blue (0) to red (1) ramp for heatmaps; values are clamped.
std::string heat_color(double value);

}  // namespace rpna
