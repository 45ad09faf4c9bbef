// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace dsal {

/// Minimal chart writer producing a self-contained SVG. Series are given in
/// data coordinates; render() lays out axes, ticks, a legend and the
/// elements. Enough for a learning-curve plot and a scatter, nothing more.
class Plot {
 public:
  Plot(std::string title, std::string x_label, std::string y_label);

  /// Fixes the data range. Call before render; series never extend it.
  void set_range(double x0, double x1, double y0, double y1);

  /// Filled min-max band between lo and hi along xs.
  void band(const std::vector<double>& xs, const std::vector<double>& lo,
            const std::vector<double>& hi, const std::string& color);

  void line(const std::vector<double>& xs, const std::vector<double>& ys,
            const std::string& color, const std::string& legend_name, bool dashed = false);

  void points(const std::vector<double>& xs, const std::vector<double>& ys,
              const std::string& color, const std::string& legend_name);

  /// Horizontal dashed reference line across the full width.
  void hline(double y, const std::string& color, const std::string& legend_name);

  /// Free-text note drawn under the title.
  void annotation(const std::string& text);

  std::string render() const;

 private:
  struct Series {
    enum class Kind { band, line, dashed_line, points, hline } kind;
    std::vector<double> xs, ys, ys2;
    std::string color;
    std::string name;  // empty: keep out of the legend
  };

  std::string title_, x_label_, y_label_, note_;
  double x0_ = 0, x1_ = 1, y0_ = 0, y1_ = 1;
  bool has_range_ = false;
  std::vector<Series> series_;
};

}  // namespace dsal
