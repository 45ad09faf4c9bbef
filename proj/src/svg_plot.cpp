// SPDX-License-Identifier: Apache-2.0
#include "dsal/svg_plot.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace dsal {

namespace {

constexpr int kWidth = 720, kHeight = 480;
constexpr int kLeft = 70, kRight = 24, kTop = 48, kBottom = 56;

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

Plot::Plot(std::string title, std::string x_label, std::string y_label)
    : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

void Plot::set_range(double x0, double x1, double y0, double y1) {
  if (x0 == x1) {
    x0 -= 1;
    x1 += 1;
  }
  if (y0 == y1) {
    y0 -= 1;
    y1 += 1;
  }
  x0_ = x0;
  x1_ = x1;
  y0_ = y0;
  y1_ = y1;
  has_range_ = true;
}

void Plot::band(const std::vector<double>& xs, const std::vector<double>& lo,
                const std::vector<double>& hi, const std::string& color) {
  if (xs.size() != lo.size() || xs.size() != hi.size())
    throw std::invalid_argument("Plot::band: length mismatch");
  series_.push_back({Series::Kind::band, xs, lo, hi, color, ""});
}

void Plot::line(const std::vector<double>& xs, const std::vector<double>& ys,
                const std::string& color, const std::string& legend_name, bool dashed) {
  if (xs.size() != ys.size()) throw std::invalid_argument("Plot::line: length mismatch");
  series_.push_back({dashed ? Series::Kind::dashed_line : Series::Kind::line, xs, ys, {},
                     color, legend_name});
}

void Plot::points(const std::vector<double>& xs, const std::vector<double>& ys,
                  const std::string& color, const std::string& legend_name) {
  if (xs.size() != ys.size()) throw std::invalid_argument("Plot::points: length mismatch");
  series_.push_back({Series::Kind::points, xs, ys, {}, color, legend_name});
}

void Plot::hline(double y, const std::string& color, const std::string& legend_name) {
  series_.push_back({Series::Kind::hline, {}, {y}, {}, color, legend_name});
}

void Plot::annotation(const std::string& text) { note_ = text; }

std::string Plot::render() const {
  if (!has_range_) throw std::logic_error("Plot::render: set_range was never called");
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x0_) / (x1_ - x0_) * pw; };
  auto sy = [&](double y) { return kTop + ph - (y - y0_) / (y1_ - y0_) * ph; };

  std::string s;
  char buf[256];
  auto emit = [&](const char* fmt_str, auto... args) {
    std::snprintf(buf, sizeof(buf), fmt_str, args...);
    s += buf;
  };

  emit("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
       "viewBox=\"0 0 %d %d\">\n",
       kWidth, kHeight, kWidth, kHeight);
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  emit("<text x=\"%d\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" "
       "text-anchor=\"middle\" font-weight=\"bold\">%s</text>\n",
       kWidth / 2, esc(title_).c_str());
  if (!note_.empty())
    emit("<text x=\"%d\" y=\"40\" font-family=\"sans-serif\" font-size=\"12\" "
         "text-anchor=\"middle\" fill=\"#444\">%s</text>\n",
         kWidth / 2, esc(note_).c_str());

  // Frame, ticks and grid.
  emit("<rect x=\"%d\" y=\"%d\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" "
       "stroke=\"#333\"/>\n",
       kLeft, kTop, pw, ph);
  const int nticks = 5;
  for (int i = 0; i <= nticks; ++i) {
    const double fx = x0_ + (x1_ - x0_) * i / nticks;
    const double fy = y0_ + (y1_ - y0_) * i / nticks;
    const double px = sx(fx), py = sy(fy);
    emit("<line x1=\"%.1f\" y1=\"%d\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n", px,
         kTop, px, kTop + ph);
    emit("<line x1=\"%d\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n", kLeft,
         py, kLeft + pw, py);
    emit("<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\" "
         "text-anchor=\"middle\">%s</text>\n",
         px, kTop + ph + 16, fmt(fx).c_str());
    emit("<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\" "
         "text-anchor=\"end\">%s</text>\n",
         kLeft - 6.0, py + 4, fmt(fy).c_str());
  }
  emit("<text x=\"%.1f\" y=\"%d\" font-family=\"sans-serif\" font-size=\"13\" "
       "text-anchor=\"middle\">%s</text>\n",
       kLeft + pw / 2, kHeight - 12, esc(x_label_).c_str());
  emit("<text x=\"18\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"13\" "
       "text-anchor=\"middle\" transform=\"rotate(-90 18 %.1f)\">%s</text>\n",
       kTop + ph / 2, kTop + ph / 2, esc(y_label_).c_str());

  auto poly_points = [&](const std::vector<double>& xs, const std::vector<double>& ys) {
    std::string pts;
    for (size_t i = 0; i < xs.size(); ++i) {
      char p[64];
      std::snprintf(p, sizeof(p), "%.2f,%.2f ", sx(xs[i]), sy(ys[i]));
      pts += p;
    }
    return pts;
  };

  for (const Series& sr : series_) {
    switch (sr.kind) {
      case Series::Kind::band: {
        std::string pts = poly_points(sr.xs, sr.ys);
        for (size_t i = sr.xs.size(); i-- > 0;) {
          char p[64];
          std::snprintf(p, sizeof(p), "%.2f,%.2f ", sx(sr.xs[i]), sy(sr.ys2[i]));
          pts += p;
        }
        emit("<polygon points=\"%s\" fill=\"%s\" fill-opacity=\"0.15\" stroke=\"none\"/>\n",
             pts.c_str(), sr.color.c_str());
        break;
      }
      case Series::Kind::line:
      case Series::Kind::dashed_line:
        emit("<polyline points=\"%s\" fill=\"none\" stroke=\"%s\" stroke-width=\"2\"%s/>\n",
             poly_points(sr.xs, sr.ys).c_str(), sr.color.c_str(),
             sr.kind == Series::Kind::dashed_line ? " stroke-dasharray=\"6 4\"" : "");
        break;
      case Series::Kind::points:
        for (size_t i = 0; i < sr.xs.size(); ++i)
          emit("<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.6\" fill=\"%s\" "
               "fill-opacity=\"0.65\"/>\n",
               sx(sr.xs[i]), sy(sr.ys[i]), sr.color.c_str());
        break;
      case Series::Kind::hline:
        emit("<line x1=\"%d\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" "
             "stroke-width=\"2\" stroke-dasharray=\"6 4\"/>\n",
             kLeft, sy(sr.ys[0]), kLeft + pw, sy(sr.ys[0]), sr.color.c_str());
        break;
    }
  }

  // Legend, top-right corner of the plot area.
  int row = 0;
  for (const Series& sr : series_) {
    if (sr.name.empty()) continue;
    const double lx = kLeft + pw - 190, ly = kTop + 16 + 18 * row;
    if (sr.kind == Series::Kind::points)
      emit("<circle cx=\"%.1f\" cy=\"%.1f\" r=\"3\" fill=\"%s\"/>\n", lx + 13, ly - 4,
           sr.color.c_str());
    else
      emit("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" "
           "stroke-width=\"2\"%s/>\n",
           lx, ly - 4, lx + 26, ly - 4, sr.color.c_str(),
           sr.kind == Series::Kind::line ? "" : " stroke-dasharray=\"6 4\"");
    emit("<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" "
         "font-size=\"12\">%s</text>\n",
         lx + 32, ly, esc(sr.name).c_str());
    ++row;
  }
  s += "</svg>\n";
  return s;
}

}  // namespace dsal
