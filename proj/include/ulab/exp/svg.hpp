#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "ulab/core/error.hpp"

namespace ulab::exp {

// Small deterministic SVG 1.1 writer: fixed float formatting, no timestamps,
// same input bytes in means same output bytes out.
class Svg {
 public:
  Svg(double width, double height) : w_(width), h_(height) {
    buf_ += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    buf_ += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + num(w_) +
            "\" height=\"" + num(h_) + "\" viewBox=\"0 0 " + num(w_) + " " + num(h_) + "\">\n";
    buf_ += "<rect x=\"0\" y=\"0\" width=\"" + num(w_) + "\" height=\"" + num(h_) +
            "\" fill=\"white\"/>\n";
  }

  static std::string num(double v) {
    char b[32];
    std::snprintf(b, sizeof(b), "%.2f", v);
    return b;
  }

  void line(double x1, double y1, double x2, double y2, const std::string& color,
            double width = 1.0) {
    buf_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" +
            num(y2) + "\" stroke=\"" + color + "\" stroke-width=\"" + num(width) + "\"/>\n";
  }

  void circle(double x, double y, double r, const std::string& color) {
    buf_ += "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"" + num(r) + "\" fill=\"" +
            color + "\"/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& color) {
    buf_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" +
            num(h) + "\" fill=\"" + color + "\"/>\n";
  }

  void star(double x, double y, double r, const std::string& color) {
    buf_ += "<path d=\"M " + num(x - r) + " " + num(y) + " L " + num(x + r) + " " + num(y) +
            " M " + num(x) + " " + num(y - r) + " L " + num(x) + " " + num(y + r) + " M " +
            num(x - 0.7 * r) + " " + num(y - 0.7 * r) + " L " + num(x + 0.7 * r) + " " +
            num(y + 0.7 * r) + " M " + num(x - 0.7 * r) + " " + num(y + 0.7 * r) + " L " +
            num(x + 0.7 * r) + " " + num(y - 0.7 * r) + "\" stroke=\"" + color +
            "\" stroke-width=\"1.50\" fill=\"none\"/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                double width = 1.5) {
    if (pts.empty()) return;
    buf_ += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" + num(width) +
            "\" points=\"";
    for (const auto& [x, y] : pts) buf_ += num(x) + "," + num(y) + " ";
    buf_ += "\"/>\n";
  }

  void text(double x, double y, const std::string& s, double size = 10,
            const std::string& anchor = "start") {
    buf_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"monospace\" font-size=\"" +
            num(size) + "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>\n";
  }

  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '<') out += "&lt;";
      else if (c == '>') out += "&gt;";
      else if (c == '&') out += "&amp;";
      else out.push_back(c);
    }
    return out;
  }

  std::string finish() {
    std::string out = buf_ + "</svg>\n";
    return out;
  }

  void save(const std::string& path) {
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    ULAB_CHECK(f.good(), "cannot open svg for writing: " + path);
    const std::string out = finish();
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
  }

 private:
  double w_, h_;
  std::string buf_;
};

// Shared axes frame mapping [0,1]x[0,1] data space onto the plot area.
struct Frame {
  double x0 = 55, y0 = 20, w = 320, h = 260;
  double px(double x) const { return x0 + x * w; }
  double py(double y) const { return y0 + (1.0 - y) * h; }

  void draw(Svg& svg, const std::string& x_label, const std::string& y_label) const {
    svg.line(x0, y0 + h, x0 + w, y0 + h, "black");
    svg.line(x0, y0, x0, y0 + h, "black");
    for (int i = 0; i <= 5; ++i) {
      const double v = i / 5.0;
      svg.line(px(v), y0 + h, px(v), y0 + h + 4, "black");
      svg.text(px(v), y0 + h + 16, Svg::num(v), 9, "middle");
      svg.line(x0 - 4, py(v), x0, py(v), "black");
      svg.text(x0 - 7, py(v) + 3, Svg::num(v), 9, "end");
    }
    svg.text(x0 + w / 2, y0 + h + 32, x_label, 11, "middle");
    svg.text(x0 - 40, y0 - 7, y_label, 11);
  }
};

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors = {
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
      "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78", "#98df8a", "#ff9896"};
  return colors;
}

}  // namespace ulab::exp
