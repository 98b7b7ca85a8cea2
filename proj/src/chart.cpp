#include "emv/chart.hpp"

#include "emv/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace emv {

namespace {

constexpr double kWidth = 760.0;
constexpr double kPanelHeight = 250.0;
constexpr double kLeft = 70.0, kRight = 170.0, kTop = 40.0, kBottom = 45.0;
constexpr const char* kPalette[] = {"#1f4e79", "#b03a2e", "#1e8449", "#7d3c98",
                                    "#b9770e", "#2e86c1", "#566573", "#cb4335"};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string tick_label(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", std::abs(x) < 1e-12 ? 0.0 : x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
    case '&':
      out += "&amp;";
      break;
    case '<':
      out += "&lt;";
      break;
    case '>':
      out += "&gt;";
      break;
    case '"':
      out += "&quot;";
      break;
    default:
      out += c;
    }
  }
  return out;
}

std::string dash(const std::string& style) {
  if (style == "dashed")
    return " stroke-dasharray=\"6,4\"";
  if (style == "dotted")
    return " stroke-dasharray=\"2,3\"";
  return "";
}

void range(const std::vector<Series>& series, bool use_x, double& lo, double& hi) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]))
        continue;
      const double v = use_x ? s.x[i] : s.y[i];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
}

void draw_panel(std::string& out, const ChartPanel& p, double y0) {
  double xlo, xhi, ylo, yhi;
  range(p.series, true, xlo, xhi);
  range(p.series, false, ylo, yhi);
  const double pad = 0.05 * (yhi - ylo);
  ylo -= pad;
  yhi += pad;
  const double pw = kWidth - kLeft - kRight;
  const double ph = kPanelHeight - kTop - kBottom;
  const double top = y0 + kTop;
  auto px = [&](double x) { return kLeft + (x - xlo) / (xhi - xlo) * pw; };
  auto py = [&](double y) { return top + (yhi - y) / (yhi - ylo) * ph; };

  out += "<text x=\"" + fmt(kLeft) + "\" y=\"" + fmt(y0 + 24) +
         "\" font-size=\"14\" font-weight=\"bold\">" + escape(p.title) + "</text>\n";
  out += "<rect x=\"" + fmt(kLeft) + "\" y=\"" + fmt(top) + "\" width=\"" + fmt(pw) +
         "\" height=\"" + fmt(ph) + "\" fill=\"none\" stroke=\"#888\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = ylo + (yhi - ylo) * i / 4.0;
    const double xv = xlo + (xhi - xlo) * i / 4.0;
    out += "<line x1=\"" + fmt(kLeft) + "\" x2=\"" + fmt(kLeft + pw) + "\" y1=\"" + fmt(py(yv)) +
           "\" y2=\"" + fmt(py(yv)) + "\" stroke=\"#eee\"/>\n";
    out += "<text x=\"" + fmt(kLeft - 6) + "\" y=\"" + fmt(py(yv) + 4) +
           "\" font-size=\"10\" text-anchor=\"end\">" + tick_label(yv) + "</text>\n";
    out += "<text x=\"" + fmt(px(xv)) + "\" y=\"" + fmt(top + ph + 14) +
           "\" font-size=\"10\" text-anchor=\"middle\">" + tick_label(xv) + "</text>\n";
  }
  out += "<text x=\"" + fmt(kLeft + pw / 2) + "\" y=\"" + fmt(top + ph + 32) +
         "\" font-size=\"11\" text-anchor=\"middle\">" + escape(p.x_label) + "</text>\n";
  out += "<text transform=\"translate(" + fmt(16) + "," + fmt(top + ph / 2) +
         ") rotate(-90)\" font-size=\"11\" text-anchor=\"middle\">" + escape(p.y_label) +
         "</text>\n";

  for (std::size_t k = 0; k < p.series.size(); ++k) {
    const auto& s = p.series[k];
    const std::string color = kPalette[k % std::size(kPalette)];
    std::string pts;
    auto flush = [&] {
      if (!pts.empty())
        out += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.6\"" +
               dash(s.style) + " points=\"" + pts + "\"/>\n";
      pts.clear();
    };
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        flush();
        continue;
      }
      pts += (pts.empty() ? "" : " ") + fmt(px(s.x[i])) + "," + fmt(py(s.y[i]));
    }
    flush();
    const double ly = top + 10 + 16.0 * static_cast<double>(k);
    out += "<line x1=\"" + fmt(kLeft + pw + 10) + "\" x2=\"" + fmt(kLeft + pw + 34) +
           "\" y1=\"" + fmt(ly) + "\" y2=\"" + fmt(ly) + "\" stroke=\"" + color +
           "\" stroke-width=\"1.6\"" + dash(s.style) + "/>\n";
    out += "<text x=\"" + fmt(kLeft + pw + 40) + "\" y=\"" + fmt(ly + 4) +
           "\" font-size=\"10\">" + escape(s.name) + "</text>\n";
  }
}

} // namespace

std::string render_svg(const std::string& title, const std::vector<ChartPanel>& panels) {
  const double height = 30.0 + kPanelHeight * static_cast<double>(panels.size());
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) +
                    "\" height=\"" + fmt(height) + "\" font-family=\"sans-serif\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + fmt(kWidth / 2) + "\" y=\"20\" font-size=\"15\" text-anchor=\"middle\">" +
         escape(title) + "</text>\n";
  for (std::size_t i = 0; i < panels.size(); ++i)
    draw_panel(out, panels[i], 30.0 + kPanelHeight * static_cast<double>(i));
  out += "</svg>\n";
  return out;
}

std::string chart_csv(const std::vector<ChartPanel>& panels) {
  std::string s = "panel,series,x,y\n";
  for (const auto& p : panels)
    for (const auto& ser : p.series)
      for (std::size_t i = 0; i < ser.x.size() && i < ser.y.size(); ++i)
        s += "\"" + p.title + "\",\"" + ser.name + "\"," + csv::format_double(ser.x[i]) + "," +
             csv::format_double(ser.y[i]) + "\n";
  return s;
}

std::vector<ChartPanel> decomposition_panels(
    const std::vector<std::pair<std::string, Decomposition>>& items) {
  ChartPanel e{"Exogenous", "calendar time t", "effect", {}};
  ChartPanel m{"Maturity", "age a", "effect", {}};
  ChartPanel v{"Vintage", "vintage v", "effect", {}};
  auto series = [](const std::string& name, const std::vector<int>& idx, const Eigen::VectorXd& y) {
    Series s;
    s.name = name;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      s.x.push_back(idx[i]);
      s.y.push_back(y(static_cast<Eigen::Index>(i)));
    }
    return s;
  };
  static const char* styles[] = {"solid", "dashed", "dotted"};
  for (std::size_t k = 0; k < items.size(); ++k) {
    const auto& [name, d] = items[k];
    const std::string style = styles[k % 3];
    e.series.push_back(series(name, d.levels.times, d.exogenous));
    m.series.push_back(series(name, d.levels.ages, d.maturity));
    v.series.push_back(series(name, d.levels.vintages, d.vintage));
    e.series.back().style = m.series.back().style = v.series.back().style = style;
  }
  return {e, m, v};
}

} // namespace emv
