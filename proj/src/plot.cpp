// SPDX-License-Identifier: Apache-2.0
#include "psl/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "psl/error.hpp"
#include "psl/persist.hpp"

namespace psl {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 20, kTop = 36, kBottom = 50;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Range {
  double lo, hi;
  double map(double v, double a, double b) const { return a + (v - lo) / (hi - lo) * (b - a); }
};

Range padded(double lo, double hi, double frac) {
  if (hi - lo <= 1e-12 * std::max(1.0, std::abs(lo))) return {lo - 0.5, hi + 0.5};
  const double pad = (hi - lo) * frac;
  return {lo - pad, hi + pad};
}

}  // namespace

std::string render_sweep_svg(const ProbeResult& result) {
  if (result.per_alpha.empty()) throw ContractError("cannot plot an empty probe result");
  const auto& pts = result.per_alpha;
  double amin = pts.front().alpha, amax = pts.front().alpha;
  double ymin = pts.front().mean - pts.front().std, ymax = pts.front().mean + pts.front().std;
  for (const auto& p : pts) {
    amin = std::min(amin, p.alpha);
    amax = std::max(amax, p.alpha);
    ymin = std::min(ymin, p.mean - p.std);
    ymax = std::max(ymax, p.mean + p.std);
  }
  const Range xr = padded(amin, amax, 0.05), yr = padded(ymin, ymax, 0.08);
  auto X = [&](double a) { return fmt("%.2f", xr.map(a, kLeft, kWidth - kRight)); };
  auto Y = [&](double v) { return fmt("%.2f", yr.map(v, kHeight - kBottom, kTop)); };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
  s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  s += "<text x=\"320\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
       result.concept_label + " vs alpha (spearman " + fmt("%.3f", result.spearman_rho) + ")</text>\n";
  s += "<g stroke=\"black\" stroke-width=\"1\">\n";
  s += "<line x1=\"" + fmt("%.0f", kLeft) + "\" y1=\"" + fmt("%.0f", kHeight - kBottom) + "\" x2=\"" +
       fmt("%.0f", kWidth - kRight) + "\" y2=\"" + fmt("%.0f", kHeight - kBottom) + "\"/>\n";
  s += "<line x1=\"" + fmt("%.0f", kLeft) + "\" y1=\"" + fmt("%.0f", kTop) + "\" x2=\"" + fmt("%.0f", kLeft) +
       "\" y2=\"" + fmt("%.0f", kHeight - kBottom) + "\"/>\n";
  s += "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double a = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    const double v = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    s += "<text x=\"" + X(a) + "\" y=\"" + fmt("%.0f", kHeight - kBottom + 16) + "\" text-anchor=\"middle\">" +
         fmt("%.3g", a) + "</text>\n";
    s += "<text x=\"" + fmt("%.0f", kLeft - 6) + "\" y=\"" + Y(v) + "\" text-anchor=\"end\">" + fmt("%.3g", v) +
         "</text>\n";
  }
  s += "<text x=\"" + fmt("%.0f", (kLeft + kWidth - kRight) / 2) + "\" y=\"" + fmt("%.0f", kHeight - 12) +
       "\" text-anchor=\"middle\">alpha</text>\n</g>\n";

  s += "<g stroke=\"#888888\" stroke-width=\"1\">\n";
  for (const auto& p : pts)
    s += "<line x1=\"" + X(p.alpha) + "\" y1=\"" + Y(p.mean - p.std) + "\" x2=\"" + X(p.alpha) + "\" y2=\"" +
         Y(p.mean + p.std) + "\"/>\n";
  s += "</g>\n";
  if (pts.size() > 1) {
    s += "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) s += (i ? " " : "") + X(pts[i].alpha) + "," + Y(pts[i].mean);
    s += "\"/>\n";
  }
  s += "<g fill=\"#1f5fa8\">\n";
  for (const auto& p : pts) s += "<circle cx=\"" + X(p.alpha) + "\" cy=\"" + Y(p.mean) + "\" r=\"4\"/>\n";
  s += "</g>\n</svg>\n";
  return s;
}

void sweep_plot(const ProbeResult& result, const std::filesystem::path& svg_path) {
  const std::string svg = render_sweep_svg(result);
  auto csv_path = svg_path;
  csv_path.replace_extension(".csv");
  write_file_atomic(csv_path, probe_csv(result));
  write_file_atomic(svg_path, svg);
}

}  // namespace psl
