#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "mupm/error.hpp"
#include "mupm/io.hpp"
#include "mupm/linalg.hpp"

namespace mupm {

struct SweepRow {
  std::size_t n = 0;
  double mean_norm = 0.0;
  double std_norm = 0.0;
  double mean_abs_deviation = 0.0;
  double mean_gap = 0.0;
  double benchmark_mean = 0.0;
};

struct AblationRow {
  std::string mode;
  std::size_t fold = 0;
  std::size_t size = 0;
  double accuracy = 0.0;
};

namespace detail {

inline std::vector<std::vector<std::string>> read_csv_rows(const fs::path& path,
                                                           std::size_t columns) {
  if (!fs::exists(path)) fail(ErrorCode::kMissingArtifact, "missing '" + path.string() + "'");
  const auto lines = read_lines(path);
  require(!lines.empty(), ErrorCode::kParseFailure, path.string() + ": missing header");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = split(lines[i], ',');
    require(f.size() == columns, ErrorCode::kParseFailure,
            path.string() + ":" + std::to_string(i + 1) + ": expected " +
                std::to_string(columns) + " columns");
    rows.push_back(std::move(f));
  }
  return rows;
}

}  // namespace detail

inline std::vector<SweepRow> read_sweep_csv(const fs::path& path) {
  std::vector<SweepRow> out;
  for (const auto& f : detail::read_csv_rows(path, 6)) {
    const std::string where = path.string();
    out.push_back({static_cast<std::size_t>(parse_double(f[0], where)), parse_double(f[1], where),
                   parse_double(f[2], where), parse_double(f[3], where),
                   parse_double(f[4], where), parse_double(f[5], where)});
  }
  require(!out.empty(), ErrorCode::kParseFailure, path.string() + ": no sweep rows");
  return out;
}

inline std::vector<AblationRow> read_ablation_csv(const fs::path& path) {
  std::vector<AblationRow> out;
  for (const auto& f : detail::read_csv_rows(path, 4)) {
    const std::string where = path.string();
    out.push_back({f[0], static_cast<std::size_t>(parse_double(f[1], where)),
                   static_cast<std::size_t>(parse_double(f[2], where)),
                   parse_double(f[3], where)});
  }
  return out;
}

// Benchmark CSV written by the sweep: sample_id,benchmark_norm.
inline std::vector<double> read_benchmark_norms_csv(const fs::path& path) {
  std::vector<double> out;
  for (const auto& f : detail::read_csv_rows(path, 2)) out.push_back(parse_double(f[1], path.string()));
  require(!out.empty(), ErrorCode::kParseFailure, path.string() + ": no rows");
  return out;
}

struct BoxStats {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  std::size_t count = 0;
};

// Quartiles by linear interpolation between order statistics.
inline BoxStats box_stats(std::vector<double> v) {
  require(!v.empty(), ErrorCode::kEmptyInput, "box summary of no values");
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return {v.front(), q(0.25), q(0.5), q(0.75), v.back(), v.size()};
}

namespace detail {

// Fixed-precision coordinates keep the markup stable across platforms.
inline std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Axis {
  double lo = 0.0, hi = 1.0, from = 0.0, to = 1.0;
  double operator()(double v) const { return from + (v - lo) / (hi - lo) * (to - from); }
};

inline Axis make_axis(double lo, double hi, double from, double to) {
  if (!(hi > lo)) {
    const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
    lo -= pad;
    hi += pad;
  } else {
    const double pad = (hi - lo) * 0.05;
    lo -= pad;
    hi += pad;
  }
  return {lo, hi, from, to};
}

inline std::string svg_open(int w, int h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
         "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
         std::to_string(h) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
}

}  // namespace detail

// Mean +- std of the predicted overall-uncertainty norm against n, with the
// benchmark as a horizontal line. Exact values ride along in <metadata> and
// data-* attributes.
inline std::string render_sweep_svg(const std::vector<SweepRow>& rows, double benchmark_mean) {
  require(!rows.empty(), ErrorCode::kEmptyInput, "no sweep rows to plot");
  constexpr int kW = 640, kH = 400;
  constexpr double kLeft = 70, kRight = 620, kTop = 40, kBottom = 350;
  double ylo = benchmark_mean, yhi = benchmark_mean;
  double xlo = static_cast<double>(rows.front().n), xhi = xlo;
  for (const auto& r : rows) {
    ylo = std::min(ylo, r.mean_norm - r.std_norm);
    yhi = std::max(yhi, r.mean_norm + r.std_norm);
    xlo = std::min(xlo, static_cast<double>(r.n));
    xhi = std::max(xhi, static_cast<double>(r.n));
  }
  const auto x = detail::make_axis(xlo, xhi, kLeft, kRight);
  const auto y = detail::make_axis(ylo, yhi, kBottom, kTop);

  json meta;
  meta["benchmark_mean"] = format_double(benchmark_mean);
  json pts = json::array();
  for (const auto& r : rows) {
    pts.push_back({{"n", r.n}, {"mean", format_double(r.mean_norm)},
                   {"std", format_double(r.std_norm)}});
  }
  meta["points"] = pts;

  std::string s = detail::svg_open(kW, kH);
  s += "<metadata id=\"sweep-data\">" + meta.dump() + "</metadata>\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(kW) + "\" height=\"" +
       std::to_string(kH) + "\" fill=\"white\"/>\n";
  s += "<text x=\"" + detail::px(kLeft) + "\" y=\"24\" font-size=\"14\">Overall uncertainty vs resample size</text>\n";
  s += "<line x1=\"" + detail::px(kLeft) + "\" y1=\"" + detail::px(kBottom) + "\" x2=\"" +
       detail::px(kRight) + "\" y2=\"" + detail::px(kBottom) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + detail::px(kLeft) + "\" y1=\"" + detail::px(kTop) + "\" x2=\"" +
       detail::px(kLeft) + "\" y2=\"" + detail::px(kBottom) + "\" stroke=\"black\"/>\n";
  for (const auto& r : rows) {
    const double cx = x(static_cast<double>(r.n));
    s += "<text x=\"" + detail::px(cx) + "\" y=\"" + detail::px(kBottom + 16) +
         "\" text-anchor=\"middle\">" + std::to_string(r.n) + "</text>\n";
  }
  for (int t = 0; t <= 4; ++t) {
    const double v = y.lo + (y.hi - y.lo) * t / 4.0;
    s += "<text x=\"" + detail::px(kLeft - 6) + "\" y=\"" + detail::px(y(v) + 4) +
         "\" text-anchor=\"end\">" + detail::label(v) + "</text>\n";
  }
  s += "<text x=\"" + detail::px((kLeft + kRight) / 2) + "\" y=\"" + detail::px(kBottom + 34) +
       "\" text-anchor=\"middle\">resample size n</text>\n";

  // std band
  std::string band;
  for (const auto& r : rows)
    band += detail::px(x(static_cast<double>(r.n))) + "," + detail::px(y(r.mean_norm + r.std_norm)) + " ";
  for (auto it = rows.rbegin(); it != rows.rend(); ++it)
    band += detail::px(x(static_cast<double>(it->n))) + "," +
            detail::px(y(it->mean_norm - it->std_norm)) + " ";
  band.pop_back();
  s += "<polygon points=\"" + band + "\" fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"none\"/>\n";

  const double by = y(benchmark_mean);
  s += "<line id=\"benchmark\" data-value=\"" + format_double(benchmark_mean) + "\" x1=\"" +
       detail::px(kLeft) + "\" y1=\"" + detail::px(by) + "\" x2=\"" + detail::px(kRight) +
       "\" y2=\"" + detail::px(by) + "\" stroke=\"#d62728\" stroke-dasharray=\"6,4\"/>\n";
  s += "<text x=\"" + detail::px(kRight) + "\" y=\"" + detail::px(by - 5) +
       "\" text-anchor=\"end\" fill=\"#d62728\">benchmark " + detail::label(benchmark_mean) +
       "</text>\n";

  std::string line;
  for (const auto& r : rows)
    line += detail::px(x(static_cast<double>(r.n))) + "," + detail::px(y(r.mean_norm)) + " ";
  line.pop_back();
  s += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
  for (const auto& r : rows) {
    s += "<circle cx=\"" + detail::px(x(static_cast<double>(r.n))) + "\" cy=\"" +
         detail::px(y(r.mean_norm)) + "\" r=\"3\" fill=\"#1f77b4\" data-n=\"" +
         std::to_string(r.n) + "\" data-mean=\"" + format_double(r.mean_norm) +
         "\" data-std=\"" + format_double(r.std_norm) + "\"/>\n";
  }
  s += "</svg>\n";
  return s;
}

// Box summary of per-fold accuracies for each ablation mode, in the order the
// modes first appear.
inline std::string render_ablation_svg(const std::vector<AblationRow>& rows) {
  require(!rows.empty(), ErrorCode::kEmptyInput, "no ablation rows to plot");
  std::vector<std::string> modes;
  std::vector<std::vector<double>> values;
  for (const auto& r : rows) {
    auto it = std::find(modes.begin(), modes.end(), r.mode);
    if (it == modes.end()) {
      modes.push_back(r.mode);
      values.emplace_back();
      it = modes.end() - 1;
    }
    values[static_cast<std::size_t>(it - modes.begin())].push_back(r.accuracy);
  }
  constexpr int kW = 480, kH = 400;
  constexpr double kLeft = 60, kRight = 460, kTop = 40, kBottom = 350;
  const detail::Axis y{0.0, 1.0, kBottom, kTop};
  const double slot = (kRight - kLeft) / static_cast<double>(modes.size());

  json meta = json::array();
  std::string s = detail::svg_open(kW, kH);
  std::string body;
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const auto b = box_stats(values[m]);
    meta.push_back({{"mode", modes[m]},
                    {"min", format_double(b.min)},
                    {"q1", format_double(b.q1)},
                    {"median", format_double(b.median)},
                    {"q3", format_double(b.q3)},
                    {"max", format_double(b.max)},
                    {"count", b.count}});
    const double cx = kLeft + slot * (static_cast<double>(m) + 0.5);
    const double half = slot * 0.25;
    body += "<g data-mode=\"" + modes[m] + "\">\n";
    body += "<line x1=\"" + detail::px(cx) + "\" y1=\"" + detail::px(y(b.min)) + "\" x2=\"" +
            detail::px(cx) + "\" y2=\"" + detail::px(y(b.max)) + "\" stroke=\"black\"/>\n";
    body += "<rect x=\"" + detail::px(cx - half) + "\" y=\"" + detail::px(y(b.q3)) +
            "\" width=\"" + detail::px(2 * half) + "\" height=\"" +
            detail::px(y(b.q1) - y(b.q3)) + "\" fill=\"#c6dbef\" stroke=\"black\"/>\n";
    body += "<line x1=\"" + detail::px(cx - half) + "\" y1=\"" + detail::px(y(b.median)) +
            "\" x2=\"" + detail::px(cx + half) + "\" y2=\"" + detail::px(y(b.median)) +
            "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
    body += "<text x=\"" + detail::px(cx) + "\" y=\"" + detail::px(kBottom + 16) +
            "\" text-anchor=\"middle\">" + modes[m] + "</text>\n";
    body += "</g>\n";
  }
  s += "<metadata id=\"ablation-data\">" + meta.dump() + "</metadata>\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(kW) + "\" height=\"" +
       std::to_string(kH) + "\" fill=\"white\"/>\n";
  s += "<text x=\"" + detail::px(kLeft) + "\" y=\"24\" font-size=\"14\">Accuracy by input modality</text>\n";
  s += "<line x1=\"" + detail::px(kLeft) + "\" y1=\"" + detail::px(kTop) + "\" x2=\"" +
       detail::px(kLeft) + "\" y2=\"" + detail::px(kBottom) + "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    s += "<text x=\"" + detail::px(kLeft - 6) + "\" y=\"" + detail::px(y(v) + 4) +
         "\" text-anchor=\"end\">" + detail::label(v) + "</text>\n";
  }
  s += body;
  s += "</svg>\n";
  return s;
}

// Pulls the JSON payload back out of a rendered chart's <metadata> element.
inline json svg_metadata(const std::string& svg, const std::string& id) {
  const std::string open = "<metadata id=\"" + id + "\">";
  const auto start = svg.find(open);
  require(start != std::string::npos, ErrorCode::kParseFailure, "no metadata '" + id + "'");
  const auto from = start + open.size();
  const auto end = svg.find("</metadata>", from);
  require(end != std::string::npos, ErrorCode::kParseFailure, "unterminated metadata");
  return json::parse(svg.substr(from, end - from));
}

}  // namespace mupm
