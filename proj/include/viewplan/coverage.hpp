#pragma once

// Fixed-viewpoint coverage analysis and planner comparison reports: per-step
// visibility fractions for a bank of static cameras, threshold coverage
// scores, CSV/SVG exports, and paired guided-vs-prior episode statistics.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "viewplan/simworld.hpp"
#include "viewplan/visibility_reward.hpp"

namespace viewplan {

// Fraction of valid query points each view sees at each step (rows = views,
// cols = steps).  A step with no valid points scores 0 for every view.
inline MatX view_visibility_fractions(const std::vector<Pose>& views,
                                      const CameraIntrinsics& intr, const Bvh* env,
                                      const std::vector<const Bvh*>& robots,
                                      const QueryPointSet& qps, double eps = 1e-4) {
  qps.validate();
  if (!robots.empty() && static_cast<int>(robots.size()) != qps.horizon()) {
    throw std::invalid_argument("view_visibility_fractions: robots/horizon mismatch");
  }
  MatX fraction = MatX::Zero(static_cast<Eigen::Index>(views.size()), qps.horizon());
  for (std::size_t v = 0; v < views.size(); ++v) {
    for (int t = 0; t < qps.horizon(); ++t) {
      OccluderSet occ;
      occ.env = env;
      occ.robot = robots.empty() ? nullptr : robots[t];
      int valid = 0, visible = 0;
      for (std::size_t i = 0; i < qps.points[t].size(); ++i) {
        if (!qps.valid[t][i]) continue;
        ++valid;
        if (point_visibility(views[v], intr, qps.points[t][i], occ, eps)) ++visible;
      }
      fraction(static_cast<Eigen::Index>(v), t) =
          valid == 0 ? 0.0 : static_cast<double>(visible) / valid;
    }
  }
  return fraction;
}

struct CoverageRow {
  int view = 0;
  double coverage = 0.0;  // fraction of steps with visibility >= threshold
};

// Per-view coverage at a visibility threshold, ranked best first; equal
// scores keep ascending view order.
inline std::vector<CoverageRow> coverage_ranking(const MatX& fraction, double threshold) {
  std::vector<CoverageRow> rows(static_cast<std::size_t>(fraction.rows()));
  for (Eigen::Index v = 0; v < fraction.rows(); ++v) {
    int hits = 0;
    for (Eigen::Index t = 0; t < fraction.cols(); ++t) {
      if (fraction(v, t) >= threshold) ++hits;
    }
    rows[static_cast<std::size_t>(v)] = {static_cast<int>(v),
                                         fraction.cols() == 0
                                             ? 0.0
                                             : static_cast<double>(hits) / fraction.cols()};
  }
  std::stable_sort(rows.begin(), rows.end(), [](const CoverageRow& a, const CoverageRow& b) {
    if (a.coverage != b.coverage) return a.coverage > b.coverage;
    return a.view < b.view;
  });
  return rows;
}

// Evenly spaced cameras on a horizontal ring, all aimed at one target.
/// n cameras on a ring about the world vertical axis (radius, absolute z =
/// height), each aimed at `target`.  The target steers orientation only; it
/// does not shift the ring.
inline std::vector<Pose> ring_views(int n, double radius, double height, const Vec3& target,
                                    double azimuth0 = 0.0) {
  if (n < 1) throw std::invalid_argument("ring_views: n must be >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("ring_views: radius must be > 0");
  std::vector<Pose> views;
  views.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double az = azimuth0 + 2.0 * kPi * i / n;
    views.push_back(look_at(Vec3(radius * std::cos(az), radius * std::sin(az), height), target));
  }
  return views;
}

// --- CSV --------------------------------------------------------------------

namespace detail {

// Shortest decimal form that parses back to the identical double.
inline std::string exact_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  double back = 0.0;
  std::sscanf(buf, "%lf", &back);
  if (back == x) {
    for (int prec = 1; prec <= 16; ++prec) {
      char shorter[40];
      std::snprintf(shorter, sizeof(shorter), "%.*g", prec, x);
      std::sscanf(shorter, "%lf", &back);
      if (back == x) return shorter;
    }
  }
  return buf;
}

}  // namespace detail

inline void write_fraction_csv(std::ostream& out, const MatX& fraction) {
  out << "view,step,fraction\n";
  for (Eigen::Index v = 0; v < fraction.rows(); ++v) {
    for (Eigen::Index t = 0; t < fraction.cols(); ++t) {
      out << v << ',' << t << ',' << detail::exact_double(fraction(v, t)) << '\n';
    }
  }
}

inline MatX read_fraction_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("view,step,fraction", 0) != 0) {
    throw std::runtime_error("fraction csv: missing header");
  }
  std::vector<std::tuple<int, int, double>> cells;
  int max_v = -1, max_t = -1;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    int v = 0, t = 0;
    double f = 0.0;
    if (std::sscanf(line.c_str(), "%d,%d,%lf", &v, &t, &f) != 3 || v < 0 || t < 0) {
      throw std::runtime_error("fraction csv: bad row at line " + std::to_string(lineno));
    }
    cells.emplace_back(v, t, f);
    max_v = std::max(max_v, v);
    max_t = std::max(max_t, t);
  }
  MatX fraction = MatX::Zero(max_v + 1, max_t + 1);
  for (const auto& [v, t, f] : cells) fraction(v, t) = f;
  return fraction;
}

inline void write_coverage_csv(std::ostream& out, const std::vector<CoverageRow>& rows) {
  out << "rank,view,coverage\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << i << ',' << rows[i].view << ',' << detail::exact_double(rows[i].coverage) << '\n';
  }
}

// --- SVG --------------------------------------------------------------------

namespace detail {

// Two-color ramp, interpolated per channel.
inline std::string ramp_color(double x) {
  x = std::clamp(x, 0.0, 1.0);
  const int lo[3] = {0x44, 0x5A, 0x33};
  const int hi[3] = {0xFB, 0xD3, 0x5A};
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x",
                static_cast<int>(std::lround(lo[0] + x * (hi[0] - lo[0]))),
                static_cast<int>(std::lround(lo[1] + x * (hi[1] - lo[1]))),
                static_cast<int>(std::lround(lo[2] + x * (hi[2] - lo[2]))));
  return buf;
}

inline std::string svg_header(int w, int h, const std::string& title, bool deterministic) {
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  if (!deterministic) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[64];
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    out << "<!-- generated " << stamp << " -->\n";
  }
  if (!title.empty()) {
    out << "<text x=\"8\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">" << title
        << "</text>\n";
  }
  return out.str();
}

}  // namespace detail

struct SvgOptions {
  int cell = 18;
  bool deterministic = false;  // suppress the timestamp comment
  std::string title;
};

// Views-by-steps heatmap of visibility fractions.
inline std::string coverage_heatmap_svg(const MatX& fraction, const SvgOptions& opt = {}) {
  const int V = static_cast<int>(fraction.rows());
  const int T = static_cast<int>(fraction.cols());
  const int left = 56, top = 32, legend = 28;
  const int w = left + T * opt.cell + 16;
  const int h = top + V * opt.cell + legend + 24;
  std::ostringstream out;
  out << detail::svg_header(w, h, opt.title, opt.deterministic);
  for (int v = 0; v < V; ++v) {
    out << "<text x=\"8\" y=\"" << top + v * opt.cell + opt.cell / 2 + 4
        << "\" font-family=\"sans-serif\" font-size=\"11\">view " << v << "</text>\n";
    for (int t = 0; t < T; ++t) {
      out << "<rect x=\"" << left + t * opt.cell << "\" y=\"" << top + v * opt.cell
          << "\" width=\"" << opt.cell << "\" height=\"" << opt.cell << "\" fill=\""
          << detail::ramp_color(fraction(v, t)) << "\"/>\n";
    }
  }
  for (int t = 0; t < T; t += 5) {
    out << "<text x=\"" << left + t * opt.cell + 2 << "\" y=\"" << top + V * opt.cell + 14
        << "\" font-family=\"sans-serif\" font-size=\"10\">" << t << "</text>\n";
  }
  const int ly = top + V * opt.cell + legend;
  for (int i = 0; i < 10; ++i) {
    out << "<rect x=\"" << left + i * 16 << "\" y=\"" << ly << "\" width=\"16\" height=\"10\""
        << " fill=\"" << detail::ramp_color(i / 9.0) << "\"/>\n";
  }
  out << "<text x=\"" << left + 10 * 16 + 6 << "\" y=\"" << ly + 9
      << "\" font-family=\"sans-serif\" font-size=\"10\">0 to 1</text>\n";
  out << "</svg>\n";
  return out.str();
}

struct BarDatum {
  std::string label;
  double mean = 0.0;
  double se = 0.0;
};

// Mean bars with standard-error whiskers on a [0, max] axis.
inline std::string bar_chart_svg(const std::vector<BarDatum>& data, const SvgOptions& opt = {}) {
  const int bar_w = 64, gap = 36, left = 48, top = 36, plot_h = 180;
  const int w = left + static_cast<int>(data.size()) * (bar_w + gap) + 24;
  const int h = top + plot_h + 44;
  double ymax = 1.0;
  for (const BarDatum& d : data) ymax = std::max(ymax, d.mean + d.se);
  std::ostringstream out;
  out << detail::svg_header(w, h, opt.title, opt.deterministic);
  const auto ypix = [&](double y) { return top + plot_h - static_cast<int>(y / ymax * plot_h); };
  out << "<line x1=\"" << left - 6 << "\" y1=\"" << ypix(0.0) << "\" x2=\"" << w - 12
      << "\" y2=\"" << ypix(0.0) << "\" stroke=\"#666\"/>\n";
  for (double tick : {0.0, 0.5, 1.0}) {
    if (tick > ymax) continue;
    out << "<text x=\"8\" y=\"" << ypix(tick) + 4
        << "\" font-family=\"sans-serif\" font-size=\"10\">" << (tick == 0.5 ? "0.5" : (tick == 0.0 ? "0" : "1"))
        << "</text>\n";
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int x = left + static_cast<int>(i) * (bar_w + gap);
    const int y = ypix(data[i].mean);
    out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w << "\" height=\""
        << ypix(0.0) - y << "\" fill=\"" << detail::ramp_color(data[i].mean) << "\"/>\n";
    const int cx = x + bar_w / 2;
    const int y_lo = ypix(std::max(0.0, data[i].mean - data[i].se));
    const int y_hi = ypix(data[i].mean + data[i].se);
    out << "<line x1=\"" << cx << "\" y1=\"" << y_lo << "\" x2=\"" << cx << "\" y2=\"" << y_hi
        << "\" stroke=\"#222\"/>\n";
    out << "<line x1=\"" << cx - 8 << "\" y1=\"" << y_hi << "\" x2=\"" << cx + 8 << "\" y2=\""
        << y_hi << "\" stroke=\"#222\"/>\n";
    out << "<line x1=\"" << cx - 8 << "\" y1=\"" << y_lo << "\" x2=\"" << cx + 8 << "\" y2=\""
        << y_lo << "\" stroke=\"#222\"/>\n";
    out << "<text x=\"" << x << "\" y=\"" << top + plot_h + 18
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << data[i].label << "</text>\n";
    char mean_buf[24];
    std::snprintf(mean_buf, sizeof(mean_buf), "%.3f", data[i].mean);
    out << "<text x=\"" << x << "\" y=\"" << top + plot_h + 34
        << "\" font-family=\"sans-serif\" font-size=\"10\">" << mean_buf << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

// --- planner comparison -----------------------------------------------------

struct PlannerComparison {
  int seeds = 0;
  std::vector<double> svdd_means;   // episode-mean executed visibility, per seed
  std::vector<double> prior_means;
  double svdd_mean = 0.0, svdd_se = 0.0;
  double prior_mean = 0.0, prior_se = 0.0;
  int svdd_wins = 0, ties = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["seeds"] = seeds;
    j["svdd"] = {{"mean", svdd_mean}, {"se", svdd_se}, {"per_seed", svdd_means}};
    j["prior_only"] = {{"mean", prior_mean}, {"se", prior_se}, {"per_seed", prior_means}};
    j["paired_wins"] = svdd_wins;
    j["ties"] = ties;
    return j;
  }
};

namespace detail {

inline void mean_se(const std::vector<double>& xs, double* mean, double* se) {
  *mean = 0.0;
  *se = 0.0;
  if (xs.empty()) return;
  for (double x : xs) *mean += x;
  *mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return;
  double var = 0.0;
  for (double x : xs) var += (x - *mean) * (x - *mean);
  var /= static_cast<double>(xs.size() - 1);
  *se = std::sqrt(var / static_cast<double>(xs.size()));
}

}  // namespace detail

// Paired comparison: for each seed, one guided and one prior-only episode run
// from the same derived seed (so both see identical proposal noise), scored
// by the episode mean of executed-step visibility.
inline PlannerComparison compare_planners(const SceneSpec& scene, const EEScript& ee,
                                          const FlowScript& flow, const RobotProxy& robot,
                                          const std::vector<std::vector<Pose>>& demos,
                                          const EpisodeConfig& base,
                                          const std::vector<std::uint64_t>& episode_seeds) {
  if (episode_seeds.empty()) {
    throw std::invalid_argument("compare_planners: episode_seeds must be non-empty");
  }
  PlannerComparison cmp;
  cmp.seeds = static_cast<int>(episode_seeds.size());
  for (std::uint64_t seed : episode_seeds) {
    EpisodeConfig cfg = base;
    cfg.seed = seed;
    cfg.planner.mode = PlanMode::svdd;
    const EpisodeResult guided = run_episode(scene, ee, flow, robot, demos, cfg);
    cfg.planner.mode = PlanMode::prior_only;
    const EpisodeResult plain = run_episode(scene, ee, flow, robot, demos, cfg);
    if (!guided.ok) throw std::runtime_error("compare_planners: guided episode failed: " + guided.error);
    if (!plain.ok) throw std::runtime_error("compare_planners: prior episode failed: " + plain.error);
    cmp.svdd_means.push_back(guided.mean_r_vis());
    cmp.prior_means.push_back(plain.mean_r_vis());
    if (cmp.svdd_means.back() > cmp.prior_means.back()) {
      ++cmp.svdd_wins;
    } else if (cmp.svdd_means.back() == cmp.prior_means.back()) {
      ++cmp.ties;
    }
  }
  detail::mean_se(cmp.svdd_means, &cmp.svdd_mean, &cmp.svdd_se);
  detail::mean_se(cmp.prior_means, &cmp.prior_mean, &cmp.prior_se);
  return cmp;
}

// Convenience form: `seeds` paired episode seeds derived from one base seed.
inline PlannerComparison compare_planners(const SceneSpec& scene, const EEScript& ee,
                                          const FlowScript& flow, const RobotProxy& robot,
                                          const std::vector<std::vector<Pose>>& demos,
                                          const EpisodeConfig& base, int seeds,
                                          std::uint64_t seed0) {
  if (seeds < 1) throw std::invalid_argument("compare_planners: seeds must be >= 1");
  std::vector<std::uint64_t> episode_seeds;
  episode_seeds.reserve(static_cast<std::size_t>(seeds));
  for (int i = 0; i < seeds; ++i) {
    episode_seeds.push_back(derive_seed(seed0, static_cast<std::uint64_t>(i)));
  }
  return compare_planners(scene, ee, flow, robot, demos, base, episode_seeds);
}

}  // namespace viewplan
