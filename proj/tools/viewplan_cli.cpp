// Command-line front end for the viewpoint-planning toolkit.
//
// Subcommands:
//   run          execute a planning episode per seed; JSONL step logs + summary
//   coverage     fixed-view visibility matrix, ranking, and a paired planner comparison
//   verify-svdd  statistical verification battery for the guided sampler
//   bench        raycast throughput (accelerated vs brute force) and planner cost
//
// Exit codes: 0 success, 1 runtime or check failure, 2 configuration error.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "viewplan/config.hpp"

namespace {

using namespace viewplan;
namespace fs = std::filesystem;
using nlohmann::json;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool deterministic = false;
};

RunSetup load_setup(const CommonOpts& opt) {
  json root = json::object();
  if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path);
    if (!in) throw ConfigError("", "cannot open config file: " + opt.config_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
      root = json::parse(buf.str());
    } catch (const json::exception& e) {
      throw ConfigError("", std::string("invalid JSON in ") + opt.config_path + ": " + e.what());
    }
  }
  for (const std::string& s : opt.sets) apply_override(root, s);
  if (opt.seed) root["seeds"] = json::array({*opt.seed});
  if (!opt.out_dir.empty()) root["output"]["dir"] = opt.out_dir;
  if (opt.deterministic) root["output"]["deterministic_svg"] = true;
  return parse_run_config(root);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// --- run --------------------------------------------------------------------

int cmd_run(const RunSetup& setup) {
  const auto& w = setup.world;
  const std::vector<std::vector<Pose>> demos =
      generate_tracking_demos(w.flow, w.ee, setup.episode.episode_len, setup.demo_cfg);
  fs::create_directories(setup.out_dir);

  json summary;
  summary["mode"] = setup.episode.planner.mode == PlanMode::svdd ? "svdd" : "prior_only";
  summary["seeds"] = setup.seeds;
  summary["episodes"] = json::array();
  bool all_ok = true;
  double vis_sum = 0.0;
  int vis_count = 0;

  for (std::uint64_t seed : setup.seeds) {
    EpisodeConfig cfg = setup.episode;
    cfg.seed = seed;
    const fs::path log_path = fs::path(setup.out_dir) / ("episode_seed" + std::to_string(seed) + ".jsonl");
    std::ofstream log(log_path, std::ios::binary);
    if (!log) throw std::runtime_error("cannot write " + log_path.string());
    const EpisodeResult result = run_episode(w.scene, w.ee, w.flow, w.robot, demos, cfg, &log);

    long reward_evals = 0;
    int fallback_steps = 0, degenerate = 0;
    for (const ChunkPlan& c : result.chunks) {
      reward_evals += c.reward_evals;
      fallback_steps += c.fallback_steps;
      degenerate += c.degenerate_rotations;
    }
    json ep;
    ep["seed"] = seed;
    ep["ok"] = result.ok;
    ep["error"] = result.error;
    ep["steps"] = result.steps.size();
    ep["chunks"] = result.chunks.size();
    ep["mean_r_vis"] = result.mean_r_vis();
    ep["reward_evals"] = reward_evals;
    ep["fallback_steps"] = fallback_steps;
    ep["degenerate_rotations"] = degenerate;
    ep["log"] = log_path.filename().string();
    summary["episodes"].push_back(ep);

    if (result.ok) {
      vis_sum += result.mean_r_vis();
      ++vis_count;
    } else {
      all_ok = false;
    }
    std::cout << "seed " << seed << ": " << (result.ok ? "ok" : ("FAILED (" + result.error + ")"))
              << ", steps=" << result.steps.size() << ", chunks=" << result.chunks.size()
              << ", mean r_vis=" << result.mean_r_vis() << "\n";
  }

  summary["mean_r_vis"] = vis_count > 0 ? vis_sum / vis_count : 0.0;
  const fs::path summary_path = fs::path(setup.out_dir) / "summary.json";
  write_text(summary_path, summary.dump(2) + "\n");
  std::cout << "wrote " << summary_path.string() << "\n";
  return all_ok ? 0 : 1;
}

// --- coverage ---------------------------------------------------------------

int cmd_coverage(const RunSetup& setup) {
  const auto& w = setup.world;
  const int T = setup.episode.episode_len;
  const QueryPointSet qps = future_flow(w.flow, w.ee, 0, T);
  const Bvh env = build_bvh(w.scene.environment);
  std::vector<Bvh> robot_bvhs;
  robot_bvhs.reserve(static_cast<std::size_t>(T));
  std::vector<const Bvh*> robots;
  for (int t = 0; t < T; ++t) {
    robot_bvhs.emplace_back(build_bvh(w.robot.mesh_at(w.ee.pose_at(t).position)));
  }
  for (const Bvh& b : robot_bvhs) robots.push_back(&b);

  const MatX fraction = view_visibility_fractions(w.fixed_views, w.scene.intrinsics, &env,
                                                  robots, qps, w.scene.los_eps);
  const std::vector<CoverageRow> ranking = coverage_ranking(fraction, setup.coverage_theta);
  fs::create_directories(setup.out_dir);

  // Matrix CSV: one row per view in rank order (best coverage first), one
  // column per timestep, values exact to round trip.
  {
    std::ostringstream out;
    out << "view";
    for (int t = 0; t < static_cast<int>(fraction.cols()); ++t) out << ",t" << t;
    out << "\n";
    for (const CoverageRow& row : ranking) {
      out << row.view;
      for (int t = 0; t < static_cast<int>(fraction.cols()); ++t) {
        out << "," << detail::exact_double(fraction(row.view, t));
      }
      out << "\n";
    }
    write_text(fs::path(setup.out_dir) / "coverage_matrix.csv", out.str());
  }
  {
    std::ostringstream out;
    write_coverage_csv(out, ranking);
    write_text(fs::path(setup.out_dir) / "coverage_ranking.csv", out.str());
  }
  SvgOptions svg_opt;
  svg_opt.deterministic = setup.deterministic_svg;
  svg_opt.title = "per-step visibility fraction by fixed view";
  write_text(fs::path(setup.out_dir) / "coverage_heatmap.svg",
             coverage_heatmap_svg(fraction, svg_opt));

  double max_cov = 0.0;
  for (const CoverageRow& r : ranking) max_cov = std::max(max_cov, r.coverage);
  std::cout << "fixed views ranked by fraction of steps with full visibility (threshold "
            << setup.coverage_theta << "):\n";
  for (const CoverageRow& r : ranking) {
    std::cout << "  view " << r.view << ": coverage " << r.coverage << "\n";
  }

  // Paired planner comparison on the same seeds.
  const std::vector<std::vector<Pose>> demos =
      generate_tracking_demos(w.flow, w.ee, T, setup.demo_cfg);
  const PlannerComparison cmp =
      compare_planners(w.scene, w.ee, w.flow, w.robot, demos, setup.episode, setup.seeds);
  json cj = cmp.to_json();
  cj["coverage_threshold"] = setup.coverage_theta;
  cj["max_fixed_view_coverage"] = max_cov;
  write_text(fs::path(setup.out_dir) / "comparison.json", cj.dump(2) + "\n");

  SvgOptions bar_opt;
  bar_opt.deterministic = setup.deterministic_svg;
  bar_opt.title = "mean executed visibility reward";
  write_text(fs::path(setup.out_dir) / "comparison_bars.svg",
             bar_chart_svg({{"svdd", cmp.svdd_mean, cmp.svdd_se},
                            {"prior_only", cmp.prior_mean, cmp.prior_se}},
                           bar_opt));

  std::cout << "planner comparison over " << cmp.seeds << " paired seeds: svdd " << cmp.svdd_mean
            << " +/- " << cmp.svdd_se << ", prior_only " << cmp.prior_mean << " +/- "
            << cmp.prior_se << ", wins " << cmp.svdd_wins << ", ties " << cmp.ties << "\n";
  std::cout << "wrote coverage_matrix.csv, coverage_ranking.csv, coverage_heatmap.svg, "
               "comparison.json, comparison_bars.svg in "
            << setup.out_dir << "\n";
  return 0;
}

// --- verify-svdd ------------------------------------------------------------

int cmd_verify(const RunSetup& setup, bool corrupt_flag) {
  BatteryConfig bat = setup.battery;
  if (corrupt_flag) bat.corrupt_weights = true;
  const BatteryResult result = run_svdd_battery(bat);
  for (const CheckResult& c : result.checks) {
    const char* tag = c.skipped ? "SKIP" : (c.passed ? "PASS" : "FAIL");
    std::printf("[%s] %s: %s (%.2fs)\n", tag, c.name.c_str(), c.detail.c_str(), c.seconds);
  }
  const bool ok = result.all_passed();
  std::printf("%s\n", ok ? "all checks passed" : "battery FAILED");
  return ok ? 0 : 1;
}

// --- bench ------------------------------------------------------------------

int cmd_bench(const RunSetup& setup) {
  json out;

  {  // Raycast throughput: accelerated structure vs brute force, same queries.
    std::mt19937_64 rng = make_rng(derive_seed(setup.bench_seed, 31));
    std::uniform_real_distribution<double> pos(-1.0, 1.0);
    std::uniform_real_distribution<double> edge(-0.25, 0.25);
    TriMesh mesh;
    for (int i = 0; i < setup.bench_triangles; ++i) {
      const Vec3 a(pos(rng), pos(rng), pos(rng));
      const Vec3 b = a + Vec3(edge(rng), edge(rng), edge(rng));
      const Vec3 c = a + Vec3(edge(rng), edge(rng), edge(rng));
      const int base = static_cast<int>(mesh.vertices.size());
      mesh.vertices.push_back(a);
      mesh.vertices.push_back(b);
      mesh.vertices.push_back(c);
      mesh.triangles.push_back({base, base + 1, base + 2});
    }
    std::vector<Segment> segs(static_cast<std::size_t>(setup.bench_segments));
    std::uniform_real_distribution<double> span(-1.2, 1.2);
    for (auto& s : segs) {
      s.a = Vec3(span(rng), span(rng), span(rng));
      s.b = Vec3(span(rng), span(rng), span(rng));
    }
    const Bvh bvh = build_bvh(mesh);

    std::vector<char> hits_fast(segs.size());
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < segs.size(); ++i) hits_fast[i] = segment_hits(bvh, segs[i]);
    const double fast_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::vector<char> hits_brute(segs.size());
    const auto t1 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < segs.size(); ++i) {
      hits_brute[i] = segment_hits_bruteforce(mesh, segs[i]);
    }
    const double brute_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();

    long mismatches = 0;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      if (hits_fast[i] != hits_brute[i]) ++mismatches;
    }
    const double n = static_cast<double>(segs.size());
    out["raycast"] = {{"triangles", setup.bench_triangles},
                      {"segments", setup.bench_segments},
                      {"accelerated_segments_per_s", n / fast_s},
                      {"brute_segments_per_s", n / brute_s},
                      {"speedup", brute_s / fast_s},
                      {"mismatches", mismatches}};
    std::printf("raycast: %d tris, %d segments: accelerated %.3g seg/s, brute %.3g seg/s, "
                "speedup %.1fx, mismatches %ld\n",
                setup.bench_triangles, setup.bench_segments, n / fast_s, n / brute_s,
                brute_s / fast_s, mismatches);
    if (mismatches > 0) {
      std::cerr << "error: accelerated and brute-force raycasts disagree\n";
      return 1;
    }
  }

  {  // Planner cost: wall seconds for one planned-and-executed chunk.
    const auto& w = setup.world;
    const int T = setup.episode.plan_horizon;
    const std::vector<std::vector<Pose>> demos =
        generate_tracking_demos(w.flow, w.ee, setup.episode.episode_len, setup.demo_cfg);
    out["planner"] = json::array();
    for (int M : setup.bench_planner_m) {
      EpisodeConfig cfg = setup.episode;
      cfg.planner.mode = PlanMode::svdd;
      cfg.planner.M = M;
      cfg.episode_len = cfg.exec_horizon;  // exactly one planning call
      cfg.seed = derive_seed(setup.bench_seed, 32, static_cast<std::uint64_t>(M));
      const auto t0 = std::chrono::steady_clock::now();
      const EpisodeResult r = run_episode(w.scene, w.ee, w.flow, w.robot, demos, cfg);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (!r.ok) {
        std::cerr << "error: bench episode failed: " << r.error << "\n";
        return 1;
      }
      long evals = 0;
      for (const ChunkPlan& c : r.chunks) evals += c.reward_evals;
      out["planner"].push_back({{"candidates", M},
                                {"schedule_steps", cfg.schedule_steps},
                                {"plan_horizon", T},
                                {"query_points", static_cast<int>(w.flow.points_local.size())},
                                {"seconds_per_chunk", secs},
                                {"reward_evals", evals}});
      std::printf("planner: M=%d, K=%d, T=%d: %.3fs per chunk (%ld reward evals)\n", M,
                  cfg.schedule_steps, T, secs, evals);
    }
  }

  fs::create_directories(setup.out_dir);
  const fs::path path = fs::path(setup.out_dir) / "bench.json";
  write_text(path, out.dump(2) + "\n");
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"visibility-aware viewpoint planning toolkit"};
  app.require_subcommand(1);
  CommonOpts opts;
  bool corrupt_flag = false;

  const auto add_common = [&opts](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "JSON configuration file");
    sub->add_option("--set", opts.sets, "override a config value: section.key=value")
        ->take_all();
    sub->add_option("--seed", opts.seed, "replace the seed list with this single seed");
    sub->add_option("--out", opts.out_dir, "output directory (overrides output.dir)");
    sub->add_flag("--deterministic", opts.deterministic,
                  "suppress timestamps so artifacts are byte-stable");
  };

  CLI::App* sub_run = app.add_subcommand("run", "execute planning episodes over the seed list");
  CLI::App* sub_cov =
      app.add_subcommand("coverage", "fixed-view coverage analysis and planner comparison");
  CLI::App* sub_verify =
      app.add_subcommand("verify-svdd", "statistical checks of the guided sampler");
  CLI::App* sub_bench = app.add_subcommand("bench", "raycast and planner throughput");
  add_common(sub_run);
  add_common(sub_cov);
  add_common(sub_verify);
  add_common(sub_bench);
  sub_verify->add_flag("--corrupt-weights", corrupt_flag,
                       "negative control: corrupt selection weights and expect detection");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad flags are configuration errors
  }

  try {
    const RunSetup setup = load_setup(opts);
    if (sub_run->parsed()) return cmd_run(setup);
    if (sub_cov->parsed()) return cmd_coverage(setup);
    if (sub_verify->parsed()) return cmd_verify(setup, corrupt_flag);
    if (sub_bench->parsed()) return cmd_bench(setup);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
