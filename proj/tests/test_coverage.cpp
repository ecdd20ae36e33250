#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "viewplan/coverage.hpp"

using namespace viewplan;
using Catch::Approx;

TEST_CASE("visibility fractions count blocked points per step") {
  const CameraIntrinsics intr{320.0, 320.0, 320.0, 240.0, 640, 480};
  const Pose view = look_at(Vec3(0, 0, 0.5), Vec3(1, 0, 0.5));
  // Wall covering y < 0 only, between the camera and the step-1 points.
  const TriMesh wall =
      make_quad(Vec3(0.5, -0.4, 0.0), Vec3(0.0, 0.38, 0.0), Vec3(0.0, 0.0, 1.0));
  const Bvh env = build_bvh(wall);
  QueryPointSet qps = QueryPointSet::all_valid({
      {Vec3(1, 0.1, 0.5), Vec3(1, 0.2, 0.5)},   // step 0: both clear
      {Vec3(1, 0.1, 0.5), Vec3(1, -0.1, 0.5)},  // step 1: second blocked
  });
  const MatX fraction = view_visibility_fractions({view}, intr, &env, {}, qps);
  REQUIRE(fraction.rows() == 1);
  REQUIRE(fraction.cols() == 2);
  CHECK(fraction(0, 0) == 1.0);
  CHECK(fraction(0, 1) == 0.5);

  // Masked points drop from the denominator; a fully-masked step scores 0.
  qps.valid[1][1] = 0;
  CHECK(view_visibility_fractions({view}, intr, &env, {}, qps)(0, 1) == 1.0);
  qps.valid[1][0] = 0;
  CHECK(view_visibility_fractions({view}, intr, &env, {}, qps)(0, 1) == 0.0);
}

TEST_CASE("coverage threshold is inclusive") {
  MatX fraction(1, 2);
  fraction << 0.7, 0.69999;
  const std::vector<CoverageRow> rows = coverage_ranking(fraction, 0.7);
  CHECK(rows[0].coverage == Approx(0.5));
  MatX exact(1, 1);
  exact << 0.7;
  CHECK(coverage_ranking(exact, 0.7)[0].coverage == 1.0);
  exact << 0.6999;
  CHECK(coverage_ranking(exact, 0.7)[0].coverage == 0.0);
}

TEST_CASE("coverage is monotone in the threshold") {
  std::mt19937_64 rng(301);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatX fraction(3, 20);
  for (int v = 0; v < 3; ++v) {
    for (int t = 0; t < 20; ++t) fraction(v, t) = u(rng);
  }
  for (int v = 0; v < 3; ++v) {
    double prev = 1.0;
    for (double theta : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      const std::vector<CoverageRow> rows = coverage_ranking(fraction, theta);
      double cov = -1.0;
      for (const CoverageRow& r : rows) {
        if (r.view == v) cov = r.coverage;
      }
      CHECK(cov <= prev);
      prev = cov;
    }
  }
}

TEST_CASE("ranking sorts by coverage with index tiebreak") {
  MatX fraction(3, 2);
  fraction << 1.0, 0.0,   // view 0: coverage 0.5
              1.0, 1.0,   // view 1: coverage 1.0
              0.0, 1.0;   // view 2: coverage 0.5
  const std::vector<CoverageRow> rows = coverage_ranking(fraction, 0.5);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].view == 1);
  CHECK(rows[1].view == 0);  // ties break toward the lower view index
  CHECK(rows[2].view == 2);
}

TEST_CASE("ring views surround the target") {
  const std::vector<Pose> views = ring_views(4, 1.0, 0.5, Vec3(0, 0, 0.3));
  REQUIRE(views.size() == 4);
  CHECK((views[0].position - Vec3(1, 0, 0.5)).norm() < 1e-12);
  CHECK((views[1].position - Vec3(0, 1, 0.5)).norm() < 1e-12);
  for (const Pose& v : views) {
    const Vec3 fwd = v.rotation.matrix().col(2);
    CHECK(fwd.dot((Vec3(0, 0, 0.3) - v.position).normalized()) > 0.9999);
  }
  CHECK_THROWS_AS(ring_views(0, 1.0, 0.5, Vec3::Zero()), std::invalid_argument);
}

TEST_CASE("fraction csv round trips exactly") {
  MatX fraction(3, 5);
  std::mt19937_64 rng(302);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int v = 0; v < 3; ++v) {
    for (int t = 0; t < 5; ++t) fraction(v, t) = u(rng);
  }
  fraction(0, 0) = 1.0 / 3.0;
  fraction(1, 1) = 0.1;
  fraction(2, 2) = 1e-17;
  fraction(2, 4) = 0.0;
  std::ostringstream out;
  write_fraction_csv(out, fraction);
  std::istringstream in(out.str());
  const MatX back = read_fraction_csv(in);
  REQUIRE(back.rows() == 3);
  REQUIRE(back.cols() == 5);
  for (int v = 0; v < 3; ++v) {
    for (int t = 0; t < 5; ++t) CHECK(back(v, t) == fraction(v, t));  // bitwise
  }
  std::istringstream bad("wrong header\n0,0,1.0\n");
  CHECK_THROWS_AS(read_fraction_csv(bad), std::runtime_error);
  std::istringstream badrow("view,step,fraction\n0,zero,1.0\n");
  CHECK_THROWS_AS(read_fraction_csv(badrow), std::runtime_error);
}

TEST_CASE("coverage csv lists ranks in order") {
  MatX fraction(2, 2);
  fraction << 1.0, 1.0, 0.0, 0.0;
  std::ostringstream out;
  write_coverage_csv(out, coverage_ranking(fraction, 0.5));
  CHECK(out.str() == "rank,view,coverage\n0,0,1\n1,1,0\n");
}

TEST_CASE("heatmap svg is deterministic and uses the fixed ramp") {
  MatX fraction(2, 3);
  fraction << 0.0, 0.5, 1.0, 1.0, 0.25, 0.75;
  SvgOptions opt;
  opt.deterministic = true;
  const std::string svg = coverage_heatmap_svg(fraction, opt);
  CHECK(svg == coverage_heatmap_svg(fraction, opt));
  CHECK(svg.find("generated") == std::string::npos);
  CHECK(svg.find("#445a33") != std::string::npos);  // fraction 0 endpoint
  CHECK(svg.find("#fbd35a") != std::string::npos);  // fraction 1 endpoint
  CHECK(svg.find("#a09747") != std::string::npos);  // midpoint, per-channel
  // one rect per cell plus the 10 legend swatches
  std::size_t rects = 0, at = 0;
  while ((at = svg.find("<rect", at)) != std::string::npos) {
    ++rects;
    ++at;
  }
  CHECK(rects == 2 * 3 + 10);
  SvgOptions stamped;
  CHECK(coverage_heatmap_svg(fraction, stamped).find("generated") != std::string::npos);
}

TEST_CASE("bar chart svg shows labels and whiskers") {
  SvgOptions opt;
  opt.deterministic = true;
  opt.title = "episode visibility";
  const std::vector<BarDatum> data{{"svdd", 0.93, 0.01}, {"prior_only", 0.71, 0.03}};
  const std::string svg = bar_chart_svg(data, opt);
  CHECK(svg == bar_chart_svg(data, opt));
  CHECK(svg.find("svdd") != std::string::npos);
  CHECK(svg.find("prior_only") != std::string::npos);
  CHECK(svg.find("episode visibility") != std::string::npos);
  CHECK(svg.find("0.930") != std::string::npos);
  CHECK(svg.find("nan") == std::string::npos);
}

TEST_CASE("paired comparison reports per-seed scores") {
  // Open scene: both modes see everything, so every seed ties at 1.0.
  SceneSpec scene;
  scene.intrinsics = CameraIntrinsics{320.0, 320.0, 320.0, 240.0, 640, 480};
  EEScript ee;
  ee.waypoints.push_back({0, Pose{Vec3(0, 0, -0.9), Rotation{}}, false});
  FlowScript flow;
  flow.points_local = {Vec3(0.04, 0, 0), Vec3(0, 0.04, 0)};
  flow.object_start = Pose{Vec3(0, 0, 0.3), Rotation{}};
  flow.grasp_step = 100;
  RobotProxy robot;
  robot.base = Vec3(0, 0, -1.0);
  const Pose stare = look_at(Vec3(0.5, 0, 0.3), Vec3(0, 0, 0.3));
  const std::vector<std::vector<Pose>> demos(2, std::vector<Pose>(8, stare));

  EpisodeConfig cfg;
  cfg.episode_len = 4;
  cfg.plan_horizon = 4;
  cfg.exec_horizon = 4;
  cfg.schedule_steps = 8;
  cfg.planner.M = 2;

  const PlannerComparison cmp = compare_planners(scene, ee, flow, robot, demos, cfg, 3, 99);
  CHECK(cmp.seeds == 3);
  REQUIRE(cmp.svdd_means.size() == 3);
  REQUIRE(cmp.prior_means.size() == 3);
  for (double m : cmp.svdd_means) CHECK(m == 1.0);
  for (double m : cmp.prior_means) CHECK(m == 1.0);
  CHECK(cmp.svdd_wins + cmp.ties == 3);
  CHECK(cmp.svdd_mean == Approx(1.0));
  CHECK(cmp.svdd_se == Approx(0.0).margin(1e-15));

  const nlohmann::json j = cmp.to_json();
  CHECK(j.at("seeds").get<int>() == 3);
  CHECK(j.at("svdd").at("per_seed").size() == 3);
  CHECK(j.at("prior_only").at("mean").get<double>() == Approx(1.0));
}
