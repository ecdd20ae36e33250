#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "viewplan/rng.hpp"
#include "viewplan/visibility_reward.hpp"

using namespace viewplan;
using Catch::Approx;

namespace {

CameraIntrinsics wide_intr() { return CameraIntrinsics{320, 320, 320, 240, 640, 480}; }

// Camera at the origin looking down +x; two points ahead, a small wall whose
// span blocks only the second point's sight line.
struct SplitScene {
  CameraIntrinsics intr = wide_intr();
  TriMesh wall = make_quad(Vec3(0.5, -0.3, -0.2), Vec3(0, 0.28, 0), Vec3(0, 0, 0.4));
  Bvh env{wall};
  QueryPointSet qps = QueryPointSet::all_valid({{Vec3(1, 0.1, 0), Vec3(1, -0.1, 0)}});
  std::vector<Pose> traj{look_at(Vec3(0, 0, 0), Vec3(1, 0, 0))};

  RewardContext ctx() const {
    RewardContext c;
    c.intr = &intr;
    c.env = &env;
    c.qps = &qps;
    c.ee_positions = {Vec3(1, 0, 0)};
    c.perturb.seed = 5;
    return c;
  }
};

}  // namespace

TEST_CASE("point visibility combines sight line and field of view") {
  const CameraIntrinsics intr = wide_intr();
  const Pose cam = look_at(Vec3(0, 0, 0), Vec3(1, 0, 0));
  CHECK(point_visibility(cam, intr, Vec3(1, 0, 0), OccluderSet{}));
  // Behind the camera.
  CHECK_FALSE(point_visibility(cam, intr, Vec3(-1, 0, 0), OccluderSet{}));
  // In front but far outside the image.
  CHECK_FALSE(point_visibility(cam, intr, Vec3(0.1, 5, 0), OccluderSet{}));
  // Occluded by a wall.
  const TriMesh wall = make_quad(Vec3(0.5, -1, -1), Vec3(0, 2, 0), Vec3(0, 0, 2));
  const Bvh env(wall);
  CHECK_FALSE(point_visibility(cam, intr, Vec3(1, 0, 0), OccluderSet{&env, nullptr}));
  // The same wall as a robot volume occludes too.
  CHECK_FALSE(point_visibility(cam, intr, Vec3(1, 0, 0), OccluderSet{nullptr, &env}));
}

TEST_CASE("half-occluded point pair scores one half") {
  SplitScene s;
  const RewardContext ctx = s.ctx();
  const VisibilityScore vis = r_vis(s.traj, ctx);
  CHECK(vis.value == Approx(0.5).epsilon(1e-12));
  CHECK_FALSE(vis.degenerate);
  REQUIRE(vis.bits.size() == 1);
  CHECK(vis.bits[0][0] == 1);
  CHECK(vis.bits[0][1] == 0);
}

TEST_CASE("masked points leave every denominator") {
  SplitScene s;
  s.qps.valid[0][1] = 0;  // drop the occluded point
  const RewardContext ctx = s.ctx();
  const VisibilityScore vis = r_vis(s.traj, ctx);
  CHECK(vis.value == Approx(1.0).epsilon(1e-12));
  CHECK(vis.bits[0][1] == 0);
  // r_close averages only the remaining point.
  const double d = (s.traj[0].position - s.qps.points[0][0]).norm();
  CHECK(r_close(s.traj, s.qps) == Approx(std::exp(-d)).epsilon(1e-12));
}

TEST_CASE("all-masked input flags degeneracy") {
  SplitScene s;
  s.qps.valid[0][0] = 0;
  s.qps.valid[0][1] = 0;
  const RewardContext ctx = s.ctx();
  const VisibilityScore vis = r_vis(s.traj, ctx);
  CHECK(vis.value == 0.0);
  CHECK(vis.degenerate);
  const RewardBreakdown b = composite_reward(s.traj, ctx);
  CHECK(b.degenerate);
}

TEST_CASE("r_close matches the closed form") {
  // Camera at the origin; points at distances 0 and 1.
  QueryPointSet qps = QueryPointSet::all_valid({{Vec3(0, 0, 0), Vec3(1, 0, 0)}});
  const std::vector<Pose> traj{Pose::identity()};
  CHECK(r_close(traj, qps) == Approx(0.6839397205857212).epsilon(1e-12));
  // Moving away strictly decreases the term.
  const std::vector<Pose> farther{Pose{Vec3(-1, 0, 0), Rotation::identity()}};
  CHECK(r_close(farther, qps) < r_close(traj, qps));
  CHECK(r_close(traj, qps) <= 1.0);
  CHECK(r_close(traj, qps) > 0.0);
}

TEST_CASE("margin combination follows min times variance discount") {
  CHECK(margin_combine({1.0, 0.0}, 0.1) == 0.0);
  CHECK(margin_combine({1.0, 1.0}, 0.1) == Approx(1.0).epsilon(1e-15));
  // {0.5, 1.0}: min 0.5, population variance 0.0625.
  CHECK(margin_combine({0.5, 1.0}, 0.1) == Approx(0.496875).epsilon(1e-12));
  CHECK_THROWS_AS(margin_combine({}, 0.1), std::invalid_argument);
}

TEST_CASE("zero pose noise collapses the margin to plain visibility") {
  SplitScene s;
  RewardContext ctx = s.ctx();
  ctx.perturb.sigma_pos = 0.0;
  ctx.perturb.sigma_rot = 0.0;
  const double margin = r_marg(s.traj, ctx);
  const double vis = r_vis(s.traj, ctx).value;
  CHECK(margin == vis);  // exact
}

TEST_CASE("margin rollouts are deterministic in the seed") {
  SplitScene s;
  RewardContext ctx = s.ctx();
  ctx.perturb.seed = 77;
  const double a = r_marg(s.traj, ctx);
  const double b = r_marg(s.traj, ctx);
  CHECK(a == b);
  CHECK(r_marg(s.traj, ctx) <= r_vis(s.traj, ctx).value + 1e-12);
}

TEST_CASE("r_safe matches the closed form and stays negative") {
  const std::vector<Pose> traj{Pose{Vec3(0.1, 0, 0), Rotation::identity()}};
  const std::vector<Vec3> ee{Vec3(0, 0, 0)};
  CHECK(r_safe(traj, ee, 0.1) == Approx(-0.36787944117144233).epsilon(1e-12));
  const std::vector<Pose> far{Pose{Vec3(5, 0, 0), Rotation::identity()}};
  CHECK(r_safe(far, ee, 0.1) < 0.0);
  CHECK(r_safe(far, ee, 0.1) > r_safe(traj, ee, 0.1));
  CHECK_THROWS_AS(r_safe(traj, ee, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(r_safe(traj, {}, 0.1), std::invalid_argument);
}

TEST_CASE("composite total is the weighted sum of its parts") {
  SplitScene s;
  RewardContext ctx = s.ctx();
  ctx.weights = RewardWeights{0.3, 0.7, 0.2, 0.1, 0.1};
  const RewardBreakdown b = composite_reward(s.traj, ctx);
  const double expect = b.r_vis + 0.3 * b.r_close + 0.7 * b.r_marg + 0.2 * b.r_safe;
  CHECK(b.total == Approx(expect).epsilon(1e-15));
  REQUIRE(b.vis_bits.size() == 1);
  CHECK(b.vis_bits[0][0] == 1);
}

TEST_CASE("zero lambdas collapse the composite to visibility") {
  SplitScene s;
  RewardContext ctx = s.ctx();
  ctx.weights.lambda_c = 0.0;
  ctx.weights.lambda_m = 0.0;
  ctx.weights.lambda_s = 0.0;
  const RewardBreakdown b = composite_reward(s.traj, ctx);
  CHECK(b.total == b.r_vis);  // exact
}

TEST_CASE("composite is affine in each lambda") {
  // Exact case: nothing visible, other lambdas zero, so the lambda_c finite
  // difference is r_close with no rounding at all.
  SplitScene s;
  s.traj = {look_at(Vec3(0, 0, 0), Vec3(-1, 0, 0))};  // facing away from both points
  RewardContext ctx = s.ctx();
  ctx.weights.lambda_m = 0.0;
  ctx.weights.lambda_s = 0.0;
  ctx.weights.lambda_c = 1.0;
  const RewardBreakdown hi = composite_reward(s.traj, ctx);
  REQUIRE(hi.r_vis == 0.0);
  ctx.weights.lambda_c = 0.0;
  const RewardBreakdown lo = composite_reward(s.traj, ctx);
  CHECK(hi.total - lo.total == hi.r_close);  // exact

  // Generic scene: the same difference holds to rounding noise.
  SplitScene g;
  RewardContext gctx = g.ctx();
  gctx.weights.lambda_c = 1.0;
  const RewardBreakdown ghi = composite_reward(g.traj, gctx);
  gctx.weights.lambda_c = 0.0;
  const RewardBreakdown glo = composite_reward(g.traj, gctx);
  CHECK(ghi.total - glo.total == Approx(ghi.r_close).epsilon(1e-12));
}

TEST_CASE("removing occluders never hurts visibility") {
  std::mt19937_64 rng = make_rng(55);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const CameraIntrinsics intr = wide_intr();
  for (int scene = 0; scene < 100; ++scene) {
    std::vector<TriMesh> boxes;
    for (int i = 0; i < 4; ++i) {
      boxes.push_back(make_box(Vec3(u(rng), u(rng), u(rng)),
                               Vec3(0.05 + 0.2 * std::abs(u(rng)), 0.05 + 0.2 * std::abs(u(rng)),
                                    0.05 + 0.2 * std::abs(u(rng)))));
    }
    TriMesh full;
    for (const auto& b : boxes) full.append(b);
    const int drop = scene % 4;
    TriMesh reduced;
    for (int i = 0; i < 4; ++i) {
      if (i != drop) reduced.append(boxes[i]);
    }
    const Bvh env_full(full), env_reduced(reduced);

    std::vector<std::vector<Vec3>> pts(1);
    for (int i = 0; i < 5; ++i) pts[0].emplace_back(2 * u(rng), 2 * u(rng), 2 * u(rng));
    const QueryPointSet qps = QueryPointSet::all_valid(pts);
    const Vec3 eye(2.5 * u(rng), 2.5 * u(rng), 2.5 * u(rng));
    Vec3 target(u(rng), u(rng), u(rng));
    if ((target - eye).norm() < 1e-3) target += Vec3(0.5, 0.5, 0);
    const std::vector<Pose> traj{look_at(eye, target)};

    RewardContext ctx;
    ctx.intr = &intr;
    ctx.qps = &qps;
    ctx.ee_positions = {Vec3(0, 0, 0)};
    ctx.env = &env_full;
    const double with_all = r_vis(traj, ctx).value;
    ctx.env = &env_reduced;
    const double with_fewer = r_vis(traj, ctx).value;
    CHECK(with_fewer >= with_all);
  }
}

TEST_CASE("masked denominators match a direct recount") {
  std::mt19937_64 rng = make_rng(56);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution mask(0.3);
  const CameraIntrinsics intr = wide_intr();
  const TriMesh wall = make_box(Vec3(0.8, 0, 0), Vec3(0.05, 0.4, 0.4));
  const Bvh env(wall);
  for (int rep = 0; rep < 20; ++rep) {
    const int T = 3, N = 4;
    QueryPointSet qps;
    qps.points.resize(T);
    qps.valid.resize(T);
    std::vector<Pose> traj;
    for (int t = 0; t < T; ++t) {
      traj.push_back(look_at(Vec3(-0.5 + 0.1 * u(rng), u(rng), u(rng)), Vec3(1.5, 0, 0)));
      for (int i = 0; i < N; ++i) {
        qps.points[t].emplace_back(1.5, 0.5 * u(rng), 0.5 * u(rng));
        qps.valid[t].push_back(mask(rng) ? 0 : 1);
      }
    }
    RewardContext ctx;
    ctx.intr = &intr;
    ctx.env = &env;
    ctx.qps = &qps;
    const VisibilityScore vis = r_vis(traj, ctx);

    int valid = 0, visible = 0;
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < N; ++i) {
        if (!qps.valid[t][i]) {
          CHECK(vis.bits[t][i] == 0);
          continue;
        }
        ++valid;
        const bool expect =
            point_visibility(traj[t], intr, qps.points[t][i], OccluderSet{&env, nullptr});
        CHECK(static_cast<bool>(vis.bits[t][i]) == expect);
        visible += expect ? 1 : 0;
      }
    }
    if (valid == 0) {
      CHECK(vis.degenerate);
    } else {
      CHECK(vis.value == Approx(static_cast<double>(visible) / valid).epsilon(1e-12));
    }
  }
}

TEST_CASE("shape mismatches are rejected") {
  SplitScene s;
  const RewardContext ctx = s.ctx();
  const std::vector<Pose> wrong(2, Pose::identity());
  CHECK_THROWS_AS(r_vis(wrong, ctx), std::invalid_argument);
  CHECK_THROWS_AS(r_close(wrong, s.qps), std::invalid_argument);
  RewardContext bad = ctx;
  bad.perturb.J = 0;
  CHECK_THROWS_AS(r_marg(s.traj, bad), std::invalid_argument);
}
