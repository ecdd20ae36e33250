#pragma once

// Scripted tabletop episodes for exercising the camera planner end to end:
// an end-effector follows a waypoint script, a carried object rigidly tracks
// it after the grasp step, and a receding-horizon loop replans the camera
// trajectory every few steps against the visibility reward.

#include <algorithm>
#include <cmath>
#include <deque>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "viewplan/diffusion_core.hpp"
#include "viewplan/geom3d.hpp"
#include "viewplan/meshkit.hpp"
#include "viewplan/rng.hpp"
#include "viewplan/svdd.hpp"
#include "viewplan/visibility_reward.hpp"

namespace viewplan {

inline constexpr double kPi = 3.14159265358979323846;

struct SceneSpec {
  std::string name;
  CameraIntrinsics intrinsics;
  TriMesh environment;        // merged static occluder geometry
  double camera_step_limit = 0.15;  // per-step camera travel bound, flagged when exceeded
  double los_eps = 1e-4;      // line-of-sight endpoint shrink
};

// --- end-effector script ----------------------------------------------------

struct EEWaypoint {
  int step = 0;
  Pose pose;
  bool gripper_closed = false;
};

// Piecewise pose schedule: linear position and slerp rotation between
// waypoints, clamped outside the scripted range.  The gripper holds the state
// of the latest waypoint at or before the query step.
struct EEScript {
  std::vector<EEWaypoint> waypoints;

  void validate() const {
    if (waypoints.empty()) throw std::invalid_argument("EEScript: no waypoints");
    for (std::size_t i = 1; i < waypoints.size(); ++i) {
      if (waypoints[i].step <= waypoints[i - 1].step) {
        throw std::invalid_argument("EEScript: waypoint steps must strictly increase");
      }
    }
  }

  Pose pose_at(int t) const {
    validate();
    if (t <= waypoints.front().step) return waypoints.front().pose;
    if (t >= waypoints.back().step) return waypoints.back().pose;
    std::size_t hi = 1;
    while (waypoints[hi].step < t) ++hi;
    const EEWaypoint& a = waypoints[hi - 1];
    const EEWaypoint& b = waypoints[hi];
    if (waypoints[hi].step == t) return b.pose;
    const double s = static_cast<double>(t - a.step) / (b.step - a.step);
    Pose out;
    out.position = (1.0 - s) * a.pose.position + s * b.pose.position;
    out.rotation = slerp(a.pose.rotation, b.pose.rotation, s);
    return out;
  }

  bool gripper_at(int t) const {
    validate();
    bool state = waypoints.front().gripper_closed;
    for (const EEWaypoint& w : waypoints) {
      if (w.step > t) break;
      state = w.gripper_closed;
    }
    return state;
  }
};

// --- object motion ----------------------------------------------------------

// Marker points ride on a rigid object that sits still until the grasp step
// and then follows the end-effector's pose delta exactly.
struct FlowScript {
  std::vector<Vec3> points_local;  // marker points in the object frame
  Pose object_start;
  int grasp_step = 0;

  void validate() const {
    if (points_local.empty()) throw std::invalid_argument("FlowScript: no marker points");
  }
};

inline Pose object_pose_at(const FlowScript& flow, const EEScript& ee, int t) {
  if (t < flow.grasp_step) return flow.object_start;
  const Pose delta = ee.pose_at(t) * ee.pose_at(flow.grasp_step).inverse();
  return delta * flow.object_start;
}

inline std::vector<Vec3> flow_points_at(const FlowScript& flow, const EEScript& ee, int t) {
  const Pose obj = object_pose_at(flow, ee, t);
  std::vector<Vec3> pts;
  pts.reserve(flow.points_local.size());
  for (const Vec3& p : flow.points_local) pts.push_back(obj.to_world(p));
  return pts;
}

// Marker positions for steps t0 .. t0+T-1, all marked valid.
inline QueryPointSet future_flow(const FlowScript& flow, const EEScript& ee, int t0, int T) {
  if (T < 1) throw std::invalid_argument("future_flow: horizon must be >= 1");
  std::vector<std::vector<Vec3>> pts(T);
  for (int h = 0; h < T; ++h) pts[h] = flow_points_at(flow, ee, t0 + h);
  return QueryPointSet::all_valid(std::move(pts));
}

// Largest single-step marker displacement over [1, steps); a sanity probe for
// scripted scenes, which should keep object motion well under the camera's
// own step budget.
inline double max_flow_step(const FlowScript& flow, const EEScript& ee, int steps) {
  double worst = 0.0;
  std::vector<Vec3> prev = flow_points_at(flow, ee, 0);
  for (int t = 1; t < steps; ++t) {
    const std::vector<Vec3> cur = flow_points_at(flow, ee, t);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      worst = std::max(worst, (cur[i] - prev[i]).norm());
    }
    prev = cur;
  }
  return worst;
}

// --- robot volume -----------------------------------------------------------

// Single-capsule stand-in for the arm: a fixed base joined to the current
// end-effector position.
struct RobotProxy {
  Vec3 base{0.0, 0.0, 0.0};
  double radius = 0.03;
  int segments = 16;

  void validate() const {
    if (!(radius > 0.0)) throw std::invalid_argument("RobotProxy: radius must be > 0");
    if (segments < 8) throw std::invalid_argument("RobotProxy: segments must be >= 8");
  }

  TriMesh mesh_at(const Vec3& ee) const {
    validate();
    return make_capsule(base, ee, radius, segments);
  }
};

// --- demo generation --------------------------------------------------------

// Each demo is a noisy look-at tracker on a fixed ring: it keeps a constant
// azimuth offset from the object all episode, with per-step position jitter
// and a slowly wandering look target.  The offsets are spread evenly across
// [-angle_spread, +angle_spread], so the demo set covers many vantage points
// of the same carry.
struct DemoConfig {
  int count = 8;
  double ring_radius = 0.55;
  double ring_height = 0.55;
  double angle_spread = 1.0;   // radians
  double pos_jitter = 0.008;   // meters, iid per step
  double target_wander = 0.02; // meters, random-walk increment scale
  std::uint64_t seed = 0;

  void validate() const {
    if (count < 1) throw std::invalid_argument("DemoConfig: count must be >= 1");
    if (!(ring_radius > 0.0)) throw std::invalid_argument("DemoConfig: ring_radius must be > 0");
    if (angle_spread < 0.0 || pos_jitter < 0.0 || target_wander < 0.0) {
      throw std::invalid_argument("DemoConfig: noise scales must be >= 0");
    }
  }
};

inline std::vector<std::vector<Pose>> generate_tracking_demos(const FlowScript& flow,
                                                              const EEScript& ee, int steps,
                                                              const DemoConfig& cfg) {
  cfg.validate();
  if (steps < 1) throw std::invalid_argument("generate_tracking_demos: steps must be >= 1");
  std::vector<std::vector<Pose>> demos(cfg.count);
  for (int i = 0; i < cfg.count; ++i) {
    std::mt19937_64 rng = make_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    std::normal_distribution<double> n;
    const double offset =
        cfg.count == 1 ? 0.0 : cfg.angle_spread * (2.0 * i / (cfg.count - 1) - 1.0);
    Vec3 wander = Vec3::Zero();
    demos[i].reserve(steps);
    for (int t = 0; t < steps; ++t) {
      Vec3 centroid = Vec3::Zero();
      const std::vector<Vec3> pts = flow_points_at(flow, ee, t);
      for (const Vec3& p : pts) centroid += p;
      centroid /= static_cast<double>(pts.size());
      const double az = std::atan2(centroid.y(), centroid.x()) + offset;
      Vec3 pos(cfg.ring_radius * std::cos(az), cfg.ring_radius * std::sin(az), cfg.ring_height);
      pos += cfg.pos_jitter * Vec3(n(rng), n(rng), n(rng));
      wander += cfg.target_wander * Vec3(n(rng), n(rng), n(rng));
      demos[i].push_back(look_at(pos, centroid + wander));
    }
  }
  return demos;
}

// --- episode loop -----------------------------------------------------------

struct StepLog {
  int t = 0;
  Pose pose;
  RewardBreakdown reward;  // single-step slice: vis_bits has one row
  std::string mode;
  int chunk_index = 0;
  bool slew_exceeded = false;
};

inline nlohmann::json step_log_to_json(const StepLog& s) {
  nlohmann::json j;
  j["t"] = s.t;
  j["pos"] = {s.pose.position.x(), s.pose.position.y(), s.pose.position.z()};
  j["quat"] = {s.pose.rotation.q.w(), s.pose.rotation.q.x(), s.pose.rotation.q.y(),
               s.pose.rotation.q.z()};
  j["r_vis"] = s.reward.r_vis;
  j["r_close"] = s.reward.r_close;
  j["r_marg"] = s.reward.r_marg;
  j["r_safe"] = s.reward.r_safe;
  j["total"] = s.reward.total;
  std::string bits;
  if (!s.reward.vis_bits.empty()) {
    for (std::uint8_t b : s.reward.vis_bits[0]) bits.push_back(b ? '1' : '0');
  }
  j["vis_bits"] = bits;
  j["mode"] = s.mode;
  j["chunk_index"] = s.chunk_index;
  j["slew_exceeded"] = s.slew_exceeded;
  return j;
}

struct ChunkPlan {
  int t0 = 0;
  std::vector<Pose> poses;  // planning horizon long; the first exec_horizon are executed
  long reward_evals = 0;
  int fallback_steps = 0;
  int degenerate_rotations = 0;
};

struct EpisodeConfig {
  int episode_len = 24;
  int plan_horizon = 24;   // steps planned per chunk
  int exec_horizon = 12;   // steps executed before replanning
  int history_len = 4;     // executed poses kept available to the planner
  int schedule_steps = 50;
  SvddConfig planner;      // seed field is ignored; chunk seeds derive from `seed`
  RewardWeights weights;
  PerturbationConfig perturb;  // seed field is ignored; derived per chunk/step
  std::uint64_t seed = 0;

  void validate() const {
    if (episode_len < 1) throw std::invalid_argument("EpisodeConfig: episode_len must be >= 1");
    if (plan_horizon < 1) throw std::invalid_argument("EpisodeConfig: plan_horizon must be >= 1");
    if (exec_horizon < 1 || exec_horizon > plan_horizon) {
      throw std::invalid_argument("EpisodeConfig: exec_horizon must be in [1, plan_horizon]");
    }
    if (history_len < 0) throw std::invalid_argument("EpisodeConfig: history_len must be >= 0");
    if (schedule_steps < 1) {
      throw std::invalid_argument("EpisodeConfig: schedule_steps must be >= 1");
    }
    planner.validate();
    perturb.validate();
  }
};

struct EpisodeResult {
  std::vector<StepLog> steps;
  std::vector<ChunkPlan> chunks;
  std::vector<std::string> jsonl;  // one serialized line per executed step
  bool ok = true;
  std::string error;

  double mean_r_vis() const {
    if (steps.empty()) return 0.0;
    double sum = 0.0;
    for (const StepLog& s : steps) sum += s.reward.r_vis;
    return sum / static_cast<double>(steps.size());
  }
};

namespace detail {

inline constexpr std::uint64_t kChunkStream = 11;
inline constexpr std::uint64_t kPlanPerturbStream = 12;
inline constexpr std::uint64_t kLogPerturbStream = 13;

}  // namespace detail

// One receding-horizon episode.  Every exec_horizon steps the planner refits
// a diagonal Gaussian to the demo windows starting at the current step,
// standardizes it, and runs guided reverse diffusion over the reward of the
// decoded window.  Executed steps are scored and logged one at a time; a
// planning failure ends the episode early with the partial log intact.
inline EpisodeResult run_episode(const SceneSpec& scene, const EEScript& ee,
                                 const FlowScript& flow, const RobotProxy& robot,
                                 const std::vector<std::vector<Pose>>& demos,
                                 const EpisodeConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  scene.intrinsics.validate();
  ee.validate();
  flow.validate();
  robot.validate();

  const Bvh env_bvh = build_bvh(scene.environment);
  const NoiseSchedule sched = scaled_linear_schedule(cfg.schedule_steps);
  const int T = cfg.plan_horizon;
  const char* mode_name = cfg.planner.mode == PlanMode::prior_only ? "prior_only" : "svdd";

  EpisodeResult result;
  std::deque<Pose> history;
  Pose prev_pose;

  for (int t = 0; t < cfg.episode_len; ++t) {
    if (t % cfg.exec_horizon == 0) {
      const int chunk_index = static_cast<int>(result.chunks.size());
      try {
        // Window data for steps t .. t+T-1.
        QueryPointSet qps = future_flow(flow, ee, t, T);
        std::vector<Vec3> ee_pos(T);
        std::vector<Bvh> robot_bvhs;
        robot_bvhs.reserve(T);
        std::vector<const Bvh*> robot_ptrs(T);
        for (int h = 0; h < T; ++h) {
          ee_pos[h] = ee.pose_at(t + h).position;
          robot_bvhs.emplace_back(robot.mesh_at(ee_pos[h]));
        }
        for (int h = 0; h < T; ++h) robot_ptrs[h] = &robot_bvhs[h];

        std::vector<VecX> windows;
        windows.reserve(demos.size());
        for (const std::vector<Pose>& demo : demos) {
          if (demo.empty()) throw std::invalid_argument("run_episode: empty demo trajectory");
          std::vector<Pose> window(T);
          for (int h = 0; h < T; ++h) {
            window[h] = demo[std::min<std::size_t>(t + h, demo.size() - 1)];
          }
          windows.push_back(encode_trajectory(window));
        }
        const AnalyticPrior prior = fit_demo_prior(windows);
        const Standardizer std_map = standardizer_from_prior(prior);
        const AnalyticPrior zprior = standardized(prior, std_map);

        RewardContext ctx;
        ctx.intr = &scene.intrinsics;
        ctx.env = &env_bvh;
        ctx.robots = robot_ptrs;
        ctx.qps = &qps;
        ctx.ee_positions = ee_pos;
        ctx.weights = cfg.weights;
        ctx.perturb = cfg.perturb;
        ctx.perturb.seed = derive_seed(cfg.seed, detail::kPlanPerturbStream,
                                       static_cast<std::uint64_t>(chunk_index));
        ctx.eps = scene.los_eps;

        const RewardFn reward = [&](const VecX& z) {
          const DecodedTrajectory dec = decode_trajectory(std_map.destandardize(z));
          return composite_reward(dec.poses, ctx).total;
        };
        SvddConfig pc = cfg.planner;
        pc.seed = derive_seed(cfg.seed, detail::kChunkStream,
                              static_cast<std::uint64_t>(chunk_index));
        const RewMaxResult plan = rew_max_diff(zprior, sched, reward, pc);
        const DecodedTrajectory dec = decode_trajectory(std_map.destandardize(plan.x0));

        ChunkPlan chunk;
        chunk.t0 = t;
        chunk.poses = dec.poses;
        chunk.reward_evals = plan.reward_evals;
        chunk.fallback_steps = plan.fallback_steps;
        chunk.degenerate_rotations = dec.degenerate_rotations;
        result.chunks.push_back(std::move(chunk));
      } catch (const std::exception& e) {
        result.ok = false;
        result.error = "planning failed at step " + std::to_string(t) + ": " + e.what();
        return result;
      }
    }

    const ChunkPlan& chunk = result.chunks.back();
    const Pose pose = chunk.poses.at(t - chunk.t0);

    // Score the executed step against the world at time t.
    QueryPointSet slice = future_flow(flow, ee, t, 1);
    const Vec3 ee_now = ee.pose_at(t).position;
    const Bvh robot_now(robot.mesh_at(ee_now));
    RewardContext ctx;
    ctx.intr = &scene.intrinsics;
    ctx.env = &env_bvh;
    ctx.robots = {&robot_now};
    ctx.qps = &slice;
    ctx.ee_positions = {ee_now};
    ctx.weights = cfg.weights;
    ctx.perturb = cfg.perturb;
    ctx.perturb.seed =
        derive_seed(cfg.seed, detail::kLogPerturbStream, static_cast<std::uint64_t>(t));
    ctx.eps = scene.los_eps;

    StepLog entry;
    entry.t = t;
    entry.pose = pose;
    entry.reward = composite_reward({pose}, ctx);
    entry.mode = mode_name;
    entry.chunk_index = static_cast<int>(result.chunks.size()) - 1;
    entry.slew_exceeded =
        t > 0 && (pose.position - prev_pose.position).norm() > scene.camera_step_limit;

    const std::string line = step_log_to_json(entry).dump();
    if (log) (*log) << line << '\n';
    result.jsonl.push_back(line);
    result.steps.push_back(std::move(entry));

    history.push_back(pose);
    while (static_cast<int>(history.size()) > cfg.history_len && !history.empty()) {
      history.pop_front();
    }
    prev_pose = pose;
  }
  return result;
}

// --- built-in benchmark scene -----------------------------------------------

namespace scenes {

struct BenchmarkWorld {
  SceneSpec scene;
  EEScript ee;
  FlowScript flow;
  RobotProxy robot;
  std::vector<Pose> fixed_views;  // static cameras for coverage comparison
  DemoConfig demo_defaults;
  int episode_len = 24;
};

// A carried object circles a central pillar while three oriented panels hang
// between the camera ring and the carry circle.  No fixed vantage point sees
// the markers at every step, and every tracking azimuth is blocked for part
// of the carry, so good visibility requires changing the viewpoint over time.
inline BenchmarkWorld occluder_benchmark() {
  BenchmarkWorld w;
  w.scene.name = "occluder_benchmark";
  w.scene.intrinsics = CameraIntrinsics{320.0, 320.0, 320.0, 240.0, 640, 480};
  w.scene.camera_step_limit = 0.15;
  w.scene.los_eps = 1e-4;

  TriMesh env = make_quad(Vec3(-1.0, -1.0, 0.0), Vec3(2.0, 0.0, 0.0), Vec3(0.0, 2.0, 0.0));
  env.append(make_box(Vec3(0.0, 0.0, 0.4), Vec3(0.12, 0.12, 0.4)));
  for (double az_deg : {90.0, 210.0, 330.0}) {
    const double az = az_deg * kPi / 180.0;
    Pose placement;
    placement.position = Vec3(0.45 * std::cos(az), 0.45 * std::sin(az), 0.45);
    placement.rotation = Rotation::from_axis_angle(Vec3(0.0, 0.0, az));
    env.append(make_box(Vec3::Zero(), Vec3(0.01, 0.08, 0.30)).transformed(placement));
  }
  w.scene.environment = std::move(env);

  // Approach from above, grasp at step 2, then carry around the pillar at a
  // rate that keeps a 0.55 m tracking ring inside the 0.15 m step budget.
  const double carry_radius = 0.3;
  const double carry_height = 0.39;
  w.ee.waypoints.push_back({0, Pose{Vec3(carry_radius, 0.0, 0.55), Rotation{}}, false});
  for (int t = 2; t <= 23; ++t) {
    const double theta = 2.0 * kPi * (t - 2) / 24.0;
    Pose p;
    p.position = Vec3(carry_radius * std::cos(theta), carry_radius * std::sin(theta),
                      carry_height);
    w.ee.waypoints.push_back({t, p, true});
  }

  w.flow.points_local = {Vec3(0.04, 0, 0),  Vec3(-0.04, 0, 0), Vec3(0, 0.04, 0),
                         Vec3(0, -0.04, 0), Vec3(0, 0, 0.04),  Vec3(0, 0, -0.04)};
  w.flow.object_start = Pose{Vec3(carry_radius, 0.0, 0.27), Rotation{}};
  w.flow.grasp_step = 2;

  w.robot.base = Vec3(0.9, 0.0, 0.1);
  w.robot.radius = 0.03;
  w.robot.segments = 16;

  for (double az_deg : {45.0, 135.0, 225.0, 315.0}) {
    const double az = az_deg * kPi / 180.0;
    w.fixed_views.push_back(
        look_at(Vec3(0.8 * std::cos(az), 0.8 * std::sin(az), 0.5), Vec3(0.0, 0.0, 0.27)));
  }

  w.demo_defaults = DemoConfig{};
  w.episode_len = 24;
  return w;
}

}  // namespace scenes

}  // namespace viewplan
