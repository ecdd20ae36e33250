#pragma once

// JSON run configuration: one self-describing document per invocation, with
// strict schema checking (unknown keys rejected, diagnostics carry the full
// field path) and dotted-path command-line overrides.

#include <cstdint>
#include <initializer_list>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "viewplan/coverage.hpp"
#include "viewplan/simworld.hpp"
#include "viewplan/svdd_battery.hpp"

namespace viewplan {

struct ConfigError : std::runtime_error {
  std::string path;

  ConfigError(std::string field_path, const std::string& msg)
      : std::runtime_error(field_path.empty() ? msg : field_path + ": " + msg),
        path(std::move(field_path)) {}
};

namespace cfgdetail {

using nlohmann::json;

inline std::string join(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
}

inline void reject_unknown(const json& obj, const std::string& path,
                           std::initializer_list<const char*> allowed) {
  require_object(obj, path);
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!ok.count(key)) throw ConfigError(join(path, key), "unknown key");
  }
}

inline double get_num(const json& obj, const std::string& path, const char* key, double def) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(join(path, key), "expected a number");
  return v.get<double>();
}

inline int get_int(const json& obj, const std::string& path, const char* key, int def) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError(join(path, key), "expected an integer");
  return v.get<int>();
}

inline std::uint64_t get_u64(const json& obj, const std::string& path, const char* key,
                             std::uint64_t def) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0)) {
    throw ConfigError(join(path, key), "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

inline bool get_bool(const json& obj, const std::string& path, const char* key, bool def) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError(join(path, key), "expected a boolean");
  return v.get<bool>();
}

inline std::string get_str(const json& obj, const std::string& path, const char* key,
                           const std::string& def) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(join(path, key), "expected a string");
  return v.get<std::string>();
}

inline Vec3 get_vec3(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() ||
      !v[2].is_number()) {
    throw ConfigError(path, "expected an array of 3 numbers");
  }
  return Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
}

inline Rotation get_quat(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 4) throw ConfigError(path, "expected an array of 4 numbers");
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError(path, "expected an array of 4 numbers");
  }
  try {
    return Rotation::from_quaternion(v[0].get<double>(), v[1].get<double>(), v[2].get<double>(),
                                     v[3].get<double>());
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
}

}  // namespace cfgdetail

// Everything a subcommand needs, resolved against defaults.
struct RunSetup {
  scenes::BenchmarkWorld world;
  DemoConfig demo_cfg;
  EpisodeConfig episode;
  std::vector<std::uint64_t> seeds{0};
  double coverage_theta = 0.7;
  std::string out_dir = "out";
  bool deterministic_svg = false;
  BatteryConfig battery;
  int bench_triangles = 500;
  int bench_segments = 100000;
  std::vector<int> bench_planner_m{1, 16};
  std::uint64_t bench_seed = 0;
};

// Dotted-path override: "planner.alpha=0.25". The value is parsed as JSON if
// possible (numbers, booleans, arrays) and falls back to a raw string.
inline void apply_override(nlohmann::json& root, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("", "override must look like section.key=value: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::json* node = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ConfigError(path, "empty key segment in override");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = nlohmann::json::object();
    node = &(*node)[key];
    if (!node->is_object()) throw ConfigError(path.substr(0, dot), "override path crosses a non-object");
    start = dot + 1;
  }
}

// Parse and validate one config document against the full schema.  Any
// unknown key, type mismatch, or module-level validation failure becomes a
// ConfigError naming the offending field.
inline RunSetup parse_run_config(const nlohmann::json& root) {
  using namespace cfgdetail;
  reject_unknown(root, "",
                 {"scene", "ee_script", "flow_script", "demos", "planner", "reward", "episode",
                  "seeds", "coverage", "output", "battery", "bench"});
  RunSetup setup;
  setup.world = scenes::occluder_benchmark();

  if (root.contains("scene")) {
    const json& s = root.at("scene");
    reject_unknown(s, "scene", {"preset", "camera_step_limit", "los_eps", "intrinsics"});
    const std::string preset = get_str(s, "scene", "preset", "occluder_benchmark");
    if (preset != "occluder_benchmark") {
      throw ConfigError("scene.preset", "unknown preset '" + preset + "'");
    }
    setup.world.scene.camera_step_limit =
        get_num(s, "scene", "camera_step_limit", setup.world.scene.camera_step_limit);
    setup.world.scene.los_eps = get_num(s, "scene", "los_eps", setup.world.scene.los_eps);
    if (s.contains("intrinsics")) {
      const json& in = s.at("intrinsics");
      reject_unknown(in, "scene.intrinsics", {"fx", "fy", "cx", "cy", "width", "height"});
      CameraIntrinsics& intr = setup.world.scene.intrinsics;
      intr.fx = get_num(in, "scene.intrinsics", "fx", intr.fx);
      intr.fy = get_num(in, "scene.intrinsics", "fy", intr.fy);
      intr.cx = get_num(in, "scene.intrinsics", "cx", intr.cx);
      intr.cy = get_num(in, "scene.intrinsics", "cy", intr.cy);
      intr.width = get_int(in, "scene.intrinsics", "width", intr.width);
      intr.height = get_int(in, "scene.intrinsics", "height", intr.height);
    }
  }

  if (root.contains("ee_script")) {
    const json& s = root.at("ee_script");
    reject_unknown(s, "ee_script", {"waypoints"});
    if (!s.contains("waypoints") || !s.at("waypoints").is_array() || s.at("waypoints").empty()) {
      throw ConfigError("ee_script.waypoints", "expected a non-empty array");
    }
    EEScript script;
    int idx = 0;
    for (const json& w : s.at("waypoints")) {
      const std::string wp = "ee_script.waypoints[" + std::to_string(idx++) + "]";
      reject_unknown(w, wp, {"step", "pos", "quat", "gripper"});
      EEWaypoint way;
      way.step = get_int(w, wp, "step", 0);
      if (!w.contains("pos")) throw ConfigError(wp + ".pos", "required");
      way.pose.position = get_vec3(w.at("pos"), wp + ".pos");
      if (w.contains("quat")) way.pose.rotation = get_quat(w.at("quat"), wp + ".quat");
      way.gripper_closed = get_bool(w, wp, "gripper", false);
      script.waypoints.push_back(way);
    }
    setup.world.ee = std::move(script);
  }

  if (root.contains("flow_script")) {
    const json& s = root.at("flow_script");
    reject_unknown(s, "flow_script", {"points_local", "object_start", "grasp_step"});
    if (s.contains("points_local")) {
      if (!s.at("points_local").is_array() || s.at("points_local").empty()) {
        throw ConfigError("flow_script.points_local", "expected a non-empty array");
      }
      setup.world.flow.points_local.clear();
      int idx = 0;
      for (const json& p : s.at("points_local")) {
        setup.world.flow.points_local.push_back(
            get_vec3(p, "flow_script.points_local[" + std::to_string(idx++) + "]"));
      }
    }
    if (s.contains("object_start")) {
      const json& o = s.at("object_start");
      reject_unknown(o, "flow_script.object_start", {"pos", "quat"});
      if (o.contains("pos")) {
        setup.world.flow.object_start.position =
            get_vec3(o.at("pos"), "flow_script.object_start.pos");
      }
      if (o.contains("quat")) {
        setup.world.flow.object_start.rotation =
            get_quat(o.at("quat"), "flow_script.object_start.quat");
      }
    }
    setup.world.flow.grasp_step =
        get_int(s, "flow_script", "grasp_step", setup.world.flow.grasp_step);
  }

  setup.demo_cfg = setup.world.demo_defaults;
  if (root.contains("demos")) {
    const json& s = root.at("demos");
    reject_unknown(s, "demos",
                   {"count", "ring_radius", "ring_height", "angle_spread", "pos_jitter",
                    "target_wander", "seed"});
    setup.demo_cfg.count = get_int(s, "demos", "count", setup.demo_cfg.count);
    setup.demo_cfg.ring_radius = get_num(s, "demos", "ring_radius", setup.demo_cfg.ring_radius);
    setup.demo_cfg.ring_height = get_num(s, "demos", "ring_height", setup.demo_cfg.ring_height);
    setup.demo_cfg.angle_spread =
        get_num(s, "demos", "angle_spread", setup.demo_cfg.angle_spread);
    setup.demo_cfg.pos_jitter = get_num(s, "demos", "pos_jitter", setup.demo_cfg.pos_jitter);
    setup.demo_cfg.target_wander =
        get_num(s, "demos", "target_wander", setup.demo_cfg.target_wander);
    setup.demo_cfg.seed = get_u64(s, "demos", "seed", setup.demo_cfg.seed);
  }

  setup.episode.episode_len = setup.world.episode_len;
  if (root.contains("episode")) {
    const json& s = root.at("episode");
    reject_unknown(s, "episode", {"length", "plan_horizon", "exec_horizon", "history_len"});
    setup.episode.episode_len = get_int(s, "episode", "length", setup.episode.episode_len);
    setup.episode.plan_horizon =
        get_int(s, "episode", "plan_horizon", setup.episode.plan_horizon);
    setup.episode.exec_horizon =
        get_int(s, "episode", "exec_horizon", setup.episode.exec_horizon);
    setup.episode.history_len = get_int(s, "episode", "history_len", setup.episode.history_len);
  }

  if (root.contains("planner")) {
    const json& s = root.at("planner");
    reject_unknown(s, "planner",
                   {"mode", "alpha", "candidates", "schedule_steps", "stride", "eta"});
    const std::string mode = get_str(s, "planner", "mode", "svdd");
    if (mode == "svdd") {
      setup.episode.planner.mode = PlanMode::svdd;
    } else if (mode == "prior_only") {
      setup.episode.planner.mode = PlanMode::prior_only;
    } else {
      throw ConfigError("planner.mode", "expected 'svdd' or 'prior_only'");
    }
    setup.episode.planner.alpha = get_num(s, "planner", "alpha", setup.episode.planner.alpha);
    setup.episode.planner.M = get_int(s, "planner", "candidates", setup.episode.planner.M);
    setup.episode.schedule_steps =
        get_int(s, "planner", "schedule_steps", setup.episode.schedule_steps);
    setup.episode.planner.stride = get_int(s, "planner", "stride", setup.episode.planner.stride);
    setup.episode.planner.eta = get_num(s, "planner", "eta", setup.episode.planner.eta);
  }

  if (root.contains("reward")) {
    const json& s = root.at("reward");
    reject_unknown(s, "reward",
                   {"lambda_c", "lambda_m", "lambda_s", "lambda_var", "sigma_safe", "perturb"});
    RewardWeights& w = setup.episode.weights;
    w.lambda_c = get_num(s, "reward", "lambda_c", w.lambda_c);
    w.lambda_m = get_num(s, "reward", "lambda_m", w.lambda_m);
    w.lambda_s = get_num(s, "reward", "lambda_s", w.lambda_s);
    w.lambda_var = get_num(s, "reward", "lambda_var", w.lambda_var);
    w.sigma_safe = get_num(s, "reward", "sigma_safe", w.sigma_safe);
    if (s.contains("perturb")) {
      const json& p = s.at("perturb");
      reject_unknown(p, "reward.perturb", {"J", "sigma_pos", "sigma_rot"});
      setup.episode.perturb.J = get_int(p, "reward.perturb", "J", setup.episode.perturb.J);
      setup.episode.perturb.sigma_pos =
          get_num(p, "reward.perturb", "sigma_pos", setup.episode.perturb.sigma_pos);
      setup.episode.perturb.sigma_rot =
          get_num(p, "reward.perturb", "sigma_rot", setup.episode.perturb.sigma_rot);
    }
  }

  if (root.contains("seeds")) {
    const json& s = root.at("seeds");
    setup.seeds.clear();
    if (s.is_array()) {
      for (const json& v : s) {
        if (!v.is_number_integer() || v.get<long long>() < 0) {
          throw ConfigError("seeds", "expected non-negative integers");
        }
        setup.seeds.push_back(v.get<std::uint64_t>());
      }
      if (setup.seeds.empty()) throw ConfigError("seeds", "expected at least one seed");
    } else if (s.is_object()) {
      reject_unknown(s, "seeds", {"base", "count"});
      const std::uint64_t base = get_u64(s, "seeds", "base", 0);
      const int count = get_int(s, "seeds", "count", 1);
      if (count < 1) throw ConfigError("seeds.count", "expected a positive count");
      for (int i = 0; i < count; ++i) setup.seeds.push_back(base + static_cast<std::uint64_t>(i));
    } else {
      throw ConfigError("seeds", "expected an array or {base, count}");
    }
  }

  if (root.contains("coverage")) {
    const json& s = root.at("coverage");
    reject_unknown(s, "coverage", {"theta", "ring"});
    setup.coverage_theta = get_num(s, "coverage", "theta", setup.coverage_theta);
    if (!(setup.coverage_theta >= 0.0 && setup.coverage_theta <= 1.0)) {
      throw ConfigError("coverage.theta", "expected a value in [0, 1]");
    }
    if (s.contains("ring")) {
      const json& r = s.at("ring");
      reject_unknown(r, "coverage.ring", {"count", "radius", "height"});
      const int count = get_int(r, "coverage.ring", "count", 4);
      const double radius = get_num(r, "coverage.ring", "radius", 0.8);
      const double height = get_num(r, "coverage.ring", "height", 0.5);
      try {
        setup.world.fixed_views =
            ring_views(count, radius, height, setup.world.flow.object_start.position);
      } catch (const std::invalid_argument& e) {
        throw ConfigError("coverage.ring", e.what());
      }
    }
  }

  if (root.contains("output")) {
    const json& s = root.at("output");
    reject_unknown(s, "output", {"dir", "deterministic_svg"});
    setup.out_dir = get_str(s, "output", "dir", setup.out_dir);
    setup.deterministic_svg = get_bool(s, "output", "deterministic_svg", setup.deterministic_svg);
  }

  if (root.contains("battery")) {
    const json& s = root.at("battery");
    reject_unknown(s, "battery",
                   {"alphas", "tilted_alpha", "candidates", "schedule_steps", "samples_tilted",
                    "samples_ks", "samples_mono", "weight_schedule_steps", "weight_candidates",
                    "seed", "corrupt_weights"});
    if (s.contains("alphas")) {
      if (!s.at("alphas").is_array()) throw ConfigError("battery.alphas", "expected an array");
      setup.battery.alphas.clear();
      for (const json& a : s.at("alphas")) {
        if (!a.is_number()) throw ConfigError("battery.alphas", "expected numbers");
        setup.battery.alphas.push_back(a.get<double>());
      }
      if (setup.battery.alphas.empty()) {
        throw ConfigError("battery.alphas", "expected at least one value");
      }
    }
    setup.battery.tilted_alpha =
        get_num(s, "battery", "tilted_alpha", setup.battery.tilted_alpha);
    setup.battery.M = get_int(s, "battery", "candidates", setup.battery.M);
    setup.battery.K = get_int(s, "battery", "schedule_steps", setup.battery.K);
    setup.battery.samples_tilted =
        get_int(s, "battery", "samples_tilted", setup.battery.samples_tilted);
    setup.battery.samples_ks = get_int(s, "battery", "samples_ks", setup.battery.samples_ks);
    setup.battery.samples_mono =
        get_int(s, "battery", "samples_mono", setup.battery.samples_mono);
    setup.battery.weight_K =
        get_int(s, "battery", "weight_schedule_steps", setup.battery.weight_K);
    setup.battery.weight_M = get_int(s, "battery", "weight_candidates", setup.battery.weight_M);
    setup.battery.seed = get_u64(s, "battery", "seed", setup.battery.seed);
    setup.battery.corrupt_weights =
        get_bool(s, "battery", "corrupt_weights", setup.battery.corrupt_weights);
  }

  if (root.contains("bench")) {
    const json& s = root.at("bench");
    reject_unknown(s, "bench", {"triangles", "segments", "planner_candidates", "seed"});
    setup.bench_triangles = get_int(s, "bench", "triangles", setup.bench_triangles);
    setup.bench_segments = get_int(s, "bench", "segments", setup.bench_segments);
    if (s.contains("planner_candidates")) {
      if (!s.at("planner_candidates").is_array()) {
        throw ConfigError("bench.planner_candidates", "expected an array of integers");
      }
      setup.bench_planner_m.clear();
      for (const json& m : s.at("planner_candidates")) {
        if (!m.is_number_integer() || m.get<int>() < 1) {
          throw ConfigError("bench.planner_candidates", "expected positive integers");
        }
        setup.bench_planner_m.push_back(m.get<int>());
      }
    }
    if (setup.bench_triangles < 1 || setup.bench_segments < 1) {
      throw ConfigError("bench", "sizes must be positive");
    }
    setup.bench_seed = get_u64(s, "bench", "seed", setup.bench_seed);
  }

  // Module-level validation, surfaced with a section path.
  const auto rethrow = [](const char* section, const auto& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(section, e.what());
    }
  };
  rethrow("scene.intrinsics", [&] { setup.world.scene.intrinsics.validate(); });
  rethrow("ee_script", [&] { setup.world.ee.validate(); });
  rethrow("flow_script", [&] { setup.world.flow.validate(); });
  rethrow("demos", [&] { setup.demo_cfg.validate(); });
  rethrow("planner", [&] { setup.episode.planner.validate(); });
  rethrow("reward.perturb", [&] { setup.episode.perturb.validate(); });
  rethrow("episode", [&] { setup.episode.validate(); });
  rethrow("battery", [&] { setup.battery.validate(); });
  return setup;
}

inline RunSetup parse_run_config_text(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  return parse_run_config(root);
}

}  // namespace viewplan
