#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mepoly/numerics.hpp"

namespace mepoly {

struct Rect {
  double xmin = 0.0, xmax = 0.0, ymin = 0.0, ymax = 0.0;

  bool contains(double x, double y) const {
    return x >= xmin && x <= xmax && y >= ymin && y <= ymax;
  }
  bool strictly_inside(double x, double y) const {
    return x > xmin && x < xmax && y > ymin && y < ymax;
  }
};

struct GoalRegion {
  Rect rect;
  double reward = 1.0;
};

struct DeathRegion {
  Rect rect;
  double penalty = 1.0;
};

// 2D navigation world on [-1,1]^2 with axis-aligned walls, sparse region
// rewards and simple kinematics p' = p + v * dt.
struct SmoothWorld {
  std::vector<Rect> walls;
  std::vector<GoalRegion> goals;
  std::vector<DeathRegion> deaths;
  std::array<double, 2> start{0.0, 0.0};
  double dt = 0.1;
  double v_max = 1.0;
  int max_steps = 64;
};

enum class TerminalCause { none, goal, death, timeout };

struct Transition {
  std::array<double, 2> state{};
  std::array<double, 2> action{};
  double reward = 0.0;
  std::array<double, 2> next_state{};
  bool done = false;
  TerminalCause cause = TerminalCause::none;
  int goal_index = -1;
};

// One kinematic step. Velocity is clamped per-axis to v_max; the segment to
// the proposed point stops at the first wall or boundary contact (full stop,
// no sliding). `steps_taken` counts steps already played this episode and
// drives the timeout flag.
Transition world_step(const SmoothWorld& world, std::array<double, 2> state,
                      std::array<double, 2> action, int steps_taken = 0);

/// True when the point is valid: inside the box and not strictly inside a wall.
bool position_valid(const SmoothWorld& world, double x, double y);

// Layout config text: '#' comments plus `key = values` lines with fields
// start, dt, v_max, max_steps and repeatable wall/goal/death rows.
SmoothWorld load_layout(std::string_view text);
SmoothWorld load_layout_file(const std::string& path);
std::string serialize_layout(const SmoothWorld& world);

/// Shipped layouts: "two_goals", "slit_wall", "obstacle_detour".
SmoothWorld builtin_layout(const std::string& name);
std::vector<std::string> builtin_layout_names();

enum class ManifoldKind { lemniscate, two_moons };
ManifoldKind manifold_kind_from_name(const std::string& name);

// Target point sets inside [-1,1]^2. Lemniscate: 0.7*(cos t, sin t cos t).
// Two moons: radius-0.5 half circles offset by (+0.25,-0.15) and (-0.25,+0.15),
// exactly half the points in each.
std::vector<double> make_manifold(ManifoldKind kind, int n, Rng& rng);

// Single-state environment: the reward of an action is its kernel distance
// to the target manifold.
struct BanditEnv {
  std::vector<double> target_points;  // flattened 2D
  double sigma = 0.05;
  double alpha = 0.05;
};

double bandit_step(const BanditEnv& env, std::span<const double> action);

}  // namespace mepoly
