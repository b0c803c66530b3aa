#include "mepoly/environments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mepoly/maxent_fit.hpp"

namespace mepoly {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Entry time of the segment p + t*(d) into the open interior of `r`,
// or no value when the segment never goes strictly inside for t in [0,1].
bool segment_enters_rect(const Rect& r, const std::array<double, 2>& p,
                         const std::array<double, 2>& d, double& t_enter) {
  double lo = 0.0;
  double hi = 1.0;
  const double mins[2] = {r.xmin, r.ymin};
  const double maxs[2] = {r.xmax, r.ymax};
  for (int axis = 0; axis < 2; ++axis) {
    const double x0 = p[static_cast<std::size_t>(axis)];
    const double dx = d[static_cast<std::size_t>(axis)];
    if (dx == 0.0) {
      if (x0 <= mins[axis] || x0 >= maxs[axis]) return false;
      continue;
    }
    double t0 = (mins[axis] - x0) / dx;
    double t1 = (maxs[axis] - x0) / dx;
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
  }
  if (lo >= hi) return false;  // touching a face or edge is not a crossing
  t_enter = lo;
  return true;
}

}  // namespace

bool position_valid(const SmoothWorld& world, double x, double y) {
  if (x < -1.0 || x > 1.0 || y < -1.0 || y > 1.0) return false;
  for (const Rect& w : world.walls)
    if (w.strictly_inside(x, y)) return false;
  return true;
}

Transition world_step(const SmoothWorld& world, std::array<double, 2> state,
                      std::array<double, 2> action, int steps_taken) {
  Transition tr;
  tr.state = state;
  tr.action = action;

  std::array<double, 2> delta{};
  for (int k = 0; k < 2; ++k) {
    const double v = std::clamp(action[static_cast<std::size_t>(k)], -world.v_max, world.v_max);
    delta[static_cast<std::size_t>(k)] = v * world.dt;
  }

  // Earliest contact with the outer box or any wall; motion stops there.
  double t_stop = 1.0;
  for (int axis = 0; axis < 2; ++axis) {
    const double x0 = state[static_cast<std::size_t>(axis)];
    const double dx = delta[static_cast<std::size_t>(axis)];
    if (dx > 0.0) t_stop = std::min(t_stop, (1.0 - x0) / dx);
    else if (dx < 0.0) t_stop = std::min(t_stop, (-1.0 - x0) / dx);
  }
  for (const Rect& w : world.walls) {
    double t_enter = 0.0;
    if (segment_enters_rect(w, state, delta, t_enter)) t_stop = std::min(t_stop, t_enter);
  }
  t_stop = std::max(t_stop, 0.0);

  auto stop_point = [&](double t) {
    std::array<double, 2> pt{state[0] + t * delta[0], state[1] + t * delta[1]};
    pt[0] = std::clamp(pt[0], -1.0, 1.0);
    pt[1] = std::clamp(pt[1], -1.0, 1.0);
    return pt;
  };
  std::array<double, 2> next = stop_point(t_stop);
  // Rounding can land the contact a hair inside a wall; back off by an
  // escalating position-space nudge.
  const double speed = std::max({std::fabs(delta[0]), std::fabs(delta[1]), 1e-300});
  double back = 1e-12 / speed;
  for (int guard = 0; guard < 64 && !position_valid(world, next[0], next[1]); ++guard) {
    t_stop = std::max(0.0, t_stop - back);
    back *= 2.0;
    next = stop_point(t_stop);
  }
  if (!position_valid(world, next[0], next[1])) next = state;
  tr.next_state = next;

  for (std::size_t g = 0; g < world.goals.size(); ++g) {
    if (world.goals[g].rect.contains(next[0], next[1])) {
      tr.reward = world.goals[g].reward;
      tr.done = true;
      tr.cause = TerminalCause::goal;
      tr.goal_index = static_cast<int>(g);
      return tr;
    }
  }
  for (const DeathRegion& d : world.deaths) {
    if (d.rect.contains(next[0], next[1])) {
      tr.reward = -d.penalty;
      tr.done = true;
      tr.cause = TerminalCause::death;
      return tr;
    }
  }
  if (steps_taken + 1 >= world.max_steps) {
    tr.done = true;
    tr.cause = TerminalCause::timeout;
  }
  return tr;
}

namespace {

void validate_world(const SmoothWorld& world) {
  auto check_rect = [](const Rect& r, const char* what) {
    if (!(r.xmin <= r.xmax && r.ymin <= r.ymax))
      throw std::invalid_argument(std::string("layout: degenerate ") + what + " rectangle");
    if (r.xmin < -1.0 || r.xmax > 1.0 || r.ymin < -1.0 || r.ymax > 1.0)
      throw std::invalid_argument(std::string("layout: ") + what + " outside [-1,1]^2");
  };
  for (const Rect& w : world.walls) check_rect(w, "wall");
  for (const GoalRegion& g : world.goals) check_rect(g.rect, "goal");
  for (const DeathRegion& d : world.deaths) check_rect(d.rect, "death");
  if (world.dt <= 0.0) throw std::invalid_argument("layout: dt must be positive");
  if (world.v_max <= 0.0) throw std::invalid_argument("layout: v_max must be positive");
  if (world.max_steps < 1) throw std::invalid_argument("layout: max_steps must be >= 1");
  if (!position_valid(world, world.start[0], world.start[1]))
    throw std::invalid_argument("layout: start is inside a wall or outside the box");
  for (const DeathRegion& d : world.deaths)
    if (d.rect.contains(world.start[0], world.start[1]))
      throw std::invalid_argument("layout: start is inside a death region");
}

std::vector<double> parse_numbers(const std::string& text) {
  std::istringstream in(text);
  std::vector<double> out;
  double v = 0.0;
  while (in >> v) out.push_back(v);
  if (!in.eof()) {
    in.clear();
    std::string rest;
    in >> rest;
    if (!rest.empty()) throw std::invalid_argument("non-numeric token '" + rest + "'");
  }
  return out;
}

}  // namespace

SmoothWorld load_layout(std::string_view text) {
  SmoothWorld world;
  std::istringstream lines{std::string(text)};
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw std::invalid_argument("layout line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(lines, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::size_t eq = line.find('=');
    std::string key = line.substr(0, eq == std::string::npos ? line.size() : eq);
    key.erase(std::remove_if(key.begin(), key.end(), [](char c) { return std::isspace(c); }),
              key.end());
    if (key.empty()) continue;
    if (eq == std::string::npos) fail("expected 'key = values'");
    std::vector<double> nums;
    try {
      nums = parse_numbers(line.substr(eq + 1));
    } catch (const std::exception& e) {
      fail(std::string("field '") + key + "': " + e.what());
    }

    auto want = [&](std::size_t n) {
      if (nums.size() != n)
        fail("field '" + key + "' expects " + std::to_string(n) + " numbers, got " +
             std::to_string(nums.size()));
    };
    if (key == "start") {
      want(2);
      world.start = {nums[0], nums[1]};
    } else if (key == "dt") {
      want(1);
      world.dt = nums[0];
    } else if (key == "v_max") {
      want(1);
      world.v_max = nums[0];
    } else if (key == "max_steps") {
      want(1);
      world.max_steps = static_cast<int>(nums[0]);
    } else if (key == "wall") {
      want(4);
      world.walls.push_back({nums[0], nums[1], nums[2], nums[3]});
    } else if (key == "goal") {
      want(5);
      world.goals.push_back({{nums[0], nums[1], nums[2], nums[3]}, nums[4]});
    } else if (key == "death") {
      want(5);
      world.deaths.push_back({{nums[0], nums[1], nums[2], nums[3]}, nums[4]});
    } else {
      fail("unknown field '" + key + "'");
    }
  }
  validate_world(world);
  return world;
}

SmoothWorld load_layout_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("layout: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_layout(buf.str());
}

std::string serialize_layout(const SmoothWorld& world) {
  char buf[256];
  std::string out;
  auto emit = [&](const char* fmt, auto... args) {
    std::snprintf(buf, sizeof(buf), fmt, args...);
    out += buf;
  };
  emit("start = %.17g %.17g\n", world.start[0], world.start[1]);
  emit("dt = %.17g\n", world.dt);
  emit("v_max = %.17g\n", world.v_max);
  emit("max_steps = %d\n", world.max_steps);
  for (const Rect& w : world.walls)
    emit("wall = %.17g %.17g %.17g %.17g\n", w.xmin, w.xmax, w.ymin, w.ymax);
  for (const GoalRegion& g : world.goals)
    emit("goal = %.17g %.17g %.17g %.17g %.17g\n", g.rect.xmin, g.rect.xmax, g.rect.ymin,
         g.rect.ymax, g.reward);
  for (const DeathRegion& d : world.deaths)
    emit("death = %.17g %.17g %.17g %.17g %.17g\n", d.rect.xmin, d.rect.xmax, d.rect.ymin,
         d.rect.ymax, d.penalty);
  return out;
}

SmoothWorld builtin_layout(const std::string& name) {
  SmoothWorld world;
  if (name == "two_goals") {
    world.start = {-0.4, 0.0};
    world.goals.push_back({{0.3, 0.55, 0.25, 0.55}, 1.0});
    world.goals.push_back({{0.3, 0.55, -0.55, -0.25}, 1.0});
  } else if (name == "slit_wall") {
    world.start = {-0.5, 0.0};
    world.walls.push_back({-0.05, 0.05, -1.0, -0.6});
    world.walls.push_back({-0.05, 0.05, -0.3, 0.3});
    world.walls.push_back({-0.05, 0.05, 0.6, 1.0});
    world.goals.push_back({{0.55, 0.8, -0.2, 0.2}, 1.0});
  } else if (name == "obstacle_detour") {
    world.start = {-0.6, 0.0};
    world.walls.push_back({-0.2, 0.2, -0.2, 0.2});
    world.deaths.push_back({{-0.2, 0.2, 0.5, 0.9}, 1.0});
    world.goals.push_back({{0.55, 0.85, -0.15, 0.15}, 1.0});
  } else {
    throw std::invalid_argument("builtin_layout: unknown layout '" + name + "'");
  }
  validate_world(world);
  return world;
}

std::vector<std::string> builtin_layout_names() {
  return {"two_goals", "slit_wall", "obstacle_detour"};
}

ManifoldKind manifold_kind_from_name(const std::string& name) {
  if (name == "lemniscate") return ManifoldKind::lemniscate;
  if (name == "two_moons") return ManifoldKind::two_moons;
  throw std::invalid_argument("unknown manifold '" + name + "'");
}

std::vector<double> make_manifold(ManifoldKind kind, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("make_manifold: n must be >= 1");
  std::vector<double> pts;
  pts.reserve(static_cast<std::size_t>(n) * 2);
  if (kind == ManifoldKind::lemniscate) {
    for (int i = 0; i < n; ++i) {
      const double t = rng.uniform(0.0, 2.0 * kPi);
      pts.push_back(0.7 * std::cos(t));
      pts.push_back(0.7 * std::sin(t) * std::cos(t));
    }
  } else {
    const int first = n - n / 2;
    for (int i = 0; i < n; ++i) {
      const double t = rng.uniform(0.0, kPi);
      if (i < first) {
        pts.push_back(0.25 + 0.5 * std::cos(t));
        pts.push_back(-0.15 + 0.5 * std::sin(t));
      } else {
        pts.push_back(-0.25 + 0.5 * std::cos(t));
        pts.push_back(0.15 - 0.5 * std::sin(t));
      }
    }
  }
  return pts;
}

double bandit_step(const BanditEnv& env, std::span<const double> action) {
  std::array<double, 2> clamped{std::clamp(action[0], -1.0, 1.0),
                                std::clamp(action[1], -1.0, 1.0)};
  return manifold_reward(clamped, env.target_points, env.sigma);
}

}  // namespace mepoly
