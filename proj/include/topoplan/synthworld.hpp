#pragma once

// Desk-scale home environments with named room regions, teaching walks with
// ground-truth labels, and task suites. Everything is a pure function of
// (config, seed).

#include <algorithm>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "topoplan/concept_model.hpp"
#include "topoplan/errors.hpp"
#include "topoplan/evalharness.hpp"
#include "topoplan/grid_map.hpp"
#include "topoplan/rng.hpp"

namespace topoplan {

struct EnvConfig {
  // One room per entry; duplicate names share a word (and a concept).
  std::vector<std::string> room_categories = {
      "bedroom", "bedroom", "bedroom", "kitchen",  "lavatory",
      "bath",    "entrance", "living",  "dining",  "storage"};
  int room_min = 7;   // interior side, cells
  int room_max = 10;
  int corridor_height = 4;
  int door_width = 2;
  double resolution = 0.05;
};

struct Environment {
  OccupancyGrid grid;
  std::vector<RectRegion> regions;           // room interiors + corridor
  std::vector<std::string> region_category;  // per region
  int corridor_region = -1;                  // -1 for single-room layouts
};

// ---------------------------------------------------------------------------
// Environment generation
// ---------------------------------------------------------------------------

inline Environment generate_env(const EnvConfig& config, std::uint64_t seed) {
  if (config.room_categories.empty())
    throw UserError("generate_env: need at least one room");
  Rng rng(seed);
  const int n_rooms = static_cast<int>(config.room_categories.size());

  Environment env;
  if (n_rooms == 1) {
    const int w = config.room_min +
                  rng.uniform_int(config.room_max - config.room_min + 1);
    const int h = config.room_min +
                  rng.uniform_int(config.room_max - config.room_min + 1);
    auto grid = OccupancyGrid::filled(w + 2, h + 2, config.resolution, {},
                                      CellState::Occupied);
    for (int r = 1; r <= h; ++r)
      for (int c = 1; c <= w; ++c) grid.set(r, c, CellState::Free);
    env.grid = grid;
    env.regions.push_back({config.room_categories[0], 1, 1, h, w});
    env.region_category.push_back(config.room_categories[0]);
    return env;
  }

  const int top_count = (n_rooms + 1) / 2;
  const int bottom_count = n_rooms - top_count;
  const auto room_side = [&]() {
    return config.room_min +
           rng.uniform_int(config.room_max - config.room_min + 1);
  };
  std::vector<int> top_w(top_count), bottom_w(bottom_count);
  for (auto& w : top_w) w = room_side();
  for (auto& w : bottom_w) w = room_side();
  const int top_h = room_side(), bottom_h = room_side();

  const auto band_width = [&](const std::vector<int>& ws) {
    int total = 1;  // left border
    for (int w : ws) total += w + 1;  // room + separating wall
    return total;
  };
  const int width = std::max(band_width(top_w), band_width(bottom_w));
  // Stretch the last room of the narrower band to fill the map width.
  if (band_width(top_w) < width) top_w.back() += width - band_width(top_w);
  if (band_width(bottom_w) < width)
    bottom_w.back() += width - band_width(bottom_w);

  // Row bands, bottom to top: wall, bottom rooms, wall, corridor, wall,
  // top rooms, wall.
  const int bottom_r0 = 1;
  const int corridor_r0 = bottom_r0 + bottom_h + 1;
  const int top_r0 = corridor_r0 + config.corridor_height + 1;
  const int height = top_r0 + top_h + 1;

  auto grid = OccupancyGrid::filled(width, height, config.resolution, {},
                                    CellState::Occupied);
  const auto carve = [&](int r0, int c0, int r1, int c1) {
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) grid.set(r, c, CellState::Free);
  };

  carve(corridor_r0, 1, corridor_r0 + config.corridor_height - 1, width - 2);

  const auto place_rooms = [&](const std::vector<int>& ws, int r0, int r1,
                               bool doors_at_bottom, int first_region) {
    int c0 = 1;
    for (std::size_t i = 0; i < ws.size(); ++i) {
      const int c1 = c0 + ws[i] - 1;
      carve(r0, c0, r1, c1);
      // Door: a short gap in the wall between the room and the corridor.
      const int door_c =
          c0 + rng.uniform_int(std::max(1, ws[i] - config.door_width + 1));
      const int door_r = doors_at_bottom ? r0 - 1 : r1 + 1;
      for (int dc = 0; dc < config.door_width; ++dc)
        grid.set(door_r, std::min(door_c + dc, c1), CellState::Free);
      env.regions.push_back({config.room_categories[first_region +
                                                    static_cast<int>(i)],
                             r0, c0, r1, c1});
      env.region_category.push_back(
          config.room_categories[first_region + static_cast<int>(i)]);
      c0 = c1 + 2;
    }
  };
  place_rooms(top_w, top_r0, top_r0 + top_h - 1, true, 0);
  place_rooms(bottom_w, bottom_r0, bottom_r0 + bottom_h - 1, false, top_count);

  env.regions.push_back({"corridor", corridor_r0, 1,
                         corridor_r0 + config.corridor_height - 1, width - 2});
  env.region_category.push_back("corridor");
  env.corridor_region = static_cast<int>(env.regions.size()) - 1;
  env.grid = grid;

  // Every free cell must be mutually reachable.
  std::optional<GridPose> seed_cell;
  std::size_t free_count = 0;
  for (int r = 0; r < grid.height(); ++r)
    for (int c = 0; c < grid.width(); ++c)
      if (grid.at(r, c) == CellState::Free) {
        ++free_count;
        if (!seed_cell) seed_cell = GridPose{r, c};
      }
  std::vector<bool> seen(grid.cells().size(), false);
  std::queue<GridPose> q;
  q.push(*seed_cell);
  seen[grid.index(seed_cell->row, seed_cell->col)] = true;
  std::size_t reached = 0;
  while (!q.empty()) {
    const GridPose p = q.front();
    q.pop();
    ++reached;
    for (const auto& nb : neighbors4(p)) {
      if (!grid.in_bounds(nb) || grid.at(nb) != CellState::Free) continue;
      if (!seen[grid.index(nb.row, nb.col)]) {
        seen[grid.index(nb.row, nb.col)] = true;
        q.push(nb);
      }
    }
  }
  if (reached != free_count)
    throw InvariantError("generate_env: disconnected free space");
  return env;
}

// ---------------------------------------------------------------------------
// Teaching walks
// ---------------------------------------------------------------------------

struct TeachingConfig {
  int n_per_place = 15;
  int feature_dim = 16;
  int feature_draws = 20;
  double category_feature_peak = 0.6;
};

namespace detail {

inline GridPose random_free_cell_in(const OccupancyGrid& grid,
                                    const RectRegion& region, Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const int r = region.r0 + rng.uniform_int(region.r1 - region.r0 + 1);
    const int c = region.c0 + rng.uniform_int(region.c1 - region.c0 + 1);
    if (grid.at(r, c) == CellState::Free) return {r, c};
  }
  throw InvariantError("synthworld: no free cell inside region " +
                       region.name);
}

inline std::vector<GridPose> bfs_path(const OccupancyGrid& grid,
                                      const GridPose& from,
                                      const GridPose& to) {
  std::vector<int> parent(grid.cells().size(), -1);
  std::queue<GridPose> q;
  parent[grid.index(from.row, from.col)] = static_cast<int>(
      grid.index(from.row, from.col));
  q.push(from);
  while (!q.empty()) {
    const GridPose p = q.front();
    q.pop();
    if (p == to) break;
    for (const auto& nb : neighbors4(p)) {
      if (!grid.in_bounds(nb) || grid.at(nb) != CellState::Free) continue;
      if (parent[grid.index(nb.row, nb.col)] < 0) {
        parent[grid.index(nb.row, nb.col)] =
            static_cast<int>(grid.index(p.row, p.col));
        q.push(nb);
      }
    }
  }
  if (parent[grid.index(to.row, to.col)] < 0)
    throw InvariantError("synthworld: teaching walk found no path");
  std::vector<GridPose> path;
  std::size_t at = grid.index(to.row, to.col);
  const std::size_t start = grid.index(from.row, from.col);
  while (true) {
    path.push_back({static_cast<int>(at) / grid.width(),
                    static_cast<int>(at) % grid.width()});
    if (at == start) break;
    at = static_cast<std::size_t>(parent[at]);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

// Deterministic per-category feature signature: one peaked bin, the rest
// uniform.
inline std::vector<double> category_signature(int category_id, int dim,
                                              double peak) {
  std::vector<double> sig(dim, (1.0 - peak) / std::max(1, dim - 1));
  sig[category_id % dim] = peak;
  return sig;
}

}  // namespace detail

inline TeachingDataset generate_teaching(const Environment& env,
                                         const TeachingConfig& config,
                                         std::uint64_t seed) {
  Rng rng(seed);
  const int n_regions = static_cast<int>(env.regions.size());

  // Category ids shared across same-named rooms.
  std::map<std::string, int> category_id;
  std::vector<int> region_cat(n_regions);
  for (int i = 0; i < n_regions; ++i) {
    const auto [it, _] = category_id.emplace(
        env.region_category[i], static_cast<int>(category_id.size()));
    region_cat[i] = it->second;
  }

  // Visit order: every region n_per_place times, shuffled.
  std::vector<int> visits;
  for (int i = 0; i < n_regions; ++i)
    for (int n = 0; n < config.n_per_place; ++n) visits.push_back(i);
  for (std::size_t i = visits.size(); i > 1; --i)
    std::swap(visits[i - 1], visits[rng.uniform_int(static_cast<int>(i))]);

  TeachingDataset ds;
  ds.feature_dim = config.feature_dim;
  GridPose pos = detail::random_free_cell_in(
      env.grid, env.regions[visits.front()], rng);
  ds.trajectory.push_back(pos);
  for (int region : visits) {
    GridPose target;
    do {
      target = detail::random_free_cell_in(env.grid, env.regions[region], rng);
    } while (target == pos);
    const auto leg = detail::bfs_path(env.grid, pos, target);
    ds.trajectory.insert(ds.trajectory.end(), leg.begin() + 1, leg.end());
    pos = target;

    TeachingEvent ev;
    ev.t_end = static_cast<int>(ds.trajectory.size()) - 1;
    ev.words = {ds.vocab.intern(env.region_category[region])};
    const auto sig = detail::category_signature(
        region_cat[region], config.feature_dim, config.category_feature_peak);
    ev.feature.assign(config.feature_dim, 0);
    for (int d = 0; d < config.feature_draws; ++d)
      ++ev.feature[rng.categorical(sig)];
    ds.events.push_back(std::move(ev));
    ds.truth_i.push_back(region);
    ds.truth_c.push_back(region_cat[region]);
  }
  ds.validate(&env.grid);
  return ds;
}

// ---------------------------------------------------------------------------
// Task generation
// ---------------------------------------------------------------------------

struct TaskGenConfig {
  int n_basic = 10;
  int n_advanced = 10;
  bool allow_corridor_goal = false;
  bool allow_corridor_waypoint = false;
};

inline std::vector<TaskSpec> generate_tasks(const Environment& env,
                                            const CostMap& cm,
                                            const TaskGenConfig& config,
                                            std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> categories;
  for (int i = 0; i < static_cast<int>(env.regions.size()); ++i) {
    const auto& cat = env.region_category[i];
    if (cat == "corridor" && !config.allow_corridor_goal) continue;
    if (std::find(categories.begin(), categories.end(), cat) ==
        categories.end())
      categories.push_back(cat);
  }
  if (categories.empty())
    throw UserError("generate_tasks: no goal categories available");

  const auto regions_of = [&](const std::string& cat) {
    std::vector<RectRegion> out;
    for (int i = 0; i < static_cast<int>(env.regions.size()); ++i)
      if (env.region_category[i] == cat) out.push_back(env.regions[i]);
    return out;
  };

  const auto random_start = [&](const std::vector<RectRegion>& exclude) {
    for (int attempt = 0; attempt < 2000; ++attempt) {
      const GridPose p{rng.uniform_int(cm.height()),
                       rng.uniform_int(cm.width())};
      if (!cm.traversable(p)) continue;
      bool inside = false;
      for (const auto& reg : exclude) inside |= reg.contains(p);
      if (!inside) return p;
    }
    throw InvariantError("generate_tasks: no start cell found");
  };

  std::vector<TaskSpec> tasks;
  int id = 0;
  for (int b = 0; b < config.n_basic; ++b) {
    TaskSpec t;
    t.id = id++;
    const auto& cat = categories[rng.uniform_int(
        static_cast<int>(categories.size()))];
    t.goal_words = {cat};
    t.goal_regions = regions_of(cat);
    t.start = random_start(t.goal_regions);
    const auto dist = bfs_distances(cm, t.start);
    int best = -1;
    for (const auto& reg : t.goal_regions) {
      const auto d = region_distance(dist, cm, reg);
      if (d && (best < 0 || *d < best)) best = *d;
    }
    if (best >= 0) t.shortest_len = best;
    tasks.push_back(std::move(t));
  }
  for (int a = 0; a < config.n_advanced; ++a) {
    if (categories.size() < 2)
      throw UserError("generate_tasks: advanced tasks need >= 2 categories");
    TaskSpec t;
    t.id = id++;
    const int gi = rng.uniform_int(static_cast<int>(categories.size()));
    int wi = rng.uniform_int(static_cast<int>(categories.size()));
    while (wi == gi) wi = rng.uniform_int(static_cast<int>(categories.size()));
    t.goal_words = {categories[gi]};
    t.via_words = {categories[wi]};
    t.goal_regions = regions_of(categories[gi]);
    t.waypoint_regions = regions_of(categories[wi]);
    auto exclude = t.goal_regions;
    exclude.insert(exclude.end(), t.waypoint_regions.begin(),
                   t.waypoint_regions.end());
    t.start = random_start(exclude);
    const auto dist = bfs_distances(cm, t.start);
    int best = -1;
    for (const auto& reg : t.goal_regions) {
      const auto d = region_distance(dist, cm, reg);
      if (d && (best < 0 || *d < best)) best = *d;
    }
    if (best >= 0) t.shortest_len = best;
    tasks.push_back(std::move(t));
  }
  for (const auto& t : tasks) t.validate(cm.height(), cm.width());
  return tasks;
}

}  // namespace topoplan
