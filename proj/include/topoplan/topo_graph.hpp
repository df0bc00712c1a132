#pragma once

// Topological level: candidate waypoints per position distribution and the
// precomputed A* partial paths (with their accumulated log-likelihoods)
// between all pairs allowed by the place-transition matrix.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "topoplan/concept_model.hpp"
#include "topoplan/errors.hpp"
#include "topoplan/grid_map.hpp"
#include "topoplan/rng.hpp"

namespace topoplan {

struct NodeId {
  int k = 0;  // position-distribution index
  int n = 0;  // candidate index within k
  friend bool operator==(const NodeId& a, const NodeId& b) {
    return a.k == b.k && a.n == b.n;
  }
  friend bool operator<(const NodeId& a, const NodeId& b) {
    return a.k != b.k ? a.k < b.k : a.n < b.n;
  }
};

enum class CandidateMode { kMean, kSample };

struct CandidateSet {
  std::vector<std::vector<GridPose>> per_place;  // index k -> candidates
  std::vector<int> unreachable;                  // k's with no usable cell

  int num_places() const { return static_cast<int>(per_place.size()); }
  const GridPose& at(const NodeId& id) const {
    return per_place[id.k][id.n];
  }
  std::vector<NodeId> all_nodes() const {
    std::vector<NodeId> out;
    for (int k = 0; k < num_places(); ++k)
      for (int n = 0; n < static_cast<int>(per_place[k].size()); ++n)
        out.push_back({k, n});
    return out;
  }
};

struct PartialPath {
  std::vector<GridPose> cells;
  double log_w = 0.0;  // -(sum of entry costs), start cell counted once
  int steps = 0;       // cells.size() - 1; stands in for the duration D_e

  void validate(const CostMap& cm) const {
    if (cells.empty()) throw InvariantError("PartialPath: empty");
    if (steps != static_cast<int>(cells.size()) - 1)
      throw InvariantError("PartialPath: steps/cell-count mismatch");
    for (std::size_t t = 0; t < cells.size(); ++t) {
      if (!cm.traversable(cells[t]))
        throw InvariantError("PartialPath: cell on zero-weight terrain");
      if (t > 0) {
        const int dr = std::abs(cells[t].row - cells[t - 1].row);
        const int dc = std::abs(cells[t].col - cells[t - 1].col);
        if (dr + dc > 1)
          throw InvariantError("PartialPath: cells not 4-adjacent");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Candidate sampling
// ---------------------------------------------------------------------------

namespace detail {

// Nearest traversable cell by Euclidean distance between cell centers, ties
// broken by (row, col) order. Returns nullopt when the map has no free cell
// within max_radius (infinite radius scans the whole map).
inline std::optional<GridPose> snap_to_traversable(
    const CostMap& cm, const Eigen::Vector2d& point,
    double max_radius = std::numeric_limits<double>::infinity()) {
  std::optional<GridPose> best;
  double best_d = std::numeric_limits<double>::infinity();
  int r0 = 0, r1 = cm.height() - 1, c0 = 0, c1 = cm.width() - 1;
  if (std::isfinite(max_radius)) {
    r0 = std::max(r0, static_cast<int>(std::floor(point.y() - max_radius - 1)));
    r1 = std::min(r1, static_cast<int>(std::ceil(point.y() + max_radius)));
    c0 = std::max(c0, static_cast<int>(std::floor(point.x() - max_radius - 1)));
    c1 = std::min(c1, static_cast<int>(std::ceil(point.x() + max_radius)));
  }
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      if (cm.weight(r, c) <= 0.0) continue;
      const double d = (cell_center({r, c}) - point).norm();
      if (d > max_radius) continue;
      if (d < best_d - 1e-12) {
        best_d = d;
        best = GridPose{r, c};
      }
    }
  }
  return best;
}

}  // namespace detail

// Mean mode places one candidate at the nearest free cell to each mu_k.
// Sample mode draws N from each Gaussian, snapping each draw to the nearest
// free cell within 5 cells (up to 100 redraws, else the place is dropped).
inline CandidateSet sample_candidates(const ConceptModel& model,
                                      const CostMap& costmap, int n_per_node,
                                      CandidateMode mode, std::uint64_t seed) {
  if (n_per_node < 1)
    throw InvariantError("sample_candidates: n_per_node must be >= 1");
  Rng rng(seed);
  CandidateSet out;
  out.per_place.resize(model.K());
  for (int k = 0; k < model.K(); ++k) {
    if (mode == CandidateMode::kMean) {
      const auto snap = detail::snap_to_traversable(costmap, model.mu[k]);
      if (snap) {
        out.per_place[k].push_back(*snap);
      } else {
        out.unreachable.push_back(k);
      }
      continue;
    }
    for (int n = 0; n < n_per_node; ++n) {
      std::optional<GridPose> cell;
      for (int attempt = 0; attempt < 100 && !cell; ++attempt) {
        const Eigen::Vector2d draw =
            rng.normal2(model.mu[k], model.sigma[k]);
        cell = detail::snap_to_traversable(costmap, draw, 5.0);
      }
      if (cell) out.per_place[k].push_back(*cell);
    }
    if (out.per_place[k].empty()) out.unreachable.push_back(k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metric-level A* under the node likelihood field
// ---------------------------------------------------------------------------

// Per-cell entry cost -log(N(x|mu_k, Sigma_k) * p(x|m)), floored at 0 so the
// search never sees negative step costs. +inf on untraversable cells.
struct NodeCostField {
  std::vector<double> cost;
  double c_min = 0.0;  // min over traversable cells; heuristic scale
  int width = 0;
  int height = 0;
};

inline NodeCostField build_node_cost_field(const ConceptModel& model,
                                           const CostMap& cm, int k) {
  NodeCostField f;
  f.width = cm.width();
  f.height = cm.height();
  f.cost.assign(cm.weights().size(),
                std::numeric_limits<double>::infinity());
  const Gaussian2 g = Gaussian2::from(model.mu[k], model.sigma[k]);
  f.c_min = std::numeric_limits<double>::infinity();
  for (int r = 0; r < cm.height(); ++r) {
    for (int c = 0; c < cm.width(); ++c) {
      const double w = cm.weight(r, c);
      if (w <= 0.0) continue;
      const double cost =
          std::max(0.0, -(g.logpdf(cell_center({r, c})) + std::log(w)));
      f.cost[cm.index(r, c)] = cost;
      f.c_min = std::min(f.c_min, cost);
    }
  }
  if (!std::isfinite(f.c_min)) f.c_min = 0.0;
  return f;
}

namespace detail {

// (f, row, col); lower f first, ties by cell order for determinism.
struct AStarItem {
  double f;
  int row, col;
  friend bool operator>(const AStarItem& a, const AStarItem& b) {
    if (a.f != b.f) return a.f > b.f;
    if (a.row != b.row) return a.row > b.row;
    return a.col > b.col;
  }
};

inline PartialPath astar_on_field(const NodeCostField& field,
                                  const GridPose& start,
                                  const GridPose& goal) {
  const int width = field.width, height = field.height;
  const auto idx = [&](const GridPose& p) {
    return static_cast<std::size_t>(p.row) * width + p.col;
  };
  const auto in_bounds = [&](const GridPose& p) {
    return p.row >= 0 && p.row < height && p.col >= 0 && p.col < width;
  };
  if (!in_bounds(start) || !std::isfinite(field.cost[idx(start)]))
    throw NoPathError("astar: start cell untraversable", 0);
  if (!in_bounds(goal) || !std::isfinite(field.cost[idx(goal)]))
    throw NoPathError("astar: goal cell untraversable", 0);

  if (start == goal) {
    PartialPath p;
    p.cells = {start};
    p.steps = 0;
    p.log_w = -field.cost[idx(start)];
    return p;
  }

  const auto heuristic = [&](const GridPose& p) {
    const double dr = p.row - goal.row, dc = p.col - goal.col;
    return std::sqrt(dr * dr + dc * dc) * field.c_min;
  };

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> g_cost(field.cost.size(), kInf);
  std::vector<int> parent(field.cost.size(), -1);
  std::vector<bool> closed(field.cost.size(), false);

  std::priority_queue<AStarItem, std::vector<AStarItem>,
                      std::greater<AStarItem>>
      open;
  g_cost[idx(start)] = field.cost[idx(start)];
  open.push({g_cost[idx(start)] + heuristic(start), start.row, start.col});
  std::size_t settled = 0;
  while (!open.empty()) {
    const AStarItem it = open.top();
    open.pop();
    const GridPose p{it.row, it.col};
    if (closed[idx(p)]) continue;
    closed[idx(p)] = true;
    ++settled;
    if (p == goal) break;
    for (const auto& nb : neighbors4(p)) {
      if (!in_bounds(nb)) continue;
      const std::size_t j = idx(nb);
      if (closed[j] || !std::isfinite(field.cost[j])) continue;
      const double ng = g_cost[idx(p)] + field.cost[j];
      if (ng < g_cost[j]) {
        g_cost[j] = ng;
        parent[j] = static_cast<int>(idx(p));
        open.push({ng + heuristic(nb), nb.row, nb.col});
      }
    }
  }
  if (!closed[idx(goal)])
    throw NoPathError("astar: no path between the given cells", settled);

  PartialPath out;
  for (int at = static_cast<int>(idx(goal)); at >= 0;
       at = parent[at]) {
    out.cells.push_back({at / width, at % width});
    if (GridPose{at / width, at % width} == start) break;
  }
  std::reverse(out.cells.begin(), out.cells.end());
  out.steps = static_cast<int>(out.cells.size()) - 1;
  out.log_w = -g_cost[idx(goal)];
  return out;
}

}  // namespace detail

// Optimal 4-connected path from start to goal minimizing the accumulated
// entry cost under the goal place's likelihood field.
inline PartialPath astar_partial(const GridPose& start, const GridPose& goal,
                                 int k_goal, const ConceptModel& model,
                                 const CostMap& costmap) {
  const NodeCostField field = build_node_cost_field(model, costmap, k_goal);
  return detail::astar_on_field(field, start, goal);
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

struct TopoGraphConfig {
  double edge_eps = 1e-4;  // prune psi transitions below this mass
  int max_steps = 100;     // metric horizon per edge (D)
};

class TopoGraph {
 public:
  CandidateSet candidates;
  std::vector<std::vector<double>> psi;  // copy of the model's psi
  std::string digest;
  TopoGraphConfig config;

  void add_edge(const NodeId& from, const NodeId& to, PartialPath path) {
    edges_[key(from, to)] = std::move(path);
  }

  const PartialPath* edge(const NodeId& from, const NodeId& to) const {
    const auto it = edges_.find(key(from, to));
    return it == edges_.end() ? nullptr : &it->second;
  }

  const std::map<std::pair<NodeId, NodeId>, PartialPath>& edges() const {
    return edges_;
  }

  std::vector<NodeId> nodes() const { return candidates.all_nodes(); }

 private:
  static std::pair<NodeId, NodeId> key(const NodeId& a, const NodeId& b) {
    return {a, b};
  }
  std::map<std::pair<NodeId, NodeId>, PartialPath> edges_;
};

// Digest of everything the precomputed graph depends on.
inline std::string graph_digest(const ConceptModel& model, const CostMap& cm,
                                std::uint64_t candidate_seed, int n_per_node,
                                CandidateMode mode,
                                const TopoGraphConfig& config) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  const auto mix_bytes = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  const auto mix_double = [&](double v) { mix_bytes(&v, sizeof v); };
  const auto mix_int = [&](std::int64_t v) { mix_bytes(&v, sizeof v); };

  for (double v : model.pi) mix_double(v);
  for (const auto& row : model.phi)
    for (double v : row) mix_double(v);
  for (const auto& row : model.psi)
    for (double v : row) mix_double(v);
  for (const auto& row : model.W)
    for (double v : row) mix_double(v);
  for (int k = 0; k < model.K(); ++k) {
    mix_double(model.mu[k].x());
    mix_double(model.mu[k].y());
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) mix_double(model.sigma[k](a, b));
  }
  for (double v : cm.weights()) mix_double(v);
  mix_int(cm.width());
  mix_int(cm.height());
  mix_int(static_cast<std::int64_t>(candidate_seed));
  mix_int(n_per_node);
  mix_int(mode == CandidateMode::kMean ? 0 : 1);
  mix_double(config.edge_eps);
  mix_int(config.max_steps);

  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

// Precomputes A* partial paths for every ordered candidate pair whose place
// transition clears edge_eps (self-place pairs always allowed). Edges longer
// than max_steps are discarded; the same-node self-loop is a 0-step path.
inline TopoGraph build_graph(const ConceptModel& model, const CostMap& costmap,
                             const CandidateSet& candidates,
                             const TopoGraphConfig& config = {}) {
  TopoGraph graph;
  graph.candidates = candidates;
  graph.psi = model.psi;
  graph.config = config;

  const auto nodes = candidates.all_nodes();
  // One likelihood field per target place, shared across incoming edges.
  std::vector<NodeCostField> fields(model.K());
  std::vector<bool> have_field(model.K(), false);
  for (const auto& to : nodes) {
    if (!have_field[to.k]) {
      fields[to.k] = build_node_cost_field(model, costmap, to.k);
      have_field[to.k] = true;
    }
    for (const auto& from : nodes) {
      if (!(from.k == to.k || model.psi[from.k][to.k] > config.edge_eps))
        continue;
      try {
        PartialPath path = detail::astar_on_field(
            fields[to.k], candidates.at(from), candidates.at(to));
        if (path.steps > config.max_steps) continue;
        graph.add_edge(from, to, std::move(path));
      } catch (const NoPathError&) {
        // unreachable pair: no edge
      }
    }
  }
  return graph;
}

// ---------------------------------------------------------------------------
// Cache I/O
// ---------------------------------------------------------------------------

inline constexpr int kGraphSchemaVersion = 1;

inline void save_graph(const TopoGraph& graph, const std::string& path) {
  nlohmann::json j;
  j["format"] = "topoplan-graph";
  j["version"] = kGraphSchemaVersion;
  j["digest"] = graph.digest;
  j["edge_eps"] = graph.config.edge_eps;
  j["max_steps"] = graph.config.max_steps;
  auto cand = nlohmann::json::array();
  for (const auto& place : graph.candidates.per_place) {
    auto list = nlohmann::json::array();
    for (const auto& p : place) list.push_back({p.row, p.col});
    cand.push_back(list);
  }
  j["candidates"] = cand;
  j["unreachable"] = graph.candidates.unreachable;
  j["psi"] = graph.psi;
  auto edges = nlohmann::json::array();
  for (const auto& [key, path] : graph.edges()) {
    nlohmann::json je;
    je["from"] = {key.first.k, key.first.n};
    je["to"] = {key.second.k, key.second.n};
    je["log_w"] = path.log_w;
    je["steps"] = path.steps;
    auto cells = nlohmann::json::array();
    for (const auto& p : path.cells) cells.push_back({p.row, p.col});
    je["cells"] = cells;
    edges.push_back(je);
  }
  j["edges"] = edges;
  std::ofstream out(path);
  if (!out) throw LoadError(path + ": cannot open for writing");
  out << j.dump() << "\n";
}

// Returns nullopt when the file is absent or its digest does not match
// (callers then rebuild); malformed documents raise LoadError.
inline std::optional<TopoGraph> load_graph(const std::string& path,
                                           const std::string& expected_digest) {
  std::ifstream probe(path);
  if (!probe) return std::nullopt;
  probe.close();
  const auto j = detail::load_json_document(path, "topoplan-graph",
                                            kGraphSchemaVersion);
  try {
    if (j.at("digest").get<std::string>() != expected_digest)
      return std::nullopt;
    TopoGraph g;
    g.digest = j.at("digest").get<std::string>();
    g.config.edge_eps = j.at("edge_eps").get<double>();
    g.config.max_steps = j.at("max_steps").get<int>();
    for (const auto& place : j.at("candidates")) {
      std::vector<GridPose> list;
      for (const auto& p : place)
        list.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
      g.candidates.per_place.push_back(std::move(list));
    }
    g.candidates.unreachable = j.at("unreachable").get<std::vector<int>>();
    g.psi = j.at("psi").get<std::vector<std::vector<double>>>();
    for (const auto& je : j.at("edges")) {
      NodeId from{je.at("from").at(0).get<int>(), je.at("from").at(1).get<int>()};
      NodeId to{je.at("to").at(0).get<int>(), je.at("to").at(1).get<int>()};
      PartialPath path;
      path.log_w = je.at("log_w").get<double>();
      path.steps = je.at("steps").get<int>();
      for (const auto& p : je.at("cells"))
        path.cells.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
      g.add_edge(from, to, std::move(path));
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path + ": " + e.what());
  }
}

}  // namespace topoplan
