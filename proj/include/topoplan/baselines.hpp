#pragma once

// Comparison planners: full-grid Viterbi, its A* goal-candidate
// approximation, and the heuristic hierarchical baselines that replace the
// topological objective with plain path cost or distance.

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "topoplan/concept_model.hpp"
#include "topoplan/errors.hpp"
#include "topoplan/grid_map.hpp"
#include "topoplan/hier_planner.hpp"
#include "topoplan/topo_graph.hpp"

namespace topoplan {

struct ViterbiConfig {
  int horizon = 200;  // T, metric steps

  void validate() const {
    if (horizon < 1) throw UserError("viterbi: horizon T must be >= 1");
  }
};

struct AStarApproxConfig {
  int goal_candidates = 1;  // J

  void validate() const {
    if (goal_candidates < 1) throw UserError("astar approx: J must be >= 1");
  }
};

enum class HeuristicVariant { kCost, kDistance };

namespace detail {

// Per-cell emission log[ sum_i N(x|mu_i, Sigma_i) * inner_i ] + log p(x|m)
// where inner_i mixes concepts, the word bag, and pi. -inf off terrain.
inline std::vector<double> emission_table(const std::vector<int>& words,
                                          const ConceptModel& model,
                                          const CostMap& cm) {
  std::vector<double> log_inner(model.K());
  for (int i = 0; i < model.K(); ++i)
    log_inner[i] = node_observation_score(i, words, model);
  std::vector<Gaussian2> gauss;
  for (int i = 0; i < model.K(); ++i)
    gauss.push_back(Gaussian2::from(model.mu[i], model.sigma[i]));

  std::vector<double> table(cm.weights().size(),
                            -std::numeric_limits<double>::infinity());
  std::vector<double> acc(model.K());
  for (int r = 0; r < cm.height(); ++r) {
    for (int c = 0; c < cm.width(); ++c) {
      const double w = cm.weight(r, c);
      if (w <= 0.0) continue;
      const Eigen::Vector2d x = cell_center({r, c});
      for (int i = 0; i < model.K(); ++i)
        acc[i] = gauss[i].logpdf(x) + log_inner[i];
      table[cm.index(r, c)] = log_sum_exp(acc) + std::log(w);
    }
  }
  return table;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// (A) SpCoNavi, exact Viterbi over the whole grid
// ---------------------------------------------------------------------------

// Exact maximization over T-step action sequences; the state space is every
// traversable cell and transitions are the five actions. Words are treated
// as one bag over the whole utterance. Consecutive stays are collapsed in
// the emitted path.
inline PlanResult spconavi_viterbi(const GridPose& x0,
                                   const std::vector<int>& words,
                                   const ConceptModel& model,
                                   const CostMap& cm,
                                   const ViterbiConfig& config) {
  config.validate();
  if (!cm.traversable(x0))
    throw UserError("viterbi: start cell is not traversable");
  detail::StopWatch total;

  const auto emission = detail::emission_table(words, model, cm);
  const int T = config.horizon;
  const std::size_t n = emission.size();
  const int width = cm.width();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  std::vector<double> value(n, kNegInf), next(n, kNegInf);
  std::vector<std::vector<std::int32_t>> parent(
      T, std::vector<std::int32_t>(n, -1));
  value[cm.index(x0.row, x0.col)] = 0.0;

  // Predecessor deltas in fixed order: stay, then the four moves into s.
  const int pred_dr[5] = {0, -1, 1, 0, 0};
  const int pred_dc[5] = {0, 0, 0, 1, -1};
  for (int t = 0; t < T; ++t) {
    std::fill(next.begin(), next.end(), kNegInf);
    for (std::size_t s = 0; s < n; ++s) {
      if (emission[s] == kNegInf) continue;
      const int r = static_cast<int>(s) / width;
      const int c = static_cast<int>(s) % width;
      double best = kNegInf;
      std::int32_t best_p = -1;
      for (int a = 0; a < 5; ++a) {
        const int pr = r + pred_dr[a], pc = c + pred_dc[a];
        if (pr < 0 || pr >= cm.height() || pc < 0 || pc >= width) continue;
        const std::size_t p = cm.index(pr, pc);
        if (value[p] > best) {
          best = value[p];
          best_p = static_cast<std::int32_t>(p);
        }
      }
      if (best != kNegInf) {
        next[s] = best + emission[s];
        parent[t][s] = best_p;
      }
    }
    value.swap(next);
  }

  std::size_t end = 0;
  double best = kNegInf;
  for (std::size_t s = 0; s < n; ++s)
    if (value[s] > best) {
      best = value[s];
      end = s;
    }
  if (best == kNegInf)
    throw NoPlanError("viterbi: no reachable state at the horizon", {});

  std::vector<GridPose> states(T + 1);
  std::size_t at = end;
  for (int t = T - 1; t >= 0; --t) {
    states[t + 1] = {static_cast<int>(at) / width,
                     static_cast<int>(at) % width};
    at = static_cast<std::size_t>(parent[t][at]);
  }
  states[0] = x0;

  PlanResult result;
  result.method = "spconavi-viterbi";
  result.log_score = best;
  for (const auto& p : states)
    if (result.path.empty() || !(result.path.back() == p))
      result.path.push_back(p);
  result.timings = {{"query_s", total.lap()}};
  result.runtime_s = result.timings[0].seconds;
  return result;
}

// ---------------------------------------------------------------------------
// (B) SpCoNavi, A* approximation with J goal candidates
// ---------------------------------------------------------------------------

// Takes the top-J cells of the emission table as goal candidates, runs plain
// A* (unit move cost plus the -log p(x|m) traversability penalty) to each,
// and keeps the candidate maximizing emission-at-goal plus path score.
inline PlanResult spconavi_astar_approx(const GridPose& x0,
                                        const std::vector<int>& words,
                                        const ConceptModel& model,
                                        const CostMap& cm,
                                        const AStarApproxConfig& config) {
  config.validate();
  if (!cm.traversable(x0))
    throw UserError("astar approx: start cell is not traversable");
  detail::StopWatch total;

  const auto emission = detail::emission_table(words, model, cm);
  std::vector<std::size_t> order;
  for (std::size_t s = 0; s < emission.size(); ++s)
    if (std::isfinite(emission[s])) order.push_back(s);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return emission[a] != emission[b] ? emission[a] > emission[b] : a < b;
  });
  const int J = std::min<int>(config.goal_candidates,
                              static_cast<int>(order.size()));

  NodeCostField field;
  field.width = cm.width();
  field.height = cm.height();
  field.cost.assign(cm.weights().size(),
                    std::numeric_limits<double>::infinity());
  field.c_min = 1.0;
  for (std::size_t s = 0; s < cm.weights().size(); ++s)
    if (cm.weights()[s] > 0.0)
      field.cost[s] = 1.0 - std::log(cm.weights()[s]);

  PlanResult result;
  result.method = "spconavi-astar";
  double best = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < J; ++j) {
    const GridPose goal{static_cast<int>(order[j]) / cm.width(),
                        static_cast<int>(order[j]) % cm.width()};
    try {
      const PartialPath p = detail::astar_on_field(field, x0, goal);
      const double score = emission[order[j]] + p.log_w;
      if (score > best) {
        best = score;
        result.path = p.cells;
        result.log_score = score;
      }
    } catch (const NoPathError&) {
    }
  }
  if (result.path.empty())
    throw NoPlanError("astar approx: no goal candidate reachable", {});
  result.timings = {{"query_s", total.lap()}};
  result.runtime_s = result.timings[0].seconds;
  return result;
}

// ---------------------------------------------------------------------------
// (C) Heuristic hierarchical baselines
// ---------------------------------------------------------------------------

namespace detail {

struct DijkstraOut {
  std::vector<double> dist;
  std::vector<int> parent;  // node index, -2 start-edge, -1 unreached
};

// Shortest paths over graph nodes under non-negative edge weights.
// source < 0 means the virtual start node with the given start edges.
inline DijkstraOut graph_dijkstra(
    const std::vector<NodeId>& nodes, const TopoGraph& graph,
    const std::vector<PartialPath>* start_edges, int source,
    HeuristicVariant variant) {
  const auto weight_of = [&](const PartialPath& p) {
    return variant == HeuristicVariant::kCost ? -p.log_w
                                              : static_cast<double>(p.steps);
  };
  DijkstraOut out;
  out.dist.assign(nodes.size(), std::numeric_limits<double>::infinity());
  out.parent.assign(nodes.size(), -1);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> open;
  if (source < 0) {
    for (std::size_t v = 0; v < nodes.size(); ++v) {
      if ((*start_edges)[v].cells.empty()) continue;
      out.dist[v] = std::max(0.0, weight_of((*start_edges)[v]));
      out.parent[v] = -2;
      open.push({out.dist[v], v});
    }
  } else {
    out.dist[source] = 0.0;
    out.parent[source] = -2;
    open.push({0.0, static_cast<std::size_t>(source)});
  }
  while (!open.empty()) {
    const auto [d, u] = open.top();
    open.pop();
    if (d > out.dist[u]) continue;
    for (std::size_t v = 0; v < nodes.size(); ++v) {
      const PartialPath* edge = graph.edge(nodes[u], nodes[v]);
      if (edge == nullptr || u == v) continue;
      const double nd = d + std::max(0.0, weight_of(*edge));
      if (nd < out.dist[v]) {
        out.dist[v] = nd;
        out.parent[v] = static_cast<int>(u);
        open.push({nd, v});
      }
    }
  }
  return out;
}

inline int best_candidate_of_place(const std::vector<NodeId>& nodes,
                                   const DijkstraOut& d, int place) {
  int best = -1;
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    if (nodes[v].k != place || !std::isfinite(d.dist[v])) continue;
    if (best < 0 || d.dist[v] < d.dist[best]) best = static_cast<int>(v);
  }
  return best;
}

}  // namespace detail

// Goal (and waypoint) places are picked by the word posterior alone; the
// topological search then minimizes summed partial-path cost (variant cost)
// or summed path length (variant distance), ignoring the place transitions
// and intermediate word evidence.
inline PlanResult heuristic_baseline(const GridPose& x0,
                                     const Instruction& instruction,
                                     const ConceptModel& model,
                                     const TopoGraph& graph,
                                     const CostMap& cm,
                                     HeuristicVariant variant) {
  if (!cm.traversable(x0))
    throw UserError("baseline: start cell is not traversable");
  if (instruction.goal_words.empty())
    throw UserError("baseline: instruction has no goal words");
  detail::StopWatch total;

  const auto nodes = graph.nodes();
  const auto pick_place = [&](const std::vector<int>& words) {
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < model.K(); ++k) {
      if (graph.candidates.per_place[k].empty()) continue;
      const double s = node_observation_score(k, words, model);
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    if (best < 0) throw NoPlanError("baseline: no candidate places", {});
    return best;
  };

  const auto start_edges = compute_start_edges(x0, model, graph, cm);

  // Walks parents back from `end`, appending node indices start-to-end.
  const auto backtrack = [&](const detail::DijkstraOut& d, int end) {
    std::vector<int> chain;
    for (int at = end; at >= 0; at = d.parent[at]) {
      chain.push_back(at);
      if (d.parent[at] == -2) break;
    }
    std::reverse(chain.begin(), chain.end());
    return chain;
  };

  std::vector<int> chain;
  double cost = 0.0;
  const int goal_place = pick_place(instruction.goal_words);
  if (instruction.has_waypoint()) {
    const int way_place = pick_place(instruction.waypoint_words);
    const auto leg1 =
        detail::graph_dijkstra(nodes, graph, &start_edges, -1, variant);
    const int via = detail::best_candidate_of_place(nodes, leg1, way_place);
    if (via < 0)
      throw NoPlanError("baseline: waypoint place unreachable", {way_place});
    const auto leg2 =
        detail::graph_dijkstra(nodes, graph, nullptr, via, variant);
    const int end = detail::best_candidate_of_place(nodes, leg2, goal_place);
    if (end < 0)
      throw NoPlanError("baseline: goal place unreachable", {goal_place});
    chain = backtrack(leg1, via);
    const auto tail = backtrack(leg2, end);
    chain.insert(chain.end(), tail.begin() + 1, tail.end());
    cost = leg1.dist[via] + leg2.dist[end];
  } else {
    const auto leg =
        detail::graph_dijkstra(nodes, graph, &start_edges, -1, variant);
    const int end = detail::best_candidate_of_place(nodes, leg, goal_place);
    if (end < 0)
      throw NoPlanError("baseline: goal place unreachable", {goal_place});
    chain = backtrack(leg, end);
    cost = leg.dist[end];
  }

  PlanResult result;
  result.method = variant == HeuristicVariant::kCost ? "baseline-cost"
                                                     : "baseline-distance";
  result.log_score = -cost;
  for (std::size_t e = 0; e < chain.size(); ++e) {
    result.node_seq.push_back(nodes[chain[e]]);
    result.i_seq.push_back(nodes[chain[e]].k);
    const PartialPath* edge =
        e == 0 ? &start_edges[chain[0]]
               : graph.edge(nodes[chain[e - 1]], nodes[chain[e]]);
    if (result.path.empty())
      result.path = edge->cells;
    else
      result.path.insert(result.path.end(), edge->cells.begin() + 1,
                         edge->cells.end());
  }
  result.timings = {{"query_s", total.lap()}};
  result.runtime_s = result.timings[0].seconds;
  return result;
}

}  // namespace topoplan
