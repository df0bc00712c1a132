#pragma once

// Topological-level inference: exact dynamic program over candidate nodes,
// whole-path assembly from the precomputed partial paths, and the optional
// shortcut smoothing pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "topoplan/concept_model.hpp"
#include "topoplan/errors.hpp"
#include "topoplan/grid_map.hpp"
#include "topoplan/topo_graph.hpp"

namespace topoplan {

struct Instruction {
  std::vector<int> goal_words;
  std::vector<int> waypoint_words;  // empty for basic tasks

  bool has_waypoint() const { return !waypoint_words.empty(); }
};

struct PlanRequest {
  GridPose start;
  Instruction instruction;
  int horizon = 10;          // E, topological steps
  bool smoothing = true;
  bool length_normalize_w = false;  // ablation: per-cell mean of log w-hat
};

struct StageTiming {
  std::string name;
  double seconds = 0.0;
};

struct PlanResult {
  std::string method;
  std::vector<NodeId> node_seq;  // length E for the hierarchical planner
  std::vector<int> i_seq;
  std::vector<GridPose> path;
  double log_score = 0.0;
  double runtime_s = 0.0;
  std::vector<StageTiming> timings;
};

namespace detail {

struct StopWatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double lap() {
    const auto t1 = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(t1 - t0).count();
    t0 = t1;
    return s;
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Pieces of the topological objective
// ---------------------------------------------------------------------------

// Most likely place at the start pose; ties broken by the smaller index.
// The start itself becomes a virtual candidate attached to this place.
inline int estimate_initial_node(const GridPose& x0, const ConceptModel& model) {
  int best = 0;
  double best_lp = -std::numeric_limits<double>::infinity();
  const Eigen::Vector2d x = cell_center(x0);
  for (int k = 0; k < model.K(); ++k) {
    const double lp = Gaussian2::from(model.mu[k], model.sigma[k]).logpdf(x);
    if (lp > best_lp) {
      best_lp = lp;
      best = k;
    }
  }
  return best;
}

// Words used at topological step e (1-based). With a waypoint, the first
// ceil(E/2) steps get the waypoint words and the rest the goal words.
inline const std::vector<int>& step_words(const Instruction& instr, int e,
                                          int E) {
  if (e < 1 || e > E) throw InvariantError("step_words: step out of range");
  if (!instr.has_waypoint()) return instr.goal_words;
  return e <= (E + 1) / 2 ? instr.waypoint_words : instr.goal_words;
}

// log sum_C [ phi_C(i) * Mult(S|W_C) * pi(C) ]; the word factor is the plain
// bag-of-words product (the rescaling denominator lives in the transition
// term of the objective).
inline double node_observation_score(int i, const std::vector<int>& words,
                                     const ConceptModel& model) {
  if (i < 0 || i >= model.K())
    throw InvariantError("node_observation_score: index out of range");
  std::vector<double> lw(model.L());
  for (int c = 0; c < model.L(); ++c) {
    double v = std::log(model.phi[c][i]) + std::log(model.pi[c]);
    for (int w : words) {
      if (w < 0 || w >= model.V())
        throw VocabError("word id " + std::to_string(w) +
                         " not in the model vocabulary");
      v += std::log(model.W[c][w]);
    }
    lw[c] = v;
  }
  return detail::log_sum_exp(lw);
}

// ---------------------------------------------------------------------------
// Smoothing
// ---------------------------------------------------------------------------

// Greedy shortcutting: replace sub-segments by straight grid lines whenever
// every crossed cell carries at least the segment's minimum weight and the
// line is strictly shorter. The result may use diagonal staircase moves.
inline std::vector<GridPose> smooth_path(const std::vector<GridPose>& path,
                                         const CostMap& costmap) {
  if (path.size() < 3) return path;
  std::vector<GridPose> current = path;
  bool changed = true;
  int guard = 0;
  while (changed && guard++ < 1000) {
    changed = false;
    std::vector<GridPose> out;
    out.push_back(current[0]);
    std::size_t i = 0;
    while (i + 1 < current.size()) {
      bool cut = false;
      for (std::size_t j = current.size() - 1; j > i + 1; --j) {
        const auto line = bresenham_line(current[i], current[j]);
        if (line.size() >= j - i + 1) continue;  // not shorter
        double seg_min = std::numeric_limits<double>::infinity();
        for (std::size_t t = i; t <= j; ++t)
          seg_min = std::min(seg_min, costmap.weight(current[t]));
        bool ok = true;
        for (const auto& cell : line) {
          if (!costmap.in_bounds(cell) || costmap.weight(cell) < seg_min) {
            ok = false;
            break;
          }
        }
        if (ok) {
          out.insert(out.end(), line.begin() + 1, line.end());
          i = j;
          cut = true;
          changed = true;
          break;
        }
      }
      if (!cut) {
        out.push_back(current[i + 1]);
        ++i;
      }
    }
    current = std::move(out);
  }
  return current;
}

// ---------------------------------------------------------------------------
// The dynamic program
// ---------------------------------------------------------------------------

// A* partial paths from a query start cell to every graph candidate, in
// graph-node order. Computed per query, never cached (the start varies).
// A missing edge (no path, or over the step cap) has empty cells.
inline std::vector<PartialPath> compute_start_edges(const GridPose& start,
                                                    const ConceptModel& model,
                                                    const TopoGraph& graph,
                                                    const CostMap& costmap) {
  const auto nodes = graph.nodes();
  std::vector<NodeCostField> fields(model.K());
  std::vector<bool> have(model.K(), false);
  std::vector<PartialPath> out(nodes.size());
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    const int k = nodes[v].k;
    if (!have[k]) {
      fields[k] = build_node_cost_field(model, costmap, k);
      have[k] = true;
    }
    try {
      PartialPath p =
          detail::astar_on_field(fields[k], start, graph.candidates.at(nodes[v]));
      if (p.steps <= graph.config.max_steps) out[v] = std::move(p);
    } catch (const NoPathError&) {
    }
  }
  return out;
}

namespace detail {

struct TopoProblem {
  std::vector<NodeId> nodes;
  std::vector<PartialPath> start_edges;       // per node; empty cells = none
  std::vector<double> phi_denom;              // sum_l phi_l(k) per place
  std::vector<std::vector<double>> obs;       // [step e-1][node] observation
  const TopoGraph* graph = nullptr;
  const ConceptModel* model = nullptr;
  int k0 = 0;
  bool normalize_w = false;

  double edge_value(const PartialPath& p) const {
    return normalize_w ? p.log_w / (p.steps + 1) : p.log_w;
  }

  // Transition + rescaling + metric-likelihood part of one DP step.
  double step_score(int k_prev, int node_idx, const PartialPath& edge,
                    int e) const {
    const NodeId v = nodes[node_idx];
    return std::log(model->psi[k_prev][v.k]) - std::log(phi_denom[v.k]) +
           edge_value(edge) + obs[e - 1][node_idx];
  }
};

inline TopoProblem make_topo_problem(const PlanRequest& request,
                                     const ConceptModel& model,
                                     const TopoGraph& graph,
                                     const CostMap& costmap) {
  if (request.horizon < 1) throw UserError("plan: horizon E must be >= 1");
  if (!costmap.traversable(request.start))
    throw UserError("plan: start cell is not traversable");
  if (request.instruction.goal_words.empty())
    throw UserError("plan: instruction has no goal words");

  TopoProblem prob;
  prob.graph = &graph;
  prob.model = &model;
  prob.nodes = graph.nodes();
  prob.k0 = estimate_initial_node(request.start, model);
  prob.normalize_w = request.length_normalize_w;

  prob.phi_denom.assign(model.K(), 0.0);
  for (int k = 0; k < model.K(); ++k)
    for (int l = 0; l < model.L(); ++l) prob.phi_denom[k] += model.phi[l][k];

  prob.start_edges = compute_start_edges(request.start, model, graph, costmap);

  prob.obs.assign(request.horizon, std::vector<double>(prob.nodes.size(), 0.0));
  for (int e = 1; e <= request.horizon; ++e) {
    const auto& words = step_words(request.instruction, e, request.horizon);
    std::vector<double> per_place(model.K(),
                                  -std::numeric_limits<double>::infinity());
    for (std::size_t v = 0; v < prob.nodes.size(); ++v) {
      const int k = prob.nodes[v].k;
      if (!std::isfinite(per_place[k]))
        per_place[k] = node_observation_score(k, words, model);
      prob.obs[e - 1][v] = per_place[k];
    }
  }
  return prob;
}

}  // namespace detail

// Exact maximization of the topological objective by a Viterbi-style DP over
// (place, candidate) nodes. Ties resolve to the lexicographically smallest
// node sequence. The whole metric path is assembled by concatenating the
// chosen partial paths, dropping each duplicated junction cell.
inline PlanResult topo_plan(const PlanRequest& request,
                            const ConceptModel& model, const TopoGraph& graph,
                            const CostMap& costmap) {
  detail::StopWatch total;
  detail::StopWatch stage;
  const auto prob = detail::make_topo_problem(request, model, graph, costmap);
  const double setup_s = stage.lap();

  const int E = request.horizon;
  const std::size_t n = prob.nodes.size();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  // DP cells carry the best score and the lexicographically smallest optimal
  // prefix (as node indices) achieving it.
  std::vector<double> score(n, kNegInf), next_score(n);
  std::vector<std::vector<int>> prefix(n), next_prefix(n);

  for (std::size_t v = 0; v < n; ++v) {
    if (prob.start_edges[v].cells.empty()) continue;
    score[v] = prob.step_score(prob.k0, static_cast<int>(v),
                               prob.start_edges[v], 1);
    prefix[v] = {static_cast<int>(v)};
  }
  for (int e = 2; e <= E; ++e) {
    for (std::size_t v = 0; v < n; ++v) {
      next_score[v] = kNegInf;
      next_prefix[v].clear();
      for (std::size_t u = 0; u < n; ++u) {
        if (score[u] == kNegInf) continue;
        const PartialPath* edge =
            prob.graph->edge(prob.nodes[u], prob.nodes[v]);
        if (edge == nullptr) continue;
        const double s =
            score[u] + prob.step_score(prob.nodes[u].k, static_cast<int>(v),
                                       *edge, e);
        // Ties keep the lexicographically smallest predecessor prefix
        // (candidate and incumbent end in the same node v).
        const bool tie_wins =
            s == next_score[v] && !next_prefix[v].empty() &&
            std::lexicographical_compare(prefix[u].begin(), prefix[u].end(),
                                         next_prefix[v].begin(),
                                         std::prev(next_prefix[v].end()));
        if (s > next_score[v] || tie_wins) {
          next_score[v] = s;
          next_prefix[v] = prefix[u];
          next_prefix[v].push_back(static_cast<int>(v));
        }
      }
    }
    score.swap(next_score);
    prefix.swap(next_prefix);
  }

  int best = -1;
  for (std::size_t v = 0; v < n; ++v) {
    if (score[v] == kNegInf) continue;
    if (best < 0 || score[v] > score[best] ||
        (score[v] == score[best] && prefix[v] < prefix[best]))
      best = static_cast<int>(v);
  }
  if (best < 0) {
    // Report the places no candidate of which carries a finite final score.
    std::vector<bool> reachable(model.K(), false);
    for (std::size_t v = 0; v < n; ++v)
      if (score[v] != kNegInf) reachable[prob.nodes[v].k] = true;
    std::vector<int> unreachable;
    for (int k = 0; k < model.K(); ++k)
      if (!reachable[k]) unreachable.push_back(k);
    throw NoPlanError("plan: no feasible node sequence from the start",
                      unreachable);
  }
  const double dp_s = stage.lap();

  PlanResult result;
  result.method = "spcotmhp";
  result.log_score = score[best];
  for (int idx : prefix[best]) {
    result.node_seq.push_back(prob.nodes[idx]);
    result.i_seq.push_back(prob.nodes[idx].k);
  }

  // Assemble: start edge first, then graph edges along the chosen sequence.
  const auto& first = prob.start_edges[prefix[best][0]];
  result.path = first.cells;
  for (std::size_t e = 1; e < prefix[best].size(); ++e) {
    const PartialPath* edge = prob.graph->edge(
        prob.nodes[prefix[best][e - 1]], prob.nodes[prefix[best][e]]);
    result.path.insert(result.path.end(), edge->cells.begin() + 1,
                       edge->cells.end());
  }
  if (request.smoothing) result.path = smooth_path(result.path, costmap);
  result.timings = {{"setup_s", setup_s},
                    {"dp_s", dp_s},
                    {"assemble_s", stage.lap()}};
  result.runtime_s = total.lap();
  return result;
}

// Sum-product variant of the same objective (diagnostic only): the log
// marginal over all node sequences instead of the max.
inline double topo_log_marginal(const PlanRequest& request,
                                const ConceptModel& model,
                                const TopoGraph& graph,
                                const CostMap& costmap) {
  const auto prob = detail::make_topo_problem(request, model, graph, costmap);
  const std::size_t n = prob.nodes.size();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> score(n, kNegInf), next(n);
  for (std::size_t v = 0; v < n; ++v)
    if (!prob.start_edges[v].cells.empty())
      score[v] = prob.step_score(prob.k0, static_cast<int>(v),
                                 prob.start_edges[v], 1);
  for (int e = 2; e <= request.horizon; ++e) {
    for (std::size_t v = 0; v < n; ++v) {
      std::vector<double> acc;
      for (std::size_t u = 0; u < n; ++u) {
        if (score[u] == kNegInf) continue;
        const PartialPath* edge =
            prob.graph->edge(prob.nodes[u], prob.nodes[v]);
        if (edge == nullptr) continue;
        acc.push_back(score[u] +
                      prob.step_score(prob.nodes[u].k, static_cast<int>(v),
                                      *edge, e));
      }
      next[v] = acc.empty() ? kNegInf : detail::log_sum_exp(acc);
    }
    score.swap(next);
  }
  return detail::log_sum_exp(score);
}

// ---------------------------------------------------------------------------
// Plan file output
// ---------------------------------------------------------------------------

inline void save_plan(const PlanResult& result, const std::string& path) {
  nlohmann::json j;
  j["format"] = "topoplan-plan";
  j["version"] = 1;
  j["method"] = result.method;
  auto nodes = nlohmann::json::array();
  for (const auto& nd : result.node_seq) nodes.push_back({nd.k, nd.n});
  j["node_seq"] = nodes;
  j["i_seq"] = result.i_seq;
  auto cells = nlohmann::json::array();
  for (const auto& p : result.path) cells.push_back({p.row, p.col});
  j["path"] = cells;
  j["log_score"] = result.log_score;
  j["runtime_s"] = result.runtime_s;
  nlohmann::json timings;
  for (const auto& t : result.timings) timings[t.name] = t.seconds;
  j["timings"] = timings;
  std::ofstream out(path);
  if (!out) throw LoadError(path + ": cannot open for writing");
  out << j.dump(1) << "\n";
}

inline PlanResult load_plan(const std::string& path) {
  const auto j = detail::load_json_document(path, "topoplan-plan", 1);
  PlanResult r;
  try {
    r.method = j.at("method").get<std::string>();
    for (const auto& nd : j.at("node_seq"))
      r.node_seq.push_back({nd.at(0).get<int>(), nd.at(1).get<int>()});
    r.i_seq = j.at("i_seq").get<std::vector<int>>();
    for (const auto& p : j.at("path"))
      r.path.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    r.log_score = j.at("log_score").get<double>();
    r.runtime_s = j.at("runtime_s").get<double>();
    for (const auto& [name, secs] : j.at("timings").items())
      r.timings.push_back({name, secs.get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path + ": " + e.what());
  }
  return r;
}

}  // namespace topoplan
