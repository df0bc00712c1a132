#pragma once

// Scores plan results against task ground truth (SR, N-SR, W-SR, PL, SPL,
// Time) and assembles the per-method comparison tables.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "topoplan/errors.hpp"
#include "topoplan/grid_map.hpp"
#include "topoplan/hier_planner.hpp"

namespace topoplan {

struct RectRegion {
  std::string name;
  int r0 = 0, c0 = 0, r1 = 0, c1 = 0;  // inclusive corners

  bool contains(const GridPose& p) const {
    return p.row >= r0 && p.row <= r1 && p.col >= c0 && p.col <= c1;
  }
};

struct TaskSpec {
  int id = 0;
  GridPose start;
  std::vector<std::string> goal_words;
  std::vector<std::string> via_words;  // empty for basic tasks
  std::vector<RectRegion> goal_regions;
  std::vector<RectRegion> waypoint_regions;
  std::optional<int> shortest_len;  // oracle length, filled by the generator

  bool is_advanced() const { return !via_words.empty(); }

  void validate(int map_height, int map_width) const {
    if (goal_regions.empty())
      throw TaskSpecError("task " + std::to_string(id) + ": no goal region");
    if (goal_words.empty())
      throw TaskSpecError("task " + std::to_string(id) + ": no goal words");
    const auto check = [&](const RectRegion& reg) {
      if (reg.r0 < 0 || reg.c0 < 0 || reg.r1 >= map_height ||
          reg.c1 >= map_width || reg.r0 > reg.r1 || reg.c0 > reg.c1)
        throw TaskSpecError("task " + std::to_string(id) + ": region '" +
                            reg.name + "' outside map bounds");
    };
    for (const auto& r : goal_regions) check(r);
    for (const auto& r : waypoint_regions) check(r);
    if (is_advanced() && waypoint_regions.empty())
      throw TaskSpecError("task " + std::to_string(id) +
                          ": via words without waypoint regions");
  }
};

// ---------------------------------------------------------------------------
// Shortest-path oracle (BFS over traversable cells, unit steps)
// ---------------------------------------------------------------------------

inline std::vector<int> bfs_distances(const CostMap& cm,
                                      const GridPose& start) {
  std::vector<int> dist(cm.weights().size(), -1);
  if (!cm.traversable(start)) return dist;
  std::queue<GridPose> q;
  dist[cm.index(start.row, start.col)] = 0;
  q.push(start);
  while (!q.empty()) {
    const GridPose p = q.front();
    q.pop();
    for (const auto& nb : neighbors4(p)) {
      if (!cm.traversable(nb)) continue;
      auto& d = dist[cm.index(nb.row, nb.col)];
      if (d < 0) {
        d = dist[cm.index(p.row, p.col)] + 1;
        q.push(nb);
      }
    }
  }
  return dist;
}

inline std::optional<int> region_distance(const std::vector<int>& dist,
                                          const CostMap& cm,
                                          const RectRegion& region) {
  int best = -1;
  for (int r = region.r0; r <= region.r1; ++r)
    for (int c = region.c0; c <= region.c1; ++c) {
      const int d = dist[cm.index(r, c)];
      if (d >= 0 && (best < 0 || d < best)) best = d;
    }
  if (best < 0) return std::nullopt;
  return best;
}

// Oracle distances per task, computed once and shared across methods.
struct TaskOracle {
  std::vector<int> goal_dists;  // per goal region, -1 = unreachable
  int shortest = -1;            // min over goal regions

  static TaskOracle compute(const TaskSpec& task, const CostMap& cm) {
    TaskOracle out;
    const auto dist = bfs_distances(cm, task.start);
    for (const auto& region : task.goal_regions) {
      const auto d = region_distance(dist, cm, region);
      out.goal_dists.push_back(d ? *d : -1);
      if (d && (out.shortest < 0 || *d < out.shortest)) out.shortest = *d;
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

struct TaskScore {
  bool sr = false;
  bool n_sr = false;
  std::optional<bool> w_sr;  // only for advanced tasks
  int pl = 0;
  double spl = 0.0;
  double time_s = 0.0;
  std::string error;  // non-empty when the planner failed outright
};

inline TaskScore score_task(const PlanResult& result, const TaskSpec& task,
                            const CostMap& cm, const TaskOracle& oracle) {
  task.validate(cm.height(), cm.width());
  TaskScore s;
  s.pl = std::max(0, static_cast<int>(result.path.size()) - 1);
  if (result.path.empty()) return s;
  const GridPose end = result.path.back();

  // N-SR: endpoint inside a goal region at the oracle-minimal distance.
  for (std::size_t g = 0; g < task.goal_regions.size(); ++g) {
    if (!task.goal_regions[g].contains(end)) continue;
    s.sr = true;
    if (oracle.goal_dists[g] >= 0 && oracle.goal_dists[g] == oracle.shortest)
      s.n_sr = true;
  }

  if (task.is_advanced()) {
    std::size_t first_goal = result.path.size();
    std::size_t first_way = result.path.size();
    for (std::size_t t = 0; t < result.path.size(); ++t) {
      bool in_goal = false, in_way = false;
      for (const auto& g : task.goal_regions) in_goal |= g.contains(result.path[t]);
      for (const auto& w : task.waypoint_regions)
        in_way |= w.contains(result.path[t]);
      if (in_goal && first_goal == result.path.size()) first_goal = t;
      if (in_way && first_way == result.path.size()) first_way = t;
    }
    s.w_sr = first_way < result.path.size() && first_way < first_goal;
  }

  if (s.sr && oracle.shortest >= 0) {
    const double len = oracle.shortest;
    s.spl = len == 0.0 ? 1.0 : len / std::max<double>(s.pl, len);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Suite runner
// ---------------------------------------------------------------------------

struct ScoreRow {
  std::string method;
  std::string task_set;  // "basic" or "advanced"
  int n_tasks = 0;
  double sr = 0.0, n_sr = 0.0, w_sr = 0.0, pl = 0.0, spl = 0.0, time_s = 0.0;
  bool has_w_sr = false;
};

struct SuiteResult {
  std::vector<ScoreRow> rows;
  // per (method, task) raw scores in run order
  std::vector<std::pair<std::string, std::vector<TaskScore>>> per_task;
};

using PlannerFn = std::function<PlanResult(const TaskSpec&)>;

inline SuiteResult run_suite(
    const std::vector<std::pair<std::string, PlannerFn>>& methods,
    const std::vector<TaskSpec>& tasks, const CostMap& cm) {
  std::vector<TaskOracle> oracles;
  oracles.reserve(tasks.size());
  for (const auto& t : tasks) {
    t.validate(cm.height(), cm.width());
    oracles.push_back(TaskOracle::compute(t, cm));
  }

  SuiteResult out;
  for (const auto& [name, planner] : methods) {
    std::vector<TaskScore> scores;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      TaskScore s;
      detail::StopWatch watch;
      try {
        const PlanResult r = planner(tasks[i]);
        s = score_task(r, tasks[i], cm, oracles[i]);
      } catch (const UserError& e) {
        s.error = e.what();  // failed plan scores zero
        if (tasks[i].is_advanced()) s.w_sr = false;
      }
      s.time_s = watch.lap();
      scores.push_back(s);
    }
    for (const std::string task_set : {"basic", "advanced"}) {
      ScoreRow row;
      row.method = name;
      row.task_set = task_set;
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        const bool advanced = tasks[i].is_advanced();
        if ((task_set == "advanced") != advanced) continue;
        const auto& s = scores[i];
        ++row.n_tasks;
        row.sr += s.sr;
        row.n_sr += s.n_sr;
        row.pl += s.pl;
        row.spl += s.spl;
        row.time_s += s.time_s;
        if (s.w_sr) {
          row.w_sr += *s.w_sr;
          row.has_w_sr = true;
        }
      }
      if (row.n_tasks == 0) continue;
      row.sr /= row.n_tasks;
      row.n_sr /= row.n_tasks;
      row.pl /= row.n_tasks;
      row.spl /= row.n_tasks;
      row.time_s /= row.n_tasks;
      if (row.has_w_sr) row.w_sr /= row.n_tasks;
      out.rows.push_back(row);
    }
    out.per_task.emplace_back(name, std::move(scores));
  }
  return out;
}

inline std::string suite_csv(const SuiteResult& suite) {
  std::ostringstream os;
  os << "method,task_set,n_tasks,sr,n_sr,w_sr,pl,spl,time_s\n";
  os << std::setprecision(6);
  for (const auto& row : suite.rows) {
    os << row.method << "," << row.task_set << "," << row.n_tasks << ","
       << row.sr << "," << row.n_sr << ",";
    if (row.has_w_sr) os << row.w_sr;
    os << "," << row.pl << "," << row.spl << "," << row.time_s << "\n";
  }
  return os.str();
}

inline std::string suite_table(const SuiteResult& suite) {
  std::ostringstream os;
  os << std::left << std::setw(22) << "method" << std::setw(10) << "tasks"
     << std::setw(8) << "n" << std::setw(8) << "SR" << std::setw(8) << "N-SR"
     << std::setw(8) << "W-SR" << std::setw(9) << "PL" << std::setw(8)
     << "SPL" << std::setw(12) << "Time[s]" << "\n";
  os << std::string(93, '-') << "\n";
  os << std::fixed;
  for (const auto& row : suite.rows) {
    os << std::left << std::setw(22) << row.method << std::setw(10)
       << row.task_set << std::setw(8) << row.n_tasks << std::setprecision(3)
       << std::setw(8) << row.sr << std::setw(8) << row.n_sr;
    if (row.has_w_sr)
      os << std::setw(8) << row.w_sr;
    else
      os << std::setw(8) << "-";
    os << std::setprecision(1) << std::setw(9) << row.pl
       << std::setprecision(3) << std::setw(8) << row.spl
       << std::setprecision(4) << std::setw(12) << row.time_s << "\n";
  }
  return os.str();
}

inline void write_per_task_records(const SuiteResult& suite,
                                   const std::vector<TaskSpec>& tasks,
                                   const std::string& path) {
  nlohmann::json j;
  j["format"] = "topoplan-task-records";
  j["version"] = 1;
  auto records = nlohmann::json::array();
  for (const auto& [method, scores] : suite.per_task) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      nlohmann::json r;
      r["method"] = method;
      r["task_id"] = tasks[i].id;
      r["task_set"] = tasks[i].is_advanced() ? "advanced" : "basic";
      r["sr"] = scores[i].sr;
      r["n_sr"] = scores[i].n_sr;
      if (scores[i].w_sr) r["w_sr"] = *scores[i].w_sr;
      r["pl"] = scores[i].pl;
      r["spl"] = scores[i].spl;
      r["time_s"] = scores[i].time_s;
      if (!scores[i].error.empty()) r["error"] = scores[i].error;
      records.push_back(r);
    }
  }
  j["records"] = records;
  std::ofstream out(path);
  if (!out) throw LoadError(path + ": cannot open for writing");
  out << j.dump(1) << "\n";
}

// ---------------------------------------------------------------------------
// Task file I/O
// ---------------------------------------------------------------------------

inline constexpr int kTaskSchemaVersion = 1;

namespace detail {

inline nlohmann::json region_to_json(const RectRegion& r) {
  return {{"name", r.name}, {"r0", r.r0}, {"c0", r.c0}, {"r1", r.r1},
          {"c1", r.c1}};
}

inline RectRegion region_from_json(const nlohmann::json& j) {
  RectRegion r;
  r.name = j.at("name").get<std::string>();
  r.r0 = j.at("r0").get<int>();
  r.c0 = j.at("c0").get<int>();
  r.r1 = j.at("r1").get<int>();
  r.c1 = j.at("c1").get<int>();
  return r;
}

}  // namespace detail

inline void save_tasks(const std::vector<TaskSpec>& tasks,
                       const std::string& path) {
  nlohmann::json j;
  j["format"] = "topoplan-tasks";
  j["version"] = kTaskSchemaVersion;
  auto list = nlohmann::json::array();
  for (const auto& t : tasks) {
    nlohmann::json jt;
    jt["id"] = t.id;
    jt["start"] = {t.start.row, t.start.col};
    jt["goal_words"] = t.goal_words;
    jt["via_words"] = t.via_words;
    auto goals = nlohmann::json::array();
    for (const auto& r : t.goal_regions) goals.push_back(detail::region_to_json(r));
    jt["goal_regions"] = goals;
    auto ways = nlohmann::json::array();
    for (const auto& r : t.waypoint_regions)
      ways.push_back(detail::region_to_json(r));
    jt["waypoint_regions"] = ways;
    if (t.shortest_len) jt["shortest_len"] = *t.shortest_len;
    list.push_back(jt);
  }
  j["tasks"] = list;
  std::ofstream out(path);
  if (!out) throw LoadError(path + ": cannot open for writing");
  out << j.dump(1) << "\n";
}

inline std::vector<TaskSpec> load_tasks(const std::string& path) {
  const auto j =
      detail::load_json_document(path, "topoplan-tasks", kTaskSchemaVersion);
  std::vector<TaskSpec> tasks;
  try {
    for (const auto& jt : j.at("tasks")) {
      TaskSpec t;
      t.id = jt.at("id").get<int>();
      t.start = {jt.at("start").at(0).get<int>(),
                 jt.at("start").at(1).get<int>()};
      t.goal_words = jt.at("goal_words").get<std::vector<std::string>>();
      t.via_words = jt.at("via_words").get<std::vector<std::string>>();
      for (const auto& r : jt.at("goal_regions"))
        t.goal_regions.push_back(detail::region_from_json(r));
      for (const auto& r : jt.at("waypoint_regions"))
        t.waypoint_regions.push_back(detail::region_from_json(r));
      if (jt.contains("shortest_len"))
        t.shortest_len = jt["shortest_len"].get<int>();
      tasks.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path + ": " + e.what());
  }
  return tasks;
}

}  // namespace topoplan
