#include <catch2/catch_amalgamated.hpp>

#include "topoplan/evalharness.hpp"

#include "helpers.hpp"

using namespace topoplan;
using Catch::Matchers::WithinAbs;
using testutil::TempDir;

namespace {

PlanResult path_result(std::vector<GridPose> cells) {
  PlanResult r;
  r.method = "stub";
  r.path = std::move(cells);
  return r;
}

TaskSpec simple_task() {
  TaskSpec t;
  t.id = 0;
  t.start = {0, 0};
  t.goal_words = {"goal"};
  t.goal_regions = {{"goal", 0, 4, 1, 5}};
  return t;
}

}  // namespace

TEST_CASE("score_task") {
  const auto grid = OccupancyGrid::filled(8, 4, 1.0, {}, CellState::Free);
  const auto cm = build_costmap(grid, 0.0, 1.0);
  auto task = simple_task();
  const auto oracle = TaskOracle::compute(task, cm);
  REQUIRE(oracle.shortest == 4);

  SECTION("optimal path scores SPL 1") {
    std::vector<GridPose> cells;
    for (int c = 0; c <= 4; ++c) cells.push_back({0, c});
    const auto s = score_task(path_result(cells), task, cm, oracle);
    CHECK(s.sr);
    CHECK(s.n_sr);
    CHECK(s.pl == 4);
    CHECK_THAT(s.spl, WithinAbs(1.0, 1e-12));
  }
  SECTION("longer successful path discounts SPL") {
    std::vector<GridPose> cells;
    for (int c = 0; c <= 4; ++c) cells.push_back({0, c});
    cells.push_back({1, 4});
    cells.push_back({1, 5});
    cells.push_back({0, 5});
    cells.push_back({0, 4});
    const auto s = score_task(path_result(cells), task, cm, oracle);
    CHECK(s.sr);
    CHECK_THAT(s.spl, WithinAbs(4.0 / 8.0, 1e-12));
  }
  SECTION("failed task scores zero regardless of length") {
    const auto s =
        score_task(path_result({{0, 0}, {1, 0}}), task, cm, oracle);
    CHECK(!s.sr);
    CHECK(s.spl == 0.0);
    CHECK(s.pl == 1);
  }
  SECTION("N-SR needs the nearest same-named region") {
    auto two = task;
    two.goal_regions = {{"goal", 0, 4, 1, 5}, {"goal", 3, 6, 3, 7}};
    const auto o2 = TaskOracle::compute(two, cm);
    // Endpoint in the near region
    std::vector<GridPose> near_cells;
    for (int c = 0; c <= 4; ++c) near_cells.push_back({0, c});
    CHECK(score_task(path_result(near_cells), two, cm, o2).n_sr);
    // Endpoint in the far region: SR yes, N-SR no
    std::vector<GridPose> far_cells;
    for (int c = 0; c <= 6; ++c) far_cells.push_back({0, c});
    for (int r = 1; r <= 3; ++r) far_cells.push_back({r, 6});
    const auto s = score_task(path_result(far_cells), two, cm, o2);
    CHECK(s.sr);
    CHECK(!s.n_sr);
  }
  SECTION("waypoint after goal entry fails W-SR") {
    auto adv = task;
    adv.via_words = {"via"};
    adv.waypoint_regions = {{"via", 3, 0, 3, 1}};
    const auto o2 = TaskOracle::compute(adv, cm);
    // goal first, then waypoint, then back to goal
    std::vector<GridPose> cells;
    for (int c = 0; c <= 4; ++c) cells.push_back({0, c});      // enters goal
    for (int c = 3; c >= 0; --c) cells.push_back({0, c});
    for (int r = 1; r <= 3; ++r) cells.push_back({r, 0});      // waypoint
    cells.push_back({3, 1});
    for (int r = 2; r >= 0; --r) cells.push_back({r, 1});
    for (int c = 2; c <= 4; ++c) cells.push_back({0, c});
    const auto s = score_task(path_result(cells), adv, cm, o2);
    REQUIRE(s.w_sr.has_value());
    CHECK(!*s.w_sr);
    CHECK(s.sr);
    // waypoint first passes
    std::vector<GridPose> good;
    for (int r = 0; r <= 3; ++r) good.push_back({r, 0});
    good.push_back({3, 1});
    for (int r = 2; r >= 0; --r) good.push_back({r, 1});
    for (int c = 2; c <= 4; ++c) good.push_back({0, c});
    const auto s2 = score_task(path_result(good), adv, cm, o2);
    REQUIRE(s2.w_sr.has_value());
    CHECK(*s2.w_sr);
  }
  SECTION("task without goal region is a spec error") {
    auto bad = task;
    bad.goal_regions.clear();
    CHECK_THROWS_AS(score_task(path_result({{0, 0}}), bad, cm, oracle),
                    TaskSpecError);
  }
}

TEST_CASE("run_suite") {
  const auto grid = OccupancyGrid::filled(8, 4, 1.0, {}, CellState::Free);
  const auto cm = build_costmap(grid, 0.0, 1.0);

  SECTION("empty task list yields an empty table") {
    const auto suite = run_suite({{"stub", [](const TaskSpec&) {
                                     return PlanResult{};
                                   }}},
                                 {}, cm);
    CHECK(suite.rows.empty());
    CHECK(suite_csv(suite).find("method") == 0);
  }
  SECTION("single method and task produce one row") {
    const auto planner = [&](const TaskSpec& t) {
      std::vector<GridPose> cells;
      for (int c = t.start.col; c <= 4; ++c) cells.push_back({0, c});
      return path_result(cells);
    };
    const auto suite = run_suite({{"stub", planner}}, {simple_task()}, cm);
    REQUIRE(suite.rows.size() == 1);
    CHECK(suite.rows[0].method == "stub");
    CHECK(suite.rows[0].task_set == "basic");
    CHECK(suite.rows[0].n_tasks == 1);
    CHECK(suite.rows[0].sr == 1.0);
    CHECK(!suite.rows[0].has_w_sr);
  }
  SECTION("SPL never exceeds SR and rates stay in [0,1]") {
    std::vector<TaskSpec> tasks = {simple_task()};
    tasks[0].id = 0;
    auto t2 = simple_task();
    t2.id = 1;
    t2.start = {3, 0};
    tasks.push_back(t2);
    const auto planner = [&](const TaskSpec& t) {
      // succeed only from row 0
      if (t.start.row != 0) return path_result({t.start});
      std::vector<GridPose> cells;
      for (int c = 0; c <= 4; ++c) cells.push_back({0, c});
      return path_result(cells);
    };
    const auto suite = run_suite({{"stub", planner}}, tasks, cm);
    for (const auto& row : suite.rows) {
      CHECK(row.spl <= row.sr + 1e-12);
      CHECK(row.sr >= 0.0);
      CHECK(row.sr <= 1.0);
      CHECK(row.n_sr <= row.sr + 1e-12);
    }
  }
  SECTION("a throwing planner is scored as a failure") {
    const auto suite =
        run_suite({{"boom", [](const TaskSpec&) -> PlanResult {
                      throw UserError("nope");
                    }}},
                  {simple_task()}, cm);
    REQUIRE(suite.rows.size() == 1);
    CHECK(suite.rows[0].sr == 0.0);
    CHECK(suite.per_task[0].second[0].error == "nope");
  }
}

TEST_CASE("task file round trip") {
  TempDir tmp;
  auto t = simple_task();
  t.via_words = {"via"};
  t.waypoint_regions = {{"via", 2, 2, 3, 3}};
  t.shortest_len = 4;
  save_tasks({t}, tmp.file("tasks.json"));
  const auto back = load_tasks(tmp.file("tasks.json"));
  REQUIRE(back.size() == 1);
  CHECK(back[0].start == t.start);
  CHECK(back[0].goal_words == t.goal_words);
  CHECK(back[0].via_words == t.via_words);
  CHECK(back[0].goal_regions[0].c0 == 4);
  CHECK(back[0].waypoint_regions[0].name == "via");
  CHECK(back[0].shortest_len == 4);
}
