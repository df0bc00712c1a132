#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <fstream>
#include <random>
#include <string>

#include "topoplan/grid_map.hpp"

#include "helpers.hpp"
#include "oracles.hpp"

using namespace topoplan;
using testutil::TempDir;

namespace {

std::string pgm_bytes(int width, int height,
                      const std::vector<std::uint8_t>& data) {
  std::string s = "P5\n" + std::to_string(width) + " " +
                  std::to_string(height) + "\n255\n";
  s.append(reinterpret_cast<const char*>(data.data()), data.size());
  return s;
}

std::string default_yaml(const std::string& image, double resolution = 0.05) {
  return "image: " + image +
         "\nresolution: " + std::to_string(resolution) +
         "\norigin: [0.0, 0.0, 0.0]\nnegate: 0\noccupied_thresh: 0.65\n"
         "free_thresh: 0.196\n";
}

}  // namespace

TEST_CASE("load_map classifies cells by occupancy thresholds") {
  TempDir tmp;
  SECTION("all-white image is all Free") {
    testutil::write_file(tmp.file("m.pgm"),
                         pgm_bytes(4, 4, std::vector<std::uint8_t>(16, 254)));
    testutil::write_file(tmp.file("m.yaml"), default_yaml("m.pgm"));
    const auto g = load_map(tmp.file("m.pgm"), tmp.file("m.yaml"));
    REQUIRE(g.width() == 4);
    REQUIRE(g.height() == 4);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) CHECK(g.at(r, c) == CellState::Free);
  }
  SECTION("all-black image is all Occupied") {
    testutil::write_file(tmp.file("m.pgm"),
                         pgm_bytes(4, 4, std::vector<std::uint8_t>(16, 0)));
    testutil::write_file(tmp.file("m.yaml"), default_yaml("m.pgm"));
    const auto g = load_map(tmp.file("m.pgm"), tmp.file("m.yaml"));
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) CHECK(g.at(r, c) == CellState::Occupied);
  }
  SECTION("value 205 lands between the thresholds and becomes Unknown") {
    // occupancy = (255-205)/255 = 0.19608 which is > 0.196 and < 0.65
    std::vector<std::uint8_t> data(16, 254);
    data[0] = 205;  // image row 0 = top of map = grid row 3
    testutil::write_file(tmp.file("m.pgm"), pgm_bytes(4, 4, data));
    testutil::write_file(tmp.file("m.yaml"), default_yaml("m.pgm"));
    const auto g = load_map(tmp.file("m.pgm"), tmp.file("m.yaml"));
    CHECK(g.at(3, 0) == CellState::Unknown);
    CHECK(g.at(0, 0) == CellState::Free);
  }
  SECTION("negate flips the occupancy convention") {
    testutil::write_file(tmp.file("m.pgm"),
                         pgm_bytes(2, 2, std::vector<std::uint8_t>(4, 254)));
    testutil::write_file(
        tmp.file("m.yaml"),
        "image: m.pgm\nresolution: 0.05\norigin: [0, 0, 0]\nnegate: 1\n"
        "occupied_thresh: 0.65\nfree_thresh: 0.196\n");
    const auto g = load_map(tmp.file("m.pgm"), tmp.file("m.yaml"));
    CHECK(g.at(0, 0) == CellState::Occupied);
  }
}

TEST_CASE("load_map rejects malformed inputs with the offending field") {
  TempDir tmp;
  SECTION("missing files") {
    CHECK_THROWS_AS(load_map(tmp.file("nope.pgm"), tmp.file("nope.yaml")),
                    LoadError);
  }
  SECTION("bad magic") {
    testutil::write_file(tmp.file("m.pgm"), "P2\n2 2\n255\n0 0 0 0\n");
    testutil::write_file(tmp.file("m.yaml"), default_yaml("m.pgm"));
    CHECK_THROWS_WITH(load_map(tmp.file("m.pgm"), tmp.file("m.yaml")),
                      Catch::Matchers::ContainsSubstring("P5"));
  }
  SECTION("short data") {
    testutil::write_file(tmp.file("m.pgm"),
                         pgm_bytes(4, 4, std::vector<std::uint8_t>(10, 0)));
    testutil::write_file(tmp.file("m.yaml"), default_yaml("m.pgm"));
    CHECK_THROWS_WITH(load_map(tmp.file("m.pgm"), tmp.file("m.yaml")),
                      Catch::Matchers::ContainsSubstring("shorter"));
  }
  SECTION("missing yaml field") {
    testutil::write_file(tmp.file("m.pgm"),
                         pgm_bytes(2, 2, std::vector<std::uint8_t>(4, 254)));
    testutil::write_file(tmp.file("m.yaml"),
                         "image: m.pgm\nresolution: 0.05\n"
                         "origin: [0,0,0]\nnegate: 0\nfree_thresh: 0.196\n");
    CHECK_THROWS_WITH(load_map(tmp.file("m.pgm"), tmp.file("m.yaml")),
                      Catch::Matchers::ContainsSubstring("occupied_thresh"));
  }
  SECTION("bad maxval") {
    testutil::write_file(tmp.file("m.pgm"), "P5\n2 2\n127\nabcd");
    testutil::write_file(tmp.file("m.yaml"), default_yaml("m.pgm"));
    CHECK_THROWS_WITH(load_map(tmp.file("m.pgm"), tmp.file("m.yaml")),
                      Catch::Matchers::ContainsSubstring("maxval"));
  }
}

TEST_CASE("save_map / load_map round trip is exact") {
  TempDir tmp;
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = testutil::random_grid(gen, 5 + trial % 7, 4 + trial % 5);
    save_map(g, tmp.file("rt.pgm"), tmp.file("rt.yaml"));
    const auto g2 = load_map(tmp.file("rt.pgm"), tmp.file("rt.yaml"));
    REQUIRE(g2 == g);
  }
}

TEST_CASE("build_costmap follows the linear inflation ramp") {
  SECTION("no obstacles: every weight is 1") {
    const auto g = testutil::make_grid({"....", "....", "...."});
    const auto cm = build_costmap(g, 0.3, 0.25);
    for (int r = 0; r < g.height(); ++r)
      for (int c = 0; c < g.width(); ++c) CHECK(cm.weight(r, c) == 1.0);
  }
  SECTION("zero radius disables inflation") {
    const auto g = testutil::make_grid({"....", ".#..", "...."});
    const auto cm = build_costmap(g, 0.0, 0.25);
    for (int r = 0; r < g.height(); ++r)
      for (int c = 0; c < g.width(); ++c) {
        if (g.at(r, c) == CellState::Free)
          CHECK(cm.weight(r, c) == 1.0);
        else
          CHECK(cm.weight(r, c) == 0.0);
      }
  }
  SECTION("5x5 grid, center obstacle, radius 2 cells, min_weight 0.2") {
    const auto g = testutil::make_grid(
        {".....", ".....", "..#..", ".....", "....."},
        /*resolution=*/1.0);
    const auto cm = build_costmap(g, /*inflation_radius=*/2.0, 0.2);
    // Adjacent free cell is 1 cell away: 0.2 + 0.8 * (1/2) = 0.6
    CHECK_THAT(cm.weight(2, 3), Catch::Matchers::WithinAbs(0.6, 1e-12));
    CHECK_THAT(cm.weight(2, 1), Catch::Matchers::WithinAbs(0.6, 1e-12));
    CHECK_THAT(cm.weight(3, 2), Catch::Matchers::WithinAbs(0.6, 1e-12));
    // Diagonal neighbor is sqrt(2) away.
    CHECK_THAT(cm.weight(3, 3),
               Catch::Matchers::WithinAbs(0.2 + 0.8 * std::sqrt(2.0) / 2.0,
                                          1e-12));
    // Distance 2 reaches the end of the ramp.
    CHECK_THAT(cm.weight(2, 0), Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK(cm.weight(2, 2) == 0.0);
  }
  SECTION("unknown cells are untraversable and inflate like obstacles") {
    const auto g = testutil::make_grid({"..?", "...", "..."}, 1.0);
    const auto cm = build_costmap(g, 2.0, 0.5);
    CHECK(cm.weight(2, 2) == 0.0);
    CHECK(cm.weight(2, 1) < 1.0);
  }
}

TEST_CASE("costmap distance transform matches the brute-force oracle") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = testutil::random_grid(gen, 17, 13, 0.15, 0.05);
    const double radius = 3.0, min_w = 0.3;
    const auto cm = build_costmap(g, radius, min_w);
    for (int r = 0; r < g.height(); ++r) {
      for (int c = 0; c < g.width(); ++c) {
        if (g.at(r, c) != CellState::Free) {
          REQUIRE(cm.weight(r, c) == 0.0);
          continue;
        }
        const double d =
            oracle::nearest_obstacle_dist(g, r, c) * g.resolution();
        const double expect =
            std::isinf(d) ? 1.0
                          : min_w + (1.0 - min_w) * std::min(d / radius, 1.0);
        REQUIRE_THAT(cm.weight(r, c),
                     Catch::Matchers::WithinAbs(expect, 1e-9));
        REQUIRE(cm.weight(r, c) > 0.0);
      }
    }
  }
}

TEST_CASE("build_costmap is deterministic") {
  std::mt19937_64 gen(3);
  const auto g = testutil::random_grid(gen, 21, 19);
  const auto a = build_costmap(g, 0.3, 0.25);
  const auto b = build_costmap(g, 0.3, 0.25);
  CHECK(a.weights() == b.weights());
}

TEST_CASE("world/grid transforms") {
  const auto g = OccupancyGrid::filled(8, 6, 0.1, {0.0, 0.0, 0.0},
                                       CellState::Free);
  SECTION("world point inside first cell") {
    const auto p = world_to_grid(g, 0.05, 0.05);
    CHECK(p == GridPose{0, 0});
  }
  SECTION("grid -> world -> grid is identity") {
    for (int r = 0; r < g.height(); ++r)
      for (int c = 0; c < g.width(); ++c) {
        const auto w = grid_to_world(g, {r, c});
        CHECK(world_to_grid(g, w.x(), w.y()) == GridPose{r, c});
      }
  }
  SECTION("out of bounds raises") {
    CHECK_THROWS_AS(world_to_grid(g, -0.1, 0.0), BoundsError);
    CHECK_THROWS_AS(world_to_grid(g, 0.0, 0.61), BoundsError);
    CHECK_THROWS_AS(grid_to_world(g, {6, 0}), BoundsError);
  }
  SECTION("rotated origin round trips") {
    const auto gr = OccupancyGrid::filled(8, 6, 0.1, {1.0, -2.0, 0.7},
                                          CellState::Free);
    for (int r = 0; r < gr.height(); r += 2)
      for (int c = 0; c < gr.width(); c += 3) {
        const auto w = grid_to_world(gr, {r, c});
        CHECK(world_to_grid(gr, w.x(), w.y()) == GridPose{r, c});
      }
  }
}

TEST_CASE("costmap export writes binary weights and a dims sidecar") {
  TempDir tmp;
  const auto g = testutil::make_grid({"..#", "...", ".#."}, 1.0);
  const auto cm = build_costmap(g, 2.0, 0.4);
  export_costmap(cm, tmp.file("cost"));
  std::ifstream in(tmp.file("cost.bin"), std::ios::binary);
  REQUIRE(in.good());
  std::vector<double> back(cm.weights().size());
  in.read(reinterpret_cast<char*>(back.data()),
          static_cast<std::streamsize>(back.size() * sizeof(double)));
  REQUIRE(static_cast<std::size_t>(in.gcount()) ==
          back.size() * sizeof(double));
  CHECK(back == cm.weights());
  std::ifstream yin(tmp.file("cost.yaml"));
  std::string yaml((std::istreambuf_iterator<char>(yin)),
                   std::istreambuf_iterator<char>());
  CHECK(yaml.find("width: 3") != std::string::npos);
  CHECK(yaml.find("height: 3") != std::string::npos);
}

TEST_CASE("actions move by at most one cell") {
  const GridPose p{3, 4};
  CHECK(apply_action(p, Action::Stay) == p);
  CHECK(apply_action(p, Action::Up) == GridPose{4, 4});
  CHECK(apply_action(p, Action::Down) == GridPose{2, 4});
  CHECK(apply_action(p, Action::Left) == GridPose{3, 3});
  CHECK(apply_action(p, Action::Right) == GridPose{3, 5});
}
