#pragma once

// Shared fixtures for the test suites: temp directories and tiny map/model
// builders.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "topoplan/grid_map.hpp"

namespace testutil {

struct TempDir {
  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("topoplan_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  std::filesystem::path path;
};

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Builds a grid from visual rows (first string = top of the map, so it lands
// at the highest row index). '.' = Free, '#' = Occupied, '?' = Unknown.
inline topoplan::OccupancyGrid make_grid(const std::vector<std::string>& rows,
                                         double resolution = 0.05) {
  const int height = static_cast<int>(rows.size());
  const int width = static_cast<int>(rows.front().size());
  std::vector<topoplan::CellState> cells(
      static_cast<std::size_t>(width) * height, topoplan::CellState::Free);
  for (int visual = 0; visual < height; ++visual) {
    const int r = height - 1 - visual;
    for (int c = 0; c < width; ++c) {
      topoplan::CellState s = topoplan::CellState::Free;
      switch (rows[visual][c]) {
        case '#':
          s = topoplan::CellState::Occupied;
          break;
        case '?':
          s = topoplan::CellState::Unknown;
          break;
        default:
          break;
      }
      cells[static_cast<std::size_t>(r) * width + c] = s;
    }
  }
  return topoplan::OccupancyGrid(width, height, resolution, {}, cells);
}

inline topoplan::OccupancyGrid random_grid(std::mt19937_64& gen, int width,
                                           int height,
                                           double p_occupied = 0.2,
                                           double p_unknown = 0.05) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<topoplan::CellState> cells(
      static_cast<std::size_t>(width) * height);
  for (auto& c : cells) {
    const double x = u(gen);
    c = x < p_occupied                ? topoplan::CellState::Occupied
        : x < p_occupied + p_unknown ? topoplan::CellState::Unknown
                                      : topoplan::CellState::Free;
  }
  return topoplan::OccupancyGrid(width, height, 0.05, {}, cells);
}

}  // namespace testutil
