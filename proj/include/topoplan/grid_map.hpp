#pragma once

// Occupancy grids in ROS map_server PGM+YAML form, world/grid coordinate
// transforms, and the probabilistic cost map p(x|m) consumed by the planners.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "topoplan/errors.hpp"

namespace topoplan {

enum class CellState : std::uint8_t { Free = 0, Occupied = 1, Unknown = 2 };

struct GridPose {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridPose& a, const GridPose& b) {
    return a.row == b.row && a.col == b.col;
  }
  friend bool operator!=(const GridPose& a, const GridPose& b) {
    return !(a == b);
  }
  friend bool operator<(const GridPose& a, const GridPose& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  }
};

// Continuous coordinate of a cell center, in cell units (x = col, y = row).
inline Eigen::Vector2d cell_center(const GridPose& p) {
  return {p.col + 0.5, p.row + 0.5};
}

// The five-action control set. Up increases the row index.
enum class Action : std::uint8_t { Stay = 0, Up, Down, Left, Right };

inline constexpr std::array<Action, 5> kActions = {
    Action::Stay, Action::Up, Action::Down, Action::Left, Action::Right};

inline GridPose apply_action(const GridPose& p, Action a) {
  switch (a) {
    case Action::Up:
      return {p.row + 1, p.col};
    case Action::Down:
      return {p.row - 1, p.col};
    case Action::Left:
      return {p.row, p.col - 1};
    case Action::Right:
      return {p.row, p.col + 1};
    case Action::Stay:
      break;
  }
  return p;
}

// 4-neighborhood in a fixed deterministic order.
inline std::array<GridPose, 4> neighbors4(const GridPose& p) {
  return {GridPose{p.row + 1, p.col}, GridPose{p.row - 1, p.col},
          GridPose{p.row, p.col - 1}, GridPose{p.row, p.col + 1}};
}

// 8-connected integer line between two cells, endpoints included.
inline std::vector<GridPose> bresenham_line(GridPose a, GridPose b) {
  std::vector<GridPose> out;
  int dr = std::abs(b.row - a.row), dc = std::abs(b.col - a.col);
  const int sr = a.row < b.row ? 1 : -1;
  const int sc = a.col < b.col ? 1 : -1;
  int err = dc - dr;
  GridPose p = a;
  for (;;) {
    out.push_back(p);
    if (p == b) break;
    const int e2 = 2 * err;
    if (e2 > -dr) {
      err -= dr;
      p.col += sc;
    }
    if (e2 < dc) {
      err += dc;
      p.row += sr;
    }
  }
  return out;
}

struct MapOrigin {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  friend bool operator==(const MapOrigin& a, const MapOrigin& b) {
    return a.x == b.x && a.y == b.y && a.yaw == b.yaw;
  }
};

class OccupancyGrid {
 public:
  OccupancyGrid() = default;

  OccupancyGrid(int width, int height, double resolution, MapOrigin origin,
                std::vector<CellState> cells)
      : width_(width),
        height_(height),
        resolution_(resolution),
        origin_(origin),
        cells_(std::move(cells)) {
    if (width_ <= 0 || height_ <= 0)
      throw InvariantError("OccupancyGrid: dimensions must be positive");
    if (resolution_ <= 0.0)
      throw InvariantError("OccupancyGrid: resolution must be positive");
    if (cells_.size() != static_cast<std::size_t>(width_) * height_)
      throw InvariantError("OccupancyGrid: cell count != width*height");
  }

  static OccupancyGrid filled(int width, int height, double resolution,
                              MapOrigin origin, CellState state) {
    return OccupancyGrid(
        width, height, resolution, origin,
        std::vector<CellState>(static_cast<std::size_t>(width) * height,
                               state));
  }

  int width() const { return width_; }
  int height() const { return height_; }
  double resolution() const { return resolution_; }
  const MapOrigin& origin() const { return origin_; }

  bool in_bounds(int row, int col) const {
    return row >= 0 && row < height_ && col >= 0 && col < width_;
  }
  bool in_bounds(const GridPose& p) const { return in_bounds(p.row, p.col); }

  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * width_ + col;
  }

  CellState at(int row, int col) const { return cells_[index(row, col)]; }
  CellState at(const GridPose& p) const { return at(p.row, p.col); }
  void set(int row, int col, CellState s) { cells_[index(row, col)] = s; }

  const std::vector<CellState>& cells() const { return cells_; }

  friend bool operator==(const OccupancyGrid& a, const OccupancyGrid& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ &&
           a.resolution_ == b.resolution_ && a.origin_ == b.origin_ &&
           a.cells_ == b.cells_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  double resolution_ = 0.05;
  MapOrigin origin_;
  std::vector<CellState> cells_;
};

// ---------------------------------------------------------------------------
// PGM + YAML map I/O (map_server convention)
// ---------------------------------------------------------------------------

namespace detail {

// PGM values written by save_map; the map_server defaults classify them back
// to the same states on load.
inline constexpr std::uint8_t kPgmFree = 254;
inline constexpr std::uint8_t kPgmOccupied = 0;
inline constexpr std::uint8_t kPgmUnknown = 205;

inline int next_pgm_token(std::istream& in, const std::string& path) {
  // Skip whitespace and '#' comments between header tokens.
  for (;;) {
    int c = in.peek();
    if (c == EOF) throw LoadError(path + ": truncated PGM header");
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      break;
    }
  }
  int value = 0;
  if (!(in >> value)) throw LoadError(path + ": malformed PGM header token");
  return value;
}

struct MapYaml {
  std::string image;
  double resolution = 0.0;
  MapOrigin origin;
  int negate = 0;
  double occupied_thresh = 0.65;
  double free_thresh = 0.196;
};

inline MapYaml parse_map_yaml(const std::string& yaml_path) {
  std::ifstream in(yaml_path);
  if (!in) throw LoadError(yaml_path + ": unreadable map YAML");
  MapYaml out;
  bool has_image = false, has_res = false, has_origin = false;
  bool has_negate = false, has_occ = false, has_free = false;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, colon));
    const std::string value = trim(line.substr(colon + 1));
    try {
      if (key == "image") {
        out.image = value;
        has_image = !value.empty();
      } else if (key == "resolution") {
        out.resolution = std::stod(value);
        has_res = true;
      } else if (key == "origin") {
        std::string v = value;
        for (char& c : v)
          if (c == '[' || c == ']' || c == ',') c = ' ';
        std::istringstream os(v);
        if (!(os >> out.origin.x >> out.origin.y >> out.origin.yaw))
          throw LoadError(yaml_path + ": malformed field 'origin'");
        has_origin = true;
      } else if (key == "negate") {
        out.negate = std::stoi(value);
        has_negate = true;
      } else if (key == "occupied_thresh") {
        out.occupied_thresh = std::stod(value);
        has_occ = true;
      } else if (key == "free_thresh") {
        out.free_thresh = std::stod(value);
        has_free = true;
      }
    } catch (const std::invalid_argument&) {
      throw LoadError(yaml_path + ": malformed field '" + key + "'");
    }
  }
  if (!has_image) throw LoadError(yaml_path + ": missing field 'image'");
  if (!has_res) throw LoadError(yaml_path + ": missing field 'resolution'");
  if (!has_origin) throw LoadError(yaml_path + ": missing field 'origin'");
  if (!has_negate) throw LoadError(yaml_path + ": missing field 'negate'");
  if (!has_occ)
    throw LoadError(yaml_path + ": missing field 'occupied_thresh'");
  if (!has_free) throw LoadError(yaml_path + ": missing field 'free_thresh'");
  if (out.resolution <= 0.0)
    throw LoadError(yaml_path + ": field 'resolution' must be positive");
  return out;
}

}  // namespace detail

// Loads a binary P5 PGM and its YAML sidecar. Image row 0 is the top of the
// map; grid row 0 sits at the origin, so rows are flipped on read.
inline OccupancyGrid load_map(const std::string& pgm_path,
                              const std::string& yaml_path) {
  const detail::MapYaml meta = detail::parse_map_yaml(yaml_path);

  std::ifstream in(pgm_path, std::ios::binary);
  if (!in) throw LoadError(pgm_path + ": unreadable PGM file");
  std::string magic;
  in >> magic;
  if (magic != "P5")
    throw LoadError(pgm_path + ": expected binary PGM magic 'P5', got '" +
                    magic + "'");
  const int width = detail::next_pgm_token(in, pgm_path);
  const int height = detail::next_pgm_token(in, pgm_path);
  const int maxval = detail::next_pgm_token(in, pgm_path);
  if (width <= 0 || height <= 0)
    throw LoadError(pgm_path + ": non-positive PGM dimensions");
  if (maxval != 255)
    throw LoadError(pgm_path + ": PGM maxval must be 255, got " +
                    std::to_string(maxval));
  in.get();  // single whitespace after maxval
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw LoadError(pgm_path + ": PGM data shorter than width*height");

  std::vector<CellState> cells(raw.size());
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const std::uint8_t v =
          raw[static_cast<std::size_t>(height - 1 - r) * width + c];
      const double occ =
          meta.negate == 0 ? (255.0 - v) / 255.0 : v / 255.0;
      CellState s;
      if (occ >= meta.occupied_thresh)
        s = CellState::Occupied;
      else if (occ <= meta.free_thresh)
        s = CellState::Free;
      else
        s = CellState::Unknown;
      cells[static_cast<std::size_t>(r) * width + c] = s;
    }
  }
  return OccupancyGrid(width, height, meta.resolution, meta.origin,
                       std::move(cells));
}

inline void save_map(const OccupancyGrid& grid, const std::string& pgm_path,
                     const std::string& yaml_path) {
  {
    std::ofstream out(pgm_path, std::ios::binary);
    if (!out) throw LoadError(pgm_path + ": cannot open PGM for writing");
    out << "P5\n" << grid.width() << " " << grid.height() << "\n255\n";
    std::vector<std::uint8_t> raw(
        static_cast<std::size_t>(grid.width()) * grid.height());
    for (int r = 0; r < grid.height(); ++r) {
      for (int c = 0; c < grid.width(); ++c) {
        std::uint8_t v = detail::kPgmUnknown;
        switch (grid.at(r, c)) {
          case CellState::Free:
            v = detail::kPgmFree;
            break;
          case CellState::Occupied:
            v = detail::kPgmOccupied;
            break;
          case CellState::Unknown:
            v = detail::kPgmUnknown;
            break;
        }
        raw[static_cast<std::size_t>(grid.height() - 1 - r) * grid.width() +
            c] = v;
      }
    }
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size()));
  }
  {
    std::ofstream out(yaml_path);
    if (!out) throw LoadError(yaml_path + ": cannot open YAML for writing");
    std::string image = pgm_path;
    const auto slash = image.find_last_of('/');
    if (slash != std::string::npos) image = image.substr(slash + 1);
    out.precision(17);
    out << "image: " << image << "\n"
        << "resolution: " << grid.resolution() << "\n"
        << "origin: [" << grid.origin().x << ", " << grid.origin().y << ", "
        << grid.origin().yaw << "]\n"
        << "negate: 0\n"
        << "occupied_thresh: 0.65\n"
        << "free_thresh: 0.196\n";
  }
}

// ---------------------------------------------------------------------------
// World <-> grid transforms
// ---------------------------------------------------------------------------

inline GridPose world_to_grid(const OccupancyGrid& grid, double wx,
                              double wy) {
  const MapOrigin& o = grid.origin();
  const double dx = wx - o.x;
  const double dy = wy - o.y;
  const double cy = std::cos(-o.yaw), sy = std::sin(-o.yaw);
  const double lx = cy * dx - sy * dy;
  const double ly = sy * dx + cy * dy;
  const int col = static_cast<int>(std::floor(lx / grid.resolution()));
  const int row = static_cast<int>(std::floor(ly / grid.resolution()));
  if (!grid.in_bounds(row, col)) {
    std::ostringstream msg;
    msg << "world point (" << wx << ", " << wy << ") outside map bounds";
    throw BoundsError(msg.str());
  }
  return {row, col};
}

// Returns the world coordinates of the cell center.
inline Eigen::Vector2d grid_to_world(const OccupancyGrid& grid,
                                     const GridPose& p) {
  if (!grid.in_bounds(p))
    throw BoundsError("grid pose outside map bounds");
  const MapOrigin& o = grid.origin();
  const double lx = (p.col + 0.5) * grid.resolution();
  const double ly = (p.row + 0.5) * grid.resolution();
  const double cy = std::cos(o.yaw), sy = std::sin(o.yaw);
  return {o.x + cy * lx - sy * ly, o.y + sy * lx + cy * ly};
}

// ---------------------------------------------------------------------------
// Cost map
// ---------------------------------------------------------------------------

class CostMap {
 public:
  CostMap() = default;
  CostMap(int width, int height, double resolution, MapOrigin origin,
          std::vector<double> weights)
      : width_(width),
        height_(height),
        resolution_(resolution),
        origin_(origin),
        weights_(std::move(weights)) {
    if (weights_.size() != static_cast<std::size_t>(width_) * height_)
      throw InvariantError("CostMap: weight count != width*height");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  double resolution() const { return resolution_; }
  const MapOrigin& origin() const { return origin_; }

  bool in_bounds(int row, int col) const {
    return row >= 0 && row < height_ && col >= 0 && col < width_;
  }
  bool in_bounds(const GridPose& p) const { return in_bounds(p.row, p.col); }

  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * width_ + col;
  }

  double weight(int row, int col) const { return weights_[index(row, col)]; }
  double weight(const GridPose& p) const { return weight(p.row, p.col); }
  bool traversable(const GridPose& p) const {
    return in_bounds(p) && weight(p) > 0.0;
  }

  const std::vector<double>& weights() const { return weights_; }

  std::size_t traversable_count() const {
    std::size_t n = 0;
    for (double w : weights_)
      if (w > 0.0) ++n;
    return n;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  double resolution_ = 0.05;
  MapOrigin origin_;
  std::vector<double> weights_;
};

namespace detail {

// Exact squared Euclidean distance transform (Felzenszwalb-Huttenlocher),
// distances in cell units to the nearest cell where source[idx] is true.
inline constexpr double kEdtInf = std::numeric_limits<double>::infinity();

inline std::vector<double> squared_edt(const std::vector<bool>& source,
                                       int width, int height) {
  constexpr double kInf = kEdtInf;
  std::vector<double> dist(source.size());
  for (std::size_t i = 0; i < source.size(); ++i)
    dist[i] = source[i] ? 0.0 : kInf;

  const auto transform_1d = [](std::vector<double>& f) {
    const int n = static_cast<int>(f.size());
    std::vector<int> v(n);
    std::vector<double> z(n + 1), d(n);
    int k = 0;
    v[0] = 0;
    z[0] = -kEdtInf;
    z[1] = kEdtInf;
    for (int q = 1; q < n; ++q) {
      if (f[q] == kEdtInf) continue;
      if (f[v[0]] == kEdtInf) {
        v[0] = q;
        continue;
      }
      double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) /
                 (2.0 * q - 2.0 * v[k]);
      while (k > 0 && s <= z[k]) {
        --k;
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) /
            (2.0 * q - 2.0 * v[k]);
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = kEdtInf;
    }
    if (f[v[0]] == kEdtInf) {  // whole scanline empty
      std::fill(d.begin(), d.end(), kEdtInf);
    } else {
      k = 0;
      for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        d[q] = (q - v[k]) * double(q - v[k]) + f[v[k]];
      }
    }
    f = d;
  };

  std::vector<double> col(height);
  for (int c = 0; c < width; ++c) {
    for (int r = 0; r < height; ++r)
      col[r] = dist[static_cast<std::size_t>(r) * width + c];
    transform_1d(col);
    for (int r = 0; r < height; ++r)
      dist[static_cast<std::size_t>(r) * width + c] = col[r];
  }
  std::vector<double> row(width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c)
      row[c] = dist[static_cast<std::size_t>(r) * width + c];
    transform_1d(row);
    for (int c = 0; c < width; ++c)
      dist[static_cast<std::size_t>(r) * width + c] = row[c];
  }
  return dist;
}

}  // namespace detail

// weight = 0 on Occupied/Unknown cells; on Free cells a linear ramp from
// min_weight at an obstacle up to 1 beyond the inflation radius.
inline CostMap build_costmap(const OccupancyGrid& grid,
                             double inflation_radius = 0.3,
                             double min_weight = 0.25) {
  if (inflation_radius < 0.0)
    throw InvariantError("build_costmap: inflation_radius must be >= 0");
  if (!(min_weight > 0.0 && min_weight <= 1.0))
    throw InvariantError("build_costmap: min_weight must be in (0, 1]");

  std::vector<bool> obstacle(grid.cells().size());
  bool any_obstacle = false;
  for (std::size_t i = 0; i < grid.cells().size(); ++i) {
    obstacle[i] = grid.cells()[i] != CellState::Free;
    any_obstacle = any_obstacle || obstacle[i];
  }

  std::vector<double> weights(grid.cells().size(), 0.0);
  if (!any_obstacle || inflation_radius == 0.0) {
    for (std::size_t i = 0; i < weights.size(); ++i)
      weights[i] = obstacle[i] ? 0.0 : 1.0;
  } else {
    const std::vector<double> d2 =
        detail::squared_edt(obstacle, grid.width(), grid.height());
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (obstacle[i]) continue;
      const double d = std::sqrt(d2[i]) * grid.resolution();
      const double ratio = std::min(d / inflation_radius, 1.0);
      weights[i] = min_weight + (1.0 - min_weight) * ratio;
    }
  }
  return CostMap(grid.width(), grid.height(), grid.resolution(), grid.origin(),
                 std::move(weights));
}

// Debug export: flat binary of row-major float64 weights plus a YAML sidecar
// with the dimensions.
inline void export_costmap(const CostMap& cm, const std::string& prefix) {
  {
    std::ofstream out(prefix + ".bin", std::ios::binary);
    if (!out) throw LoadError(prefix + ".bin: cannot open for writing");
    out.write(reinterpret_cast<const char*>(cm.weights().data()),
              static_cast<std::streamsize>(cm.weights().size() *
                                           sizeof(double)));
  }
  {
    std::ofstream out(prefix + ".yaml");
    if (!out) throw LoadError(prefix + ".yaml: cannot open for writing");
    out.precision(17);
    out << "width: " << cm.width() << "\n"
        << "height: " << cm.height() << "\n"
        << "resolution: " << cm.resolution() << "\n"
        << "dtype: float64\n"
        << "order: row-major\n";
  }
}

}  // namespace topoplan
