#pragma once

// Map overlays: occupancy background, 2-sigma Gaussian ellipses, place
// transition edges between the Gaussian centers, and a planned path.
// Vector output is SVG 1.1; raster output is binary PPM (P6).

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "topoplan/concept_model.hpp"
#include "topoplan/errors.hpp"
#include "topoplan/grid_map.hpp"
#include "topoplan/hier_planner.hpp"

namespace topoplan {

struct RenderOptions {
  double psi_edge_threshold = 0.01;  // draw edges with more mass than this
  int ppm_scale = 6;                 // pixels per cell
};

namespace detail {

struct EllipseSpec {
  double cx, cy, rx, ry, angle_deg;  // cell units, math convention
};

inline EllipseSpec ellipse_2sigma(const Eigen::Vector2d& mu,
                                  const Eigen::Matrix2d& sigma) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(sigma);
  const Eigen::Vector2d evals = es.eigenvalues();
  const Eigen::Vector2d axis = es.eigenvectors().col(1);  // major axis
  EllipseSpec e;
  e.cx = mu.x();
  e.cy = mu.y();
  e.rx = 2.0 * std::sqrt(std::max(0.0, evals(1)));
  e.ry = 2.0 * std::sqrt(std::max(0.0, evals(0)));
  e.angle_deg = std::atan2(axis.y(), axis.x()) * 180.0 / M_PI;
  return e;
}

inline const char* cell_fill(CellState s) {
  switch (s) {
    case CellState::Occupied:
      return "#1a1a1a";
    case CellState::Unknown:
      return "#b0b0b0";
    case CellState::Free:
      break;
  }
  return "#ffffff";
}

}  // namespace detail

inline void render_svg(const std::string& path, const OccupancyGrid& grid,
                       const ConceptModel* model = nullptr,
                       const PlanResult* plan = nullptr,
                       const RenderOptions& options = {}) {
  std::ofstream out(path);
  if (!out) throw LoadError(path + ": cannot open for writing");
  const int W = grid.width(), H = grid.height();
  // Grid row 0 sits at the bottom; SVG y grows downward, so y = H - cy.
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" "
      << "width=\"" << W * 8 << "\" height=\"" << H * 8 << "\" viewBox=\"0 0 "
      << W << " " << H << "\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H
      << "\" fill=\"#ffffff\"/>\n";
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const CellState s = grid.at(r, c);
      if (s == CellState::Free) continue;
      out << "<rect x=\"" << c << "\" y=\"" << H - 1 - r
          << "\" width=\"1\" height=\"1\" fill=\"" << detail::cell_fill(s)
          << "\"/>\n";
    }
  }
  if (model != nullptr) {
    for (int a = 0; a < model->K(); ++a)
      for (int b = a + 1; b < model->K(); ++b) {
        const double mass = std::max(model->psi[a][b], model->psi[b][a]);
        if (mass <= options.psi_edge_threshold) continue;
        out << "<line x1=\"" << model->mu[a].x() << "\" y1=\""
            << H - model->mu[a].y() << "\" x2=\"" << model->mu[b].x()
            << "\" y2=\"" << H - model->mu[b].y()
            << "\" stroke=\"#2b6cb0\" stroke-width=\""
            << 0.15 + 0.8 * mass << "\" stroke-opacity=\"0.7\"/>\n";
      }
    for (int k = 0; k < model->K(); ++k) {
      const auto e = detail::ellipse_2sigma(model->mu[k], model->sigma[k]);
      out << "<ellipse cx=\"0\" cy=\"0\" rx=\"" << e.rx << "\" ry=\"" << e.ry
          << "\" fill=\"#38a16933\" stroke=\"#38a169\" stroke-width=\"0.15\""
          << " transform=\"translate(" << e.cx << " " << H - e.cy
          << ") rotate(" << -e.angle_deg << ")\"/>\n";
      out << "<circle cx=\"" << e.cx << "\" cy=\"" << H - e.cy
          << "\" r=\"0.3\" fill=\"#38a169\"/>\n";
    }
  }
  if (plan != nullptr && !plan->path.empty()) {
    out << "<polyline fill=\"none\" stroke=\"#c53030\" stroke-width=\"0.35\" "
        << "stroke-linejoin=\"round\" points=\"";
    for (const auto& p : plan->path) {
      const Eigen::Vector2d x = cell_center(p);
      out << x.x() << "," << H - x.y() << " ";
    }
    out << "\"/>\n";
    const Eigen::Vector2d s = cell_center(plan->path.front());
    const Eigen::Vector2d g = cell_center(plan->path.back());
    out << "<circle cx=\"" << s.x() << "\" cy=\"" << H - s.y()
        << "\" r=\"0.45\" fill=\"#d69e2e\"/>\n";
    out << "<circle cx=\"" << g.x() << "\" cy=\"" << H - g.y()
        << "\" r=\"0.45\" fill=\"#c53030\"/>\n";
  }
  out << "</svg>\n";
}

namespace detail {

struct PpmCanvas {
  int width, height;  // pixels
  std::vector<std::uint8_t> px;

  PpmCanvas(int w, int h) : width(w), height(h), px(3u * w * h, 255) {}

  void set(int x, int y, int r, int g, int b) {
    if (x < 0 || x >= width || y < 0 || y >= height) return;
    const std::size_t i = 3u * (static_cast<std::size_t>(y) * width + x);
    px[i] = static_cast<std::uint8_t>(r);
    px[i + 1] = static_cast<std::uint8_t>(g);
    px[i + 2] = static_cast<std::uint8_t>(b);
  }

  void line(double x0, double y0, double x1, double y1, int r, int g, int b) {
    const int steps =
        std::max(2, static_cast<int>(2.0 * std::hypot(x1 - x0, y1 - y0)));
    for (int t = 0; t <= steps; ++t) {
      const double a = static_cast<double>(t) / steps;
      set(static_cast<int>(std::round(x0 + a * (x1 - x0))),
          static_cast<int>(std::round(y0 + a * (y1 - y0))), r, g, b);
    }
  }
};

}  // namespace detail

inline void render_ppm(const std::string& path, const OccupancyGrid& grid,
                       const ConceptModel* model = nullptr,
                       const PlanResult* plan = nullptr,
                       const RenderOptions& options = {}) {
  const int s = options.ppm_scale;
  const int W = grid.width() * s, H = grid.height() * s;
  detail::PpmCanvas canvas(W, H);
  const auto to_px_x = [&](double cx) { return cx * s; };
  const auto to_px_y = [&](double cy) { return H - cy * s; };

  for (int r = 0; r < grid.height(); ++r)
    for (int c = 0; c < grid.width(); ++c) {
      int rr = 255, gg = 255, bb = 255;
      if (grid.at(r, c) == CellState::Occupied) rr = gg = bb = 26;
      if (grid.at(r, c) == CellState::Unknown) rr = gg = bb = 176;
      if (rr == 255) continue;
      for (int dy = 0; dy < s; ++dy)
        for (int dx = 0; dx < s; ++dx)
          canvas.set(c * s + dx, H - 1 - (r * s + dy), rr, gg, bb);
    }
  if (model != nullptr) {
    for (int a = 0; a < model->K(); ++a)
      for (int b = a + 1; b < model->K(); ++b) {
        const double mass = std::max(model->psi[a][b], model->psi[b][a]);
        if (mass <= options.psi_edge_threshold) continue;
        canvas.line(to_px_x(model->mu[a].x()), to_px_y(model->mu[a].y()),
                    to_px_x(model->mu[b].x()), to_px_y(model->mu[b].y()), 43,
                    108, 176);
      }
    for (int k = 0; k < model->K(); ++k) {
      const auto e = detail::ellipse_2sigma(model->mu[k], model->sigma[k]);
      const double rad = e.angle_deg * M_PI / 180.0;
      double px = 0, py = 0;
      for (int t = 0; t <= 128; ++t) {
        const double a = 2.0 * M_PI * t / 128;
        const double ex = e.rx * std::cos(a), ey = e.ry * std::sin(a);
        const double x = e.cx + ex * std::cos(rad) - ey * std::sin(rad);
        const double y = e.cy + ex * std::sin(rad) + ey * std::cos(rad);
        if (t > 0)
          canvas.line(to_px_x(px), to_px_y(py), to_px_x(x), to_px_y(y), 56,
                      161, 105);
        px = x;
        py = y;
      }
    }
  }
  if (plan != nullptr) {
    for (std::size_t t = 1; t < plan->path.size(); ++t) {
      const Eigen::Vector2d a = cell_center(plan->path[t - 1]);
      const Eigen::Vector2d b = cell_center(plan->path[t]);
      canvas.line(to_px_x(a.x()), to_px_y(a.y()), to_px_x(b.x()),
                  to_px_y(b.y()), 197, 48, 48);
    }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError(path + ": cannot open for writing");
  out << "P6\n" << W << " " << H << "\n255\n";
  out.write(reinterpret_cast<const char*>(canvas.px.data()),
            static_cast<std::streamsize>(canvas.px.size()));
}

}  // namespace topoplan
