#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "topoplan/errors.hpp"

namespace topoplan {

// Deterministic random source. All samplers are written out explicitly on top
// of mt19937_64 so that a fixed seed fixes every draw, independent of the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Uniform in [0, 1).
  double uniform() {
    return (engine_() >> 11) * (1.0 / 9007199254740992.0);  // 53-bit mantissa
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(std::min<double>(n - 1, std::floor(uniform() * n)));
  }

  std::uint64_t raw() { return engine_(); }

  // Standard normal, Marsaglia polar method with cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  // Gamma(shape, scale=1), Marsaglia-Tsang. Boosted for shape < 1.
  double gamma(double shape) {
    if (shape <= 0.0) throw InvariantError("gamma shape must be > 0");
    if (shape < 1.0) {
      const double u = std::max(uniform(), 1e-300);
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v;
    }
  }

  double chi_squared(double df) { return 2.0 * gamma(0.5 * df); }

  // Dirichlet draw; entries floored at a tiny positive value so downstream
  // logs stay finite, then renormalized.
  std::vector<double> dirichlet(const std::vector<double>& alpha) {
    std::vector<double> x(alpha.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < alpha.size(); ++j) {
      x[j] = std::max(gamma(alpha[j]), 1e-300);
      sum += x[j];
    }
    for (double& v : x) v /= sum;
    return x;
  }

  std::vector<double> dirichlet_symmetric(double mass_per_bin, int bins) {
    return dirichlet(std::vector<double>(bins, mass_per_bin));
  }

  // Draw index from unnormalized weights.
  int categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw InvariantError("categorical: zero total weight");
    double u = uniform() * total;
    for (std::size_t j = 0; j < weights.size(); ++j) {
      u -= weights[j];
      if (u <= 0.0) return static_cast<int>(j);
    }
    return static_cast<int>(weights.size()) - 1;
  }

  // Draw index from log-weights (shift by max before exponentiating).
  int categorical_log(const std::vector<double>& logw) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double w : logw) mx = std::max(mx, w);
    if (!std::isfinite(mx))
      throw InvariantError("categorical_log: all weights are -inf");
    std::vector<double> w(logw.size());
    for (std::size_t j = 0; j < logw.size(); ++j) w[j] = std::exp(logw[j] - mx);
    return categorical(w);
  }

  Eigen::Vector2d normal2(const Eigen::Vector2d& mean,
                          const Eigen::Matrix2d& cov) {
    Eigen::LLT<Eigen::Matrix2d> llt(cov);
    if (llt.info() != Eigen::Success)
      throw InvariantError("normal2: covariance not positive-definite");
    Eigen::Vector2d z(normal(), normal());
    return mean + llt.matrixL() * z;
  }

  // Wishart_2(df, scale) via Bartlett decomposition. df > 1 required.
  Eigen::Matrix2d wishart2(double df, const Eigen::Matrix2d& scale) {
    if (df <= 1.0) throw InvariantError("wishart2: df must exceed 1");
    Eigen::LLT<Eigen::Matrix2d> llt(scale);
    if (llt.info() != Eigen::Success)
      throw InvariantError("wishart2: scale not positive-definite");
    Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
    a(0, 0) = std::sqrt(chi_squared(df));
    a(1, 1) = std::sqrt(chi_squared(df - 1.0));
    a(1, 0) = normal();
    const Eigen::Matrix2d la = llt.matrixL() * a;
    return la * la.transpose();
  }

  // Inverse-Wishart_2(psi, df): inverse of a Wishart draw with inverted scale.
  Eigen::Matrix2d inverse_wishart2(const Eigen::Matrix2d& psi, double df) {
    const Eigen::Matrix2d w = wishart2(df, psi.inverse());
    return w.inverse();
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace topoplan
