#pragma once

// Gibbs sampler for the joint posterior over event assignments and global
// parameters, with optional reverse replay for the place-transition rows.
// Also houses the clustering-quality metrics used by the learning reports.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "topoplan/concept_model.hpp"
#include "topoplan/errors.hpp"
#include "topoplan/grid_map.hpp"
#include "topoplan/rng.hpp"

namespace topoplan {

struct GibbsConfig {
  int iterations = 1000;
  int burn_in = 500;
  std::uint64_t seed = 0;
  bool reverse_replay = false;
  enum class Init { kRandom, kKmeans };
  Init init = Init::kKmeans;
  bool validate_each_sweep = false;

  void validate() const {
    if (iterations < 1) throw InvariantError("GibbsConfig: iterations < 1");
    if (burn_in < 0 || burn_in >= iterations)
      throw InvariantError("GibbsConfig: burn_in must be < iterations");
  }
};

struct LearnResult {
  ConceptModel model;           // final sweep
  LatentAssignment assignment;  // final sweep
  std::vector<double> log_joint_trace;
  ConceptModel best_model;      // highest log-joint sample after burn-in
  LatentAssignment best_assignment;
  double best_log_joint = -std::numeric_limits<double>::infinity();
  int best_iteration = -1;
};

// ---------------------------------------------------------------------------
// Clustering metrics
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::vector<int>> contingency(const std::vector<int>& a,
                                                 const std::vector<int>& b) {
  if (a.size() != b.size())
    throw UserError("label sequences must have equal length");
  int ka = 0, kb = 0;
  for (int v : a) ka = std::max(ka, v + 1);
  for (int v : b) kb = std::max(kb, v + 1);
  std::vector<std::vector<int>> n(ka, std::vector<int>(kb, 0));
  for (std::size_t t = 0; t < a.size(); ++t) ++n[a[t]][b[t]];
  return n;
}

}  // namespace detail

// Normalized mutual information with arithmetic-mean normalization.
inline double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  const auto n = detail::contingency(a, b);
  const double total = static_cast<double>(a.size());
  std::vector<double> ra(n.size(), 0.0), cb(n[0].size(), 0.0);
  for (std::size_t i = 0; i < n.size(); ++i)
    for (std::size_t j = 0; j < n[i].size(); ++j) {
      ra[i] += n[i][j];
      cb[j] += n[i][j];
    }
  double ha = 0.0, hb = 0.0, mi = 0.0;
  for (double v : ra)
    if (v > 0) ha -= v / total * std::log(v / total);
  for (double v : cb)
    if (v > 0) hb -= v / total * std::log(v / total);
  for (std::size_t i = 0; i < n.size(); ++i)
    for (std::size_t j = 0; j < n[i].size(); ++j)
      if (n[i][j] > 0)
        mi += n[i][j] / total *
              std::log(total * n[i][j] / (ra[i] * cb[j]));
  if (ha == 0.0 && hb == 0.0) return 1.0;  // two identical trivial partitions
  const double denom = 0.5 * (ha + hb);
  return denom > 0.0 ? mi / denom : 0.0;
}

// Adjusted Rand index.
inline double ari(const std::vector<int>& a, const std::vector<int>& b) {
  const auto n = detail::contingency(a, b);
  const auto comb2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  std::vector<double> ra(n.size(), 0.0), cb(n[0].size(), 0.0);
  for (std::size_t i = 0; i < n.size(); ++i)
    for (std::size_t j = 0; j < n[i].size(); ++j) {
      sum_ij += comb2(n[i][j]);
      ra[i] += n[i][j];
      cb[j] += n[i][j];
    }
  for (double v : ra) sum_a += comb2(v);
  for (double v : cb) sum_b += comb2(v);
  const double total = comb2(static_cast<double>(a.size()));
  const double expected = sum_a * sum_b / total;
  const double maximum = 0.5 * (sum_a + sum_b);
  if (maximum - expected == 0.0) return 1.0;  // degenerate partitions agree
  return (sum_ij - expected) / (maximum - expected);
}

// ---------------------------------------------------------------------------
// Transition counts and psi sampling (reverse replay lives here)
// ---------------------------------------------------------------------------

// Transition counts n(j -> k) over the event chain. With reverse_replay the
// chain traversed backwards contributes a second set of counts.
inline std::vector<std::vector<double>> transition_counts(
    const std::vector<int>& i_seq, int K, bool reverse_replay) {
  std::vector<std::vector<double>> counts(K, std::vector<double>(K, 0.0));
  for (std::size_t e = 1; e < i_seq.size(); ++e) {
    counts[i_seq[e - 1]][i_seq[e]] += 1.0;
    if (reverse_replay) counts[i_seq[e]][i_seq[e - 1]] += 1.0;
  }
  return counts;
}

inline std::vector<std::vector<double>> sample_psi(
    const std::vector<int>& i_seq, int K, const Hyperparameters& hyper,
    bool reverse_replay, Rng& rng) {
  const auto counts = transition_counts(i_seq, K, reverse_replay);
  std::vector<std::vector<double>> psi(K);
  for (int k = 0; k < K; ++k) {
    std::vector<double> a(K);
    for (int j = 0; j < K; ++j) a[j] = hyper.omega / K + counts[k][j];
    psi[k] = rng.dirichlet(a);
  }
  return psi;
}

// ---------------------------------------------------------------------------
// Normal-inverse-Wishart posterior
// ---------------------------------------------------------------------------

struct NiwParams {
  Eigen::Vector2d m;
  double kappa;
  Eigen::Matrix2d V;
  double nu;
};

inline NiwParams niw_posterior(const std::vector<Eigen::Vector2d>& points,
                               const Hyperparameters& hyper) {
  const double n = static_cast<double>(points.size());
  if (points.empty()) return {hyper.m0, hyper.kappa0, hyper.V0, hyper.nu0};
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& x : points) mean += x;
  mean /= n;
  Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
  for (const auto& x : points) {
    const Eigen::Vector2d d = x - mean;
    scatter += d * d.transpose();
  }
  const Eigen::Vector2d dm = mean - hyper.m0;
  NiwParams p;
  p.kappa = hyper.kappa0 + n;
  p.nu = hyper.nu0 + n;
  p.m = (hyper.kappa0 * hyper.m0 + n * mean) / p.kappa;
  p.V = hyper.V0 + scatter +
        (hyper.kappa0 * n / (hyper.kappa0 + n)) * dm * dm.transpose();
  return p;
}

namespace detail {

// Draw (mu, sigma) from a NIW; sigma symmetrized and jittered if needed,
// mu clamped into the map bounds when they are known.
inline void sample_niw(const NiwParams& p, int map_width, int map_height,
                       Rng& rng, Eigen::Vector2d& mu, Eigen::Matrix2d& sigma) {
  sigma = rng.inverse_wishart2(p.V, p.nu);
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  Eigen::LLT<Eigen::Matrix2d> llt(sigma);
  if (llt.info() != Eigen::Success || sigma.determinant() < 1e-12)
    sigma += 1e-9 * Eigen::Matrix2d::Identity();
  mu = rng.normal2(p.m, sigma / p.kappa);
  if (map_width > 0 && map_height > 0) {
    mu.x() = std::clamp(mu.x(), 0.0, static_cast<double>(map_width));
    mu.y() = std::clamp(mu.y(), 0.0, static_cast<double>(map_height));
  }
}

inline double log_dirichlet_pdf(const std::vector<double>& x,
                                const std::vector<double>& alpha) {
  double sum_a = 0.0, lp = 0.0, lg = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    sum_a += alpha[j];
    lg += std::lgamma(alpha[j]);
    lp += (alpha[j] - 1.0) * std::log(x[j]);
  }
  return std::lgamma(sum_a) - lg + lp;
}

inline double log_iw_pdf(const Eigen::Matrix2d& sigma,
                         const Eigen::Matrix2d& V, double nu) {
  constexpr int p = 2;
  const double log_det_v = std::log(V.determinant());
  const double log_det_s = std::log(sigma.determinant());
  const double log_gamma2 = 0.5 * std::log(M_PI) + std::lgamma(0.5 * nu) +
                            std::lgamma(0.5 * nu - 0.5);
  const double trace = (V * sigma.inverse()).trace();
  return 0.5 * nu * log_det_v - 0.5 * nu * p * std::log(2.0) - log_gamma2 -
         0.5 * (nu + p + 1.0) * log_det_s - 0.5 * trace;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward-filter backward-sample for the position chain
// ---------------------------------------------------------------------------

// Samples i_{1:E} jointly from its conditional given concepts and parameters.
// Chain factors per event: unigram-rescaled phi membership, psi transition
// (absent at e=1), and the Gaussian emission at the event pose.
inline std::vector<int> ffbs_sample_positions(
    const std::vector<Eigen::Vector2d>& poses, const std::vector<int>& concepts,
    const ConceptModel& model, Rng& rng) {
  const int E = static_cast<int>(poses.size());
  const int K = model.K();
  std::vector<Gaussian2> gauss;
  gauss.reserve(K);
  for (int k = 0; k < K; ++k)
    gauss.push_back(Gaussian2::from(model.mu[k], model.sigma[k]));

  std::vector<double> phi_denom(K, 0.0);
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < model.L(); ++l) phi_denom[k] += model.phi[l][k];

  // log alpha, normalized per step by its log-sum-exp
  std::vector<std::vector<double>> la(E, std::vector<double>(K, 0.0));
  for (int e = 0; e < E; ++e) {
    for (int k = 0; k < K; ++k) {
      double v = std::log(model.phi[concepts[e]][k]) - std::log(phi_denom[k]) +
                 gauss[k].logpdf(poses[e]);
      if (e > 0) {
        std::vector<double> acc(K);
        for (int j = 0; j < K; ++j)
          acc[j] = la[e - 1][j] + std::log(model.psi[j][k]);
        v += detail::log_sum_exp(acc);
      }
      la[e][k] = v;
    }
    const double norm = detail::log_sum_exp(la[e]);
    if (!std::isfinite(norm))
      throw InvariantError("ffbs: all forward weights vanished");
    for (int k = 0; k < K; ++k) la[e][k] -= norm;
  }

  std::vector<int> out(E);
  out[E - 1] = rng.categorical_log(la[E - 1]);
  for (int e = E - 2; e >= 0; --e) {
    std::vector<double> w(K);
    for (int k = 0; k < K; ++k)
      w[k] = la[e][k] + std::log(model.psi[k][out[e + 1]]);
    out[e] = rng.categorical_log(w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Log joint of the in-scope factors (priors + event likelihoods)
// ---------------------------------------------------------------------------

inline double log_joint(const TeachingDataset& ds, const ConceptModel& model,
                        const LatentAssignment& assign,
                        const Hyperparameters& hyper) {
  model.validate();
  const int L = model.L(), K = model.K();
  if (static_cast<int>(assign.c.size()) != ds.num_events() ||
      static_cast<int>(assign.i.size()) != ds.num_events())
    throw InvariantError("log_joint: assignment length mismatch");

  double lj = detail::log_dirichlet_pdf(
      model.pi, std::vector<double>(L, hyper.alpha / L));
  for (int l = 0; l < L; ++l) {
    lj += detail::log_dirichlet_pdf(model.phi[l],
                                    std::vector<double>(K, hyper.gamma / K));
    lj += detail::log_dirichlet_pdf(
        model.theta[l], std::vector<double>(model.F(), hyper.chi));
    lj += detail::log_dirichlet_pdf(model.W[l],
                                    std::vector<double>(model.V(), hyper.beta));
  }
  for (int k = 0; k < K; ++k) {
    lj += detail::log_dirichlet_pdf(model.psi[k],
                                    std::vector<double>(K, hyper.omega / K));
    lj += detail::log_iw_pdf(model.sigma[k], hyper.V0, hyper.nu0);
    lj += Gaussian2::from(hyper.m0, model.sigma[k] / hyper.kappa0)
              .logpdf(model.mu[k]);
  }

  for (int e = 0; e < ds.num_events(); ++e) {
    const int c = assign.c[e], i = assign.i[e];
    lj += std::log(model.pi[c]);
    lj += word_likelihood(ds.events[e].words, c, model);
    for (int j = 0; j < ds.feature_dim; ++j)
      if (ds.events[e].feature[j] > 0)
        lj += ds.events[e].feature[j] * std::log(model.theta[c][j]);
    if (e == 0) {
      double denom = 0.0;
      for (int l = 0; l < L; ++l) denom += model.phi[l][i];
      lj += std::log(model.phi[c][i]) - std::log(denom);
    } else {
      lj += place_transition_score(assign.i[e - 1], i, c, model);
    }
    lj += position_emission(ds.event_pose(e), i, model);
  }
  return lj;
}

// ---------------------------------------------------------------------------
// K-means init for the position assignments
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<int> kmeans_labels(const std::vector<Eigen::Vector2d>& pts,
                                      int k, Rng& rng, int iterations = 25) {
  const int n = static_cast<int>(pts.size());
  std::vector<Eigen::Vector2d> centers;
  centers.push_back(pts[rng.uniform_int(n)]);
  while (static_cast<int>(centers.size()) < k) {
    std::vector<double> d2(n);
    for (int t = 0; t < n; ++t) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers)
        best = std::min(best, (pts[t] - c).squaredNorm());
      d2[t] = best;
    }
    double total = 0.0;
    for (double v : d2) total += v;
    if (total <= 0.0) {
      centers.push_back(pts[rng.uniform_int(n)]);
      continue;
    }
    centers.push_back(pts[rng.categorical(d2)]);
  }
  std::vector<int> labels(n, 0);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (int t = 0; t < n; ++t) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (pts[t] - centers[c]).squaredNorm();
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (labels[t] != best) {
        labels[t] = best;
        changed = true;
      }
    }
    std::vector<Eigen::Vector2d> sums(k, Eigen::Vector2d::Zero());
    std::vector<int> cnt(k, 0);
    for (int t = 0; t < n; ++t) {
      sums[labels[t]] += pts[t];
      ++cnt[labels[t]];
    }
    for (int c = 0; c < k; ++c)
      if (cnt[c] > 0) centers[c] = sums[c] / cnt[c];
    if (!changed) break;
  }
  return labels;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The Gibbs sweep
// ---------------------------------------------------------------------------

namespace detail {

struct SweepState {
  std::vector<Eigen::Vector2d> poses;  // event poses, cell-center coords
  LatentAssignment assign;
  ConceptModel model;
};

// Draws every global parameter from its conjugate conditional given the
// current assignment.
inline void sample_parameters(const TeachingDataset& ds,
                              const Hyperparameters& hyper, SweepState& st,
                              bool reverse_replay, Rng& rng) {
  const int L = hyper.L_max, K = hyper.K_max;
  const int E = ds.num_events();
  ConceptModel& m = st.model;

  std::vector<double> n_c(L, 0.0);
  std::vector<std::vector<double>> mem(L, std::vector<double>(K, 0.0));
  std::vector<std::vector<double>> wc(L, std::vector<double>(m.V(), 0.0));
  std::vector<std::vector<double>> fc(L, std::vector<double>(m.F(), 0.0));
  std::vector<std::vector<Eigen::Vector2d>> pts(K);
  for (int e = 0; e < E; ++e) {
    const int c = st.assign.c[e], i = st.assign.i[e];
    n_c[c] += 1.0;
    mem[c][i] += 1.0;
    for (int w : ds.events[e].words) wc[c][w] += 1.0;
    for (int j = 0; j < m.F(); ++j) fc[c][j] += ds.events[e].feature[j];
    pts[i].push_back(st.poses[e]);
  }

  {
    std::vector<double> a(L);
    for (int l = 0; l < L; ++l) a[l] = hyper.alpha / L + n_c[l];
    m.pi = rng.dirichlet(a);
  }
  for (int l = 0; l < L; ++l) {
    std::vector<double> a(K);
    for (int k = 0; k < K; ++k) a[k] = hyper.gamma / K + mem[l][k];
    m.phi[l] = rng.dirichlet(a);
    std::vector<double> at(m.F());
    for (int j = 0; j < m.F(); ++j) at[j] = hyper.chi + fc[l][j];
    m.theta[l] = rng.dirichlet(at);
    std::vector<double> aw(m.V());
    for (int v = 0; v < m.V(); ++v) aw[v] = hyper.beta + wc[l][v];
    m.W[l] = rng.dirichlet(aw);
  }
  m.psi = sample_psi(st.assign.i, K, hyper, reverse_replay, rng);
  for (int k = 0; k < K; ++k) {
    const NiwParams post = niw_posterior(pts[k], hyper);
    sample_niw(post, m.map_width, m.map_height, rng, m.mu[k], m.sigma[k]);
  }
}

inline void sample_concepts(const TeachingDataset& ds, SweepState& st,
                            Rng& rng) {
  const ConceptModel& m = st.model;
  const int L = m.L();
  for (int e = 0; e < ds.num_events(); ++e) {
    const int i = st.assign.i[e];
    double phi_denom = 0.0;
    for (int l = 0; l < L; ++l) phi_denom += m.phi[l][i];
    std::vector<double> lw(L);
    for (int l = 0; l < L; ++l) {
      double v = std::log(m.pi[l]);
      v += word_likelihood(ds.events[e].words, l, m);
      for (int j = 0; j < m.F(); ++j)
        if (ds.events[e].feature[j] > 0)
          v += ds.events[e].feature[j] * std::log(m.theta[l][j]);
      v += std::log(m.phi[l][i]) - std::log(phi_denom);
      lw[l] = v;
    }
    st.assign.c[e] = rng.categorical_log(lw);
  }
}

}  // namespace detail

inline LearnResult gibbs_fit(const TeachingDataset& ds,
                             const OccupancyGrid& grid,
                             const Hyperparameters& hyper,
                             const GibbsConfig& config) {
  hyper.validate();
  config.validate();
  ds.validate(&grid);
  if (ds.num_events() == 0) throw UserError("gibbs_fit: dataset has no events");

  Rng rng(config.seed);
  const int E = ds.num_events();
  const int L = hyper.L_max, K = hyper.K_max;

  detail::SweepState st;
  st.poses.reserve(E);
  for (int e = 0; e < E; ++e) st.poses.push_back(cell_center(ds.event_pose(e)));

  // Model shell: vocabularies and map geometry; parameters drawn below.
  st.model.vocab = ds.vocab;
  for (int j = 0; j < ds.feature_dim; ++j)
    st.model.feature_vocab.push_back("f" + std::to_string(j));
  st.model.cell_resolution = grid.resolution();
  st.model.map_width = grid.width();
  st.model.map_height = grid.height();
  st.model.pi.assign(L, 0.0);
  st.model.phi.assign(L, std::vector<double>(K, 0.0));
  st.model.theta.assign(L, std::vector<double>(ds.feature_dim, 0.0));
  st.model.W.assign(L, std::vector<double>(ds.vocab.size(), 0.0));
  st.model.psi.assign(K, std::vector<double>(K, 0.0));
  st.model.mu.assign(K, Eigen::Vector2d::Zero());
  st.model.sigma.assign(K, Eigen::Matrix2d::Identity());

  st.assign.c.resize(E);
  st.assign.i.resize(E);
  for (int e = 0; e < E; ++e) st.assign.c[e] = rng.uniform_int(L);
  if (config.init == GibbsConfig::Init::kKmeans && E >= K) {
    st.assign.i = detail::kmeans_labels(st.poses, K, rng);
  } else {
    for (int e = 0; e < E; ++e) st.assign.i[e] = rng.uniform_int(K);
  }

  detail::sample_parameters(ds, hyper, st, config.reverse_replay, rng);

  LearnResult result;
  result.log_joint_trace.reserve(config.iterations);
  for (int it = 0; it < config.iterations; ++it) {
    detail::sample_concepts(ds, st, rng);
    st.assign.i = ffbs_sample_positions(st.poses, st.assign.c, st.model, rng);
    detail::sample_parameters(ds, hyper, st, config.reverse_replay, rng);
    const double lj = log_joint(ds, st.model, st.assign, hyper);
    result.log_joint_trace.push_back(lj);
    if (config.validate_each_sweep) st.model.validate();
    if (it >= config.burn_in && lj > result.best_log_joint) {
      result.best_log_joint = lj;
      result.best_iteration = it;
      result.best_model = st.model;
      result.best_assignment = st.assign;
    }
  }
  result.model = st.model;
  result.assignment = st.assign;
  return result;
}

}  // namespace topoplan
