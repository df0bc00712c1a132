#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <numeric>

#include "topoplan/learner.hpp"

#include "helpers.hpp"

using namespace topoplan;
using Catch::Matchers::WithinAbs;

namespace {

// Appends a Manhattan path from the back of `traj` to `to` (column first).
void walk_to(std::vector<GridPose>& traj, GridPose to) {
  GridPose p = traj.back();
  while (p.col != to.col) {
    p.col += to.col > p.col ? 1 : -1;
    traj.push_back(p);
  }
  while (p.row != to.row) {
    p.row += to.row > p.row ? 1 : -1;
    traj.push_back(p);
  }
}

// Two well-separated clusters with disjoint words, alternating visits.
TeachingDataset two_room_dataset() {
  TeachingDataset ds;
  ds.feature_dim = 4;
  const int w_kitchen = ds.vocab.intern("kitchen");
  const int w_bedroom = ds.vocab.intern("bedroom");
  ds.trajectory = {GridPose{2, 2}};
  const std::vector<GridPose> kitchen = {{2, 3}, {3, 2}, {2, 1}, {1, 2}};
  const std::vector<GridPose> bedroom = {{9, 9}, {9, 8}, {8, 9}, {10, 9}};
  for (int n = 0; n < 4; ++n) {
    walk_to(ds.trajectory, kitchen[n]);
    TeachingEvent ek;
    ek.t_end = static_cast<int>(ds.trajectory.size()) - 1;
    ek.words = {w_kitchen};
    ek.feature = {5, 1, 0, 0};
    ds.events.push_back(ek);
    ds.truth_i.push_back(0);
    ds.truth_c.push_back(0);
    walk_to(ds.trajectory, bedroom[n]);
    TeachingEvent eb;
    eb.t_end = static_cast<int>(ds.trajectory.size()) - 1;
    eb.words = {w_bedroom};
    eb.feature = {0, 0, 5, 1};
    ds.events.push_back(eb);
    ds.truth_i.push_back(1);
    ds.truth_c.push_back(1);
  }
  return ds;
}

ConceptModel tiny_model() {
  ConceptModel m;
  m.pi = {0.6, 0.4};
  m.phi = {{0.7, 0.2, 0.1}, {0.2, 0.3, 0.5}};
  m.theta = {{0.5, 0.5}, {0.9, 0.1}};
  m.W = {{0.8, 0.2}, {0.3, 0.7}};
  m.psi = {{0.5, 0.25, 0.25}, {0.1, 0.6, 0.3}, {0.3, 0.3, 0.4}};
  m.mu = {{2.5, 2.5}, {6.5, 2.5}, {4.5, 6.5}};
  for (int k = 0; k < 3; ++k)
    m.sigma.push_back(2.0 * Eigen::Matrix2d::Identity());
  m.vocab.intern("a");
  m.vocab.intern("b");
  m.feature_vocab = {"f0", "f1"};
  return m;
}

// Exact conditional over position sequences by exhaustive enumeration,
// recomputing every chain factor from first principles.
std::map<std::vector<int>, double> exact_position_conditional(
    const std::vector<Eigen::Vector2d>& poses, const std::vector<int>& concepts,
    const ConceptModel& m) {
  const int E = static_cast<int>(poses.size());
  const int K = m.K();
  std::map<std::vector<int>, double> probs;
  std::vector<int> seq(E, 0);
  double total = 0.0;
  for (;;) {
    double lp = 0.0;
    for (int e = 0; e < E; ++e) {
      const int k = seq[e];
      double denom = 0.0;
      for (int l = 0; l < m.L(); ++l) denom += m.phi[l][k];
      lp += std::log(m.phi[concepts[e]][k] / denom);
      if (e > 0) lp += std::log(m.psi[seq[e - 1]][k]);
      const Eigen::Vector2d d = poses[e] - m.mu[k];
      const double det = m.sigma[k].determinant();
      lp += -std::log(2.0 * M_PI) - 0.5 * std::log(det) -
            0.5 * d.dot(m.sigma[k].inverse() * d);
    }
    const double p = std::exp(lp);
    probs[seq] = p;
    total += p;
    int pos = E - 1;
    while (pos >= 0 && ++seq[pos] == K) seq[pos--] = 0;
    if (pos < 0) break;
  }
  for (auto& [_, v] : probs) v /= total;
  return probs;
}

}  // namespace

TEST_CASE("transition counts with and without reverse replay") {
  SECTION("single event has no transitions") {
    const auto c = transition_counts({1}, 3, false);
    for (const auto& row : c)
      for (double v : row) CHECK(v == 0.0);
  }
  SECTION("alternating sequence, forward only") {
    const auto c = transition_counts({0, 1, 0, 1}, 2, false);
    CHECK(c[0][1] == 2.0);
    CHECK(c[1][0] == 1.0);
    CHECK(c[0][0] == 0.0);
  }
  SECTION("reverse replay adds the reversed pairs") {
    const auto c = transition_counts({0, 1, 0, 1}, 2, true);
    CHECK(c[0][1] == 3.0);
    CHECK(c[1][0] == 3.0);
  }
  SECTION("with replay, counts are invariant to reversing the events") {
    const std::vector<int> seq = {0, 2, 1, 1, 0, 2};
    const std::vector<int> rev(seq.rbegin(), seq.rend());
    CHECK(transition_counts(seq, 3, true) == transition_counts(rev, 3, true));
  }
}

TEST_CASE("sample_psi draws valid rows around the counted transitions") {
  Rng rng(5);
  Hyperparameters hyper;
  const auto psi = sample_psi({0, 1, 0, 1}, 2, hyper, false, rng);
  REQUIRE(psi.size() == 2);
  for (const auto& row : psi) {
    double s = 0.0;
    for (double v : row) {
      CHECK(v > 0.0);
      s += v;
    }
    CHECK_THAT(s, WithinAbs(1.0, 1e-9));
  }
  // Row 0 saw two 0->1 transitions and none to 0, so mass concentrates there.
  CHECK(psi[0][1] > psi[0][0]);
}

TEST_CASE("niw posterior for a single observation") {
  Hyperparameters hyper;
  const Eigen::Vector2d x(4.5, 7.5);
  const auto post = niw_posterior({x}, hyper);
  const Eigen::Vector2d expect = (hyper.kappa0 * hyper.m0 + x) /
                                 (hyper.kappa0 + 1.0);
  CHECK_THAT(post.m.x(), WithinAbs(expect.x(), 1e-12));
  CHECK_THAT(post.m.y(), WithinAbs(expect.y(), 1e-12));
  CHECK_THAT(post.kappa, WithinAbs(hyper.kappa0 + 1.0, 1e-12));
  CHECK_THAT(post.nu, WithinAbs(hyper.nu0 + 1.0, 1e-12));
}

TEST_CASE("gibbs_fit on a single forced event") {
  const auto grid = OccupancyGrid::filled(12, 12, 0.05, {}, CellState::Free);
  TeachingDataset ds;
  ds.feature_dim = 2;
  ds.trajectory = {{0, 0}, {4, 7}};
  TeachingEvent ev;
  ev.t_end = 1;
  ev.words = {ds.vocab.intern("spot")};
  ev.feature = {1, 0};
  ds.events = {ev};
  Hyperparameters hyper;
  hyper.L_max = 1;
  hyper.K_max = 1;
  GibbsConfig config;
  config.iterations = 10;
  config.burn_in = 2;
  const auto result = gibbs_fit(ds, grid, hyper, config);
  CHECK(result.assignment.c == std::vector<int>{0});
  CHECK(result.assignment.i == std::vector<int>{0});
  CHECK(result.log_joint_trace.size() == 10);

  // Sampled means scatter around the closed-form NIW posterior mean.
  Eigen::Vector2d avg = Eigen::Vector2d::Zero();
  const int trials = 40;
  for (int s = 0; s < trials; ++s) {
    GibbsConfig c2 = config;
    c2.seed = 100 + s;
    avg += gibbs_fit(ds, grid, hyper, c2).model.mu[0];
  }
  avg /= trials;
  const Eigen::Vector2d expect =
      (hyper.kappa0 * hyper.m0 + cell_center(GridPose{4, 7})) /
      (hyper.kappa0 + 1.0);
  CHECK_THAT(avg.x(), WithinAbs(expect.x(), 1.0));
  CHECK_THAT(avg.y(), WithinAbs(expect.y(), 1.0));
}

TEST_CASE("ffbs matches exhaustive enumeration") {
  const auto m = tiny_model();
  const std::vector<Eigen::Vector2d> poses = {{2.5, 3.5}, {5.5, 3.5}, {4.5, 5.5}};
  const std::vector<int> concepts = {0, 1, 0};
  const auto exact = exact_position_conditional(poses, concepts, m);

  Rng rng(42);
  std::map<std::vector<int>, int> hist;
  const int n = 100000;
  for (int t = 0; t < n; ++t)
    ++hist[ffbs_sample_positions(poses, concepts, m, rng)];
  double tv = 0.0;
  for (const auto& [seq, p] : exact) {
    const auto it = hist.find(seq);
    const double q = it == hist.end() ? 0.0 : double(it->second) / n;
    tv += std::abs(p - q);
  }
  tv *= 0.5;
  CHECK(tv <= 0.02);
}

TEST_CASE("log_joint is pure and rejects broken models") {
  const auto ds = two_room_dataset();
  Hyperparameters hyper;
  hyper.L_max = 2;
  hyper.K_max = 2;
  ConceptModel m;
  m.pi = {0.5, 0.5};
  m.phi = {{0.9, 0.1}, {0.1, 0.9}};
  m.theta = {{0.7, 0.1, 0.1, 0.1}, {0.1, 0.1, 0.7, 0.1}};
  m.W = {{0.9, 0.1}, {0.1, 0.9}};
  m.psi = {{0.4, 0.6}, {0.5, 0.5}};
  m.mu = {{2.5, 2.5}, {9.5, 9.5}};
  m.sigma = {Eigen::Matrix2d::Identity(), 2.0 * Eigen::Matrix2d::Identity()};
  m.vocab = ds.vocab;
  m.feature_vocab = {"f0", "f1", "f2", "f3"};
  LatentAssignment assign;
  assign.c = ds.truth_c;
  assign.i = ds.truth_i;

  const double a = log_joint(ds, m, assign, hyper);
  const double b = log_joint(ds, m, assign, hyper);
  CHECK(a == b);
  CHECK(std::isfinite(a));

  auto broken = m;
  broken.phi[0] = {0.9, 0.2};
  CHECK_THROWS_AS(log_joint(ds, broken, assign, hyper), InvariantError);
}

TEST_CASE("log_joint equals a hand-assembled sum of factors on a tiny case") {
  // Two events, two concepts, two positions; every factor written out here
  // independently of the library implementation.
  TeachingDataset ds;
  ds.feature_dim = 2;
  ds.trajectory = {{0, 0}, {1, 0}, {1, 1}};
  TeachingEvent e1, e2;
  e1.t_end = 1;
  e1.words = {ds.vocab.intern("x")};
  e1.feature = {2, 1};
  e2.t_end = 2;
  e2.words = {ds.vocab.intern("y")};
  e2.feature = {0, 3};
  ds.events = {e1, e2};

  ConceptModel m;
  m.pi = {0.3, 0.7};
  m.phi = {{0.6, 0.4}, {0.2, 0.8}};
  m.theta = {{0.5, 0.5}, {0.25, 0.75}};
  m.W = {{0.9, 0.1}, {0.4, 0.6}};
  m.psi = {{0.5, 0.5}, {0.7, 0.3}};
  m.mu = {{0.5, 1.5}, {1.5, 1.5}};
  m.sigma = {Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity()};
  m.vocab = ds.vocab;
  m.feature_vocab = {"f0", "f1"};

  Hyperparameters h;
  h.L_max = 2;
  h.K_max = 2;
  LatentAssignment assign;
  assign.c = {0, 1};
  assign.i = {0, 1};

  auto dir2 = [](double x0, double x1, double a) {
    return std::lgamma(2 * a) - 2 * std::lgamma(a) + (a - 1) * std::log(x0) +
           (a - 1) * std::log(x1);
  };
  auto gauss = [](Eigen::Vector2d x, Eigen::Vector2d mu, double var) {
    return -std::log(2 * M_PI * var) - 0.5 * (x - mu).squaredNorm() / var;
  };
  // Inverse-Wishart density of the identity under (V0 = 2I, nu0 = 3).
  auto iw_identity = [&]() {
    const double log_det_v = std::log(4.0);
    const double gamma2 = 0.5 * std::log(M_PI) + std::lgamma(1.5) +
                          std::lgamma(1.0);
    return 0.5 * 3 * log_det_v - 3.0 * std::log(2.0) - gamma2 -
           0.5 * (3 + 2 + 1) * 0.0 - 0.5 * 4.0;
  };

  double expect = 0.0;
  expect += dir2(m.pi[0], m.pi[1], h.alpha / 2);
  for (int l = 0; l < 2; ++l) {
    expect += dir2(m.phi[l][0], m.phi[l][1], h.gamma / 2);
    expect += dir2(m.theta[l][0], m.theta[l][1], h.chi);
    expect += dir2(m.W[l][0], m.W[l][1], h.beta);
  }
  for (int k = 0; k < 2; ++k) {
    expect += dir2(m.psi[k][0], m.psi[k][1], h.omega / 2);
    expect += iw_identity();
    expect += gauss(m.mu[k], h.m0, 1.0 / h.kappa0);
  }
  // Event 1: concept 0, position 0, pose (row 1, col 0) -> center (0.5, 1.5).
  expect += std::log(m.pi[0]);
  expect += std::log(m.W[0][0] / (m.W[0][0] + m.W[1][0]));
  expect += 2 * std::log(m.theta[0][0]) + 1 * std::log(m.theta[0][1]);
  expect += std::log(m.phi[0][0] / (m.phi[0][0] + m.phi[1][0]));
  expect += gauss({0.5, 1.5}, m.mu[0], 1.0);
  // Event 2: concept 1, position 1, transition 0 -> 1.
  expect += std::log(m.pi[1]);
  expect += std::log(m.W[1][1] / (m.W[0][1] + m.W[1][1]));
  expect += 3 * std::log(m.theta[1][1]);
  expect += std::log(m.psi[0][1]) +
            std::log(m.phi[1][1] / (m.phi[0][1] + m.phi[1][1]));
  expect += gauss({1.5, 1.5}, m.mu[1], 1.0);

  CHECK_THAT(log_joint(ds, m, assign, h), WithinAbs(expect, 1e-9));
}

TEST_CASE("clustering metrics") {
  SECTION("identical labelings") {
    const std::vector<int> a = {0, 1, 2, 1, 0};
    CHECK_THAT(nmi(a, a), WithinAbs(1.0, 1e-12));
    CHECK_THAT(ari(a, a), WithinAbs(1.0, 1e-12));
  }
  SECTION("single cluster carries no information") {
    CHECK_THAT(nmi({0, 0, 0, 0}, {0, 1, 0, 1}), WithinAbs(0.0, 1e-12));
  }
  SECTION("permutation invariance") {
    CHECK_THAT(nmi({0, 0, 1, 1}, {1, 1, 0, 0}), WithinAbs(1.0, 1e-12));
    CHECK_THAT(ari({0, 0, 1, 1}, {1, 1, 0, 0}), WithinAbs(1.0, 1e-12));
  }
  SECTION("length mismatch raises") {
    CHECK_THROWS_AS(nmi({0, 1}, {0, 1, 2}), UserError);
  }
}

TEST_CASE("gibbs recovers two separated rooms") {
  const auto grid = OccupancyGrid::filled(14, 14, 0.05, {}, CellState::Free);
  const auto ds = two_room_dataset();
  Hyperparameters hyper;
  hyper.L_max = 3;
  hyper.K_max = 3;
  GibbsConfig config;
  config.iterations = 120;
  config.burn_in = 60;
  config.seed = 9;
  config.validate_each_sweep = true;
  const auto result = gibbs_fit(ds, grid, hyper, config);
  CHECK(ari(result.assignment.i, ds.truth_i) >= 0.8);
  CHECK(nmi(result.assignment.i, ds.truth_i) >= 0.8);
  CHECK(result.best_iteration >= config.burn_in);
  CHECK(result.best_log_joint >= result.log_joint_trace.back() - 1e-9);
}

TEST_CASE("fixed seed fixes the whole result") {
  const auto grid = OccupancyGrid::filled(14, 14, 0.05, {}, CellState::Free);
  const auto ds = two_room_dataset();
  Hyperparameters hyper;
  hyper.L_max = 3;
  hyper.K_max = 3;
  GibbsConfig config;
  config.iterations = 40;
  config.burn_in = 10;
  config.seed = 77;
  const auto a = gibbs_fit(ds, grid, hyper, config);
  const auto b = gibbs_fit(ds, grid, hyper, config);
  CHECK(a.log_joint_trace == b.log_joint_trace);
  CHECK(a.assignment.i == b.assignment.i);
  CHECK(a.model.pi == b.model.pi);
  CHECK(a.model.mu[0] == b.model.mu[0]);
  CHECK(a.model.psi == b.model.psi);
}
