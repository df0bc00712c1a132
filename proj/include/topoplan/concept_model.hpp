#pragma once

// Global parameters of the place-concept generative model, teaching datasets,
// and the likelihood terms shared by the learner and the planners.

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "topoplan/errors.hpp"
#include "topoplan/grid_map.hpp"

namespace topoplan {

// ---------------------------------------------------------------------------
// Hyperparameters
// ---------------------------------------------------------------------------

struct Hyperparameters {
  double alpha = 0.5;   // DP concentration for pi
  double gamma = 0.05;  // DP concentration for phi rows
  double beta = 0.1;    // Dirichlet mass per word bin for W rows
  double chi = 1.0;     // Dirichlet mass per feature bin for theta rows
  double omega = 1.0;   // DP concentration for psi rows
  Eigen::Vector2d m0 = Eigen::Vector2d::Zero();
  double kappa0 = 0.001;
  Eigen::Matrix2d V0 = 2.0 * Eigen::Matrix2d::Identity();
  double nu0 = 3.0;
  int L_max = 11;  // weak-limit truncation, concepts
  int K_max = 11;  // weak-limit truncation, position distributions

  void validate() const {
    if (alpha <= 0 || gamma <= 0 || beta <= 0 || chi <= 0 || omega <= 0)
      throw InvariantError("Hyperparameters: concentrations must be > 0");
    if (kappa0 <= 0) throw InvariantError("Hyperparameters: kappa0 must be > 0");
    if (nu0 <= 1.0) throw InvariantError("Hyperparameters: nu0 must exceed 1");
    Eigen::LLT<Eigen::Matrix2d> llt(V0);
    if (llt.info() != Eigen::Success)
      throw InvariantError("Hyperparameters: V0 must be SPD");
    if (L_max < 1 || K_max < 1)
      throw InvariantError("Hyperparameters: truncation levels must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

class Vocab {
 public:
  int intern(const std::string& word) {
    auto it = index_.find(word);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(words_.size());
    index_.emplace(word, id);
    words_.push_back(word);
    return id;
  }

  std::optional<int> id(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& word(int id) const {
    if (id < 0 || id >= static_cast<int>(words_.size()))
      throw VocabError("word id " + std::to_string(id) + " out of range");
    return words_[id];
  }

  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.words_ == b.words_;
  }

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

namespace detail {

inline double log_sum_exp(const std::vector<double>& v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

inline void check_simplex_row(const std::vector<double>& row,
                              const std::string& what) {
  double sum = 0.0;
  for (double v : row) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw InvariantError(what + ": entry out of [0,1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw InvariantError(what + ": row sums to " + std::to_string(sum) +
                         ", expected 1");
}

}  // namespace detail

// Cached bivariate Gaussian for repeated log-density evaluation.
struct Gaussian2 {
  Eigen::Vector2d mu;
  Eigen::Matrix2d inv;
  double log_norm;  // -log(2*pi) - 0.5*log|Sigma|

  static Gaussian2 from(const Eigen::Vector2d& mu,
                        const Eigen::Matrix2d& sigma) {
    Eigen::LLT<Eigen::Matrix2d> llt(sigma);
    if (llt.info() != Eigen::Success)
      throw InvariantError("Gaussian2: covariance not SPD");
    const double logdet =
        2.0 * std::log(llt.matrixL()(0, 0)) + 2.0 * std::log(llt.matrixL()(1, 1));
    return {mu, sigma.inverse(),
            -std::log(2.0 * M_PI) - 0.5 * logdet};
  }

  double logpdf(const Eigen::Vector2d& x) const {
    const Eigen::Vector2d d = x - mu;
    return log_norm - 0.5 * d.dot(inv * d);
  }
};

struct ConceptModel {
  std::vector<double> pi;                 // L
  std::vector<std::vector<double>> phi;   // L x K
  std::vector<std::vector<double>> theta; // L x F
  std::vector<std::vector<double>> W;     // L x V
  std::vector<std::vector<double>> psi;   // K x K
  std::vector<Eigen::Vector2d> mu;        // K, cell-center units
  std::vector<Eigen::Matrix2d> sigma;     // K
  Vocab vocab;
  std::vector<std::string> feature_vocab;
  double cell_resolution = 0.05;  // meters per cell, recorded for export
  int map_width = 0;              // cell-unit bounds for mu (0 = unchecked)
  int map_height = 0;

  int L() const { return static_cast<int>(pi.size()); }
  int K() const { return static_cast<int>(psi.size()); }
  int F() const { return static_cast<int>(feature_vocab.size()); }
  int V() const { return vocab.size(); }

  void validate() const {
    if (pi.empty() || psi.empty())
      throw InvariantError("ConceptModel: empty parameter arrays");
    detail::check_simplex_row(pi, "pi");
    if (static_cast<int>(phi.size()) != L() ||
        static_cast<int>(theta.size()) != L() ||
        static_cast<int>(W.size()) != L())
      throw InvariantError("ConceptModel: concept-row count mismatch");
    for (int l = 0; l < L(); ++l) {
      if (static_cast<int>(phi[l].size()) != K())
        throw InvariantError("ConceptModel: phi row size mismatch");
      detail::check_simplex_row(phi[l], "phi[" + std::to_string(l) + "]");
      detail::check_simplex_row(theta[l], "theta[" + std::to_string(l) + "]");
      detail::check_simplex_row(W[l], "W[" + std::to_string(l) + "]");
      if (static_cast<int>(theta[l].size()) != F())
        throw InvariantError("ConceptModel: theta row size mismatch");
      if (static_cast<int>(W[l].size()) != V())
        throw InvariantError("ConceptModel: W row size mismatch");
    }
    if (static_cast<int>(mu.size()) != K() ||
        static_cast<int>(sigma.size()) != K())
      throw InvariantError("ConceptModel: position-parameter count mismatch");
    for (int k = 0; k < K(); ++k) {
      detail::check_simplex_row(psi[k], "psi[" + std::to_string(k) + "]");
      if (static_cast<int>(psi[k].size()) != K())
        throw InvariantError("ConceptModel: psi row size mismatch");
      if (std::abs(sigma[k](0, 1) - sigma[k](1, 0)) > 1e-9)
        throw InvariantError("ConceptModel: sigma not symmetric");
      Eigen::LLT<Eigen::Matrix2d> llt(sigma[k]);
      if (llt.info() != Eigen::Success)
        throw InvariantError("ConceptModel: sigma[" + std::to_string(k) +
                             "] not positive-definite");
      if (map_width > 0 && map_height > 0) {
        if (mu[k].x() < 0.0 || mu[k].x() > map_width || mu[k].y() < 0.0 ||
            mu[k].y() > map_height)
          throw InvariantError("ConceptModel: mu[" + std::to_string(k) +
                               "] outside map bounds");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Teaching data
// ---------------------------------------------------------------------------

struct TeachingEvent {
  int t_end = 0;                  // trajectory index of the event pose
  std::vector<int> words;         // word ids into the dataset vocab
  std::vector<int> feature;       // histogram over the feature vocabulary
  bool is_event = true;           // optimality flag, always observed as 1
};

struct TeachingDataset {
  std::vector<GridPose> trajectory;   // x_0..x_T
  std::vector<TeachingEvent> events;  // E entries, t_end strictly increasing
  Vocab vocab;
  int feature_dim = 0;
  std::vector<int> truth_c;  // optional per-event ground truth (empty = none)
  std::vector<int> truth_i;

  int num_events() const { return static_cast<int>(events.size()); }
  int horizon() const { return static_cast<int>(trajectory.size()) - 1; }

  // Implied durations D_e = t'_e - t'_{e-1} with t'_0 = 0.
  std::vector<int> durations() const {
    std::vector<int> d;
    int prev = 0;
    for (const auto& ev : events) {
      d.push_back(ev.t_end - prev);
      prev = ev.t_end;
    }
    return d;
  }

  GridPose event_pose(int e) const { return trajectory[events[e].t_end]; }

  void validate(const OccupancyGrid* grid = nullptr) const {
    if (trajectory.empty())
      throw InvariantError("TeachingDataset: empty trajectory");
    if (events.empty()) throw InvariantError("TeachingDataset: no events");
    int prev = 0;
    for (const auto& ev : events) {
      if (ev.t_end <= prev)
        throw InvariantError("TeachingDataset: event times not increasing");
      if (ev.t_end < 0 || ev.t_end > horizon())
        throw InvariantError("TeachingDataset: event time out of range");
      if (ev.words.empty())
        throw InvariantError("TeachingDataset: taught event without words");
      if (static_cast<int>(ev.feature.size()) != feature_dim)
        throw InvariantError("TeachingDataset: feature histogram size mismatch");
      prev = ev.t_end;
    }
    if (events.back().t_end != horizon())
      throw InvariantError(
          "TeachingDataset: durations do not sum to the horizon");
    if (!truth_c.empty() && static_cast<int>(truth_c.size()) != num_events())
      throw InvariantError("TeachingDataset: truth_c length mismatch");
    if (!truth_i.empty() && static_cast<int>(truth_i.size()) != num_events())
      throw InvariantError("TeachingDataset: truth_i length mismatch");
    if (grid != nullptr) {
      for (const auto& p : trajectory) {
        if (!grid->in_bounds(p))
          throw InvariantError("TeachingDataset: pose outside map");
        if (grid->at(p) != CellState::Free)
          throw InvariantError("TeachingDataset: pose on non-free cell");
      }
    }
  }
};

struct LatentAssignment {
  std::vector<int> c;  // concept index per event
  std::vector<int> i;  // position-distribution index per event
};

// ---------------------------------------------------------------------------
// Likelihood terms
// ---------------------------------------------------------------------------

// Unigram-rescaled word factor: sum_b [log W_c(s_b) - log sum_c' W_c'(s_b)].
// The language-model factor is constant across concepts and dropped.
inline double word_likelihood(std::span<const int> words, int c,
                              const ConceptModel& model) {
  if (c < 0 || c >= model.L())
    throw InvariantError("word_likelihood: concept index out of range");
  double total = 0.0;
  for (int w : words) {
    if (w < 0 || w >= model.V())
      throw VocabError("word id " + std::to_string(w) +
                       " not in the model vocabulary");
    double denom = 0.0;
    for (int l = 0; l < model.L(); ++l) denom += model.W[l][w];
    total += std::log(model.W[c][w]) - std::log(denom);
  }
  return total;
}

// Unigram-rescaled place transition:
// log psi_{i_prev}(i_cur) + log phi_c(i_cur) - log sum_c' phi_c'(i_cur).
inline double place_transition_score(int i_prev, int i_cur, int c,
                                     const ConceptModel& model) {
  if (i_prev < 0 || i_prev >= model.K() || i_cur < 0 || i_cur >= model.K() ||
      c < 0 || c >= model.L())
    throw InvariantError("place_transition_score: index out of range");
  double denom = 0.0;
  for (int l = 0; l < model.L(); ++l) denom += model.phi[l][i_cur];
  return std::log(model.psi[i_prev][i_cur]) +
         std::log(model.phi[c][i_cur]) - std::log(denom);
}

// Gaussian log-density of the optimality emission at the cell center of x.
inline double position_emission(const GridPose& x, int k,
                                const ConceptModel& model) {
  if (k < 0 || k >= model.K())
    throw InvariantError("position_emission: index out of range");
  return Gaussian2::from(model.mu[k], model.sigma[k]).logpdf(cell_center(x));
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr int kModelSchemaVersion = 1;
inline constexpr int kDatasetSchemaVersion = 1;

inline nlohmann::json load_json_document(const std::string& path,
                                         const std::string& format,
                                         int version) {
  std::ifstream in(path);
  if (!in) throw LoadError(path + ": unreadable file");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(path + ": " + e.what());
  }
  if (!j.contains("format") || j["format"] != format)
    throw LoadError(path + ": not a " + format + " document");
  if (!j.contains("version") || j["version"] != version)
    throw LoadError(path + ": unsupported " + format + " schema version");
  return j;
}

inline nlohmann::json matrix_to_json(const Eigen::Matrix2d& m) {
  return {m(0, 0), m(0, 1), m(1, 0), m(1, 1)};
}

inline Eigen::Matrix2d matrix_from_json(const nlohmann::json& j) {
  Eigen::Matrix2d m;
  m << j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
      j.at(3).get<double>();
  return m;
}

}  // namespace detail

inline void save_model(const ConceptModel& model, const std::string& path) {
  model.validate();
  nlohmann::json j;
  j["format"] = "topoplan-model";
  j["version"] = detail::kModelSchemaVersion;
  j["cell_resolution"] = model.cell_resolution;
  j["map_width"] = model.map_width;
  j["map_height"] = model.map_height;
  j["pi"] = model.pi;
  j["phi"] = model.phi;
  j["theta"] = model.theta;
  j["W"] = model.W;
  j["psi"] = model.psi;
  auto mus = nlohmann::json::array();
  auto sigmas = nlohmann::json::array();
  for (int k = 0; k < model.K(); ++k) {
    mus.push_back({model.mu[k].x(), model.mu[k].y()});
    sigmas.push_back(detail::matrix_to_json(model.sigma[k]));
  }
  j["mu"] = mus;
  j["sigma"] = sigmas;
  j["vocab"] = model.vocab.words();
  j["feature_vocab"] = model.feature_vocab;
  std::ofstream out(path);
  if (!out) throw LoadError(path + ": cannot open for writing");
  out << j.dump(1) << "\n";
}

inline ConceptModel load_model(const std::string& path) {
  const auto j = detail::load_json_document(path, "topoplan-model",
                                            detail::kModelSchemaVersion);
  ConceptModel m;
  try {
    m.cell_resolution = j.at("cell_resolution").get<double>();
    m.map_width = j.at("map_width").get<int>();
    m.map_height = j.at("map_height").get<int>();
    m.pi = j.at("pi").get<std::vector<double>>();
    m.phi = j.at("phi").get<std::vector<std::vector<double>>>();
    m.theta = j.at("theta").get<std::vector<std::vector<double>>>();
    m.W = j.at("W").get<std::vector<std::vector<double>>>();
    m.psi = j.at("psi").get<std::vector<std::vector<double>>>();
    for (const auto& v : j.at("mu"))
      m.mu.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
    for (const auto& v : j.at("sigma"))
      m.sigma.push_back(detail::matrix_from_json(v));
    for (const auto& w : j.at("vocab"))
      m.vocab.intern(w.get<std::string>());
    m.feature_vocab = j.at("feature_vocab").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path + ": " + e.what());
  }
  m.validate();
  return m;
}

inline void save_dataset(const TeachingDataset& ds, const std::string& path) {
  nlohmann::json j;
  j["format"] = "topoplan-dataset";
  j["version"] = detail::kDatasetSchemaVersion;
  j["feature_dim"] = ds.feature_dim;
  auto traj = nlohmann::json::array();
  for (const auto& p : ds.trajectory) traj.push_back({p.row, p.col});
  j["trajectory"] = traj;
  auto events = nlohmann::json::array();
  for (const auto& ev : ds.events) {
    nlohmann::json je;
    je["t_end"] = ev.t_end;
    auto words = nlohmann::json::array();
    for (int w : ev.words) words.push_back(ds.vocab.word(w));
    je["words"] = words;
    je["feature"] = ev.feature;
    events.push_back(je);
  }
  j["events"] = events;
  if (!ds.truth_c.empty()) j["truth_c"] = ds.truth_c;
  if (!ds.truth_i.empty()) j["truth_i"] = ds.truth_i;
  std::ofstream out(path);
  if (!out) throw LoadError(path + ": cannot open for writing");
  out << j.dump(1) << "\n";
}

inline TeachingDataset load_dataset(const std::string& path) {
  const auto j = detail::load_json_document(path, "topoplan-dataset",
                                            detail::kDatasetSchemaVersion);
  TeachingDataset ds;
  try {
    ds.feature_dim = j.at("feature_dim").get<int>();
    for (const auto& p : j.at("trajectory"))
      ds.trajectory.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    for (const auto& je : j.at("events")) {
      TeachingEvent ev;
      ev.t_end = je.at("t_end").get<int>();
      for (const auto& w : je.at("words"))
        ev.words.push_back(ds.vocab.intern(w.get<std::string>()));
      ev.feature = je.at("feature").get<std::vector<int>>();
      ds.events.push_back(std::move(ev));
    }
    if (j.contains("truth_c")) ds.truth_c = j["truth_c"].get<std::vector<int>>();
    if (j.contains("truth_i")) ds.truth_i = j["truth_i"].get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path + ": " + e.what());
  }
  ds.validate();
  return ds;
}

}  // namespace topoplan
