#pragma once

// Univariate clustering of normalized grayscale values.
//
// All fits are deterministic in FitConfig::seed. Restart r draws from
// derive_seed(seed, r); the restart with the best objective wins, earliest
// first on ties. Components are sorted by center/mean after fitting so label
// 0 is always the darkest cluster.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "volseg/error.hpp"
#include "volseg/random.hpp"

namespace volseg {

struct FitConfig {
  std::size_t clusters = 2;
  std::uint64_t seed = 0;
  std::size_t max_iter = 300;
  double tol = 1e-6;
  std::size_t restarts = 10;
  std::size_t batch_size = 1024;  // mini-batch only
};

inline constexpr double kVarianceFloor = 1e-10;

struct KMeansModel {
  std::vector<double> centers;
  double inertia = 0.0;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  bool minibatch = false;
  /// Objective after each iteration of the winning restart.
  std::vector<double> trace;
  std::vector<std::string> warnings;

  std::size_t clusters() const noexcept { return centers.size(); }
};

struct GmmModel {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;
  double log_likelihood = 0.0;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  /// Log-likelihood after each EM iteration of the winning restart.
  std::vector<double> trace;
  std::vector<std::string> warnings;

  std::size_t clusters() const noexcept { return means.size(); }
};

using ClusterModel = std::variant<KMeansModel, GmmModel>;

inline std::size_t cluster_count(const ClusterModel& model) {
  return std::visit([](const auto& m) { return m.clusters(); }, model);
}

inline void validate(const FitConfig& cfg) {
  if (cfg.clusters < 1) throw Error(ErrorCode::InvalidK, "need at least one cluster");
  if (cfg.max_iter < 1) throw Error(ErrorCode::InvalidArgument, "max_iter must be >= 1");
  if (!(cfg.tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be > 0");
  if (cfg.restarts < 1) throw Error(ErrorCode::InvalidArgument, "restarts must be >= 1");
}

// ---------------------------------------------------------------------------
// Prediction

/// Index of the nearest center; ties go to the smallest index.
inline std::size_t nearest_center(std::span<const double> centers, double v) {
  std::size_t best = 0;
  double best_d = std::abs(v - centers[0]);
  for (std::size_t j = 1; j < centers.size(); ++j) {
    const double d = std::abs(v - centers[j]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

/// Per-component log(pi_j N(v | mu_j, var_j)) with the v-independent parts
/// precomputed.
class GmmScorer {
 public:
  explicit GmmScorer(const GmmModel& m) : means_(m.means) {
    const std::size_t k = m.clusters();
    offset_.resize(k);
    inv_two_var_.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
      offset_[j] = std::log(m.weights[j]) -
                   0.5 * std::log(2.0 * std::numbers::pi * m.variances[j]);
      inv_two_var_[j] = 0.5 / m.variances[j];
    }
  }

  std::size_t size() const noexcept { return means_.size(); }

  double log_joint(std::size_t j, double v) const {
    const double d = v - means_[j];
    return offset_[j] - d * d * inv_two_var_[j];
  }

  /// Component with the largest likelihood; ties go to the smallest index.
  std::size_t best(double v) const {
    std::size_t best = 0;
    double best_lp = log_joint(0, v);
    for (std::size_t j = 1; j < means_.size(); ++j) {
      const double lp = log_joint(j, v);
      if (lp > best_lp) {
        best_lp = lp;
        best = j;
      }
    }
    return best;
  }

 private:
  std::vector<double> means_;
  std::vector<double> offset_;
  std::vector<double> inv_two_var_;
};

/// Reusable per-voxel classifier for a fitted model.
class Predictor {
 public:
  explicit Predictor(const ClusterModel& model) {
    if (const auto* km = std::get_if<KMeansModel>(&model)) {
      centers_ = km->centers;
    } else {
      gmm_.emplace(std::get<GmmModel>(model));
    }
  }

  std::size_t operator()(double v) const {
    return gmm_ ? gmm_->best(v) : nearest_center(centers_, v);
  }

 private:
  std::vector<double> centers_;
  std::optional<GmmScorer> gmm_;
};

inline std::size_t predict(const KMeansModel& model, double v) {
  return nearest_center(model.centers, v);
}

inline std::size_t predict(const GmmModel& model, double v) {
  return GmmScorer(model).best(v);
}

inline std::size_t predict(const ClusterModel& model, double v) {
  return std::visit([v](const auto& m) { return predict(m, v); }, model);
}

/// Posterior component probabilities for one value (log-sum-exp guarded).
inline std::vector<double> gmm_responsibilities(const GmmModel& model, double v) {
  const GmmScorer scorer(model);
  std::vector<double> r(scorer.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < r.size(); ++j) {
    r[j] = scorer.log_joint(j, v);
    top = std::max(top, r[j]);
  }
  double sum = 0.0;
  for (double& x : r) sum += (x = std::exp(x - top));
  for (double& x : r) x /= sum;
  return r;
}

// ---------------------------------------------------------------------------
// K-Means

namespace detail {

inline bool all_identical(std::span<const double> data) {
  return std::adjacent_find(data.begin(), data.end(), std::not_equal_to<>()) == data.end();
}

/// k-means++ seeding: first center uniform, then proportional to squared
/// distance from the nearest chosen center.
inline std::vector<double> seed_plus_plus(std::span<const double> data, std::size_t k, Rng& rng) {
  std::vector<double> centers;
  centers.reserve(k);
  centers.push_back(data[rng.uniform_index(data.size())]);
  std::vector<double> dist(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double d = data[i] - centers[0];
    dist[i] = d * d;
  }
  while (centers.size() < k) {
    const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform_open() * total;
      double run = 0.0;
      pick = data.size() - 1;
      for (std::size_t i = 0; i < data.size(); ++i) {
        run += dist[i];
        if (run >= target && dist[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.uniform_index(data.size());
    }
    const double c = data[pick];
    centers.push_back(c);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double d = data[i] - c;
      dist[i] = std::min(dist[i], d * d);
    }
  }
  return centers;
}

inline double inertia_of(std::span<const double> data, std::span<const double> centers) {
  double sum = 0.0;
  for (double x : data) {
    const double d = x - centers[nearest_center(centers, x)];
    sum += d * d;
  }
  return sum;
}

inline KMeansModel lloyd_run(std::span<const double> data, const FitConfig& cfg, Rng& rng) {
  const std::size_t k = cfg.clusters;
  KMeansModel m;
  m.centers = seed_plus_plus(data, k, rng);
  std::vector<std::uint32_t> labels(data.size(), 0);
  std::vector<double> sums(k);
  std::vector<std::size_t> counts(k);
  double prev = std::numeric_limits<double>::infinity();

  for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
    bool changed = it == 1;
    double cost = 0.0;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto j = static_cast<std::uint32_t>(nearest_center(m.centers, data[i]));
      if (j != labels[i]) changed = true;
      labels[i] = j;
      const double d = data[i] - m.centers[j];
      cost += d * d;
      sums[j] += data[i];
      ++counts[j];
    }
    m.trace.push_back(cost);
    m.iterations = it;

    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] > 0) m.centers[j] = sums[j] / static_cast<double>(counts[j]);
    }
    // Empty clusters move to the point farthest from its own center.
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] > 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double d = std::abs(data[i] - m.centers[labels[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      m.centers[j] = data[far];
      changed = true;
    }

    if (!changed || cost == 0.0 || prev - cost <= cfg.tol * prev) break;
    prev = cost;
  }
  m.inertia = inertia_of(data, m.centers);
  m.trace.push_back(m.inertia);
  return m;
}

template <class Model>
void sort_centers(Model& m) {
  std::sort(m.centers.begin(), m.centers.end());
}

}  // namespace detail

inline KMeansModel kmeans_fit(std::span<const double> data, const FitConfig& cfg) {
  validate(cfg);
  if (data.size() < cfg.clusters) {
    throw Error(ErrorCode::TooFewPoints, std::to_string(data.size()) + " points for " +
                                             std::to_string(cfg.clusters) + " clusters");
  }
  if (cfg.clusters > 1 && detail::all_identical(data)) {
    KMeansModel m;
    m.centers.assign(cfg.clusters, data[0]);
    m.seed = cfg.seed;
    m.trace.push_back(0.0);
    m.warnings.push_back("DegenerateSample: all values identical; clusters collapsed");
    return m;
  }
  KMeansModel best;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    Rng rng(derive_seed(cfg.seed, r));
    KMeansModel run = detail::lloyd_run(data, cfg, rng);
    if (r == 0 || run.inertia < best.inertia) best = std::move(run);
  }
  best.seed = cfg.seed;
  detail::sort_centers(best);
  return best;
}

/// Mini-batch K-Means with per-center learning rate 1/count (Sculley).
/// Batches are drawn without replacement; a batch as large as the sample
/// is the whole sample. Stops once no center moves by tol or more.
inline KMeansModel minibatch_kmeans_fit(std::span<const double> data, const FitConfig& cfg) {
  validate(cfg);
  if (data.size() < cfg.clusters) {
    throw Error(ErrorCode::TooFewPoints, std::to_string(data.size()) + " points for " +
                                             std::to_string(cfg.clusters) + " clusters");
  }
  if (cfg.batch_size < cfg.clusters) {
    throw Error(ErrorCode::InvalidArgument, "batch_size must be >= clusters");
  }
  const std::size_t k = cfg.clusters;
  const std::size_t batch = std::min(cfg.batch_size, data.size());
  KMeansModel best;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    Rng rng(derive_seed(cfg.seed, r));
    KMeansModel m;
    m.minibatch = true;
    m.centers = detail::seed_plus_plus(data, k, rng);
    std::vector<std::uint64_t> seen(k, 0);
    std::vector<std::size_t> index(data.size());
    std::iota(index.begin(), index.end(), std::size_t{0});
    std::vector<std::size_t> nearest(batch);
    for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
      if (batch < data.size()) {
        for (std::size_t b = 0; b < batch; ++b) {
          std::swap(index[b], index[b + rng.uniform_index(data.size() - b)]);
        }
      }
      for (std::size_t b = 0; b < batch; ++b) {
        nearest[b] = nearest_center(m.centers, data[index[b]]);
      }
      const std::vector<double> before = m.centers;
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t j = nearest[b];
        const double eta = 1.0 / static_cast<double>(++seen[j]);
        m.centers[j] = (1.0 - eta) * m.centers[j] + eta * data[index[b]];
      }
      double moved = 0.0;
      for (std::size_t j = 0; j < k; ++j) moved = std::max(moved, std::abs(m.centers[j] - before[j]));
      m.iterations = it;
      m.trace.push_back(detail::inertia_of(data, m.centers));
      if (moved < cfg.tol) break;
    }
    m.inertia = detail::inertia_of(data, m.centers);
    if (r == 0 || m.inertia < best.inertia) best = std::move(m);
  }
  best.seed = cfg.seed;
  detail::sort_centers(best);
  return best;
}

// ---------------------------------------------------------------------------
// Gaussian mixture

namespace detail {

struct EmStats {
  double log_likelihood = 0.0;
  std::vector<double> mass;     // sum_i r_ij
  std::vector<double> first;    // sum_i r_ij (x_i - shift_j)
  std::vector<double> second;   // sum_i r_ij (x_i - shift_j)^2
};

// E-step over all points, accumulating sufficient statistics shifted by the
// current means to keep the variance update well conditioned.
inline EmStats e_step(std::span<const double> data, const GmmModel& m) {
  const GmmScorer scorer(m);
  const std::size_t k = m.clusters();
  EmStats s;
  s.mass.assign(k, 0.0);
  s.first.assign(k, 0.0);
  s.second.assign(k, 0.0);
  std::vector<double> lp(k);
  for (double x : data) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) top = std::max(top, lp[j] = scorer.log_joint(j, x));
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += (lp[j] = std::exp(lp[j] - top));
    s.log_likelihood += top + std::log(sum);
    for (std::size_t j = 0; j < k; ++j) {
      const double r = lp[j] / sum;
      const double d = x - m.means[j];
      s.mass[j] += r;
      s.first[j] += r * d;
      s.second[j] += r * d * d;
    }
  }
  return s;
}

inline void m_step(GmmModel& m, const EmStats& s, std::size_t n) {
  for (std::size_t j = 0; j < m.clusters(); ++j) {
    m.weights[j] = s.mass[j] / static_cast<double>(n);
    if (s.mass[j] <= std::numeric_limits<double>::min()) continue;
    const double shift = s.first[j] / s.mass[j];
    m.means[j] += shift;
    m.variances[j] = std::max(kVarianceFloor, s.second[j] / s.mass[j] - shift * shift);
  }
  const double total = std::accumulate(m.weights.begin(), m.weights.end(), 0.0);
  for (double& w : m.weights) w /= total;
}

inline double log_likelihood(std::span<const double> data, const GmmModel& m) {
  return e_step(data, m).log_likelihood;
}

}  // namespace detail

/// EM for a univariate mixture. Each restart starts from a single-restart
/// K-Means fit with uniform weights and the pooled within-cluster variance.
inline GmmModel gmm_fit(std::span<const double> data, const FitConfig& cfg) {
  validate(cfg);
  if (data.size() < cfg.clusters) {
    throw Error(ErrorCode::TooFewPoints, std::to_string(data.size()) + " points for " +
                                             std::to_string(cfg.clusters) + " clusters");
  }
  const std::size_t k = cfg.clusters;
  const std::size_t n = data.size();
  GmmModel best;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    FitConfig init = cfg;
    init.seed = derive_seed(cfg.seed, r);
    init.restarts = 1;
    const KMeansModel km = kmeans_fit(data, init);

    GmmModel m;
    m.means = km.centers;
    m.weights.assign(k, 1.0 / static_cast<double>(k));
    m.variances.assign(k, std::max(kVarianceFloor, km.inertia / static_cast<double>(n)));
    m.warnings = km.warnings;

    // The E-step of iteration t+1 also yields the likelihood after M-step t.
    detail::EmStats stats = detail::e_step(data, m);
    double prev = stats.log_likelihood;
    for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
      detail::m_step(m, stats, n);
      stats = detail::e_step(data, m);
      const double ll = stats.log_likelihood;
      m.iterations = it;
      m.trace.push_back(ll);
      m.log_likelihood = ll;
      if (std::abs(ll - prev) <= cfg.tol * std::abs(prev)) break;
      prev = ll;
    }
    if (r == 0 || m.log_likelihood > best.log_likelihood) best = std::move(m);
  }
  best.seed = cfg.seed;

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return best.means[a] < best.means[b]; });
  GmmModel sorted = best;
  for (std::size_t j = 0; j < k; ++j) {
    sorted.weights[j] = best.weights[order[j]];
    sorted.means[j] = best.means[order[j]];
    sorted.variances[j] = best.variances[order[j]];
  }
  return sorted;
}

}  // namespace volseg
