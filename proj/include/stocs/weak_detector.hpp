#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "stocs/error.hpp"

// Forward computations of a weakly supervised multi-class detector head and
// its per-class adversarial domain loss. Networks appear only as numbers.

namespace stocs {

/// Row-major float grid.
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

/// classes[c][m] is modality map m of class c.
using MultimapStack = std::vector<std::vector<Grid>>;
using ClassMapStack = std::vector<Grid>;

struct WildcatPoolingConfig {
  std::size_t k_max = 1;
  std::size_t k_min = 1;
  double alpha = 1.0;  ///< weight of the minimum-evidence term
};

/// Logistic sigma(x), evaluated without overflow for large |x|.
inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace detail {

inline void check_same_shape(const Grid& a, const Grid& b) {
  if (a.width != b.width || a.height != b.height || a.values.size() != b.values.size()) {
    throw Error(ErrorCode::DimensionMismatch, "maps differ in shape");
  }
}

/// Binary cross-entropy of probability p against label y, logs clamped.
inline double bce(double p, double y) {
  constexpr double kFloor = 1e-12;
  return -(y * std::log(std::max(p, kFloor)) + (1.0 - y) * std::log(std::max(1.0 - p, kFloor)));
}

}  // namespace detail

/// Per class, the cell-wise mean of its modality maps.
inline ClassMapStack class_pool(const MultimapStack& stack) {
  ClassMapStack out;
  out.reserve(stack.size());
  for (const auto& maps : stack) {
    if (maps.empty()) throw Error(ErrorCode::DimensionMismatch, "class has no modality maps");
    Grid g = maps.front();
    for (std::size_t m = 1; m < maps.size(); ++m) {
      detail::check_same_shape(g, maps[m]);
      for (std::size_t i = 0; i < g.size(); ++i) g.values[i] += maps[m].values[i];
    }
    for (auto& v : g.values) v /= static_cast<double>(maps.size());
    if (!out.empty()) detail::check_same_shape(out.front(), g);
    out.push_back(std::move(g));
  }
  return out;
}

/// Mean of the k_max largest cells plus alpha times the mean of the k_min
/// smallest cells.
inline double spatial_pool(const Grid& grid, const WildcatPoolingConfig& cfg) {
  if (cfg.k_max < 1 || cfg.k_min < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  if (cfg.k_max > grid.size() || cfg.k_min > grid.size()) {
    throw Error(ErrorCode::KTooLarge, "k exceeds the number of grid cells");
  }
  std::vector<double> v = grid.values;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(cfg.k_max - 1), v.end(), std::greater<>());
  double top = 0.0;
  for (std::size_t i = 0; i < cfg.k_max; ++i) top += v[i];
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(cfg.k_min - 1), v.end());
  double bottom = 0.0;
  for (std::size_t i = 0; i < cfg.k_min; ++i) bottom += v[i];
  return top / static_cast<double>(cfg.k_max) + cfg.alpha * bottom / static_cast<double>(cfg.k_min);
}

inline std::vector<double> spatial_pool(const ClassMapStack& maps, const WildcatPoolingConfig& cfg) {
  std::vector<double> out;
  out.reserve(maps.size());
  for (const auto& g : maps) out.push_back(spatial_pool(g, cfg));
  return out;
}

/// Maps class scores into (0, 1) with the logistic function.
inline std::vector<double> rescale_scores(const std::vector<double>& scores) {
  std::vector<double> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(logistic(s));
  return out;
}

/// Mean over classes of the binary cross-entropy of sigma(score) against
/// the 0/1 label.
inline double classification_loss(const std::vector<double>& scores, const std::vector<double>& labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::DimensionMismatch, "one label per class score");
  if (scores.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t c = 0; c < scores.size(); ++c) sum += detail::bce(logistic(scores[c]), labels[c]);
  return sum / static_cast<double>(scores.size());
}

/// Per-class domain discriminator: sigma(w . x + b).
struct LinearDiscriminator {
  std::vector<double> weights;
  double bias = 0.0;

  double operator()(const std::vector<double>& x) const {
    if (x.size() != weights.size()) throw Error(ErrorCode::DimensionMismatch, "feature/weight length mismatch");
    double z = bias;
    for (std::size_t i = 0; i < x.size(); ++i) z += weights[i] * x[i];
    return logistic(z);
  }
};

/// Samples from both domains. features[i] is the extracted feature vector of
/// sample i, class_probs[i][k] its predicted probability for class k, and
/// domain[i] its domain label (1 synthetic, 0 real).
struct DomainBatch {
  std::vector<std::vector<double>> features;
  std::vector<std::vector<double>> class_probs;
  std::vector<double> domain;
};

/// Sum over classes k and samples i of BCE(D_k(p_ik * f_i), d_i), divided by
/// the number of samples.
inline double mada_domain_loss(const DomainBatch& batch, const std::vector<LinearDiscriminator>& discs) {
  const std::size_t n = batch.features.size();
  if (batch.class_probs.size() != n || batch.domain.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "features, class probabilities and domains must have one row per sample");
  }
  if (n == 0) throw Error(ErrorCode::DimensionMismatch, "batch is empty");
  double total = 0.0;
  std::vector<double> scaled;
  for (std::size_t i = 0; i < n; ++i) {
    if (batch.class_probs[i].size() != discs.size()) {
      throw Error(ErrorCode::DimensionMismatch, "one discriminator per class is required");
    }
    for (std::size_t k = 0; k < discs.size(); ++k) {
      scaled = batch.features[i];
      for (auto& x : scaled) x *= batch.class_probs[i][k];
      total += detail::bce(discs[k](scaled), batch.domain[i]);
    }
  }
  return total / static_cast<double>(n);
}

/// Classification loss minus lambda times the domain loss.
inline double global_objective(double l_y, double l_d, double lambda = 0.5) {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be non-negative");
  return l_y - lambda * l_d;
}

}  // namespace stocs
