#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "stocs/congruent.hpp"
#include "stocs/error.hpp"
#include "stocs/geometry.hpp"
#include "stocs/model.hpp"
#include "stocs/parallel.hpp"
#include "stocs/rng.hpp"
#include "stocs/sampler.hpp"
#include "stocs/spatial_index.hpp"

namespace stocs {

/// Non-positive lengths and angles mean "derive from the model".
struct StocsConfig {
  std::size_t trials = 500;
  double delta_s = 0.0;                 ///< scoring tolerance; max(5 mm, 1% diameter)
  double min_spread = 0.2;              ///< base pair distance, fraction of diameter
  double max_spread = 0.8;
  double distance_tolerance = 0.0;      ///< congruence slack; delta_s
  double angle_tolerance = 0.0;         ///< congruence slack; 2 * PPF angle step
  double alignment_tolerance = 0.0;     ///< max RMS of a base/quad fit; delta_s
  std::size_t max_congruent_sets = 16;  ///< 0 = unlimited
  std::size_t enumeration_limit = 200000;
  double sampling_voxel = 0.0;          ///< thinning of base candidates; model resolution
  EdgePotentialOptions edge{};
  std::uint64_t seed = 0;
  unsigned threads = 1;

  /// Copy with every automatic field filled in for `model`.
  StocsConfig resolved(const ObjectModel& model) const {
    StocsConfig c = *this;
    if (c.trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be at least 1");
    if (!(c.min_spread >= 0.0 && c.min_spread < c.max_spread)) {
      throw Error(ErrorCode::InvalidArgument, "min spread must be non-negative and below max spread");
    }
    if (!(c.delta_s > 0.0)) c.delta_s = std::max(0.005, 0.01 * model.diameter);
    if (!(c.distance_tolerance > 0.0)) c.distance_tolerance = c.delta_s;
    if (!(c.angle_tolerance > 0.0)) c.angle_tolerance = 2.0 * model.ppf.quantization.angle_step;
    if (!(c.alignment_tolerance > 0.0)) c.alignment_tolerance = c.delta_s;
    if (!(c.sampling_voxel > 0.0)) c.sampling_voxel = model_resolution(model);
    return c;
  }
};

struct PoseHypothesis {
  RigidTransform transform;
  double score = 0.0;
  std::size_t trial = 0;
  Base base;
  std::array<std::uint32_t, 4> model_points{};
};

struct EstimateStats {
  std::size_t trials = 0;
  std::size_t dead_ends = 0;        ///< bases with no valid completion
  std::size_t congruent_sets = 0;
  std::size_t rejected_fits = 0;    ///< sets whose rigid fit exceeded the alignment tolerance
  std::size_t scored = 0;
  std::size_t pruned = 0;           ///< scoring abandoned under the running best
  std::size_t base_candidates = 0;
};

/// Sum over model points of the probability of the nearest scene point,
/// counting only neighbors strictly closer than delta_s.
inline double score_hypothesis(const RigidTransform& t, const ObjectModel& model, const SpatialIndex& scene_index,
                               std::span<const double> probs, double delta_s) {
  double score = 0.0;
  for (const auto& m : model.cloud.points) {
    if (const auto nb = scene_index.nearest_within(t.apply(m), delta_s)) score += probs[nb->index];
  }
  return score;
}

/// As score_hypothesis, but gives up (returns nullopt) once the remaining
/// points cannot lift the score to `bound` even at probability `p_max`.
/// A returned value is bit-identical to score_hypothesis.
inline std::optional<double> score_hypothesis_bounded(const RigidTransform& t, const ObjectModel& model,
                                                      const SpatialIndex& scene_index,
                                                      std::span<const double> probs, double delta_s,
                                                      double p_max, double bound) {
  const auto& pts = model.cloud.points;
  const double margin = 1e-9 * std::max(1.0, std::abs(bound));
  double score = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (const auto nb = scene_index.nearest_within(t.apply(pts[i]), delta_s)) score += probs[nb->index];
    if ((i & 15) == 15) {
      const double remaining = static_cast<double>(pts.size() - i - 1);
      if (score + remaining * p_max < bound - margin) return std::nullopt;
    }
  }
  return score;
}

namespace detail {

struct TrialOutcome {
  std::optional<PoseHypothesis> best;
  EstimateStats stats;
};

inline bool better(const PoseHypothesis& a, const PoseHypothesis& b) {
  return a.score > b.score || (a.score == b.score && a.trial < b.trial);
}

}  // namespace detail

/// Scene side of an estimation: the cloud with normals on every point that
/// can enter a base, and one probability per point.
struct SceneEvidence {
  const PointCloud& cloud;
  std::span<const double> probabilities;
};

/// Randomized search for the model pose best supported by the scene. Trial t
/// draws from its own stream seeded by (cfg.seed, t), and the best score wins
/// with ties going to the lowest trial, so the result does not depend on
/// cfg.threads. Workers prune against their own running best, which never
/// discards a hypothesis that could win.
inline PoseHypothesis estimate_pose(const SceneEvidence& scene, const ObjectModel& model, const StocsConfig& config,
                                    EstimateStats* stats_out = nullptr) {
  if (model.cloud.size() < 4 || !model.cloud.has_normals()) {
    throw Error(ErrorCode::TooFewPoints, "model needs at least four oriented points");
  }
  if (scene.probabilities.size() != scene.cloud.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one probability per scene point is required");
  }
  const StocsConfig cfg = config.resolved(model);

  std::vector<std::size_t> positive;
  for (std::size_t i = 0; i < scene.cloud.size(); ++i)
    if (scene.probabilities[i] > 0.0) positive.push_back(i);
  if (positive.size() < 4) throw Error(ErrorCode::InsufficientSupport, "fewer than four points with positive probability");

  std::vector<Point3> positive_points;
  positive_points.reserve(positive.size());
  for (auto i : positive) positive_points.push_back(scene.cloud.points[i]);
  std::vector<std::size_t> candidates;
  for (auto k : subsample_indices(positive_points, cfg.sampling_voxel)) candidates.push_back(positive[k]);

  const BaseSampler sampler(scene.cloud, scene.probabilities, model, cfg.min_spread * model.diameter,
                            cfg.max_spread * model.diameter, cfg.edge, candidates);
  const SpatialIndex scene_index(scene.cloud.points);
  const ModelPairIndex pairs(model);
  const double p_max = *std::max_element(scene.probabilities.begin(), scene.probabilities.end());
  const CongruenceTolerance tol{cfg.distance_tolerance, cfg.angle_tolerance, cfg.max_congruent_sets,
                                cfg.enumeration_limit};

  const unsigned workers = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.trials)));
  std::vector<detail::TrialOutcome> per_worker(workers);
  std::vector<double> bound(workers, 0.0);

  parallel_for(workers, workers, [&](std::size_t w) {
    auto& out = per_worker[w];
    for (std::size_t t = w; t < cfg.trials; t += workers) {
      ++out.stats.trials;
      Rng rng(stream_seed(cfg.seed, t));
      const auto base = sampler.sample(rng);
      if (!base) {
        ++out.stats.dead_ends;
        continue;
      }
      const auto sets = find_congruent_sets(base_features(scene.cloud, *base), pairs, tol);
      out.stats.congruent_sets += sets.size();
      std::array<Point3, 4> dst;
      for (int k = 0; k < 4; ++k) dst[k] = scene.cloud.points[base->indices[k]];
      for (const auto& set : sets) {
        std::array<Point3, 4> src;
        for (int k = 0; k < 4; ++k) src[k] = model.cloud.points[set.model[k]];
        RigidTransform t_hyp;
        try {
          t_hyp = best_rigid_alignment(src, dst);
        } catch (const Error&) {
          ++out.stats.rejected_fits;
          continue;
        }
        // Distance-congruent quads can still be mirror images of the base.
        if (alignment_rms(t_hyp, src, dst) > cfg.alignment_tolerance) {
          ++out.stats.rejected_fits;
          continue;
        }
        const auto score = score_hypothesis_bounded(t_hyp, model, scene_index, scene.probabilities, cfg.delta_s,
                                                    p_max, bound[w]);
        if (!score) {
          ++out.stats.pruned;
          continue;
        }
        ++out.stats.scored;
        PoseHypothesis h{t_hyp, *score, t, *base, set.model};
        if (!out.best || detail::better(h, *out.best)) {
          out.best = h;
          bound[w] = std::max(bound[w], h.score);
        }
      }
    }
  });

  EstimateStats stats;
  stats.base_candidates = sampler.support_size();
  std::optional<PoseHypothesis> best;
  for (const auto& o : per_worker) {
    stats.trials += o.stats.trials;
    stats.dead_ends += o.stats.dead_ends;
    stats.congruent_sets += o.stats.congruent_sets;
    stats.rejected_fits += o.stats.rejected_fits;
    stats.scored += o.stats.scored;
    stats.pruned += o.stats.pruned;
    if (o.best && (!best || detail::better(*o.best, *best))) best = o.best;
  }
  if (stats_out) *stats_out = stats;
  if (!best) {
    if (stats.dead_ends == stats.trials) {
      throw Error(ErrorCode::InsufficientSupport, "no base satisfies the spread constraint");
    }
    throw Error(ErrorCode::NoHypothesisFound, "no trial produced an aligned congruent set");
  }
  return *best;
}

}  // namespace stocs
