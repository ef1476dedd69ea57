#include <gtest/gtest.h>

#include <functional>
#include <map>
#include <set>

#include "test_support.hpp"

using namespace stocs;
using namespace stocs::testing;

namespace {

using Quad = std::array<std::size_t, 4>;

Quad sorted_quad(const Base& b) {
  Quad q = b.indices;
  std::sort(q.begin(), q.end());
  return q;
}

/// Unnormalized joint weight of every unordered 4-subset: node potentials
/// times edge potentials, zero when a pair violates the spread window.
/// Normalized over all subsets.
std::map<Quad, double> enumerate_joint(const PointCloud& scene, const std::vector<double>& node,
                                       const std::function<double(std::size_t, std::size_t)>& edge, double lo,
                                       double hi) {
  std::map<Quad, double> out;
  double z = 0.0;
  const std::size_t n = scene.size();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      for (std::size_t c = b + 1; c < n; ++c)
        for (std::size_t d = c + 1; d < n; ++d) {
          const Quad q{a, b, c, d};
          double w = 1.0;
          for (auto i : q) w *= node[i];
          for (int x = 0; x < 4; ++x)
            for (int y = x + 1; y < 4; ++y) {
              const double dist = (scene.points[q[x]] - scene.points[q[y]]).norm();
              if (dist < lo || dist > hi) w = 0.0;
              w *= edge(q[x], q[y]);
            }
          if (w > 0.0) out[q] = w;
          z += w;
        }
  for (auto& [q, w] : out) w /= z;
  return out;
}

EdgePotentialOptions unit_edges() {
  EdgePotentialOptions e;
  e.floor = 1.0;
  return e;
}

/// The model itself, moved by `t`, as a fully confident scene.
struct CopyScene {
  PointCloud cloud;
  std::vector<double> probs;
};

CopyScene copy_scene(const ObjectModel& m, const RigidTransform& t) {
  return {apply_transform(t, m.cloud), std::vector<double>(m.cloud.size(), 1.0)};
}

std::array<double, 4> float_feature(const Point3& p1, const UnitVector3& n1, const Point3& p2,
                                    const UnitVector3& n2) {
  const auto f = compute_ppf(p1, n1, p2, n2);
  return {static_cast<float>(f.distance), static_cast<float>(f.angle_n1_d), static_cast<float>(f.angle_n2_d),
          static_cast<float>(f.angle_n1_n2)};
}

}  // namespace

TEST(BaseSampler, AllZeroProbabilities) {
  Rng rng(1);
  const auto scene = random_cloud(rng, 20, 0.1);
  const std::vector<double> zeros(20, 0.0);
  EXPECT_EQ(error_of([&] { BaseSampler(scene, zeros, shape_model("tee"), 0.0, 1.0); }),
            ErrorCode::InsufficientSupport);
}

TEST(BaseSampler, UnsatisfiableSpread) {
  Rng rng(2);
  const auto scene = random_cloud(rng, 20, 0.1);
  const std::vector<double> ones(20, 1.0);
  const BaseSampler sampler(scene, ones, shape_model("tee"), 5.0, 6.0);
  Rng draw(3);
  EXPECT_EQ(error_of([&] { sample_base(sampler, draw); }), ErrorCode::InsufficientSupport);
}

TEST(BaseSampler, UniformPotentialsMatchEnumeration) {
  Rng rng(4);
  const auto scene = random_cloud(rng, 10, 0.1);
  const std::vector<double> node(10, 1.0);
  const BaseSampler sampler(scene, node, shape_model("drill"), 0.0, 10.0, unit_edges());
  const auto exact = enumerate_joint(scene, node, [](auto, auto) { return 1.0; }, 0.0, 10.0);
  ASSERT_EQ(exact.size(), 210u);
  std::map<Quad, double> freq;
  const int draws = 50000;
  Rng draw(5);
  for (int i = 0; i < draws; ++i) freq[sorted_quad(sample_base(sampler, draw))] += 1.0 / draws;
  double tv = 0.0;
  for (const auto& [q, p] : exact) tv += std::abs(p - freq[q]);
  EXPECT_LT(0.5 * tv, 0.03);
}

TEST(BaseSampler, HotPointDominates) {
  Rng rng(6);
  const auto scene = random_cloud(rng, 10, 0.1);
  std::vector<double> node(10, 0.01);
  node[3] = 1.0;
  const auto exact = enumerate_joint(scene, node, [](auto, auto) { return 1.0; }, 0.0, 10.0);
  double oracle = 0.0;
  for (const auto& [q, p] : exact)
    if (std::find(q.begin(), q.end(), 3u) != q.end()) oracle += p;
  EXPECT_GT(oracle, 0.95);
  const BaseSampler sampler(scene, node, shape_model("drill"), 0.0, 10.0, unit_edges());
  Rng draw(7);
  int hits = 0;
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    const auto b = sample_base(sampler, draw);
    hits += std::find(b.indices.begin(), b.indices.end(), 3u) != b.indices.end();
  }
  EXPECT_GT(hits / static_cast<double>(draws), 0.95);
}

TEST(BaseSampler, FirstPickIsProportionalToNodePotential) {
  Rng rng(8);
  const auto scene = random_cloud(rng, 6, 0.1);
  const std::vector<double> node{1, 2, 3, 4, 5, 5};
  const BaseSampler sampler(scene, node, shape_model("drill"), 0.0, 10.0, unit_edges());
  std::vector<double> count(6, 0.0);
  Rng draw(9);
  const int draws = 40000;
  for (int i = 0; i < draws; ++i) count[sample_base(sampler, draw).indices[0]] += 1.0;
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(count[i] / draws, node[i] / 20.0, 0.01);
}

TEST(BaseSampler, BasesRespectSpreadAndRecordPotentials) {
  const auto& m = shape_model("bracket");
  const auto scene = apply_transform(RigidTransform::from_translation({0, 0, 0.7}), m.cloud);
  Rng rng(10);
  std::vector<double> node(scene.size());
  for (auto& p : node) p = rng.below(5) == 0 ? 0.0 : rng.uniform(0.1, 1.0);
  const double lo = 0.2 * m.diameter, hi = 0.8 * m.diameter;
  const BaseSampler sampler(scene, node, m, lo, hi);
  int produced = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto b = sampler.sample(rng);
    if (!b) continue;
    ++produced;
    const std::set<std::size_t> distinct(b->indices.begin(), b->indices.end());
    ASSERT_EQ(distinct.size(), 4u);
    for (int k = 0; k < 4; ++k) {
      ASSERT_GT(node[b->indices[k]], 0.0);
      ASSERT_EQ(b->node[k], node[b->indices[k]]);
    }
    for (std::size_t e = 0; e < 6; ++e) {
      const auto x = b->indices[kBasePairs[e].first], y = b->indices[kBasePairs[e].second];
      const double d = (scene.points[x] - scene.points[y]).norm();
      ASSERT_GE(d, lo);
      ASSERT_LE(d, hi);
      ASSERT_GE(b->edge[e], 0.01);
      ASSERT_LE(b->edge[e], 1.0);
    }
  }
  EXPECT_GT(produced, 1500);
}

TEST(CongruentSets, SelfMatchContainsIdentity) {
  const auto& m = shape_model("step");
  const ModelPairIndex index(m);
  Rng rng(11);
  int checked = 0;
  while (checked < 50) {
    Base b;
    for (auto& i : b.indices) i = rng.below(m.cloud.size());
    if (std::set<std::size_t>(b.indices.begin(), b.indices.end()).size() < 4) continue;
    const auto sets = find_congruent_sets(base_features(m.cloud, b), index, {0.005, 24 * kDeg, 0, 100000000});
    const std::array<std::uint32_t, 4> identity{static_cast<std::uint32_t>(b.indices[0]),
                                                static_cast<std::uint32_t>(b.indices[1]),
                                                static_cast<std::uint32_t>(b.indices[2]),
                                                static_cast<std::uint32_t>(b.indices[3])};
    bool found = false;
    for (const auto& s : sets) found = found || s.model == identity;
    ASSERT_TRUE(found);
    ++checked;
  }
}

TEST(CongruentSets, OverlongBaseHasNoMatch) {
  const auto& m = shape_model("tee");
  const ModelPairIndex index(m);
  PointCloud scene;
  const double far = m.diameter + 0.05;
  scene.points = {{0, 0, 0}, {far, 0, 0}, {0, 0.05, 0}, {0, 0, 0.05}};
  scene.normals.assign(4, UnitVector3(0, 0, 1));
  Base b;
  b.indices = {0, 1, 2, 3};
  EXPECT_TRUE(find_congruent_sets(base_features(scene, b), index, {0.005, 24 * kDeg, 0, 100000000}).empty());
}

TEST(CongruentSets, MatchesExhaustiveQuadrupleScan) {
  Rng rng(12);
  const auto model = build_model(random_cloud(rng, 50, 0.05), 1e-6, 0.0, 12 * kDeg, "tiny");
  ASSERT_EQ(model.cloud.size(), 50u);
  const ModelPairIndex index(model);
  const std::size_t n = 50;
  std::vector<std::array<double, 4>> table(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j)
        table[i * n + j] =
            float_feature(model.cloud.points[i], model.cloud.normals[i], model.cloud.points[j], model.cloud.normals[j]);
  for (int round = 0; round < 6; ++round) {
    // A jittered copy of four model points, so that matches exist.
    PointCloud scene;
    for (int k = 0; k < 4; ++k) {
      const auto i = rng.below(n);
      scene.points.push_back(model.cloud.points[i] + random_point(rng, 0.004));
      scene.normals.push_back((model.cloud.normals[i] + 0.2 * random_unit(rng)).normalized());
    }
    Base b;
    b.indices = {0, 1, 2, 3};
    const CongruenceTolerance tol{0.01, 30 * kDeg, 0, 100000000};
    const auto bf = base_features(scene, b);
    const auto sets = find_congruent_sets(bf, index, tol);
    std::set<std::array<std::uint32_t, 4>> got;
    for (const auto& s : sets) got.insert(s.model);
    ASSERT_EQ(got.size(), sets.size());

    std::set<std::array<std::uint32_t, 4>> expect;
    std::array<std::uint32_t, 4> q{};
    for (q[0] = 0; q[0] < n; ++q[0])
      for (q[1] = 0; q[1] < n; ++q[1])
        for (q[2] = 0; q[2] < n; ++q[2])
          for (q[3] = 0; q[3] < n; ++q[3]) {
            bool ok = true;
            for (std::size_t e = 0; e < 6 && ok; ++e) {
              const auto a = q[kBasePairs[e].first], c = q[kBasePairs[e].second];
              if (a == c) {
                ok = false;
                break;
              }
              const auto& f = table[a * n + c];
              ok = std::abs(f[0] - bf[e].distance) <= tol.distance &&
                   std::abs(f[1] - bf[e].angle_n1_d) <= tol.angle && std::abs(f[2] - bf[e].angle_n2_d) <= tol.angle &&
                   std::abs(f[3] - bf[e].angle_n1_n2) <= tol.angle;
            }
            if (ok) expect.insert(q);
          }
    ASSERT_EQ(got, expect) << "round " << round;
    if (round == 0) {
      ASSERT_FALSE(expect.empty());
    }
  }
}

TEST(CongruentSets, CapKeepsSmallestResiduals) {
  const auto& m = shape_model("drill");
  const ModelPairIndex index(m);
  Base b;
  b.indices = {0, 10, 20, 30};
  const auto bf = base_features(m.cloud, b);
  auto all = find_congruent_sets(bf, index, {0.01, 30 * kDeg, 0, 100000000});
  ASSERT_GT(all.size(), 5u);
  const auto capped = find_congruent_sets(bf, index, {0.01, 30 * kDeg, 5, 100000000});
  ASSERT_EQ(capped.size(), 5u);
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
    return x.residual < y.residual || (x.residual == y.residual && x.model < y.model);
  });
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(capped[i].model, all[i].model);
}

TEST(ScoreHypothesis, IdentityOnSelfCountsEveryPoint) {
  const auto& m = shape_model("tee");
  const auto s = copy_scene(m, RigidTransform::identity());
  const SpatialIndex index(s.cloud.points);
  EXPECT_EQ(score_hypothesis(RigidTransform::identity(), m, index, s.probs, 0.005),
            static_cast<double>(m.cloud.size()));
}

TEST(ScoreHypothesis, FarAwayScoresZero) {
  const auto& m = shape_model("tee");
  const auto s = copy_scene(m, RigidTransform::identity());
  const SpatialIndex index(s.cloud.points);
  const double delta = 0.005;
  const auto t = RigidTransform::from_translation({m.diameter + 10 * delta, 0, 0});
  EXPECT_EQ(score_hypothesis(t, m, index, s.probs, delta), 0.0);
}

TEST(ScoreHypothesis, MatchesLinearScan) {
  Rng rng(13);
  const auto model = build_model(random_cloud(rng, 30, 0.05), 1e-6, 0.0, 12 * kDeg, "m30");
  for (int round = 0; round < 200; ++round) {
    const auto scene = random_cloud(rng, 300, 0.08, false);
    std::vector<double> probs(scene.size());
    for (auto& p : probs) p = rng.uniform();
    const SpatialIndex index(scene.points);
    const auto t = random_transform(rng, 0.02);
    const double delta = rng.uniform(0.002, 0.03);
    double expect = 0.0;
    for (const auto& m : model.cloud.points) {
      const Point3 q = t.apply(m);
      std::size_t best = 0;
      double d2 = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < scene.size(); ++i)
        if ((scene.points[i] - q).squaredNorm() < d2) {
          d2 = (scene.points[i] - q).squaredNorm();
          best = i;
        }
      if (std::sqrt(d2) < delta) expect += probs[best];
    }
    const double got = score_hypothesis(t, model, index, probs, delta);
    ASSERT_NEAR(got, expect, 1e-9);
    const double bound = rng.uniform(0.0, 30.0);
    const auto bounded = score_hypothesis_bounded(t, model, index, probs, delta, 1.0, bound);
    if (bounded) {
      ASSERT_EQ(*bounded, got);
    } else {
      ASSERT_LT(got, bound);
    }
  }
}

TEST(ScoreHypothesis, RaisingOneProbabilityNeverLowersScore) {
  const auto& m = shape_model("bracket");
  const auto s = copy_scene(m, RigidTransform::identity());
  const SpatialIndex index(s.cloud.points);
  for_all(100, 14, [&](Rng& rng, std::size_t) {
    std::vector<double> probs(s.probs.size());
    for (auto& p : probs) p = rng.uniform();
    const auto t = random_transform(rng, 0.01);
    const double before = score_hypothesis(t, m, index, probs, 0.01);
    probs[rng.below(probs.size())] += rng.uniform();
    ASSERT_GE(score_hypothesis(t, m, index, probs, 0.01), before);
  });
}

TEST(StocsConfig, ResolvesDefaults) {
  const auto& m = shape_model("drill");
  const auto c = StocsConfig{}.resolved(m);
  EXPECT_DOUBLE_EQ(c.delta_s, std::max(0.005, 0.01 * m.diameter));
  EXPECT_DOUBLE_EQ(c.distance_tolerance, c.delta_s);
  EXPECT_DOUBLE_EQ(c.angle_tolerance, 24 * kDeg);
  StocsConfig bad;
  bad.trials = 0;
  EXPECT_EQ(error_of([&] { bad.resolved(m); }), ErrorCode::InvalidArgument);
  bad = {};
  bad.min_spread = 0.9;
  EXPECT_EQ(error_of([&] { bad.resolved(m); }), ErrorCode::InvalidArgument);
}

TEST(EstimatePose, AllZeroHeatmap) {
  const auto& m = shape_model("tee");
  auto s = copy_scene(m, RigidTransform::identity());
  std::fill(s.probs.begin(), s.probs.end(), 0.0);
  EXPECT_EQ(error_of([&] { estimate_pose({s.cloud, s.probs}, m, {}); }), ErrorCode::InsufficientSupport);
}

TEST(EstimatePose, InputValidation) {
  const auto& m = shape_model("tee");
  auto s = copy_scene(m, RigidTransform::identity());
  s.probs.pop_back();
  EXPECT_EQ(error_of([&] { estimate_pose({s.cloud, s.probs}, m, {}); }), ErrorCode::DimensionMismatch);
  ObjectModel tiny = m;
  tiny.cloud.points.resize(3);
  tiny.cloud.normals.resize(3);
  EXPECT_EQ(error_of([&] { estimate_pose({s.cloud, s.probs}, tiny, {}); }), ErrorCode::TooFewPoints);
}

TEST(EstimatePose, RecoversExactCopy) {
  for (const auto& m : shape_models()) {
    Rng rng(stream_seed(15, m.cloud.size()));
    const RigidTransform truth(random_rotation(rng), Point3(0.05, -0.02, 0.7));
    const auto s = copy_scene(m, truth);
    StocsConfig cfg;
    cfg.trials = 200;
    cfg.delta_s = 0.002;
    const auto h = estimate_pose({s.cloud, s.probs}, m, cfg);
    EXPECT_LT(add_error(truth, h.transform, m), 0.01 * m.diameter) << m.id;
    EXPECT_GE(h.score, 0.0);
    EXPECT_LE(h.score, static_cast<double>(m.cloud.size()));
  }
}

TEST(EstimatePose, EquivariantUnderGlobalMotion) {
  const auto& m = shape_model("drill");
  Rng rng(16);
  const RigidTransform truth(random_rotation(rng), Point3(0, 0, 0.8));
  StocsConfig cfg;
  cfg.trials = 200;
  cfg.delta_s = 0.002;
  for (int k = 0; k < 3; ++k) {
    const auto g = random_transform(rng, 0.5);
    const auto s = copy_scene(m, g * truth);
    const auto h = estimate_pose({s.cloud, s.probs}, m, cfg);
    EXPECT_LT(add_error(g * truth, h.transform, m), 0.01 * m.diameter);
  }
}

TEST(EstimatePose, ThreadCountDoesNotChangeTheResult) {
  const auto& m = shape_model("bracket");
  Rng rng(17);
  auto s = copy_scene(m, RigidTransform(random_rotation(rng), Point3(0, 0, 0.6)));
  for (auto& p : s.probs) p = rng.uniform(0.2, 1.0);
  StocsConfig cfg;
  cfg.trials = 120;
  cfg.seed = 99;
  std::optional<PoseHypothesis> first;
  for (unsigned threads : {1u, 2u, 3u, 7u}) {
    cfg.threads = threads;
    const auto h = estimate_pose({s.cloud, s.probs}, m, cfg);
    if (!first) {
      first = h;
      continue;
    }
    EXPECT_EQ(h.score, first->score);
    EXPECT_EQ(h.trial, first->trial);
    EXPECT_EQ(h.transform.rotation().coeffs(), first->transform.rotation().coeffs());
    EXPECT_EQ(h.transform.translation(), first->transform.translation());
  }
}

TEST(EstimatePose, PowerOfTwoProbabilityScalingKeepsTheArgmax) {
  const auto& m = shape_model("step");
  Rng rng(18);
  auto s = copy_scene(m, RigidTransform(random_rotation(rng), Point3(0, 0, 0.6)));
  for (auto& p : s.probs) p = rng.uniform(0.1, 1.0);
  StocsConfig cfg;
  cfg.trials = 100;
  cfg.seed = 5;
  const auto base = estimate_pose({s.cloud, s.probs}, m, cfg);
  for (double c : {0.25, 2.0, 8.0}) {
    auto scaled = s.probs;
    for (auto& p : scaled) p *= c;
    const auto h = estimate_pose({s.cloud, scaled}, m, cfg);
    EXPECT_EQ(h.trial, base.trial);
    EXPECT_EQ(h.base.indices, base.base.indices);
    EXPECT_EQ(h.model_points, base.model_points);
    EXPECT_EQ(h.score, base.score * c);
  }
}

TEST(EstimatePose, MoreTrialsNeverLowerTheBestScore) {
  const auto& m = shape_model("tee");
  Rng rng(19);
  auto s = copy_scene(m, RigidTransform(random_rotation(rng), Point3(0, 0, 0.6)));
  for (auto& p : s.probs) p = rng.uniform(0.1, 1.0);
  StocsConfig cfg;
  cfg.seed = 3;
  double last = 0.0;
  for (std::size_t trials : {5, 20, 60, 150}) {
    cfg.trials = trials;
    const double score = estimate_pose({s.cloud, s.probs}, m, cfg).score;
    EXPECT_GE(score, last);
    last = score;
  }
}

TEST(EstimatePose, HeatmapSelectsTheTargetOverADistractor) {
  const auto& models = shape_models();
  SceneSpec spec;
  spec.objects = {{0, std::nullopt}, {1, std::nullopt}};
  spec.seed = 20;
  spec.background_depth = 1.2;
  const auto scene = render_scene(spec, models);
  for (std::size_t target = 0; target < 2; ++target) {
    const auto& gt = scene.truth.objects[target];
    const auto& model = models[target];
    const auto heat = normalize_heatmap(mask_heatmap(scene.truth, gt.mask, model.id));
    const auto prepared = prepare_scene(scene.depth, spec.intrinsics, heat, model.id);
    StocsConfig cfg;
    cfg.seed = 1;
    const auto r = estimate_in_scene(prepared, model, cfg);
    EXPECT_LT(add_error(gt.pose, r.pose(), model), 0.05 * model.diameter) << model.id;
  }
}

TEST(Pipeline, PrepareSceneOrientsNormalsTowardCamera) {
  const auto& models = shape_models();
  SceneSpec spec;
  spec.objects = {{2, std::nullopt}};
  spec.seed = 21;
  spec.background_depth = 1.2;
  const auto scene = render_scene(spec, models);
  const auto heat = normalize_heatmap(ground_truth_heatmap(scene.truth));
  const auto prepared = prepare_scene(scene.depth, spec.intrinsics, heat, "step");
  ASSERT_EQ(prepared.probabilities.size(), prepared.cloud.size());
  ASSERT_TRUE(prepared.cloud.has_normals());
  for (std::size_t i = 0; i < prepared.cloud.size(); ++i) {
    ASSERT_NEAR(prepared.cloud.normals[i].norm(), 1.0, 1e-9);
    ASSERT_LE(prepared.cloud.normals[i].dot(prepared.cloud.points[i]), 1e-12);
  }
}
