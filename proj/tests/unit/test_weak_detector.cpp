#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace stocs;
using namespace stocs::testing;

namespace {

Grid random_grid(Rng& rng, int w, int h) {
  Grid g{w, h, {}};
  for (int i = 0; i < w * h; ++i) g.values.push_back(rng.uniform(-5.0, 5.0));
  return g;
}

double pool_by_full_sort(const Grid& g, const WildcatPoolingConfig& cfg) {
  std::vector<double> v = g.values;
  std::sort(v.begin(), v.end());
  double top = 0.0, bottom = 0.0;
  for (std::size_t i = 0; i < cfg.k_max; ++i) top += v[v.size() - 1 - i];
  for (std::size_t i = 0; i < cfg.k_min; ++i) bottom += v[i];
  return top / cfg.k_max + cfg.alpha * bottom / cfg.k_min;
}

double bce_oracle(double p, double y) { return -(y * std::log(p) + (1 - y) * std::log(1 - p)); }

double domain_loss_oracle(const DomainBatch& b, const std::vector<LinearDiscriminator>& discs) {
  double total = 0.0;
  for (std::size_t i = 0; i < b.features.size(); ++i)
    for (std::size_t k = 0; k < discs.size(); ++k) {
      double z = discs[k].bias;
      for (std::size_t j = 0; j < b.features[i].size(); ++j) z += discs[k].weights[j] * b.class_probs[i][k] * b.features[i][j];
      total += bce_oracle(1.0 / (1.0 + std::exp(-z)), b.domain[i]);
    }
  return total / b.features.size();
}

struct DomainProblem {
  DomainBatch batch;
  std::vector<LinearDiscriminator> discs;
};

DomainProblem random_problem(Rng& rng, std::size_t n, std::size_t classes, std::size_t dim) {
  DomainProblem p;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> f, probs;
    for (std::size_t j = 0; j < dim; ++j) f.push_back(rng.uniform(-1.0, 1.0));
    double sum = 0.0;
    for (std::size_t k = 0; k < classes; ++k) sum += probs.emplace_back(rng.uniform(0.01, 1.0));
    for (auto& q : probs) q /= sum;
    p.batch.features.push_back(f);
    p.batch.class_probs.push_back(probs);
    p.batch.domain.push_back(i % 2 == 0 ? 1.0 : 0.0);
  }
  for (std::size_t k = 0; k < classes; ++k) {
    LinearDiscriminator d;
    for (std::size_t j = 0; j < dim; ++j) d.weights.push_back(rng.uniform(-2.0, 2.0));
    d.bias = rng.uniform(-0.5, 0.5);
    p.discs.push_back(d);
  }
  return p;
}

}  // namespace

TEST(SpatialPool, SmallExamples) {
  const Grid g{2, 2, {1.0, 4.0, 2.0, 3.0}};
  EXPECT_DOUBLE_EQ(spatial_pool(g, {1, 1, 1.0}), 5.0);
  EXPECT_DOUBLE_EQ(spatial_pool(g, {2, 1, 1.0}), 4.5);
  EXPECT_DOUBLE_EQ(spatial_pool(g, {1, 2, 0.5}), 4.75);
  EXPECT_DOUBLE_EQ(spatial_pool(g, {4, 4, 0.0}), 2.5);
}

TEST(SpatialPool, MatchesFullSortOracle) {
  for_all(1000, 1, [](Rng& rng, std::size_t) {
    const int w = 1 + static_cast<int>(rng.below(20)), h = 1 + static_cast<int>(rng.below(20));
    Grid g = random_grid(rng, w, h);
    // Repeated values exercise ties at the selection boundary.
    if (rng.below(2) == 0)
      for (auto& v : g.values) v = std::round(v);
    const WildcatPoolingConfig cfg{1 + rng.below(g.size()), 1 + rng.below(g.size()), rng.uniform(0.0, 1.5)};
    ASSERT_NEAR(spatial_pool(g, cfg), pool_by_full_sort(g, cfg), 1e-12);
  });
}

TEST(SpatialPool, PropertiesOfThePooledScore) {
  for_all(200, 2, [](Rng& rng, std::size_t) {
    const Grid g = random_grid(rng, 8, 6);
    const auto [lo, hi] = std::minmax_element(g.values.begin(), g.values.end());
    const std::size_t k = 1 + rng.below(g.size());
    // With alpha 0 the score is a mean of cells.
    const double s = spatial_pool(g, {k, 1, 0.0});
    ASSERT_GE(s, *lo);
    ASSERT_LE(s, *hi);
    // Growing k_max can only lower the top mean.
    if (k < g.size()) {
      ASSERT_LE(spatial_pool(g, {k + 1, 1, 0.0}), s + 1e-12);
    }
    // Cell order is irrelevant.
    Grid shuffled = g;
    std::reverse(shuffled.values.begin(), shuffled.values.end());
    ASSERT_NEAR(spatial_pool(shuffled, {k, k, 0.7}), spatial_pool(g, {k, k, 0.7}), 1e-12);
  });
}

TEST(SpatialPool, Errors) {
  const Grid g{2, 2, {1, 2, 3, 4}};
  EXPECT_EQ(error_of([&] { spatial_pool(g, {5, 1, 1.0}); }), ErrorCode::KTooLarge);
  EXPECT_EQ(error_of([&] { spatial_pool(g, {1, 5, 1.0}); }), ErrorCode::KTooLarge);
  EXPECT_EQ(error_of([&] { spatial_pool(g, {0, 1, 1.0}); }), ErrorCode::InvalidArgument);
  const ClassMapStack stack{g, g};
  EXPECT_EQ(spatial_pool(stack, {1, 1, 1.0}), (std::vector<double>{5.0, 5.0}));
}

TEST(ClassPool, AveragesModalities) {
  const MultimapStack stack{{Grid{2, 1, {1, 2}}, Grid{2, 1, {3, 6}}}, {Grid{2, 1, {5, 5}}}};
  const auto out = class_pool(stack);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].values, (std::vector<double>{2, 4}));
  EXPECT_EQ(out[1].values, (std::vector<double>{5, 5}));
  EXPECT_EQ(error_of([] { class_pool({{Grid{2, 1, {1, 2}}, Grid{1, 2, {1, 2}}}}); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(error_of([] { class_pool({{}}); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(error_of([] { class_pool({{Grid{2, 1, {1, 2}}}, {Grid{1, 1, {1}}}}); }), ErrorCode::DimensionMismatch);
}

TEST(ClassificationLoss, AnchorsAndOracle) {
  EXPECT_DOUBLE_EQ(classification_loss({0.0}, {1.0}), std::log(2.0));
  EXPECT_DOUBLE_EQ(classification_loss({0.0, 0.0, 0.0}, {1.0, 0.0, 1.0}), std::log(2.0));
  EXPECT_LT(classification_loss({40.0}, {1.0}), 1e-15);
  EXPECT_TRUE(std::isfinite(classification_loss({-800.0}, {1.0})));
  EXPECT_EQ(error_of([] { classification_loss({0.0}, {}); }), ErrorCode::DimensionMismatch);
  for_all(200, 3, [](Rng& rng, std::size_t) {
    std::vector<double> s, y;
    const std::size_t n = 1 + rng.below(10);
    double oracle = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      s.push_back(rng.uniform(-6.0, 6.0));
      y.push_back(static_cast<double>(rng.below(2)));
      oracle += bce_oracle(1.0 / (1.0 + std::exp(-s.back())), y.back());
    }
    ASSERT_NEAR(classification_loss(s, y), oracle / n, 1e-12);
  });
}

TEST(Logistic, StableAndSymmetric) {
  EXPECT_EQ(logistic(0.0), 0.5);
  EXPECT_EQ(logistic(1000.0), 1.0);
  EXPECT_EQ(logistic(-1000.0), 0.0);
  for (double x : {0.1, 1.0, 3.0, 20.0}) EXPECT_NEAR(logistic(x) + logistic(-x), 1.0, 1e-15);
  EXPECT_EQ(rescale_scores({0.0, 0.0}), (std::vector<double>{0.5, 0.5}));
}

TEST(DomainLoss, MatchesTripleLoopOracle) {
  for_all(300, 4, [](Rng& rng, std::size_t) {
    const auto p = random_problem(rng, 1 + rng.below(12), 1 + rng.below(5), 1 + rng.below(8));
    ASSERT_NEAR(mada_domain_loss(p.batch, p.discs), domain_loss_oracle(p.batch, p.discs), 1e-9);
  });
}

TEST(DomainLoss, UninformativeDiscriminatorsGiveLnTwoPerClass) {
  Rng rng(5);
  auto p = random_problem(rng, 9, 4, 3);
  for (auto& d : p.discs) {
    std::fill(d.weights.begin(), d.weights.end(), 0.0);
    d.bias = 0.0;
  }
  EXPECT_NEAR(mada_domain_loss(p.batch, p.discs), 4 * std::log(2.0), 1e-12);
  // Zero class probability removes the features from the discriminator input.
  auto q = random_problem(rng, 5, 2, 3);
  for (auto& d : q.discs) d.bias = 0.0;
  for (auto& row : q.batch.class_probs) std::fill(row.begin(), row.end(), 0.0);
  EXPECT_NEAR(mada_domain_loss(q.batch, q.discs), 2 * std::log(2.0), 1e-12);
}

TEST(DomainLoss, Errors) {
  Rng rng(6);
  auto p = random_problem(rng, 3, 2, 2);
  auto bad = p.batch;
  bad.domain.pop_back();
  EXPECT_EQ(error_of([&] { mada_domain_loss(bad, p.discs); }), ErrorCode::DimensionMismatch);
  bad = p.batch;
  bad.class_probs[1].push_back(0.1);
  EXPECT_EQ(error_of([&] { mada_domain_loss(bad, p.discs); }), ErrorCode::DimensionMismatch);
  bad = p.batch;
  bad.features[0].push_back(0.1);
  EXPECT_EQ(error_of([&] { mada_domain_loss(bad, p.discs); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(error_of([] { mada_domain_loss({}, {}); }), ErrorCode::DimensionMismatch);
}

TEST(GlobalObjective, ValuesAndErrors) {
  EXPECT_DOUBLE_EQ(global_objective(1.0, 0.4), 0.8);
  EXPECT_DOUBLE_EQ(global_objective(1.0, 0.4, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(global_objective(0.3, 2.0, 1.5), -2.7);
  EXPECT_EQ(error_of([] { global_objective(1.0, 1.0, -0.1); }), ErrorCode::InvalidArgument);
}

TEST(GlobalObjective, DiscriminatorGradientIsMinusLambdaTimesDomainGradient) {
  constexpr double kLambda = 0.5, kStep = 1e-6;
  for_all(50, 7, [](Rng& rng, std::size_t) {
    auto p = random_problem(rng, 6, 3, 4);
    const double l_y = rng.uniform(0.1, 2.0);
    const std::size_t k = rng.below(3), j = rng.below(4);
    auto at = [&](double w) {
      auto discs = p.discs;
      discs[k].weights[j] = w;
      return std::pair{global_objective(l_y, mada_domain_loss(p.batch, discs), kLambda), mada_domain_loss(p.batch, discs)};
    };
    const double w0 = p.discs[k].weights[j];
    const auto [c_plus, d_plus] = at(w0 + kStep);
    const auto [c_minus, d_minus] = at(w0 - kStep);
    const double dc = (c_plus - c_minus) / (2 * kStep);
    const double dd = (d_plus - d_minus) / (2 * kStep);
    // Closed-form gradient of the mean BCE with respect to one weight.
    double analytic = 0.0;
    for (std::size_t i = 0; i < p.batch.features.size(); ++i) {
      std::vector<double> x = p.batch.features[i];
      for (auto& v : x) v *= p.batch.class_probs[i][k];
      analytic += (p.discs[k](x) - p.batch.domain[i]) * x[j];
    }
    analytic /= p.batch.features.size();
    ASSERT_NEAR(dd, analytic, 1e-6 * std::max(1.0, std::abs(analytic)));
    ASSERT_NEAR(dc, -kLambda * dd, 1e-5 * std::max(std::abs(dc), 1e-8));
  });
}
