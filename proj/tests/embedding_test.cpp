#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sgadv/attacks.hpp"
#include "sgadv/data.hpp"
#include "sgadv/embedding.hpp"
#include "sgadv/metrics.hpp"
#include "test_support.hpp"

using namespace sgadv;
using sgadv::testing::random_gaussian;
using sgadv::testing::random_image;
using sgadv::testing::random_unit;

namespace {

double max_rel_error(const GradientImage& analytic, const GradientImage& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.values.size(); ++i) {
    const double g = analytic.values[i];
    if (std::abs(g) <= 1e-8) continue;
    worst = std::max(worst, std::abs(g - numeric.values[i]) / std::abs(g));
  }
  return worst;
}

}  // namespace

TEST(FeatureVector, NormalizeAndFromUnit) {
  const auto f = FeatureVector::normalize({3.0, 4.0});
  EXPECT_DOUBLE_EQ(f[0], 0.6);
  EXPECT_DOUBLE_EQ(f[1], 0.8);
  EXPECT_THROW(FeatureVector::normalize({0.0, 0.0}), std::domain_error);
  EXPECT_THROW(FeatureVector::from_unit({1.0, 1.0}), std::invalid_argument);
  EXPECT_NO_THROW(FeatureVector::from_unit({0.6, 0.8}));
  EXPECT_EQ((-f)[1], -0.8);
}

TEST(Embedder, HandComputedForward) {
  const ReferenceEmbedder m({3, 1, 1}, 2, 0, {0.5, -1.0, 0.25, 1.0, 0.5, -0.5}, {0.0, 0.0});
  const auto f = m.embed(Image({3, 1, 1}, {0.2, 0.4, 0.6}));
  const double a0 = std::tanh(-0.15), a1 = std::tanh(0.1);
  const double n = std::sqrt(a0 * a0 + a1 * a1);
  EXPECT_NEAR(f[0], a0 / n, 1e-15);
  EXPECT_NEAR(f[1], a1 / n, 1e-15);
}

TEST(Embedder, BiasEntersPreactivation) {
  const ReferenceEmbedder m({2, 1, 1}, 2, 0, {1.0, 0.0, 0.0, 1.0}, {0.25, -0.5});
  const auto z = m.preactivation(Image({2, 1, 1}, {0.5, 0.25}));
  EXPECT_DOUBLE_EQ(z[0], 0.75);
  EXPECT_DOUBLE_EQ(z[1], -0.25);
}

TEST(Embedder, SeededWeightsMatchReference) {
  const auto m = make_reference_embedder({4, 4, 1}, 3, 3);
  ASSERT_EQ(m.weights().size(), 48u);
  EXPECT_NEAR(m.weights()[0], 0.09014812248575063, 1e-15);
  EXPECT_NEAR(m.weights()[1], 0.25421719178364466, 1e-15);
  EXPECT_NEAR(m.weights()[47], -0.057933375037379484, 1e-15);
  for (double b : m.bias()) EXPECT_EQ(b, 0.0);
}

TEST(Embedder, RejectsBadShapes) {
  EXPECT_THROW(make_reference_embedder({4, 4, 1}, 1, 0), std::invalid_argument);
  EXPECT_THROW(ReferenceEmbedder({2, 1, 1}, 2, 0, {1.0, 0.0, 0.0}, {0.0, 0.0}), std::invalid_argument);
  const auto m = make_reference_embedder({4, 4, 1}, 3, 0);
  EXPECT_THROW(m.embed(Image::filled({4, 4, 3}, 0.5)), std::invalid_argument);
  const std::vector<double> short_cograd(2, 1.0);
  EXPECT_THROW(m.input_gradient(Image::filled({4, 4, 1}, 0.5), short_cograd), std::invalid_argument);
}

TEST(Embedder, UnitNormAndDeterministic) {
  const auto m = make_reference_embedder({10, 10, 3}, 32, 5);
  const auto twin = make_reference_embedder({10, 10, 3}, 32, 5);
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const Image x = random_image({10, 10, 3}, rng);
    const auto f = m.embed(x);
    double n = 0.0;
    for (double v : f.values()) n += v * v;
    ASSERT_NEAR(std::sqrt(n), 1.0, 1e-6);
    ASSERT_EQ(f, m.embed(x));
    ASSERT_EQ(f, twin.embed(x));
  }
}

TEST(Embedder, ZeroActivationIsADomainError) {
  const auto m = make_reference_embedder({4, 4, 1}, 3, 0);
  const Image black = Image::filled({4, 4, 1}, 0.0);
  EXPECT_THROW(m.embed(black), std::domain_error);
  const std::vector<double> c(3, 1.0);
  EXPECT_THROW(m.input_gradient(black, c), std::domain_error);
}

TEST(Embedder, ZeroCogradGivesZeroGradient) {
  const auto m = make_reference_embedder({6, 6, 1}, 4, 1);
  Rng rng(1);
  const auto g = m.input_gradient(random_image({6, 6, 1}, rng), std::vector<double>(4, 0.0));
  EXPECT_EQ(g.dims, (ImageDims{6, 6, 1}));
  for (double v : g.values) EXPECT_EQ(v, 0.0);
}

TEST(Embedder, ComponentJacobianMatchesFiniteDifferences) {
  const ImageDims dims{8, 8, 3};
  const auto m = make_reference_embedder(dims, 12, 9);
  Rng rng(10);
  for (int trial = 0; trial < 6; ++trial) {
    const Image x = random_image(dims, rng, 0.05, 0.95);
    for (int k : {0, 5, 11}) {
      std::vector<double> e(12, 0.0);
      e[k] = 1.0;
      const auto analytic = m.input_gradient(x, e);
      const auto numeric = finite_diff_gradient([&](const Image& v) { return m.embed(v)[k]; }, x, 1e-4);
      EXPECT_LE(max_rel_error(analytic, numeric), 1e-4) << "trial " << trial << " component " << k;
    }
  }
}

TEST(Embedder, ArbitraryCogradMatchesFiniteDifferences) {
  const ImageDims dims{9, 7, 1};
  const auto m = make_reference_embedder(dims, 6, 2);
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const Image x = random_image(dims, rng, 0.05, 0.95);
    const auto c = random_gaussian(6, rng);
    const auto analytic = m.input_gradient(x, c);
    const auto numeric = finite_diff_gradient(
        [&](const Image& v) {
          const auto f = m.embed(v);
          double s = 0.0;
          for (int i = 0; i < 6; ++i) s += c[i] * f[i];
          return s;
        },
        x, 1e-4);
    EXPECT_LE(max_rel_error(analytic, numeric), 1e-4);
  }
}

TEST(FiniteDiff, LinearAndConstantObjectives) {
  std::vector<double> px(5 * 4);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>(100 + 37 * i % 800) / 1024.0;
  const Image x({5, 4, 1}, px);
  const auto sum = finite_diff_gradient(
      [](const Image& v) {
        double s = 0.0;
        for (double p : v.pixels()) s += p;
        return s;
      },
      x, 1.0 / 1024.0);
  for (double g : sum.values) EXPECT_EQ(g, 1.0);

  const auto flat = finite_diff_gradient([](const Image&) { return 3.5; }, x, 1e-4);
  for (double g : flat.values) EXPECT_EQ(g, 0.0);
}

TEST(FiniteDiff, RejectsBadStep) {
  const Image x = Image::filled({2, 2, 1}, 0.5);
  auto j = [](const Image&) { return 0.0; };
  EXPECT_THROW(finite_diff_gradient(j, x, 0.0), std::invalid_argument);
  EXPECT_THROW(finite_diff_gradient(j, x, -1e-4), std::invalid_argument);
  EXPECT_THROW(finite_diff_gradient(j, Image::filled({2, 2, 1}, 1.0), 1e-4), std::domain_error);
}

TEST(Embedder, PreactivationsStayUnsaturated) {
  const ImageDims dims = DatasetParams{}.dims;
  const auto m = make_reference_embedder(dims, 16, 11);
  Rng rng(13);
  double sum = 0.0;
  std::size_t n = 0;
  for (int i = 0; i < 100; ++i) {
    for (double z : m.preactivation(random_image(dims, rng))) {
      sum += std::abs(z);
      ++n;
    }
  }
  EXPECT_LT(sum / static_cast<double>(n), 1.0);
}

TEST(Embedder, SameIdentityCloserThanDifferentIdentity) {
  const auto ds = generate_dataset({20, 2, {16, 16, 1}, 0.05, 31});
  const auto m = make_reference_embedder({16, 16, 1}, 16, 4);
  double genuine = 0.0, imposter = 0.0;
  int n = 0;
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 5; ++j) {
      const auto& a = ds.identities[i].samples;
      const auto& b = ds.identities[(i + j + 1) % 20].samples;
      genuine += dissimilarity(m.embed(a[0]), m.embed(a[1]));
      imposter += dissimilarity(m.embed(a[0]), m.embed(b[1]));
      ++n;
    }
  }
  EXPECT_EQ(n, 100);
  EXPECT_LT(genuine / n, imposter / n);
}

// Recorded bound for the desk-scale model; a change in the embedder or the
// generator that loosens it shows up here.
TEST(Embedder, SmallPerturbationsMoveDissimilarityBoundedly) {
  constexpr double kRecordedBound = 0.002;
  const ImageDims dims = DatasetParams{}.dims;
  const auto m = make_reference_embedder(dims, 16, 11);
  Rng rng(14);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Image x = random_image(dims, rng);
    const auto anchor = m.embed(random_image(dims, rng));
    std::vector<double> px(x.pixels().begin(), x.pixels().end());
    for (auto& p : px) p = std::clamp(p + (rng.below(2) ? 0.003 : -0.003), 0.0, 1.0);
    const Image y(dims, std::move(px));
    worst = std::max(worst, std::abs(dissimilarity(m.embed(x), anchor) - dissimilarity(m.embed(y), anchor)));
  }
  EXPECT_LE(worst, kRecordedBound) << "worst " << worst;
}

TEST(Embedder, SaveLoadReproducesEmbeddingsBitwise) {
  const auto dir = std::filesystem::temp_directory_path() / "sgadv_model_test";
  std::filesystem::create_directories(dir);
  const auto m = make_reference_embedder({6, 5, 3}, 7, 42);
  m.save(dir / "m.bin");
  const auto back = ReferenceEmbedder::load(dir / "m.bin");
  EXPECT_EQ(back.seed(), 42u);
  EXPECT_EQ(back.input_dims(), m.input_dims());
  EXPECT_EQ(back.feature_dim(), 7);
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const Image x = random_image({6, 5, 3}, rng);
    ASSERT_EQ(back.embed(x), m.embed(x));
  }

  {
    std::fstream f(dir / "m.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
  }
  EXPECT_THROW(ReferenceEmbedder::load(dir / "m.bin"), std::runtime_error);

  m.save(dir / "m.bin");
  std::filesystem::resize_file(dir / "m.bin", std::filesystem::file_size(dir / "m.bin") - 8);
  EXPECT_THROW(ReferenceEmbedder::load(dir / "m.bin"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST(Embedder, SgadvObjectiveGradientMatchesFiniteDifferences) {
  const ImageDims dims{10, 10, 1};
  const auto m = make_reference_embedder(dims, 8, 3);
  Rng rng(15);
  for (int trial = 0; trial < 5; ++trial) {
    const Image x = random_image(dims, rng, 0.05, 0.95);
    const auto target = random_unit(8, rng);
    const auto analytic = m.input_gradient(x, sgadv_loss_cograd(m.embed(x), target));
    const auto numeric =
        finite_diff_gradient([&](const Image& v) { return sgadv_loss(m.embed(v), target); }, x, 1e-4);
    EXPECT_LE(max_rel_error(analytic, numeric), 1e-4);
  }
}
