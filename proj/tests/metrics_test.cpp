#include <gtest/gtest.h>

#include <cmath>

#include "sgadv/attacks.hpp"
#include "sgadv/metrics.hpp"
#include "test_support.hpp"

using namespace sgadv;
using sgadv::testing::angle_for;
using sgadv::testing::planar;
using sgadv::testing::random_image;
using sgadv::testing::random_unit;

namespace {

// Direct per-window evaluation, no running sums.
double naive_ssim(const Image& a, const Image& b, int win) {
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto d = a.dims();
  double total = 0.0;
  for (int c = 0; c < d.channels; ++c) {
    double sum = 0.0;
    int count = 0;
    for (int y0 = 0; y0 + win <= d.height; ++y0) {
      for (int x0 = 0; x0 + win <= d.width; ++x0) {
        const double n = win * win;
        double ma = 0, mb = 0;
        for (int y = y0; y < y0 + win; ++y)
          for (int x = x0; x < x0 + win; ++x) {
            ma += a.at(x, y, c);
            mb += b.at(x, y, c);
          }
        ma /= n;
        mb /= n;
        double va = 0, vb = 0, cov = 0;
        for (int y = y0; y < y0 + win; ++y)
          for (int x = x0; x < x0 + win; ++x) {
            const double da = a.at(x, y, c) - ma, db = b.at(x, y, c) - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
          }
        va /= n;
        vb /= n;
        cov /= n;
        sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
    total += sum / count;
  }
  return total / d.channels;
}

// Two-dimensional probe model: f(x) = normalize(tanh(x)).
std::shared_ptr<const ReferenceEmbedder> identity_model() {
  return std::make_shared<const ReferenceEmbedder>(ImageDims{2, 1, 1}, 2, 0, std::vector<double>{1, 0, 0, 1},
                                                   std::vector<double>{0, 0});
}

}  // namespace

TEST(Dissimilarity, Anchors) {
  const auto e0 = planar(0.0);
  EXPECT_EQ(dissimilarity(e0, e0), 0.0);
  EXPECT_DOUBLE_EQ(dissimilarity(e0, planar(std::acos(0.0))), 0.5);
  EXPECT_EQ(dissimilarity(e0, -e0), 1.0);
}

TEST(Dissimilarity, Errors) {
  const std::vector<double> a{1, 0}, b{1, 0, 0}, z{0, 0};
  EXPECT_THROW(dissimilarity(a, b), std::invalid_argument);
  EXPECT_THROW(dissimilarity(a, z), std::domain_error);
}

TEST(Dissimilarity, SymmetricBoundedAndMatchesLoss) {
  Rng rng(21);
  for (int i = 0; i < 1000; ++i) {
    const auto n = 2 + rng.below(30);
    const auto a = random_unit(n, rng), b = random_unit(n, rng);
    const double d = dissimilarity(a, b);
    ASSERT_EQ(d, dissimilarity(b, a));
    ASSERT_GE(d, 0.0);
    ASSERT_LE(d, 1.0);
    ASSERT_NEAR(dissimilarity(a, a), 0.0, 1e-9);
    ASSERT_EQ(sgadv_loss(a, b), d);
  }
}

TEST(Linf, Basics) {
  const Image a = Image::filled({3, 3, 1}, 0.5);
  EXPECT_EQ(linf_distance(a, a), 0.0);
  std::vector<double> px(9, 0.5);
  px[4] = 0.53;
  EXPECT_NEAR(linf_distance(a, Image({3, 3, 1}, px)), 0.03, 1e-15);
  EXPECT_THROW(linf_distance(a, Image::filled({3, 3, 3}, 0.5)), std::invalid_argument);
}

TEST(Ssim, IdenticalIsExactlyOne) {
  Rng rng(3);
  for (int c : {1, 3}) {
    for (int i = 0; i < 10; ++i) {
      const Image a = random_image({8 + static_cast<int>(rng.below(9)), 8 + static_cast<int>(rng.below(9)), c}, rng);
      ASSERT_EQ(ssim(a, a), 1.0);
    }
  }
  EXPECT_EQ(ssim(Image::filled({8, 8, 1}, 0.0), Image::filled({8, 8, 1}, 0.0)), 1.0);
}

TEST(Ssim, ConstantWindowMatchesFormula) {
  const double expected = (0.6 + 1e-4) / (0.61 + 1e-4);
  EXPECT_NEAR(ssim(Image::filled({8, 8, 1}, 0.5), Image::filled({8, 8, 1}, 0.6)), expected, 1e-9);
  EXPECT_NEAR(expected, 0.983609, 1e-6);
}

TEST(Ssim, MatchesNaiveWindowing) {
  Rng rng(4);
  for (int i = 0; i < 8; ++i) {
    const ImageDims d{8 + static_cast<int>(rng.below(8)), 8 + static_cast<int>(rng.below(8)), i % 2 ? 3 : 1};
    const Image a = random_image(d, rng);
    std::vector<double> px(a.pixels().begin(), a.pixels().end());
    for (auto& p : px) p = std::clamp(p + rng.uniform(-0.2, 0.2), 0.0, 1.0);
    const Image b(d, std::move(px));
    const double s = ssim(a, b);
    EXPECT_NEAR(s, naive_ssim(a, b, 8), 1e-12);
    EXPECT_DOUBLE_EQ(s, ssim(b, a));
    EXPECT_LE(std::abs(s), 1.0);
  }
}

TEST(Ssim, Errors) {
  EXPECT_THROW(ssim(Image::filled({7, 9, 1}, 0.5), Image::filled({7, 9, 1}, 0.5)), std::invalid_argument);
  EXPECT_THROW(ssim(Image::filled({9, 9, 1}, 0.5), Image::filled({9, 9, 3}, 0.5)), std::invalid_argument);
}

TEST(Asr, ThreeOfNine) {
  auto model = identity_model();
  AuthSystem sys(model, "probe");
  const Image probe({2, 1, 1}, {0.5, 0.0});  // f = e_0
  AttackAttempt attempt{probe, {}};
  for (int k = 0; k < 9; ++k) {
    const double d = k < 3 ? 0.01 * (k + 1) : 0.2 + 0.05 * k;
    const std::string key = "s" + std::to_string(k);
    sys.enroll_template(key, planar(angle_for(d)));
    attempt.enrollments.push_back(key);
  }
  sys.set_calibration({0.1, 0.0});
  EXPECT_DOUBLE_EQ(attempt_success(attempt, sys), 3.0 / 9.0);

  const std::vector<AttackAttempt> all{attempt, AttackAttempt{probe, {"s0", "s1"}}};
  EXPECT_DOUBLE_EQ(asr(all, sys), (3.0 / 9.0 + 1.0) / 2.0);
  EXPECT_THROW(attempt_success(AttackAttempt{probe, {"nobody"}}, sys), std::out_of_range);
}

TEST(Asr, AllWithinThresholdIsOne) {
  auto model = identity_model();
  AuthSystem sys(model, "probe");
  const Image probe({2, 1, 1}, {0.5, 0.0});
  AttackAttempt attempt{probe, {}};
  for (int k = 0; k < 5; ++k) {
    sys.enroll_template("t" + std::to_string(k), planar(angle_for(0.001 * k)));
    attempt.enrollments.push_back("t" + std::to_string(k));
  }
  sys.set_calibration({0.05, 0.0});
  EXPECT_EQ(attempt_success(attempt, sys), 1.0);
}

TEST(Median, OddEvenEmpty) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_THROW(median({}), std::invalid_argument);
}
