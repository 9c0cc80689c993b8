#include <gtest/gtest.h>

#include "test_support.hpp"

namespace cmrg {
namespace {

SyntheticScenario small(double gamma = 0.2, std::uint64_t seed = 3) {
  SyntheticScenario s;
  s.nTrain = 60;
  s.nValidation = 40;
  s.nTest = 50;
  s.d = 120;
  s.p = 13;
  s.gamma = gamma;
  s.seed = seed;
  return s;
}

TEST(Simulate, DefaultShapes) {
  SyntheticScenario s;
  s.nTest = 10;  // keep the test light; other splits at their defaults
  const SyntheticDataset ds = generate(s);
  EXPECT_EQ(ds.train.X.rows(), 400);
  EXPECT_EQ(ds.train.X.cols(), 1000);
  EXPECT_EQ(ds.train.Y.cols(), 13);
  EXPECT_EQ(ds.validation.X.rows(), 400);
  EXPECT_EQ(ds.trueW.rows(), 1000);
  EXPECT_EQ(ds.trueG.rows(), 400);
  EXPECT_EQ(buildExpansion(ds.groups).expandedDim(), 1090);
}

TEST(Simulate, TrueCoefficients) {
  const Matrix w = simulationCoefficients(1000, 13);
  EXPECT_DOUBLE_EQ(w(0, 0), -1.0);
  EXPECT_NEAR(w(1, 0), 0.99005, 1e-5);
  EXPECT_DOUBLE_EQ(w(1, 0), std::exp(-0.01));
  EXPECT_EQ(w.bottomRows(900).norm(), 0.0);
  EXPECT_EQ(w.row(7), w.row(7)(0) * Eigen::RowVectorXd::Ones(13));
}

TEST(Simulate, NoiseScales) {
  const Vector geo = noiseScalesFor(NoiseMode::Geometric, std::sqrt(2.0), 13);
  EXPECT_NEAR(geo(12), 0.17678, 1e-5);
  EXPECT_DOUBLE_EQ(geo(0), std::sqrt(2.0));
  const Vector uni = noiseScalesFor(NoiseMode::Uniform, 2.0, 4);
  EXPECT_TRUE(uni.isApproxToConstant(2.0));
  // Other task counts extend the same exponent pattern.
  EXPECT_NEAR(noiseScalesFor(NoiseMode::Geometric, 1.0, 20)(16), 0.0625, 1e-15);
}

TEST(Simulate, ObservationIdentity) {
  const SyntheticDataset ds = generate(small());
  const Matrix noise = ds.train.Y - ds.train.X * ds.trueW - ds.trueG;
  EXPECT_EQ(ds.train.signal, ds.train.X * ds.trueW);
  EXPECT_LT(noise.cwiseAbs().maxCoeff(), 8.0);
  EXPECT_EQ(ds.test.signal, ds.test.X * ds.trueW);
}

TEST(Simulate, GrossErrorCountMagnitudeAndSigns) {
  SyntheticScenario s = small(0.2);
  s.nTrain = 400;
  s.delta = 7.0;
  const SyntheticDataset ds = generate(s);
  const double mag = 7.0 * s.sigmaMax;
  Index count = 0, positive = 0;
  for (Index j = 0; j < ds.trueG.cols(); ++j)
    for (Index i = 0; i < ds.trueG.rows(); ++i) {
      const double v = ds.trueG(i, j);
      if (v == 0.0) continue;
      ++count;
      positive += v > 0;
      ASSERT_DOUBLE_EQ(std::abs(v), mag);
    }
  EXPECT_EQ(count, 1040);
  EXPECT_NEAR(static_cast<double>(positive) / count, 0.5, 0.05);
  EXPECT_EQ(generate(small(0.0)).trueG.norm(), 0.0);
}

TEST(Simulate, DesignCovariance) {
  SyntheticScenario s = small(0.0);
  s.nTrain = 100000;
  s.nValidation = 1;
  s.nTest = 1;
  s.d = 5;
  s.p = 1;
  const Matrix x = generate(s).train.X;
  const Matrix centred = x.rowwise() - x.colwise().mean();
  const Matrix cov = centred.transpose() * centred / static_cast<double>(x.rows() - 1);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j) EXPECT_NEAR(cov(i, j), i == j ? 1.0 : 0.5, 0.02);
}

TEST(Simulate, NoiseLevelsPerTask) {
  SyntheticScenario s = small(0.0);
  s.nValidation = 10000;
  s.noiseMode = NoiseMode::Geometric;
  const SyntheticDataset ds = generate(s);
  const Matrix z = ds.validation.Y - ds.validation.X * ds.trueW;
  for (Index j = 0; j < z.cols(); ++j) {
    const double mean = z.col(j).mean();
    const double sd = std::sqrt((z.col(j).array() - mean).square().sum() / (z.rows() - 1));
    EXPECT_NEAR(sd / ds.noiseScales(j), 1.0, 0.05) << "task " << j + 1;
  }
}

TEST(Simulate, ReproducibleAndSplitIndependent) {
  const SyntheticDataset a = generate(small()), b = generate(small());
  EXPECT_EQ(a.train.X, b.train.X);
  EXPECT_EQ(a.train.Y, b.train.Y);
  EXPECT_EQ(a.test.Y, b.test.Y);
  EXPECT_EQ(a.trueG, b.trueG);
  SyntheticScenario bigger = small();
  bigger.nTest = 500;
  const SyntheticDataset c = generate(bigger);
  EXPECT_EQ(a.train.Y, c.train.Y);
  EXPECT_EQ(a.validation.Y, c.validation.Y);
  EXPECT_NE(generate(small(0.2, 4)).train.X, a.train.X);
}

TEST(Simulate, ValidatesScenario) {
  SyntheticScenario s = small();
  s.gamma = 1.5;
  EXPECT_THROW(generate(s), InvalidArgument);
  s = small();
  s.delta = 1.0;
  EXPECT_THROW(generate(s), InvalidArgument);
  s = small();
  s.sigmaMax = 0.0;
  EXPECT_THROW(generate(s), InvalidArgument);
}

TEST(CorruptMissing, Boundaries) {
  std::mt19937_64 rng(1);
  const Matrix y = testing::randomMatrix(20, 5, rng);
  const MissingCorruption none = corruptMissing(y, 0.0, 1);
  EXPECT_EQ(none.corrupted, y);
  EXPECT_FALSE(none.mask.any());
  const MissingCorruption all = corruptMissing(y, 1.0, 1);
  EXPECT_EQ(all.corrupted.norm(), 0.0);
  EXPECT_EQ(all.impliedG, -y);
  const MissingCorruption some = corruptMissing(y, 0.1, 2);
  EXPECT_EQ(some.mask.count(), 10);
  for (Index j = 0; j < y.cols(); ++j)
    for (Index i = 0; i < y.rows(); ++i) {
      if (some.mask(i, j)) {
        EXPECT_EQ(some.corrupted(i, j), 0.0);
        EXPECT_EQ(some.corrupted(i, j) - some.impliedG(i, j), y(i, j));
      } else {
        EXPECT_EQ(some.corrupted(i, j), y(i, j));
        EXPECT_EQ(some.impliedG(i, j), 0.0);
      }
    }
  EXPECT_THROW(corruptMissing(y, -0.1, 1), InvalidArgument);
}

}  // namespace
}  // namespace cmrg
