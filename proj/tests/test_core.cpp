#include <gtest/gtest.h>

#include <numeric>

#include "test_support.hpp"

namespace cmrg {
namespace {

using testing::randomMatrix;

TEST(GroupSet, RejectsUncoveredIndexNamingIt) {
  try {
    GroupSet(4, {{0, 1}, {3}});
    FAIL() << "expected rejection";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("index 3"), std::string::npos) << e.what();
  }
}

TEST(GroupSet, RejectsMalformedGroups) {
  EXPECT_THROW(GroupSet(3, {{0, 1, 2}, {}}), InvalidArgument);
  EXPECT_THROW(GroupSet(3, {{0, 1, 1, 2}}), InvalidArgument);
  EXPECT_THROW(GroupSet(3, {{2, 1, 0}}), InvalidArgument);
  EXPECT_THROW(GroupSet(3, {{0, 1, 3}}), InvalidArgument);
  EXPECT_THROW(GroupSet(3, {}), InvalidArgument);
}

TEST(GroupSet, DuplicateGroupsRaiseCounts) {
  const GroupExpansion e(GroupSet(2, {{0, 1}, {0, 1}}));
  EXPECT_EQ(e.expandedDim(), 4);
  EXPECT_EQ(e.duplicationCounts(), (std::vector<int>{2, 2}));
}

TEST(Expansion, OverlapExample) {
  const GroupExpansion e = buildExpansion(GroupSet(3, {{0, 1}, {1, 2}}));
  EXPECT_EQ(e.expandedDim(), 4);
  EXPECT_EQ(e.rowMap(), (std::vector<Index>{0, 1, 1, 2}));
  EXPECT_EQ(e.duplicationCounts(), (std::vector<int>{1, 2, 1}));
  EXPECT_EQ(e.blockStarts(), (std::vector<Index>{0, 2, 4}));
  EXPECT_FALSE(e.isIdentity());

  Matrix w(3, 2);
  w << 1, 2, 3, 4, 5, 6;
  Matrix expected(4, 2);
  expected << 1, 2, 3, 4, 3, 4, 5, 6;
  EXPECT_EQ(applyExpansion(e, w), expected);

  Matrix u(4, 1);
  u << 1, 2, 3, 4;
  Matrix back(3, 1);
  back << 1, 5, 4;
  EXPECT_EQ(applyExpansionTranspose(e, u), back);
}

TEST(Expansion, DisjointSingletonsAreIdentity) {
  const GroupExpansion e = buildExpansion(GroupSet(2, {{0}, {1}}));
  EXPECT_TRUE(e.isIdentity());
  EXPECT_EQ(e.expandedDim(), 2);
  std::mt19937_64 rng(3);
  const Matrix w = randomMatrix(2, 3, rng);
  EXPECT_EQ(applyExpansion(e, w), w);
  EXPECT_EQ(applyExpansionTranspose(e, w), w);
}

TEST(Expansion, SimulationStructure) {
  const GroupExpansion e = buildExpansion(simulationGroups(1000));
  EXPECT_EQ(e.expandedDim(), 1090);
  EXPECT_EQ(e.blockCount(), 19u + 900u);
  // Indices 6..95 (1-based) sit in two of the 10-blocks.
  for (Index j = 0; j < 1000; ++j) {
    const int want = (j >= 5 && j <= 94) ? 2 : 1;
    ASSERT_EQ(e.duplicationCounts()[static_cast<std::size_t>(j)], want) << "index " << j + 1;
  }
}

TEST(Expansion, InvariantsOnRandomGroupSets) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Index d = 3 + trial % 7;
    std::vector<std::vector<Index>> groups;
    std::bernoulli_distribution take(0.4);
    for (int g = 0; g < 4; ++g) {
      std::vector<Index> members;
      for (Index j = 0; j < d; ++j)
        if (take(rng)) members.push_back(j);
      if (!members.empty()) groups.push_back(members);
    }
    for (Index j = 0; j < d; ++j) groups.push_back({j});
    const GroupExpansion e(GroupSet(d, groups));
    const auto& counts = e.duplicationCounts();
    EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), Index{0}), e.expandedDim());
    const Matrix w = randomMatrix(d, 3, rng);
    const Matrix dw = e.duplicationDiagonal().asDiagonal() * w;
    EXPECT_LE((applyExpansionTranspose(e, applyExpansion(e, w)) - dw).norm(), 1e-12 * dw.norm());
    // Penalty through source groups equals the sum over expanded blocks.
    const double viaGroups = groupPenalty(e, w);
    const double viaBlocks = blockPenalty(e, applyExpansion(e, w));
    EXPECT_NEAR(viaGroups, viaBlocks, 1e-12 * viaBlocks);
    EXPECT_EQ(e.blockStarts().back(), e.expandedDim());
  }
}

TEST(Expansion, DimensionMismatch) {
  const GroupExpansion e(GroupSet(3, {{0, 1}, {1, 2}}));
  EXPECT_THROW(applyExpansion(e, Matrix::Zero(4, 1)), DimensionError);
  EXPECT_THROW(applyExpansionTranspose(e, Matrix::Zero(3, 1)), DimensionError);
  EXPECT_THROW(groupPenalty(e, Matrix::Zero(2, 1)), DimensionError);
}

TEST(GroupPenalty, KnownValues) {
  const GroupExpansion overlap(GroupSet(3, {{0, 1}, {1, 2}}));
  Matrix w(3, 1);
  w << 3, 4, 0;
  EXPECT_DOUBLE_EQ(groupPenalty(overlap, w), 9.0);
  EXPECT_DOUBLE_EQ(groupPenalty(overlap, Matrix::Zero(3, 2)), 0.0);

  const GroupExpansion single(GroupSet::singletons(4));
  Matrix v(4, 1);
  v << 1, -2, 3, -4;
  EXPECT_DOUBLE_EQ(groupPenalty(single, v), 10.0);
}

TEST(Norms, MatrixNorms) {
  Matrix a(2, 2);
  a << 3, -1, 4, 0;
  EXPECT_DOUBLE_EQ(norm21(a), 6.0);
  EXPECT_DOUBLE_EQ(norm1(a), 8.0);
  EXPECT_DOUBLE_EQ(normInf(a), 4.0);
}

TEST(RegressionProblem, ValidatesShapesAndValues) {
  EXPECT_THROW(RegressionProblem(Matrix::Zero(3, 2), Matrix::Zero(4, 1)), DimensionError);
  EXPECT_THROW(RegressionProblem(Matrix::Zero(3, 2), Matrix::Zero(3, 1), GroupSet::singletons(3)),
               DimensionError);
  Matrix bad = Matrix::Zero(3, 1);
  bad(1, 0) = std::nan("");
  EXPECT_THROW(RegressionProblem(Matrix::Zero(3, 2), bad), InvalidArgument);
  const RegressionProblem ok(Matrix::Zero(3, 2), Matrix::Zero(3, 4));
  EXPECT_EQ(ok.samples(), 3);
  EXPECT_EQ(ok.features(), 2);
  EXPECT_EQ(ok.tasks(), 4);
}

TEST(SolverOptions, TauBoundIsOpen) {
  EXPECT_THROW(makeSolverOptions(1, 1, 1.0, 1.62), InvalidArgument);
  EXPECT_NO_THROW(makeSolverOptions(1, 1, 1.0, 1.618));
  EXPECT_THROW(makeSolverOptions(1, 1, 1.0, kGoldenRatio), InvalidArgument);
  EXPECT_THROW(makeSolverOptions(1, 1, 1.0, 0.0), InvalidArgument);
}

TEST(SolverOptions, RangeChecks) {
  EXPECT_THROW(makeSolverOptions(-1, 1), InvalidArgument);
  EXPECT_THROW(makeSolverOptions(1, -1), InvalidArgument);
  EXPECT_THROW(makeSolverOptions(1, 1, 0.0), InvalidArgument);
  EXPECT_THROW(makeSolverOptions(1, 1, 1.0, 1.0, 0), InvalidArgument);
  EXPECT_THROW(makeSolverOptions(1, 1, 1.0, 1.0, 10, 0.0), InvalidArgument);
}

TEST(SolverOptions, RhoSentinelDisablesGrossError) {
  const SolverOptions o = makeSolverOptions(1, SolverOptions::rhoSentinel());
  EXPECT_TRUE(o.rhoIsSentinel());
  EXPECT_FALSE(o.grossErrorEnabled);
  EXPECT_FALSE(o.usesGrossError());
  SolverOptions bad = o;
  bad.grossErrorEnabled = true;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

}  // namespace
}  // namespace cmrg
