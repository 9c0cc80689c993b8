#include <gtest/gtest.h>

#include "test_support.hpp"

namespace cmrg {
namespace {

using testing::randomMatrix;

TEST(PaperGrid, Values) {
  const HyperGrid g = makePaperGrid(1000, 13, 0.5, 5);
  EXPECT_EQ(g.lambdaValues.size(), 21u);
  EXPECT_EQ(g.rhoValues.size(), 21u);
  EXPECT_NEAR(g.lambdaValues[10], std::sqrt(std::log(1000.0)) + std::sqrt(13.0), 1e-12);
  EXPECT_NEAR(g.lambdaValues[10], 6.2339, 1e-4);
  EXPECT_DOUBLE_EQ(g.rhoValues.front(), std::pow(2.0, -5));
  EXPECT_DOUBLE_EQ(g.rhoValues.back(), 32.0);
  const HyperGrid small = makePaperGrid(1000, 13, 1, 1);
  EXPECT_EQ(small.rhoValues, (std::vector<double>{0.5, 1, 2}));
  EXPECT_THROW(makePaperGrid(10, 2, 0, 1), InvalidArgument);
}

TEST(HyperGrid, Validation) {
  EXPECT_THROW((HyperGrid{{}, {1}}).validate(), InvalidArgument);
  EXPECT_THROW((HyperGrid{{1, 1}, {1}}).validate(), InvalidArgument);
  EXPECT_THROW((HyperGrid{{2, 1}, {1}}).validate(), InvalidArgument);
  EXPECT_THROW((HyperGrid{{1}, {-1}}).validate(), InvalidArgument);
  EXPECT_NO_THROW((HyperGrid{{1, 2}, {0.5, std::numeric_limits<double>::infinity()}}).validate());
}

TEST(Folds, SizesAndAssignment) {
  EXPECT_EQ(foldSizes(10, 3), (std::vector<Index>{4, 3, 3}));
  const auto f = assignFolds(10, 3, 5);
  std::vector<int> counts(3, 0);
  for (Index v : f) ++counts[static_cast<std::size_t>(v)];
  EXPECT_EQ(counts, (std::vector<int>{4, 3, 3}));
  EXPECT_EQ(assignFolds(10, 3, 5), f);
  EXPECT_THROW(assignFolds(3, 4, 1), InvalidArgument);
}

TEST(ArgminCell, TieBreaksOnSmallestLambdaThenRho) {
  std::vector<GridCell> cells = {{2, 1, 1.0, true, 1}, {1, 2, 1.0, true, 1}, {1, 1, 1.0, true, 1},
                                 {0.5, 3, 2.0, true, 1}};
  EXPECT_EQ(detail::argminCell(cells), 2u);
}

struct Split {
  RegressionProblem train;
  Matrix valX, valY;
};

Split tinySplit(std::uint64_t seed) {
  SyntheticScenario s;
  s.nTrain = 40;
  s.nValidation = 40;
  s.nTest = 1;
  s.d = 30;
  s.p = 3;
  s.gamma = 0.1;
  s.seed = seed;
  const SyntheticDataset ds = generate(s);
  return {RegressionProblem(ds.train.X, ds.train.Y, ds.groups), ds.validation.X, ds.validation.Y};
}

SelectionOptions selectionOptions(bool warm, int jobs = 1) {
  SelectionOptions o;
  o.solver.tolerance = 1e-8;
  o.solver.maxIterations = 20000;
  o.warmStart = warm;
  o.jobs = jobs;
  return o;
}

TEST(SelectOnValidation, SingleCell) {
  const Split sp = tinySplit(1);
  const HyperGrid g{{1.5}, {0.7}};
  const SelectionResult r = selectOnValidation(ModelKind::CMRG, sp.train, sp.valX, sp.valY, g, selectionOptions(true));
  EXPECT_EQ(r.bestLambda, 1.5);
  EXPECT_EQ(r.bestRho, 0.7);
  ASSERT_EQ(r.scoreTable.size(), 1u);
  EXPECT_NEAR(r.scoreTable[0].score, detail::validationScore(sp.valX, sp.valY, r.bestFit.W), 1e-12);
}

// Selection equals an exhaustive cold refit of every cell.
TEST(SelectOnValidation, MatchesExhaustiveRefit) {
  const Split sp = tinySplit(2);
  const HyperGrid g{{0.5, 1, 2, 4, 8}, {0.25, 0.5, 1, 2}};
  const SelectionResult r = selectOnValidation(ModelKind::CMRG, sp.train, sp.valX, sp.valY, g, selectionOptions(true));
  double best = std::numeric_limits<double>::infinity();
  double bestL = 0, bestR = 0;
  std::size_t c = 0;
  for (double l : g.lambdaValues)
    for (double rho : g.rhoValues) {
      SolverOptions o = selectionOptions(false).solver;
      o.lambda = l;
      o.withRho(rho);
      const double score = detail::validationScore(sp.valX, sp.valY, fitCMRG(sp.train, o).W);
      EXPECT_NEAR(r.scoreTable[c].score, score, 1e-5 * score) << "lambda " << l << " rho " << rho;
      ++c;
      if (score < best) best = score, bestL = l, bestR = rho;
    }
  EXPECT_EQ(r.bestLambda, bestL);
  EXPECT_EQ(r.bestRho, bestR);
  for (const auto& cell : r.scoreTable) EXPECT_GE(cell.score, 0.0);
}

TEST(SelectOnValidation, TraversalDoesNotChangeSelection) {
  const Split sp = tinySplit(3);
  const HyperGrid g = makePaperGrid(30, 3, 1, 3);
  for (ModelKind m : {ModelKind::CMRG, ModelKind::OMR}) {
    const auto warm = selectOnValidation(m, sp.train, sp.valX, sp.valY, g, selectionOptions(true));
    const auto cold = selectOnValidation(m, sp.train, sp.valX, sp.valY, g, selectionOptions(false, 3));
    EXPECT_EQ(warm.bestLambda, cold.bestLambda) << modelName(m);
    EXPECT_EQ(warm.bestRho, cold.bestRho) << modelName(m);
    ASSERT_EQ(warm.scoreTable.size(), cold.scoreTable.size());
    for (std::size_t c = 0; c < warm.scoreTable.size(); ++c) {
      EXPECT_NEAR(warm.scoreTable[c].score, cold.scoreTable[c].score, 1e-5 * cold.scoreTable[c].score);
    }
    const auto again = selectOnValidation(m, sp.train, sp.valX, sp.valY, g, selectionOptions(true));
    EXPECT_EQ(again.bestFit.W, warm.bestFit.W);
  }
}

TEST(SelectOnValidation, SentinelColumnMatchesReducedModel) {
  const Split sp = tinySplit(4);
  const HyperGrid g{{1, 2}, {0.5, std::numeric_limits<double>::infinity()}};
  const auto r = selectOnValidation(ModelKind::CMRG, sp.train, sp.valX, sp.valY, g, selectionOptions(false));
  const auto cmr = selectOnValidation(ModelKind::CMR, sp.train, sp.valX, sp.valY, HyperGrid{{1, 2}, {1}},
                                      selectionOptions(false));
  EXPECT_NEAR(r.scoreTable[1].score, cmr.scoreTable[0].score, 1e-6 * cmr.scoreTable[0].score);
  EXPECT_NEAR(r.scoreTable[3].score, cmr.scoreTable[1].score, 1e-6 * cmr.scoreTable[1].score);
  // Gross-free models ignore the ρ grid.
  EXPECT_EQ(cmr.scoreTable.size(), 2u);
  EXPECT_TRUE(std::isinf(cmr.bestRho));
}

TEST(SelectOnValidation, AllCellsNonConvergedIsAnError) {
  const Split sp = tinySplit(5);
  SelectionOptions o = selectionOptions(true);
  o.solver.maxIterations = 2;
  o.solver.tolerance = 1e-14;
  EXPECT_THROW(selectOnValidation(ModelKind::CMRG, sp.train, sp.valX, sp.valY, HyperGrid{{1}, {1}}, o),
               ConvergenceError);
  EXPECT_THROW(selectOnValidation(ModelKind::CMRG, sp.train, sp.valX.leftCols(3), sp.valY, HyperGrid{{1}, {1}}, o),
               DimensionError);
}

TEST(SelectByKFold, SingleCellScoreIsSumOfFolds) {
  const Split sp = tinySplit(6);
  const HyperGrid g{{2.0}, {0.5}};
  const Index k = 4;
  const auto r = selectByKFold(ModelKind::CMRG, sp.train, g, k, 9, selectionOptions(true));
  const auto fold = assignFolds(sp.train.samples(), k, 9);
  double total = 0;
  for (Index f = 0; f < k; ++f) {
    std::vector<Index> in, out;
    for (Index i = 0; i < sp.train.samples(); ++i) (fold[static_cast<std::size_t>(i)] == f ? out : in).push_back(i);
    SolverOptions o = selectionOptions(true).solver;
    o.lambda = 2.0;
    o.withRho(0.5);
    const FitResult fit =
        fitCMRG(RegressionProblem(selectRows(sp.train.X(), in), selectRows(sp.train.Y(), in), sp.train.groups()), o);
    total += detail::validationScore(selectRows(sp.train.X(), out), selectRows(sp.train.Y(), out), fit.W);
  }
  EXPECT_NEAR(r.scoreTable[0].score, total, 1e-6 * total);
  EXPECT_EQ(r.bestLambda, 2.0);
}

TEST(SelectByKFold, LeaveOneOutAndDeterminism) {
  std::mt19937_64 rng(7);
  const RegressionProblem pb(randomMatrix(6, 3, rng), randomMatrix(6, 2, rng));
  const HyperGrid g{{0.5, 1}, {0.5, 1}};
  const auto a = selectByKFold(ModelKind::OMRG, pb, g, 6, 1, selectionOptions(true));
  const auto b = selectByKFold(ModelKind::OMRG, pb, g, 6, 1, selectionOptions(true));
  EXPECT_EQ(a.bestLambda, b.bestLambda);
  EXPECT_EQ(a.bestRho, b.bestRho);
  for (std::size_t c = 0; c < a.scoreTable.size(); ++c) EXPECT_EQ(a.scoreTable[c].score, b.scoreTable[c].score);
  EXPECT_THROW(selectByKFold(ModelKind::OMRG, pb, g, 7, 1), InvalidArgument);
  EXPECT_THROW(selectByKFold(ModelKind::OMRG, pb, g, 1, 1), InvalidArgument);
}

TEST(SelectOnValidation, RidgeGrid) {
  const Split sp = tinySplit(8);
  const auto r = selectOnValidation(ModelKind::RR, sp.train, sp.valX, sp.valY, HyperGrid{{0.1, 1, 10}, {1}});
  EXPECT_EQ(r.scoreTable.size(), 3u);
  EXPECT_EQ(r.nonConverged, 0u);
}

}  // namespace
}  // namespace cmrg
