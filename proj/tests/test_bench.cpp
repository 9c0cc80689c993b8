#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "test_support.hpp"

namespace cmrg {
namespace {

SyntheticScenario tinyScenario() {
  SyntheticScenario s;
  s.nTrain = 40;
  s.nValidation = 40;
  s.nTest = 60;
  s.d = 25;
  s.p = 3;
  return s;
}

ExperimentPlan tinyPlan(std::vector<ModelKind> models, std::vector<double> gammas, int replicates) {
  ExperimentPlan p;
  p.title = "tiny";
  p.scenario = tinyScenario();
  p.sweep = SweepParameter::Gamma;
  p.sweepValues = std::move(gammas);
  p.models = std::move(models);
  p.replicates = replicates;
  p.grid = makePaperGrid(25, 3, 1, 2);
  p.solver.tolerance = 1e-6;
  p.solver.maxIterations = 5000;
  return p;
}

TEST(Bench, SingleReplicateHasZeroSpread) {
  const SummaryTable t = runPlan(tinyPlan({ModelKind::RR}, {0.0}, 1));
  ASSERT_EQ(t.rows.size(), 3u);  // Pre.Err, Adj.Pre.Err, Est.Err.W
  for (const auto& r : t.rows) {
    EXPECT_EQ(r.sd, 0.0);
    EXPECT_EQ(r.replicates, 1);
    EXPECT_EQ(r.failures, 0);
    EXPECT_GT(r.mean, 0.0);
  }
  EXPECT_TRUE(t.failures.empty());
}

TEST(Bench, ZeroCorruptionSentinelMatchesCmr) {
  ExperimentPlan p = tinyPlan({ModelKind::CMR, ModelKind::CMRG}, {0.0}, 2);
  p.grid.rhoValues = {std::numeric_limits<double>::infinity()};
  const SummaryTable t = runPlan(p);
  EXPECT_NEAR(t.mean(ModelKind::CMRG, 0.0, "Est.Err.W"), t.mean(ModelKind::CMR, 0.0, "Est.Err.W"), 1e-6);
  EXPECT_NEAR(t.mean(ModelKind::CMRG, 0.0, "Pre.Err"), t.mean(ModelKind::CMR, 0.0, "Pre.Err"), 1e-6);
}

TEST(Bench, DeterministicAndModelSetIndependent) {
  ExperimentPlan p = tinyPlan({ModelKind::OMR, ModelKind::CMRG}, {0.0, 0.2}, 2);
  p.jobs = 2;
  const SummaryTable a = runPlan(p);
  p.jobs = 1;
  const SummaryTable b = runPlan(p);
  std::ostringstream ca, cb;
  writeSummaryCsv(ca, a);
  writeSummaryCsv(cb, b);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(formatSummaryText(a), formatSummaryText(b));

  const SummaryTable only = runPlan(tinyPlan({ModelKind::CMRG}, {0.0, 0.2}, 2));
  for (double g : {0.0, 0.2}) {
    for (const auto& m : benchMetrics()) {
      EXPECT_EQ(only.mean(ModelKind::CMRG, g, m), a.mean(ModelKind::CMRG, g, m)) << m;
    }
  }
}

TEST(Bench, ReplicateSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  SyntheticScenario s = tinyScenario();
  for (double g : {0.0, 0.2, 0.4}) {
    s.gamma = g;
    for (int r = 0; r < 100; ++r) seen.insert(replicateSeed(1, r, s));
  }
  EXPECT_EQ(seen.size(), 300u);
  SyntheticScenario other = s;
  other.seed = 99;  // the template seed does not enter the fingerprint
  EXPECT_EQ(replicateSeed(1, 3, s), replicateSeed(1, 3, other));
  EXPECT_NE(replicateSeed(1, 3, s), replicateSeed(2, 3, s));
}

TEST(Bench, CacheIsSharedAcrossPlans) {
  BenchCache cache;
  const ExperimentPlan p = tinyPlan({ModelKind::CMR}, {0.2}, 2);
  const SummaryTable a = runPlan(p, &cache);
  EXPECT_EQ(cache.size(), 2u);
  ExperimentPlan q = p;
  q.sweep = SweepParameter::Delta;  // same resolved scenario, reached differently
  q.scenario.gamma = 0.2;
  q.sweepValues = {5.0};
  const SummaryTable b = runPlan(q, &cache);
  EXPECT_EQ(cache.size(), 2u);
  EXPECT_EQ(a.mean(ModelKind::CMR, 0.2, "Pre.Err"), b.mean(ModelKind::CMR, 5.0, "Pre.Err"));
}

TEST(Bench, FailedCellsAreRecorded) {
  ExperimentPlan p = tinyPlan({ModelKind::CMRG}, {0.2}, 1);
  p.grid.lambdaValues = {0.05};
  p.grid.rhoValues = {0.05};
  p.solver.maxIterations = 2;
  p.solver.tolerance = 1e-15;
  const SummaryTable t = runPlan(p);
  ASSERT_EQ(t.failures.size(), 1u);
  EXPECT_NE(formatSummaryText(t).find("failed"), std::string::npos);
  EXPECT_THROW(t.mean(ModelKind::CMRG, 0.2, "Pre.Err"), InvalidArgument);
}

TEST(Bench, PresetPlans) {
  const ExperimentPlan t1 = table1Plan(BenchScale::Desk);
  EXPECT_EQ(t1.replicates, 10);
  EXPECT_EQ(t1.grid.lambdaValues.size(), 11u);
  EXPECT_EQ(t1.sweepValues, (std::vector<double>{0.0, 0.2}));
  EXPECT_EQ(t1.scenario.noiseMode, NoiseMode::Uniform);
  EXPECT_EQ(t1.models.size(), 4u);
  const ExperimentPlan t2 = table2Plan(BenchScale::Full);
  EXPECT_EQ(t2.replicates, 100);
  EXPECT_EQ(t2.grid.rhoValues.size(), 21u);
  EXPECT_EQ(t2.scenario.noiseMode, NoiseMode::Geometric);
  const ExperimentPlan t3 = table3Plan(BenchScale::Desk);
  EXPECT_EQ(t3.sweep, SweepParameter::SigmaMax);
  EXPECT_EQ(t3.sweepValues, (std::vector<double>{std::sqrt(2.0), 2.0, 4.0}));
  EXPECT_DOUBLE_EQ(t3.scenario.gamma, 0.2);
  EXPECT_EQ(gammaSweepPlan(BenchScale::Desk).sweepValues.size(), 6u);
  EXPECT_EQ(deltaSweepPlan(BenchScale::Desk).sweepValues, (std::vector<double>{5, 10, 50, 100}));
  ExperimentPlan bad = t1;
  bad.replicates = 0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Bench, SummaryCsvLayout) {
  const SummaryTable t = runPlan(tinyPlan({ModelKind::OMRG}, {0.2}, 1));
  std::ostringstream csv;
  writeSummaryCsv(csv, t);
  std::istringstream lines(csv.str());
  std::string header, row;
  std::getline(lines, header);
  EXPECT_EQ(header, "model,sweep,value,metric,mean,sd,replicates,failures");
  int count = 0;
  while (std::getline(lines, row)) {
    EXPECT_EQ(row.rfind("OMRG,gamma,0.20000000000000001,", 0), 0u) << row;
    ++count;
  }
  EXPECT_EQ(count, 5);
}

}  // namespace
}  // namespace cmrg
