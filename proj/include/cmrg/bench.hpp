#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cmrg/io.hpp"
#include "cmrg/metrics.hpp"
#include "cmrg/parallel.hpp"
#include "cmrg/select.hpp"
#include "cmrg/simulate.hpp"
#include "cmrg/solvers.hpp"

namespace cmrg {

enum class SweepParameter { SigmaMax, Gamma, Delta, NoiseMode };

inline const char* sweepName(SweepParameter s) {
  switch (s) {
    case SweepParameter::SigmaMax: return "sigma_max";
    case SweepParameter::Gamma: return "gamma";
    case SweepParameter::Delta: return "delta";
    case SweepParameter::NoiseMode: return "noise_mode";
  }
  return "?";
}

/// What the test-set prediction metrics compare against: the noise-free
/// signal X̃W* or the noisy observations Ỹ.
enum class EvaluationTarget { Signal, Observed };

inline const char* targetName(EvaluationTarget t) { return t == EvaluationTarget::Signal ? "signal" : "observed"; }

/// Solver settings used for every grid cell. σ is chosen per loss because
/// the ℓ2,1 and squared losses live on different scales.
struct BenchSolverSettings {
  double sigmaCalibrated = 1.0;
  double sigmaSquared = 10.0;
  double tau = 1.618;
  double tolerance = 1e-4;
  int maxIterations = 2000;

  SolverOptions optionsFor(ModelKind model) const {
    SolverOptions o;
    const bool squared = model == ModelKind::OMR || model == ModelKind::OMRG;
    o.sigma = squared ? sigmaSquared : sigmaCalibrated;
    o.lossKind = squared ? LossKind::SquaredFrobenius : LossKind::CalibratedL21;
    o.tau = tau;
    o.tolerance = tolerance;
    o.maxIterations = maxIterations;
    return o;
  }
};

struct ExperimentPlan {
  std::string title;
  /// Template; the sweep parameter overrides one field and the seed is
  /// derived per replicate.
  SyntheticScenario scenario;
  SweepParameter sweep = SweepParameter::Gamma;
  /// Noise modes are encoded as 0 (uniform) and 1 (geometric).
  std::vector<double> sweepValues;
  std::vector<ModelKind> models;
  int replicates = 10;
  HyperGrid grid;
  std::uint64_t baseSeed = 1;
  BenchSolverSettings solver;
  EvaluationTarget target = EvaluationTarget::Signal;
  int jobs = 1;

  void validate() const {
    if (replicates < 1) throw InvalidArgument("ExperimentPlan: replicates must be at least 1");
    if (sweepValues.empty()) throw InvalidArgument("ExperimentPlan: sweep values are empty");
    if (models.empty()) throw InvalidArgument("ExperimentPlan: no models selected");
    grid.validate();
    for (double v : sweepValues) resolve(v).validate();
  }

  /// The template with the sweep value applied.
  SyntheticScenario resolve(double value) const {
    SyntheticScenario s = scenario;
    switch (sweep) {
      case SweepParameter::SigmaMax: s.sigmaMax = value; break;
      case SweepParameter::Gamma: s.gamma = value; break;
      case SweepParameter::Delta: s.delta = value; break;
      case SweepParameter::NoiseMode:
        if (value != 0.0 && value != 1.0) throw InvalidArgument("ExperimentPlan: noise mode values must be 0 or 1");
        s.noiseMode = value == 0.0 ? NoiseMode::Uniform : NoiseMode::Geometric;
        break;
    }
    return s;
  }
};

namespace detail {

inline std::uint64_t hashCombine(std::uint64_t h, std::uint64_t v) { return mixSeed(h ^ mixSeed(v)); }

inline std::uint64_t bitsOf(double v) {
  std::uint64_t b = 0;
  std::memcpy(&b, &v, sizeof b);
  return b;
}

}  // namespace detail

/// Hash of every scenario field except the seed.
inline std::uint64_t scenarioFingerprint(const SyntheticScenario& s) {
  std::uint64_t h = 0x5ce7a10fULL;
  for (Index v : {s.nTrain, s.nValidation, s.nTest, s.d, s.p}) h = detail::hashCombine(h, static_cast<std::uint64_t>(v));
  h = detail::hashCombine(h, detail::bitsOf(s.sigmaMax));
  h = detail::hashCombine(h, s.noiseMode == NoiseMode::Uniform ? 0 : 1);
  h = detail::hashCombine(h, detail::bitsOf(s.gamma));
  h = detail::hashCombine(h, detail::bitsOf(s.delta));
  return h;
}

/// Dataset seed of replicate r: baseSeed ⊕ hash(r, resolved scenario). Two
/// plans that resolve to the same scenario share their datasets.
inline std::uint64_t replicateSeed(std::uint64_t baseSeed, int replicate, const SyntheticScenario& s) {
  return baseSeed ^ detail::hashCombine(scenarioFingerprint(s), static_cast<std::uint64_t>(replicate));
}

/// Metric names in report order.
inline const std::vector<std::string>& benchMetrics() {
  static const std::vector<std::string> names{"Pre.Err", "Adj.Pre.Err", "Est.Err.W", "Est.Err.G", "Rec.Rate.G"};
  return names;
}

/// One model fitted on one replicate.
struct CellOutcome {
  bool ok = false;
  std::string error;
  std::map<std::string, double> metrics;
  double lambda = 0.0;
  double rho = 0.0;
  double seconds = 0.0;
  long iterations = 0;
  std::size_t nonConvergedCells = 0;
};

/// Evaluates a fitted model on a dataset's test split.
inline std::map<std::string, double> evaluateOnTest(ModelKind model, const SyntheticDataset& ds,
                                                    const FitResult& fit, EvaluationTarget target) {
  const Matrix& y = target == EvaluationTarget::Signal ? ds.test.signal : ds.test.Y;
  std::map<std::string, double> m;
  m["Pre.Err"] = predictionError(ds.test.X, y, fit.W);
  m["Adj.Pre.Err"] = adjustedPredictionError(ds.test.X, y, fit.W, ds.noiseScales);
  m["Est.Err.W"] = estimationErrorW(ds.trueW, fit.W);
  if (hasGrossError(model)) {
    m["Est.Err.G"] = estimationErrorG(ds.trueG, fit.G);
    m["Rec.Rate.G"] = recoveryRateG(ds.trueG, fit.G);
  }
  return m;
}

/// Selects (λ, ρ) on the validation split, then evaluates the selected fit.
inline CellOutcome runCell(ModelKind model, const SyntheticDataset& ds, const HyperGrid& grid,
                           const BenchSolverSettings& settings, EvaluationTarget target) {
  CellOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    RegressionProblem train(ds.train.X, ds.train.Y, ds.groups);
    SelectionOptions so;
    so.solver = settings.optionsFor(model);
    auto sel = selectOnValidation(model, train, ds.validation.X, ds.validation.Y, grid, so);
    out.metrics = evaluateOnTest(model, ds, sel.bestFit, target);
    out.lambda = sel.bestLambda;
    out.rho = sel.bestRho;
    out.nonConvergedCells = sel.nonConverged;
    for (const auto& c : sel.scoreTable) out.iterations += c.iterations;
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Reuses cells across plans. Keys cover everything a cell depends on.
class BenchCache {
 public:
  std::optional<CellOutcome> find(const std::string& key) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cells_.find(key);
    if (it == cells_.end()) return std::nullopt;
    return it->second;
  }
  void store(const std::string& key, CellOutcome cell) {
    std::lock_guard<std::mutex> lock(mutex_);
    cells_[key] = std::move(cell);
  }
  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return cells_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, CellOutcome> cells_;
};

inline std::string cellKey(const SyntheticScenario& s, std::uint64_t seed, ModelKind model,
                           const HyperGrid& grid, const BenchSolverSettings& b, EvaluationTarget target) {
  std::ostringstream k;
  k << std::hex << scenarioFingerprint(s) << '/' << seed << '/' << modelName(model) << '/' << targetName(target);
  std::uint64_t g = 0;
  for (double v : grid.lambdaValues) g = detail::hashCombine(g, detail::bitsOf(v));
  for (double v : grid.rhoValues) g = detail::hashCombine(g, detail::bitsOf(v));
  for (double v : {b.sigmaCalibrated, b.sigmaSquared, b.tau, b.tolerance}) g = detail::hashCombine(g, detail::bitsOf(v));
  g = detail::hashCombine(g, static_cast<std::uint64_t>(b.maxIterations));
  k << '/' << g;
  return k.str();
}

struct SummaryRow {
  ModelKind model = ModelKind::CMRG;
  double sweepValue = 0.0;
  std::string metric;
  double mean = 0.0;
  double sd = 0.0;
  int replicates = 0;
  int failures = 0;
};

/// Cost of one (model, sweep value) pair averaged over replicates.
struct CellCost {
  ModelKind model = ModelKind::CMRG;
  double sweepValue = 0.0;
  double meanSeconds = 0.0;
  double meanIterations = 0.0;
  double meanNonConvergedCells = 0.0;
};

struct SummaryTable {
  std::string title;
  SweepParameter sweep = SweepParameter::Gamma;
  std::vector<double> sweepValues;
  std::vector<ModelKind> models;
  int replicates = 0;
  std::vector<SummaryRow> rows;
  std::vector<CellCost> costs;
  /// "model sweep=value replicate=r: message" for each failed cell.
  std::vector<std::string> failures;

  const SummaryRow* find(ModelKind model, double value, const std::string& metric) const {
    for (const auto& r : rows) {
      if (r.model == model && r.sweepValue == value && r.metric == metric) return &r;
    }
    return nullptr;
  }

  /// Replicate mean; throws when the entry does not exist.
  double mean(ModelKind model, double value, const std::string& metric) const {
    const SummaryRow* r = find(model, value, metric);
    if (r == nullptr || r->replicates == 0) {
      throw InvalidArgument(std::string("SummaryTable: no ") + metric + " for " + modelName(model));
    }
    return r->mean;
  }
};

/// Runs every (sweep value, replicate) dataset through every model and
/// aggregates mean ± sample standard deviation over replicates. Failed cells
/// are recorded and excluded from the statistics. `cache` may be shared
/// across plans. `progress` receives one line per finished cell.
inline SummaryTable runPlan(const ExperimentPlan& plan, BenchCache* cache = nullptr,
                            std::ostream* progress = nullptr) {
  plan.validate();
  const std::size_t nv = plan.sweepValues.size(), nm = plan.models.size();
  const auto reps = static_cast<std::size_t>(plan.replicates);
  std::vector<CellOutcome> cells(nv * reps * nm);
  std::mutex progressMutex;

  parallelFor(nv * reps, plan.jobs, [&](std::size_t task) {
    const std::size_t vi = task / reps, r = task % reps;
    SyntheticScenario sc = plan.resolve(plan.sweepValues[vi]);
    sc.seed = replicateSeed(plan.baseSeed, static_cast<int>(r), sc);
    std::optional<SyntheticDataset> ds;
    for (std::size_t mi = 0; mi < nm; ++mi) {
      const ModelKind model = plan.models[mi];
      const std::string key = cellKey(sc, sc.seed, model, plan.grid, plan.solver, plan.target);
      std::optional<CellOutcome> hit = cache ? cache->find(key) : std::nullopt;
      CellOutcome cell;
      if (hit) {
        cell = *hit;
      } else {
        if (!ds) ds = generate(sc);
        cell = runCell(model, *ds, plan.grid, plan.solver, plan.target);
        if (cache) cache->store(key, cell);
      }
      if (progress) {
        std::lock_guard<std::mutex> lock(progressMutex);
        *progress << plan.title << ' ' << modelName(model) << ' ' << sweepName(plan.sweep) << '='
                  << plan.sweepValues[vi] << " replicate " << r + 1 << '/' << reps;
        if (cell.ok) {
          *progress << " Pre.Err " << cell.metrics.at("Pre.Err") << " lambda " << cell.lambda << " rho "
                    << cell.rho << " iterations " << cell.iterations << " seconds " << cell.seconds
                    << (hit ? " (cached)" : "");
        } else {
          *progress << " FAILED: " << cell.error;
        }
        *progress << '\n' << std::flush;
      }
      cells[(vi * reps + r) * nm + mi] = std::move(cell);
    }
  });

  SummaryTable t;
  t.title = plan.title;
  t.sweep = plan.sweep;
  t.sweepValues = plan.sweepValues;
  t.models = plan.models;
  t.replicates = plan.replicates;
  for (std::size_t mi = 0; mi < nm; ++mi) {
    for (std::size_t vi = 0; vi < nv; ++vi) {
      CellCost cost{plan.models[mi], plan.sweepValues[vi], 0.0, 0.0, 0.0};
      int okCount = 0, failed = 0;
      for (std::size_t r = 0; r < reps; ++r) {
        const auto& c = cells[(vi * reps + r) * nm + mi];
        if (!c.ok) {
          ++failed;
          std::ostringstream msg;
          msg << modelName(plan.models[mi]) << ' ' << sweepName(plan.sweep) << '=' << plan.sweepValues[vi]
              << " replicate=" << r + 1 << ": " << c.error;
          t.failures.push_back(msg.str());
          continue;
        }
        ++okCount;
        cost.meanSeconds += c.seconds;
        cost.meanIterations += static_cast<double>(c.iterations);
        cost.meanNonConvergedCells += static_cast<double>(c.nonConvergedCells);
      }
      if (okCount > 0) {
        cost.meanSeconds /= okCount;
        cost.meanIterations /= okCount;
        cost.meanNonConvergedCells /= okCount;
      }
      t.costs.push_back(cost);
      for (const auto& metric : benchMetrics()) {
        std::vector<double> xs;
        for (std::size_t r = 0; r < reps; ++r) {
          const auto& c = cells[(vi * reps + r) * nm + mi];
          if (!c.ok) continue;
          if (auto it = c.metrics.find(metric); it != c.metrics.end()) xs.push_back(it->second);
        }
        if (xs.empty() && failed == 0) continue;  // metric does not apply
        SummaryRow row{plan.models[mi], plan.sweepValues[vi], metric, 0.0, 0.0,
                       static_cast<int>(xs.size()), failed};
        if (!xs.empty()) {
          double sum = 0.0;
          for (double x : xs) sum += x;
          row.mean = sum / static_cast<double>(xs.size());
          if (xs.size() > 1) {
            double ss = 0.0;
            for (double x : xs) ss += (x - row.mean) * (x - row.mean);
            row.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
          }
        }
        t.rows.push_back(row);
      }
    }
  }
  return t;
}

/// model,sweep,value,metric,mean,sd,replicates,failures
inline void writeSummaryCsv(std::ostream& out, const SummaryTable& t) {
  out << "model,sweep,value,metric,mean,sd,replicates,failures\n";
  for (const auto& r : t.rows) {
    out << modelName(r.model) << ',' << sweepName(t.sweep) << ',' << formatReal(r.sweepValue) << ','
        << r.metric << ',' << formatReal(r.mean) << ',' << formatReal(r.sd) << ',' << r.replicates << ','
        << r.failures << '\n';
  }
}

namespace detail {

inline std::string sweepLabel(SweepParameter s, double v) {
  std::ostringstream o;
  switch (s) {
    case SweepParameter::SigmaMax:
      o << "sigma_max = ";
      if (std::abs(v - std::sqrt(2.0)) < 1e-12) {
        o << "sqrt(2)";
      } else {
        o << v;
      }
      break;
    case SweepParameter::Gamma: o << "gamma = " << v; break;
    case SweepParameter::Delta: o << "delta = " << v; break;
    case SweepParameter::NoiseMode: o << "noise = " << (v == 0.0 ? "D0 (uniform)" : "D1 (geometric)"); break;
  }
  return o.str();
}

inline std::string meanSd(double mean, double sd) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(4) << mean << "+-" << std::scientific << std::setprecision(1) << sd;
  return o.str();
}

}  // namespace detail

/// Text table: one section per sweep value, one row per model, one
/// "mean+-sd" column per metric ("--" where a metric does not apply).
inline std::string formatSummaryText(const SummaryTable& t) {
  std::ostringstream o;
  const auto& metrics = benchMetrics();
  o << t.title << " (" << t.replicates << " replicates, mean+-sd)\n";
  constexpr int kModelWidth = 6, kCellWidth = 18;
  for (double v : t.sweepValues) {
    o << '\n' << detail::sweepLabel(t.sweep, v) << '\n';
    o << std::left << std::setw(kModelWidth) << "Model";
    for (const auto& m : metrics) o << std::setw(kCellWidth) << m;
    o << '\n';
    for (ModelKind model : t.models) {
      o << std::setw(kModelWidth) << modelName(model);
      for (const auto& m : metrics) {
        const SummaryRow* r = t.find(model, v, m);
        std::string cell = "--";
        if (r != nullptr) cell = r->replicates > 0 ? detail::meanSd(r->mean, r->sd) : "failed";
        o << std::setw(kCellWidth) << cell;
      }
      o << '\n';
    }
  }
  if (!t.failures.empty()) {
    o << "\nFailed cells:\n";
    for (const auto& f : t.failures) o << "  " << f << '\n';
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// Preset plans
// ---------------------------------------------------------------------------

enum class BenchScale { Desk, Full };

inline BenchScale parseBenchScale(const std::string& s) {
  if (s == "desk") return BenchScale::Desk;
  if (s == "full") return BenchScale::Full;
  throw InvalidArgument("unknown scale '" + s + "' (expected desk or full)");
}

/// Desk: 10 replicates and 11-point grids. Full: 100 replicates and
/// 21-point grids.
inline ExperimentPlan basePlan(BenchScale scale, const SyntheticScenario& scenario) {
  ExperimentPlan p;
  p.scenario = scenario;
  p.replicates = scale == BenchScale::Desk ? 10 : 100;
  p.grid = makePaperGrid(scenario.d, scenario.p, scale == BenchScale::Desk ? 1.0 : 0.5, 5.0);
  p.models = {ModelKind::OMR, ModelKind::CMR, ModelKind::OMRG, ModelKind::CMRG};
  return p;
}

/// Equal task noise (D0), σ_max = √2, with and without gross errors.
inline ExperimentPlan table1Plan(BenchScale scale, SyntheticScenario scenario = {}) {
  scenario.noiseMode = NoiseMode::Uniform;
  auto p = basePlan(scale, scenario);
  p.title = "Table 1: D = D0, sigma_max = sqrt(2), delta = 5";
  p.sweep = SweepParameter::Gamma;
  p.sweepValues = {0.0, 0.2};
  return p;
}

/// Geometric task noise (D1), σ_max = √2, with and without gross errors.
inline ExperimentPlan table2Plan(BenchScale scale, SyntheticScenario scenario = {}) {
  scenario.noiseMode = NoiseMode::Geometric;
  auto p = basePlan(scale, scenario);
  p.title = "Table 2: D = D1, sigma_max = sqrt(2), delta = 5";
  p.sweep = SweepParameter::Gamma;
  p.sweepValues = {0.0, 0.2};
  return p;
}

/// D1, γ = 0.2, δ = 5, σ_max ∈ {√2, 2, 4}.
inline ExperimentPlan table3Plan(BenchScale scale, SyntheticScenario scenario = {}) {
  scenario.noiseMode = NoiseMode::Geometric;
  scenario.gamma = 0.2;
  auto p = basePlan(scale, scenario);
  p.title = "Table 3: D = D1, gamma = 0.2, delta = 5";
  p.sweep = SweepParameter::SigmaMax;
  p.sweepValues = {std::sqrt(2.0), 2.0, 4.0};
  return p;
}

/// D1, σ_max = √2, δ = 5, γ ∈ {0, 0.2, ..., 1}.
inline ExperimentPlan gammaSweepPlan(BenchScale scale, SyntheticScenario scenario = {}) {
  scenario.noiseMode = NoiseMode::Geometric;
  auto p = basePlan(scale, scenario);
  p.title = "Gamma sweep: D = D1, sigma_max = sqrt(2), delta = 5";
  p.sweep = SweepParameter::Gamma;
  p.sweepValues = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  return p;
}

/// D1, σ_max = √2, γ = 0.2, δ ∈ {5, 10, 50, 100}.
inline ExperimentPlan deltaSweepPlan(BenchScale scale, SyntheticScenario scenario = {}) {
  scenario.noiseMode = NoiseMode::Geometric;
  scenario.gamma = 0.2;
  auto p = basePlan(scale, scenario);
  p.title = "Delta sweep: D = D1, sigma_max = sqrt(2), gamma = 0.2";
  p.sweep = SweepParameter::Delta;
  p.sweepValues = {5.0, 10.0, 50.0, 100.0};
  return p;
}

}  // namespace cmrg
