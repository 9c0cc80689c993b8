#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cmrg/cmrg.hpp"

namespace cmrg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode { kOk = 0, kUsage = 2, kNotConverged = 3, kNumerical = 4 };

/// Raised for a run that completed but did not converge.
class NotConverged : public Error {
 public:
  using Error::Error;
};

inline json realOrString(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

inline void ensureDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "'");
}

inline std::string joinPath(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

inline void writeJson(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline void writeText(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
}

inline json scenarioJson(const SyntheticScenario& s) {
  return json{{"n_train", s.nTrain}, {"n_val", s.nValidation}, {"n_test", s.nTest},
              {"d", s.d},            {"p", s.p},                {"sigma_max", s.sigmaMax},
              {"noise_mode", noiseModeName(s.noiseMode)},     {"gamma", s.gamma},
              {"delta", s.delta},    {"seed", s.seed}};
}

/// Dimension overrides shared by simulate and bench.
struct DimensionFlags {
  Index nTrain = 400, nVal = 400, nTest = 10000, d = 1000, p = 13;

  void attach(CLI::App* app) {
    app->add_option("--n-train", nTrain, "Training samples")->check(CLI::PositiveNumber);
    app->add_option("--n-val", nVal, "Validation samples")->check(CLI::PositiveNumber);
    app->add_option("--n-test", nTest, "Test samples")->check(CLI::PositiveNumber);
    app->add_option("--d", d, "Features")->check(CLI::PositiveNumber);
    app->add_option("--p", p, "Tasks")->check(CLI::PositiveNumber);
  }
  void apply(SyntheticScenario& s) const {
    s.nTrain = nTrain;
    s.nValidation = nVal;
    s.nTest = nTest;
    s.d = d;
    s.p = p;
  }
};

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  double sigmaMax = std::sqrt(2.0);
  std::string noiseMode = "uniform";
  double gamma = 0.0;
  double delta = 5.0;
  std::uint64_t seed = 1;
  std::string outDir;
  DimensionFlags dims;
};

inline void cmdSimulate(const SimulateArgs& a, std::ostream& out) {
  SyntheticScenario sc;
  a.dims.apply(sc);
  sc.sigmaMax = a.sigmaMax;
  sc.noiseMode = parseNoiseMode(a.noiseMode);
  sc.gamma = a.gamma;
  sc.delta = a.delta;
  sc.seed = a.seed;
  const auto ds = generate(sc);
  ensureDir(a.outDir);
  writeMatrixCsv(joinPath(a.outDir, "X_train.csv"), ds.train.X);
  writeMatrixCsv(joinPath(a.outDir, "Y_train.csv"), ds.train.Y);
  writeMatrixCsv(joinPath(a.outDir, "X_val.csv"), ds.validation.X);
  writeMatrixCsv(joinPath(a.outDir, "Y_val.csv"), ds.validation.Y);
  writeMatrixCsv(joinPath(a.outDir, "X_test.csv"), ds.test.X);
  writeMatrixCsv(joinPath(a.outDir, "Y_test.csv"), ds.test.Y);
  writeMatrixCsv(joinPath(a.outDir, "W_true.csv"), ds.trueW);
  writeMatrixCsv(joinPath(a.outDir, "G_true.csv"), ds.trueG);
  writeGroupFile(joinPath(a.outDir, "groups.txt"), ds.groups);
  json noise = json::array();
  for (Index j = 0; j < ds.noiseScales.size(); ++j) noise.push_back(ds.noiseScales(j));
  json meta = {{"command", "simulate"}, {"scenario", scenarioJson(sc)}, {"noise_scales", noise}};
  writeJson(joinPath(a.outDir, "scenario.json"), meta);
  out << "wrote dataset to " << a.outDir << '\n';
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitArgs {
  std::string model;
  std::string x, y, groups;
  std::optional<double> lambda, rho;
  double sigma = 1.0;
  double tau = 1.618;
  double tol = 1e-6;
  int maxIter = 5000;
  bool grid = false;
  std::string valX, valY;
  int kfold = 0;
  double gridStep = 1.0;
  double gridRange = 5.0;
  std::uint64_t seed = 1;
  std::string outDir = ".";
  bool allowNonConverged = false;
};

inline json residualHistoryJson(const FitResult& r) {
  json h = json::array();
  for (const auto& rep : r.residualHistory) h.push_back({rep.primal1, rep.primal2, rep.iterateChange});
  return h;
}

inline void cmdFit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  const ModelKind model = parseModel(a.model);
  if (!hasGrossError(model) && a.rho) {
    err << "warning: --rho is ignored for model " << a.model << '\n';
  }
  const Matrix x = readMatrixCsv(a.x);
  const Matrix y = readMatrixCsv(a.y);
  if (x.rows() != y.rows()) {
    throw DimensionError("X has " + std::to_string(x.rows()) + " rows but Y has " + std::to_string(y.rows()));
  }
  const GroupSet groups = a.groups.empty() ? GroupSet::singletons(x.cols()) : readGroupFile(a.groups, x.cols());
  RegressionProblem problem(x, y, groups);

  SolverOptions opt;
  opt.sigma = a.sigma;
  opt.tau = a.tau;
  opt.tolerance = a.tol;
  opt.maxIterations = a.maxIter;
  const bool squared = model == ModelKind::OMR || model == ModelKind::OMRG;
  opt.lossKind = squared ? LossKind::SquaredFrobenius : LossKind::CalibratedL21;
  opt.rho = hasGrossError(model) ? a.rho.value_or(1.0) : SolverOptions::rhoSentinel();
  opt.grossErrorEnabled = hasGrossError(model) && !std::isinf(opt.rho);
  opt.lambda = a.lambda.value_or(1.0);
  opt.validate();

  json config = {{"command", "fit"},      {"model", modelName(model)}, {"x", a.x},
                 {"y", a.y},              {"groups", a.groups},        {"sigma", a.sigma},
                 {"tau", a.tau},          {"tol", a.tol},              {"max_iter", a.maxIter},
                 {"grid", a.grid},        {"out_dir", a.outDir},       {"allow_nonconverged", a.allowNonConverged}};

  FitResult fit;
  json selection;
  if (a.grid) {
    const HyperGrid grid = makePaperGrid(x.cols(), y.cols(), a.gridStep, a.gridRange);
    SelectionOptions so;
    so.solver = opt;
    SelectionResult sel;
    if (a.kfold > 0) {
      if (!a.valX.empty() || !a.valY.empty()) throw InvalidArgument("--kfold cannot be combined with --val-x/--val-y");
      sel = selectByKFold(model, problem, grid, a.kfold, a.seed, so);
    } else {
      if (a.valX.empty() || a.valY.empty()) throw InvalidArgument("--grid needs --val-x and --val-y, or --kfold K");
      sel = selectOnValidation(model, problem, readMatrixCsv(a.valX), readMatrixCsv(a.valY), grid, so);
    }
    fit = sel.bestFit;
    json table = json::array();
    for (const auto& c : sel.scoreTable) {
      table.push_back({{"lambda", c.lambda}, {"rho", realOrString(c.rho)}, {"score", c.score},
                       {"converged", c.converged}, {"iterations", c.iterations}});
    }
    selection = {{"method", a.kfold > 0 ? "kfold" : "holdout"}, {"folds", a.kfold}, {"seed", a.seed},
                 {"grid_step", a.gridStep}, {"grid_range", a.gridRange}, {"score_table", table},
                 {"non_converged_cells", sel.nonConverged}};
    config["grid_step"] = a.gridStep;
    config["grid_range"] = a.gridRange;
    config["kfold"] = a.kfold;
    config["val_x"] = a.valX;
    config["val_y"] = a.valY;
    config["seed"] = a.seed;
  } else {
    if (!a.lambda) throw InvalidArgument("--lambda is required unless --grid is given");
    fit = fitModel(model, problem, opt);
  }
  config["lambda"] = fit.options.lambda;
  config["rho"] = realOrString(fit.options.rho);

  ensureDir(a.outDir);
  writeMatrixCsv(joinPath(a.outDir, "W.csv"), fit.W);
  writeMatrixCsv(joinPath(a.outDir, "G.csv"), fit.G);
  json result = {{"config", config},
                 {"lambda", fit.options.lambda},
                 {"rho", realOrString(fit.options.rho)},
                 {"objective", fit.objectiveValue},
                 {"iterations", fit.iterations},
                 {"converged", fit.converged},
                 {"residual_history", residualHistoryJson(fit)}};
  if (!selection.is_null()) result["selection"] = selection;
  writeJson(joinPath(a.outDir, "fit.json"), result);
  out << modelName(model) << ": lambda " << fit.options.lambda << ", rho " << fit.options.rho << ", objective "
      << fit.objectiveValue << ", " << fit.iterations << " iterations, "
      << (fit.converged ? "converged" : "not converged") << '\n';
  if (!fit.converged && !a.allowNonConverged) {
    throw NotConverged("fit did not converge within " + std::to_string(a.maxIter) +
                       " iterations (pass --allow-nonconverged to accept)");
  }
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string modelFile;
  std::string x, y, g;
  std::string noiseScales, wTrue, gTrue;
  std::string outDir = ".";
};

/// A fit directory, its fit.json, or a W.csv.
inline std::string coefficientPath(const std::string& modelFile) {
  fs::path p(modelFile);
  if (fs::is_directory(p)) return (p / "W.csv").string();
  if (p.extension() == ".json") return (p.parent_path() / "W.csv").string();
  return p.string();
}

inline void cmdPredict(const PredictArgs& a, std::ostream& out) {
  const Matrix w = readMatrixCsv(coefficientPath(a.modelFile));
  const Matrix x = readMatrixCsv(a.x);
  if (x.cols() != w.rows()) {
    throw DimensionError("X has " + std::to_string(x.cols()) + " columns but the model has " +
                         std::to_string(w.rows()) + " coefficient rows");
  }
  const Matrix yhat = x * w;
  ensureDir(a.outDir);
  writeMatrixCsv(joinPath(a.outDir, "Yhat.csv"), yhat);
  json config = {{"command", "predict"}, {"model_file", a.modelFile}, {"x", a.x},          {"y", a.y},
                 {"g", a.g},             {"noise_scales", a.noiseScales}, {"w_true", a.wTrue}, {"g_true", a.gTrue},
                 {"out_dir", a.outDir}};
  if (!a.g.empty() && a.y.empty()) throw InvalidArgument("--g needs --y (the observations to correct)");
  if (!a.y.empty()) {
    const Matrix y = readMatrixCsv(a.y);
    requireSameShape(y, yhat, "predict: --y");
    json metrics;
    metrics["Pre.Err"] = predictionError(x, y, w);
    const auto aad = averagedAbsoluteDistance(y, yhat);
    metrics["AAD"] = aad.overall;
    metrics["AAD.per_task"] = aad.perTask;
    if (y.cols() % 3 == 0) {
      const auto mje = meanJointError(y, yhat, y.cols() / 3);
      metrics["Mean.Joint.Err"] = mje.overall;
      metrics["Mean.Joint.Err.per_joint"] = mje.perJoint;
    }
    if (!a.noiseScales.empty()) {
      const Matrix s = readMatrixCsv(a.noiseScales);
      if (s.size() != y.cols()) throw DimensionError("--noise-scales needs one value per task");
      metrics["Adj.Pre.Err"] = adjustedPredictionError(x, y, w, Eigen::Map<const Vector>(s.data(), s.size()));
    }
    if (!a.wTrue.empty()) metrics["Est.Err.W"] = estimationErrorW(readMatrixCsv(a.wTrue), w);
    if (!a.g.empty()) {
      const Matrix g = readMatrixCsv(a.g);
      requireSameShape(y, g, "predict: --g");
      writeMatrixCsv(joinPath(a.outDir, "Ycorrected.csv"), Matrix(y - g));
      if (!a.gTrue.empty()) {
        const Matrix gt = readMatrixCsv(a.gTrue);
        metrics["Est.Err.G"] = estimationErrorG(gt, g);
        metrics["Rec.Rate.G"] = recoveryRateG(gt, g);
      }
    }
    writeJson(joinPath(a.outDir, "metrics.json"), {{"config", config}, {"metrics", metrics}});
    out << "Pre.Err " << metrics["Pre.Err"].get<double>() << '\n';
  } else {
    writeJson(joinPath(a.outDir, "predict.json"), {{"config", config}});
  }
  out << "wrote predictions to " << a.outDir << '\n';
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchArgs {
  int table = 0;
  std::string sweep;
  std::optional<int> replicates;
  std::string scale = "desk";
  std::uint64_t seed = 1;
  std::string outDir = ".";
  int jobs = 1;
  std::vector<std::string> models;
  std::string target = "signal";
  BenchSolverSettings solver;
  bool quiet = false;
  DimensionFlags dims;
};

inline ExperimentPlan benchPlan(const BenchArgs& a) {
  if ((a.table != 0) == !a.sweep.empty()) throw InvalidArgument("give exactly one of --table or --sweep");
  const BenchScale scale = parseBenchScale(a.scale);
  SyntheticScenario sc;
  a.dims.apply(sc);
  ExperimentPlan plan;
  if (a.table == 1) {
    plan = table1Plan(scale, sc);
  } else if (a.table == 2) {
    plan = table2Plan(scale, sc);
  } else if (a.table == 3) {
    plan = table3Plan(scale, sc);
  } else if (a.sweep == "gamma") {
    plan = gammaSweepPlan(scale, sc);
  } else if (a.sweep == "delta") {
    plan = deltaSweepPlan(scale, sc);
  } else {
    throw InvalidArgument("unknown --table/--sweep (expected 1, 2, 3, gamma or delta)");
  }
  if (a.replicates) plan.replicates = *a.replicates;
  if (!a.models.empty()) {
    plan.models.clear();
    for (const auto& m : a.models) plan.models.push_back(parseModel(m));
  }
  plan.baseSeed = a.seed;
  plan.jobs = a.jobs;
  plan.solver = a.solver;
  if (a.target == "signal") {
    plan.target = EvaluationTarget::Signal;
  } else if (a.target == "observed") {
    plan.target = EvaluationTarget::Observed;
  } else {
    throw InvalidArgument("unknown --target '" + a.target + "' (expected signal or observed)");
  }
  return plan;
}

inline json planJson(const ExperimentPlan& p) {
  json models = json::array();
  for (auto m : p.models) models.push_back(modelName(m));
  return {{"command", "bench"},
          {"title", p.title},
          {"scenario", scenarioJson(p.scenario)},
          {"sweep", sweepName(p.sweep)},
          {"sweep_values", p.sweepValues},
          {"models", models},
          {"replicates", p.replicates},
          {"lambda_grid", p.grid.lambdaValues},
          {"rho_grid", p.grid.rhoValues},
          {"base_seed", p.baseSeed},
          {"target", targetName(p.target)},
          {"solver",
           {{"sigma_calibrated", p.solver.sigmaCalibrated},
            {"sigma_squared", p.solver.sigmaSquared},
            {"tau", p.solver.tau},
            {"tol", p.solver.tolerance},
            {"max_iter", p.solver.maxIterations}}}};
}

inline void cmdBench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  const ExperimentPlan plan = benchPlan(a);
  ensureDir(a.outDir);
  writeJson(joinPath(a.outDir, "bench.json"), planJson(plan));
  const SummaryTable t = runPlan(plan, nullptr, a.quiet ? nullptr : &err);
  std::ostringstream csv;
  writeSummaryCsv(csv, t);
  writeText(joinPath(a.outDir, "summary.csv"), csv.str());
  const std::string text = formatSummaryText(t);
  writeText(joinPath(a.outDir, "summary.txt"), text);
  out << text;
  if (!a.quiet) {
    err << "cost per (model, value): mean seconds, mean iterations over the grid\n";
    for (const auto& c : t.costs) {
      err << "  " << modelName(c.model) << ' ' << sweepName(t.sweep) << '=' << c.sweepValue << ": "
          << c.meanSeconds << " s, " << c.meanIterations << " iterations, " << c.meanNonConvergedCells
          << " non-converged cells\n";
    }
  }
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Parses `args` (without the program name) and runs one command.
inline int runCli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                  std::ostream& err = std::cerr) {
  CLI::App app{"Calibrated multivariate regression with gross errors", "cmrg"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic train/validation/test dataset");
  simulate->add_option("--sigma-max", sim.sigmaMax, "Largest task noise level");
  simulate->add_option("--noise-mode", sim.noiseMode, "uniform (D0) or geometric (D1)")
      ->check(CLI::IsMember({"uniform", "geometric"}));
  simulate->add_option("--gamma", sim.gamma, "Fraction of corrupted training entries");
  simulate->add_option("--delta", sim.delta, "Gross error magnitude in units of sigma-max");
  simulate->add_option("--seed", sim.seed, "Random seed");
  simulate->add_option("--out-dir", sim.outDir, "Output directory")->required();
  sim.dims.attach(simulate);

  FitArgs fit;
  auto* fitCmd = app.add_subcommand("fit", "Fit a model at one (lambda, rho) or select them on a grid");
  fitCmd->add_option("--model", fit.model, "cmrg, omrg, cmr, omr or rr")->required();
  fitCmd->add_option("--x", fit.x, "Design matrix CSV")->required();
  fitCmd->add_option("--y", fit.y, "Observation matrix CSV")->required();
  fitCmd->add_option("--groups", fit.groups, "Group file (default: singletons)");
  fitCmd->add_option("--lambda", fit.lambda, "Group penalty weight");
  fitCmd->add_option("--rho", fit.rho, "Gross error penalty weight (gross-error models only)");
  fitCmd->add_option("--sigma", fit.sigma, "ADMM barrier parameter");
  fitCmd->add_option("--tau", fit.tau, "Dual step factor, in (0, (1+sqrt(5))/2)");
  fitCmd->add_option("--tol", fit.tol, "Relative residual tolerance");
  fitCmd->add_option("--max-iter", fit.maxIter, "Iteration cap");
  fitCmd->add_flag("--grid", fit.grid, "Select lambda and rho on the standard grid");
  fitCmd->add_option("--val-x", fit.valX, "Validation design for --grid");
  fitCmd->add_option("--val-y", fit.valY, "Validation observations for --grid");
  fitCmd->add_option("--kfold", fit.kfold, "Use K-fold cross-validation for --grid")->check(CLI::Range(2, 1000000));
  fitCmd->add_option("--grid-step", fit.gridStep, "Exponent step of the grid");
  fitCmd->add_option("--grid-range", fit.gridRange, "Largest grid exponent");
  fitCmd->add_option("--seed", fit.seed, "Fold assignment seed for --kfold");
  fitCmd->add_option("--out-dir", fit.outDir, "Output directory");
  fitCmd->add_flag("--allow-nonconverged", fit.allowNonConverged, "Exit 0 even if the iteration cap is hit");

  PredictArgs pred;
  auto* predict = app.add_subcommand("predict", "Predict with a fitted model and optionally score it");
  predict->add_option("--model-file", pred.modelFile, "Fit directory, fit.json or W.csv")->required();
  predict->add_option("--x", pred.x, "Design matrix CSV")->required();
  predict->add_option("--y", pred.y, "Observations to score against");
  predict->add_option("--g", pred.g, "Estimated gross errors (writes Ycorrected.csv = Y - G)");
  predict->add_option("--noise-scales", pred.noiseScales, "Per-task noise scales for Adj.Pre.Err");
  predict->add_option("--w-true", pred.wTrue, "True coefficients for Est.Err.W");
  predict->add_option("--g-true", pred.gTrue, "True gross errors for Est.Err.G and Rec.Rate.G");
  predict->add_option("--out-dir", pred.outDir, "Output directory");

  BenchArgs bench;
  bench.jobs = defaultJobs();
  auto* benchCmd = app.add_subcommand("bench", "Run a simulation study and summarize it");
  benchCmd->add_option("--table", bench.table, "Reproduce table 1, 2 or 3")->check(CLI::IsMember({1, 2, 3}));
  benchCmd->add_option("--sweep", bench.sweep, "gamma or delta")->check(CLI::IsMember({"gamma", "delta"}));
  benchCmd->add_option("--replicates", bench.replicates, "Replicates per cell")->check(CLI::PositiveNumber);
  benchCmd->add_option("--scale", bench.scale, "desk or full")->check(CLI::IsMember({"desk", "full"}));
  benchCmd->add_option("--seed", bench.seed, "Base seed");
  benchCmd->add_option("--out-dir", bench.outDir, "Output directory");
  benchCmd->add_option("--jobs", bench.jobs, "Worker threads (default: CMRG_JOBS or all cores)")
      ->check(CLI::PositiveNumber);
  benchCmd->add_option("--models", bench.models, "Subset of models to run");
  benchCmd->add_option("--target", bench.target, "signal (X W*) or observed (noisy Y) test target")
      ->check(CLI::IsMember({"signal", "observed"}));
  benchCmd->add_option("--sigma-calibrated", bench.solver.sigmaCalibrated, "ADMM sigma for l2,1-loss models");
  benchCmd->add_option("--sigma-squared", bench.solver.sigmaSquared, "ADMM sigma for squared-loss models");
  benchCmd->add_option("--tol", bench.solver.tolerance, "Solver tolerance");
  benchCmd->add_option("--max-iter", bench.solver.maxIterations, "Solver iteration cap");
  benchCmd->add_flag("--quiet", bench.quiet, "No progress output");
  bench.dims.attach(benchCmd);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (simulate->parsed()) cmdSimulate(sim, out);
    if (fitCmd->parsed()) cmdFit(fit, out, err);
    if (predict->parsed()) cmdPredict(pred, out);
    if (benchCmd->parsed()) cmdBench(bench, out, err);
  } catch (const NotConverged& e) {
    err << "error: " << e.what() << '\n';
    return kNotConverged;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kNotConverged;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kNumerical;
  }
  return kOk;
}

}  // namespace cmrg::cli
