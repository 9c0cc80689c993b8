#pragma once

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cmrg/core.hpp"
#include "cmrg/prox.hpp"

namespace cmrg {

/// Iterates of the proximal ADMM: loss split Z, expanded coefficients Υ,
/// gross errors G, coefficients W and the two multiplier blocks.
struct SolverState {
  Matrix Z;
  Matrix Upsilon;
  Matrix G;
  Matrix W;
  Matrix Lambda1;
  Matrix Lambda2;
  int iteration = 0;
};

/// Per-iteration extras handed to an observer.
struct IterationTrace {
  /// Right-hand side and solution of the half-step W update.
  Matrix halfRhs;
  Matrix halfW;
  /// Right-hand side of the full-step W update.
  Matrix fullRhs;
  ResidualReport residuals;
};

using IterationObserver = std::function<void(const SolverState&, const IterationTrace&)>;

/// Everything derived from (X, groups) that stays fixed across fits: the
/// group expansion and the factorization of XᵀX + D. Build once and share
/// across a hyperparameter grid.
class FitContext {
 public:
  FitContext(const RegressionProblem& problem, NormalEquationSolver::Config config = {})
      : expansion_(problem.groups()), solver_(problem.X(), expansion_, config) {}

  const GroupExpansion& expansion() const { return expansion_; }
  const NormalEquationSolver& solver() const { return solver_; }

 private:
  GroupExpansion expansion_;
  NormalEquationSolver solver_;
};

struct EngineOutput {
  FitResult result;
  SolverState state;
};

namespace detail {

inline double objectiveFor(const RegressionProblem& problem, const GroupExpansion& e,
                           const Matrix& w, const Matrix& g, LossKind loss, double lambda,
                           double rho, bool withGross, bool fullSquare) {
  Matrix r = problem.Y();
  r.noalias() -= problem.X() * w;
  if (withGross) r -= g;
  double value = 0.0;
  if (loss == LossKind::CalibratedL21) {
    value = norm21(r);
  } else {
    value = (fullSquare ? 1.0 : 0.5) * r.squaredNorm();
  }
  value += lambda * groupPenalty(e, w);
  if (withGross) value += rho * norm1(g);
  return value;
}

}  // namespace detail

/// Proximal multi-block ADMM for
///   min_{W,G} loss(Y - XW - G) + λ Σ_g ‖W_g*‖_F + ρ‖G‖₁
/// over the split  Z + G + XW = Y,  Υ = CW.
///
/// The loss is ‖·‖_{2,1} (calibrated) or ½‖·‖_F². With the gross-error block
/// disabled G stays zero and the two W updates coincide.
///
/// Multipliers enter the augmented Lagrangian as -⟨Λ₁, Z+G+XW-Y⟩ - ⟨Λ₂, Υ-CW⟩,
/// so at a solution Λ₁ ∈ ∂loss(Z), Λ₁ ∈ ρ∂‖G‖₁, Λ₂ ∈ λ∂R_G'(Υ) and
/// XᵀΛ₁ = CᵀΛ₂ holds at every iterate.
class AdmmEngine {
 public:
  AdmmEngine(const RegressionProblem& problem, const FitContext& context)
      : problem_(problem), context_(context) {
    if (context.solver().samples() != problem.samples() ||
        context.solver().features() != problem.features()) {
      throw DimensionError("AdmmEngine: fit context was built for a different design matrix");
    }
  }

  /// Initial point Z⁰ = Y, Υ⁰ = 0, G⁰ = 0, Λ⁰ = 0, hence W⁰ = 0.
  SolverState initialState() const {
    const Index n = problem_.samples(), d = problem_.features(), p = problem_.tasks();
    SolverState s;
    s.Z = problem_.Y();
    s.Upsilon = Matrix::Zero(context_.expansion().expandedDim(), p);
    s.G = Matrix::Zero(n, p);
    s.W = Matrix::Zero(d, p);
    s.Lambda1 = Matrix::Zero(n, p);
    s.Lambda2 = Matrix::Zero(context_.expansion().expandedDim(), p);
    return s;
  }

  /// Dual-feasible point at W = 0, G = 0: Z = Y, Λ₁ the loss gradient at Y
  /// and Λ₂ = C·D⁻¹·XᵀΛ₁ (so CᵀΛ₂ = XᵀΛ₁). A good start for large λ.
  SolverState nullModelState(LossKind loss) const {
    SolverState s = initialState();
    const Matrix& y = problem_.Y();
    if (loss == LossKind::CalibratedL21) {
      for (Index j = 0; j < y.cols(); ++j) {
        const double nj = y.col(j).norm();
        if (nj > 0.0) s.Lambda1.col(j) = y.col(j) / nj;
      }
    } else {
      s.Lambda1 = y;
    }
    Matrix g = problem_.X().transpose() * s.Lambda1;
    const auto& e = context_.expansion();
    s.Lambda2 = applyExpansion(e, e.duplicationDiagonal().cwiseInverse().asDiagonal() * g);
    return s;
  }

  /// Runs the iteration. `lambda` and `rho` are the internal weights
  /// actually used in the augmented Lagrangian; `start` warm-starts from a
  /// previous state (its multipliers must satisfy XᵀΛ₁ = CᵀΛ₂).
  EngineOutput run(const SolverOptions& opt, double lambda, double rho, bool withGross,
                   const SolverState* start = nullptr,
                   const IterationObserver& observer = nullptr) const {
    const auto& e = context_.expansion();
    const auto& solver = context_.solver();
    const Matrix& x = problem_.X();
    const Matrix& y = problem_.Y();
    const double sigma = opt.sigma;
    const double step = opt.tau * sigma;
    const double yScale = 1.0 + y.norm();

    SolverState s = start != nullptr ? *start : initialState();
    if (!withGross) s.G.setZero();
    s.iteration = 0;

    Matrix xw;
    xw.noalias() = x * s.W;
    Matrix cw = applyExpansion(e, s.W);

    FitResult result;
    result.options = opt;
    result.residualHistory.reserve(static_cast<std::size_t>(std::min(opt.maxIterations, 20000)));

    Matrix delta;
    for (int k = 0; k < opt.maxIterations; ++k) {
      // Z: prox of the loss at Y - XW - G + Λ₁/σ.
      delta = y - xw - s.G + s.Lambda1 / sigma;
      if (opt.lossKind == LossKind::CalibratedL21) {
        s.Z = shrinkColumnsL2(delta, 1.0 / sigma);
      } else {
        s.Z = proxSquaredLoss(delta, sigma);
      }
      // Υ: block shrinkage at CW + Λ₂/σ.
      s.Upsilon = shrinkBlocksFrobenius(cw + s.Lambda2 / sigma, e.blockStarts(), lambda / sigma);

      // Half-step W: A W = Xᵀ(Y - Z - G) + CᵀΥ.
      PendingSolve half = solver.beginSplit(applyExpansionTranspose(e, s.Upsilon), y - s.Z - s.G);

      IterationTrace trace;
      if (observer) {
        trace.halfRhs = solver.rhsOf(half);
        trace.halfW = solver.halfSolution(half);
      }

      Matrix oldW = s.W;
      Matrix oldG = s.G;
      SolvedStep full;
      if (withGross) {
        // G: soft-threshold Y - XW^{k+½} - Z + Λ₁/σ at ρ/σ.
        delta = y - half.image - s.Z + s.Lambda1 / sigma;
        s.G = softThresholdElementwise(delta, rho / sigma);
        // Full-step W: A W = Xᵀ(Y - Z - G_new) + CᵀΥ = b + Xᵀ(G_old - G_new).
        Matrix shift = oldG - s.G;
        full = solver.finish(half, &shift);
      } else {
        full = solver.finish(half, nullptr);
      }
      s.W = std::move(full.W);
      xw = std::move(full.XW);
      cw = applyExpansion(e, s.W);

      Matrix r1 = s.Z + xw - y;
      if (withGross) r1 += s.G;
      Matrix r2 = s.Upsilon - cw;
      s.Lambda1 -= step * r1;
      s.Lambda2 -= step * r2;
      s.iteration = k + 1;

      ResidualReport rep;
      rep.primal1 = r1.norm() / yScale;
      rep.primal2 = r2.norm() / (1.0 + cw.norm());
      const double change = std::sqrt((s.W - oldW).squaredNorm() + (s.G - oldG).squaredNorm());
      const double size = std::sqrt(s.W.squaredNorm() + s.G.squaredNorm());
      rep.iterateChange = change / (1.0 + size);
      result.residualHistory.push_back(rep);

      if (observer) {
        trace.fullRhs = applyExpansionTranspose(e, s.Upsilon);
        trace.fullRhs.noalias() += x.transpose() * (y - s.Z - s.G);
        trace.residuals = rep;
        observer(s, trace);
      }
      if (rep.maxComponent() <= opt.tolerance) {
        result.converged = true;
        break;
      }
    }
    result.iterations = s.iteration;
    result.W = s.W;
    result.G = withGross ? s.G : Matrix::Zero(problem_.samples(), problem_.tasks());
    return {std::move(result), std::move(s)};
  }

 private:
  const RegressionProblem& problem_;
  const FitContext& context_;
};

enum class ModelKind { OMR, CMR, OMRG, CMRG, RR };

inline const char* modelName(ModelKind m) {
  switch (m) {
    case ModelKind::OMR: return "OMR";
    case ModelKind::CMR: return "CMR";
    case ModelKind::OMRG: return "OMRG";
    case ModelKind::CMRG: return "CMRG";
    case ModelKind::RR: return "RR";
  }
  return "?";
}

inline ModelKind parseModel(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  if (name == "omr") return ModelKind::OMR;
  if (name == "cmr") return ModelKind::CMR;
  if (name == "omrg") return ModelKind::OMRG;
  if (name == "cmrg") return ModelKind::CMRG;
  if (name == "rr" || name == "ridge") return ModelKind::RR;
  throw InvalidArgument("unknown model '" + name + "' (expected cmrg, omrg, cmr, omr or rr)");
}

/// True for models that estimate a gross-error matrix.
inline bool hasGrossError(ModelKind m) { return m == ModelKind::OMRG || m == ModelKind::CMRG; }

/// Objective of a model at (W, G) in its reported scaling:
///   CMRG ‖Y-XW-G‖_{2,1} + λR(W) + ρ‖G‖₁     OMRG ½‖Y-XW-G‖_F² + λR(W) + ρ‖G‖₁
///   CMR  ‖Y-XW‖_{2,1} + λR(W)                OMR  ‖Y-XW‖_F² + λR(W)
///   RR   ‖Y-XW‖_F² + λ‖W‖_F²
inline double modelObjective(ModelKind model, const RegressionProblem& problem,
                             const GroupExpansion& e, const Matrix& w, const Matrix& g,
                             double lambda, double rho) {
  switch (model) {
    case ModelKind::CMRG:
      if (std::isinf(rho)) return detail::objectiveFor(problem, e, w, g, LossKind::CalibratedL21, lambda, 0, false, false);
      return detail::objectiveFor(problem, e, w, g, LossKind::CalibratedL21, lambda, rho, true, false);
    case ModelKind::OMRG:
      if (std::isinf(rho)) return detail::objectiveFor(problem, e, w, g, LossKind::SquaredFrobenius, lambda, 0, false, false);
      return detail::objectiveFor(problem, e, w, g, LossKind::SquaredFrobenius, lambda, rho, true, false);
    case ModelKind::CMR:
      return detail::objectiveFor(problem, e, w, g, LossKind::CalibratedL21, lambda, 0, false, false);
    case ModelKind::OMR:
      return detail::objectiveFor(problem, e, w, g, LossKind::SquaredFrobenius, lambda, 0, false, true);
    case ModelKind::RR: {
      Matrix r = problem.Y();
      r.noalias() -= problem.X() * w;
      return r.squaredNorm() + lambda * w.squaredNorm();
    }
  }
  return 0.0;
}

namespace detail {

inline void requireLoss(const SolverOptions& o, LossKind want, const char* who) {
  if (o.lossKind != want) {
    throw InvalidArgument(std::string(who) + ": options.lossKind does not match the model");
  }
}

inline EngineOutput runModel(ModelKind model, const RegressionProblem& problem,
                             const FitContext& ctx, SolverOptions options,
                             const SolverState* start, const IterationObserver& observer) {
  const bool squared = model == ModelKind::OMR || model == ModelKind::OMRG;
  options.lossKind = squared ? LossKind::SquaredFrobenius : LossKind::CalibratedL21;
  bool gross = hasGrossError(model) && !std::isinf(options.rho);
  if (!gross) {
    options.rho = SolverOptions::rhoSentinel();
    options.grossErrorEnabled = false;
  }
  options.validate();
  if (gross && !(options.rho >= 0.0)) throw InvalidArgument("rho must be non-negative");
  // The engine minimises ½‖·‖_F²; OMR reports ‖·‖_F², so its λ is halved.
  const double internalLambda = model == ModelKind::OMR ? 0.5 * options.lambda : options.lambda;
  AdmmEngine engine(problem, ctx);
  EngineOutput out = engine.run(options, internalLambda, options.rho, gross, start, observer);
  out.result.options = options;
  out.result.objectiveValue = modelObjective(model, problem, ctx.expansion(), out.result.W,
                                             out.result.G, options.lambda, options.rho);
  return out;
}

}  // namespace detail

/// Closed-form ridge regression Ŵ = (XᵀX + λI)⁻¹XᵀY.
inline FitResult fitRidge(const RegressionProblem& problem, double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw InvalidArgument("fitRidge: lambda must be positive");
  }
  const Matrix& x = problem.X();
  FitResult r;
  if (x.cols() > x.rows()) {
    // Dual form: W = Xᵀ(XXᵀ + λI)⁻¹Y.
    Matrix k = lambda * Matrix::Identity(x.rows(), x.rows());
    k.noalias() += x * x.transpose();
    Eigen::LLT<Matrix> llt(k);
    if (llt.info() != Eigen::Success) throw NumericalError("fitRidge: factorization failed");
    r.W = x.transpose() * llt.solve(problem.Y());
  } else {
    Matrix a = lambda * Matrix::Identity(x.cols(), x.cols());
    a.noalias() += x.transpose() * x;
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) throw NumericalError("fitRidge: factorization failed");
    r.W = llt.solve(Matrix(x.transpose() * problem.Y()));
  }
  r.G = Matrix::Zero(problem.samples(), problem.tasks());
  r.converged = true;
  r.iterations = 0;
  r.options.lambda = lambda;
  r.options.rho = SolverOptions::rhoSentinel();
  r.options.grossErrorEnabled = false;
  r.options.lossKind = LossKind::SquaredFrobenius;
  Matrix res = problem.Y();
  res.noalias() -= x * r.W;
  r.objectiveValue = res.squaredNorm() + lambda * r.W.squaredNorm();
  return r;
}

/// Fits any model; RR ignores everything in `options` but lambda.
inline EngineOutput fitModelWithState(ModelKind model, const RegressionProblem& problem,
                                      const FitContext& ctx, const SolverOptions& options,
                                      const SolverState* start = nullptr,
                                      const IterationObserver& observer = nullptr) {
  if (model == ModelKind::RR) return {fitRidge(problem, options.lambda), SolverState{}};
  return detail::runModel(model, problem, ctx, options, start, observer);
}

inline FitResult fitModel(ModelKind model, const RegressionProblem& problem,
                          const SolverOptions& options) {
  if (model == ModelKind::RR) return fitRidge(problem, options.lambda);
  FitContext ctx(problem);
  return detail::runModel(model, problem, ctx, options, nullptr, nullptr).result;
}

/// Calibrated multivariate regression with gross errors:
///   min ‖Y - XW - G‖_{2,1} + λ R_G(W) + ρ‖G‖₁.
/// ρ = +∞ reduces to fitCMR.
inline FitResult fitCMRG(const RegressionProblem& problem, const SolverOptions& options) {
  detail::requireLoss(options, LossKind::CalibratedL21, "fitCMRG");
  return fitModel(ModelKind::CMRG, problem, options);
}

/// Least-squares counterpart: min ½‖Y - XW - G‖_F² + λ R_G(W) + ρ‖G‖₁.
inline FitResult fitOMRG(const RegressionProblem& problem, const SolverOptions& options) {
  detail::requireLoss(options, LossKind::SquaredFrobenius, "fitOMRG");
  return fitModel(ModelKind::OMRG, problem, options);
}

/// min ‖Y - XW‖_{2,1} + λ R_G(W).
inline FitResult fitCMR(const RegressionProblem& problem, const SolverOptions& options) {
  detail::requireLoss(options, LossKind::CalibratedL21, "fitCMR");
  return fitModel(ModelKind::CMR, problem, options);
}

/// min ‖Y - XW‖_F² + λ R_G(W).
inline FitResult fitOMR(const RegressionProblem& problem, const SolverOptions& options) {
  detail::requireLoss(options, LossKind::SquaredFrobenius, "fitOMR");
  return fitModel(ModelKind::OMR, problem, options);
}

// ---------------------------------------------------------------------------
// Optimality certificate
// ---------------------------------------------------------------------------

/// Largest violation of each optimality condition of the split problem.
struct KktReport {
  double primalFeasibility = 0.0;  // ‖Z + G + XW - Y‖_F
  double expansionFeasibility = 0.0;  // ‖Υ - CW‖_F
  double lossSubgradient = 0.0;  // Λ₁ ∈ ∂‖Z‖_{2,1}
  double grossSubgradient = 0.0;  // Λ₁ ∈ ρ∂‖G‖₁
  double penaltySubgradient = 0.0;  // Λ₂ ∈ λ∂R_G'(Υ)
  double maxViolation() const {
    return std::max({primalFeasibility, expansionFeasibility, lossSubgradient, grossSubgradient,
                     penaltySubgradient});
  }
};

/// Measures how far (state) is from satisfying the CMRG optimality system.
/// `zeroTol` decides which columns/entries/blocks count as nonzero.
inline KktReport kktResiduals(const RegressionProblem& problem, const SolverOptions& options,
                              const FitResult& result, const SolverState& state,
                              double zeroTol = 1e-12) {
  const GroupExpansion e(problem.groups());
  KktReport k;
  Matrix r = state.Z + state.G - problem.Y();
  r.noalias() += problem.X() * result.W;
  k.primalFeasibility = r.norm();
  k.expansionFeasibility = (state.Upsilon - applyExpansion(e, result.W)).norm();

  const Matrix& l1 = state.Lambda1;
  for (Index j = 0; j < l1.cols(); ++j) {
    const double nl = l1.col(j).norm();
    double v = std::max(0.0, nl - 1.0);
    const double nz = state.Z.col(j).norm();
    if (nz > zeroTol) v = std::max(v, (l1.col(j) - state.Z.col(j) / nz).norm());
    k.lossSubgradient = std::max(k.lossSubgradient, v);
  }

  if (!std::isinf(options.rho) && options.grossErrorEnabled) {
    const double rho = options.rho;
    for (Index j = 0; j < l1.cols(); ++j) {
      for (Index i = 0; i < l1.rows(); ++i) {
        const double lam = l1(i, j);
        const double g = state.G(i, j);
        double v = std::max(0.0, std::abs(lam) - rho);
        if (std::abs(g) > zeroTol) v = std::max(v, std::abs(lam - rho * (g > 0 ? 1.0 : -1.0)));
        k.grossSubgradient = std::max(k.grossSubgradient, v);
      }
    }
  }

  const auto& starts = e.blockStarts();
  const double lambda = options.lambda;
  for (std::size_t b = 0; b + 1 < starts.size(); ++b) {
    const Index len = starts[b + 1] - starts[b];
    auto lb = state.Lambda2.middleRows(starts[b], len);
    auto ub = state.Upsilon.middleRows(starts[b], len);
    double v = std::max(0.0, lb.norm() - lambda);
    const double nu = ub.norm();
    if (nu > zeroTol) v = std::max(v, (lb - (lambda / nu) * ub).norm());
    k.penaltySubgradient = std::max(k.penaltySubgradient, v);
  }
  return k;
}

}  // namespace cmrg
