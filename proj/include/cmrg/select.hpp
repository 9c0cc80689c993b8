#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "cmrg/core.hpp"
#include "cmrg/parallel.hpp"
#include "cmrg/simulate.hpp"
#include "cmrg/solvers.hpp"

namespace cmrg {

/// Candidate values for λ and ρ. ρ may end in +∞ (no gross-error block).
struct HyperGrid {
  std::vector<double> lambdaValues;
  std::vector<double> rhoValues;

  void validate() const {
    auto check = [](const std::vector<double>& v, const char* name) {
      if (v.empty()) throw InvalidArgument(std::string("HyperGrid: ") + name + " grid is empty");
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(v[i] > 0.0) || std::isnan(v[i])) {
          throw InvalidArgument(std::string("HyperGrid: ") + name + " values must be positive");
        }
        if (i > 0 && !(v[i] > v[i - 1])) {
          throw InvalidArgument(std::string("HyperGrid: ") + name + " values must be strictly increasing");
        }
      }
    };
    check(lambdaValues, "lambda");
    check(rhoValues, "rho");
  }
};

/// λ = (√ln d + √p)·2^e and ρ = 2^e for e = -range, -range+step, ..., range.
inline HyperGrid makePaperGrid(Index d, Index p, double exponentStep, double exponentRange) {
  if (!(exponentStep > 0.0) || !(exponentRange > 0.0)) {
    throw InvalidArgument("makePaperGrid: step and range must be positive");
  }
  if (d < 2 || p < 1) throw InvalidArgument("makePaperGrid: need d >= 2 and p >= 1");
  const double scale = std::sqrt(std::log(static_cast<double>(d))) + std::sqrt(static_cast<double>(p));
  HyperGrid g;
  const auto count = static_cast<long>(std::llround(2.0 * exponentRange / exponentStep));
  for (long k = 0; k <= count; ++k) {
    const double e = -exponentRange + static_cast<double>(k) * exponentStep;
    g.lambdaValues.push_back(scale * std::exp2(e));
    g.rhoValues.push_back(std::exp2(e));
  }
  return g;
}

struct GridCell {
  double lambda = 0.0;
  double rho = 0.0;
  double score = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct SelectionResult {
  double bestLambda = 0.0;
  double bestRho = 0.0;
  /// Cells in (λ ascending, ρ ascending) order.
  std::vector<GridCell> scoreTable;
  /// Fit at the selected pair (on the training split, or the full problem
  /// for k-fold selection).
  FitResult bestFit;
  /// Per-cell fits in scoreTable order, when requested.
  std::vector<FitResult> allFits;
  /// Number of cells that hit the iteration cap.
  std::size_t nonConverged = 0;
};

struct SelectionOptions {
  SolverOptions solver;
  /// Reuse the previous λ's iterates along each ρ row.
  bool warmStart = true;
  bool keepFits = false;
  int jobs = 1;
};

namespace detail {

/// ρ values a model actually uses.
inline std::vector<double> effectiveRhos(ModelKind model, const HyperGrid& grid) {
  if (!hasGrossError(model)) return {SolverOptions::rhoSentinel()};
  return grid.rhoValues;
}

inline double validationScore(const Matrix& x, const Matrix& y, const Matrix& w) {
  Matrix r = y;
  r.noalias() -= x * w;
  return r.squaredNorm();
}

/// Returns the index of the minimum score, ties going to smallest λ then ρ.
inline std::size_t argminCell(const std::vector<GridCell>& cells) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    const GridCell& c = cells[i];
    const GridCell& b = cells[best];
    if (c.score < b.score || (c.score == b.score && (c.lambda < b.lambda || (c.lambda == b.lambda && c.rho < b.rho)))) {
      best = i;
    }
  }
  return best;
}

struct GridFits {
  std::vector<GridCell> cells;  // λ-major, ρ-minor
  std::vector<FitResult> fits;
};

/// A converged state with Ĝ = 0 stays optimal when ρ shrinks as long as
/// |Λ₁| ≤ ρ entrywise.
inline bool optimalForSmallerRho(const SolverState& s, bool converged, double rho) {
  return converged && s.G.cwiseAbs().maxCoeff() == 0.0 && s.Lambda1.cwiseAbs().maxCoeff() <= rho;
}

/// A converged state with Ŵ = 0 stays optimal when λ shrinks as long as every
/// block of Λ₂ has norm ≤ λ.
inline bool optimalForSmallerLambda(const SolverState& s, bool converged, const GroupExpansion& e,
                                    double lambda) {
  if (!converged || s.Upsilon.cwiseAbs().maxCoeff() != 0.0) return false;
  const auto& starts = e.blockStarts();
  for (std::size_t b = 0; b + 1 < starts.size(); ++b) {
    if (s.Lambda2.middleRows(starts[b], starts[b + 1] - starts[b]).norm() > lambda) return false;
  }
  return true;
}

/// Fits every (λ, ρ) pair on `train` and scores each against (valX, valY).
///
/// Without warm starts the cells are independent and run concurrently.
/// With warm starts the grid is walked with ρ descending in the outer loop
/// and λ descending in the inner one. The first cell starts from the
/// dual-feasible zero model. Later cells start from the previous λ in the
/// same row, unless the cell at the same λ and the next larger ρ is provably
/// still optimal (Ĝ = 0 with |Λ₁| ≤ ρ). The walk is sequential, so `jobs`
/// only matters without warm starts.
inline GridFits fitGrid(ModelKind model, const RegressionProblem& train, const FitContext& ctx,
                        const Matrix& valX, const Matrix& valY, const HyperGrid& grid,
                        const SelectionOptions& opt) {
  const auto rhos = effectiveRhos(model, grid);
  const auto& lambdas = grid.lambdaValues;
  const std::size_t nl = lambdas.size(), nr = rhos.size();
  GridFits out;
  out.cells.resize(nl * nr);
  out.fits.resize(nl * nr);

  auto fitCell = [&](std::size_t li, std::size_t r, const SolverState* start) {
    SolverOptions so = opt.solver;
    so.lambda = lambdas[li];
    so.rho = rhos[r];
    so.grossErrorEnabled = !std::isinf(so.rho);
    EngineOutput fit = fitModelWithState(model, train, ctx, so, start);
    const std::size_t cell = li * nr + r;
    out.cells[cell] = GridCell{lambdas[li], rhos[r], validationScore(valX, valY, fit.result.W),
                               fit.result.converged, fit.result.iterations};
    out.fits[cell] = std::move(fit.result);
    return std::move(fit.state);
  };

  if (!opt.warmStart || model == ModelKind::RR) {
    parallelFor(nl * nr, opt.jobs, [&](std::size_t c) { fitCell(c / nr, c % nr, nullptr); });
    return out;
  }

  const bool squared = model == ModelKind::OMR || model == ModelKind::OMRG;
  const SolverState zero = AdmmEngine(train, ctx).nullModelState(squared ? LossKind::SquaredFrobenius
                                                                         : LossKind::CalibratedL21);
  std::vector<SolverState> above(nl), current(nl);
  std::vector<bool> aboveConverged(nl, false), currentConverged(nl, false);
  for (std::size_t r = nr; r-- > 0;) {
    const bool firstRow = r + 1 == nr;
    for (std::size_t li = nl; li-- > 0;) {
      const bool lastLambda = li + 1 == nl;
      const SolverState* start = nullptr;
      if (!firstRow && optimalForSmallerRho(above[li], aboveConverged[li], rhos[r])) {
        start = &above[li];
      } else if (!lastLambda) {
        start = &current[li + 1];
      } else {
        start = firstRow ? &zero : &above[li];
      }
      if (!lastLambda && start != &current[li + 1] &&
          optimalForSmallerLambda(current[li + 1], currentConverged[li + 1], ctx.expansion(),
                                  lambdas[li])) {
        start = &current[li + 1];
      }
      current[li] = fitCell(li, r, start);
      currentConverged[li] = out.cells[li * nr + r].converged;
    }
    std::swap(above, current);
    std::swap(aboveConverged, currentConverged);
  }
  return out;
}

}  // namespace detail

/// Hold-out selection: fits every grid pair on `train`, scores
/// ‖Ȳ - X̄W‖_F² on the validation split and returns the minimiser.
inline SelectionResult selectOnValidation(ModelKind model, const RegressionProblem& train,
                                          const Matrix& valX, const Matrix& valY,
                                          const HyperGrid& grid, const SelectionOptions& opt = {}) {
  grid.validate();
  if (valX.cols() != train.features() || valY.cols() != train.tasks() || valX.rows() != valY.rows()) {
    throw DimensionError("selectOnValidation: validation split does not match the training problem");
  }
  FitContext ctx(train);
  auto fits = detail::fitGrid(model, train, ctx, valX, valY, grid, opt);
  SelectionResult res;
  res.scoreTable = std::move(fits.cells);
  for (const auto& c : res.scoreTable) res.nonConverged += c.converged ? 0 : 1;
  if (res.nonConverged == res.scoreTable.size() && model != ModelKind::RR) {
    throw ConvergenceError("selectOnValidation: no grid cell converged");
  }
  const std::size_t best = detail::argminCell(res.scoreTable);
  res.bestLambda = res.scoreTable[best].lambda;
  res.bestRho = res.scoreTable[best].rho;
  res.bestFit = fits.fits[best];
  if (opt.keepFits) res.allFits = std::move(fits.fits);
  return res;
}

/// Near-equal fold sizes: the first n mod k folds get one extra sample.
inline std::vector<Index> foldSizes(Index n, Index k) {
  std::vector<Index> sizes(static_cast<std::size_t>(k), n / k);
  for (Index f = 0; f < n % k; ++f) ++sizes[static_cast<std::size_t>(f)];
  return sizes;
}

/// Seeded assignment of each sample to a fold.
inline std::vector<Index> assignFolds(Index n, Index k, std::uint64_t seed) {
  if (k < 2 || n < k) throw InvalidArgument("assignFolds: need k >= 2 and n >= k");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  auto rng = streamEngine(seed, 41);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Index> fold(static_cast<std::size_t>(n));
  const auto sizes = foldSizes(n, k);
  std::size_t pos = 0;
  for (Index f = 0; f < k; ++f) {
    for (Index c = 0; c < sizes[static_cast<std::size_t>(f)]; ++c) fold[static_cast<std::size_t>(order[pos++])] = f;
  }
  return fold;
}

inline Matrix selectRows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

/// k-fold selection: per pair, the score is the sum of held-out
/// ‖Y_f - X_f W‖_F² over folds. The returned bestFit is refit on all data.
inline SelectionResult selectByKFold(ModelKind model, const RegressionProblem& problem,
                                     const HyperGrid& grid, Index k, std::uint64_t seed,
                                     const SelectionOptions& opt = {}) {
  grid.validate();
  const Index n = problem.samples();
  if (k < 2 || n < k) throw InvalidArgument("selectByKFold: need k >= 2 and n >= k");
  const auto fold = assignFolds(n, k, seed);
  std::vector<GridCell> total;
  for (Index f = 0; f < k; ++f) {
    std::vector<Index> inRows, outRows;
    for (Index i = 0; i < n; ++i) (fold[static_cast<std::size_t>(i)] == f ? outRows : inRows).push_back(i);
    RegressionProblem train(selectRows(problem.X(), inRows), selectRows(problem.Y(), inRows), problem.groups());
    const Matrix hx = selectRows(problem.X(), outRows), hy = selectRows(problem.Y(), outRows);
    FitContext ctx(train);
    auto fits = detail::fitGrid(model, train, ctx, hx, hy, grid, opt);
    if (total.empty()) {
      total = fits.cells;
      for (auto& c : total) c.converged = true, c.score = 0.0, c.iterations = 0;
    }
    for (std::size_t c = 0; c < total.size(); ++c) {
      total[c].score += fits.cells[c].score;
      total[c].converged = total[c].converged && fits.cells[c].converged;
      total[c].iterations += fits.cells[c].iterations;
    }
  }
  SelectionResult res;
  res.scoreTable = std::move(total);
  for (const auto& c : res.scoreTable) res.nonConverged += c.converged ? 0 : 1;
  if (res.nonConverged == res.scoreTable.size() && model != ModelKind::RR) {
    throw ConvergenceError("selectByKFold: no grid cell converged");
  }
  const std::size_t best = detail::argminCell(res.scoreTable);
  res.bestLambda = res.scoreTable[best].lambda;
  res.bestRho = res.scoreTable[best].rho;
  SolverOptions so = opt.solver;
  so.lambda = res.bestLambda;
  so.rho = res.bestRho;
  so.grossErrorEnabled = !std::isinf(so.rho);
  res.bestFit = fitModel(model, problem, so);
  return res;
}

}  // namespace cmrg
