#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "cmrg/core.hpp"

namespace cmrg {

struct EvaluationReport {
  double preErr = 0.0;
  std::optional<double> adjPreErr;
  std::optional<double> estErrW;
  std::optional<double> estErrG;
  std::optional<double> recRateG;
  std::optional<double> aad;
  std::optional<double> meanJointError;
  std::vector<double> perTaskAAD;
  std::vector<double> perJointError;
};

namespace detail {

inline Matrix predictionResidual(const Matrix& x, const Matrix& y, const Matrix& w) {
  if (x.cols() != w.rows()) {
    throw DimensionError("metric: X has " + std::to_string(x.cols()) + " columns but W has " +
                         std::to_string(w.rows()) + " rows");
  }
  if (x.rows() != y.rows() || y.cols() != w.cols()) {
    throw DimensionError("metric: inconsistent X/Y/W shapes");
  }
  Matrix r = y;
  r.noalias() -= x * w;
  return r;
}

}  // namespace detail

/// ‖Ỹ - X̃Ŵ‖_F / ‖Ỹ‖_F.
inline double predictionError(const Matrix& x, const Matrix& y, const Matrix& w) {
  const double denom = y.norm();
  if (!(denom > 0.0)) throw InvalidArgument("predictionError: observations have zero norm");
  return detail::predictionResidual(x, y, w).norm() / denom;
}

/// ‖(Ỹ - X̃Ŵ)D⁻¹‖_F / ‖ỸD⁻¹‖_F with D = diag(noiseScales).
inline double adjustedPredictionError(const Matrix& x, const Matrix& y, const Matrix& w,
                                      const Vector& noiseScales) {
  if (noiseScales.size() != y.cols()) {
    throw DimensionError("adjustedPredictionError: need one noise scale per task");
  }
  if ((noiseScales.array() <= 0.0).any()) {
    throw InvalidArgument("adjustedPredictionError: noise scales must be positive");
  }
  const Vector inv = noiseScales.cwiseInverse();
  const double denom = (y * inv.asDiagonal()).norm();
  if (!(denom > 0.0)) throw InvalidArgument("adjustedPredictionError: observations have zero norm");
  return (detail::predictionResidual(x, y, w) * inv.asDiagonal()).norm() / denom;
}

/// ‖W* - Ŵ‖_F / ‖W*‖_F.
inline double estimationErrorW(const Matrix& trueW, const Matrix& w) {
  requireSameShape(trueW, w, "estimationErrorW");
  const double denom = trueW.norm();
  if (!(denom > 0.0)) throw InvalidArgument("estimationErrorW: true coefficients are zero");
  return (trueW - w).norm() / denom;
}

/// ‖G* - Ĝ‖_F / max(1, ‖G*‖_F).
inline double estimationErrorG(const Matrix& trueG, const Matrix& g) {
  requireSameShape(trueG, g, "estimationErrorG");
  return (trueG - g).norm() / std::max(1.0, trueG.norm());
}

/// Fraction of all n·p entries whose signs in {-1, 0, +1} agree. Entries of
/// Ĝ with magnitude ≤ zeroTol count as zero.
inline double recoveryRateG(const Matrix& trueG, const Matrix& g, double zeroTol = 1e-12) {
  requireSameShape(trueG, g, "recoveryRateG");
  if (trueG.size() == 0) return 1.0;
  auto sgn = [](double v, double tol) { return v > tol ? 1 : (v < -tol ? -1 : 0); };
  Index agree = 0;
  for (Index j = 0; j < g.cols(); ++j) {
    for (Index i = 0; i < g.rows(); ++i) {
      if (sgn(trueG(i, j), 0.0) == sgn(g(i, j), zeroTol)) ++agree;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(trueG.size());
}

struct AadResult {
  double overall = 0.0;
  std::vector<double> perTask;
};

/// Mean absolute deviation per task, and its average over tasks.
inline AadResult averagedAbsoluteDistance(const Matrix& gold, const Matrix& pred) {
  requireSameShape(gold, pred, "averagedAbsoluteDistance");
  AadResult r;
  const Matrix diff = (gold - pred).cwiseAbs();
  for (Index j = 0; j < diff.cols(); ++j) {
    r.perTask.push_back(diff.col(j).sum() / static_cast<double>(diff.rows()));
  }
  double sum = 0.0;
  for (double v : r.perTask) sum += v;
  r.overall = r.perTask.empty() ? 0.0 : sum / static_cast<double>(r.perTask.size());
  return r;
}

struct JointErrorResult {
  double overall = 0.0;
  std::vector<double> perJoint;
};

/// Mean Euclidean error per consecutive (x, y, z) column triple.
inline JointErrorResult meanJointError(const Matrix& gold, const Matrix& pred, Index jointCount) {
  requireSameShape(gold, pred, "meanJointError");
  if (gold.cols() % 3 != 0) throw DimensionError("meanJointError: column count is not a multiple of 3");
  if (jointCount != gold.cols() / 3) {
    throw DimensionError("meanJointError: expected " + std::to_string(3 * jointCount) + " columns, got " +
                         std::to_string(gold.cols()));
  }
  JointErrorResult r;
  const Matrix diff = pred - gold;
  for (Index j = 0; j < jointCount; ++j) {
    r.perJoint.push_back(diff.middleCols(3 * j, 3).rowwise().norm().mean());
  }
  double sum = 0.0;
  for (double v : r.perJoint) sum += v;
  r.overall = r.perJoint.empty() ? 0.0 : sum / static_cast<double>(r.perJoint.size());
  return r;
}

}  // namespace cmrg
