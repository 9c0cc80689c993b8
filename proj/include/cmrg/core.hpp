#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cmrg/error.hpp"

namespace cmrg {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

inline std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

}  // namespace detail

/// Throws unless `m` is non-empty and every entry is finite.
inline void requireFinite(const Matrix& m, const char* what) {
  if (m.rows() < 1 || m.cols() < 1) {
    throw DimensionError(std::string(what) + ": matrix must have at least one row and one column");
  }
  if (!m.allFinite()) {
    throw InvalidArgument(std::string(what) + ": matrix contains NaN or Inf");
  }
}

inline void requireRows(const Matrix& m, Index rows, const char* what) {
  if (m.rows() != rows) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(rows) + " rows, got " +
                         detail::shape(m));
  }
}

inline void requireSameShape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + detail::shape(a) + " vs " +
                         detail::shape(b));
  }
}

/// Sum of column Euclidean norms, ‖A‖_{2,1}.
inline double norm21(const Matrix& a) { return a.colwise().norm().sum(); }

/// Entrywise ℓ1 norm.
inline double norm1(const Matrix& a) { return a.cwiseAbs().sum(); }

/// Largest absolute entry; zero for an empty matrix.
inline double normInf(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

// ---------------------------------------------------------------------------
// Group structure
// ---------------------------------------------------------------------------

/// An ordered collection of (possibly overlapping) index groups covering
/// {0, ..., dimension-1}. Indices are stored 0-based; messages report them
/// 1-based.
class GroupSet {
 public:
  GroupSet(Index dimension, std::vector<std::vector<Index>> groups)
      : dimension_(dimension), groups_(std::move(groups)) {
    if (dimension_ < 1) throw InvalidArgument("GroupSet: dimension must be at least 1");
    if (groups_.empty()) throw InvalidArgument("GroupSet: at least one group is required");
    std::vector<bool> covered(static_cast<std::size_t>(dimension_), false);
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      const auto& members = groups_[g];
      if (members.empty()) {
        throw InvalidArgument("GroupSet: group " + std::to_string(g + 1) + " is empty");
      }
      for (std::size_t k = 0; k < members.size(); ++k) {
        const Index j = members[k];
        if (j < 0 || j >= dimension_) {
          throw InvalidArgument("GroupSet: group " + std::to_string(g + 1) + " has index " +
                                std::to_string(j + 1) + " outside 1.." +
                                std::to_string(dimension_));
        }
        if (k > 0 && members[k - 1] >= j) {
          throw InvalidArgument("GroupSet: group " + std::to_string(g + 1) +
                                " indices must be strictly increasing (offending index " +
                                std::to_string(j + 1) + ")");
        }
        covered[static_cast<std::size_t>(j)] = true;
      }
    }
    for (Index j = 0; j < dimension_; ++j) {
      if (!covered[static_cast<std::size_t>(j)]) {
        throw InvalidArgument("GroupSet: index " + std::to_string(j + 1) +
                              " is not contained in any group");
      }
    }
  }

  /// One singleton group per index (plain row-wise ℓ1,2 / lasso structure).
  static GroupSet singletons(Index dimension) {
    std::vector<std::vector<Index>> groups;
    groups.reserve(static_cast<std::size_t>(std::max<Index>(dimension, 0)));
    for (Index j = 0; j < dimension; ++j) groups.push_back({j});
    return GroupSet(dimension, std::move(groups));
  }

  Index dimension() const { return dimension_; }
  std::size_t size() const { return groups_.size(); }
  const std::vector<std::vector<Index>>& groups() const { return groups_; }
  const std::vector<Index>& operator[](std::size_t g) const { return groups_[g]; }

  friend bool operator==(const GroupSet&, const GroupSet&) = default;

 private:
  Index dimension_;
  std::vector<std::vector<Index>> groups_;
};

/// Row-duplication view of an overlapping GroupSet.
///
/// Expanded row i copies source row rowMap()[i]. Blocks are laid out in group
/// declaration order, each block listing its indices in ascending order, so
/// the expanded groups form a partition of {0, ..., expandedDim-1} into
/// consecutive runs. The implied copy matrix C has a single 1 per row and
/// CᵀC = diag(duplicationCounts()).
class GroupExpansion {
 public:
  explicit GroupExpansion(GroupSet source) : source_(std::move(source)) {
    const Index d = source_.dimension();
    counts_.assign(static_cast<std::size_t>(d), 0);
    blockStarts_.reserve(source_.size() + 1);
    for (const auto& group : source_.groups()) {
      blockStarts_.push_back(static_cast<Index>(rowMap_.size()));
      for (Index j : group) {
        rowMap_.push_back(j);
        ++counts_[static_cast<std::size_t>(j)];
      }
    }
    blockStarts_.push_back(static_cast<Index>(rowMap_.size()));
    countsVec_.resize(d);
    for (Index j = 0; j < d; ++j) countsVec_(j) = counts_[static_cast<std::size_t>(j)];
    identity_ = static_cast<Index>(rowMap_.size()) == d;
    for (Index i = 0; identity_ && i < d; ++i) identity_ = rowMap_[static_cast<std::size_t>(i)] == i;
  }

  const GroupSet& source() const { return source_; }
  Index sourceDim() const { return source_.dimension(); }
  Index expandedDim() const { return static_cast<Index>(rowMap_.size()); }
  const std::vector<Index>& rowMap() const { return rowMap_; }
  /// Offsets of the expanded blocks; block b spans [starts[b], starts[b+1]).
  const std::vector<Index>& blockStarts() const { return blockStarts_; }
  std::size_t blockCount() const { return blockStarts_.size() - 1; }
  const std::vector<int>& duplicationCounts() const { return counts_; }
  /// diag(D) as a vector of doubles.
  const Vector& duplicationDiagonal() const { return countsVec_; }
  /// True when C is the identity (disjoint singleton-ordered groups).
  bool isIdentity() const { return identity_; }

 private:
  GroupSet source_;
  std::vector<Index> rowMap_;
  std::vector<Index> blockStarts_;
  std::vector<int> counts_;
  Vector countsVec_;
  bool identity_ = false;
};

inline GroupExpansion buildExpansion(const GroupSet& groups) { return GroupExpansion(groups); }

/// Υ = C·W: copies each source row into its expanded slots.
inline Matrix applyExpansion(const GroupExpansion& e, const Matrix& w) {
  requireRows(w, e.sourceDim(), "applyExpansion");
  if (e.isIdentity()) return w;
  Matrix out(e.expandedDim(), w.cols());
  const auto& map = e.rowMap();
  for (Index i = 0; i < e.expandedDim(); ++i) out.row(i) = w.row(map[static_cast<std::size_t>(i)]);
  return out;
}

/// Cᵀ·U: accumulates every expanded row back onto its source row.
inline Matrix applyExpansionTranspose(const GroupExpansion& e, const Matrix& u) {
  requireRows(u, e.expandedDim(), "applyExpansionTranspose");
  if (e.isIdentity()) return u;
  Matrix out = Matrix::Zero(e.sourceDim(), u.cols());
  const auto& map = e.rowMap();
  for (Index i = 0; i < e.expandedDim(); ++i) out.row(map[static_cast<std::size_t>(i)]) += u.row(i);
  return out;
}

/// Σ over expanded blocks of the block Frobenius norm of an expanded matrix.
inline double blockPenalty(const GroupExpansion& e, const Matrix& upsilon) {
  requireRows(upsilon, e.expandedDim(), "blockPenalty");
  const auto& starts = e.blockStarts();
  double total = 0.0;
  for (std::size_t b = 0; b + 1 < starts.size(); ++b) {
    total += upsilon.middleRows(starts[b], starts[b + 1] - starts[b]).norm();
  }
  return total;
}

/// Overlapping group-lasso penalty Σ_g ‖W_g*‖_F.
inline double groupPenalty(const GroupExpansion& e, const Matrix& w) {
  requireRows(w, e.sourceDim(), "groupPenalty");
  const auto& map = e.rowMap();
  const auto& starts = e.blockStarts();
  double total = 0.0;
  for (std::size_t b = 0; b + 1 < starts.size(); ++b) {
    double sq = 0.0;
    for (Index i = starts[b]; i < starts[b + 1]; ++i) {
      sq += w.row(map[static_cast<std::size_t>(i)]).squaredNorm();
    }
    total += std::sqrt(sq);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Problems, options, results
// ---------------------------------------------------------------------------

/// Immutable regression input: Y ≈ X·W (+ G).
class RegressionProblem {
 public:
  RegressionProblem(Matrix x, Matrix y, GroupSet groups)
      : x_(std::move(x)), y_(std::move(y)), groups_(std::move(groups)) {
    requireFinite(x_, "RegressionProblem X");
    requireFinite(y_, "RegressionProblem Y");
    if (x_.rows() != y_.rows()) {
      throw DimensionError("RegressionProblem: X has " + std::to_string(x_.rows()) +
                           " rows but Y has " + std::to_string(y_.rows()));
    }
    if (groups_.dimension() != x_.cols()) {
      throw DimensionError("RegressionProblem: group dimension " +
                           std::to_string(groups_.dimension()) + " does not match X columns " +
                           std::to_string(x_.cols()));
    }
  }

  /// Problem with singleton groups over the columns of X.
  RegressionProblem(Matrix x, Matrix y)
      : RegressionProblem(x, std::move(y), GroupSet::singletons(x.cols())) {}

  const Matrix& X() const { return x_; }
  const Matrix& Y() const { return y_; }
  const GroupSet& groups() const { return groups_; }
  Index samples() const { return x_.rows(); }
  Index features() const { return x_.cols(); }
  Index tasks() const { return y_.cols(); }

 private:
  Matrix x_;
  Matrix y_;
  GroupSet groups_;
};

enum class LossKind { CalibratedL21, SquaredFrobenius };

/// Upper end of the open dual step interval, (1+√5)/2.
inline constexpr double kGoldenRatio = 1.6180339887498949;

/// Tuning for the proximal ADMM engine. Use `validate()` (called by every fit
/// entry point) to enforce the documented ranges.
struct SolverOptions {
  double lambda = 1.0;
  /// +∞ (with grossErrorEnabled = false) pins the gross-error block at zero.
  double rho = 1.0;
  double sigma = 1.0;
  double tau = 1.618;
  int maxIterations = 5000;
  double tolerance = 1e-6;
  LossKind lossKind = LossKind::CalibratedL21;
  bool grossErrorEnabled = true;

  static constexpr double rhoSentinel() { return std::numeric_limits<double>::infinity(); }
  bool rhoIsSentinel() const { return std::isinf(rho) && rho > 0; }
  /// True when the G block participates in the iteration.
  bool usesGrossError() const { return grossErrorEnabled && !rhoIsSentinel(); }

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      throw InvalidArgument("SolverOptions: lambda must be finite and non-negative");
    }
    if (!(rho >= 0.0)) throw InvalidArgument("SolverOptions: rho must be non-negative");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      throw InvalidArgument("SolverOptions: sigma must be positive");
    }
    if (!(tau > 0.0 && tau < kGoldenRatio)) {
      throw InvalidArgument("SolverOptions: tau must lie in (0, (1+sqrt(5))/2) = (0, 1.6180339887...)");
    }
    if (maxIterations < 1) throw InvalidArgument("SolverOptions: maxIterations must be at least 1");
    if (!(tolerance > 0.0)) throw InvalidArgument("SolverOptions: tolerance must be positive");
    if (rhoIsSentinel() && grossErrorEnabled) {
      throw InvalidArgument("SolverOptions: rho = +inf requires grossErrorEnabled = false");
    }
  }

  SolverOptions& withLambda(double v) { lambda = v; return *this; }
  SolverOptions& withRho(double v) {
    rho = v;
    grossErrorEnabled = !std::isinf(v);
    return *this;
  }
  SolverOptions& withTolerance(double v) { tolerance = v; return *this; }
};

/// Builds validated options; throws InvalidArgument on out-of-range values.
inline SolverOptions makeSolverOptions(double lambda, double rho, double sigma = 1.0,
                                       double tau = 1.618, int maxIterations = 5000,
                                       double tolerance = 1e-6,
                                       LossKind loss = LossKind::CalibratedL21) {
  SolverOptions o;
  o.lambda = lambda;
  o.rho = rho;
  o.sigma = sigma;
  o.tau = tau;
  o.maxIterations = maxIterations;
  o.tolerance = tolerance;
  o.lossKind = loss;
  o.grossErrorEnabled = !std::isinf(rho);
  o.validate();
  return o;
}

struct ResidualReport {
  double primal1 = 0.0;
  double primal2 = 0.0;
  double iterateChange = 0.0;
  double maxComponent() const { return std::max({primal1, primal2, iterateChange}); }
};

struct FitResult {
  Matrix W;
  Matrix G;
  int iterations = 0;
  bool converged = false;
  std::vector<ResidualReport> residualHistory;
  double objectiveValue = 0.0;
  SolverOptions options;
};

}  // namespace cmrg
