#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "cmrg/core.hpp"

namespace cmrg {

namespace detail {

inline void requireNonNegative(double t, const char* what) {
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw InvalidArgument(std::string(what) + ": threshold must be finite and non-negative");
  }
}

// (1 - t/norm)_+ with the factor taken as 0 at norm == 0.
inline double shrinkFactor(double norm, double t) {
  if (norm <= t || norm == 0.0) return 0.0;
  return 1.0 - t / norm;
}

}  // namespace detail

/// sign(M) ⊙ max(|M| - t, 0), the prox of t‖·‖₁.
inline Matrix softThresholdElementwise(const Matrix& m, double t) {
  detail::requireNonNegative(t, "softThresholdElementwise");
  return m.unaryExpr([t](double v) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
  });
}

/// Column-wise ℓ2 shrinkage, the prox of t‖·‖_{2,1}.
inline Matrix shrinkColumnsL2(const Matrix& m, double t) {
  detail::requireNonNegative(t, "shrinkColumnsL2");
  Matrix out(m.rows(), m.cols());
  for (Index j = 0; j < m.cols(); ++j) {
    out.col(j) = detail::shrinkFactor(m.col(j).norm(), t) * m.col(j);
  }
  return out;
}

/// Block-wise Frobenius shrinkage over row blocks [starts[b], starts[b+1]).
/// `starts` must begin at 0, be strictly increasing and end at m.rows().
inline Matrix shrinkBlocksFrobenius(const Matrix& m, const std::vector<Index>& starts, double t) {
  detail::requireNonNegative(t, "shrinkBlocksFrobenius");
  if (starts.size() < 2 || starts.front() != 0 || starts.back() != m.rows()) {
    throw InvalidArgument("shrinkBlocksFrobenius: blocks must partition the rows");
  }
  for (std::size_t b = 0; b + 1 < starts.size(); ++b) {
    if (starts[b] >= starts[b + 1]) {
      throw InvalidArgument("shrinkBlocksFrobenius: block " + std::to_string(b + 1) + " is empty");
    }
  }
  Matrix out(m.rows(), m.cols());
  for (std::size_t b = 0; b + 1 < starts.size(); ++b) {
    const Index len = starts[b + 1] - starts[b];
    auto block = m.middleRows(starts[b], len);
    out.middleRows(starts[b], len) = detail::shrinkFactor(block.norm(), t) * block;
  }
  return out;
}

/// argmin_Z ½‖Z‖_F² + (σ/2)‖Z - M‖_F² = σ/(1+σ)·M.
inline Matrix proxSquaredLoss(const Matrix& m, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw InvalidArgument("proxSquaredLoss: sigma must be positive");
  }
  return (sigma / (1.0 + sigma)) * m;
}

// ---------------------------------------------------------------------------
// Normal equations A·V = R with A = XᵀX + D
// ---------------------------------------------------------------------------

enum class SolverMode { DirectFactorization, WoodburyFactorization, ConjugateGradient };

/// Half of a two-stage W update. Holds the right-hand side b, its image
/// X·A⁻¹b, and (mode dependent) the solution A⁻¹b itself. A split solve
/// keeps b = base + Xᵀ·residual unformed.
struct PendingSolve {
  Matrix rhs;
  Matrix base;
  Matrix residual;
  bool split = false;
  Matrix image;
  Matrix solution;
};

/// Both the solution and its image under X.
struct SolvedStep {
  Matrix W;
  Matrix XW;
};

struct NormalSolverConfig {
  SolverMode mode = SolverMode::DirectFactorization;
  /// Pick Direct or Woodbury from the shape instead of `mode`.
  bool automatic = true;
  /// Woodbury is selected when d > woodburyRatio·n.
  double woodburyRatio = 1.0;
  double cgTolerance = 1e-13;
  int cgMaxIterations = 10000;
};

/// Cached factorization of A = XᵀX + D, D the positive duplication diagonal.
///
/// Direct mode factors A (d×d) and caches P = A⁻¹Xᵀ and K = X·P.
/// Woodbury mode factors S = I + X·D⁻¹·Xᵀ (n×n) and uses
///   A⁻¹ = D⁻¹ - D⁻¹Xᵀ S⁻¹ X D⁻¹,   X·A⁻¹ = S⁻¹ X D⁻¹,   A⁻¹Xᵀ = D⁻¹ Xᵀ S⁻¹.
/// ConjugateGradient mode keeps no factorization and iterates with a
/// Jacobi preconditioner.
class NormalEquationSolver {
 public:
  using Config = NormalSolverConfig;

  NormalEquationSolver(const Matrix& x, const Vector& diag) : NormalEquationSolver(x, diag, Config{}) {}

  NormalEquationSolver(const Matrix& x, const Vector& diag, Config config)
      : x_(x), diag_(diag), config_(config) {
    if (diag_.size() != x_.cols()) {
      throw DimensionError("NormalEquationSolver: diagonal has " + std::to_string(diag_.size()) +
                           " entries, X has " + std::to_string(x_.cols()) + " columns");
    }
    if ((diag_.array() <= 0.0).any()) {
      throw InvalidArgument("NormalEquationSolver: diagonal must be strictly positive");
    }
    mode_ = config_.mode;
    if (config_.automatic) {
      mode_ = static_cast<double>(x_.cols()) > config_.woodburyRatio * static_cast<double>(x_.rows())
                  ? SolverMode::WoodburyFactorization
                  : SolverMode::DirectFactorization;
    }
    invDiag_ = diag_.cwiseInverse();
    switch (mode_) {
      case SolverMode::DirectFactorization: {
        Matrix a = diag_.asDiagonal();
        a.noalias() += x_.transpose() * x_;
        direct_.compute(a);
        if (direct_.info() != Eigen::Success) {
          throw NumericalError("NormalEquationSolver: Cholesky factorization of XᵀX + D failed");
        }
        p_ = direct_.solve(Matrix(x_.transpose()));
        k_.noalias() = x_ * p_;
        break;
      }
      case SolverMode::WoodburyFactorization: {
        xScaled_ = x_ * invDiag_.asDiagonal();
        Matrix s = Matrix::Identity(x_.rows(), x_.rows());
        s.noalias() += xScaled_ * x_.transpose();
        woodbury_.compute(s);
        if (woodbury_.info() != Eigen::Success) {
          throw NumericalError("NormalEquationSolver: Cholesky factorization of I + X D⁻¹ Xᵀ failed");
        }
        break;
      }
      case SolverMode::ConjugateGradient:
        break;
    }
  }

  /// Convenience: solver for a problem's X and a group expansion's D.
  NormalEquationSolver(const Matrix& x, const GroupExpansion& e, Config config = Config{})
      : NormalEquationSolver(x, checkedDiag(x, e), config) {}

  SolverMode mode() const { return mode_; }
  Index samples() const { return x_.rows(); }
  Index features() const { return x_.cols(); }

  /// V = A⁻¹R.
  Matrix solve(const Matrix& r) const {
    requireRows(r, x_.cols(), "NormalEquationSolver::solve");
    switch (mode_) {
      case SolverMode::DirectFactorization:
        return direct_.solve(r);
      case SolverMode::WoodburyFactorization: {
        Matrix scaled = invDiag_.asDiagonal() * r;
        Matrix v = woodbury_.solve(Matrix(x_ * scaled));
        Matrix back = x_.transpose() * v;
        return scaled - invDiag_.asDiagonal() * back;
      }
      case SolverMode::ConjugateGradient:
        return conjugateGradient(r, Matrix::Zero(r.rows(), r.cols()));
    }
    return {};
  }

  /// A·V, for residual checks.
  Matrix applyA(const Matrix& v) const {
    requireRows(v, x_.cols(), "NormalEquationSolver::applyA");
    Matrix xv = x_ * v;
    Matrix out = diag_.asDiagonal() * v;
    out.noalias() += x_.transpose() * xv;
    return out;
  }

  /// First stage of a W update: returns X·A⁻¹b (and A⁻¹b where it is free).
  PendingSolve begin(Matrix b) const {
    PendingSolve p;
    switch (mode_) {
      case SolverMode::DirectFactorization:
        p.solution = direct_.solve(b);
        p.image.noalias() = x_ * p.solution;
        break;
      case SolverMode::WoodburyFactorization: {
        Matrix u;
        u.noalias() = xScaled_ * b;
        p.image = woodbury_.solve(u);
        break;
      }
      case SolverMode::ConjugateGradient:
        p.solution = conjugateGradient(b, Matrix::Zero(b.rows(), b.cols()));
        p.image.noalias() = x_ * p.solution;
        break;
    }
    p.rhs = std::move(b);
    return p;
  }

  /// First stage for b = base + Xᵀ·residual. In Woodbury mode this needs
  /// one product with X restricted to the nonzero rows of `base`, since
  /// X·A⁻¹Xᵀr = r - S⁻¹r.
  PendingSolve beginSplit(Matrix base, Matrix residual) const {
    requireRows(base, x_.cols(), "NormalEquationSolver::beginSplit");
    requireRows(residual, x_.rows(), "NormalEquationSolver::beginSplit");
    if (mode_ != SolverMode::WoodburyFactorization) {
      Matrix b = std::move(base);
      b.noalias() += x_.transpose() * residual;
      return begin(std::move(b));
    }
    PendingSolve p;
    Matrix u = scaledProduct(base);
    u -= residual;
    p.image = woodbury_.solve(u);
    p.image += residual;
    p.base = std::move(base);
    p.residual = std::move(residual);
    p.split = true;
    return p;
  }

  /// The right-hand side b of a pending solve.
  Matrix rhsOf(const PendingSolve& p) const {
    if (!p.split) return p.rhs;
    Matrix b = p.base;
    b.noalias() += x_.transpose() * p.residual;
    return b;
  }

  /// A⁻¹b for a pending solve (materialized on demand in Woodbury mode).
  Matrix halfSolution(const PendingSolve& p) const {
    if (mode_ != SolverMode::WoodburyFactorization) return p.solution;
    return woodburySolution(p, p.image);
  }

  /// Second stage: solution of A·W = b + Xᵀ·shift and its image X·W.
  /// A null `shift` means zero.
  SolvedStep finish(const PendingSolve& p, const Matrix* shift) const {
    SolvedStep out;
    switch (mode_) {
      case SolverMode::DirectFactorization:
        out.W = p.solution;
        out.XW = p.image;
        if (shift != nullptr) {
          out.W.noalias() += p_ * (*shift);
          out.XW.noalias() += k_ * (*shift);
        }
        break;
      case SolverMode::WoodburyFactorization: {
        Matrix v = p.image;
        out.XW = p.image;
        if (shift != nullptr) {
          Matrix s = woodbury_.solve(*shift);
          v -= s;
          out.XW += *shift - s;
        }
        out.W = woodburySolution(p, v);
        break;
      }
      case SolverMode::ConjugateGradient: {
        if (shift == nullptr) {
          out.W = p.solution;
          out.XW = p.image;
        } else {
          Matrix rhs = p.rhs;
          rhs.noalias() += x_.transpose() * (*shift);
          out.W = conjugateGradient(rhs, p.solution);
          out.XW.noalias() = x_ * out.W;
        }
        break;
      }
    }
    return out;
  }

 private:
  static Vector checkedDiag(const Matrix& x, const GroupExpansion& e) {
    if (x.cols() != e.sourceDim()) {
      throw DimensionError("NormalEquationSolver: X has " + std::to_string(x.cols()) +
                           " columns but the group structure covers " +
                           std::to_string(e.sourceDim()));
    }
    return e.duplicationDiagonal();
  }

  // D⁻¹(b - Xᵀv), with b kept split when possible.
  Matrix woodburySolution(const PendingSolve& p, const Matrix& v) const {
    if (p.split) {
      Matrix t = p.residual - v;
      Matrix w = p.base;
      w.noalias() += x_.transpose() * t;
      return invDiag_.asDiagonal() * w;
    }
    Matrix back;
    back.noalias() = x_.transpose() * v;
    return invDiag_.asDiagonal() * (p.rhs - back);
  }

  // X·D⁻¹·b, skipping the zero rows of b when they dominate.
  Matrix scaledProduct(const Matrix& b) const {
    std::vector<Index> rows;
    rows.reserve(static_cast<std::size_t>(b.rows()));
    for (Index i = 0; i < b.rows(); ++i) {
      if (b.row(i).cwiseAbs().maxCoeff() != 0.0) rows.push_back(i);
    }
    Matrix u(x_.rows(), b.cols());
    if (2 * rows.size() > static_cast<std::size_t>(b.rows())) {
      u.noalias() = xScaled_ * b;
      return u;
    }
    if (rows.empty()) {
      u.setZero();
      return u;
    }
    const auto k = static_cast<Index>(rows.size());
    Matrix xs(x_.rows(), k);
    Matrix bs(k, b.cols());
    for (Index c = 0; c < k; ++c) {
      xs.col(c) = xScaled_.col(rows[static_cast<std::size_t>(c)]);
      bs.row(c) = b.row(rows[static_cast<std::size_t>(c)]);
    }
    u.noalias() = xs * bs;
    return u;
  }

  // Column-by-column preconditioned CG on A.
  Matrix conjugateGradient(const Matrix& b, const Matrix& start) const {
    Matrix out = start;
    const Vector precond = (diag_.array() + x_.colwise().squaredNorm().transpose().array()).inverse();
    for (Index c = 0; c < b.cols(); ++c) {
      Vector xk = out.col(c);
      Vector r = b.col(c) - applyA(Matrix(xk)).col(0);
      const double bnorm = std::max(b.col(c).norm(), 1e-300);
      Vector z = precond.cwiseProduct(r);
      Vector dir = z;
      double rz = r.dot(z);
      for (int it = 0; it < config_.cgMaxIterations && r.norm() > config_.cgTolerance * bnorm; ++it) {
        Vector ad = applyA(Matrix(dir)).col(0);
        const double alpha = rz / dir.dot(ad);
        xk += alpha * dir;
        r -= alpha * ad;
        z = precond.cwiseProduct(r);
        const double rzNew = r.dot(z);
        dir = z + (rzNew / rz) * dir;
        rz = rzNew;
      }
      out.col(c) = xk;
    }
    return out;
  }

  Matrix x_;
  Vector diag_;
  Vector invDiag_;
  Config config_;
  SolverMode mode_ = SolverMode::DirectFactorization;
  Eigen::LLT<Matrix> direct_;
  Eigen::LLT<Matrix> woodbury_;
  Matrix xScaled_;
  Matrix p_;
  Matrix k_;
};

/// Builds the cached solver for A = XᵀX + CᵀC.
inline NormalEquationSolver buildNormalEquationSolver(const Matrix& x, const GroupExpansion& e,
                                                      NormalEquationSolver::Config config = {}) {
  return NormalEquationSolver(x, e, config);
}

}  // namespace cmrg
