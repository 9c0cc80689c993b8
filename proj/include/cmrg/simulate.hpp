#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cmrg/core.hpp"

namespace cmrg {

enum class NoiseMode { Uniform, Geometric };

inline const char* noiseModeName(NoiseMode m) { return m == NoiseMode::Uniform ? "uniform" : "geometric"; }

inline NoiseMode parseNoiseMode(const std::string& s) {
  if (s == "uniform" || s == "D0" || s == "d0") return NoiseMode::Uniform;
  if (s == "geometric" || s == "D1" || s == "d1") return NoiseMode::Geometric;
  throw InvalidArgument("unknown noise mode '" + s + "' (expected uniform or geometric)");
}

/// Synthetic benchmark configuration. Defaults follow the 400/400/10000 ×
/// 1000 × 13 layout with equicorrelated design.
struct SyntheticScenario {
  Index nTrain = 400;
  Index nValidation = 400;
  Index nTest = 10000;
  Index d = 1000;
  Index p = 13;
  double sigmaMax = std::sqrt(2.0);
  NoiseMode noiseMode = NoiseMode::Uniform;
  double gamma = 0.0;
  double delta = 5.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (nTrain < 1 || nValidation < 1 || nTest < 1 || d < 1 || p < 1) {
      throw InvalidArgument("SyntheticScenario: all dimensions must be positive");
    }
    if (!(sigmaMax > 0.0) || !std::isfinite(sigmaMax)) {
      throw InvalidArgument("SyntheticScenario: sigmaMax must be positive");
    }
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("SyntheticScenario: gamma must lie in [0, 1]");
    if (gamma > 0.0 && !(delta > 1.0)) {
      throw InvalidArgument("SyntheticScenario: delta must exceed 1 when gamma > 0");
    }
  }
};

struct DataSplit {
  Matrix X;
  Matrix Y;
  /// X·W*, the noise-free signal.
  Matrix signal;
};

struct SyntheticDataset {
  DataSplit train;
  DataSplit validation;
  DataSplit test;
  Matrix trueW;
  /// Gross errors added to the training observations.
  Matrix trueG;
  /// Per-task noise standard deviations (diagonal of the noise scale matrix).
  Vector noiseScales;
  GroupSet groups;
  SyntheticScenario scenario;
};

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mixSeed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t deriveSeed(std::uint64_t base, std::uint64_t stream) {
  return mixSeed(base ^ mixSeed(stream + 0x632be59bd9b4e019ULL));
}

/// Independent generator for one named stream of a base seed.
inline std::mt19937_64 streamEngine(std::uint64_t base, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(deriveSeed(base, stream)),
                    static_cast<std::uint32_t>(deriveSeed(base, stream) >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

namespace streams {
inline constexpr std::uint64_t kTrainX = 1, kTrainNoise = 2, kTrainGross = 3;
inline constexpr std::uint64_t kValX = 11, kValNoise = 12;
inline constexpr std::uint64_t kTestX = 21, kTestNoise = 22;
}  // namespace streams

// ---------------------------------------------------------------------------
// Generator pieces
// ---------------------------------------------------------------------------

/// Groups {1..10}, {6..15}, ..., {91..100} followed by singletons for the
/// remaining indices. For d < 100 the sliding blocks stop at the last block
/// that fits and any uncovered index becomes a singleton.
inline GroupSet simulationGroups(Index d) {
  const Index overlapRegion = std::min<Index>(d, 100);
  std::vector<std::vector<Index>> groups;
  std::vector<bool> covered(static_cast<std::size_t>(d), false);
  for (Index start = 0; start + 10 <= overlapRegion; start += 5) {
    std::vector<Index> g;
    for (Index j = start; j < start + 10; ++j) {
      g.push_back(j);
      covered[static_cast<std::size_t>(j)] = true;
    }
    groups.push_back(std::move(g));
  }
  for (Index j = 0; j < d; ++j) {
    if (!covered[static_cast<std::size_t>(j)]) groups.push_back({j});
  }
  return GroupSet(d, std::move(groups));
}

/// W*_ij = (-1)^i e^{-(i-1)/100} for 1-based i ≤ 100, zero below.
inline Matrix simulationCoefficients(Index d, Index p) {
  Matrix w = Matrix::Zero(d, p);
  for (Index i = 1; i <= std::min<Index>(d, 100); ++i) {
    const double v = (i % 2 == 0 ? 1.0 : -1.0) * std::exp(-static_cast<double>(i - 1) / 100.0);
    w.row(i - 1).setConstant(v);
  }
  return w;
}

/// σ_max for every task, or σ_max·2^{-(j-1)/4} for task j (1-based).
inline Vector noiseScalesFor(NoiseMode mode, double sigmaMax, Index p) {
  Vector s(p);
  for (Index j = 0; j < p; ++j) {
    s(j) = mode == NoiseMode::Uniform ? sigmaMax : sigmaMax * std::pow(2.0, -static_cast<double>(j) / 4.0);
  }
  return s;
}

/// Rows i.i.d. N(0, Σ) with unit variances and 0.5 correlations, sampled as
/// √0.5·z₀·1 + √0.5·z.
inline Matrix equicorrelatedDesign(Index n, Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double h = std::sqrt(0.5);
  Matrix x(n, d);
  for (Index i = 0; i < n; ++i) {
    const double shared = h * normal(rng);
    for (Index j = 0; j < d; ++j) x(i, j) = shared + h * normal(rng);
  }
  return x;
}

/// B·diag(scales) with B i.i.d. standard normal, filled row by row.
inline Matrix scaledNoise(Index n, const Vector& scales, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(n, scales.size());
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < scales.size(); ++j) z(i, j) = normal(rng) * scales(j);
  }
  return z;
}

/// `count` distinct flat positions (row-major) drawn uniformly from n·p.
inline std::vector<Index> samplePositions(Index total, Index count, std::mt19937_64& rng) {
  // Partial Fisher-Yates over an explicit index table.
  std::vector<Index> idx(static_cast<std::size_t>(total));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index k = 0; k < count; ++k) {
    std::uniform_int_distribution<Index> pick(k, total - 1);
    std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(count));
  return idx;
}

/// Sparse gross-error matrix with ⌊γ·n·p⌋ entries of magnitude δ·σ_max.
inline Matrix grossErrors(Index n, Index p, double gamma, double magnitude, std::mt19937_64& rng) {
  Matrix g = Matrix::Zero(n, p);
  const Index total = n * p;
  const auto count = static_cast<Index>(std::floor(gamma * static_cast<double>(total) + 1e-9));
  if (count == 0) return g;
  const auto positions = samplePositions(total, std::min(count, total), rng);
  std::bernoulli_distribution coin(0.5);
  for (Index flat : positions) {
    g(flat / p, flat % p) = coin(rng) ? magnitude : -magnitude;
  }
  return g;
}

inline DataSplit makeSplit(Index n, const Matrix& w, const Vector& scales, std::uint64_t seed,
                           std::uint64_t xStream, std::uint64_t noiseStream) {
  auto xr = streamEngine(seed, xStream);
  auto nr = streamEngine(seed, noiseStream);
  DataSplit s;
  s.X = equicorrelatedDesign(n, w.rows(), xr);
  s.signal.noalias() = s.X * w;
  s.Y = s.signal + scaledNoise(n, scales, nr);
  return s;
}

/// Generates train/validation/test splits. Gross errors touch the training
/// observations only. Each split and each matrix draws from its own seeded
/// stream, so resizing one split leaves the others unchanged.
inline SyntheticDataset generate(const SyntheticScenario& sc) {
  sc.validate();
  SyntheticDataset ds{.train = {},
                      .validation = {},
                      .test = {},
                      .trueW = simulationCoefficients(sc.d, sc.p),
                      .trueG = {},
                      .noiseScales = noiseScalesFor(sc.noiseMode, sc.sigmaMax, sc.p),
                      .groups = simulationGroups(sc.d),
                      .scenario = sc};
  ds.train = makeSplit(sc.nTrain, ds.trueW, ds.noiseScales, sc.seed, streams::kTrainX, streams::kTrainNoise);
  ds.validation = makeSplit(sc.nValidation, ds.trueW, ds.noiseScales, sc.seed, streams::kValX, streams::kValNoise);
  ds.test = makeSplit(sc.nTest, ds.trueW, ds.noiseScales, sc.seed, streams::kTestX, streams::kTestNoise);
  auto gr = streamEngine(sc.seed, streams::kTrainGross);
  ds.trueG = grossErrors(sc.nTrain, sc.p, sc.gamma, sc.delta * sc.sigmaMax, gr);
  ds.train.Y += ds.trueG;
  return ds;
}

struct MissingCorruption {
  Matrix corrupted;
  BoolMatrix mask;
  /// corrupted - original on masked entries, zero elsewhere.
  Matrix impliedG;
};

/// Replaces ⌊fraction·n·p⌋ uniformly chosen entries of Y by zero.
inline MissingCorruption corruptMissing(const Matrix& y, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw InvalidArgument("corruptMissing: fraction must lie in [0, 1]");
  }
  MissingCorruption out{y, BoolMatrix::Constant(y.rows(), y.cols(), false), Matrix::Zero(y.rows(), y.cols())};
  const Index total = y.size();
  const auto count = static_cast<Index>(std::floor(fraction * static_cast<double>(total) + 1e-9));
  auto rng = streamEngine(seed, 31);
  for (Index flat : samplePositions(total, std::min(count, total), rng)) {
    const Index i = flat / y.cols(), j = flat % y.cols();
    out.corrupted(i, j) = 0.0;
    out.mask(i, j) = true;
    out.impliedG(i, j) = -y(i, j);
  }
  return out;
}

}  // namespace cmrg
