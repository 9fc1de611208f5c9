#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "bellamy/tensor.hpp"

namespace bellamy {

struct NnlsOptions {
  // Dual-residual tolerance, relative to max(1, |A|_F * |b|_2).
  double tolerance = 1e-10;
  // Cap on outer active-set iterations: 3 * columns * 10.
  int max_iterations = 0;
};

struct NnlsResult {
  Vector x;
  int iterations = 0;
  double residual_norm = 0.0;
};

/// Lawson-Hanson active-set solver for min |Ax - b|_2 s.t. x >= 0.
/// Throws ErrorKind::training when the iteration cap is exceeded.
NnlsResult nnls(const Matrix& a, std::span<const double> b, const NnlsOptions& options = {});

struct ScalePoint {
  double scale_out = 0.0;
  double runtime = 0.0;
};

/// runtime = t1 + t2 / x + t3 * ln x + t4 * x with t >= 0.
struct ErnestModel {
  std::array<double, 4> theta{};
};

std::array<double, 4> ernest_features(double scale_out);
double ernest_predict(const ErnestModel& model, double scale_out);

// Fits on every point individually, or on per-scale-out medians when
// `use_medians` is set. Throws ErrorKind::insufficient_data on no points.
ErnestModel ernest_fit(std::span<const ScalePoint> points, bool use_medians = false);

enum class BellChoice { parametric, nonparametric };

struct BellModel {
  ErnestModel parametric;
  // Per-scale-out medians, ascending in scale-out.
  std::vector<ScalePoint> medians;
  BellChoice chosen = BellChoice::parametric;
  double parametric_cv_error = 0.0;
  double nonparametric_cv_error = 0.0;
};

// Median runtime per distinct scale-out, sorted by scale-out.
std::vector<ScalePoint> median_points(std::span<const ScalePoint> points);

// Piecewise-linear interpolation over `medians`; nullopt outside their range.
std::optional<double> interpolate_medians(std::span<const ScalePoint> medians, double scale_out);

/// Leave-one-scale-out cross-validation on absolute error picks between the
/// Ernest fit and the median interpolant. Needs at least three distinct
/// scale-outs; throws ErrorKind::insufficient_data otherwise.
BellModel bell_fit(std::span<const ScalePoint> points);

// Uses the interpolant inside its range when it was chosen, else Ernest.
double bell_predict(const BellModel& model, double scale_out);

}  // namespace bellamy
