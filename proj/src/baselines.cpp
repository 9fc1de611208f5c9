#include "bellamy/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "bellamy/encoding.hpp"
#include "bellamy/error.hpp"

namespace bellamy {

namespace {

using EigenMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Least squares restricted to the columns in `passive`; other entries zero.
Eigen::VectorXd solve_passive(const EigenMatrix& a, const Eigen::VectorXd& b,
                              const std::vector<bool>& passive) {
  std::vector<Eigen::Index> cols;
  for (std::size_t j = 0; j < passive.size(); ++j)
    if (passive[j]) cols.push_back(static_cast<Eigen::Index>(j));
  EigenMatrix sub(a.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = a.col(cols[k]);
  const Eigen::VectorXd s = sub.completeOrthogonalDecomposition().solve(b);
  Eigen::VectorXd full = Eigen::VectorXd::Zero(a.cols());
  for (std::size_t k = 0; k < cols.size(); ++k) full(cols[k]) = s(static_cast<Eigen::Index>(k));
  return full;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

NnlsResult nnls(const Matrix& a_in, std::span<const double> b_in, const NnlsOptions& options) {
  if (a_in.rows() == 0 || a_in.cols() == 0) throw Error(ErrorKind::shape, "nnls: empty design matrix");
  if (b_in.size() != a_in.rows()) throw Error(ErrorKind::shape, "nnls: rhs length mismatch");
  if (!all_finite(a_in.values()) || !all_finite(b_in)) {
    throw Error(ErrorKind::non_finite, "nnls: non-finite input");
  }
  const auto rows = static_cast<Eigen::Index>(a_in.rows());
  const auto cols = static_cast<Eigen::Index>(a_in.cols());
  const EigenMatrix a = Eigen::Map<const EigenMatrix>(a_in.values().data(), rows, cols);
  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(b_in.data(), rows);

  const double scale = std::max(1.0, a.norm() * b.norm());
  const double tol = options.tolerance * scale;
  const int cap = options.max_iterations > 0 ? options.max_iterations : 3 * static_cast<int>(cols) * 10;

  Eigen::VectorXd x = Eigen::VectorXd::Zero(cols);
  std::vector<bool> passive(static_cast<std::size_t>(cols), false);
  int iterations = 0;

  for (;;) {
    const Eigen::VectorXd w = a.transpose() * (b - a * x);
    Eigen::Index t = -1;
    double w_max = tol;
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!passive[static_cast<std::size_t>(j)] && w(j) > w_max) {
        w_max = w(j);
        t = j;
      }
    }
    if (t < 0) break;
    if (++iterations > cap) {
      throw Error(ErrorKind::training, "nnls: no convergence after " + std::to_string(cap) +
                                           " iterations");
    }
    passive[static_cast<std::size_t>(t)] = true;

    for (;;) {
      Eigen::VectorXd s = solve_passive(a, b, passive);
      bool feasible = true;
      for (Eigen::Index j = 0; j < cols; ++j)
        if (passive[static_cast<std::size_t>(j)] && s(j) <= 0.0) feasible = false;
      if (feasible) {
        x = s;
        break;
      }
      double alpha = std::numeric_limits<double>::infinity();
      Eigen::Index blocking = -1;
      for (Eigen::Index j = 0; j < cols; ++j) {
        if (passive[static_cast<std::size_t>(j)] && s(j) <= 0.0) {
          const double step = x(j) / (x(j) - s(j));
          if (step < alpha) {
            alpha = step;
            blocking = j;
          }
        }
      }
      x += alpha * (s - x);
      // The blocking coordinate hits zero exactly in exact arithmetic.
      x(blocking) = 0.0;
      for (Eigen::Index j = 0; j < cols; ++j) {
        if (passive[static_cast<std::size_t>(j)] && x(j) <= 0.0) {
          passive[static_cast<std::size_t>(j)] = false;
          x(j) = 0.0;
        }
      }
      if (++iterations > cap) {
        throw Error(ErrorKind::training, "nnls: no convergence after " + std::to_string(cap) +
                                             " iterations");
      }
    }
  }

  NnlsResult result;
  result.x.assign(x.data(), x.data() + cols);
  for (double& v : result.x) v = std::max(v, 0.0);
  result.iterations = iterations;
  result.residual_norm = (b - a * x).norm();
  return result;
}

std::array<double, 4> ernest_features(double scale_out) {
  if (!(scale_out > 0.0)) {
    throw Error(ErrorKind::data, "ernest_features: scale-out must be positive");
  }
  return {1.0, 1.0 / scale_out, std::log(scale_out), scale_out};
}

double ernest_predict(const ErnestModel& model, double scale_out) {
  const auto f = ernest_features(scale_out);
  double y = 0.0;
  for (std::size_t i = 0; i < 4; ++i) y += model.theta[i] * f[i];
  return y;
}

std::vector<ScalePoint> median_points(std::span<const ScalePoint> points) {
  std::map<double, std::vector<double>> groups;
  for (const auto& p : points) groups[p.scale_out].push_back(p.runtime);
  std::vector<ScalePoint> out;
  for (auto& [x, ys] : groups) out.push_back({x, median_of(ys)});
  return out;
}

ErnestModel ernest_fit(std::span<const ScalePoint> points, bool use_medians) {
  if (points.empty()) throw Error(ErrorKind::insufficient_data, "ernest_fit: no points");
  const std::vector<ScalePoint> data =
      use_medians ? median_points(points) : std::vector<ScalePoint>(points.begin(), points.end());
  Matrix a(data.size(), 4);
  Vector b(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto f = ernest_features(data[i].scale_out);
    for (std::size_t j = 0; j < 4; ++j) a(i, j) = f[j];
    b[i] = data[i].runtime;
  }
  const NnlsResult r = nnls(a, b);
  ErnestModel m;
  std::copy(r.x.begin(), r.x.end(), m.theta.begin());
  return m;
}

std::optional<double> interpolate_medians(std::span<const ScalePoint> medians, double scale_out) {
  if (medians.empty()) return std::nullopt;
  if (scale_out < medians.front().scale_out || scale_out > medians.back().scale_out) {
    return std::nullopt;
  }
  for (std::size_t i = 0; i < medians.size(); ++i) {
    if (medians[i].scale_out == scale_out) return medians[i].runtime;
    if (i + 1 < medians.size() && scale_out < medians[i + 1].scale_out) {
      const auto& lo = medians[i];
      const auto& hi = medians[i + 1];
      const double t = (scale_out - lo.scale_out) / (hi.scale_out - lo.scale_out);
      return lo.runtime + t * (hi.runtime - lo.runtime);
    }
  }
  return medians.back().runtime;
}

BellModel bell_fit(std::span<const ScalePoint> points) {
  const std::vector<ScalePoint> medians = median_points(points);
  if (points.size() < 3 || medians.size() < 3) {
    throw Error(ErrorKind::insufficient_data,
                "Bell needs at least three points with distinct scale-outs, got " +
                    std::to_string(points.size()) + " points / " +
                    std::to_string(medians.size()) + " scale-outs");
  }

  double parametric_err = 0.0;
  double nonparametric_err = 0.0;
  for (const auto& held : medians) {
    std::vector<ScalePoint> rest;
    for (const auto& p : points)
      if (p.scale_out != held.scale_out) rest.push_back(p);
    const ErnestModel ernest = ernest_fit(rest);
    const std::vector<ScalePoint> rest_medians = median_points(rest);
    for (const auto& p : points) {
      if (p.scale_out != held.scale_out) continue;
      const double param = ernest_predict(ernest, p.scale_out);
      const double nonparam = interpolate_medians(rest_medians, p.scale_out).value_or(param);
      parametric_err += std::abs(param - p.runtime);
      nonparametric_err += std::abs(nonparam - p.runtime);
    }
  }

  BellModel model;
  model.parametric = ernest_fit(points);
  model.medians = medians;
  model.parametric_cv_error = parametric_err / static_cast<double>(points.size());
  model.nonparametric_cv_error = nonparametric_err / static_cast<double>(points.size());
  model.chosen = model.nonparametric_cv_error < model.parametric_cv_error ? BellChoice::nonparametric
                                                                          : BellChoice::parametric;
  return model;
}

double bell_predict(const BellModel& model, double scale_out) {
  if (model.chosen == BellChoice::nonparametric) {
    if (auto v = interpolate_medians(model.medians, scale_out)) return *v;
  }
  return ernest_predict(model.parametric, scale_out);
}

}  // namespace bellamy
