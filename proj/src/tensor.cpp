#include "bellamy/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bellamy/error.hpp"

namespace bellamy {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::non_finite: return "non-finite";
    case ErrorKind::capacity: return "capacity";
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::schema: return "schema";
    case ErrorKind::corrupt_file: return "corrupt-file";
    case ErrorKind::version: return "version";
    case ErrorKind::training: return "training";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Vector matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) {
    throw Error(ErrorKind::shape, "matvec: matrix has " + std::to_string(a.cols()) +
                                      " columns but vector has " + std::to_string(x.size()) +
                                      " entries");
  }
  Vector y(a.rows(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double acc = 0.0;
    const auto row = a.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size()) {
    throw Error(ErrorKind::shape, "matvec_transposed: matrix has " + std::to_string(a.rows()) +
                                      " rows but vector has " + std::to_string(x.size()) +
                                      " entries");
  }
  Vector y(a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto row = a.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) y[c] += row[c] * x[r];
  }
  return y;
}

bool all_finite(std::span<const double> v) noexcept {
  return std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::shape, "dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> v) noexcept {
  double acc = 0.0;
  for (double d : v) acc += d * d;
  return std::sqrt(acc);
}

}  // namespace bellamy
