#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace bellamy {

using Vector = std::vector<double>;

/// Dense row-major matrix of 64-bit floats.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// y = A x; throws ErrorKind::shape when A.cols() != x.size().
Vector matvec(const Matrix& a, std::span<const double> x);

// y = A^T x
Vector matvec_transposed(const Matrix& a, std::span<const double> x);

bool all_finite(std::span<const double> v) noexcept;

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v) noexcept;

}  // namespace bellamy
