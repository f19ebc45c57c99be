// Dense row-major double-precision matrices and the stable reductions the
// rest of the library is built on. Everything here is deterministic and
// immutable after construction; no NaN/Inf ever leaves an exposed operation.
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace kga {

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool all_finite() const;
  std::string shape_str() const;

  bool operator==(const DenseMatrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Standard product. Throws std::invalid_argument naming both shapes on a
// dimension mismatch.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

// y = x * A, with x a row vector of length A.rows().
std::vector<double> vec_matmul(std::span<const double> x, const DenseMatrix& a);

// y = A * x, with x a column vector of length A.cols().
std::vector<double> matmul_vec(const DenseMatrix& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);

// Max-subtracted softmax. Throws std::domain_error on empty or non-finite
// input; the result is a probability vector (sum == 1 within 1e-12).
std::vector<double> softmax_stable(std::span<const double> logits);

// In-place variant used by the attention kernels; same contract.
void softmax_stable_inplace(std::vector<double>& logits);

}  // namespace kga
