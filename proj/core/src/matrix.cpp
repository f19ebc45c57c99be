#include "kga/matrix.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace kga {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("DenseMatrix: data length " + std::to_string(data_.size()) +
                                " does not match " + std::to_string(rows_) + "x" +
                                std::to_string(cols_));
  }
}

bool DenseMatrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string DenseMatrix::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + a.shape_str() + " * " + b.shape_str());
  }
  DenseMatrix out(a.rows(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  double* op = out.data().data();
  // ikj order keeps the inner loop contiguous over b and out.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = ap[i * k + kk];
      const double* brow = bp + kk * m;
      double* orow = op + i * m;
      for (std::size_t j = 0; j < m; ++j) {
        orow[j] += av * brow[j];
      }
    }
  }
  return out;
}

std::vector<double> vec_matmul(std::span<const double> x, const DenseMatrix& a) {
  if (x.size() != a.rows()) {
    throw std::invalid_argument("vec_matmul: shape mismatch 1x" + std::to_string(x.size()) +
                                " * " + a.shape_str());
  }
  std::vector<double> out(a.cols(), 0.0);
  const double* ap = a.data().data();
  const std::size_t m = a.cols();
  for (std::size_t kk = 0; kk < x.size(); ++kk) {
    const double xv = x[kk];
    const double* arow = ap + kk * m;
    for (std::size_t j = 0; j < m; ++j) out[j] += xv * arow[j];
  }
  return out;
}

std::vector<double> matmul_vec(const DenseMatrix& a, std::span<const double> x) {
  if (x.size() != a.cols()) {
    throw std::invalid_argument("matmul_vec: shape mismatch " + a.shape_str() + " * " +
                                std::to_string(x.size()) + "x1");
  }
  std::vector<double> out(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    out[i] = dot(a.row(i), x);
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void softmax_stable_inplace(std::vector<double>& logits) {
  if (logits.empty()) throw std::domain_error("softmax_stable: empty input");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    if (!std::isfinite(v)) throw std::domain_error("softmax_stable: non-finite logit");
    if (v > mx) mx = v;
  }
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : logits) v /= sum;
}

std::vector<double> softmax_stable(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  softmax_stable_inplace(out);
  return out;
}

}  // namespace kga
