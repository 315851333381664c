#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace dfil {

// Dense row-major tensor of 64-bit floats, rank 1 or 2. Tensors are plain
// values: copying snapshots the data, so they are safe to share across
// threads once constructed.
//
// Construction validates that product(shape) == data.size() and that every
// element is finite. Kernels below re-check finiteness of their outputs so a
// non-finite value errors at the operation that produced it instead of
// propagating.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value);

  std::size_t rank() const { return shape_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  // Valid for rank-2 tensors only.
  std::size_t rows() const;
  std::size_t cols() const;

  double at(std::size_t i) const { return data_[i]; }
  double& at(std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const;
  double& at(std::size_t r, std::size_t c);

  const std::vector<double>& raw() const { return data_; }
  std::vector<double>& raw() { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // "3x4" / "5" / "scalar-less empty", for error messages.
  std::string shape_str() const;

  // Same data, new shape; element counts must agree.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  // Row r of a rank-2 tensor as a rank-1 tensor.
  Tensor row(std::size_t r) const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Throws NumericError naming `op` if any element of t is NaN or infinite.
void ensure_finite(const Tensor& t, const char* op);

// ---- value-level kernels -------------------------------------------------
// These are the single source of arithmetic truth: the autodiff tape calls
// the same kernels for its forward values, so a plain forward pass and a
// taped forward pass are bit-identical.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div_elem(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor exp_elem(const Tensor& a);
Tensor log_elem(const Tensor& a);
Tensor sqrt_elem(const Tensor& a);
Tensor clamp_elem(const Tensor& a, double lo, double hi);

// m x n plus a length-n row vector broadcast over rows.
Tensor add_rowvec(const Tensor& m, const Tensor& rowvec);
// length-m vector replicated into m x n.
Tensor broadcast_cols(const Tensor& v, std::size_t n);

double sum(const Tensor& a);
Tensor row_sums(const Tensor& a);  // m x n -> length-m
Tensor col_sums(const Tensor& a);  // m x n -> length-n

// Temperature softmax with max-subtraction. Rank-1 input.
// The output sums to 1 within 1e-12.
Tensor softmax(const Tensor& z, double temperature);
// Row-wise softmax of a rank-2 tensor.
Tensor softmax_rows(const Tensor& z, double temperature);

}  // namespace dfil
