#include "dfil/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "dfil/errors.hpp"

namespace dfil {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " +
                         t.shape_str());
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         a.shape_str() + " vs " + b.shape_str());
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty() || shape_.size() > 2) {
    throw DimensionError("Tensor: rank must be 1 or 2, got rank " +
                         std::to_string(shape_.size()));
  }
  for (std::size_t d : shape_) {
    if (d == 0) throw DimensionError("Tensor: zero dimension in " + shape_str());
  }
  if (shape_product(shape_) != data_.size()) {
    throw DimensionError("Tensor: shape " + shape_str() + " needs " +
                         std::to_string(shape_product(shape_)) +
                         " elements, got " + std::to_string(data_.size()));
  }
  ensure_finite(*this, "Tensor construction");
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::vector<double> data(shape_product(shape), 0.0);
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  std::vector<double> data(shape_product(shape), value);
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows(): tensor is " + shape_str());
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols(): tensor is " + shape_str());
  return shape_[1];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data_[r * shape_[1] + c];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return data_[r * shape_[1] + c];
}

std::string Tensor::shape_str() const {
  if (shape_.empty()) return "empty";
  std::string s = std::to_string(shape_[0]);
  for (std::size_t i = 1; i < shape_.size(); ++i) {
    s += "x" + std::to_string(shape_[i]);
  }
  return s;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  if (shape_product(shape) != size()) {
    throw DimensionError("reshaped: cannot view " + shape_str() + " as new shape");
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::row(std::size_t r) const {
  require_rank2(*this, "row");
  const std::size_t n = cols();
  std::vector<double> out(n);
  for (std::size_t c = 0; c < n; ++c) out[c] = at(r, c);
  return Tensor({n}, std::move(out));
}

void ensure_finite(const Tensor& t, const char* op) {
  for (double v : t.raw()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": produced non-finite value");
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree, " + a.shape_str() +
                         " * " + b.shape_str());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a.at(i, p);
      for (std::size_t j = 0; j < n; ++j) {
        out.at(i, j) += aip * b.at(p, j);
      }
    }
  }
  ensure_finite(out, "matmul");
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  Tensor out = Tensor::zeros({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      out.at(j, i) = a.at(i, j);
    }
  }
  return out;
}

namespace {

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same_shape(a, b, op);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a.at(i), b.at(i));
  Tensor t(a.shape(), std::move(out));
  ensure_finite(t, op);
  return t;
}

template <typename F>
Tensor map(const Tensor& a, const char* op, F f) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a.at(i));
  Tensor t(a.shape(), std::move(out));
  ensure_finite(t, op);
  return t;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor div_elem(const Tensor& a, const Tensor& b) {
  return zip(a, b, "div", [](double x, double y) { return x / y; });
}

Tensor scale(const Tensor& a, double c) {
  return map(a, "scale", [c](double x) { return x * c; });
}

Tensor relu(const Tensor& a) {
  return map(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; });
}

Tensor exp_elem(const Tensor& a) {
  return map(a, "exp", [](double x) { return std::exp(x); });
}

Tensor log_elem(const Tensor& a) {
  return map(a, "log", [](double x) { return std::log(x); });
}

Tensor sqrt_elem(const Tensor& a) {
  return map(a, "sqrt", [](double x) { return std::sqrt(x); });
}

Tensor clamp_elem(const Tensor& a, double lo, double hi) {
  return map(a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); });
}

Tensor add_rowvec(const Tensor& m, const Tensor& rowvec) {
  require_rank2(m, "add_rowvec");
  if (rowvec.rank() != 1 || rowvec.size() != m.cols()) {
    throw DimensionError("add_rowvec: " + m.shape_str() + " + row of length " +
                         std::to_string(rowvec.size()));
  }
  Tensor out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      out.at(i, j) += rowvec.at(j);
    }
  }
  ensure_finite(out, "add_rowvec");
  return out;
}

Tensor broadcast_cols(const Tensor& v, std::size_t n) {
  if (v.rank() != 1) {
    throw DimensionError("broadcast_cols: expected rank-1, got " + v.shape_str());
  }
  Tensor out = Tensor::zeros({v.size(), n});
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = v.at(i);
  }
  return out;
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.raw()) s += v;
  if (!std::isfinite(s)) throw NumericError("sum: produced non-finite value");
  return s;
}

Tensor row_sums(const Tensor& a) {
  require_rank2(a, "row_sums");
  Tensor out = Tensor::zeros({a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a.at(i, j);
    out.at(i) = s;
  }
  ensure_finite(out, "row_sums");
  return out;
}

Tensor col_sums(const Tensor& a) {
  require_rank2(a, "col_sums");
  Tensor out = Tensor::zeros({a.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j) += a.at(i, j);
  }
  ensure_finite(out, "col_sums");
  return out;
}

Tensor softmax(const Tensor& z, double temperature) {
  if (temperature <= 0.0) {
    throw ParameterError("softmax: temperature must be positive, got " +
                         std::to_string(temperature));
  }
  if (z.rank() != 1) {
    throw DimensionError("softmax: expected rank-1 logits, got " + z.shape_str());
  }
  const double m = *std::max_element(z.raw().begin(), z.raw().end());
  std::vector<double> e(z.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    e[i] = std::exp((z.at(i) - m) / temperature);
    denom += e[i];
  }
  for (double& v : e) v /= denom;
  Tensor out({z.size()}, std::move(e));
  ensure_finite(out, "softmax");
  return out;
}

Tensor softmax_rows(const Tensor& z, double temperature) {
  if (temperature <= 0.0) {
    throw ParameterError("softmax_rows: temperature must be positive, got " +
                         std::to_string(temperature));
  }
  require_rank2(z, "softmax_rows");
  Tensor out = Tensor::zeros({z.rows(), z.cols()});
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double m = z.at(i, 0);
    for (std::size_t j = 1; j < z.cols(); ++j) m = std::max(m, z.at(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < z.cols(); ++j) {
      out.at(i, j) = std::exp((z.at(i, j) - m) / temperature);
      denom += out.at(i, j);
    }
    for (std::size_t j = 0; j < z.cols(); ++j) out.at(i, j) /= denom;
  }
  ensure_finite(out, "softmax_rows");
  return out;
}

}  // namespace dfil
