#pragma once

#include <cstddef>
#include <deque>
#include <functional>

#include "dfil/tensor.hpp"

namespace dfil {

class Tape;

// Handle to a value recorded on a tape. Cheap to copy; valid as long as the
// owning tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t index = 0;
};

// Reverse-mode gradient tape. A forward pass records one node per primitive
// operation; backward() replays the records in reverse, accumulating
// adjoints. Construction order is a topological order, so a single reverse
// sweep visits every node exactly once.
//
// A tape is single-owner: do not share one across threads while recording.
// Batched evaluations may run in parallel provided each uses its own tape.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable leaf.
  Var input(Tensor value);
  // Non-differentiable leaf; its grad() is exactly zero.
  Var constant(Tensor value);

  const Tensor& value(Var v) const { return nodes_[v.index].value; }

  // Adjoint of v from the last backward() call. Zero tensor for constants
  // and for nodes the output does not depend on.
  const Tensor& grad(Var v) const;

  // Seeds the (scalar) output with 1 and sweeps the tape in reverse.
  void backward(Var output);

  std::size_t size() const { return nodes_.size(); }

 private:
  friend struct TapeOps;  // op builders in autodiff.cpp

  struct Node {
    Tensor value;
    Tensor adjoint;
    bool requires_grad = false;
    // Reads this node's adjoint and accumulates into its parents'.
    std::function<void(Tape&)> backprop;
  };

  Var push(Tensor value, bool requires_grad, std::function<void(Tape&)> fn);
  void accumulate(std::size_t index, const Tensor& delta);
  const Tensor& adjoint_of(std::size_t index) const {
    return nodes_[index].adjoint;
  }

  // deque keeps value()/grad() references stable while ops push new nodes.
  std::deque<Node> nodes_;
  bool has_adjoints_ = false;
};

// ---- taped primitives ------------------------------------------------------
// Forward values are computed by the kernels in tensor.hpp, so taped and
// untaped evaluation are bit-identical.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);           // elementwise
Var div_elem(Var a, Var b);      // elementwise
Var scale(Var a, double c);
Var relu(Var a);
Var exp_elem(Var a);
Var log_elem(Var a);
Var sqrt_elem(Var a);
// Pass-through gradient strictly inside [lo, hi], zero outside.
Var clamp_elem(Var a, double lo, double hi);
Var add_rowvec(Var m, Var rowvec);
Var broadcast_cols(Var v, std::size_t n);
Var sum(Var a);                  // -> scalar (shape {1})
Var row_sums(Var a);             // m x n -> {m}
Var softmax_rows(Var z, double temperature);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

// ---- finite-difference verification oracle --------------------------------

// Builds a scalar expression from the input leaf; called repeatedly at
// probe points, so it must be a pure function of (tape, x).
using ScalarFn = std::function<Var(Tape&, Var)>;

// Compares the tape gradient of f at x against central finite differences.
// Returns max over coordinates of
//   |analytic - cd| / max(|analytic|, |cd|, 1e-8).
// Throws NumericError if f is non-finite at any probe point.
double grad_check(const ScalarFn& f, const Tensor& x, double eps = 1e-5);

}  // namespace dfil
