#include "dfil/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "dfil/errors.hpp"

namespace dfil {

namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || b.tape == nullptr || a.tape != b.tape) {
    throw ParameterError(std::string(op) + ": operands live on different tapes");
  }
}

}  // namespace

Var Tape::push(Tensor value, bool requires_grad,
               std::function<void(Tape&)> fn) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.backprop = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::input(Tensor value) { return push(std::move(value), true, nullptr); }

Var Tape::constant(Tensor value) {
  return push(std::move(value), false, nullptr);
}

const Tensor& Tape::grad(Var v) const {
  if (!has_adjoints_) throw StateError("Tape::grad: backward() has not run");
  return nodes_[v.index].adjoint;
}

void Tape::accumulate(std::size_t index, const Tensor& delta) {
  Node& node = nodes_[index];
  if (!node.requires_grad) return;  // gradients never flow into constants
  Tensor& adj = node.adjoint;
  for (std::size_t i = 0; i < adj.size(); ++i) adj.at(i) += delta.at(i);
}

void Tape::backward(Var output) {
  if (output.tape != this) {
    throw ParameterError("Tape::backward: output from a different tape");
  }
  if (nodes_[output.index].value.size() != 1) {
    throw ParameterError("Tape::backward: output must be scalar, got " +
                         nodes_[output.index].value.shape_str());
  }
  for (Node& node : nodes_) {
    node.adjoint = Tensor::zeros(node.value.shape());
  }
  has_adjoints_ = true;
  nodes_[output.index].adjoint.at(0) = 1.0;
  // Reverse construction order is a reverse topological order: each node is
  // visited exactly once, after every node that consumes it.
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backprop && node.requires_grad) node.backprop(*this);
  }
}

// ---- op builders -----------------------------------------------------------
// Pattern: compute the forward value with a tensor.hpp kernel, push the node,
// then patch in a closure that reads this node's adjoint and accumulates into
// the parents. Ops whose operands are all constants record no closure.

struct TapeOps {
  static bool rg(const Tape& t, Var v) { return t.nodes_[v.index].requires_grad; }
  static const Tensor& val(const Tape& t, std::size_t i) {
    return t.nodes_[i].value;
  }
  static const Tensor& adj(const Tape& t, std::size_t i) {
    return t.nodes_[i].adjoint;
  }
  static void acc(Tape& t, std::size_t i, const Tensor& d) {
    t.accumulate(i, d);
  }
  static Var push(Tape& t, Tensor v, bool rg) {
    return t.push(std::move(v), rg, nullptr);
  }
  static void set_bp(Tape& t, std::size_t i, std::function<void(Tape&)> fn) {
    t.nodes_[i].backprop = std::move(fn);
  }
};

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  Tape& t = *a.tape;
  const std::size_t ia = a.index, ib = b.index;
  Tensor out = matmul(TapeOps::val(t, ia), TapeOps::val(t, ib));
  const bool rg = TapeOps::rg(t, a) || TapeOps::rg(t, b);
  Var o = TapeOps::push(t, std::move(out), rg);
  if (rg) {
    const std::size_t io = o.index;
    TapeOps::set_bp(t, io, [ia, ib, io](Tape& tp) {
      const Tensor& g = TapeOps::adj(tp, io);
      TapeOps::acc(tp, ia, matmul(g, transpose(TapeOps::val(tp, ib))));
      TapeOps::acc(tp, ib, matmul(transpose(TapeOps::val(tp, ia)), g));
    });
  }
  return o;
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  const std::size_t ia = a.index;
  Tensor out = transpose(TapeOps::val(t, ia));
  const bool rg = TapeOps::rg(t, a);
  Var o = TapeOps::push(t, std::move(out), rg);
  if (rg) {
    const std::size_t io = o.index;
    TapeOps::set_bp(t, io, [ia, io](Tape& tp) {
      TapeOps::acc(tp, ia, transpose(TapeOps::adj(tp, io)));
    });
  }
  return o;
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  Tape& t = *a.tape;
  const std::size_t ia = a.index, ib = b.index;
  Tensor out = add(TapeOps::val(t, ia), TapeOps::val(t, ib));
  const bool rg = TapeOps::rg(t, a) || TapeOps::rg(t, b);
  Var o = TapeOps::push(t, std::move(out), rg);
  if (rg) {
    const std::size_t io = o.index;
    TapeOps::set_bp(t, io, [ia, ib, io](Tape& tp) {
      const Tensor& g = TapeOps::adj(tp, io);
      TapeOps::acc(tp, ia, g);
      TapeOps::acc(tp, ib, g);
    });
  }
  return o;
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  Tape& t = *a.tape;
  const std::size_t ia = a.index, ib = b.index;
  Tensor out = sub(TapeOps::val(t, ia), TapeOps::val(t, ib));
  const bool rg = TapeOps::rg(t, a) || TapeOps::rg(t, b);
  Var o = TapeOps::push(t, std::move(out), rg);
  if (rg) {
    const std::size_t io = o.index;
    TapeOps::set_bp(t, io, [ia, ib, io](Tape& tp) {
      const Tensor& g = TapeOps::adj(tp, io);
      TapeOps::acc(tp, ia, g);
      TapeOps::acc(tp, ib, scale(g, -1.0));
    });
  }
  return o;
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  Tape& t = *a.tape;
  const std::size_t ia = a.index, ib = b.index;
  Tensor out = mul(TapeOps::val(t, ia), TapeOps::val(t, ib));
  const bool rg = TapeOps::rg(t, a) || TapeOps::rg(t, b);
  Var o = TapeOps::push(t, std::move(out), rg);
  if (rg) {
    const std::size_t io = o.index;
    TapeOps::set_bp(t, io, [ia, ib, io](Tape& tp) {
      const Tensor& g = TapeOps::adj(tp, io);
      TapeOps::acc(tp, ia, mul(g, TapeOps::val(tp, ib)));
      TapeOps::acc(tp, ib, mul(g, TapeOps::val(tp, ia)));
    });
  }
  return o;
}

Var div_elem(Var a, Var b) {
  require_same_tape(a, b, "div");
  Tape& t = *a.tape;
  const std::size_t ia = a.index, ib = b.index;
  Tensor out = div_elem(TapeOps::val(t, ia), TapeOps::val(t, ib));
  const bool rg = TapeOps::rg(t, a) || TapeOps::rg(t, b);
  Var o = TapeOps::push(t, std::move(out), rg);
  if (rg) {
    const std::size_t io = o.index;
    TapeOps::set_bp(t, io, [ia, ib, io](Tape& tp) {
      const Tensor& g = TapeOps::adj(tp, io);
      const Tensor& bv = TapeOps::val(tp, ib);
      TapeOps::acc(tp, ia, div_elem(g, bv));
      // d/db (a/b) = -a / b^2
      TapeOps::acc(tp, ib,
                   scale(div_elem(mul(g, TapeOps::val(tp, ia)), mul(bv, bv)),
                         -1.0));
    });
  }
  return o;
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  const std::size_t ia = a.index;
  Tensor out = scale(TapeOps::val(t, ia), c);
  const bool rg = TapeOps::rg(t, a);
  Var o = TapeOps::push(t, std::move(out), rg);
  if (rg) {
    const std::size_t io = o.index;
    TapeOps::set_bp(t, io, [ia, io, c](Tape& tp) {
      TapeOps::acc(tp, ia, scale(TapeOps::adj(tp, io), c));
    });
  }
  return o;
}

Var relu(Var a) {
  Tape& t = *a.tape;
  const std::size_t ia = a.index;
  Tensor out = relu(TapeOps::val(t, ia));
  const bool rg = TapeOps::rg(t, a);
  Var o = TapeOps::push(t, std::move(out), rg);
  if (rg) {
    const std::size_t io = o.index;
    TapeOps::set_bp(t, io, [ia, io](Tape& tp) {
      const Tensor& g = TapeOps::adj(tp, io);
      const Tensor& x = TapeOps::val(tp, ia);
      Tensor d = Tensor::zeros(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) {
        d.at(i) = x.at(i) > 0.0 ? g.at(i) : 0.0;
      }
      TapeOps::acc(tp, ia, d);
    });
  }
  return o;
}

Var exp_elem(Var a) {
  Tape& t = *a.tape;
  const std::size_t ia = a.index;
  Tensor out = exp_elem(TapeOps::val(t, ia));
  const bool rg = TapeOps::rg(t, a);
  Var o = TapeOps::push(t, std::move(out), rg);
  if (rg) {
    const std::size_t io = o.index;
    TapeOps::set_bp(t, io, [ia, io](Tape& tp) {
      TapeOps::acc(tp, ia, mul(TapeOps::adj(tp, io), TapeOps::val(tp, io)));
    });
  }
  return o;
}

Var log_elem(Var a) {
  Tape& t = *a.tape;
  const std::size_t ia = a.index;
  const Tensor& x = TapeOps::val(t, ia);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x.at(i) <= 0.0) {
      throw NumericError("log: argument must be positive");
    }
  }
  Tensor out = log_elem(x);
  const bool rg = TapeOps::rg(t, a);
  Var o = TapeOps::push(t, std::move(out), rg);
  if (rg) {
    const std::size_t io = o.index;
    TapeOps::set_bp(t, io, [ia, io](Tape& tp) {
      TapeOps::acc(tp, ia,
                   div_elem(TapeOps::adj(tp, io), TapeOps::val(tp, ia)));
    });
  }
  return o;
}

Var sqrt_elem(Var a) {
  Tape& t = *a.tape;
  const std::size_t ia = a.index;
  const Tensor& x = TapeOps::val(t, ia);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x.at(i) < 0.0) throw NumericError("sqrt: argument must be non-negative");
  }
  Tensor out = sqrt_elem(x);
  const bool rg = TapeOps::rg(t, a);
  Var o = TapeOps::push(t, std::move(out), rg);
  if (rg) {
    const std::size_t io = o.index;
    TapeOps::set_bp(t, io, [ia, io](Tape& tp) {
      const Tensor& g = TapeOps::adj(tp, io);
      const Tensor& y = TapeOps::val(tp, io);
      Tensor d = Tensor::zeros(y.shape());
      for (std::size_t i = 0; i < y.size(); ++i) {
        d.at(i) = g.at(i) * 0.5 / y.at(i);
      }
      TapeOps::acc(tp, ia, d);
    });
  }
  return o;
}

Var clamp_elem(Var a, double lo, double hi) {
  Tape& t = *a.tape;
  const std::size_t ia = a.index;
  Tensor out = clamp_elem(TapeOps::val(t, ia), lo, hi);
  const bool rg = TapeOps::rg(t, a);
  Var o = TapeOps::push(t, std::move(out), rg);
  if (rg) {
    const std::size_t io = o.index;
    TapeOps::set_bp(t, io, [ia, io, lo, hi](Tape& tp) {
      const Tensor& g = TapeOps::adj(tp, io);
      const Tensor& x = TapeOps::val(tp, ia);
      Tensor d = Tensor::zeros(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) {
        d.at(i) = (x.at(i) > lo && x.at(i) < hi) ? g.at(i) : 0.0;
      }
      TapeOps::acc(tp, ia, d);
    });
  }
  return o;
}

Var add_rowvec(Var m, Var rowvec) {
  require_same_tape(m, rowvec, "add_rowvec");
  Tape& t = *m.tape;
  const std::size_t im = m.index, iv = rowvec.index;
  Tensor out = add_rowvec(TapeOps::val(t, im), TapeOps::val(t, iv));
  const bool rg = TapeOps::rg(t, m) || TapeOps::rg(t, rowvec);
  Var o = TapeOps::push(t, std::move(out), rg);
  if (rg) {
    const std::size_t io = o.index;
    TapeOps::set_bp(t, io, [im, iv, io](Tape& tp) {
      const Tensor& g = TapeOps::adj(tp, io);
      TapeOps::acc(tp, im, g);
      TapeOps::acc(tp, iv, col_sums(g));
    });
  }
  return o;
}

Var broadcast_cols(Var v, std::size_t n) {
  Tape& t = *v.tape;
  const std::size_t iv = v.index;
  Tensor out = broadcast_cols(TapeOps::val(t, iv), n);
  const bool rg = TapeOps::rg(t, v);
  Var o = TapeOps::push(t, std::move(out), rg);
  if (rg) {
    const std::size_t io = o.index;
    TapeOps::set_bp(t, io, [iv, io](Tape& tp) {
      TapeOps::acc(tp, iv, row_sums(TapeOps::adj(tp, io)));
    });
  }
  return o;
}

Var sum(Var a) {
  Tape& t = *a.tape;
  const std::size_t ia = a.index;
  Tensor out = Tensor::scalar(sum(TapeOps::val(t, ia)));
  const bool rg = TapeOps::rg(t, a);
  Var o = TapeOps::push(t, std::move(out), rg);
  if (rg) {
    const std::size_t io = o.index;
    TapeOps::set_bp(t, io, [ia, io](Tape& tp) {
      const double g = TapeOps::adj(tp, io).at(0);
      TapeOps::acc(tp, ia, Tensor::full(TapeOps::val(tp, ia).shape(), g));
    });
  }
  return o;
}

Var row_sums(Var a) {
  Tape& t = *a.tape;
  const std::size_t ia = a.index;
  Tensor out = row_sums(TapeOps::val(t, ia));
  const bool rg = TapeOps::rg(t, a);
  Var o = TapeOps::push(t, std::move(out), rg);
  if (rg) {
    const std::size_t io = o.index;
    TapeOps::set_bp(t, io, [ia, io](Tape& tp) {
      const std::size_t n = TapeOps::val(tp, ia).cols();
      TapeOps::acc(tp, ia, broadcast_cols(TapeOps::adj(tp, io), n));
    });
  }
  return o;
}

Var softmax_rows(Var z, double temperature) {
  Tape& t = *z.tape;
  const std::size_t iz = z.index;
  Tensor out = softmax_rows(TapeOps::val(t, iz), temperature);
  const bool rg = TapeOps::rg(t, z);
  Var o = TapeOps::push(t, std::move(out), rg);
  if (rg) {
    const std::size_t io = o.index;
    TapeOps::set_bp(t, io, [iz, io, temperature](Tape& tp) {
      // dz_ij = y_ij * (g_ij - sum_k g_ik y_ik) / T
      const Tensor& g = TapeOps::adj(tp, io);
      const Tensor& y = TapeOps::val(tp, io);
      Tensor d = Tensor::zeros(y.shape());
      for (std::size_t i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
        for (std::size_t j = 0; j < y.cols(); ++j) {
          d.at(i, j) = y.at(i, j) * (g.at(i, j) - dot) / temperature;
        }
      }
      TapeOps::acc(tp, iz, d);
    });
  }
  return o;
}

// ---- finite-difference verification oracle ---------------------------------

double grad_check(const ScalarFn& f, const Tensor& x, double eps) {
  if (eps <= 0.0) throw ParameterError("grad_check: eps must be positive");
  Tape tape;
  Var xv = tape.input(x);
  Var y = f(tape, xv);
  if (tape.value(y).size() != 1) {
    throw ParameterError("grad_check: f must be scalar-valued");
  }
  if (!std::isfinite(tape.value(y).at(0))) {
    throw NumericError("grad_check: f non-finite at x");
  }
  tape.backward(y);
  const Tensor analytic = tape.grad(xv);

  auto eval_at = [&f](const Tensor& point) {
    Tape probe;
    Var pv = probe.input(point);
    Var out = f(probe, pv);
    const double v = probe.value(out).at(0);
    if (!std::isfinite(v)) {
      throw NumericError("grad_check: f non-finite at probe point");
    }
    return v;
  };

  double max_err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor xp = x;
    Tensor xm = x;
    xp.at(i) += eps;
    xm.at(i) -= eps;
    const double cd = (eval_at(xp) - eval_at(xm)) / (2.0 * eps);
    const double denom =
        std::max({std::abs(analytic.at(i)), std::abs(cd), 1e-8});
    max_err = std::max(max_err, std::abs(analytic.at(i) - cd) / denom);
  }
  return max_err;
}

}  // namespace dfil
