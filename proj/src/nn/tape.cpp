#include "sseg/nn/tape.hpp"

#include "sseg/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sseg::nn {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(const Tensor& value, Tensor* sink) {
  Node n;
  n.ref = &value;
  n.sink = sink;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::reference(const Tensor& value) {
  Node n;
  n.ref = &value;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Tensor value, std::vector<int> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = std::any_of(parents.begin(), parents.end(), [&](int p) { return requires_grad(p); });
  if (n.requires_grad) {
    n.parents = std::move(parents);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::value(int id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  return n.ref ? *n.ref : n.value;
}

Tensor& Tape::grad(int id) {
  Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (!n.has_grad) {
    n.grad = Tensor::zeros_like(value(id));
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor* Tape::grad_if_any(int id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  return n.has_grad ? &n.grad : nullptr;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw Error(ErrorKind::InvalidArgument, "backward: variable from another tape");
  if (value(loss.id).size() != 1) {
    throw Error(ErrorKind::InvalidArgument, "backward: loss must hold a single value");
  }
  grad(loss.id).fill(1.0);
  visited_ = 0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.has_grad || !n.requires_grad) continue;
    ++visited_;
    if (n.backward) n.backward(*this, i);
    if (n.sink) n.sink->accumulate(n.grad);
  }
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw Error(ErrorKind::InvalidArgument, "operands recorded on different tapes");
  }
  return *a.tape;
}

void require_same_size(const Tensor& a, const Tensor& b, const char* op) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::InvalidArgument, std::string(op) + ": size mismatch " + std::to_string(a.size()) +
                                                " vs " + std::to_string(b.size()));
  }
}

// f maps x -> y, d maps (x, y) -> dy/dx.
template <class F, class D>
Var elementwise(Var a, F f, D d) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return t.record(std::move(y), {a.id}, [a_id = a.id, d](Tape& t, int self) {
    const Tensor& x = t.value(a_id);
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a_id);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * d(x[i], y[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.cols() != bv.rows()) {
    throw Error(ErrorKind::InvalidArgument, "matmul: inner dimensions " + std::to_string(av.cols()) + " and " +
                                                std::to_string(bv.rows()));
  }
  Tensor out = av.rank() == 1 ? Tensor({bv.cols()}) : Tensor({av.rows(), bv.cols()});
  out.matrix().noalias() = av.matrix() * bv.matrix();
  return t.record(std::move(out), {a.id, b.id}, [a_id = a.id, b_id = b.id](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a_id)) t.grad(a_id).matrix().noalias() += g.matrix() * t.value(b_id).matrix().transpose();
    if (t.requires_grad(b_id)) t.grad(b_id).matrix().noalias() += t.value(a_id).matrix().transpose() * g.matrix();
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  Tensor out({av.cols(), av.rows()});
  out.matrix() = av.matrix().transpose();
  return t.record(std::move(out), {a.id}, [a_id = a.id](Tape& t, int self) {
    t.grad(a_id).matrix() += t.grad(self).matrix().transpose();
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_size(t.value(a), t.value(b), "add");
  Tensor out = t.value(a);
  out.accumulate(t.value(b));
  return t.record(std::move(out), {a.id, b.id}, [a_id = a.id, b_id = b.id](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a_id)) t.grad(a_id).accumulate(g);
    if (t.requires_grad(b_id)) t.grad(b_id).accumulate(g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_size(av, bv, "sub");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return t.record(std::move(out), {a.id, b.id}, [a_id = a.id, b_id = b.id](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a_id)) t.grad(a_id).accumulate(g);
    if (t.requires_grad(b_id)) {
      Tensor& gb = t.grad(b_id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_size(av, bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.record(std::move(out), {a.id, b.id}, [a_id = a.id, b_id = b.id](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a_id);
    const Tensor& bv = t.value(b_id);
    if (t.requires_grad(a_id)) {
      Tensor& ga = t.grad(a_id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b_id)) {
      Tensor& gb = t.grad(b_id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var add_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  const Tensor& av = t.value(a);
  const Tensor& rv = t.value(row);
  if (rv.size() != av.cols()) throw Error(ErrorKind::InvalidArgument, "add_row: row width mismatch");
  Tensor out = av;
  out.matrix().rowwise() += rv.matrix().row(0);
  return t.record(std::move(out), {a.id, row.id}, [a_id = a.id, r_id = row.id](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a_id)) t.grad(a_id).accumulate(g);
    if (t.requires_grad(r_id)) t.grad(r_id).matrix().row(0) += g.matrix().colwise().sum();
  });
}

Var mul_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  const Tensor& av = t.value(a);
  const Tensor& rv = t.value(row);
  if (rv.size() != av.cols()) throw Error(ErrorKind::InvalidArgument, "mul_row: row width mismatch");
  Tensor out = av;
  out.matrix().array().rowwise() *= rv.matrix().row(0).array();
  return t.record(std::move(out), {a.id, row.id}, [a_id = a.id, r_id = row.id](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a_id);
    const Tensor& rv = t.value(r_id);
    if (t.requires_grad(a_id)) {
      t.grad(a_id).matrix().array() += g.matrix().array().rowwise() * rv.matrix().row(0).array();
    }
    if (t.requires_grad(r_id)) {
      t.grad(r_id).matrix().row(0).array() += (g.matrix().array() * av.matrix().array()).colwise().sum();
    }
  });
}

Var scale(Var a, double c) {
  return elementwise(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return elementwise(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var relu(Var a) {
  return elementwise(a, [](double x) { return x > 0.0 ? x : 0.0; },
                     [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return elementwise(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return elementwise(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var softplus(Var a) {
  return elementwise(
      a, [](double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); },
      [](double x, double) { return stable_sigmoid(x); });
}

Var log(Var a) {
  return elementwise(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return elementwise(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(Var a) {
  return elementwise(a, [](double x) { return std::abs(x); },
                     [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var pow(Var a, double exponent) {
  return elementwise(
      a, [exponent](double x) { return std::pow(x, exponent); },
      [exponent](double x, double) { return exponent == 0.0 ? 0.0 : exponent * std::pow(x, exponent - 1.0); });
}

Var clamp(Var a, double lo, double hi) {
  return elementwise(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                     [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  double s = 0.0;
  for (double v : av.values()) s += v;
  return t.record(Tensor::vector({s}), {a.id}, [a_id = a.id](Tape& t, int self) {
    const double g = t.grad(self)[0];
    Tensor& ga = t.grad(a_id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  return scale(sum(a), n > 0 ? 1.0 / static_cast<double>(n) : 0.0);
}

Var max_rows(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const std::size_t n = av.rows();
  const std::size_t m = av.cols();
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "max_rows: no rows");
  Tensor out({m});
  std::vector<std::size_t> arg(m, 0);
  for (std::size_t c = 0; c < m; ++c) {
    double best = av.at(0, c);
    for (std::size_t r = 1; r < n; ++r) {
      if (av.at(r, c) > best) {
        best = av.at(r, c);
        arg[c] = r;
      }
    }
    out[c] = best;
  }
  return t.record(std::move(out), {a.id}, [a_id = a.id, arg = std::move(arg)](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a_id);
    for (std::size_t c = 0; c < arg.size(); ++c) ga.at(arg[c], c) += g[c];
  });
}

Var max_of(const std::vector<Var>& items) {
  if (items.empty()) throw Error(ErrorKind::InvalidArgument, "max_of: no operands");
  Tape& t = *items.front().tape;
  std::vector<int> ids;
  for (Var v : items) {
    same_tape(items.front(), v);
    require_same_size(t.value(items.front()), t.value(v), "max_of");
    ids.push_back(v.id);
  }
  Tensor out = t.value(items.front());
  std::vector<std::size_t> arg(out.size(), 0);
  for (std::size_t k = 1; k < items.size(); ++k) {
    const Tensor& v = t.value(items[k]);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (v[i] > out[i]) {
        out[i] = v[i];
        arg[i] = k;
      }
    }
  }
  return t.record(std::move(out), ids, [ids, arg = std::move(arg)](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    for (std::size_t i = 0; i < arg.size(); ++i) {
      const int src = ids[arg[i]];
      if (t.requires_grad(src)) t.grad(src)[i] += g[i];
    }
  });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorKind::InvalidArgument, "concat: no operands");
  Tape& t = *parts.front().tape;
  const std::size_t rows = t.value(parts.front()).rows();
  bool all_vectors = true;
  std::size_t cols = 0;
  std::vector<int> ids;
  for (Var v : parts) {
    same_tape(parts.front(), v);
    const Tensor& pv = t.value(v);
    if (pv.rows() != rows) throw Error(ErrorKind::InvalidArgument, "concat: row count mismatch");
    all_vectors = all_vectors && pv.rank() == 1;
    cols += pv.cols();
    ids.push_back(v.id);
  }
  Tensor out = all_vectors ? Tensor({cols}) : Tensor({rows, cols});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (Var v : parts) {
    const Tensor& pv = t.value(v);
    out.matrix().block(0, static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(rows),
                       static_cast<Eigen::Index>(pv.cols())) = pv.matrix();
    offsets.push_back(off);
    off += pv.cols();
  }
  return t.record(std::move(out), ids, [ids, offsets = std::move(offsets)](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      Tensor& gk = t.grad(ids[k]);
      gk.matrix() += g.matrix().block(0, static_cast<Eigen::Index>(offsets[k]), static_cast<Eigen::Index>(gk.rows()),
                                      static_cast<Eigen::Index>(gk.cols()));
    }
  });
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw Error(ErrorKind::InvalidArgument, "stack_rows: no operands");
  Tape& t = *rows.front().tape;
  const std::size_t m = t.value(rows.front()).size();
  std::vector<int> ids;
  Tensor out({rows.size(), m});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    same_tape(rows.front(), rows[r]);
    const Tensor& v = t.value(rows[r]);
    if (v.size() != m) throw Error(ErrorKind::InvalidArgument, "stack_rows: width mismatch");
    std::copy(v.data(), v.data() + m, out.data() + r * m);
    ids.push_back(rows[r].id);
  }
  return t.record(std::move(out), ids, [ids, m](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (!t.requires_grad(ids[r])) continue;
      Tensor& gr = t.grad(ids[r]);
      for (std::size_t c = 0; c < m; ++c) gr[c] += g[r * m + c];
    }
  });
}

Var slice(Var a, std::size_t begin, std::size_t length) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  if (begin + length > av.size()) throw Error(ErrorKind::InvalidArgument, "slice: out of range");
  std::vector<double> v(av.data() + begin, av.data() + begin + length);
  return t.record(Tensor::vector(std::move(v)), {a.id}, [a_id = a.id, begin](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a_id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin + i] += g[i];
  });
}

Var normalize(Var a, const Tensor& fallback, double eps) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  double norm = 0.0;
  for (double v : av.values()) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm >= eps)) return t.constant(fallback);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= norm;
  return t.record(std::move(out), {a.id}, [a_id = a.id, norm](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    double yg = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) yg += y[i] * g[i];
    Tensor& ga = t.grad(a_id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += (g[i] - y[i] * yg) / norm;
  });
}

Var quat_to_matrix(Var q) {
  Tape& t = *q.tape;
  const Tensor& qv = t.value(q);
  if (qv.size() != 4) throw Error(ErrorKind::InvalidArgument, "quat_to_matrix: expected 4 components");
  const double w = qv[0], x = qv[1], y = qv[2], z = qv[3];
  Tensor r = Tensor::matrix(3, 3,
                            {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
                             2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                             2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)});
  return t.record(std::move(r), {q.id}, [q_id = q.id](Tape& t, int self) {
    const Tensor& qv = t.value(q_id);
    const double w = qv[0], x = qv[1], y = qv[2], z = qv[3];
    const Tensor& g = t.grad(self);
    // Rows: d R(i,j) / d(w, x, y, z) in row-major entry order.
    const double jac[9][4] = {
        {0, 0, -4 * y, -4 * z},        {-2 * z, 2 * y, 2 * x, -2 * w}, {2 * y, 2 * z, 2 * w, 2 * x},
        {2 * z, 2 * y, 2 * x, 2 * w},  {0, -4 * x, 0, -4 * z},         {-2 * x, -2 * w, 2 * z, 2 * y},
        {-2 * y, 2 * z, -2 * w, 2 * x}, {2 * x, 2 * w, 2 * z, 2 * y},  {0, -4 * x, -4 * y, 0},
    };
    Tensor& gq = t.grad(q_id);
    for (int e = 0; e < 9; ++e) {
      for (int k = 0; k < 4; ++k) gq[static_cast<std::size_t>(k)] += g[static_cast<std::size_t>(e)] * jac[e][k];
    }
  });
}

Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

}  // namespace sseg::nn
