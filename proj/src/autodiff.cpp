#include "tilenet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tilenet {

void zero_grads(const ParameterList& params) {
  for (Parameter* p : params) p->zero_grad();
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var(this, it->second);
  Node n;
  n.borrowed = &p.value;
  n.param = &p;
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  const std::size_t id = nodes_.size() - 1;
  param_ids_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape() != this) throw std::logic_error("operand recorded on a different tape");
    if (nodes_[in.id()].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id()];
  if (n.grad.empty()) n.grad = Tensor(value(v.id()).shape());
  return n.grad;
}

void Tape::backward(Var root, double seed) {
  if (root.tape() != this) throw std::logic_error("backward: root recorded on a different tape");
  if (value(root.id()).size() != 1) {
    throw ShapeError("backward: root must be a single value, got " +
                     shape_string(value(root.id()).shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  if (!nodes_[root.id()].requires_grad) return;
  grad_buffer(root)[0] = seed;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, value(i), n.grad);
    if (n.param) {
      if (n.param->grad.empty()) n.param->zero_grad();
      n.param->grad.add_in_place(n.grad);
    }
  }
}

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::logic_error("operation on an unbound Var");
  return *a.tape();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

// Elementwise map whose derivative is expressed through (input, output).
template <typename F, typename D>
Var unary_map(Var a, F f, D df) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return t.record(std::move(y), {a}, [a, df](Tape& tp, const Tensor& yv, const Tensor& g) {
    if (!tp.requires_grad(a)) return;
    const Tensor& xv = a.value();
    Tensor& ga = tp.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(xv[i], yv[i]);
  });
}

void check_mask(const char* op, const Tensor& logits, const std::vector<bool>& masked) {
  if (logits.rows() != 1) throw ShapeError(std::string(op) + ": logits must be a single row");
  if (masked.size() != logits.cols()) {
    throw ShapeError(std::string(op) + ": mask length " + std::to_string(masked.size()) +
                     " vs " + std::to_string(logits.cols()) + " logits");
  }
  if (std::all_of(masked.begin(), masked.end(), [](bool m) { return m; })) {
    throw std::invalid_argument(std::string(op) + ": every entry is masked");
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  Tensor c = matmul(a.value(), b.value());
  return t.record(std::move(c), {a, b}, [a, b](Tape& tp, const Tensor&, const Tensor& g) {
    if (tp.requires_grad(a)) matmul_nt_into(g, b.value(), tp.grad_buffer(a), true);
    if (tp.requires_grad(b)) matmul_tn_into(a.value(), g, tp.grad_buffer(b), true);
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor y = Tensor::matrix(x.cols(), x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) y.at(c, r) = x.at(r, c);
  return t.record(std::move(y), {a}, [a](Tape& tp, const Tensor&, const Tensor& g) {
    if (!tp.requires_grad(a)) return;
    Tensor& ga = tp.grad_buffer(a);
    const std::size_t rows = ga.rows(), cols = ga.cols();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) ga.at(r, c) += g.at(c, r);
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const bool broadcast = y.rows() == 1 && x.rows() > 1 && y.cols() == x.cols();
  if (!broadcast) require_same_shape("add", x, y);
  Tensor out = x;
  const std::size_t cols = x.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += broadcast ? y[i % cols] : y[i];
  return t.record(std::move(out), {a, b},
                  [a, b, broadcast](Tape& tp, const Tensor&, const Tensor& g) {
                    if (tp.requires_grad(a)) tp.grad_buffer(a).add_in_place(g);
                    if (!tp.requires_grad(b)) return;
                    Tensor& gb = tp.grad_buffer(b);
                    if (broadcast) {
                      const std::size_t c = gb.cols();
                      for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
                    } else {
                      gb.add_in_place(g);
                    }
                  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  const Tensor& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor&, const Tensor& g) {
    if (tp.requires_grad(a)) tp.grad_buffer(a).add_in_place(g);
    if (tp.requires_grad(b)) {
      Tensor& gb = tp.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  const Tensor& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor&, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (tp.requires_grad(a)) {
      Tensor& ga = tp.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(b)) {
      Tensor& gb = tp.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  return unary_map(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var tanh(Var a) {
  return unary_map(a, [](double x) { return std::tanh(x); },
                   [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary_map(a, [](double x) { return x > 0.0 ? x : 0.0; },
                   [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary_map(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var softmax_rows(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  const std::size_t rows = x.rows(), cols = x.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) m = std::max(m, x.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (y.at(r, c) = std::exp(x.at(r, c) - m));
    for (std::size_t c = 0; c < cols; ++c) y.at(r, c) /= z;
  }
  return t.record(std::move(y), {a}, [a](Tape& tp, const Tensor& yv, const Tensor& g) {
    if (!tp.requires_grad(a)) return;
    Tensor& ga = tp.grad_buffer(a);
    const std::size_t rows = yv.rows(), cols = yv.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g.at(r, c) * yv.at(r, c);
      for (std::size_t c = 0; c < cols; ++c) ga.at(r, c) += yv.at(r, c) * (g.at(r, c) - dot);
    }
  });
}

Var softmax_masked(Var logits, const std::vector<bool>& masked) {
  Tape& t = tape_of(logits);
  const Tensor& x = logits.value();
  check_mask("softmax_masked", x, masked);
  Tensor y(x.shape());
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!masked[i]) m = std::max(m, x[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!masked[i]) z += (y[i] = std::exp(x[i] - m));
  for (std::size_t i = 0; i < x.size(); ++i) y[i] /= z;
  return t.record(std::move(y), {logits},
                  [logits](Tape& tp, const Tensor& yv, const Tensor& g) {
                    if (!tp.requires_grad(logits)) return;
                    Tensor& ga = tp.grad_buffer(logits);
                    double dot = 0.0;
                    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * yv[i];
                    // Masked outputs are identically zero, so their yv term vanishes.
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += yv[i] * (g[i] - dot);
                  });
}

Var log_softmax_masked_at(Var logits, const std::vector<bool>& masked, std::size_t index) {
  Tape& t = tape_of(logits);
  const Tensor& x = logits.value();
  check_mask("log_softmax_masked_at", x, masked);
  if (index >= x.size() || masked[index]) {
    throw std::invalid_argument("log_softmax_masked_at: index " + std::to_string(index) +
                                " is masked or out of range");
  }
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!masked[i]) m = std::max(m, x[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!masked[i]) z += std::exp(x[i] - m);
  const double log_z = m + std::log(z);
  Tensor out = Tensor::scalar(x[index] - log_z);
  return t.record(std::move(out), {logits},
                  [logits, masked, index, log_z](Tape& tp, const Tensor&, const Tensor& g) {
                    if (!tp.requires_grad(logits)) return;
                    const Tensor& xv = logits.value();
                    Tensor& ga = tp.grad_buffer(logits);
                    for (std::size_t i = 0; i < xv.size(); ++i) {
                      if (masked[i]) continue;
                      const double p = std::exp(xv[i] - log_z);
                      ga[i] += g[0] * ((i == index ? 1.0 : 0.0) - p);
                    }
                  });
}

Var entropy_masked(Var logits, const std::vector<bool>& masked) {
  Tape& t = tape_of(logits);
  const Tensor& x = logits.value();
  check_mask("entropy_masked", x, masked);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!masked[i]) m = std::max(m, x[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!masked[i]) z += std::exp(x[i] - m);
  const double log_z = m + std::log(z);
  double h = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (masked[i]) continue;
    const double lp = x[i] - log_z;
    h -= std::exp(lp) * lp;
  }
  return t.record(Tensor::scalar(h), {logits},
                  [logits, masked, log_z, h](Tape& tp, const Tensor&, const Tensor& g) {
                    if (!tp.requires_grad(logits)) return;
                    const Tensor& xv = logits.value();
                    Tensor& ga = tp.grad_buffer(logits);
                    for (std::size_t i = 0; i < xv.size(); ++i) {
                      if (masked[i]) continue;
                      const double lp = xv[i] - log_z;
                      ga[i] -= g[0] * std::exp(lp) * (lp + h);
                    }
                  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gain.value().size() != cols || bias.value().size() != cols) {
    throw ShapeError("layer_norm_rows: gain/bias width must equal " + std::to_string(cols));
  }
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += xv.at(r, c);
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = xv.at(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) xhat.at(r, c) = (xv.at(r, c) - mean) * inv_std[r];
  }
  Tensor y(xv.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y.at(r, c) = gv[c] * xhat.at(r, c) + bv[c];
  return t.record(
      std::move(y), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& tp, const Tensor&, const Tensor& g) {
        const std::size_t rows = xhat.rows(), cols = xhat.cols();
        const Tensor& gv = gain.value();
        if (tp.requires_grad(gain)) {
          Tensor& gg = tp.grad_buffer(gain);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gg[c] += g.at(r, c) * xhat.at(r, c);
        }
        if (tp.requires_grad(bias)) {
          Tensor& gb = tp.grad_buffer(bias);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gb[c] += g.at(r, c);
        }
        if (!tp.requires_grad(x)) return;
        Tensor& gx = tp.grad_buffer(x);
        const double inv_n = 1.0 / static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            const double d = g.at(r, c) * gv[c];
            mean_d += d;
            mean_dx += d * xhat.at(r, c);
          }
          mean_d *= inv_n;
          mean_dx *= inv_n;
          for (std::size_t c = 0; c < cols; ++c) {
            const double d = g.at(r, c) * gv[c];
            gx.at(r, c) += inv_std[r] * (d - mean_d - xhat.at(r, c) * mean_dx);
          }
        }
      });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape& t = tape_of(parts[0]);
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.value().cols();
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out.at(r, offset + c) = v.at(r, c);
    offset += v.cols();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [ins](Tape& tp, const Tensor&, const Tensor& g) {
    std::size_t offset = 0;
    const std::size_t total = g.cols();
    for (const Var& p : ins) {
      const std::size_t w = p.value().cols();
      if (tp.requires_grad(p)) {
        Tensor& gp = tp.grad_buffer(p);
        for (std::size_t r = 0; r < gp.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) gp.at(r, c) += g[r * total + offset + c];
      }
      offset += w;
    }
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t len) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (len == 0 || start + len > x.cols()) throw ShapeError("slice_cols: range out of bounds");
  Tensor out = Tensor::matrix(x.rows(), len);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < len; ++c) out.at(r, c) = x.at(r, start + c);
  return t.record(std::move(out), {a}, [a, start, len](Tape& tp, const Tensor&, const Tensor& g) {
    if (!tp.requires_grad(a)) return;
    Tensor& ga = tp.grad_buffer(a);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < len; ++c) ga.at(r, start + c) += g.at(r, c);
  });
}

Var row(Var a, std::size_t r) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (r >= x.rows()) throw ShapeError("row: index out of range");
  std::vector<double> vals(x.row_span(r).begin(), x.row_span(r).end());
  return t.record(Tensor::row(std::move(vals)), {a},
                  [a, r](Tape& tp, const Tensor&, const Tensor& g) {
                    if (!tp.requires_grad(a)) return;
                    Tensor& ga = tp.grad_buffer(a);
                    for (std::size_t c = 0; c < g.size(); ++c) ga.at(r, c) += g[c];
                  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a);
  Tensor out = a.value().reshaped(std::move(shape));
  return t.record(std::move(out), {a}, [a](Tape& tp, const Tensor&, const Tensor& g) {
    if (tp.requires_grad(a)) tp.grad_buffer(a).add_in_place(g);
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.record(Tensor::scalar(s), {a}, [a](Tape& tp, const Tensor&, const Tensor& g) {
    if (!tp.requires_grad(a)) return;
    Tensor& ga = tp.grad_buffer(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
  });
}

Var bce_with_logits(Var logits, const Tensor& labels) {
  Tape& t = tape_of(logits);
  const Tensor& z = logits.value();
  if (z.size() != labels.size()) throw ShapeError("bce_with_logits: label count mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    loss += std::max(z[i], 0.0) - z[i] * labels[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  const double n = static_cast<double>(z.size());
  return t.record(Tensor::scalar(loss / n), {logits},
                  [logits, labels, n](Tape& tp, const Tensor&, const Tensor& g) {
                    if (!tp.requires_grad(logits)) return;
                    const Tensor& zv = logits.value();
                    Tensor& gz = tp.grad_buffer(logits);
                    for (std::size_t i = 0; i < zv.size(); ++i) {
                      const double s = 1.0 / (1.0 + std::exp(-zv[i]));
                      gz[i] += g[0] * (s - labels[i]) / n;
                    }
                  });
}

}  // namespace tilenet
