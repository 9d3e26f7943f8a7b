#include "taso/tensor/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "taso/tensor/kernels.hpp"

namespace taso::ad {

const Matrix& Var::value() const {
  if (tape_ == nullptr) throw ContractError("use of an unbound Var");
  return tape_->value_of(index_);
}

bool Var::requires_grad() const {
  return tape_ != nullptr && tape_->requires_grad_of(index_);
}

Var Tape::leaf(Matrix value, bool requires_grad, std::optional<TensorId> id) {
  if (consumed_) throw ContractError("tape already consumed by backward()");
  if (!value.all_finite()) throw NumericError("non-finite leaf value");
  nodes_.push_back(Node{std::move(value), nullptr, requires_grad, std::move(id)});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return leaf(std::move(value), false, std::nullopt); }

Var Tape::parameter(TensorId id, Matrix value) {
  return leaf(std::move(value), true, std::move(id));
}

Var Tape::observe(TensorId id, Matrix value) {
  return leaf(std::move(value), true, std::move(id));
}

Var Tape::record(Matrix value, std::initializer_list<Var> operands, BackwardFn backward) {
  if (consumed_) throw ContractError("tape already consumed by backward()");
  bool needs_grad = false;
  for (const Var& v : operands) {
    if (v.tape() != this) throw ContractError("operand recorded on a different tape");
    needs_grad = needs_grad || v.requires_grad();
  }
  if (!value.all_finite()) throw NumericError("operation produced a non-finite value");
  nodes_.push_back(Node{std::move(value), needs_grad ? std::move(backward) : nullptr, needs_grad,
                        std::nullopt});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(const Var& target, const Matrix& contribution) {
  if (!in_backward_) throw ContractError("accumulate() outside backward()");
  if (!target.requires_grad()) return;
  auto& slot = grads_[target.index()];
  if (!slot) {
    slot = contribution;
  } else {
    for (std::size_t i = 0; i < slot->size(); ++i) (*slot)[i] += contribution[i];
  }
}

GradientMap Tape::backward(Var loss) {
  if (consumed_) throw ContractError("backward() called twice on the same tape");
  if (loss.tape() != this) throw ContractError("loss belongs to a different tape");
  if (loss.rows() != 1 || loss.cols() != 1)
    throw ContractError("backward() needs a scalar loss, got " + loss.value().shape());
  consumed_ = true;
  in_backward_ = true;
  grads_.assign(nodes_.size(), std::nullopt);
  if (nodes_[loss.index()].requires_grad) grads_[loss.index()] = Matrix(1, 1, 1.0);

  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || !grads_[i] || !node.backward) continue;
    node.backward(*grads_[i]);
    node.backward = nullptr;
  }
  in_backward_ = false;

  GradientMap out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& node = nodes_[i];
    if (!node.leaf_id) continue;
    out[*node.leaf_id] = grads_[i] ? std::move(*grads_[i])
                                   : Matrix(node.value.rows(), node.value.cols());
  }
  grads_.clear();
  return out;
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.value().shape() + " vs " +
                     b.value().shape());
}

Tape& tape_of(const Var& a) {
  if (a.tape() == nullptr) throw ContractError("use of an unbound Var");
  return *a.tape();
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_slope(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Matrix softmax_rows(const Matrix& a) {
  Matrix p(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row(i);
    auto out = p.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      out[j] = std::exp(in[j] - mx);
      z += out[j];
    }
    for (double& v : out) v /= z;
  }
  return p;
}

// grad_in = p * (g - rowsum(g * p))
Matrix softmax_rows_backward(const Matrix& p, const Matrix& g) {
  Matrix out(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) dot += g(i, j) * p(i, j);
    for (std::size_t j = 0; j < p.cols(); ++j) out(i, j) = p(i, j) * (g(i, j) - dot);
  }
  return out;
}

std::size_t checked_label(double raw, std::size_t classes) {
  if (raw < 0.0 || raw != std::floor(raw) || raw >= static_cast<double>(classes))
    throw ContractError("class label " + std::to_string(raw) + " outside [0, " +
                        std::to_string(classes) + ")");
  return static_cast<std::size_t>(raw);
}

Matrix block(const Matrix& m, std::size_t first_row, std::size_t rows) {
  std::vector<double> data(m.data().begin() + static_cast<std::ptrdiff_t>(first_row * m.cols()),
                           m.data().begin() +
                               static_cast<std::ptrdiff_t>((first_row + rows) * m.cols()));
  return Matrix(rows, m.cols(), std::move(data));
}

void put_block(Matrix& dst, std::size_t first_row, const Matrix& src) {
  std::copy(src.data().begin(), src.data().end(),
            dst.data().begin() + static_cast<std::ptrdiff_t>(first_row * dst.cols()));
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  return t.record(kernels::matmul(a.value(), b.value()), {a, b}, [&t, a, b](const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a, kernels::matmul_nt(g, b.value()));
    if (b.requires_grad()) t.accumulate(b, kernels::matmul_tn(a.value(), g));
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a);
  return t.record(kernels::matmul_nt(a.value(), b.value()), {a, b}, [&t, a, b](const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a, kernels::matmul(g, b.value()));
    if (b.requires_grad()) t.accumulate(b, kernels::matmul_tn(g, a.value()));
  });
}

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tape& t = tape_of(a);
  return t.record(a.value() + b.value(), {a, b}, [&t, a, b](const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tape& t = tape_of(a);
  return t.record(a.value() - b.value(), {a, b}, [&t, a, b](const Matrix& g) {
    t.accumulate(a, g);
    if (b.requires_grad()) t.accumulate(b, -1.0 * g);
  });
}

Var hadamard(Var a, Var b) {
  check_same_shape(a, b, "hadamard");
  Tape& t = tape_of(a);
  return t.record(taso::hadamard(a.value(), b.value()), {a, b}, [&t, a, b](const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a, taso::hadamard(g, b.value()));
    if (b.requires_grad()) t.accumulate(b, taso::hadamard(g, a.value()));
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  return t.record(s * a.value(), {a}, [&t, a, s](const Matrix& g) { t.accumulate(a, s * g); });
}

Var add_row_broadcast(Var a, Var bias) {
  const Matrix& av = a.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols())
    throw ShapeError("add_row_broadcast: bias " + bv.shape() + " does not match " + av.shape());
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv(0, j);
  Tape& t = tape_of(a);
  return t.record(std::move(out), {a, bias}, [&t, a, bias](const Matrix& g) {
    t.accumulate(a, g);
    if (bias.requires_grad()) {
      Matrix gb(1, g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
      t.accumulate(bias, gb);
    }
  });
}

Var relu(Var a) {
  Matrix out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  Tape& t = tape_of(a);
  return t.record(std::move(out), {a}, [&t, a](const Matrix& g) {
    Matrix ga = g;
    const Matrix& x = a.value();
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (!(x[i] > 0.0)) ga[i] = 0.0;
    t.accumulate(a, ga);
  });
}

Var gelu(Var a) {
  Matrix out = a.value();
  for (double& v : out.data()) v = gelu_value(v);
  Tape& t = tape_of(a);
  return t.record(std::move(out), {a}, [&t, a](const Matrix& g) {
    Matrix ga = g;
    const Matrix& x = a.value();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= gelu_slope(x[i]);
    t.accumulate(a, ga);
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  return t.record(a.value().transposed(), {a},
                  [&t, a](const Matrix& g) { t.accumulate(a, g.transposed()); });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.value().size())
    throw ShapeError("reshape: cannot view " + a.value().shape() + " as " +
                     Matrix::shape_string(rows, cols));
  Tape& t = tape_of(a);
  const std::size_t r0 = a.rows();
  const std::size_t c0 = a.cols();
  return t.record(a.value().reshaped(rows, cols), {a},
                  [&t, a, r0, c0](const Matrix& g) { t.accumulate(a, g.reshaped(r0, c0)); });
}

Var row_softmax(Var a) {
  Tape& t = tape_of(a);
  Matrix p = softmax_rows(a.value());
  Matrix saved = p;
  return t.record(std::move(p), {a}, [&t, a, saved = std::move(saved)](const Matrix& g) {
    t.accumulate(a, softmax_rows_backward(saved, g));
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  Tape& t = tape_of(a);
  return t.record(Matrix(1, 1, s), {a}, [&t, a](const Matrix& g) {
    t.accumulate(a, Matrix(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean of an empty matrix");
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  Tape& t = tape_of(a);
  return t.record(Matrix(1, 1, s / n), {a}, [&t, a, n](const Matrix& g) {
    t.accumulate(a, Matrix(a.rows(), a.cols(), g(0, 0) / n));
  });
}

Var cross_entropy(Var logits, const Matrix& labels) {
  const Matrix& z = logits.value();
  if (labels.rows() != z.rows() || labels.cols() < 1)
    throw ShapeError("cross_entropy: labels " + labels.shape() + " vs logits " + z.shape());
  if (z.rows() == 0) throw ShapeError("cross_entropy of an empty batch");
  const std::size_t n = z.rows();
  const std::size_t c = z.cols();
  std::vector<std::size_t> cls(n);
  for (std::size_t i = 0; i < n; ++i) cls[i] = checked_label(labels(i, 0), c);

  Matrix p = softmax_rows(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = z.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - mx);
    loss += (mx + std::log(s)) - row[cls[i]];
  }
  loss /= static_cast<double>(n);

  Tape& t = tape_of(logits);
  return t.record(Matrix(1, 1, loss), {logits},
                  [&t, logits, p = std::move(p), cls = std::move(cls)](const Matrix& g) {
                    Matrix grad = p;
                    const double w = g(0, 0) / static_cast<double>(grad.rows());
                    for (std::size_t i = 0; i < grad.rows(); ++i) {
                      grad(i, cls[i]) -= 1.0;
                      for (std::size_t j = 0; j < grad.cols(); ++j) grad(i, j) *= w;
                    }
                    t.accumulate(logits, grad);
                  });
}

Var mean_squared_error(Var pred, const Matrix& target) {
  const Matrix& y = pred.value();
  if (!y.same_shape(target))
    throw ShapeError("mean_squared_error: target " + target.shape() + " vs prediction " +
                     y.shape());
  if (y.empty()) throw ShapeError("mean_squared_error of an empty batch");
  Matrix diff = y - target;
  double s = 0.0;
  for (double v : diff.data()) s += v * v;
  const double n = static_cast<double>(diff.size());
  Tape& t = tape_of(pred);
  return t.record(Matrix(1, 1, s / n), {pred},
                  [&t, pred, diff = std::move(diff), n](const Matrix& g) {
                    t.accumulate(pred, (2.0 * g(0, 0) / n) * diff);
                  });
}

Var self_attention(Var q, Var k, Var v, std::size_t tokens) {
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  if (!qv.same_shape(kv) || !qv.same_shape(vv))
    throw ShapeError("self_attention: q/k/v shapes " + qv.shape() + ", " + kv.shape() + ", " +
                     vv.shape());
  if (tokens == 0 || qv.rows() % tokens != 0)
    throw ShapeError("self_attention: " + std::to_string(qv.rows()) +
                     " rows do not split into groups of " + std::to_string(tokens));
  const std::size_t groups = qv.rows() / tokens;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(qv.cols()));

  Matrix out(qv.rows(), qv.cols());
  Matrix probs(qv.rows(), tokens);
  for (std::size_t e = 0; e < groups; ++e) {
    const std::size_t r0 = e * tokens;
    Matrix scores = inv_sqrt_d * kernels::matmul_nt(block(qv, r0, tokens), block(kv, r0, tokens));
    Matrix p = softmax_rows(scores);
    put_block(out, r0, kernels::matmul(p, block(vv, r0, tokens)));
    put_block(probs, r0, p);
  }

  Tape& t = tape_of(q);
  return t.record(std::move(out), {q, k, v},
                  [&t, q, k, v, tokens, groups, inv_sqrt_d,
                   probs = std::move(probs)](const Matrix& g) {
                    const Matrix& qv = q.value();
                    Matrix gq(qv.rows(), qv.cols());
                    Matrix gk(qv.rows(), qv.cols());
                    Matrix gv(qv.rows(), qv.cols());
                    for (std::size_t e = 0; e < groups; ++e) {
                      const std::size_t r0 = e * tokens;
                      const Matrix p = block(probs, r0, tokens);
                      const Matrix ge = block(g, r0, tokens);
                      const Matrix qe = block(qv, r0, tokens);
                      const Matrix ke = block(k.value(), r0, tokens);
                      const Matrix ve = block(v.value(), r0, tokens);
                      put_block(gv, r0, kernels::matmul_tn(p, ge));
                      const Matrix gp = kernels::matmul_nt(ge, ve);
                      const Matrix gs = inv_sqrt_d * softmax_rows_backward(p, gp);
                      put_block(gq, r0, kernels::matmul(gs, ke));
                      put_block(gk, r0, kernels::matmul_tn(gs, qe));
                    }
                    t.accumulate(q, gq);
                    t.accumulate(k, gk);
                    t.accumulate(v, gv);
                  });
}

Var token_mean_pool(Var a, std::size_t tokens) {
  const Matrix& x = a.value();
  if (tokens == 0 || x.rows() % tokens != 0)
    throw ShapeError("token_mean_pool: " + std::to_string(x.rows()) +
                     " rows do not split into groups of " + std::to_string(tokens));
  const std::size_t groups = x.rows() / tokens;
  const double w = 1.0 / static_cast<double>(tokens);
  Matrix out(groups, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i / tokens, j) += w * x(i, j);
  Tape& t = tape_of(a);
  return t.record(std::move(out), {a}, [&t, a, tokens, w](const Matrix& g) {
    Matrix ga(a.rows(), a.cols());
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) = w * g(i / tokens, j);
    t.accumulate(a, ga);
  });
}

double scalar(const Var& v) {
  const Matrix& m = v.value();
  if (m.rows() != 1 || m.cols() != 1) throw ContractError("scalar() on " + m.shape());
  return m(0, 0);
}

}  // namespace taso::ad
