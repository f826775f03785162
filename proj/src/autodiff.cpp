#include "cirgps/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace cirgps::ad {

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::parameter(Parameter& p) {
  Var v = push(p.value, p.trainable && !p.buffer, nullptr);
  nodes_.back().param = &p;
  return v;
}

Var Tape::push(Matrix value, bool needs_grad, std::function<void()> backward) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  if (needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::grad_ref(int id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad.setZero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

const Matrix& Tape::grad(Var v) { return grad_ref(v.id()); }

void Tape::backward(Var root) {
  if (root.tape() != this) throw std::invalid_argument("root belongs to another tape");
  const Matrix& r = value(root.id());
  if (r.rows() != 1 || r.cols() != 1) throw std::invalid_argument("backward needs a scalar root");
  if (!nodes_[root.id()].needs_grad) return;
  grad_ref(root.id())(0, 0) += 1.0;
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.needs_grad) continue;
    if (n.backward) n.backward();
    if (n.param != nullptr) {
      if (n.param->grad.rows() != n.value.rows() || n.param->grad.cols() != n.value.cols()) n.param->zero_grad();
      n.param->grad += n.grad;
    }
  }
}

namespace {

void check_same_tape(Var a, Var b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) throw std::invalid_argument("operands live on different tapes");
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape* t = a.tape();
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  Matrix out(av.rows(), bv.cols());
  out.noalias() = av * bv;
  const int ia = a.id();
  const int ib = b.id();
  const int io = static_cast<int>(t->size());
  return t->push(std::move(out), t->needs_grad(ia) || t->needs_grad(ib), [t, ia, ib, io] {
    const Matrix& g = t->grad_ref(io);
    if (t->needs_grad(ia)) t->grad_ref(ia).noalias() += g * t->value(ib).transpose();
    if (t->needs_grad(ib)) t->grad_ref(ib).noalias() += t->value(ia).transpose() * g;
  });
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "add");
  Tape* t = a.tape();
  const int ia = a.id();
  const int ib = b.id();
  const int io = static_cast<int>(t->size());
  return t->push(a.value() + b.value(), t->needs_grad(ia) || t->needs_grad(ib), [t, ia, ib, io] {
    const Matrix& g = t->grad_ref(io);
    if (t->needs_grad(ia)) t->grad_ref(ia) += g;
    if (t->needs_grad(ib)) t->grad_ref(ib) += g;
  });
}

Var add_bias(Var a, Var bias) {
  check_same_tape(a, bias);
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != a.cols()) throw std::invalid_argument("add_bias: bias must be 1 x cols");
  Tape* t = a.tape();
  Matrix out = a.value();
  out.rowwise() += bv.row(0);
  const int ia = a.id();
  const int ib = bias.id();
  const int io = static_cast<int>(t->size());
  return t->push(std::move(out), t->needs_grad(ia) || t->needs_grad(ib), [t, ia, ib, io] {
    const Matrix& g = t->grad_ref(io);
    if (t->needs_grad(ia)) t->grad_ref(ia) += g;
    if (t->needs_grad(ib)) t->grad_ref(ib) += g.colwise().sum();
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "mul");
  Tape* t = a.tape();
  const int ia = a.id();
  const int ib = b.id();
  const int io = static_cast<int>(t->size());
  return t->push(a.value().cwiseProduct(b.value()), t->needs_grad(ia) || t->needs_grad(ib), [t, ia, ib, io] {
    const Matrix& g = t->grad_ref(io);
    if (t->needs_grad(ia)) t->grad_ref(ia) += g.cwiseProduct(t->value(ib));
    if (t->needs_grad(ib)) t->grad_ref(ib) += g.cwiseProduct(t->value(ia));
  });
}

Var div(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "div");
  Tape* t = a.tape();
  const int ia = a.id();
  const int ib = b.id();
  const int io = static_cast<int>(t->size());
  return t->push(a.value().cwiseQuotient(b.value()), t->needs_grad(ia) || t->needs_grad(ib), [t, ia, ib, io] {
    const Matrix& g = t->grad_ref(io);
    const Matrix& bv = t->value(ib);
    if (t->needs_grad(ia)) t->grad_ref(ia) += g.cwiseQuotient(bv);
    if (t->needs_grad(ib)) {
      t->grad_ref(ib).array() -= g.array() * t->value(io).array() / bv.array();
    }
  });
}

Var scale(Var a, double s) {
  Tape* t = a.tape();
  const int ia = a.id();
  const int io = static_cast<int>(t->size());
  return t->push(a.value() * s, t->needs_grad(ia), [t, ia, io, s] { t->grad_ref(ia) += t->grad_ref(io) * s; });
}

Var add_scalar(Var a, double s) {
  Tape* t = a.tape();
  const int ia = a.id();
  const int io = static_cast<int>(t->size());
  Matrix out = a.value();
  out.array() += s;
  return t->push(std::move(out), t->needs_grad(ia), [t, ia, io] { t->grad_ref(ia) += t->grad_ref(io); });
}

Var relu(Var a) {
  Tape* t = a.tape();
  const int ia = a.id();
  const int io = static_cast<int>(t->size());
  return t->push(a.value().cwiseMax(0.0), t->needs_grad(ia), [t, ia, io] {
    t->grad_ref(ia).array() += (t->value(ia).array() > 0.0).select(t->grad_ref(io).array(), 0.0);
  });
}

Var sigmoid(Var a) {
  Tape* t = a.tape();
  const int ia = a.id();
  const int io = static_cast<int>(t->size());
  Matrix out = a.value().unaryExpr([](double x) {
    // Split by sign so exp never overflows.
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return t->push(std::move(out), t->needs_grad(ia), [t, ia, io] {
    const auto s = t->value(io).array();
    t->grad_ref(ia).array() += t->grad_ref(io).array() * s * (1.0 - s);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape* t = parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  bool needs = false;
  for (const auto& p : parts) {
    if (p.tape() != t) throw std::invalid_argument("concat_cols: operands on different tapes");
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row counts differ");
    ids.push_back(p.id());
    widths.push_back(p.cols());
    cols += p.cols();
    needs = needs || t->needs_grad(p.id());
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  const int io = static_cast<int>(t->size());
  return t->push(std::move(out), needs, [t, ids, widths, io] {
    const Matrix& g = t->grad_ref(io);
    Eigen::Index c0 = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t->needs_grad(ids[k])) t->grad_ref(ids[k]) += g.middleCols(c0, widths[k]);
      c0 += widths[k];
    }
  });
}

Var gather_rows(Var a, std::vector<int> idx) {
  Tape* t = a.tape();
  const Matrix& av = a.value();
  Matrix out(static_cast<Eigen::Index>(idx.size()), av.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= av.rows()) throw std::out_of_range("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = av.row(idx[i]);
  }
  const int ia = a.id();
  const int io = static_cast<int>(t->size());
  return t->push(std::move(out), t->needs_grad(ia), [t, ia, io, idx = std::move(idx)] {
    const Matrix& g = t->grad_ref(io);
    Matrix& ga = t->grad_ref(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var scatter_add_rows(Var a, std::vector<int> idx, Eigen::Index rows) {
  Tape* t = a.tape();
  const Matrix& av = a.value();
  if (static_cast<Eigen::Index>(idx.size()) != av.rows()) throw std::invalid_argument("scatter_add_rows: index size");
  Matrix out = Matrix::Zero(rows, av.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= rows) throw std::out_of_range("scatter_add_rows: index out of range");
    out.row(idx[i]) += av.row(static_cast<Eigen::Index>(i));
  }
  const int ia = a.id();
  const int io = static_cast<int>(t->size());
  return t->push(std::move(out), t->needs_grad(ia), [t, ia, io, idx = std::move(idx)] {
    const Matrix& g = t->grad_ref(io);
    Matrix& ga = t->grad_ref(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(static_cast<Eigen::Index>(i)) += g.row(idx[i]);
  });
}

Var segment_mean(Var a, std::vector<int> offsets) {
  Tape* t = a.tape();
  const Matrix& av = a.value();
  const auto segments = static_cast<Eigen::Index>(offsets.size()) - 1;
  if (segments < 0 || offsets.back() != av.rows()) throw std::invalid_argument("segment_mean: bad offsets");
  Matrix out = Matrix::Zero(segments, av.cols());
  for (Eigen::Index s = 0; s < segments; ++s) {
    const int n = offsets[s + 1] - offsets[s];
    if (n > 0) out.row(s) = av.middleRows(offsets[s], n).colwise().sum() / static_cast<double>(n);
  }
  const int ia = a.id();
  const int io = static_cast<int>(t->size());
  return t->push(std::move(out), t->needs_grad(ia), [t, ia, io, offsets = std::move(offsets)] {
    const Matrix& g = t->grad_ref(io);
    Matrix& ga = t->grad_ref(ia);
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      const int n = offsets[s + 1] - offsets[s];
      if (n == 0) continue;
      const Eigen::RowVectorXd share = g.row(static_cast<Eigen::Index>(s)) / static_cast<double>(n);
      ga.middleRows(offsets[s], n).rowwise() += share;
    }
  });
}

Var dropout(Var a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw std::invalid_argument("dropout probability must be < 1");
  Tape* t = a.tape();
  const double keep = 1.0 - p;
  Matrix mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mul(a, t->constant(std::move(mask)));
}

Var batch_norm(Var x, Var gamma, Var beta, const BatchNormState& state, bool training) {
  check_same_tape(x, gamma);
  check_same_tape(x, beta);
  Tape* t = x.tape();
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.rows();
  const Eigen::Index d = xv.cols();
  if (gamma.cols() != d || beta.cols() != d) throw std::invalid_argument("batch_norm: parameter width");
  const int ix = x.id();
  const int ig = gamma.id();
  const int ib = beta.id();
  const bool needs = t->needs_grad(ix) || t->needs_grad(ig) || t->needs_grad(ib);
  const int io = static_cast<int>(t->size());

  if (!training || n == 0) {
    const Eigen::RowVectorXd inv_std =
        (state.running_var->row(0).array() + state.eps).rsqrt().matrix();
    Matrix xhat = (xv.rowwise() - state.running_mean->row(0)).array().rowwise() * inv_std.array();
    Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
    auto xhat_id = t->constant(std::move(xhat)).id();
    const int io2 = static_cast<int>(t->size());
    return t->push(std::move(out), needs, [t, ix, ig, ib, io2, xhat_id, inv_std] {
      const Matrix& g = t->grad_ref(io2);
      if (t->needs_grad(ix)) {
        t->grad_ref(ix).array() +=
            g.array().rowwise() * (t->value(ig).row(0).array() * inv_std.array());
      }
      if (t->needs_grad(ig)) t->grad_ref(ig) += g.cwiseProduct(t->value(xhat_id)).colwise().sum();
      if (t->needs_grad(ib)) t->grad_ref(ib) += g.colwise().sum();
    });
  }
  (void)io;

  const Eigen::RowVectorXd mean = xv.colwise().mean();
  const Matrix centered = xv.rowwise() - mean;
  const Eigen::RowVectorXd var = centered.array().square().colwise().mean();
  const Eigen::RowVectorXd inv_std = (var.array() + state.eps).rsqrt().matrix();
  Matrix xhat = centered.array().rowwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();

  const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
  state.running_mean->row(0) = (1.0 - state.momentum) * state.running_mean->row(0) + state.momentum * mean;
  state.running_var->row(0) = (1.0 - state.momentum) * state.running_var->row(0) + state.momentum * unbias * var;

  const int xhat_id = t->constant(std::move(xhat)).id();
  const int io2 = static_cast<int>(t->size());
  return t->push(std::move(out), needs, [t, ix, ig, ib, io2, xhat_id, inv_std, n] {
    const Matrix& g = t->grad_ref(io2);
    const Matrix& xhat = t->value(xhat_id);
    const Eigen::RowVectorXd sum_g = g.colwise().sum();
    const Eigen::RowVectorXd sum_gx = g.cwiseProduct(xhat).colwise().sum();
    if (t->needs_grad(ix)) {
      const double inv_n = 1.0 / static_cast<double>(n);
      const Eigen::RowVectorXd coef = (t->value(ig).row(0).array() * inv_std.array()).matrix();
      Matrix dx = ((g * static_cast<double>(n)).rowwise() - sum_g) - (xhat.array().rowwise() * sum_gx.array()).matrix();
      t->grad_ref(ix).array() += (dx.array().rowwise() * coef.array()) * inv_n;
    }
    if (t->needs_grad(ig)) t->grad_ref(ig) += sum_gx;
    if (t->needs_grad(ib)) t->grad_ref(ib) += sum_g;
  });
}

Var segment_attention(Var q, Var k, Var v, std::vector<int> offsets, int heads, std::vector<Matrix>* probe) {
  check_same_tape(q, k);
  check_same_tape(q, v);
  Tape* t = q.tape();
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  const Eigen::Index n = qv.rows();
  const Eigen::Index d = qv.cols();
  if (kv.rows() != n || vv.rows() != n || kv.cols() != d || vv.cols() != d) {
    throw std::invalid_argument("segment_attention: q, k, v shapes differ");
  }
  if (heads <= 0 || d % heads != 0) throw std::invalid_argument("segment_attention: width not divisible by heads");
  if (offsets.empty() || offsets.back() != n) throw std::invalid_argument("segment_attention: bad offsets");
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Matrix> probs;
  probs.reserve((offsets.size() - 1) * static_cast<std::size_t>(heads));
  Matrix out = Matrix::Zero(n, d);
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const Eigen::Index o = offsets[s];
    const Eigen::Index m = offsets[s + 1] - offsets[s];
    for (int h = 0; h < heads; ++h) {
      Matrix p(m, m);
      if (m > 0) {
        p.noalias() = qv.block(o, h * dh, m, dh) * kv.block(o, h * dh, m, dh).transpose();
        p *= scale;
        for (Eigen::Index r = 0; r < m; ++r) {
          const double mx = p.row(r).maxCoeff();
          p.row(r) = (p.row(r).array() - mx).exp();
          p.row(r) /= p.row(r).sum();
        }
        out.block(o, h * dh, m, dh).noalias() = p * vv.block(o, h * dh, m, dh);
      }
      probs.push_back(std::move(p));
    }
  }
  if (probe != nullptr) *probe = probs;

  const int iq = q.id();
  const int ik = k.id();
  const int iv = v.id();
  const bool needs = t->needs_grad(iq) || t->needs_grad(ik) || t->needs_grad(iv);
  const int io = static_cast<int>(t->size());
  return t->push(std::move(out), needs,
                 [t, iq, ik, iv, io, heads, dh, scale, offsets = std::move(offsets), probs = std::move(probs)] {
                   const Matrix& g = t->grad_ref(io);
                   const Matrix& qv = t->value(iq);
                   const Matrix& kv = t->value(ik);
                   const Matrix& vv = t->value(iv);
                   const bool gq = t->needs_grad(iq);
                   const bool gk = t->needs_grad(ik);
                   const bool gv = t->needs_grad(iv);
                   std::size_t idx = 0;
                   Matrix dp;
                   Matrix ds;
                   for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
                     const Eigen::Index o = offsets[s];
                     const Eigen::Index m = offsets[s + 1] - offsets[s];
                     for (int h = 0; h < heads; ++h, ++idx) {
                       if (m == 0) continue;
                       const Matrix& p = probs[idx];
                       const auto go = g.block(o, h * dh, m, dh);
                       if (gv) t->grad_ref(iv).block(o, h * dh, m, dh).noalias() += p.transpose() * go;
                       if (!gq && !gk) continue;
                       dp.noalias() = go * vv.block(o, h * dh, m, dh).transpose();
                       const Eigen::VectorXd row_dot = dp.cwiseProduct(p).rowwise().sum();
                       ds = p.cwiseProduct(dp.colwise() - row_dot) * scale;
                       if (gq) t->grad_ref(iq).block(o, h * dh, m, dh).noalias() += ds * kv.block(o, h * dh, m, dh);
                       if (gk) {
                         t->grad_ref(ik).block(o, h * dh, m, dh).noalias() += ds.transpose() * qv.block(o, h * dh, m, dh);
                       }
                     }
                   }
                 });
}

Var bce_with_logits(Var logits, std::span<const double> targets) {
  Tape* t = logits.tape();
  const Matrix& z = logits.value();
  if (z.cols() != 1 || static_cast<std::size_t>(z.rows()) != targets.size() || targets.empty()) {
    throw std::invalid_argument("bce_with_logits: shape mismatch");
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double x = z(i, 0);
    loss += std::max(x, 0.0) - x * targets[static_cast<std::size_t>(i)] + std::log1p(std::exp(-std::abs(x)));
  }
  const double inv = 1.0 / static_cast<double>(z.rows());
  Matrix out(1, 1);
  out(0, 0) = loss * inv;
  std::vector<double> y(targets.begin(), targets.end());
  const int iz = logits.id();
  const int io = static_cast<int>(t->size());
  return t->push(std::move(out), t->needs_grad(iz), [t, iz, io, inv, y = std::move(y)] {
    const double g = t->grad_ref(io)(0, 0);
    const Matrix& z = t->value(iz);
    Matrix& gz = t->grad_ref(iz);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double x = z(i, 0);
      const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      gz(i, 0) += g * inv * (s - y[static_cast<std::size_t>(i)]);
    }
  });
}

Var mse(Var pred, std::span<const double> targets) {
  Tape* t = pred.tape();
  const Matrix& p = pred.value();
  if (p.cols() != 1 || static_cast<std::size_t>(p.rows()) != targets.size() || targets.empty()) {
    throw std::invalid_argument("mse: shape mismatch");
  }
  const Eigen::Map<const Eigen::VectorXd> y(targets.data(), static_cast<Eigen::Index>(targets.size()));
  const Eigen::VectorXd diff = p.col(0) - y;
  const double inv = 1.0 / static_cast<double>(p.rows());
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() * inv;
  const int ip = pred.id();
  const int io = static_cast<int>(t->size());
  return t->push(std::move(out), t->needs_grad(ip), [t, ip, io, inv, diff] {
    t->grad_ref(ip).col(0) += (2.0 * inv * t->grad_ref(io)(0, 0)) * diff;
  });
}

}  // namespace cirgps::ad
