#include "tabtune/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "tabtune/error.hpp"

namespace tabtune {

const Tensor& Var::value() const {
  if (!tape) raise(ErrorCode::NoTape, "variable is not attached to a tape");
  return tape->value_of(index);
}

const Tensor& Var::grad() const {
  if (!tape) raise(ErrorCode::NoTape, "variable is not attached to a tape");
  return tape->grad_of(index);
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) raise(ErrorCode::NonFiniteValue, "constant contains NaN or Inf");
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::param(ParamStore& store, const std::string& name) {
  auto key = std::make_pair(static_cast<const ParamStore*>(&store), name);
  if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return {this, it->second};
  Param& p = store.at(name);
  Node n;
  n.bound = &p.value;
  n.requires_grad = grad_enabled_ && p.trainable;
  n.param = &p;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(std::move(key), nodes_.size() - 1);
  if (std::find(stores_.begin(), stores_.end(), &store) == stores_.end()) stores_.push_back(&store);
  return {this, nodes_.size() - 1};
}

Var Tape::param(const ParamStore& store, const std::string& name) {
  auto key = std::make_pair(&store, name);
  if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.bound = &store.at(name).value;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(std::move(key), nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  if (!value.all_finite()) raise(ErrorCode::NonFiniteValue, "op produced NaN or Inf");
  Node n;
  n.value = std::move(value);
  for (std::size_t i : inputs) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Tensor& Tape::grad_of(std::size_t i) {
  Node& n = nodes_[i];
  const Tensor& v = value_of(i);
  if (n.grad.size() != v.size() || n.grad.shape() != v.shape()) n.grad = Tensor(v.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this || nodes_.empty()) raise(ErrorCode::NoTape, "backward called without a recorded forward pass");
  if (!grad_enabled_) raise(ErrorCode::NoTape, "backward called on an evaluation-only tape");
  if (value_of(loss.index).size() != 1) raise(ErrorCode::ShapeMismatch, "backward needs a scalar loss");
  for (ParamStore* store : stores_) store->zero_grad();
  for (auto& n : nodes_) n.grad = Tensor();
  grad_of(loss.index)[0] = 1.0;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
  }
  for (auto& n : nodes_) {
    if (!n.param || !n.param->trainable || n.grad.size() == 0) continue;
    auto dst = n.param->grad.values();
    auto src = n.grad.values();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

namespace ops {

namespace {

void require(bool cond, const char* what) {
  if (!cond) raise(ErrorCode::ShapeMismatch, what);
}

Tape& tape_of(Var a) {
  if (!a.tape) raise(ErrorCode::NoTape, "variable is not attached to a tape");
  return *a.tape;
}

void same_tape(Var a, Var b) {
  if (a.tape != b.tape || !a.tape) raise(ErrorCode::NoTape, "operands recorded on different tapes");
}

// c (n×m) += a (n×k) · b (k×m). The AVX2 clone only widens the vectors;
// without FMA contraction it rounds exactly like the baseline build.
__attribute__((target_clones("avx2", "default")))
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * m;
      double* crow = c + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
}

// c (n×m) += a (n×k) · bᵀ for b (m×k). Transposing b first turns the
// inner loop into a contiguous row update the compiler can vectorise.
void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  thread_local std::vector<double> bt;
  bt.resize(std::max(bt.size(), k * m));
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * m + j] = b[j * k + p];
  gemm_nn(a, bt.data(), c, n, k, m);
}

// c (k×m) += aᵀ · b for a (n×k), b (n×m)
void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + i * m;
      double* crow = c + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
}

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b);
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.rows(), "matmul: inner dimensions differ");
  const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
  Tensor out = Tensor::matrix(n, m);
  gemm_nn(av.values().data(), bv.values().data(), out.values().data(), n, k, m);
  return t.record(std::move(out), {a.index, b.index}, [ai = a.index, bi = b.index, n, k, m](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    if (tp.needs_grad(ai))
      gemm_nt(g.values().data(), tp.value_of(bi).values().data(), tp.grad_of(ai).values().data(), n, m, k);
    if (tp.needs_grad(bi))
      gemm_tn(tp.value_of(ai).values().data(), g.values().data(), tp.grad_of(bi).values().data(), n, k, m);
  });
}

Var linear(Var x, Var w) {
  same_tape(x, w);
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require(xv.rank() == 2 && wv.rank() == 2 && xv.cols() == wv.cols(), "linear: input width differs from weight");
  const std::size_t n = xv.rows(), k = xv.cols(), m = wv.rows();
  Tensor out = Tensor::matrix(n, m);
  gemm_nt(xv.values().data(), wv.values().data(), out.values().data(), n, k, m);
  return t.record(std::move(out), {x.index, w.index}, [xi = x.index, wi = w.index, n, k, m](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    if (tp.needs_grad(xi))
      gemm_nn(g.values().data(), tp.value_of(wi).values().data(), tp.grad_of(xi).values().data(), n, m, k);
    if (tp.needs_grad(wi))
      gemm_tn(g.values().data(), tp.value_of(xi).values().data(), tp.grad_of(wi).values().data(), n, m, k);
  });
}

Var add(Var a, Var b) {
  same_tape(a, b);
  Tape& t = tape_of(a);
  require(a.value().shape() == b.value().shape(), "add: shapes differ");
  Tensor out = a.value();
  auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return t.record(std::move(out), {a.index, b.index}, [ai = a.index, bi = b.index](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    for (std::size_t idx : {ai, bi}) {
      if (!tp.needs_grad(idx)) continue;
      Tensor& d = tp.grad_of(idx);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
  });
}

Var add_row(Var a, Var bias) {
  same_tape(a, bias);
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  require(bias.value().size() == av.cols(), "add_row: bias length differs from column count");
  Tensor out = av;
  const std::size_t rows = av.rows(), cols = av.cols();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) += bias.value()[c];
  return t.record(std::move(out), {a.index, bias.index}, [ai = a.index, bi = bias.index, rows, cols](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    if (tp.needs_grad(ai)) {
      Tensor& d = tp.grad_of(ai);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
    if (tp.needs_grad(bi)) {
      Tensor& d = tp.grad_of(bi);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) d[c] += g[r * cols + c];
    }
  });
}

Var scale(Var a, double factor) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  return t.record(std::move(out), {a.index}, [ai = a.index, factor](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    Tensor& d = tp.grad_of(ai);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * g[i];
  });
}

Var mul_const(Var a, const Tensor& factor) {
  Tape& t = tape_of(a);
  require(factor.size() == a.value().size(), "mul_const: factor size differs");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  return t.record(std::move(out), {a.index}, [ai = a.index, factor](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    Tensor& d = tp.grad_of(ai);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor[i] * g[i];
  });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return t.record(std::move(out), {a.index}, [ai = a.index](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& x = tp.value_of(ai);
    Tensor& d = tp.grad_of(ai);
    for (std::size_t i = 0; i < d.size(); ++i)
      if (x[i] > 0.0) d[i] += g[i];
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.record(Tensor::scalar(s), {a.index}, [ai = a.index](Tape& tp, std::size_t self) {
    const double g = tp.grad_of(self)[0];
    for (double& d : tp.grad_of(ai).values()) d += g;
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  same_tape(x, gain);
  same_tape(x, bias);
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  require(gain.value().size() == cols && bias.value().size() == cols, "layer_norm: affine length differs");
  auto normalized = std::make_shared<Tensor>(Tensor::matrix(rows, cols));
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  Tensor out = Tensor::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto in = xv.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t c = 0; c < cols; ++c) {
      const double xhat = (in[c] - mean) * inv;
      normalized->at(r, c) = xhat;
      out.at(r, c) = xhat * gain.value()[c] + bias.value()[c];
    }
  }
  return t.record(std::move(out), {x.index, gain.index, bias.index},
                  [xi = x.index, gi = gain.index, bi = bias.index, rows, cols, normalized, inv_std](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad_of(self);
                    const Tensor& gv = tp.value_of(gi);
                    if (tp.needs_grad(gi)) {
                      Tensor& dg = tp.grad_of(gi);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) dg[c] += g.at(r, c) * normalized->at(r, c);
                    }
                    if (tp.needs_grad(bi)) {
                      Tensor& db = tp.grad_of(bi);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) db[c] += g.at(r, c);
                    }
                    if (tp.needs_grad(xi)) {
                      Tensor& dx = tp.grad_of(xi);
                      const double n = static_cast<double>(cols);
                      std::vector<double> dxhat(cols);
                      for (std::size_t r = 0; r < rows; ++r) {
                        double sum_d = 0.0, sum_dx = 0.0;
                        for (std::size_t c = 0; c < cols; ++c) {
                          dxhat[c] = g.at(r, c) * gv[c];
                          sum_d += dxhat[c];
                          sum_dx += dxhat[c] * normalized->at(r, c);
                        }
                        const double inv = (*inv_std)[r];
                        for (std::size_t c = 0; c < cols; ++c)
                          dx.at(r, c) += inv / n * (n * dxhat[c] - sum_d - normalized->at(r, c) * sum_dx);
                      }
                    }
                  });
}

Var softmax(Var a) {
  Tape& t = tape_of(a);
  Tensor out = softmax_rows(a.value());
  const std::size_t rows = out.rows(), cols = out.cols();
  return t.record(std::move(out), {a.index}, [ai = a.index, rows, cols](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& y = tp.value_of(self);
    Tensor& d = tp.grad_of(ai);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < cols; ++c) d.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
    }
  });
}

Var attention(Var q, Var k, Var v, const AttentionMask& mask, std::size_t n_heads) {
  same_tape(q, k);
  same_tape(q, v);
  Tape& t = tape_of(q);
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  const std::size_t nq = qv.rows(), nk = kv.rows(), d = qv.cols();
  require(kv.cols() == d && vv.cols() == d && vv.rows() == nk, "attention: q/k/v widths differ");
  require(n_heads >= 1 && d % n_heads == 0, "attention: width not divisible by head count");
  require(mask.rows == nq && mask.cols == nk && mask.allowed.size() == nq * nk, "attention: mask shape differs");
  for (std::size_t i = 0; i < nq; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < nk && !any; ++j) any = mask(i, j);
    if (!any) raise(ErrorCode::AllMasked, "attention row " + std::to_string(i) + " has no allowed key");
  }
  const std::size_t dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  // Attention weights per head, (n_heads × nq × nk); forbidden entries are 0.
  auto probs = std::make_shared<std::vector<double>>(n_heads * nq * nk, 0.0);
  Tensor out = Tensor::matrix(nq, d);
  std::vector<double> scores(nk);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < nq; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < nk; ++j) {
        if (!mask(i, j)) continue;
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += qv.at(i, off + c) * kv.at(j, off + c);
        scores[j] = s * inv_sqrt;
        mx = std::max(mx, scores[j]);
      }
      double z = 0.0;
      double* p = probs->data() + (h * nq + i) * nk;
      for (std::size_t j = 0; j < nk; ++j) {
        if (!mask(i, j)) continue;
        p[j] = std::exp(scores[j] - mx);
        z += p[j];
      }
      for (std::size_t j = 0; j < nk; ++j) {
        if (!mask(i, j)) continue;
        p[j] /= z;
        for (std::size_t c = 0; c < dh; ++c) out.at(i, off + c) += p[j] * vv.at(j, off + c);
      }
    }
  }
  return t.record(std::move(out), {q.index, k.index, v.index},
                  [qi = q.index, ki = k.index, vi = v.index, nq, nk, dh, n_heads, inv_sqrt, probs, mask](Tape& tp,
                                                                                                       std::size_t self) {
                    const Tensor& g = tp.grad_of(self);
                    const Tensor& qv = tp.value_of(qi);
                    const Tensor& kv = tp.value_of(ki);
                    const Tensor& vv = tp.value_of(vi);
                    const bool need_q = tp.needs_grad(qi), need_k = tp.needs_grad(ki), need_v = tp.needs_grad(vi);
                    Tensor* dq = need_q ? &tp.grad_of(qi) : nullptr;
                    Tensor* dk = need_k ? &tp.grad_of(ki) : nullptr;
                    Tensor* dv = need_v ? &tp.grad_of(vi) : nullptr;
                    std::vector<double> dp(nk);
                    for (std::size_t h = 0; h < n_heads; ++h) {
                      const std::size_t off = h * dh;
                      for (std::size_t i = 0; i < nq; ++i) {
                        const double* p = probs->data() + (h * nq + i) * nk;
                        double dot = 0.0;
                        for (std::size_t j = 0; j < nk; ++j) {
                          if (!mask(i, j)) continue;
                          double s = 0.0;
                          for (std::size_t c = 0; c < dh; ++c) s += g.at(i, off + c) * vv.at(j, off + c);
                          dp[j] = s;
                          dot += s * p[j];
                          if (dv)
                            for (std::size_t c = 0; c < dh; ++c) dv->at(j, off + c) += p[j] * g.at(i, off + c);
                        }
                        for (std::size_t j = 0; j < nk; ++j) {
                          if (!mask(i, j)) continue;
                          const double ds = p[j] * (dp[j] - dot) * inv_sqrt;
                          if (dq)
                            for (std::size_t c = 0; c < dh; ++c) dq->at(i, off + c) += ds * kv.at(j, off + c);
                          if (dk)
                            for (std::size_t c = 0; c < dh; ++c) dk->at(j, off + c) += ds * qv.at(i, off + c);
                        }
                      }
                    }
                  });
}

Var embedding_lookup(Var table, std::span<const std::size_t> ids) {
  Tape& t = tape_of(table);
  const Tensor& tv = table.value();
  const std::size_t cols = tv.cols();
  Tensor out = Tensor::matrix(ids.size(), cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] < tv.rows(), "embedding_lookup: id out of range");
    auto src = tv.row(ids[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<std::size_t> id_copy(ids.begin(), ids.end());
  return t.record(std::move(out), {table.index}, [ti = table.index, ids = std::move(id_copy), cols](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    Tensor& d = tp.grad_of(ti);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t c = 0; c < cols; ++c) d.at(ids[i], c) += g.at(i, c);
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  require(begin + count <= av.rows(), "slice_rows: range exceeds row count");
  const std::size_t cols = av.cols();
  Tensor out = Tensor::matrix(count, cols);
  std::copy(av.values().begin() + static_cast<std::ptrdiff_t>(begin * cols),
            av.values().begin() + static_cast<std::ptrdiff_t>((begin + count) * cols), out.values().begin());
  return t.record(std::move(out), {a.index}, [ai = a.index, begin, count, cols](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    Tensor& d = tp.grad_of(ai);
    for (std::size_t i = 0; i < count * cols; ++i) d[begin * cols + i] += g[i];
  });
}

Var cross_entropy(Var logits, std::span<const int> targets, std::span<const std::uint8_t> valid_slots) {
  Tape& t = tape_of(logits);
  const Tensor& z = logits.value();
  const std::size_t rows = z.rows(), cols = z.cols();
  require(targets.size() == rows && rows > 0, "cross_entropy: target count differs from rows");
  require(valid_slots.empty() || valid_slots.size() == cols, "cross_entropy: slot mask length differs");
  std::vector<std::uint8_t> valid(valid_slots.begin(), valid_slots.end());
  if (valid.empty()) valid.assign(cols, 1);
  for (int target : targets)
    require(target >= 0 && static_cast<std::size_t>(target) < cols && valid[target], "cross_entropy: target not a valid slot");

  auto probs = std::make_shared<Tensor>(softmax_rows(z, valid));
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (valid[c]) mx = std::max(mx, z.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c)
      if (valid[c]) s += std::exp(z.at(r, c) - mx);
    loss += mx + std::log(s) - z.at(r, static_cast<std::size_t>(targets[r]));
  }
  loss /= static_cast<double>(rows);
  std::vector<int> target_copy(targets.begin(), targets.end());
  return t.record(Tensor::scalar(loss), {logits.index},
                  [li = logits.index, probs, tg = std::move(target_copy), rows, cols](Tape& tp, std::size_t self) {
                    const double g = tp.grad_of(self)[0] / static_cast<double>(rows);
                    Tensor& d = tp.grad_of(li);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < cols; ++c) d.at(r, c) += g * probs->at(r, c);
                      d.at(r, static_cast<std::size_t>(tg[r])) -= g;
                    }
                  });
}

}  // namespace ops

Tensor softmax_rows(const Tensor& logits, std::span<const std::uint8_t> valid) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  if (!valid.empty() && valid.size() != cols) raise(ErrorCode::ShapeMismatch, "softmax: slot mask length differs");
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (valid.empty() || valid[c]) mx = std::max(mx, logits.at(r, c));
    if (!std::isfinite(mx)) raise(ErrorCode::AllMasked, "softmax row has no valid slot");
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!valid.empty() && !valid[c]) continue;
      out.at(r, c) = std::exp(logits.at(r, c) - mx);
      z += out.at(r, c);
    }
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) /= z;
  }
  return out;
}

}  // namespace tabtune
