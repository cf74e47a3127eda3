#include "kgr4/nn/tape.hpp"

#include <cmath>
#include <limits>

#include "kgr4/error.hpp"

namespace kgr4::nn {

Tape::Tape(const ParameterSet& params, Gradients* sink)
    : params_(params), sink_(sink), param_nodes_(params.size(), -1) {
  nodes_.reserve(256);
}

Var Tape::push(Matrix value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, {}, -1});
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Matrix& Tape::grad(Var v) {
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.size() == 0) {
    const Matrix& val = n.ref ? *n.ref : n.value;
    n.grad = Matrix::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

void Tape::on_backward(Var out, std::function<void(Tape&)> fn) {
  if (recording()) nodes_[static_cast<std::size_t>(out.id)].back = std::move(fn);
}

Var Tape::param(std::size_t index) {
  int& slot = param_nodes_.at(index);
  if (slot < 0) {
    Var v = push(Matrix());
    nodes_.back().ref = &params_[index].value;
    nodes_.back().param = static_cast<int>(index);
    slot = v.id;
  }
  return Var{slot};
}

Var Tape::constant(Matrix value) { return push(std::move(value)); }

Var Tape::matmul(Var a, Var b) {
  Var out = push(value(a) * value(b));
  on_backward(out, [a, b, out](Tape& t) {
    const Matrix& g = t.grad(out);
    t.grad(a).noalias() += g * t.value(b).transpose();
    t.grad(b).noalias() += t.value(a).transpose() * g;
  });
  return out;
}

Var Tape::matmul_bt(Var a, Var b) {
  Var out = push(value(a) * value(b).transpose());
  on_backward(out, [a, b, out](Tape& t) {
    const Matrix& g = t.grad(out);
    t.grad(a).noalias() += g * t.value(b);
    t.grad(b).noalias() += g.transpose() * t.value(a);
  });
  return out;
}

Var Tape::add(Var a, Var b) {
  Var out = push(value(a) + value(b));
  on_backward(out, [a, b, out](Tape& t) {
    t.grad(a) += t.grad(out);
    t.grad(b) += t.grad(out);
  });
  return out;
}

Var Tape::sub(Var a, Var b) {
  Var out = push(value(a) - value(b));
  on_backward(out, [a, b, out](Tape& t) {
    t.grad(a) += t.grad(out);
    t.grad(b) -= t.grad(out);
  });
  return out;
}

Var Tape::mul(Var a, Var b) {
  Var out = push(value(a).cwiseProduct(value(b)));
  on_backward(out, [a, b, out](Tape& t) {
    const Matrix g = t.grad(out);
    t.grad(a) += g.cwiseProduct(t.value(b));
    t.grad(b) += g.cwiseProduct(t.value(a));
  });
  return out;
}

Var Tape::add_row(Var a, Var row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols()) {
    throw Error("add_row: shape mismatch");
  }
  Matrix v = value(a);
  v.rowwise() += value(row).row(0);
  Var out = push(std::move(v));
  on_backward(out, [a, row, out](Tape& t) {
    t.grad(a) += t.grad(out);
    t.grad(row) += t.grad(out).colwise().sum();
  });
  return out;
}

Var Tape::scale(Var a, double s) {
  Var out = push(value(a) * s);
  on_backward(out, [a, s, out](Tape& t) { t.grad(a) += t.grad(out) * s; });
  return out;
}

Var Tape::lincomb(Var a, double alpha, Var b, double beta) {
  Var out = push(alpha * value(a) + beta * value(b));
  on_backward(out, [a, alpha, b, beta, out](Tape& t) {
    const Matrix g = t.grad(out);
    if (alpha != 0.0) t.grad(a) += alpha * g;
    if (beta != 0.0) t.grad(b) += beta * g;
  });
  return out;
}

Var Tape::relu(Var a) {
  Var out = push(value(a).cwiseMax(0.0));
  on_backward(out, [a, out](Tape& t) {
    const Matrix& x = t.value(a);
    const Matrix& g = t.grad(out);
    Matrix& ga = t.grad(a);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x.data()[i] > 0.0) ga.data()[i] += g.data()[i];
    }
  });
  return out;
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Matrix& in = value(x);
  const auto rows = in.rows();
  const auto cols = in.cols();
  Matrix xhat(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = in.row(r).mean();
    const double var = (in.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (in.row(r).array() - mean) * inv_std(r);
  }
  Matrix y = xhat.array().rowwise() * value(gain).row(0).array();
  y.rowwise() += value(bias).row(0);
  Var out = push(std::move(y));
  if (recording()) {
    on_backward(out, [x, gain, bias, out, xhat = std::move(xhat), inv_std](Tape& t) {
      const Matrix& g = t.grad(out);
      t.grad(gain) += g.cwiseProduct(xhat).colwise().sum();
      t.grad(bias) += g.colwise().sum();
      Matrix dxhat = g.array().rowwise() * t.value(gain).row(0).array();
      const double n = static_cast<double>(xhat.cols());
      Matrix& gx = t.grad(x);
      for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
        const double m1 = dxhat.row(r).sum() / n;
        const double m2 = dxhat.row(r).dot(xhat.row(r)) / n;
        gx.row(r).array() +=
            inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
      }
    });
  }
  return out;
}

Var Tape::gather_rows(Var table, std::span<const int> ids) {
  const Matrix& tab = value(table);
  Matrix v(static_cast<Eigen::Index>(ids.size()), tab.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tab.rows()) throw Error("gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = tab.row(ids[i]);
  }
  Var out = push(std::move(v));
  if (recording()) {
    on_backward(out, [table, out, idx = std::vector<int>(ids.begin(), ids.end())](Tape& t) {
      const Matrix& g = t.grad(out);
      Matrix& gt = t.grad(table);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
      }
    });
  }
  return out;
}

Var Tape::gather_entries(Var table, std::span<const int> ids, Eigen::Index rows, Eigen::Index cols) {
  const Matrix& tab = value(table);
  if (tab.rows() != 1) throw Error("gather_entries: table must be a row");
  if (static_cast<std::size_t>(rows * cols) != ids.size()) throw Error("gather_entries: shape mismatch");
  Matrix v(rows, cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tab.cols()) throw Error("gather_entries: index out of range");
    v(static_cast<Eigen::Index>(i) / cols, static_cast<Eigen::Index>(i) % cols) = tab(0, ids[i]);
  }
  Var out = push(std::move(v));
  if (recording()) {
    on_backward(out, [table, out, cols, idx = std::vector<int>(ids.begin(), ids.end())](Tape& t) {
      const Matrix& g = t.grad(out);
      Matrix& gt = t.grad(table);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        gt(0, idx[i]) += g(static_cast<Eigen::Index>(i) / cols, static_cast<Eigen::Index>(i) % cols);
      }
    });
  }
  return out;
}

Var Tape::concat_cols(std::span<const Var> parts) {
  Eigen::Index rows = value(parts.front()).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw Error("concat_cols: row mismatch");
    cols += value(p).cols();
  }
  Matrix v(rows, cols);
  Eigen::Index off = 0;
  for (Var p : parts) {
    v.middleCols(off, value(p).cols()) = value(p);
    off += value(p).cols();
  }
  Var out = push(std::move(v));
  if (recording()) {
    on_backward(out, [out, ps = std::vector<Var>(parts.begin(), parts.end())](Tape& t) {
      const Matrix& g = t.grad(out);
      Eigen::Index o = 0;
      for (Var p : ps) {
        const auto c = t.value(p).cols();
        t.grad(p) += g.middleCols(o, c);
        o += c;
      }
    });
  }
  return out;
}

Var Tape::mean_rows(Var a) {
  const double n = static_cast<double>(value(a).rows());
  Var out = push(value(a).colwise().mean());
  on_backward(out, [a, out, n](Tape& t) {
    t.grad(a).rowwise() += t.grad(out).row(0) / n;
  });
  return out;
}

Var Tape::attention(Var q, Var k, Var v, int heads, bool causal) {
  const Matrix& Q = value(q);
  const Matrix& K = value(k);
  const Matrix& V = value(v);
  const auto tq = Q.rows();
  const auto tk = K.rows();
  const auto dim = Q.cols();
  if (dim % heads != 0 || K.cols() != dim || V.cols() != dim || V.rows() != tk) {
    throw Error("attention: shape mismatch");
  }
  const auto dh = dim / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  Matrix out_v(tq, dim);
  for (int h = 0; h < heads; ++h) {
    Matrix scores = (Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose()) * s;
    for (Eigen::Index i = 0; i < tq; ++i) {
      const Eigen::Index limit = causal ? std::min<Eigen::Index>(i + 1, tk) : tk;
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < limit; ++j) mx = std::max(mx, scores(i, j));
      double sum = 0.0;
      for (Eigen::Index j = 0; j < tk; ++j) {
        const double e = j < limit ? std::exp(scores(i, j) - mx) : 0.0;
        scores(i, j) = e;
        sum += e;
      }
      scores.row(i) /= sum;
    }
    out_v.middleCols(h * dh, dh).noalias() = scores * V.middleCols(h * dh, dh);
    probs[static_cast<std::size_t>(h)] = std::move(scores);
  }
  Var out = push(std::move(out_v));
  if (recording()) {
    on_backward(out, [q, k, v, out, heads, dh, s, probs = std::move(probs)](Tape& t) {
      const Matrix& g = t.grad(out);
      const Matrix& Qv = t.value(q);
      const Matrix& Kv = t.value(k);
      const Matrix& Vv = t.value(v);
      Matrix& gq = t.grad(q);
      Matrix& gk = t.grad(k);
      Matrix& gv = t.grad(v);
      for (int h = 0; h < heads; ++h) {
        const Matrix& P = probs[static_cast<std::size_t>(h)];
        const auto go = g.middleCols(h * dh, dh);
        gv.middleCols(h * dh, dh).noalias() += P.transpose() * go;
        Matrix dp = go * Vv.middleCols(h * dh, dh).transpose();
        Eigen::VectorXd rowdot = (dp.cwiseProduct(P)).rowwise().sum();
        Matrix ds = P.cwiseProduct(dp.colwise() - rowdot) * s;
        gq.middleCols(h * dh, dh).noalias() += ds * Kv.middleCols(h * dh, dh);
        gk.middleCols(h * dh, dh).noalias() += ds.transpose() * Qv.middleCols(h * dh, dh);
      }
    });
  }
  return out;
}

Var Tape::cross_entropy(Var logits, std::span<const int> targets, std::vector<double>* row_losses) {
  const Matrix& z = value(logits);
  if (static_cast<std::size_t>(z.rows()) != targets.size()) {
    throw Error("cross_entropy: one target per row required");
  }
  Matrix probs(z.rows(), z.cols());
  double total = 0.0;
  if (row_losses) row_losses->assign(targets.size(), 0.0);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double mx = z.row(r).maxCoeff();
    probs.row(r) = (z.row(r).array() - mx).exp();
    const double sum = probs.row(r).sum();
    probs.row(r) /= sum;
    const double loss = std::log(sum) + mx - z(r, targets[static_cast<std::size_t>(r)]);
    if (row_losses) (*row_losses)[static_cast<std::size_t>(r)] = loss;
    total += loss;
  }
  Matrix v(1, 1);
  v(0, 0) = total;
  Var out = push(std::move(v));
  if (recording()) {
    on_backward(out, [logits, out, probs = std::move(probs),
                      tg = std::vector<int>(targets.begin(), targets.end())](Tape& t) {
      const double g = t.grad(out)(0, 0);
      Matrix d = probs;
      for (std::size_t r = 0; r < tg.size(); ++r) d(static_cast<Eigen::Index>(r), tg[r]) -= 1.0;
      t.grad(logits) += g * d;
    });
  }
  return out;
}

Matrix softmax_rows(const Matrix& z) {
  Matrix p(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    p.row(r) = (z.row(r).array() - z.row(r).maxCoeff()).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_mixture_shapes(const Matrix& logits, const Matrix& copy_scores, const Matrix& gate_logits,
                          std::span<const int> source_ids) {
  if (copy_scores.rows() != logits.rows() || gate_logits.rows() != logits.rows() || gate_logits.cols() != 1) {
    throw Error("copy mixture: row mismatch");
  }
  if (static_cast<std::size_t>(copy_scores.cols()) != source_ids.size()) {
    throw Error("copy mixture: one source id per copy score column required");
  }
  for (int id : source_ids) {
    if (id < 0 || id >= logits.cols()) throw Error("copy mixture: source id out of range");
  }
}

}  // namespace

Matrix copy_mixture_probs(const Matrix& logits, const Matrix& copy_scores, const Matrix& gate_logits,
                          std::span<const int> source_ids) {
  check_mixture_shapes(logits, copy_scores, gate_logits, source_ids);
  Matrix p = softmax_rows(logits);
  const Matrix a = softmax_rows(copy_scores);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const double g = sigmoid(gate_logits(r, 0));
    p.row(r) *= g;
    for (std::size_t i = 0; i < source_ids.size(); ++i) {
      p(r, source_ids[i]) += (1.0 - g) * a(r, static_cast<Eigen::Index>(i));
    }
  }
  return p;
}

Var Tape::copy_mixture_nll(Var logits, Var copy_scores, Var gate_logits, std::span<const int> source_ids,
                           std::span<const int> targets, std::vector<double>* row_losses) {
  const Matrix& z = value(logits);
  check_mixture_shapes(z, value(copy_scores), value(gate_logits), source_ids);
  if (static_cast<std::size_t>(z.rows()) != targets.size()) {
    throw Error("copy_mixture_nll: one target per row required");
  }
  const Matrix pv = softmax_rows(z);
  const Matrix a = softmax_rows(value(copy_scores));
  const auto rows = static_cast<std::size_t>(z.rows());
  // Per row: gate, vocabulary and copy probability of the target, mixture.
  std::vector<double> g(rows), pv_y(rows), pc_y(rows), p_y(rows);
  double total = 0.0;
  if (row_losses) row_losses->assign(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    g[r] = sigmoid(value(gate_logits)(ri, 0));
    pv_y[r] = pv(ri, targets[r]);
    pc_y[r] = 0.0;
    for (std::size_t i = 0; i < source_ids.size(); ++i) {
      if (source_ids[i] == targets[r]) pc_y[r] += a(ri, static_cast<Eigen::Index>(i));
    }
    p_y[r] = g[r] * pv_y[r] + (1.0 - g[r]) * pc_y[r];
    const double loss = -std::log(p_y[r]);
    if (row_losses) (*row_losses)[r] = loss;
    total += loss;
  }
  Matrix v(1, 1);
  v(0, 0) = total;
  Var out = push(std::move(v));
  if (recording()) {
    on_backward(out, [=, pv = pv, a = a, src = std::vector<int>(source_ids.begin(), source_ids.end()),
                      tg = std::vector<int>(targets.begin(), targets.end())](Tape& t) {
      const double up = t.grad(out)(0, 0);
      Matrix dz = Matrix::Zero(pv.rows(), pv.cols());
      Matrix ds = Matrix::Zero(a.rows(), a.cols());
      Matrix dg = Matrix::Zero(pv.rows(), 1);
      for (std::size_t r = 0; r < tg.size(); ++r) {
        const auto ri = static_cast<Eigen::Index>(r);
        const double inv = -up / p_y[r];
        // d p_y / d logits = g * pv_y * (onehot - pv)
        dz.row(ri) = -g[r] * pv_y[r] * inv * pv.row(ri);
        dz(ri, tg[r]) += g[r] * pv_y[r] * inv;
        // d p_y / d scores_i = (1 - g) * a_i * ([src_i = y] - pc_y)
        for (std::size_t i = 0; i < src.size(); ++i) {
          const auto ii = static_cast<Eigen::Index>(i);
          const double hit = src[i] == tg[r] ? 1.0 : 0.0;
          ds(ri, ii) = inv * (1.0 - g[r]) * a(ri, ii) * (hit - pc_y[r]);
        }
        dg(ri, 0) = inv * g[r] * (1.0 - g[r]) * (pv_y[r] - pc_y[r]);
      }
      t.grad(logits) += dz;
      t.grad(copy_scores) += ds;
      t.grad(gate_logits) += dg;
    });
  }
  return out;
}

Var Tape::bce_with_logits(Var logit, double label) {
  const double z = value(logit)(0, 0);
  Matrix v(1, 1);
  v(0, 0) = std::max(z, 0.0) - label * z + std::log1p(std::exp(-std::abs(z)));
  Var out = push(std::move(v));
  on_backward(out, [logit, out, z, label](Tape& t) {
    const double sig = 1.0 / (1.0 + std::exp(-z));
    t.grad(logit)(0, 0) += t.grad(out)(0, 0) * (sig - label);
  });
  return out;
}

void Tape::backward(Var root) {
  if (!recording()) throw Error("backward on an inference-only tape");
  grad(root).setConstant(1.0);
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back && n.grad.size() != 0) n.back(*this);
  }
  for (std::size_t p = 0; p < param_nodes_.size(); ++p) {
    const int id = param_nodes_[p];
    if (id >= 0 && nodes_[static_cast<std::size_t>(id)].grad.size() != 0) {
      (*sink_)[p] += nodes_[static_cast<std::size_t>(id)].grad;
    }
  }
}

}  // namespace kgr4::nn
