#pragma once

#include <functional>
#include <span>
#include <vector>

#include "kgr4/nn/parameters.hpp"

namespace kgr4::nn {

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
};

/// Reverse-mode autodiff over dense row-major matrices.
///
/// Every operation evaluates eagerly. When the tape is constructed with a
/// Gradients sink it also records a backward closure; `backward(root)` then
/// propagates d(root)/d(node) and adds the parameter gradients into the sink.
/// Without a sink the tape is inference-only and records nothing.
///
/// Scalars are 1x1 matrices.
/// Row-wise softmax.
Matrix softmax_rows(const Matrix& z);

/// The distribution of Tape::copy_mixture_nll, one row per step.
Matrix copy_mixture_probs(const Matrix& logits, const Matrix& copy_scores, const Matrix& gate_logits,
                          std::span<const int> source_ids);

class Tape {
 public:
  explicit Tape(const ParameterSet& params, Gradients* sink = nullptr);

  bool recording() const { return sink_ != nullptr; }

  /// Leaf for parameter `index`; repeated calls return the same node.
  Var param(std::size_t index);
  Var constant(Matrix value);

  const Matrix& value(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    return n.ref ? *n.ref : n.value;
  }
  double scalar(Var v) const { return value(v)(0, 0); }

  Var matmul(Var a, Var b);     // a * b
  Var matmul_bt(Var a, Var b);  // a * b^T
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var add_row(Var a, Var row);  // broadcast a 1xN row over every row of a
  Var scale(Var a, double s);
  /// alpha*a + beta*b. A zero coefficient contributes exactly 0 to the value.
  Var lincomb(Var a, double alpha, Var b, double beta);
  Var relu(Var a);
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  Var gather_rows(Var table, std::span<const int> ids);
  /// rows x cols matrix with entry (r, c) = table(0, ids[r * cols + c]);
  /// table is 1xK.
  Var gather_entries(Var table, std::span<const int> ids, Eigen::Index rows, Eigen::Index cols);
  Var concat_cols(std::span<const Var> parts);
  Var mean_rows(Var a);  // 1xN column means
  /// Multi-head scaled dot-product attention for one sequence; q is TqxD,
  /// k and v are TkxD. `causal` masks keys after the query position.
  Var attention(Var q, Var k, Var v, int heads, bool causal);
  /// Sum over rows of -log softmax(logits)[target]. Per-row losses are
  /// written to `row_losses` when given.
  Var cross_entropy(Var logits, std::span<const int> targets,
                    std::vector<double>* row_losses = nullptr);
  /// Sum over rows of -log p(target), where p mixes a vocabulary softmax with
  /// a copy distribution: p = g * softmax(logits) + (1 - g) * scatter(
  /// softmax(copy_scores), source_ids), g = sigmoid(gate_logits). logits is
  /// TxV, copy_scores TxS, gate_logits Tx1 and source_ids gives the vocabulary
  /// id of each of the S source positions.
  Var copy_mixture_nll(Var logits, Var copy_scores, Var gate_logits, std::span<const int> source_ids,
                       std::span<const int> targets, std::vector<double>* row_losses = nullptr);
  /// Binary cross-entropy of a 1x1 logit against label 0/1.
  Var bce_with_logits(Var logit, double label);

  void backward(Var root);

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;  // parameter leaves alias the parameter storage
    Matrix grad;
    std::function<void(Tape&)> back;
    int param = -1;
  };

  Var push(Matrix value);
  Matrix& grad(Var v);
  void on_backward(Var out, std::function<void(Tape&)> fn);

  const ParameterSet& params_;
  Gradients* sink_;
  std::vector<Node> nodes_;
  std::vector<int> param_nodes_;
};

}  // namespace kgr4::nn
