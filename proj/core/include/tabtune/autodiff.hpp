#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tabtune/tensor.hpp"

namespace tabtune {

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t index = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
};

/// Row-major attention mask: entry (i, j) true when query row i may attend
/// key row j.
struct AttentionMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> allowed;

  bool operator()(std::size_t i, std::size_t j) const { return allowed[i * cols + j] != 0; }
};

/// Reverse-mode recorder. Every op appends a node holding its value and a
/// closure that pushes the node's gradient into its inputs. A tape serves
/// one forward/backward pass and is then discarded.
class Tape {
 public:
  /// With gradients disabled the tape only evaluates; backward() is invalid.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a stored parameter; repeated calls return the same node.
  Var param(ParamStore& store, const std::string& name);
  /// Read-only leaf: the value is used but no gradient is routed back.
  Var param(const ParamStore& store, const std::string& name);

  /// Seeds d(loss)/d(loss) = 1 and propagates. Trainable parameters receive
  /// their gradient in ParamStore::grad; frozen ones are left at zero.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Internal interface for op implementations.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);
  const Tensor& value_of(std::size_t i) const { return nodes_[i].bound ? *nodes_[i].bound : nodes_[i].value; }
  Tensor& grad_of(std::size_t i);
  bool needs_grad(std::size_t i) const { return nodes_[i].requires_grad; }

 private:
  struct Node {
    Tensor value;
    /// Parameter leaves read the stored tensor in place instead of copying.
    const Tensor* bound = nullptr;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    Param* param = nullptr;
  };
  bool grad_enabled_ = true;
  std::vector<Node> nodes_;
  std::map<std::pair<const ParamStore*, std::string>, std::size_t> param_nodes_;
  std::vector<ParamStore*> stores_;
};

namespace ops {

/// a (n×k) · b (k×m).
Var matmul(Var a, Var b);
/// x (n×k) · wᵀ for w (m×k): the usual dense-layer product.
Var linear(Var x, Var w);
Var add(Var a, Var b);
/// Adds a length-cols vector to every row.
Var add_row(Var a, Var bias);
Var scale(Var a, double factor);
/// Elementwise product with a fixed tensor (dropout masks).
Var mul_const(Var a, const Tensor& factor);
Var relu(Var a);
Var sum(Var a);
/// Per-row normalisation followed by the affine gain/bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var softmax(Var a);
/// Multi-head scaled dot-product attention; forbidden entries get -inf
/// before the softmax. A row with no allowed key raises AllMasked.
Var attention(Var q, Var k, Var v, const AttentionMask& mask, std::size_t n_heads);
/// Gathers rows of `table`.
Var embedding_lookup(Var table, std::span<const std::size_t> ids);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
/// Mean over rows of -log softmax(logits restricted to valid slots)[target].
Var cross_entropy(Var logits, std::span<const int> targets, std::span<const std::uint8_t> valid_slots);

}  // namespace ops

/// Row-wise softmax of a plain matrix, skipping slots where `valid` is 0.
Tensor softmax_rows(const Tensor& logits, std::span<const std::uint8_t> valid = {});

}  // namespace tabtune
