#pragma once

#include <deque>
#include <functional>
#include <memory>

#include "bhvit/tensor.hpp"

namespace bhvit {

struct Param;

/// One recorded step of a forward pass. Gradients are allocated lazily;
/// an empty grad tensor reads as zero.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::function<void()> back;
  Param* bound = nullptr;
};

using Value = Node*;

/// Reverse-mode tape. One tape per forward pass, confined to one thread.
/// Nodes are appended in forward order, so reverse iteration is a valid
/// reverse topological order.
class Tape {
 public:
  Value make(Tensor v, bool requires_grad, std::function<void()> back = {});
  Value leaf(Tensor v, bool requires_grad = false);
  Value constant(Tensor v) { return leaf(std::move(v), false); }
  /// Leaf whose gradient is accumulated into the bound parameter after
  /// backward().
  Value param(Param& p);

  /// Seeds d(loss)/d(loss)=1 and runs every recorded backward step once in
  /// reverse order, then flushes bound-parameter gradients.
  void backward(Value loss);

  static void ensure_grad(Node* n) {
    if (n->grad.data.empty()) n->grad = Tensor::zeros(n->value.shape);
  }
  /// += into a node's gradient (no-op unless it requires grad).
  static void accum(Node* n, const Tensor& g);

  size_t size() const { return nodes_.size(); }

 private:
  std::deque<Node> nodes_;
};

// ---- elementwise / broadcast ----
// Binary ops broadcast the second operand when its shape is a suffix of the
// first operand's shape (covers per-channel parameters on channels-last
// tensors and scalars).
Value add(Tape& t, Value a, Value b);
Value sub(Tape& t, Value a, Value b);
Value mul(Tape& t, Value a, Value b);
Value scale(Tape& t, Value a, float s);
Value add_scalar(Tape& t, Value a, float s);
Value gelu(Tape& t, Value x);
Value prelu(Tape& t, Value x, Value slope);  // slope per channel (last axis)

// ---- shape ----
Value reshape(Tape& t, Value a, Shape s);
Value permute(Tape& t, Value a, const std::vector<int>& perm);
Value concat(Tape& t, const std::vector<Value>& xs, int axis);
Value slice(Tape& t, Value a, int axis, int64_t start, int64_t len);
/// Gather by a bijective index map (out[i] = in[perm[i]]); used by the shift
/// operations.
Value gather_perm(Tape& t, Value a, std::shared_ptr<const std::vector<int64_t>> perm, Shape out_shape);
/// Repeat a [N,T,C] tensor into [N,copies,T,C]; backward sums over copies.
Value repeat_axis1(Tape& t, Value a, int64_t copies);
/// Concatenate `r` copies along the last axis.
Value tile_channels(Tape& t, Value a, int r);
/// Mean over `r` equal groups of the channel axis: [..., r*C] -> [..., C],
/// out_c = mean_m in[m*C + c]. Inverse of tile_channels on tiled input.
Value channel_group_pool(Tape& t, Value a, int r);

// ---- reductions ----
Value mean_axis(Tape& t, Value a, int axis);
Value sum_all(Tape& t, Value a);
Value mean_all(Tape& t, Value a);

// ---- nn ----
/// Non-graph softmax over the last axis (out may alias in's storage shape).
void softmax_rows(const Tensor& in, Tensor& out);
Value softmax(Tape& t, Value a);      // last axis
Value log_softmax(Tape& t, Value a);  // last axis
/// a [...,M,K] x b [K,N] (shared) or [...,N,K]/[...,K,N] batched.
/// With use_bits the product is computed by the packed xnor kernels;
/// both operands must then be +-1 valued.
Value matmul(Tape& t, Value a, Value b, bool transpose_b = false, bool use_bits = false);
/// x [N,H,W,C], w [KH,KW,C/groups,Cout]; zero padding.
Value conv2d(Tape& t, Value x, Value w, int stride, int pad, int dilation, int groups,
             bool use_bits = false);
Value avg_pool2d(Tape& t, Value x, int k);          // kernel k, stride k
Value nearest_upsample2d(Tape& t, Value x, int k);  // repeat each position k x k

struct BnState {
  Tensor running_mean, running_var;
  bool initialized = false;
};
/// Channels-last batch norm over all axes but the last. eps 1e-5,
/// momentum 0.1 on the running statistics.
Value batch_norm(Tape& t, Value x, Value gamma, Value beta, BnState& state, bool training,
                 float eps = 1e-5f, float momentum = 0.1f);

// ---- losses ----
Value cross_entropy(Tape& t, Value logits, const std::vector<int>& labels);
/// Mean over rows of -sum(target_probs * log_softmax(logits)).
Value soft_cross_entropy(Tape& t, Value logits, const Tensor& target_probs);

// ---- custom gradients ----
/// Records `forward_value` as the result of an opaque op over `inputs`;
/// backward_fn maps the upstream gradient to one gradient per input
/// (empty tensor = no gradient). This is the hook the straight-through
/// estimators are built on.
Value custom_grad(Tape& t, const std::vector<Value>& inputs, Tensor forward_value,
                  std::function<std::vector<Tensor>(const Tensor& upstream)> backward_fn);

/// Max over elements of |analytic - central difference| / max(1,|analytic|)
/// for a scalar-valued graph function of x.
float grad_check(const std::function<Value(Tape&, Value)>& f, const Tensor& x, float eps);

}  // namespace bhvit
