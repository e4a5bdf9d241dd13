#pragma once

#include "bhvit/autograd.hpp"
#include "bhvit/bitpack.hpp"
#include "bhvit/tensor.hpp"

namespace bhvit {

/// Learnable per-channel scale/bias of the activation and attention
/// binarizers. a and b broadcast over the last axis of the input.
struct QuantParams {
  Tensor a;  // positive elementwise
  Tensor b;
};

/// Binarize activations to +-1 around a learnable threshold, with a
/// piecewise-polynomial straight-through gradient. The factor ramps
/// linearly from 0 at |u|=1 to 2 at u=0, u = (x-b)/a.
/// Returns d(loss)/dx factors applied to `upstream`; `da`/`db` receive the
/// per-channel gradients when non-null.
Tensor binarize_activation_forward(const Tensor& x, const QuantParams& p);
Tensor binarize_activation_backward(const Tensor& upstream, const Tensor& x, const QuantParams& p,
                                    Tensor* da = nullptr, Tensor* db = nullptr);
/// Graph op; a and b are per-channel leaves over the last axis of x.
Value binarize_activation(Tape& t, Value x, Value a, Value b);

/// Per-output-channel scaling factor of the weight binarizer: column mean of
/// |W|, floored to keep the two-state +-alpha contract on degenerate columns.
Tensor weight_alpha(const Tensor& w);
/// sign(W) with the clipped straight-through gradient g * 1{-1 < W < 1};
/// sign(0) := +1.
Value weight_sign_ste(Tape& t, Value w);
/// Full weight binarizer: alpha (treated as constant in backward) times the
/// sign estimator, so d(loss)/dW = upstream * alpha * 1{-1 < W < 1}.
Value binarize_weight(Tape& t, Value w);
Tensor binarize_weight_forward(const Tensor& w);

/// Binarize softmax attention to {0, a}: a * clip(round((A-b)/a), 0, 1).
/// Backward passes a * upstream inside [b, a+b), zero elsewhere.
Tensor binarize_attention_forward(const Tensor& a_tt, const QuantParams& p);
Tensor binarize_attention_backward(const Tensor& upstream, const Tensor& a_tt,
                                   const QuantParams& p, Tensor* da = nullptr,
                                   Tensor* db = nullptr);
Value binarize_attention(Tape& t, Value a_tt, Value a, Value b);

/// Quantization decomposition: round(s*A) split into s nested {0,1} masks,
/// mask sigma set where round(s*A) >= sigma (sigma = 1..s). Their sum equals
/// clip(round(s*A), 0, s).
struct AttentionDecomposition {
  int s = 0;
  std::vector<MaskMatrix> masks;
};
AttentionDecomposition quantization_decompose(const Tensor& a_tt, int s);
/// Straight-through gradient of the mask sum: s * upstream on 0 <= A <= 1.
Tensor decompose_backward(const Tensor& upstream, const Tensor& a_tt, int s);
/// Graph op for the mask sum clip(round(s*A), 0, s) with the gradient above.
Value qd_sum(Tape& t, Value a_tt, int s);

}  // namespace bhvit
