#pragma once

#include <string>

#include "bhvit/autograd.hpp"
#include "bhvit/params.hpp"
#include "bhvit/quantizers.hpp"

namespace bhvit {

/// Per-forward-pass switches shared by every layer.
struct Ctx {
  bool training = false;
  bool use_bits = false;  // route binary matmuls/convs through the packed kernels
};

struct BatchNorm {
  Param* gamma = nullptr;
  Param* beta = nullptr;
  Param* run_mean = nullptr;  // non-trainable, persisted running statistics
  Param* run_var = nullptr;
  BnState state;

  BatchNorm() = default;
  BatchNorm(ParamStore& ps, const std::string& name, int64_t c);
  Value apply(Tape& t, Value x, const Ctx& ctx);
};

/// prelu with learnable input shift and output shift (ReActNet-style).
struct RPReLU {
  Param* shift_in = nullptr;
  Param* shift_out = nullptr;
  Param* slope = nullptr;

  RPReLU() = default;
  RPReLU(ParamStore& ps, const std::string& name, int64_t c);
  Value apply(Tape& t, Value x);
};

/// Learnable scale/bias of the activation binarizer. The scale must stay
/// positive; the trainer clamps it after each step.
struct ActQuant {
  Param* a = nullptr;
  Param* b = nullptr;

  ActQuant() = default;
  ActQuant(ParamStore& ps, const std::string& name, int64_t c);
  Value apply(Tape& t, Value x);
};

/// Elementwise per-channel affine (the scaling transform on the shift branch).
struct ChannelAffine {
  Param* scale = nullptr;
  Param* bias = nullptr;

  ChannelAffine() = default;
  ChannelAffine(ParamStore& ps, const std::string& name, int64_t c);
  Value apply(Tape& t, Value x);
};

/// Binary linear layer: binarized input times sign(W), column-scaled by the
/// per-output-channel alpha. The packed route and the dense route produce
/// bit-identical outputs because the +-1 accumulation is exact in float and
/// alpha is applied outside the matmul.
struct BinaryLinear {
  Param* w = nullptr;  // latent weight [in, out]
  ActQuant aq;
  int64_t in = 0, out = 0;

  BinaryLinear() = default;
  BinaryLinear(ParamStore& ps, const std::string& name, int64_t in, int64_t out, Rng& rng);
  Value apply(Tape& t, Value x, const Ctx& ctx);
};

/// Binary grouped conv with the same dual-route guarantee.
struct BinaryConv2d {
  Param* w = nullptr;  // [KH, KW, C/groups, Cout]
  ActQuant aq;
  bool with_aq = true;  // false when the caller binarizes the input itself
  int kh = 0, kw = 0, stride = 1, pad = 0, dilation = 1, groups = 1;
  int64_t cin = 0, cout = 0;

  BinaryConv2d() = default;
  BinaryConv2d(ParamStore& ps, const std::string& name, int64_t cin, int64_t cout, int k,
               int stride, int pad, int dilation, int groups, Rng& rng, bool with_aq = true);
  Value apply(Tape& t, Value x, const Ctx& ctx);
};

enum class ShiftKind { horizontal, vertical, mix };
struct ShiftSpec {
  ShiftKind kind = ShiftKind::horizontal;
  int k = 1;
};
/// Circular spatial shift on [N,H,W,C]; a bijection on the index set.
/// horizontal: first k columns wrap to the end; vertical: same on rows;
/// mix: channel quarters come from the left/right/up/down neighbors at
/// distance k.
Value shift(Tape& t, Value x, const ShiftSpec& spec);

/// Full-precision stem: 4x4 stride-4 conv + bn + gelu + position embedding.
struct PatchEmbed {
  Param* w = nullptr;  // [4,4,3,C]
  Param* pos = nullptr;
  BatchNorm bn;
  int64_t c = 0, oh = 0, ow = 0;

  PatchEmbed() = default;
  PatchEmbed(ParamStore& ps, const std::string& name, int64_t c, int64_t input_size, Rng& rng);
  Value apply(Tape& t, Value x, const Ctx& ctx);  // x [N,H,W,3]
};

/// 2x2 stride-2 conv doubling channels, binary by default, full precision
/// when `full_precision` (the FDL variant) is set. bn follows either route.
struct Downsample {
  bool full_precision = false;
  BinaryConv2d bconv;
  Param* w_fp = nullptr;
  BatchNorm bn;
  int64_t cin = 0, cout = 0;

  Downsample() = default;
  Downsample(ParamStore& ps, const std::string& name, int64_t cin, bool full_precision, Rng& rng);
  Value apply(Tape& t, Value x, const Ctx& ctx);
};

}  // namespace bhvit
