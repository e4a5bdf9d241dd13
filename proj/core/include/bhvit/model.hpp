#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "bhvit/layers.hpp"

namespace bhvit {

enum class MixerMode { hybrid, pure_attention, pure_conv };

struct ModelConfig {
  std::string preset;  // "tiny", "small", "micro" or empty
  std::array<int, 4> blocks{2, 2, 6, 2};
  std::array<int64_t, 4> dims{64, 128, 256, 512};
  std::array<int, 4> mlp_ratios{8, 8, 4, 4};
  std::array<int, 4> heads{4, 4, 4, 8};
  std::array<int, 4> windows{7, 7, 7, 7};
  MixerMode mixer_mode = MixerMode::hybrid;
  bool fdl = false;          // keep downsampling layers full precision
  bool qd = true;            // quantization decomposition on the attention map
  bool shift_module = true;  // shift branch of the binary MLP
  int64_t num_classes = 1000;
  int64_t input_size = 224;
  int conv_group_channels = 16;
  int qd_levels = 3;  // s = 2^n - 1, n = 2
  unsigned seed = 7;

  static ModelConfig tiny();
  static ModelConfig small();
  static ModelConfig micro();
  static ModelConfig from_json_text(const std::string& text);
  static ModelConfig from_json_file(const std::string& path);
  std::string to_json_text() const;

  bool stage_is_attention(int stage) const;
  /// Spatial side length at stage i (0-based) for the configured input size.
  int64_t stage_size(int stage) const { return input_size / 4 / (int64_t{1} << stage); }
  void validate() const;
};

struct Msgdc {
  ActQuant aq;
  std::vector<BinaryConv2d> convs;  // dilations 1, 3, 5
  std::vector<RPReLU> acts;
  BatchNorm bn;

  Msgdc() = default;
  Msgdc(ParamStore& ps, const std::string& name, int64_t c, int group_channels, Rng& rng);
  Value apply(Tape& t, Value x, const Ctx& ctx);
};

struct Msmha {
  int heads = 1, window = 1, qd_levels = 3;
  bool qd = true;
  BinaryLinear lq, lk, lv;
  BatchNorm bnq, bnk, bnv;
  RPReLU rq, rk, rv;
  ActQuant baq, bak, bav;          // pre-attention binarizers of Q, K, V
  BatchNorm bno;                   // output norm, mirrors the conv mixer
  Param* att_a = nullptr;          // Eq-3-style attention binarizer scale/bias
  Param* att_b = nullptr;          // (only on the non-QD path)

  Msmha() = default;
  Msmha(ParamStore& ps, const std::string& name, int64_t c, int heads, int window, bool qd,
        int qd_levels, Rng& rng);
  Value apply(Tape& t, Value x, const Ctx& ctx);
};

struct BinaryMlp {
  int ratio = 4;
  bool use_shift = true;
  BinaryLinear l1, l2;
  BatchNorm bn1, bn2;
  RPReLU r1, r2;
  std::vector<ChannelAffine> ls;  // hor/ver/mix for strides 1 and 2

  BinaryMlp() = default;
  BinaryMlp(ParamStore& ps, const std::string& name, int64_t c, int ratio, bool use_shift,
            Rng& rng);
  Value apply(Tape& t, Value x, const Ctx& ctx);
};

struct Block {
  std::optional<Msgdc> conv_mixer;
  std::optional<Msmha> attn_mixer;
  BinaryMlp mlp;
  Value apply(Tape& t, Value x, const Ctx& ctx);
};

struct BHViT {
  ModelConfig cfg;
  ParamStore params;
  PatchEmbed stem;
  std::vector<std::vector<Block>> stages;
  std::vector<Downsample> downsamples;
  Param* head_w = nullptr;
  Param* head_b = nullptr;

  explicit BHViT(const ModelConfig& cfg);
  /// images [N, S, S, 3] -> logits [N, num_classes]
  Value forward(Tape& t, Value images, const Ctx& ctx);
  Tensor predict(const Tensor& images, const Ctx& ctx);
  /// Parameters whose positivity the trainer must preserve (quantizer scales).
  std::vector<Param*> positive_params() const;
};

struct OpsReport {
  double bops = 0, flops = 0;
  int64_t binary_param_count = 0;  // 1 bit each
  int64_t real_param_count = 0;    // 32 bits each; includes the alpha scales
  int64_t aux_param_count = 0;     // foldable per-channel vectors (bn, prelu,
                                   // quantizer thresholds, shift-branch affine)
  double ops() const { return bops / 64.0 + flops; }
  int64_t param_bits() const { return binary_param_count + 32 * real_param_count; }
  int64_t model_size_bytes() const { return param_bits() / 8; }
  int64_t aux_bytes() const { return 4 * aux_param_count; }
};

/// Analytic multiply-accumulate walk of the architecture. Binary MACs count
/// as BOPs, real MACs (stem, head, shift-branch affine, full-precision
/// downsampling) and QD threshold comparisons as FLOPs.
OpsReport count_ops(const ModelConfig& cfg);

}  // namespace bhvit
