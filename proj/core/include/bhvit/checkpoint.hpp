#pragma once

#include <string>

#include "bhvit/model.hpp"
#include "bhvit/training.hpp"

namespace bhvit {

/// Versioned binary checkpoint ("BHVT" magic). Dense-f32 tensors roundtrip
/// bit-exactly; binary latent weights may instead be stored bitpacked with
/// their per-channel scale (deployment export), which preserves the signs
/// and reconstructs +-alpha latents.
struct CheckpointMeta {
  int epoch = 0;
  std::string rng_state;  // serialized generator, for bit-exact resume
};

void save_checkpoint(const std::string& path, const BHViT& model, const AdamW* opt,
                     const CheckpointMeta& meta, bool pack_binary = false);

/// Restores parameters (and optimizer state when `opt` is non-null and the
/// file carries one) into a model built from the same config. The stored
/// model config must match; the config itself is embedded and can be read
/// back without a model via peek_config.
CheckpointMeta load_checkpoint(const std::string& path, BHViT& model, AdamW* opt = nullptr);
ModelConfig peek_config(const std::string& path);

}  // namespace bhvit
