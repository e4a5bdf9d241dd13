#pragma once

#include <deque>
#include <string>

#include "bhvit/tensor.hpp"

namespace bhvit {

/// A trainable tensor. Gradients accumulate across a backward pass and are
/// cleared by the optimizer step.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool binary_latent = false;  // participates in L_re and flip tracking
  bool no_decay = false;       // quantizer / norm parameters
  bool trainable = true;       // false for persisted running statistics

  void zero_grad() {
    if (!grad.data.empty()) std::fill(grad.data.begin(), grad.data.end(), 0.0f);
  }
};

/// Owns every parameter of a model; pointers stay stable.
struct ParamStore {
  std::deque<Param> items;

  Param* add(std::string name, Tensor init, bool binary_latent = false, bool no_decay = false) {
    items.push_back(Param{std::move(name), std::move(init), Tensor{}, binary_latent, no_decay});
    return &items.back();
  }
  int64_t total_count() const {
    int64_t n = 0;
    for (const auto& p : items) n += p.value.numel();
    return n;
  }
  void zero_grads() {
    for (auto& p : items) p.zero_grad();
  }
  Param* find(const std::string& name) {
    for (auto& p : items)
      if (p.name == name) return &p;
    return nullptr;
  }
};

}  // namespace bhvit
