// Acceptance gate: one pass/fail line per criterion. Run with a list of
// criterion numbers to restrict (default: all).
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bhvit/checkpoint.hpp"
#include "bhvit/observations.hpp"
#include "bhvit/quantizers.hpp"
#include "bhvit/training.hpp"

using namespace bhvit;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, ...) {
  char buf[256];
  va_list args;
  va_start(args, format);
  vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

// ---- 1: bit kernels vs dense float GEMM ----
Outcome kernel_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  std::uniform_int_distribution<int64_t> dm(1, 64), dk(1, 256), dp(1, 64);
  int failures = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t m = dm(rng), k = dk(rng), p = dp(rng);
    const Tensor a = Tensor::rand_sign({m, k}, rng);
    const Tensor b = Tensor::rand_sign({k, p}, rng);
    Tensor ref({m, p});
    for (int64_t i = 0; i < m; ++i)
      for (int64_t l = 0; l < k; ++l)
        for (int64_t j = 0; j < p; ++j) ref.at2(i, j) += a.at2(i, l) * b.at2(l, j);
    if (xnor_gemm(pack(a), pack(b)).to_tensor().max_abs_diff(ref) != 0.0f) ++failures;
  }
  const double sec = seconds_since(t0);
  return {failures == 0 && sec < 10.0,
          fmt("200 cases, %d mismatches, %.2f s", failures, sec)};
}

// ---- 2: quantization decomposition identity ----
Outcome qd_identity() {
  int failures = 0, nesting = 0;
  for (int s : {1, 3, 7})
    for (int step = 0; step <= 100; ++step) {
      const float a = static_cast<float>(step) / 100.0f;
      const auto dec = quantization_decompose(Tensor({1, 1}, {a}), s);
      int sum = 0;
      for (const auto& m : dec.masks) sum += m.get(0, 0) ? 1 : 0;
      if (sum != std::clamp(static_cast<int>(std::round(s * a)), 0, s)) ++failures;
      for (size_t i = 1; i < dec.masks.size(); ++i)
        if (dec.masks[i].get(0, 0) && !dec.masks[i - 1].get(0, 0)) ++nesting;
    }
  return {failures == 0 && nesting == 0,
          fmt("303 grid points, %d sum failures, %d nesting failures", failures, nesting)};
}

// ---- 3: straight-through estimator fidelity ----
Outcome ste_fidelity() {
  bool ok = true;
  std::ostringstream why;

  const QuantParams unit{Tensor::full({1}, 1.0f), Tensor::zeros({1})};
  const float pts[] = {-1.5f, -1.0f, -0.5f, 0.0f, 0.5f, 1.0f, 1.5f};
  const float want[] = {0.0f, 0.0f, 1.0f, 2.0f, 1.0f, 0.0f, 0.0f};
  for (int i = 0; i < 7; ++i) {
    const Tensor g =
        binarize_activation_backward(Tensor::full({1, 1}, 1.0f), Tensor({1, 1}, {pts[i]}), unit);
    if (g[0] != want[i]) {
      ok = false;
      why << " act@" << pts[i];
    }
  }

  const QuantParams att{Tensor::full({1}, 0.5f), Tensor::full({1}, 0.25f)};
  for (float a = 0.0f; a <= 1.0f; a += 0.05f) {
    const Tensor g =
        binarize_attention_backward(Tensor::full({1, 1}, 2.0f), Tensor({1, 1}, {a}), att);
    const float expect = (a >= 0.25f && a < 0.75f) ? 2.0f * 0.5f : 0.0f;
    if (g[0] != expect) {
      ok = false;
      why << " attn@" << a;
    }
  }

  const Tensor w({6, 1}, {-1.5f, -1.0f, -0.5f, 0.5f, 1.0f, 1.5f});
  Tape t;
  Value wl = t.leaf(w, true);
  t.backward(sum_all(t, weight_sign_ste(t, wl)));
  for (int i = 0; i < 6; ++i) {
    const float expect = (w[i] > -1.0f && w[i] < 1.0f) ? 1.0f : 0.0f;
    if (wl->grad[i] != expect) {
      ok = false;
      why << " w@" << w[i];
    }
  }
  return {ok, ok ? "activation, attention, weight STE rules exact" : "failed:" + why.str()};
}

// ---- 4: finite-difference soundness of every classical op ----
Outcome autograd_soundness() {
  struct OpCase {
    const char* name;
    Shape shape;
    float lo, hi;
    std::function<Value(Tape&, Value, Rng&)> build;
  };
  const std::vector<OpCase> cases = {
      {"add", {2, 3, 4}, -2, 2,
       [&](Tape& t, Value x, Rng& r) {
         return sum_all(t, add(t, x, t.constant(Tensor::uniform({4}, r, -2, 2))));
       }},
      {"sub", {2, 3, 4}, -2, 2,
       [&](Tape& t, Value x, Rng& r) {
         return sum_all(t, sub(t, x, t.constant(Tensor::uniform({3, 4}, r, -2, 2))));
       }},
      {"mul", {2, 3, 4}, -2, 2,
       [&](Tape& t, Value x, Rng& r) {
         return sum_all(t, mul(t, x, t.constant(Tensor::uniform({4}, r, -2, 2))));
       }},
      {"scale", {2, 3, 4}, -2, 2,
       [&](Tape& t, Value x, Rng&) { return sum_all(t, scale(t, x, -1.3f)); }},
      {"add_scalar", {2, 3, 4}, -2, 2,
       [&](Tape& t, Value x, Rng&) { return sum_all(t, add_scalar(t, x, 0.7f)); }},
      {"gelu", {2, 3, 4}, -2, 2,
       [&](Tape& t, Value x, Rng&) { return sum_all(t, gelu(t, x)); }},
      {"prelu", {2, 3, 4}, 0.05f, 2,
       [&](Tape& t, Value x, Rng& r) {
         return sum_all(t, prelu(t, x, t.constant(Tensor::uniform({4}, r, 0.1f, 0.9f))));
       }},
      {"reshape", {2, 3, 4}, -2, 2,
       [&](Tape& t, Value x, Rng&) {
         Value y = reshape(t, x, {6, 4});
         return sum_all(t, mul(t, y, y));
       }},
      {"permute", {2, 3, 4}, -2, 2,
       [&](Tape& t, Value x, Rng&) {
         Value y = permute(t, x, {2, 0, 1});
         return sum_all(t, mul(t, y, y));
       }},
      {"concat", {2, 3, 4}, -2, 2,
       [&](Tape& t, Value x, Rng&) {
         Value y = concat(t, {x, x}, 1);
         return sum_all(t, mul(t, y, y));
       }},
      {"slice", {2, 3, 4}, -2, 2,
       [&](Tape& t, Value x, Rng&) {
         Value y = slice(t, x, 1, 1, 2);
         return sum_all(t, mul(t, y, y));
       }},
      {"gather_perm", {2, 3, 4}, -2, 2,
       [&](Tape& t, Value x, Rng&) {
         auto perm = std::make_shared<std::vector<int64_t>>(24);
         for (int64_t i = 0; i < 24; ++i) (*perm)[static_cast<size_t>(i)] = 23 - i;
         Value y = gather_perm(t, x, perm, {24});
         return sum_all(t, mul(t, y, y));
       }},
      {"repeat_axis1", {2, 3, 4}, -2, 2,
       [&](Tape& t, Value x, Rng&) {
         Value y = repeat_axis1(t, x, 3);
         return sum_all(t, mul(t, y, y));
       }},
      {"tile_channels", {2, 3, 4}, -2, 2,
       [&](Tape& t, Value x, Rng&) {
         Value y = tile_channels(t, x, 2);
         return sum_all(t, mul(t, y, y));
       }},
      {"channel_group_pool", {2, 3, 4}, -2, 2,
       [&](Tape& t, Value x, Rng&) {
         Value y = channel_group_pool(t, x, 2);
         return sum_all(t, mul(t, y, y));
       }},
      {"mean_axis", {2, 3, 4}, -2, 2,
       [&](Tape& t, Value x, Rng&) {
         Value y = mean_axis(t, x, 1);
         return sum_all(t, mul(t, y, y));
       }},
      {"sum_all", {2, 3, 4}, -2, 2,
       [&](Tape& t, Value x, Rng&) { return sum_all(t, mul(t, x, x)); }},
      {"mean_all", {2, 3, 4}, -2, 2,
       [&](Tape& t, Value x, Rng&) { return mean_all(t, mul(t, x, x)); }},
      {"softmax", {3, 5}, -2, 2,
       [&](Tape& t, Value x, Rng&) {
         Value y = softmax(t, x);
         return sum_all(t, mul(t, y, y));
       }},
      {"log_softmax", {3, 5}, -2, 2,
       [&](Tape& t, Value x, Rng&) {
         Value y = log_softmax(t, x);
         return sum_all(t, mul(t, y, y));
       }},
      {"matmul_x", {2, 3, 4}, -1, 1,
       [&](Tape& t, Value x, Rng& r) {
         Value y = matmul(t, x, t.constant(Tensor::uniform({4, 5}, r, -1, 1)));
         return mean_all(t, mul(t, y, y));
       }},
      {"matmul_w", {4, 5}, -1, 1,
       [&](Tape& t, Value x, Rng& r) {
         Value y = matmul(t, t.constant(Tensor::uniform({2, 3, 4}, r, -1, 1)), x);
         return mean_all(t, mul(t, y, y));
       }},
      {"matmul_bt", {2, 3, 4}, -1, 1,
       [&](Tape& t, Value x, Rng& r) {
         Value y = matmul(t, x, t.constant(Tensor::uniform({2, 5, 4}, r, -1, 1)), true);
         return mean_all(t, mul(t, y, y));
       }},
      {"conv2d_x", {1, 5, 5, 3}, -1, 1,
       [&](Tape& t, Value x, Rng& r) {
         Value y = conv2d(t, x, t.constant(Tensor::uniform({3, 3, 3, 2}, r, -1, 1)), 1, 1, 1, 1);
         return mean_all(t, mul(t, y, y));
       }},
      {"conv2d_w", {3, 3, 2, 4}, -1, 1,
       [&](Tape& t, Value x, Rng& r) {
         Value y = conv2d(t, t.constant(Tensor::uniform({1, 6, 6, 4}, r, -1, 1)), x, 2, 3, 3, 2);
         return mean_all(t, mul(t, y, y));
       }},
      {"avg_pool2d", {1, 4, 4, 3}, -2, 2,
       [&](Tape& t, Value x, Rng&) {
         Value y = avg_pool2d(t, x, 2);
         return sum_all(t, mul(t, y, y));
       }},
      {"nearest_upsample2d", {1, 3, 3, 2}, -2, 2,
       [&](Tape& t, Value x, Rng&) {
         Value y = nearest_upsample2d(t, x, 2);
         return sum_all(t, mul(t, y, y));
       }},
      {"batch_norm", {6, 3}, -2, 2,
       [&](Tape& t, Value x, Rng& r) {
         // backward only needs the saved batch statistics, not the state
         BnState st;
         Value y = batch_norm(t, x, t.constant(Tensor::uniform({3}, r, 0.5f, 1.5f)),
                              t.constant(Tensor::uniform({3}, r, -0.5f, 0.5f)), st, true);
         return sum_all(t, mul(t, y, y));
       }},
      {"cross_entropy", {2, 5}, -2, 2,
       [&](Tape& t, Value x, Rng&) { return cross_entropy(t, x, {1, 3}); }},
      {"soft_cross_entropy", {2, 5}, -2, 2,
       [&](Tape& t, Value x, Rng& r) {
         Tensor probs({2, 5});
         softmax_rows(Tensor::uniform({2, 5}, r, -1, 1), probs);
         return soft_cross_entropy(t, x, probs);
       }},
  };

  float worst = 0;
  std::string worst_op = "-";
  for (const auto& c : cases)
    for (unsigned point = 0; point < 10; ++point) {
      Rng data_rng(1000 + point);
      Rng aux_template(2000 + point * 31);
      const Tensor x = Tensor::uniform(c.shape, data_rng, c.lo, c.hi);
      // the same auxiliary tensors must be redrawn identically per evaluation
      auto f = [&](Tape& t, Value v) {
        Rng aux = aux_template;
        return c.build(t, v, aux);
      };
      const float err = grad_check(f, x, 1e-2f);
      if (err > worst) {
        worst = err;
        worst_op = c.name;
      }
    }
  return {worst < 1e-3f, fmt("worst relative error %.2e (%s)", worst, worst_op.c_str())};
}

// ---- 5: Adam update-magnitude factor ----
Outcome adam_factor_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto curve = adam_factor_curve(5000);
  const double at5000 = curve.back().second;
  const double limit = std::sqrt(999.0) / 9.0;
  const double tail = adam_factor(2000000);
  const double sec = seconds_since(t0);
  return {at5000 >= 3.48 && at5000 <= 3.52 && std::fabs(tail - limit) < 1e-3 && sec < 1.0,
          fmt("factor(5000)=%.4f, limit gap %.1e, %.2f s", at5000, std::fabs(tail - limit), sec)};
}

// ---- 6: attention entropy uniformization ----
Outcome entropy_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = entropy_experiment({20, 200, 2000}, 256, 20, 7);
  const double sec = seconds_since(t0);
  const bool increasing = rows[0].ratio < rows[1].ratio && rows[1].ratio < rows[2].ratio;
  const double gap = std::fabs(rows[2].h_emp - rows[2].h_pred) / rows[2].h_emp;
  return {increasing && rows[2].ratio >= 0.99 && gap < 0.05 && sec < 30.0,
          fmt("ratios %.4f/%.4f/%.4f, k=2000 prediction gap %.2e, %.1f s", rows[0].ratio,
              rows[1].ratio, rows[2].ratio, gap, sec)};
}

// ---- 7: residual shortcut densifies gradients; micro reachability ----
Outcome residual_gradient_check() {
  const ResidualSummary s = residual_gradient_experiment(4, 8, 100, 7);

  ModelConfig cfg = ModelConfig::micro();
  BHViT model(cfg);
  Rng rng(107);
  Tape tape;
  Value logits = model.forward(
      tape, tape.constant(Tensor::uniform({4, cfg.input_size, cfg.input_size, 3}, rng, -1, 1)),
      Ctx{true, false});
  tape.backward(cross_entropy(tape, logits, {0, 1, 2, 3}));
  int unreachable = 0;
  std::string first;
  for (const auto& p : model.params.items) {
    if (!p.trainable) continue;
    bool nonzero = false;
    for (float g : p.grad.data) nonzero = nonzero || g != 0.0f;
    if (!nonzero) {
      ++unreachable;
      if (first.empty()) first = p.name;
    }
  }
  return {s.strict_wins >= 95 && unreachable == 0,
          fmt("shortcut wins %d/100 (zero-frac %.3f vs %.3f); %d unreachable tensors%s%s",
              s.strict_wins, s.mean_with, s.mean_without, unreachable,
              first.empty() ? "" : ", first ", first.c_str())};
}

TrainConfig smoke_config(unsigned seed, float beta) {
  TrainConfig tc;
  tc.epochs = 20;
  tc.batch_size = 32;
  tc.lambda = 0.0f;
  tc.beta_value = beta;
  tc.beta_start = 0.9f;
  tc.seed = seed;
  return tc;
}

Dataset smoke_train_set, smoke_eval_set;

void load_smoke_data() {
  if (smoke_train_set.size() > 0) return;
  const std::string path = "/tmp/bhvit_acceptance_data.bin";
  write_synthetic_cifar(path, 2400, 123);
  Dataset all = load_cifar(path, 64);
  smoke_train_set.images = Tensor({2000, 64, 64, 3});
  std::copy_n(all.images.data.begin(), smoke_train_set.images.numel(),
              smoke_train_set.images.data.begin());
  smoke_train_set.labels.assign(all.labels.begin(), all.labels.begin() + 2000);
  smoke_eval_set.images = Tensor({400, 64, 64, 3});
  std::copy_n(all.images.data.begin() + smoke_train_set.images.numel(),
              smoke_eval_set.images.numel(), smoke_eval_set.images.data.begin());
  smoke_eval_set.labels.assign(all.labels.begin() + 2000, all.labels.end());
}

// ---- 8: smoke training ----
Outcome smoke_training() {
  const auto t0 = std::chrono::steady_clock::now();
  load_smoke_data();
  ModelConfig cfg = ModelConfig::micro();
  cfg.seed = 1;
  BHViT model(cfg);
  const TrainResult r =
      train(model, smoke_train_set, smoke_eval_set, smoke_config(1, 0.0f), nullptr, nullptr);
  // measured on the held-out set at epoch end: the model's actual loss curve,
  // free of the per-epoch augmentation-draw noise in the running train mean
  int decreasing = 0;
  for (size_t i = 1; i < r.records.size(); ++i)
    if (r.records[i].eval_loss < r.records[i - 1].eval_loss) ++decreasing;
  const double frac = static_cast<double>(decreasing) / (r.records.size() - 1);
  const double sec = seconds_since(t0);
  return {r.final_eval_acc >= 0.30f && frac >= 0.75 && sec <= 1800.0,
          fmt("eval acc %.3f, %d/19 decreasing transitions, %.0f s", r.final_eval_acc,
              decreasing, sec)};
}

// ---- 9: regularization reduces late-phase weight flips ----
Outcome rl_effect() {
  load_smoke_data();
  double base_mean = 0, rl_mean = 0;
  for (unsigned seed : {1u, 2u, 3u}) {
    for (int variant = 0; variant < 2; ++variant) {
      const float beta = variant == 0 ? 0.0f : 0.1f;
      ModelConfig cfg = ModelConfig::micro();
      cfg.seed = seed;
      BHViT model(cfg);
      Dataset no_eval;
      const TrainResult r =
          train(model, smoke_train_set, no_eval, smoke_config(seed, beta), nullptr, nullptr);
      double phase = 0;
      for (size_t e = 17; e < 20; ++e) phase += static_cast<double>(r.records[e].flips);
      phase /= 3.0;
      (variant == 0 ? base_mean : rl_mean) += phase / 3.0;
    }
  }
  return {rl_mean <= 0.70 * base_mean,
          fmt("RL-phase flips/epoch: %.1f with RL vs %.1f baseline (ratio %.2f)", rl_mean,
              base_mean, base_mean > 0 ? rl_mean / base_mean : 0.0)};
}

// ---- 10: complexity counter vs the published table ----
Outcome ops_counter() {
  // desk-scale 10-class head; the published size excludes the 1000-way
  // classifier's full-precision matrix
  ModelConfig small = ModelConfig::small();
  small.num_classes = 10;
  const OpsReport r = count_ops(small);
  ModelConfig fdl = small;
  fdl.fdl = true;
  const double ops = r.ops();
  const double mb = static_cast<double>(r.model_size_bytes()) / 1e6;
  const double fdl_ops = count_ops(fdl).ops();
  const bool ok = std::fabs(ops - 0.8e8) <= 0.2 * 0.8e8 && std::fabs(mb - 3.5) <= 0.15 * 3.5 &&
                  std::fabs(fdl_ops - 1.5e8) <= 0.2 * 1.5e8;
  return {ok, fmt("OPs %.3e (target 0.8e8), size %.2f MB (target 3.5), FDL OPs %.3e (target 1.5e8)",
                  ops, mb, fdl_ops)};
}

// ---- 11: persistence and dual-route equality ----
Outcome persistence() {
  ModelConfig cfg = ModelConfig::micro();
  BHViT model(cfg);
  const std::string path = "/tmp/bhvit_acceptance_ckpt.bin";
  save_checkpoint(path, model, nullptr, CheckpointMeta{}, false);
  BHViT reloaded(cfg);
  load_checkpoint(path, reloaded, nullptr);

  Rng rng(111);
  float worst_roundtrip = 0, worst_route = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = Tensor::uniform({1, cfg.input_size, cfg.input_size, 3}, rng, -1, 1);
    const Tensor dense = model.predict(x, Ctx{false, false});
    worst_roundtrip =
        std::max(worst_roundtrip, dense.max_abs_diff(reloaded.predict(x, Ctx{false, false})));
    worst_route = std::max(worst_route, dense.max_abs_diff(model.predict(x, Ctx{false, true})));
  }
  std::remove(path.c_str());
  return {worst_roundtrip == 0.0f && worst_route == 0.0f,
          fmt("20 inputs: max roundtrip diff %.1e, max dense-vs-bit diff %.1e", worst_roundtrip,
              worst_route)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, kernel_equivalence}, {2, qd_identity},      {3, ste_fidelity},
      {4, autograd_soundness}, {5, adam_factor_check}, {6, entropy_check},
      {7, residual_gradient_check}, {8, smoke_training}, {9, rl_effect},
      {10, ops_counter},       {11, persistence},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& [num, fn] : criteria) {
    if (!wanted.empty() && !wanted.count(num)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.ok) ++failures;
    std::printf("criterion %d: %s - %s\n", num, o.ok ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
