#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "bhvit/dataset.hpp"
#include "bhvit/model.hpp"

namespace bhvit {

struct TrainConfig {
  float lambda = 0.8f;      // distillation weight (forced 0 without a teacher)
  float beta_value = 0.1f;  // regularization weight once active
  float beta_start = 0.9f;  // active from epoch >= beta_start * epochs
  float lr = 5e-4f;         // cosine-annealed from here
  float weight_decay = 0.0f;
  int epochs = 20;
  int batch_size = 32;
  unsigned seed = 1;
  bool augment = true;

  void validate() const;
  /// (1-lambda-beta, lambda, beta) for a 1-based epoch; weights sum to 1.
  struct Weights {
    float cls, dis, re;
  };
  Weights loss_weights(int epoch, bool has_teacher) const;
};

struct AdamW {
  float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f, weight_decay = 0.0f;
  int64_t t = 0;
  std::vector<Tensor> m, v;

  explicit AdamW(const ParamStore& ps);
  void step(ParamStore& ps, float lr);
};

/// sqrt(sum_{i<=t} beta2^i) / sum_{i<=t} beta1^i — the update-magnitude
/// factor whose plateau (~3.51) drives the weight-oscillation analysis.
double adam_factor(int64_t t);

/// Mean of ||w|-1| over all binary latent weights.
float regularization_loss(const ParamStore& ps);
/// Adds coeff * d/dw of the loss above into the latent-weight gradients.
void add_regularization_gradient(ParamStore& ps, float coeff);

/// Per-layer sign-change counter for binary latent weights.
struct FlipTracker {
  std::vector<std::pair<const Param*, Tensor>> signs;
  explicit FlipTracker(const ParamStore& ps);
  /// Counts flips since the previous call and refreshes the snapshot.
  std::vector<std::pair<std::string, int64_t>> update();
  int64_t update_total();
};

/// Composite training loss. Returns the graph node for the cls+dis part;
/// the regularization term is reported through `re_value` and its gradient
/// must be injected after backward() via add_regularization_gradient with
/// coefficient w.re.
Value classification_loss(Tape& t, Value logits, const std::vector<int>& labels,
                          const Tensor* teacher_rows, const TrainConfig::Weights& w);

struct EpochRecord {
  int epoch = 0;
  float train_loss = 0, eval_loss = 0, eval_acc = 0, lr = 0, re = 0;
  int64_t flips = 0;
};

struct TrainResult {
  std::vector<EpochRecord> records;
  float final_eval_acc = 0;
};

struct EvalStats {
  float accuracy = 0;
  float loss = 0;  // mean cross entropy
};

float evaluate(BHViT& model, const Dataset& data, int batch_size = 64);
/// Accuracy and mean cross entropy in one deterministic eval-mode pass.
EvalStats evaluate_stats(BHViT& model, const Dataset& data, int batch_size = 64);

/// Full loop: shuffled minibatches, cosine schedule, flip tracking, one JSON
/// object per epoch to `metrics` when non-null, checkpoint at the end when
/// `checkpoint_path` is non-empty. Aborts on non-finite loss.
TrainResult train(BHViT& model, const Dataset& train_set, const Dataset& eval_set,
                  const TrainConfig& cfg, const TeacherLogits* teacher = nullptr,
                  std::ostream* metrics = nullptr, const std::string& checkpoint_path = "");

}  // namespace bhvit
