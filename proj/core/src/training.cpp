#include "bhvit/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "bhvit/checkpoint.hpp"

namespace bhvit {

void TrainConfig::validate() const {
  if (lambda < 0.0f || lambda >= 1.0f) throw ConfigError("lambda must be in [0,1)");
  if (lambda + beta_value >= 1.0f) throw ConfigError("lambda + beta must be below 1");
  if (beta_value < 0.0f) throw ConfigError("beta must be non-negative");
  if (epochs < 1 || batch_size < 1) throw ConfigError("epochs and batch_size must be positive");
  if (lr <= 0.0f) throw ConfigError("lr must be positive");
}

TrainConfig::Weights TrainConfig::loss_weights(int epoch, bool has_teacher) const {
  const float dis = has_teacher ? lambda : 0.0f;
  const bool rl_active =
      static_cast<float>(epoch) >= beta_start * static_cast<float>(epochs) && beta_value > 0.0f;
  const float re = rl_active ? beta_value : 0.0f;
  return Weights{1.0f - dis - re, dis, re};
}

AdamW::AdamW(const ParamStore& ps) {
  m.reserve(ps.items.size());
  v.reserve(ps.items.size());
  for (const auto& p : ps.items) {
    m.push_back(Tensor::zeros(p.value.shape));
    v.push_back(Tensor::zeros(p.value.shape));
  }
}

void AdamW::step(ParamStore& ps, float lr) {
  if (m.size() != ps.items.size()) throw ShapeError("AdamW: parameter count changed");
  ++t;
  const double bc1 = 1.0 - std::pow(static_cast<double>(beta1), static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(static_cast<double>(beta2), static_cast<double>(t));
  size_t idx = 0;
  for (auto& p : ps.items) {
    Tensor& mi = m[idx];
    Tensor& vi = v[idx];
    ++idx;
    if (p.grad.data.empty()) continue;
    for (size_t i = 0; i < p.value.data.size(); ++i) {
      const float g = p.grad.data[i];
      mi.data[i] = beta1 * mi.data[i] + (1.0f - beta1) * g;
      vi.data[i] = beta2 * vi.data[i] + (1.0f - beta2) * g * g;
      const float mhat = mi.data[i] / static_cast<float>(bc1);
      const float vhat = vi.data[i] / static_cast<float>(bc2);
      float upd = mhat / (std::sqrt(vhat) + eps);
      if (weight_decay > 0.0f && !p.no_decay) upd += weight_decay * p.value.data[i];
      p.value.data[i] -= lr * upd;
    }
    p.zero_grad();
  }
}

double adam_factor(int64_t t) {
  if (t < 1) throw DomainError("adam_factor: t must be at least 1");
  constexpr double b1 = 0.9, b2 = 0.999;
  const double s1 = b1 * (1.0 - std::pow(b1, static_cast<double>(t))) / (1.0 - b1);
  const double s2 = b2 * (1.0 - std::pow(b2, static_cast<double>(t))) / (1.0 - b2);
  return std::sqrt(s2) / s1;
}

float regularization_loss(const ParamStore& ps) {
  // per-layer mean, summed over layers: keeps the penalty at roughly the same
  // scale for every binary tensor regardless of its size
  double total = 0.0;
  for (const auto& p : ps.items) {
    if (!p.binary_latent) continue;
    double sum = 0.0;
    for (float w : p.value.data) sum += std::fabs(std::fabs(w) - 1.0f);
    total += sum / static_cast<double>(p.value.numel());
  }
  return static_cast<float>(total);
}

void add_regularization_gradient(ParamStore& ps, float coeff) {
  for (auto& p : ps.items) {
    if (!p.binary_latent) continue;
    const float scale = coeff / static_cast<float>(p.value.numel());
    if (p.grad.data.empty()) p.grad = Tensor::zeros(p.value.shape);
    for (size_t i = 0; i < p.value.data.size(); ++i) {
      const float w = p.value.data[i];
      // d/dw ||w|-1| = sign(w) * sign(|w|-1); zero at the kink
      const float mag = std::fabs(w);
      if (mag == 1.0f || w == 0.0f) continue;
      const float g = (w > 0.0f ? 1.0f : -1.0f) * (mag > 1.0f ? 1.0f : -1.0f);
      p.grad.data[i] += scale * g;
    }
  }
}

FlipTracker::FlipTracker(const ParamStore& ps) {
  for (const auto& p : ps.items) {
    if (!p.binary_latent) continue;
    Tensor s(p.value.shape);
    for (size_t i = 0; i < p.value.data.size(); ++i)
      s.data[i] = p.value.data[i] >= 0.0f ? 1.0f : -1.0f;
    signs.emplace_back(&p, std::move(s));
  }
}

std::vector<std::pair<std::string, int64_t>> FlipTracker::update() {
  std::vector<std::pair<std::string, int64_t>> out;
  for (auto& [p, snap] : signs) {
    int64_t flips = 0;
    for (size_t i = 0; i < p->value.data.size(); ++i) {
      const float s = p->value.data[i] >= 0.0f ? 1.0f : -1.0f;
      if (s != snap.data[i]) {
        ++flips;
        snap.data[i] = s;
      }
    }
    out.emplace_back(p->name, flips);
  }
  return out;
}

int64_t FlipTracker::update_total() {
  int64_t total = 0;
  for (const auto& [name, f] : update()) total += f;
  return total;
}

Value classification_loss(Tape& t, Value logits, const std::vector<int>& labels,
                          const Tensor* teacher_rows, const TrainConfig::Weights& w) {
  Value loss = scale(t, cross_entropy(t, logits, labels), w.cls);
  if (teacher_rows && w.dis > 0.0f) {
    Tensor targets(teacher_rows->shape);
    softmax_rows(*teacher_rows, targets);
    loss = add(t, loss, scale(t, soft_cross_entropy(t, logits, targets), w.dis));
  }
  return loss;
}

EvalStats evaluate_stats(BHViT& model, const Dataset& data, int batch_size) {
  const int64_t n = data.size();
  if (n == 0) throw DomainError("evaluate: empty dataset");
  const int64_t s = data.side();
  int64_t correct = 0;
  double loss_sum = 0.0;
  for (int64_t start = 0; start < n; start += batch_size) {
    const int64_t bn = std::min<int64_t>(batch_size, n - start);
    Tensor batch({bn, s, s, 3});
    std::copy_n(data.images.data.begin() + start * s * s * 3, bn * s * s * 3,
                batch.data.begin());
    Tensor logits = model.predict(batch, Ctx{false, false});
    const int64_t k = logits.shape[1];
    for (int64_t i = 0; i < bn; ++i) {
      const int label = data.labels[static_cast<size_t>(start + i)];
      int best = 0;
      float maxv = logits.at2(i, 0);
      for (int64_t c = 1; c < k; ++c)
        if (logits.at2(i, c) > maxv) {
          maxv = logits.at2(i, c);
          best = static_cast<int>(c);
        }
      if (best == label) ++correct;
      double lse = 0.0;
      for (int64_t c = 0; c < k; ++c)
        lse += std::exp(static_cast<double>(logits.at2(i, c) - maxv));
      loss_sum += std::log(lse) - static_cast<double>(logits.at2(i, label) - maxv);
    }
  }
  return EvalStats{static_cast<float>(correct) / static_cast<float>(n),
                   static_cast<float>(loss_sum / static_cast<double>(n))};
}

float evaluate(BHViT& model, const Dataset& data, int batch_size) {
  return evaluate_stats(model, data, batch_size).accuracy;
}

namespace {

void clamp_positive(std::vector<Param*>& params, float floor) {
  for (Param* p : params)
    for (float& v : p->value.data) v = std::max(v, floor);
}

std::string json_escape_free_line(const EpochRecord& r) {
  std::ostringstream ss;
  ss << "{\"epoch\":" << r.epoch << ",\"train_loss\":" << r.train_loss
     << ",\"eval_loss\":" << r.eval_loss << ",\"eval_acc\":" << r.eval_acc << ",\"lr\":" << r.lr
     << ",\"re\":" << r.re << ",\"flips\":" << r.flips << "}";
  return ss.str();
}

}  // namespace

TrainResult train(BHViT& model, const Dataset& train_set, const Dataset& eval_set,
                  const TrainConfig& cfg, const TeacherLogits* teacher, std::ostream* metrics,
                  const std::string& checkpoint_path) {
  cfg.validate();
  if (train_set.size() == 0) throw DomainError("train: empty dataset");
  if (teacher && teacher->count() != train_set.size())
    throw ShapeError("train: teacher logits row count does not match the dataset");
  const int64_t n = train_set.size();
  const int64_t s = train_set.side();
  Rng rng(cfg.seed);
  AdamW opt(model.params);
  opt.weight_decay = cfg.weight_decay;
  FlipTracker flips(model.params);
  std::vector<Param*> positive = model.positive_params();
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto w = cfg.loss_weights(epoch, teacher != nullptr);
    const float lr =
        0.5f * cfg.lr *
        (1.0f + std::cos(3.14159265358979323846f * static_cast<float>(epoch - 1) /
                         static_cast<float>(cfg.epochs)));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int64_t batches = 0;
    for (int64_t start = 0; start < n; start += cfg.batch_size) {
      const int64_t bn = std::min<int64_t>(cfg.batch_size, n - start);
      Tensor batch({bn, s, s, 3});
      std::vector<int> labels(static_cast<size_t>(bn));
      Tensor teacher_rows;
      if (teacher) teacher_rows = Tensor({bn, teacher->rows.shape[1]});
      for (int64_t i = 0; i < bn; ++i) {
        const int64_t src = order[static_cast<size_t>(start + i)];
        std::copy_n(train_set.images.data.begin() + src * s * s * 3, s * s * 3,
                    batch.data.begin() + i * s * s * 3);
        labels[static_cast<size_t>(i)] = train_set.labels[static_cast<size_t>(src)];
        if (teacher)
          std::copy_n(teacher->rows.data.begin() + src * teacher->rows.shape[1],
                      teacher->rows.shape[1],
                      teacher_rows.data.begin() + i * teacher->rows.shape[1]);
      }
      if (cfg.augment) batch = augment_batch(batch, rng);

      Tape tape;
      Value logits = model.forward(tape, tape.constant(std::move(batch)), Ctx{true, false});
      Value loss =
          classification_loss(tape, logits, labels, teacher ? &teacher_rows : nullptr, w);
      const float re = w.re > 0.0f ? regularization_loss(model.params) : 0.0f;
      const float total = loss->value.data[0] + w.re * re;
      if (!std::isfinite(total))
        throw DomainError("train: non-finite loss at epoch " + std::to_string(epoch));
      tape.backward(loss);
      if (w.re > 0.0f) add_regularization_gradient(model.params, w.re);
      opt.step(model.params, lr);
      clamp_positive(positive, 1e-3f);
      loss_sum += total;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = static_cast<float>(loss_sum / std::max<int64_t>(batches, 1));
    if (eval_set.size() > 0) {
      const EvalStats es = evaluate_stats(model, eval_set);
      rec.eval_acc = es.accuracy;
      rec.eval_loss = es.loss;
    }
    rec.lr = lr;
    rec.re = regularization_loss(model.params);
    rec.flips = flips.update_total();
    if (metrics) (*metrics) << json_escape_free_line(rec) << "\n" << std::flush;
    result.records.push_back(rec);
  }
  result.final_eval_acc = result.records.empty() ? 0.0f : result.records.back().eval_acc;
  if (!checkpoint_path.empty()) {
    CheckpointMeta meta;
    meta.epoch = cfg.epochs;
    std::ostringstream rs;
    rs << rng;
    meta.rng_state = rs.str();
    save_checkpoint(checkpoint_path, model, &opt, meta, false);
  }
  return result;
}

}  // namespace bhvit
