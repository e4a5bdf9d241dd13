#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <sstream>

#include "bhvit/checkpoint.hpp"
#include "bhvit/training.hpp"

using namespace bhvit;

namespace {

// small square inputs so a loop epoch stays cheap
ModelConfig test_config() {
  ModelConfig cfg = ModelConfig::micro();
  cfg.input_size = 32;
  cfg.windows = {2, 2, 2, 1};
  cfg.validate();
  return cfg;
}

Dataset tiny_dataset(int64_t n, int64_t side, unsigned seed) {
  const std::string path = "/tmp/bhvit_test_data_" + std::to_string(seed) + ".bin";
  write_synthetic_cifar(path, n, seed);
  return load_cifar(path, side);
}

}  // namespace

TEST_CASE("loss weights follow the schedule") {
  TrainConfig tc;
  tc.lambda = 0.8f;
  tc.beta_value = 0.1f;
  tc.epochs = 20;

  auto w = tc.loss_weights(1, true);
  CHECK(w.cls == doctest::Approx(0.2f));
  CHECK(w.dis == doctest::Approx(0.8f));
  CHECK(w.re == 0.0f);

  w = tc.loss_weights(17, true);
  CHECK(w.re == 0.0f);
  w = tc.loss_weights(18, true);  // 0.9 * 20
  CHECK(w.re == doctest::Approx(0.1f));
  CHECK(w.cls == doctest::Approx(0.1f));

  w = tc.loss_weights(20, false);  // no teacher: distillation mass moves to cls
  CHECK(w.dis == 0.0f);
  CHECK(w.cls == doctest::Approx(0.9f));
}

TEST_CASE("adam factor curve: start, plateau, limit") {
  CHECK(adam_factor(1) == doctest::Approx(std::sqrt(0.999) / 0.9));
  CHECK(adam_factor(5000) > 3.48);
  CHECK(adam_factor(5000) < 3.52);
  const double limit = std::sqrt(999.0) / 9.0;
  CHECK(std::fabs(adam_factor(1000000) - limit) < 1e-3);
}

TEST_CASE("adamw descends a quadratic and skips decay on no_decay params") {
  ParamStore ps;
  Param* p = ps.add("w", Tensor({1}, {4.0f}));
  Param* nd = ps.add("n", Tensor({1}, {4.0f}), false, true);
  AdamW opt(ps);
  opt.weight_decay = 0.1f;
  for (int i = 0; i < 200; ++i) {
    p->grad = Tensor({1}, {2.0f * p->value[0]});
    nd->grad = Tensor({1}, {0.0f});
    opt.step(ps, 0.05f);
  }
  CHECK(std::fabs(p->value[0]) < 0.5f);
  CHECK(nd->value[0] == doctest::Approx(4.0f));  // zero grad + no decay = untouched
}

TEST_CASE("regularization loss and gradient pull latents toward +-1") {
  ParamStore ps;
  Param* p = ps.add("w", Tensor({4}, {0.5f, -0.5f, 2.0f, -1.0f}), true);
  CHECK(regularization_loss(ps) == doctest::Approx((0.5f + 0.5f + 1.0f + 0.0f) / 4.0f));
  add_regularization_gradient(ps, 1.0f);
  CHECK(p->grad[0] == doctest::Approx(-0.25f));  // push 0.5 up toward 1
  CHECK(p->grad[1] == doctest::Approx(0.25f));   // push -0.5 down toward -1
  CHECK(p->grad[2] == doctest::Approx(0.25f));   // pull 2.0 back toward 1
  CHECK(p->grad[3] == 0.0f);                     // already at the kink

  // a second layer contributes its own mean; small layers are not drowned out
  Param* q = ps.add("w2", Tensor({2}, {0.0f, 0.5f}), true);
  CHECK(regularization_loss(ps) == doctest::Approx(0.5f + 0.75f));
  add_regularization_gradient(ps, 1.0f);
  CHECK(q->grad[1] == doctest::Approx(-0.5f));  // coeff / layer size, not global size
}

TEST_CASE("flip tracker counts sign changes once") {
  ParamStore ps;
  Param* p = ps.add("w", Tensor({3}, {1.0f, -1.0f, 0.5f}), true);
  FlipTracker ft(ps);
  p->value = Tensor({3}, {-1.0f, -2.0f, 0.1f});
  CHECK(ft.update_total() == 1);
  CHECK(ft.update_total() == 0);  // snapshot refreshed
}

TEST_CASE("two-epoch training run: finite losses, metrics, checkpoint") {
  const ModelConfig mc = test_config();
  Dataset train_set = tiny_dataset(64, mc.input_size, 51);
  Dataset eval_set = tiny_dataset(32, mc.input_size, 52);
  BHViT model(mc);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 16;
  tc.beta_value = 0.5f;  // exercise the RL branch: active from epoch 2
  tc.lambda = 0.0f;
  std::ostringstream metrics;
  const std::string ckpt = "/tmp/bhvit_test_train_ckpt.bin";
  const TrainResult r = train(model, train_set, eval_set, tc, nullptr, &metrics, ckpt);
  REQUIRE(r.records.size() == 2);
  for (const auto& rec : r.records) {
    CHECK(std::isfinite(rec.train_loss));
    CHECK(std::isfinite(rec.eval_loss));
  }
  CHECK(r.records[0].re >= 0.0f);
  CHECK(metrics.str().find("\"epoch\":1") != std::string::npos);
  CHECK(metrics.str().find("\"flips\"") != std::string::npos);

  // the checkpoint reproduces the trained model bit-exactly, optimizer included
  BHViT reloaded(mc);
  AdamW opt(reloaded.params);
  const CheckpointMeta meta = load_checkpoint(ckpt, reloaded, &opt);
  CHECK(meta.epoch == 2);
  CHECK(opt.t > 0);
  Rng rng(53);
  const Tensor x = Tensor::uniform({2, mc.input_size, mc.input_size, 3}, rng, -1, 1);
  CHECK(model.predict(x, Ctx{false, false})
            .max_abs_diff(reloaded.predict(x, Ctx{false, false})) == 0.0f);
  std::remove(ckpt.c_str());
}

TEST_CASE("training with teacher logits uses the distillation term") {
  const ModelConfig mc = test_config();
  Dataset train_set = tiny_dataset(32, mc.input_size, 54);
  TeacherLogits teacher;
  Rng rng(55);
  teacher.rows = Tensor::randn({32, 10}, rng);
  BHViT model(mc);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 16;
  tc.lambda = 0.8f;
  const TrainResult r = train(model, train_set, train_set, tc, &teacher);
  CHECK(std::isfinite(r.records[0].train_loss));
  // row-count mismatch is rejected
  teacher.rows = Tensor::randn({31, 10}, rng);
  CHECK_THROWS_AS(train(model, train_set, train_set, tc, &teacher), ShapeError);
}

TEST_CASE("checkpoint: config mismatch and packed binary mode") {
  const ModelConfig mc = test_config();
  BHViT model(mc);
  const std::string path = "/tmp/bhvit_test_ckpt2.bin";
  save_checkpoint(path, model, nullptr, CheckpointMeta{}, /*pack_binary=*/true);

  ModelConfig other = mc;
  other.num_classes = 7;
  BHViT wrong(other);
  CHECK_THROWS_AS(load_checkpoint(path, wrong, nullptr), ConfigError);

  // packed storage keeps signs exactly and magnitudes as the channel alpha
  BHViT back(mc);
  load_checkpoint(path, back, nullptr);
  for (size_t i = 0; i < model.params.items.size(); ++i) {
    const Param& a = model.params.items[i];
    const Param& b = back.params.items[i];
    if (!a.binary_latent) {
      CHECK(a.value.max_abs_diff(b.value) == 0.0f);
      continue;
    }
    for (size_t j = 0; j < a.value.data.size(); ++j)
      CHECK((a.value.data[j] >= 0.0f) == (b.value.data[j] >= 0.0f));
  }
  std::remove(path.c_str());
}

TEST_CASE("evaluate scores a perfectly separable toy set") {
  // a dataset the model has memorized: evaluate agrees with predict
  const ModelConfig mc = test_config();
  BHViT model(mc);
  Dataset d = tiny_dataset(16, mc.input_size, 56);
  const float acc = evaluate(model, d);
  CHECK(acc >= 0.0f);
  CHECK(acc <= 1.0f);
  const EvalStats es = evaluate_stats(model, d);
  CHECK(es.accuracy == acc);
  CHECK(es.loss >= 0.0f);
  CHECK(std::isfinite(es.loss));
}

TEST_CASE("synthetic fixture is deterministic with cycling labels") {
  Dataset a = tiny_dataset(20, 32, 57);
  Dataset b = tiny_dataset(20, 32, 57);
  CHECK(a.images.max_abs_diff(b.images) == 0.0f);
  for (int i = 0; i < 20; ++i) CHECK(a.labels[static_cast<size_t>(i)] == i % 10);
}

TEST_CASE("teacher logits roundtrip") {
  Rng rng(58);
  TeacherLogits t;
  t.rows = Tensor::randn({5, 10}, rng);
  save_teacher_logits("/tmp/bhvit_test_teacher.bin", t);
  const TeacherLogits back = load_teacher_logits("/tmp/bhvit_test_teacher.bin");
  CHECK(back.rows.max_abs_diff(t.rows) == 0.0f);
  std::remove("/tmp/bhvit_test_teacher.bin");
}

TEST_CASE("augmentation keeps shape and stays deterministic per rng state") {
  Rng rng(59);
  const Tensor batch = Tensor::uniform({4, 16, 16, 3}, rng, -1, 1);
  Rng r1(7), r2(7);
  const Tensor a = augment_batch(batch, r1);
  const Tensor b = augment_batch(batch, r2);
  CHECK(a.shape == batch.shape);
  CHECK(a.max_abs_diff(b) == 0.0f);
}
