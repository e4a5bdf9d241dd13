#include <doctest.h>

#include "bhvit/layers.hpp"

using namespace bhvit;

TEST_CASE("horizontal shift is circular") {
  // [1,1,4,1] row 0 1 2 3, k=1: out[j] = in[(j+1) % 4]
  Tape t;
  Value x = t.constant(Tensor({1, 1, 4, 1}, {0, 1, 2, 3}));
  const Tensor y = shift(t, x, ShiftSpec{ShiftKind::horizontal, 1})->value;
  CHECK(y.data == std::vector<float>{1, 2, 3, 0});
}

TEST_CASE("vertical shift is circular") {
  Tape t;
  Value x = t.constant(Tensor({1, 3, 1, 1}, {0, 1, 2}));
  const Tensor y = shift(t, x, ShiftSpec{ShiftKind::vertical, 2})->value;
  CHECK(y.data == std::vector<float>{2, 0, 1});
}

TEST_CASE("mix shift draws channel quarters from four neighbors") {
  // 2x2 grid, 4 channels; channel c of a pixel encodes 10*i + j + c/10
  Tensor in({1, 2, 2, 4});
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 2; ++j)
      for (int64_t c = 0; c < 4; ++c)
        in.data[static_cast<size_t>(((i * 2 + j) * 4) + c)] =
            static_cast<float>(10 * i + j) + static_cast<float>(c) / 10.0f;
  Tape t;
  const Tensor y = shift(t, t.constant(in), ShiftSpec{ShiftKind::mix, 1})->value;
  auto at = [&](int64_t i, int64_t j, int64_t c) {
    return y.data[static_cast<size_t>(((i * 2 + j) * 4) + c)];
  };
  // quarter 0 from the left neighbor (j-1), 1 from the right, 2 from up, 3 from down
  CHECK(at(0, 0, 0) == doctest::Approx(1.0f));    // from (0,1)
  CHECK(at(0, 0, 1) == doctest::Approx(1.1f));    // from (0,1)
  CHECK(at(0, 0, 2) == doctest::Approx(10.2f));   // from (1,0)
  CHECK(at(0, 0, 3) == doctest::Approx(10.3f));   // from (1,0)
}

TEST_CASE("shift is a bijection: opposite shifts cancel") {
  Rng rng(31);
  const Tensor in = Tensor::randn({2, 4, 4, 8}, rng);
  for (ShiftKind kind : {ShiftKind::horizontal, ShiftKind::vertical}) {
    for (int k : {1, 2}) {
      Tape t;
      Value a = shift(t, t.constant(in), ShiftSpec{kind, k});
      Value b = shift(t, a, ShiftSpec{kind, 4 - k});
      CHECK(b->value.max_abs_diff(in) == 0.0f);
    }
  }
}

TEST_CASE("binary linear: packed route equals dense route") {
  Rng rng(32);
  ParamStore ps;
  BinaryLinear lin(ps, "lin", 24, 10, rng);
  const Tensor x = Tensor::uniform({2, 5, 24}, rng, -2.0f, 2.0f);
  Tape t;
  const Tensor dense = lin.apply(t, t.constant(x), Ctx{false, false})->value;
  const Tensor bits = lin.apply(t, t.constant(x), Ctx{false, true})->value;
  CHECK(dense.max_abs_diff(bits) == 0.0f);
}

TEST_CASE("binary conv: packed route equals dense route, with padding and groups") {
  Rng rng(33);
  ParamStore ps;
  BinaryConv2d conv(ps, "conv", 16, 16, 3, 1, 3, 3, 4, rng);
  const Tensor x = Tensor::uniform({2, 7, 7, 16}, rng, -2.0f, 2.0f);
  Tape t;
  const Tensor dense = conv.apply(t, t.constant(x), Ctx{false, false})->value;
  const Tensor bits = conv.apply(t, t.constant(x), Ctx{false, true})->value;
  CHECK(dense.max_abs_diff(bits) == 0.0f);
}

TEST_CASE("rprelu applies shifts around a channelwise prelu") {
  Rng rng(34);
  ParamStore ps;
  RPReLU act(ps, "act", 2);
  act.shift_in->value = Tensor({2}, {1.0f, 0.0f});
  act.shift_out->value = Tensor({2}, {0.0f, 2.0f});
  act.slope->value = Tensor({2}, {0.5f, 0.25f});
  Tape t;
  const Tensor y = act.apply(t, t.constant(Tensor({1, 2}, {0.0f, -4.0f})))->value;
  CHECK(y[0] == doctest::Approx(-0.5f));  // (0-1) * 0.5
  CHECK(y[1] == doctest::Approx(1.0f));   // -4 * 0.25 + 2
}

TEST_CASE("patch embed maps [N,S,S,3] to [N,S/4,S/4,C]") {
  Rng rng(35);
  ParamStore ps;
  PatchEmbed stem(ps, "stem", 8, 16, rng);
  Tape t;
  Value y = stem.apply(t, t.constant(Tensor::uniform({2, 16, 16, 3}, rng, -1, 1)), Ctx{true, false});
  CHECK(y->value.shape == Shape{2, 4, 4, 8});
  CHECK(y->value.all_finite());
}

TEST_CASE("downsample halves the grid and doubles channels on both variants") {
  Rng rng(36);
  for (bool fp : {false, true}) {
    ParamStore ps;
    Downsample ds(ps, "ds", 8, fp, rng);
    Tape t;
    Value y = ds.apply(t, t.constant(Tensor::uniform({1, 6, 6, 8}, rng, -1, 1)), Ctx{true, false});
    CHECK(y->value.shape == Shape{1, 3, 3, 16});
    CHECK(y->value.all_finite());
  }
}

TEST_CASE("quantizer parameter names end in .a and .b and skip weight decay") {
  Rng rng(37);
  ParamStore ps;
  ActQuant aq(ps, "m.aq", 4);
  CHECK(aq.a->name == "m.aq.a");
  CHECK(aq.b->name == "m.aq.b");
  CHECK(aq.a->no_decay);
}
