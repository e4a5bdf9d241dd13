#include <doctest.h>

#include "bhvit/bitpack.hpp"

using namespace bhvit;

namespace {

Tensor dense_gemm(const Tensor& a, const Tensor& b) {
  Tensor out({a.shape[0], b.shape[1]});
  for (int64_t i = 0; i < a.shape[0]; ++i)
    for (int64_t k = 0; k < a.shape[1]; ++k)
      for (int64_t j = 0; j < b.shape[1]; ++j) out.at2(i, j) += a.at2(i, k) * b.at2(k, j);
  return out;
}

}  // namespace

TEST_CASE("pack rejects values outside {-1,+1}") {
  CHECK_THROWS_AS(pack(Tensor({1, 2}, {1.0f, 0.5f})), DomainError);
  CHECK_THROWS_AS(pack(Tensor({1, 1}, {0.0f})), DomainError);
}

TEST_CASE("pack/unpack roundtrip keeps every entry and zeroes padding") {
  Rng rng(11);
  for (int64_t cols : {1, 63, 64, 65, 130}) {
    const Tensor a = Tensor::rand_sign({5, cols}, rng);
    const BitMatrix m = pack(a);
    CHECK(unpack(m).max_abs_diff(a) == 0.0f);
    if (cols % 64 != 0)
      for (int64_t r = 0; r < 5; ++r)
        CHECK((m.row(r)[m.words_per_row - 1] >> (cols % 64)) == 0);
  }
}

TEST_CASE("xnor_dot equals the dense +-1 dot product") {
  Rng rng(12);
  for (int64_t n : {1, 7, 64, 100, 200}) {
    const Tensor a = Tensor::rand_sign({2, n}, rng);
    const BitMatrix m = pack(a);
    float want = 0;
    for (int64_t i = 0; i < n; ++i) want += a.at2(0, i) * a.at2(1, i);
    CHECK(xnor_dot(m, 0, m, 1) == static_cast<int32_t>(want));
  }
}

TEST_CASE("xnor_gemm and xnor_gemm_nt match dense GEMM exactly") {
  Rng rng(13);
  std::uniform_int_distribution<int64_t> dim(1, 90);
  for (int trial = 0; trial < 25; ++trial) {
    const int64_t m = dim(rng), k = dim(rng), p = dim(rng);
    const Tensor a = Tensor::rand_sign({m, k}, rng);
    const Tensor b = Tensor::rand_sign({k, p}, rng);
    const Tensor ref = dense_gemm(a, b);
    CHECK(xnor_gemm(pack(a), pack(b)).to_tensor().max_abs_diff(ref) == 0.0f);
    CHECK(xnor_gemm_nt(pack(a), bit_transpose(pack(b))).to_tensor().max_abs_diff(ref) == 0.0f);
  }
}

TEST_CASE("bit_transpose flips indices") {
  Rng rng(14);
  const Tensor a = Tensor::rand_sign({9, 70}, rng);
  const BitMatrix t = bit_transpose(pack(a));
  for (int64_t r = 0; r < 9; ++r)
    for (int64_t c = 0; c < 70; ++c) CHECK(t.get(c, r) == (a.at2(r, c) > 0));
}

TEST_CASE("mask_aggregate equals the dense mask product") {
  Rng rng(15);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor m({6, 77});
    for (auto& v : m.data) v = coin(rng) ? 1.0f : 0.0f;
    const Tensor v = Tensor::rand_sign({77, 33}, rng);
    CHECK(mask_aggregate(pack_mask(m), pack(v)).to_tensor().max_abs_diff(dense_gemm(m, v)) ==
          0.0f);
  }
}

TEST_CASE("mask pack roundtrip") {
  Rng rng(16);
  std::bernoulli_distribution coin(0.5);
  Tensor m({4, 65});
  for (auto& v : m.data) v = coin(rng) ? 1.0f : 0.0f;
  CHECK(unpack_mask(pack_mask(m)).max_abs_diff(m) == 0.0f);
}

TEST_CASE("dilated_gather matches naive taps with zero padding") {
  Rng rng(17);
  const Tensor x = Tensor::randn({11, 11, 3}, rng);
  for (int d : {1, 3, 5}) {
    const Tensor g = dilated_gather(x, d);
    REQUIRE(g.shape == Shape{11, 11, 3, 9});
    for (int64_t i = 0; i < 11; ++i)
      for (int64_t j = 0; j < 11; ++j)
        for (int64_t c = 0; c < 3; ++c)
          for (int tap = 0; tap < 9; ++tap) {
            const int64_t si = i + (tap / 3 - 1) * d;
            const int64_t sj = j + (tap % 3 - 1) * d;
            const float want = (si < 0 || si >= 11 || sj < 0 || sj >= 11)
                                   ? 0.0f
                                   : x.data[static_cast<size_t>((si * 11 + sj) * 3 + c)];
            CHECK(g.data[static_cast<size_t>(((i * 11 + j) * 3 + c) * 9 + tap)] == want);
          }
  }
}
