#include "bhvit/verify.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "bhvit/bitpack.hpp"
#include "bhvit/checkpoint.hpp"
#include "bhvit/model.hpp"
#include "bhvit/quantizers.hpp"

namespace bhvit {

namespace {

struct Suite {
  std::vector<CheckResult> results;
  void check(const std::string& name, bool ok, const std::string& detail = "") {
    results.push_back(CheckResult{name, ok, detail});
  }
};

Tensor dense_gemm(const Tensor& a, const Tensor& b) {
  Tensor out({a.shape[0], b.shape[1]});
  for (int64_t i = 0; i < a.shape[0]; ++i)
    for (int64_t k = 0; k < a.shape[1]; ++k)
      for (int64_t j = 0; j < b.shape[1]; ++j) out.at2(i, j) += a.at2(i, k) * b.at2(k, j);
  return out;
}

void bitpack_suite(Suite& s, Rng& rng) {
  std::uniform_int_distribution<int64_t> dim(1, 96);
  bool roundtrip = true, gemm_ok = true, gemm_nt_ok = true, agg_ok = true;
  for (int trial = 0; trial < 40 && (roundtrip && gemm_ok && gemm_nt_ok && agg_ok); ++trial) {
    const int64_t m = dim(rng), k = dim(rng), p = dim(rng);
    const Tensor a = Tensor::rand_sign({m, k}, rng);
    const Tensor b = Tensor::rand_sign({k, p}, rng);
    const BitMatrix pa = pack(a), pb = pack(b);
    roundtrip = roundtrip && unpack(pa).max_abs_diff(a) == 0.0f;
    const Tensor ref = dense_gemm(a, b);
    gemm_ok = gemm_ok && xnor_gemm(pa, pb).to_tensor().max_abs_diff(ref) == 0.0f;
    gemm_nt_ok = gemm_nt_ok && xnor_gemm_nt(pa, bit_transpose(pb)).to_tensor().max_abs_diff(ref) == 0.0f;

    Tensor mask({m, k});
    std::bernoulli_distribution coin(0.4);
    for (auto& v : mask.data) v = coin(rng) ? 1.0f : 0.0f;
    const Tensor agg_ref = dense_gemm(mask, b);
    agg_ok = agg_ok && mask_aggregate(pack_mask(mask), pb).to_tensor().max_abs_diff(agg_ref) == 0.0f;
  }
  s.check("pack/unpack roundtrip", roundtrip);
  s.check("xnor_gemm matches dense GEMM", gemm_ok);
  s.check("xnor_gemm_nt matches dense GEMM", gemm_nt_ok);
  s.check("mask_aggregate matches dense mask product", agg_ok);

  bool gather_ok = true;
  for (int dilation : {1, 3, 5}) {
    const Tensor x = Tensor::randn({9, 9, 4}, rng);
    const Tensor g = dilated_gather(x, dilation);
    for (int64_t i = 0; i < 9 && gather_ok; ++i)
      for (int64_t j = 0; j < 9 && gather_ok; ++j)
        for (int64_t c = 0; c < 4 && gather_ok; ++c)
          for (int tap = 0; tap < 9; ++tap) {
            const int64_t si = i + (tap / 3 - 1) * dilation;
            const int64_t sj = j + (tap % 3 - 1) * dilation;
            const float want = (si < 0 || si >= 9 || sj < 0 || sj >= 9)
                                   ? 0.0f
                                   : x.data[static_cast<size_t>((si * 9 + sj) * 4 + c)];
            if (g.data[static_cast<size_t>(((i * 9 + j) * 4 + c) * 9 + tap)] != want) {
              gather_ok = false;
              break;
            }
          }
  }
  s.check("dilated_gather taps and zero padding", gather_ok);
}

void quant_suite(Suite& s, Rng& rng) {
  // piecewise straight-through factors on the canonical grid
  const float points[] = {-1.5f, -1.0f, -0.5f, 0.0f, 0.5f, 1.0f, 1.5f};
  const float want[] = {0.0f, 0.0f, 1.0f, 2.0f, 1.0f, 0.0f, 0.0f};
  QuantParams unit{Tensor::full({1}, 1.0f), Tensor::zeros({1})};
  bool ste_ok = true;
  for (int i = 0; i < 7; ++i) {
    const Tensor x({1, 1}, {points[i]});
    const Tensor g = binarize_activation_backward(Tensor::full({1, 1}, 1.0f), x, unit);
    if (g.data[0] != want[i]) ste_ok = false;
  }
  s.check("activation STE factors on grid", ste_ok);

  bool qd_ok = true, nested_ok = true;
  for (int levels : {1, 3, 7}) {
    for (int step = 0; step <= 100; ++step) {
      const float a = static_cast<float>(step) / 100.0f;
      const Tensor att({1, 1}, {a});
      const auto dec = quantization_decompose(att, levels);
      int sum = 0;
      for (const auto& m : dec.masks) sum += m.get(0, 0) ? 1 : 0;
      const int expect =
          std::clamp(static_cast<int>(std::round(levels * a)), 0, levels);
      if (sum != expect) qd_ok = false;
      for (size_t i = 1; i < dec.masks.size(); ++i)
        if (dec.masks[i].get(0, 0) && !dec.masks[i - 1].get(0, 0)) nested_ok = false;
    }
  }
  s.check("QD mask sum equals clip(round(s*A),0,s)", qd_ok);
  s.check("QD masks are nested", nested_ok);

  const Tensor w = Tensor::randn({24, 8}, rng);
  const Tensor alpha = weight_alpha(w);
  bool alpha_ok = true;
  for (int64_t c = 0; c < 8; ++c) {
    double m = 0;
    for (int64_t r = 0; r < 24; ++r) m += std::fabs(w.at2(r, c));
    if (std::fabs(alpha[c] - m / 24.0) > 1e-6) alpha_ok = false;
  }
  s.check("weight alpha is the column mean of |W|", alpha_ok);

  const Tensor bw = binarize_weight_forward(w);
  bool two_state = true;
  for (int64_t r = 0; r < 24; ++r)
    for (int64_t c = 0; c < 8; ++c)
      if (std::fabs(std::fabs(bw.at2(r, c)) - alpha[c]) > 1e-7f) two_state = false;
  s.check("binarized weights take exactly +-alpha", two_state);
}

void model_suite(Suite& s, Rng& rng) {
  ModelConfig cfg = ModelConfig::micro();
  BHViT model(cfg);
  const Tensor x = Tensor::uniform({2, cfg.input_size, cfg.input_size, 3}, rng, -1.0f, 1.0f);
  const Tensor dense = model.predict(x, Ctx{false, false});
  s.check("micro forward produces finite logits",
          dense.shape == Shape{2, cfg.num_classes} && dense.all_finite());

  const Tensor bits = model.predict(x, Ctx{false, true});
  std::ostringstream d;
  d << "max |dense - bits| = " << dense.max_abs_diff(bits);
  s.check("bit-kernel path equals dense path", dense.max_abs_diff(bits) == 0.0f, d.str());

  const std::string path = "/tmp/bhvit_verify_ckpt.bin";
  save_checkpoint(path, model, nullptr, CheckpointMeta{}, false);
  BHViT reloaded(cfg);
  load_checkpoint(path, reloaded, nullptr);
  const Tensor again = reloaded.predict(x, Ctx{false, false});
  s.check("checkpoint roundtrip reproduces logits", again.max_abs_diff(dense) == 0.0f);

  ModelConfig small_cfg = ModelConfig::small();
  small_cfg.num_classes = 10;  // size convention: desk-scale head
  const OpsReport small = count_ops(small_cfg);
  std::ostringstream od;
  od << "OPs " << std::scientific << std::setprecision(3) << small.ops() << ", size "
     << std::fixed << std::setprecision(2)
     << static_cast<double>(small.model_size_bytes()) / 1e6 << " MB";
  const bool ops_ok = std::fabs(small.ops() - 0.8e8) <= 0.2 * 0.8e8;
  const bool size_ok =
      std::fabs(static_cast<double>(small.model_size_bytes()) - 3.5e6) <= 0.15 * 3.5e6;
  s.check("small preset complexity in tolerance", ops_ok && size_ok, od.str());
}

}  // namespace

std::vector<CheckResult> run_suite(const std::string& suite, unsigned seed) {
  Suite s;
  Rng rng(seed);
  if (suite == "bitpack" || suite == "all") bitpack_suite(s, rng);
  if (suite == "quant" || suite == "all") quant_suite(s, rng);
  if (suite == "model" || suite == "all") model_suite(s, rng);
  if (s.results.empty()) throw ConfigError("unknown verify suite: " + suite);
  return s.results;
}

bool print_report(const std::vector<CheckResult>& results, std::ostream& out) {
  bool all = true;
  size_t width = 0;
  for (const auto& r : results) width = std::max(width, r.name.size());
  for (const auto& r : results) {
    out << std::left << std::setw(static_cast<int>(width) + 2) << r.name
        << (r.passed ? "PASS" : "FAIL");
    if (!r.detail.empty()) out << "  (" << r.detail << ")";
    out << "\n";
    all = all && r.passed;
  }
  out << (all ? "all checks passed" : "some checks FAILED") << "\n";
  return all;
}

}  // namespace bhvit
