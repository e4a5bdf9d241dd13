#include "bhvit/layers.hpp"

#include <cmath>

namespace bhvit {

BatchNorm::BatchNorm(ParamStore& ps, const std::string& name, int64_t c) {
  gamma = ps.add(name + ".gamma", Tensor::full({c}, 1.0f), false, true);
  beta = ps.add(name + ".beta", Tensor::zeros({c}), false, true);
  // running statistics live in the store so checkpoints persist them
  run_mean = ps.add(name + ".run_mean", Tensor::zeros({c}), false, true);
  run_var = ps.add(name + ".run_var", Tensor::full({c}, 1.0f), false, true);
  run_mean->trainable = false;
  run_var->trainable = false;
}

Value BatchNorm::apply(Tape& t, Value x, const Ctx& ctx) {
  state.running_mean = run_mean->value;
  state.running_var = run_var->value;
  state.initialized = true;
  Value y = batch_norm(t, x, t.param(*gamma), t.param(*beta), state, ctx.training);
  run_mean->value = state.running_mean;
  run_var->value = state.running_var;
  return y;
}

RPReLU::RPReLU(ParamStore& ps, const std::string& name, int64_t c) {
  shift_in = ps.add(name + ".shift_in", Tensor::zeros({c}), false, true);
  shift_out = ps.add(name + ".shift_out", Tensor::zeros({c}), false, true);
  slope = ps.add(name + ".slope", Tensor::full({c}, 0.25f), false, true);
}

Value RPReLU::apply(Tape& t, Value x) {
  Value shifted = sub(t, x, t.param(*shift_in));
  return add(t, prelu(t, shifted, t.param(*slope)), t.param(*shift_out));
}

ActQuant::ActQuant(ParamStore& ps, const std::string& name, int64_t c) {
  a = ps.add(name + ".a", Tensor::full({c}, 1.0f), false, true);
  b = ps.add(name + ".b", Tensor::zeros({c}), false, true);
}

Value ActQuant::apply(Tape& t, Value x) {
  return binarize_activation(t, x, t.param(*a), t.param(*b));
}

ChannelAffine::ChannelAffine(ParamStore& ps, const std::string& name, int64_t c) {
  scale = ps.add(name + ".scale", Tensor::full({c}, 1.0f), false, true);
  bias = ps.add(name + ".bias", Tensor::zeros({c}), false, true);
}

Value ChannelAffine::apply(Tape& t, Value x) {
  return add(t, mul(t, x, t.param(*scale)), t.param(*bias));
}

BinaryLinear::BinaryLinear(ParamStore& ps, const std::string& name, int64_t in_, int64_t out_,
                           Rng& rng)
    : aq(ps, name + ".aq", in_), in(in_), out(out_) {
  const float std = 1.0f / std::sqrt(static_cast<float>(in_));
  w = ps.add(name + ".w", Tensor::randn({in_, out_}, rng, std), true, false);
}

Value BinaryLinear::apply(Tape& t, Value x, const Ctx& ctx) {
  Value xb = aq.apply(t, x);
  Value ws = weight_sign_ste(t, t.param(*w));
  Value y = matmul(t, xb, ws, false, ctx.use_bits);
  return mul(t, y, t.constant(weight_alpha(w->value)));
}

BinaryConv2d::BinaryConv2d(ParamStore& ps, const std::string& name, int64_t cin_, int64_t cout_,
                           int k, int stride_, int pad_, int dilation_, int groups_, Rng& rng,
                           bool with_aq_)
    : with_aq(with_aq_),
      kh(k),
      kw(k),
      stride(stride_),
      pad(pad_),
      dilation(dilation_),
      groups(groups_),
      cin(cin_),
      cout(cout_) {
  if (cin_ % groups_ != 0 || cout_ % groups_ != 0)
    throw ConfigError("BinaryConv2d: channels not divisible by groups");
  if (with_aq_) aq = ActQuant(ps, name + ".aq", cin_);
  const int64_t cg = cin_ / groups_;
  const float std = 1.0f / std::sqrt(static_cast<float>(k * k * cg));
  w = ps.add(name + ".w", Tensor::randn({k, k, cg, cout_}, rng, std), true, false);
}

Value BinaryConv2d::apply(Tape& t, Value x, const Ctx& ctx) {
  Value xb = with_aq ? aq.apply(t, x) : x;
  Value ws = weight_sign_ste(t, t.param(*w));
  Value y = conv2d(t, xb, ws, stride, pad, dilation, groups, ctx.use_bits);
  // alpha over everything but the output channel, applied outside the conv
  const Tensor& wv = w->value;
  Tensor flat({wv.numel() / cout, cout}, wv.data);
  return mul(t, y, t.constant(weight_alpha(flat)));
}

Value shift(Tape& t, Value x, const ShiftSpec& spec) {
  if (x->value.ndim() != 4) throw ShapeError("shift: input must be [N,H,W,C]");
  const int64_t n = x->value.shape[0], h = x->value.shape[1], w = x->value.shape[2],
                c = x->value.shape[3];
  const int64_t k = spec.k;
  auto wrap = [](int64_t v, int64_t m) { return ((v % m) + m) % m; };
  auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(x->value.numel()));
  if (spec.kind == ShiftKind::mix && c % 4 != 0)
    throw ConfigError("shift: mix requires channels divisible by 4");
  const int64_t q = c / 4;
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j)
        for (int64_t ch = 0; ch < c; ++ch) {
          int64_t si = i, sj = j;
          switch (spec.kind) {
            case ShiftKind::horizontal:
              sj = wrap(j + k, w);
              break;
            case ShiftKind::vertical:
              si = wrap(i + k, h);
              break;
            case ShiftKind::mix:
              switch (ch / q) {
                case 0: sj = wrap(j - k, w); break;  // from left neighbor
                case 1: sj = wrap(j + k, w); break;  // from right
                case 2: si = wrap(i - k, h); break;  // from above
                default: si = wrap(i + k, h); break; // from below
              }
              break;
          }
          (*map)[static_cast<size_t>(((ni * h + i) * w + j) * c + ch)] =
              ((ni * h + si) * w + sj) * c + ch;
        }
  return gather_perm(t, x, map, x->value.shape);
}

PatchEmbed::PatchEmbed(ParamStore& ps, const std::string& name, int64_t c_, int64_t input_size,
                       Rng& rng)
    : bn(ps, name + ".bn", c_), c(c_), oh(input_size / 4), ow(input_size / 4) {
  if (input_size % 4 != 0) throw ConfigError("PatchEmbed: input size must be divisible by 4");
  w = ps.add(name + ".w", Tensor::randn({4, 4, 3, c_}, rng, 1.0f / std::sqrt(48.0f)));
  pos = ps.add(name + ".pos", Tensor::randn({oh, ow, c_}, rng, 0.02f));
}

Value PatchEmbed::apply(Tape& t, Value x, const Ctx& ctx) {
  Value y = conv2d(t, x, t.param(*w), 4, 0, 1, 1, false);
  y = gelu(t, bn.apply(t, y, ctx));
  return add(t, y, t.param(*pos));
}

Downsample::Downsample(ParamStore& ps, const std::string& name, int64_t cin_, bool fp, Rng& rng)
    : full_precision(fp), bn(ps, name + ".bn", cin_ * 2), cin(cin_), cout(cin_ * 2) {
  if (fp)
    w_fp = ps.add(name + ".w", Tensor::randn({2, 2, cin_, cin_ * 2}, rng,
                                             1.0f / std::sqrt(static_cast<float>(4 * cin_))));
  else
    bconv = BinaryConv2d(ps, name + ".conv", cin_, cin_ * 2, 2, 2, 0, 1, 1, rng);
}

Value Downsample::apply(Tape& t, Value x, const Ctx& ctx) {
  if (x->value.dim(1) % 2 != 0 || x->value.dim(2) % 2 != 0)
    throw ConfigError("Downsample: spatial dims must be even");
  Value y = full_precision ? conv2d(t, x, t.param(*w_fp), 2, 0, 1, 1, false)
                           : bconv.apply(t, x, ctx);
  return bn.apply(t, y, ctx);
}

}  // namespace bhvit
