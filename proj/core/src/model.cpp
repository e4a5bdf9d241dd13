#include "bhvit/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace bhvit {

using nlohmann::json;

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.preset = "tiny";
  c.blocks = {2, 2, 6, 2};
  c.dims = {64, 128, 256, 512};
  c.mlp_ratios = {8, 8, 4, 4};
  c.heads = {4, 4, 4, 8};
  c.windows = {7, 7, 7, 7};
  c.num_classes = 1000;
  c.input_size = 224;
  return c;
}

ModelConfig ModelConfig::small() {
  ModelConfig c = tiny();
  c.preset = "small";
  c.blocks = {3, 4, 8, 4};
  return c;
}

ModelConfig ModelConfig::micro() {
  ModelConfig c;
  c.preset = "micro";
  c.blocks = {1, 1, 2, 1};
  c.dims = {16, 32, 64, 128};
  c.mlp_ratios = {8, 8, 4, 4};
  c.heads = {2, 2, 2, 4};
  c.windows = {4, 4, 4, 2};
  c.num_classes = 10;
  c.input_size = 64;
  return c;
}

namespace {

ModelConfig preset_by_name(const std::string& name) {
  if (name == "tiny") return ModelConfig::tiny();
  if (name == "small") return ModelConfig::small();
  if (name == "micro") return ModelConfig::micro();
  throw ConfigError("unknown preset: " + name);
}

template <typename T, size_t N>
void read_array(const json& j, const char* key, std::array<T, N>& dst) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != N)
    throw ConfigError(std::string("config key '") + key + "' must be an array of " +
                      std::to_string(N));
  for (size_t i = 0; i < N; ++i) dst[i] = v[i].get<T>();
}

}  // namespace

ModelConfig ModelConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  ModelConfig c;
  if (j.contains("preset")) c = preset_by_name(j.at("preset").get<std::string>());
  read_array(j, "blocks", c.blocks);
  read_array(j, "dims", c.dims);
  read_array(j, "mlp_ratios", c.mlp_ratios);
  if (j.contains("heads")) {
    const auto& v = j.at("heads");
    if (v.is_array() && v.size() == 2) {
      const int h3 = v[0].get<int>(), h4 = v[1].get<int>();
      c.heads = {h3, h3, h3, h4};
    } else {
      read_array(j, "heads", c.heads);
    }
  }
  if (j.contains("window")) {
    const auto& v = j.at("window");
    if (v.is_number()) {
      const int w = v.get<int>();
      c.windows = {w, w, w, w};
    } else if (v.is_array() && v.size() == 2) {
      const int w3 = v[0].get<int>(), w4 = v[1].get<int>();
      c.windows = {w3, w3, w3, w4};
    } else {
      read_array(j, "window", c.windows);
    }
  }
  if (j.contains("mixer_mode")) {
    const std::string m = j.at("mixer_mode").get<std::string>();
    if (m == "hybrid")
      c.mixer_mode = MixerMode::hybrid;
    else if (m == "pure-attention")
      c.mixer_mode = MixerMode::pure_attention;
    else if (m == "pure-conv")
      c.mixer_mode = MixerMode::pure_conv;
    else
      throw ConfigError("unknown mixer_mode: " + m);
  }
  if (j.contains("fdl")) c.fdl = j.at("fdl").get<bool>();
  if (j.contains("qd")) c.qd = j.at("qd").get<bool>();
  if (j.contains("shift")) c.shift_module = j.at("shift").get<bool>();
  if (j.contains("num_classes")) c.num_classes = j.at("num_classes").get<int64_t>();
  if (j.contains("input_size")) c.input_size = j.at("input_size").get<int64_t>();
  if (j.contains("conv_group_channels"))
    c.conv_group_channels = j.at("conv_group_channels").get<int>();
  if (j.contains("qd_levels")) c.qd_levels = j.at("qd_levels").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<unsigned>();
  c.validate();
  return c;
}

ModelConfig ModelConfig::from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json_text(ss.str());
}

std::string ModelConfig::to_json_text() const {
  json j;
  if (!preset.empty()) j["preset"] = preset;
  j["blocks"] = blocks;
  j["dims"] = dims;
  j["mlp_ratios"] = mlp_ratios;
  j["heads"] = heads;
  j["window"] = windows;
  j["mixer_mode"] = mixer_mode == MixerMode::hybrid ? "hybrid"
                    : mixer_mode == MixerMode::pure_attention ? "pure-attention"
                                                              : "pure-conv";
  j["fdl"] = fdl;
  j["qd"] = qd;
  j["shift"] = shift_module;
  j["num_classes"] = num_classes;
  j["input_size"] = input_size;
  j["conv_group_channels"] = conv_group_channels;
  j["qd_levels"] = qd_levels;
  j["seed"] = seed;
  return j.dump(2);
}

bool ModelConfig::stage_is_attention(int stage) const {
  switch (mixer_mode) {
    case MixerMode::hybrid: return stage >= 2;
    case MixerMode::pure_attention: return true;
    case MixerMode::pure_conv: return false;
  }
  return false;
}

void ModelConfig::validate() const {
  if (input_size <= 0 || input_size % 4 != 0)
    throw ConfigError("input_size must be a positive multiple of 4");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (qd_levels < 1) throw ConfigError("qd_levels must be at least 1");
  if (conv_group_channels < 1) throw ConfigError("conv_group_channels must be positive");
  for (int i = 0; i < 4; ++i) {
    if (blocks[i] < 1) throw ConfigError("each stage needs at least one block");
    if (dims[i] < 1) throw ConfigError("dims must be positive");
    if (mlp_ratios[i] < 1) throw ConfigError("mlp_ratios must be positive");
    const int64_t s = stage_size(i);
    if (s < 1) throw ConfigError("input too small for four stages");
    if (shift_module && dims[i] % 4 != 0)
      throw ConfigError("shift module requires dims divisible by 4");
    if (stage_is_attention(i)) {
      if (windows[i] < 1 || s % windows[i] != 0)
        throw ConfigError("stage size must be divisible by the window size");
      if (heads[i] < 1 || dims[i] % heads[i] != 0)
        throw ConfigError("dims must be divisible by heads");
    } else {
      if (dims[i] % conv_group_channels != 0)
        throw ConfigError("dims must be divisible by conv_group_channels");
    }
  }
}

// ---------------------------------------------------------------------------

Msgdc::Msgdc(ParamStore& ps, const std::string& name, int64_t c, int group_channels, Rng& rng)
    : aq(ps, name + ".aq", c), bn(ps, name + ".bn", c) {
  const int groups = static_cast<int>(c / group_channels);
  for (int d : {1, 3, 5}) {
    convs.emplace_back(ps, name + ".conv" + std::to_string(d), c, c, 3, 1, d, d, groups, rng,
                       /*with_aq=*/false);
    acts.emplace_back(ps, name + ".act" + std::to_string(d), c);
  }
}

Value Msgdc::apply(Tape& t, Value x, const Ctx& ctx) {
  Value xb = aq.apply(t, x);
  Value sum = nullptr;
  for (size_t i = 0; i < convs.size(); ++i) {
    Value h = acts[i].apply(t, add(t, convs[i].apply(t, xb, ctx), x));
    sum = sum ? add(t, sum, h) : h;
  }
  return bn.apply(t, sum, ctx);
}

// ---------------------------------------------------------------------------

namespace {

// [N,H,W,C] -> [N*nw, w*w, C]
Value to_windows(Tape& t, Value x, int w) {
  const int64_t n = x->value.shape[0], h = x->value.shape[1], wd = x->value.shape[2],
                c = x->value.shape[3];
  const int64_t hb = h / w, wb = wd / w;
  Value y = reshape(t, x, {n, hb, w, wb, w, c});
  y = permute(t, y, {0, 1, 3, 2, 4, 5});
  return reshape(t, y, {n * hb * wb, int64_t{w} * w, c});
}

// [N*nw, w*w, C] -> [N,H,W,C]
Value from_windows(Tape& t, Value x, int64_t n, int64_t h, int64_t wd, int w) {
  const int64_t hb = h / w, wb = wd / w, c = x->value.dim(-1);
  Value y = reshape(t, x, {n, hb, wb, w, w, c});
  y = permute(t, y, {0, 1, 3, 2, 4, 5});
  return reshape(t, y, {n, h, wd, c});
}

// d [..., T, T] small non-negative integers, v [..., T, dh] +-1. The packed
// route decomposes d into nested masks and aggregates; both routes stay in
// the exact integer domain, so they agree bitwise.
Value attn_apply(Tape& t, Value d, Value v, bool use_bits, int levels) {
  const int64_t tk = d->value.dim(-1);
  if (d->value.dim(-2) != tk || v->value.dim(-2) != tk)
    throw ShapeError("attn_apply: token dimension mismatch");
  const int64_t dh = v->value.dim(-1);
  const int64_t nb = d->value.numel() / (tk * tk);
  if (v->value.numel() / (tk * dh) != nb) throw ShapeError("attn_apply: batch mismatch");
  Shape os(v->value.shape);
  Tensor out(os);
  const float* dd = d->value.data.data();
  const float* vd = v->value.data.data();
  float* od = out.data.data();
  for (int64_t b = 0; b < nb; ++b) {
    const float* dm = dd + b * tk * tk;
    const float* vm = vd + b * tk * dh;
    float* om = od + b * tk * dh;
    if (use_bits) {
      Tensor vt({tk, dh});
      std::copy(vm, vm + tk * dh, vt.data.begin());
      const BitMatrix vb = pack(vt);
      std::vector<int64_t> acc(static_cast<size_t>(tk * dh), 0);
      for (int sigma = 1; sigma <= levels; ++sigma) {
        MaskMatrix m(tk, tk);
        for (int64_t i = 0; i < tk; ++i)
          for (int64_t j = 0; j < tk; ++j)
            if (dm[i * tk + j] >= static_cast<float>(sigma) - 0.5f) m.set(i, j, true);
        IntMatrix part = mask_aggregate(m, vb);
        for (size_t k = 0; k < part.v.size(); ++k) acc[k] += part.v[k];
      }
      for (size_t k = 0; k < acc.size(); ++k) om[k] = static_cast<float>(acc[k]);
    } else {
      std::fill(om, om + tk * dh, 0.0f);
      for (int64_t i = 0; i < tk; ++i)
        for (int64_t l = 0; l < tk; ++l) {
          const float dv = dm[i * tk + l];
          if (dv == 0.0f) continue;
          const float* vr = vm + l * dh;
          float* orow = om + i * dh;
          for (int64_t j = 0; j < dh; ++j) orow[j] += dv * vr[j];
        }
    }
  }
  Tensor dv_saved = d->value, vv_saved = v->value;
  return custom_grad(t, {d, v}, std::move(out), [dv_saved, vv_saved, nb, tk, dh](const Tensor& up) {
    Tensor gd(dv_saved.shape), gv(vv_saved.shape);
    for (int64_t b = 0; b < nb; ++b) {
      const float* um = up.data.data() + b * tk * dh;
      const float* dm = dv_saved.data.data() + b * tk * tk;
      const float* vm = vv_saved.data.data() + b * tk * dh;
      float* gdm = gd.data.data() + b * tk * tk;
      float* gvm = gv.data.data() + b * tk * dh;
      for (int64_t i = 0; i < tk; ++i)
        for (int64_t l = 0; l < tk; ++l) {
          const float* ur = um + i * dh;
          const float* vr = vm + l * dh;
          float s = 0.0f;
          for (int64_t j = 0; j < dh; ++j) s += ur[j] * vr[j];
          gdm[i * tk + l] = s;
        }
      for (int64_t i = 0; i < tk; ++i) {
        const float* ur = um + i * dh;
        for (int64_t l = 0; l < tk; ++l) {
          const float dvv = dm[i * tk + l];
          if (dvv == 0.0f) continue;
          float* gr = gvm + l * dh;
          for (int64_t j = 0; j < dh; ++j) gr[j] += dvv * ur[j];
        }
      }
    }
    return std::vector<Tensor>{std::move(gd), std::move(gv)};
  });
}

}  // namespace

Msmha::Msmha(ParamStore& ps, const std::string& name, int64_t c, int heads_, int window_, bool qd_,
             int qd_levels_, Rng& rng)
    : heads(heads_),
      window(window_),
      qd_levels(qd_levels_),
      qd(qd_),
      lq(ps, name + ".lq", c, c, rng),
      lk(ps, name + ".lk", c, c, rng),
      lv(ps, name + ".lv", c, c, rng),
      bnq(ps, name + ".bnq", c),
      bnk(ps, name + ".bnk", c),
      bnv(ps, name + ".bnv", c),
      rq(ps, name + ".rq", c),
      rk(ps, name + ".rk", c),
      rv(ps, name + ".rv", c),
      baq(ps, name + ".baq", c),
      bak(ps, name + ".bak", c),
      bav(ps, name + ".bav", c),
      bno(ps, name + ".bno", c) {
  if (!qd_) {
    att_a = ps.add(name + ".att.a", Tensor::full({1}, 0.5f), false, true);
    att_b = ps.add(name + ".att.b", Tensor::full({1}, 0.25f), false, true);
  }
}

Value Msmha::apply(Tape& t, Value x, const Ctx& ctx) {
  const int64_t n = x->value.shape[0], h = x->value.shape[1], wd = x->value.shape[2],
                c = x->value.shape[3];
  const int w = window;
  const int64_t hb = h / w, wb = wd / w, nw = hb * wb;
  const int64_t w2 = int64_t{w} * w;
  const int64_t dh = c / heads;

  Value win = to_windows(t, x, w);                        // [N*nw, w2, C]
  Value high = reshape(t, avg_pool2d(t, x, w), {n, nw, c});
  Value high_rep = reshape(t, repeat_axis1(t, high, nw), {n * nw, nw, c});
  Value hid = concat(t, {win, high_rep}, 1);              // [B, T, C]

  auto project = [&](BinaryLinear& l, BatchNorm& bn, RPReLU& r) {
    return add(t, r.apply(t, bn.apply(t, l.apply(t, hid, ctx), ctx)), hid);
  };
  Value q = project(lq, bnq, rq);
  Value k = project(lk, bnk, rk);
  Value v = project(lv, bnv, rv);

  auto split_heads = [&](Value y) {
    y = reshape(t, y, {n * nw, w2 + nw, heads, dh});
    return permute(t, y, {0, 2, 1, 3});  // [B, h, T, dh]
  };
  Value qb = split_heads(baq.apply(t, q));
  Value kb = split_heads(bak.apply(t, k));
  Value vb = split_heads(bav.apply(t, v));

  Value logits = matmul(t, qb, kb, /*transpose_b=*/true, ctx.use_bits);
  logits = scale(t, logits, 1.0f / std::sqrt(static_cast<float>(dh)));
  Value attn = softmax(t, logits);

  Value mixed;
  if (qd) {
    Value dsum = qd_sum(t, attn, qd_levels);
    mixed = attn_apply(t, dsum, vb, ctx.use_bits, qd_levels);
  } else {
    Value ab = binarize_attention(t, attn, t.param(*att_a), t.param(*att_b));
    mixed = matmul(t, ab, vb, false, false);
  }
  mixed = reshape(t, permute(t, mixed, {0, 2, 1, 3}), {n * nw, w2 + nw, c});

  Value vl = add(t, add(t, add(t, mixed, q), k), v);  // full-precision shortcuts

  Value wpart = from_windows(t, slice(t, vl, 1, 0, w2), n, h, wd, w);
  Value hpart = reshape(t, slice(t, vl, 1, w2, nw), {n, nw, nw, c});
  hpart = mean_axis(t, hpart, 1);  // mean over windows
  hpart = nearest_upsample2d(t, reshape(t, hpart, {n, hb, wb, c}), w);
  // normalize before the residual add: the three full-precision shortcuts in
  // vl would otherwise triple the stream magnitude per block and saturate the
  // downstream activation quantizers
  return bno.apply(t, add(t, wpart, hpart), ctx);
}

// ---------------------------------------------------------------------------

BinaryMlp::BinaryMlp(ParamStore& ps, const std::string& name, int64_t c, int ratio_,
                     bool use_shift_, Rng& rng)
    : ratio(ratio_),
      use_shift(use_shift_),
      l1(ps, name + ".l1", c, c * ratio_, rng),
      l2(ps, name + ".l2", c * ratio_, c, rng),
      bn1(ps, name + ".bn1", c * ratio_),
      bn2(ps, name + ".bn2", c),
      r1(ps, name + ".r1", c * ratio_),
      r2(ps, name + ".r2", c) {
  if (use_shift_)
    for (int k = 1; k <= 2; ++k)
      for (const char* kind : {"hor", "ver", "mix"})
        ls.emplace_back(ps, name + ".ls" + std::to_string(k) + kind, c);
}

Value BinaryMlp::apply(Tape& t, Value x, const Ctx& ctx) {
  Value h1 = r1.apply(t, add(t, bn1.apply(t, l1.apply(t, x, ctx), ctx), tile_channels(t, x, ratio)));
  Value h2 = r2.apply(
      t, add(t, bn2.apply(t, l2.apply(t, h1, ctx), ctx), channel_group_pool(t, h1, ratio)));
  if (!use_shift) return h2;
  Value out = h2;
  size_t idx = 0;
  for (int k = 1; k <= 2; ++k)
    for (ShiftKind kind : {ShiftKind::horizontal, ShiftKind::vertical, ShiftKind::mix})
      out = add(t, out, ls[idx++].apply(t, shift(t, x, ShiftSpec{kind, k})));
  return out;
}

Value Block::apply(Tape& t, Value x, const Ctx& ctx) {
  Value m = conv_mixer ? conv_mixer->apply(t, x, ctx) : attn_mixer->apply(t, x, ctx);
  x = add(t, x, m);
  return add(t, x, mlp.apply(t, x, ctx));
}

// ---------------------------------------------------------------------------

BHViT::BHViT(const ModelConfig& cfg_) : cfg(cfg_) {
  cfg.validate();
  Rng rng(cfg.seed);
  stem = PatchEmbed(params, "stem", cfg.dims[0], cfg.input_size, rng);
  for (int i = 0; i < 4; ++i) {
    std::vector<Block> blocks;
    for (int b = 0; b < cfg.blocks[static_cast<size_t>(i)]; ++b) {
      const std::string name = "s" + std::to_string(i) + ".b" + std::to_string(b);
      Block blk;
      if (cfg.stage_is_attention(i))
        blk.attn_mixer.emplace(params, name + ".attn", cfg.dims[static_cast<size_t>(i)],
                               cfg.heads[static_cast<size_t>(i)],
                               cfg.windows[static_cast<size_t>(i)], cfg.qd, cfg.qd_levels, rng);
      else
        blk.conv_mixer.emplace(params, name + ".gdc", cfg.dims[static_cast<size_t>(i)],
                               cfg.conv_group_channels, rng);
      blk.mlp = BinaryMlp(params, name + ".mlp", cfg.dims[static_cast<size_t>(i)],
                          cfg.mlp_ratios[static_cast<size_t>(i)], cfg.shift_module, rng);
      blocks.push_back(std::move(blk));
    }
    stages.push_back(std::move(blocks));
    if (i < 3)
      downsamples.emplace_back(params, "ds" + std::to_string(i),
                               cfg.dims[static_cast<size_t>(i)], cfg.fdl, rng);
  }
  head_w = params.add(
      "head.w", Tensor::randn({cfg.dims[3], cfg.num_classes}, rng,
                              1.0f / std::sqrt(static_cast<float>(cfg.dims[3]))));
  head_b = params.add("head.b", Tensor::zeros({cfg.num_classes}));
}

Value BHViT::forward(Tape& t, Value images, const Ctx& ctx) {
  if (images->value.ndim() != 4 || images->value.dim(3) != 3 ||
      images->value.dim(1) != cfg.input_size || images->value.dim(2) != cfg.input_size)
    throw ShapeError("forward: expected images [N," + std::to_string(cfg.input_size) + "," +
                     std::to_string(cfg.input_size) + ",3]");
  Value x = stem.apply(t, images, ctx);
  for (int i = 0; i < 4; ++i) {
    for (auto& blk : stages[static_cast<size_t>(i)]) x = blk.apply(t, x, ctx);
    if (i < 3) x = downsamples[static_cast<size_t>(i)].apply(t, x, ctx);
  }
  const int64_t n = x->value.shape[0], h = x->value.shape[1], w = x->value.shape[2],
                c = x->value.shape[3];
  x = mean_axis(t, reshape(t, x, {n, h * w, c}), 1);  // global average pooling
  return add(t, matmul(t, x, t.param(*head_w)), t.param(*head_b));
}

Tensor BHViT::predict(const Tensor& images, const Ctx& ctx) {
  Tape t;
  Value out = forward(t, t.constant(images), ctx);
  return out->value;
}

std::vector<Param*> BHViT::positive_params() const {
  std::vector<Param*> out;
  for (const auto& p : params.items)
    if (p.name.size() > 2 && p.name.compare(p.name.size() - 2, 2, ".a") == 0)
      out.push_back(const_cast<Param*>(&p));
  return out;
}

// ---------------------------------------------------------------------------

OpsReport count_ops(const ModelConfig& cfg) {
  cfg.validate();
  OpsReport r;
  auto binary_weight = [&r](int64_t numel, int64_t out_channels) {
    r.binary_param_count += numel;
    r.real_param_count += out_channels;  // per-output-channel alpha
  };
  const int64_t s0 = cfg.stage_size(0);
  const int64_t c0 = cfg.dims[0];
  r.flops += static_cast<double>(s0 * s0) * c0 * 48;  // stem conv
  r.real_param_count += 48 * c0 + s0 * s0 * c0;       // stem conv + position embedding
  r.aux_param_count += 2 * c0;                        // stem bn

  for (int i = 0; i < 4; ++i) {
    const int64_t s = cfg.stage_size(i);
    const int64_t c = cfg.dims[static_cast<size_t>(i)];
    const int64_t hw = s * s;
    const int ratio = cfg.mlp_ratios[static_cast<size_t>(i)];
    for (int b = 0; b < cfg.blocks[static_cast<size_t>(i)]; ++b) {
      if (cfg.stage_is_attention(i)) {
        const int64_t w = cfg.windows[static_cast<size_t>(i)];
        const int64_t nw = (s / w) * (s / w);
        const int64_t tk = w * w + nw;
        const int64_t heads = cfg.heads[static_cast<size_t>(i)];
        const int64_t dh = c / heads;
        r.bops += 3.0 * static_cast<double>(nw * tk) * c * c;  // Q, K, V projections
        binary_weight(3 * c * c, 3 * c);
        const double attn_macs = static_cast<double>(nw * heads * tk * tk) * dh;
        r.bops += attn_macs;  // QK^T
        if (cfg.qd) {
          r.bops += cfg.qd_levels * attn_macs;  // one mask aggregation per level
          r.flops += static_cast<double>(nw * heads * tk * tk) * cfg.qd_levels;  // thresholds
        } else {
          r.bops += attn_macs;
        }
        r.aux_param_count += 29 * c + (cfg.qd ? 0 : 2);
      } else {
        const int64_t cg = cfg.conv_group_channels;
        r.bops += 3.0 * static_cast<double>(hw * c) * 9 * cg;
        binary_weight(3 * 9 * cg * c, 3 * c);
        r.aux_param_count += 13 * c;  // shared binarizer, three prelus, bn
      }
      r.bops += 2.0 * ratio * static_cast<double>(hw) * c * c;  // MLP expand + contract
      binary_weight(2 * ratio * c * c, ratio * c + c);
      r.aux_param_count += (7 * static_cast<int64_t>(ratio) + 7) * c;
      if (cfg.shift_module) {
        r.flops += 6.0 * static_cast<double>(hw) * c;  // shift-branch affine
        r.aux_param_count += 12 * c;
      }
    }
    if (i < 3) {
      const int64_t so = cfg.stage_size(i + 1);
      const double macs = static_cast<double>(so * so) * (2 * c) * (4 * c);
      if (cfg.fdl) {
        r.flops += macs;
        r.real_param_count += 8 * c * c;
      } else {
        r.bops += macs;
        binary_weight(8 * c * c, 2 * c);
        r.aux_param_count += 2 * c;  // conv binarizer
      }
      r.aux_param_count += 4 * c;  // bn on the doubled channels
    }
  }
  r.flops += static_cast<double>(cfg.dims[3]) * cfg.num_classes;  // head
  r.real_param_count += cfg.dims[3] * cfg.num_classes + cfg.num_classes;
  return r;
}

}  // namespace bhvit
