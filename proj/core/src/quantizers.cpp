#include "bhvit/quantizers.hpp"

#include <cmath>

namespace bhvit {

namespace {

void check_scale(const Tensor& a) {
  for (float v : a.data)
    if (!(v > 0.0f)) throw DomainError("quantizer scale must be positive");
}

int64_t channel_period(const Tensor& x, const QuantParams& p) {
  if (!p.a.same_shape(p.b)) throw ShapeError("quantizer: a/b shape mismatch");
  const int64_t c = p.a.numel();
  if (c == 0 || x.numel() % c != 0) throw ShapeError("quantizer: channel count mismatch");
  check_scale(p.a);
  return c;
}

// Piecewise STE factor of the activation binarizer at u = (x-b)/a.
inline float act_factor(float u) {
  if (u < -1.0f || u >= 1.0f) return 0.0f;
  return u < 0.0f ? 2.0f + 2.0f * u : 2.0f - 2.0f * u;
}

}  // namespace

Tensor binarize_activation_forward(const Tensor& x, const QuantParams& p) {
  const int64_t c = channel_period(x, p);
  Tensor out(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) {
    const float u = (x.data[static_cast<size_t>(i)] - p.b.data[static_cast<size_t>(i % c)]) /
                    p.a.data[static_cast<size_t>(i % c)];
    out.data[static_cast<size_t>(i)] = u >= 0.0f ? 1.0f : -1.0f;
  }
  return out;
}

Tensor binarize_activation_backward(const Tensor& upstream, const Tensor& x, const QuantParams& p,
                                    Tensor* da, Tensor* db) {
  const int64_t c = channel_period(x, p);
  if (!upstream.same_shape(x)) throw ShapeError("binarize_activation: upstream shape mismatch");
  Tensor dx(x.shape);
  if (da) *da = Tensor::zeros(p.a.shape);
  if (db) *db = Tensor::zeros(p.b.shape);
  for (int64_t i = 0; i < x.numel(); ++i) {
    const size_t ch = static_cast<size_t>(i % c);
    const float u = (x.data[static_cast<size_t>(i)] - p.b.data[ch]) / p.a.data[ch];
    const float f = act_factor(u);
    const float g = upstream.data[static_cast<size_t>(i)];
    dx.data[static_cast<size_t>(i)] = g * f;
    if (da) da->data[ch] -= g * u * f;
    if (db) db->data[ch] -= g * f;
  }
  return dx;
}

Value binarize_activation(Tape& t, Value x, Value a, Value b) {
  QuantParams p{a->value, b->value};
  Tensor fwd = binarize_activation_forward(x->value, p);
  Tensor xv = x->value;
  return custom_grad(t, {x, a, b}, std::move(fwd), [xv, p](const Tensor& up) {
    Tensor da, db;
    Tensor dx = binarize_activation_backward(up, xv, p, &da, &db);
    return std::vector<Tensor>{std::move(dx), std::move(da), std::move(db)};
  });
}

Tensor weight_alpha(const Tensor& w) {
  if (w.ndim() != 2) throw ShapeError("weight_alpha: expected [in,out]");
  const int64_t in = w.shape[0], out = w.shape[1];
  Tensor alpha({out});
  for (int64_t k = 0; k < out; ++k) {
    double s = 0.0;
    for (int64_t i = 0; i < in; ++i) s += std::fabs(w.at2(i, k));
    alpha.data[static_cast<size_t>(k)] = std::max(static_cast<float>(s / in), 1e-12f);
  }
  return alpha;
}

Value weight_sign_ste(Tape& t, Value w) {
  Tensor fwd(w->value.shape);
  for (int64_t i = 0; i < w->value.numel(); ++i)
    fwd.data[static_cast<size_t>(i)] = w->value.data[static_cast<size_t>(i)] >= 0.0f ? 1.0f : -1.0f;
  Tensor wv = w->value;
  return custom_grad(t, {w}, std::move(fwd), [wv](const Tensor& up) {
    Tensor dw(wv.shape);
    for (int64_t i = 0; i < wv.numel(); ++i) {
      const float v = wv.data[static_cast<size_t>(i)];
      dw.data[static_cast<size_t>(i)] =
          (v > -1.0f && v < 1.0f) ? up.data[static_cast<size_t>(i)] : 0.0f;
    }
    return std::vector<Tensor>{std::move(dw)};
  });
}

Value binarize_weight(Tape& t, Value w) {
  return mul(t, weight_sign_ste(t, w), t.constant(weight_alpha(w->value)));
}

Tensor binarize_weight_forward(const Tensor& w) {
  Tensor alpha = weight_alpha(w);
  Tensor out(w.shape);
  const int64_t in = w.shape[0], oc = w.shape[1];
  for (int64_t i = 0; i < in; ++i)
    for (int64_t k = 0; k < oc; ++k)
      out.at2(i, k) = w.at2(i, k) >= 0.0f ? alpha.data[static_cast<size_t>(k)]
                                          : -alpha.data[static_cast<size_t>(k)];
  return out;
}

namespace {

void check_attention_domain(const Tensor& a_tt) {
  for (float v : a_tt.data)
    if (v < -1e-6f || v > 1.0f + 1e-6f)
      throw DomainError("binarize_attention: input outside [0,1]");
}

}  // namespace

Tensor binarize_attention_forward(const Tensor& a_tt, const QuantParams& p) {
  const int64_t c = channel_period(a_tt, p);
  check_attention_domain(a_tt);
  Tensor out(a_tt.shape);
  for (int64_t i = 0; i < a_tt.numel(); ++i) {
    const size_t ch = static_cast<size_t>(i % c);
    const float a = p.a.data[ch];
    float q = std::round((a_tt.data[static_cast<size_t>(i)] - p.b.data[ch]) / a);
    q = std::min(std::max(q, 0.0f), 1.0f);
    out.data[static_cast<size_t>(i)] = a * q;
  }
  return out;
}

Tensor binarize_attention_backward(const Tensor& upstream, const Tensor& a_tt,
                                   const QuantParams& p, Tensor* da, Tensor* db) {
  const int64_t c = channel_period(a_tt, p);
  if (!upstream.same_shape(a_tt)) throw ShapeError("binarize_attention: upstream shape mismatch");
  Tensor dx(a_tt.shape);
  if (da) *da = Tensor::zeros(p.a.shape);
  if (db) *db = Tensor::zeros(p.b.shape);
  for (int64_t i = 0; i < a_tt.numel(); ++i) {
    const size_t ch = static_cast<size_t>(i % c);
    const float a = p.a.data[ch];
    const float b = p.b.data[ch];
    const float v = a_tt.data[static_cast<size_t>(i)];
    const float g = upstream.data[static_cast<size_t>(i)];
    const bool in_window = v >= b && v < a + b;
    dx.data[static_cast<size_t>(i)] = in_window ? a * g : 0.0f;
    if (da) {
      float q = std::round((v - b) / a);
      q = std::min(std::max(q, 0.0f), 1.0f);
      da->data[ch] += g * q;
    }
    if (db && in_window) db->data[ch] -= g;
  }
  return dx;
}

Value binarize_attention(Tape& t, Value a_tt, Value a, Value b) {
  QuantParams p{a->value, b->value};
  Tensor fwd = binarize_attention_forward(a_tt->value, p);
  Tensor xv = a_tt->value;
  return custom_grad(t, {a_tt, a, b}, std::move(fwd), [xv, p](const Tensor& up) {
    Tensor da, db;
    Tensor dx = binarize_attention_backward(up, xv, p, &da, &db);
    return std::vector<Tensor>{std::move(dx), std::move(da), std::move(db)};
  });
}

AttentionDecomposition quantization_decompose(const Tensor& a_tt, int s) {
  if (s < 1) throw DomainError("quantization_decompose: s must be >= 1");
  if (a_tt.ndim() != 2) throw ShapeError("quantization_decompose: expected a 2-D map");
  AttentionDecomposition d;
  d.s = s;
  const int64_t rows = a_tt.shape[0], cols = a_tt.shape[1];
  d.masks.reserve(static_cast<size_t>(s));
  for (int sigma = 1; sigma <= s; ++sigma) {
    MaskMatrix m(rows, cols);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c)
        if (std::round(static_cast<float>(s) * a_tt.at2(r, c)) >= static_cast<float>(sigma) - 0.5f)
          m.set(r, c, true);
    d.masks.push_back(std::move(m));
  }
  return d;
}

Tensor decompose_backward(const Tensor& upstream, const Tensor& a_tt, int s) {
  if (!upstream.same_shape(a_tt)) throw ShapeError("decompose_backward: shape mismatch");
  Tensor g(a_tt.shape);
  for (int64_t i = 0; i < a_tt.numel(); ++i) {
    const float v = a_tt.data[static_cast<size_t>(i)];
    g.data[static_cast<size_t>(i)] =
        (v >= 0.0f && v <= 1.0f) ? static_cast<float>(s) * upstream.data[static_cast<size_t>(i)]
                                 : 0.0f;
  }
  return g;
}

Value qd_sum(Tape& t, Value a_tt, int s) {
  if (s < 1) throw DomainError("qd_sum: s must be >= 1");
  Tensor fwd(a_tt->value.shape);
  for (int64_t i = 0; i < fwd.numel(); ++i) {
    float q = std::round(static_cast<float>(s) * a_tt->value.data[static_cast<size_t>(i)]);
    fwd.data[static_cast<size_t>(i)] = std::min(std::max(q, 0.0f), static_cast<float>(s));
  }
  Tensor av = a_tt->value;
  return custom_grad(t, {a_tt}, std::move(fwd), [av, s](const Tensor& up) {
    return std::vector<Tensor>{decompose_backward(up, av, s)};
  });
}

}  // namespace bhvit
