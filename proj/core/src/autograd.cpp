#include "bhvit/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "bhvit/bitpack.hpp"
#include "bhvit/params.hpp"

namespace bhvit {

Value Tape::make(Tensor v, bool requires_grad, std::function<void()> back) {
  nodes_.push_back(Node{std::move(v), Tensor{}, requires_grad, std::move(back), nullptr});
  return &nodes_.back();
}

Value Tape::leaf(Tensor v, bool requires_grad) { return make(std::move(v), requires_grad); }

Value Tape::param(Param& p) {
  Value v = make(p.value, true);
  v->bound = &p;
  return v;
}

void Tape::accum(Node* n, const Tensor& g) {
  if (!n->requires_grad) return;
  ensure_grad(n);
  if (!n->grad.same_shape(g)) throw ShapeError("gradient shape mismatch");
  float* dst = n->grad.data.data();
  const float* src = g.data.data();
  for (size_t i = 0; i < g.data.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Value loss) {
  if (loss->value.numel() != 1) throw DomainError("backward: loss must be scalar");
  ensure_grad(loss);
  loss->grad.data[0] = 1.0f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = *it;
    if (n.back && n.requires_grad && !n.grad.data.empty()) n.back();
  }
  for (auto& n : nodes_) {
    if (n.bound && !n.grad.data.empty()) {
      Param& p = *n.bound;
      if (p.grad.data.empty()) p.grad = Tensor::zeros(p.value.shape);
      for (size_t i = 0; i < n.grad.data.size(); ++i) p.grad.data[i] += n.grad.data[i];
    }
  }
}

namespace {

// b broadcasts over a when b's shape is a suffix of a's shape.
int64_t broadcast_period(const Tensor& a, const Tensor& b, const char* what) {
  const auto& as = a.shape;
  const auto& bs = b.shape;
  if (bs.size() > as.size()) throw ShapeError(std::string(what) + ": operand rank mismatch");
  for (size_t i = 0; i < bs.size(); ++i)
    if (bs[bs.size() - 1 - i] != as[as.size() - 1 - i])
      throw ShapeError(std::string(what) + ": shapes " + shape_str(as) + " and " + shape_str(bs) +
                       " are not suffix-compatible");
  return b.numel();
}

Tensor reduce_to_suffix(const Tensor& g, const Shape& target_shape, int64_t period) {
  Tensor out(target_shape);
  const int64_t n = g.numel();
  for (int64_t i = 0; i < n; ++i) out.data[static_cast<size_t>(i % period)] += g.data[static_cast<size_t>(i)];
  return out;
}

struct AxisSplit {
  int64_t outer, n, inner;
};
AxisSplit split_axis(const Shape& s, int axis) {
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size())) throw ShapeError("axis out of range");
  AxisSplit r{1, s[static_cast<size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Value add(Tape& t, Value a, Value b) {
  const int64_t period = broadcast_period(a->value, b->value, "add");
  Tensor out = a->value;
  const float* bd = b->value.data.data();
  for (int64_t i = 0; i < out.numel(); ++i) out.data[static_cast<size_t>(i)] += bd[i % period];
  Value r = t.make(std::move(out), a->requires_grad || b->requires_grad);
  r->back = [a, b, r, period] {
    Tape::accum(a, r->grad);
    if (b->requires_grad) Tape::accum(b, reduce_to_suffix(r->grad, b->value.shape, period));
  };
  return r;
}

Value sub(Tape& t, Value a, Value b) {
  const int64_t period = broadcast_period(a->value, b->value, "sub");
  Tensor out = a->value;
  const float* bd = b->value.data.data();
  for (int64_t i = 0; i < out.numel(); ++i) out.data[static_cast<size_t>(i)] -= bd[i % period];
  Value r = t.make(std::move(out), a->requires_grad || b->requires_grad);
  r->back = [a, b, r, period] {
    Tape::accum(a, r->grad);
    if (b->requires_grad) {
      Tensor g = reduce_to_suffix(r->grad, b->value.shape, period);
      for (float& x : g.data) x = -x;
      Tape::accum(b, g);
    }
  };
  return r;
}

Value mul(Tape& t, Value a, Value b) {
  const int64_t period = broadcast_period(a->value, b->value, "mul");
  Tensor out = a->value;
  const float* bd = b->value.data.data();
  for (int64_t i = 0; i < out.numel(); ++i) out.data[static_cast<size_t>(i)] *= bd[i % period];
  Value r = t.make(std::move(out), a->requires_grad || b->requires_grad);
  r->back = [a, b, r, period] {
    if (a->requires_grad) {
      Tensor g = r->grad;
      const float* bb = b->value.data.data();
      for (int64_t i = 0; i < g.numel(); ++i) g.data[static_cast<size_t>(i)] *= bb[i % period];
      Tape::accum(a, g);
    }
    if (b->requires_grad) {
      Tensor g(b->value.shape);
      const float* go = r->grad.data.data();
      const float* av = a->value.data.data();
      for (int64_t i = 0; i < r->grad.numel(); ++i)
        g.data[static_cast<size_t>(i % period)] += go[i] * av[i];
      Tape::accum(b, g);
    }
  };
  return r;
}

Value scale(Tape& t, Value a, float s) {
  Tensor out = a->value;
  for (float& x : out.data) x *= s;
  Value r = t.make(std::move(out), a->requires_grad);
  r->back = [a, r, s] {
    Tensor g = r->grad;
    for (float& x : g.data) x *= s;
    Tape::accum(a, g);
  };
  return r;
}

Value add_scalar(Tape& t, Value a, float s) {
  Tensor out = a->value;
  for (float& x : out.data) x += s;
  Value r = t.make(std::move(out), a->requires_grad);
  r->back = [a, r] { Tape::accum(a, r->grad); };
  return r;
}

Value gelu(Tape& t, Value x) {
  Tensor out = x->value;
  for (float& v : out.data) v = 0.5f * v * (1.0f + std::erf(v * 0.70710678f));
  Value r = t.make(std::move(out), x->requires_grad);
  r->back = [x, r] {
    Tensor g = r->grad;
    for (int64_t i = 0; i < g.numel(); ++i) {
      const float v = x->value.data[static_cast<size_t>(i)];
      const float cdf = 0.5f * (1.0f + std::erf(v * 0.70710678f));
      const float pdf = 0.39894228f * std::exp(-0.5f * v * v);
      g.data[static_cast<size_t>(i)] *= cdf + v * pdf;
    }
    Tape::accum(x, g);
  };
  return r;
}

Value prelu(Tape& t, Value x, Value slope) {
  const int64_t c = broadcast_period(x->value, slope->value, "prelu");
  Tensor out = x->value;
  const float* s = slope->value.data.data();
  for (int64_t i = 0; i < out.numel(); ++i) {
    float& v = out.data[static_cast<size_t>(i)];
    if (v < 0.0f) v *= s[i % c];
  }
  Value r = t.make(std::move(out), x->requires_grad || slope->requires_grad);
  r->back = [x, slope, r, c] {
    const float* go = r->grad.data.data();
    const float* xv = x->value.data.data();
    const float* s = slope->value.data.data();
    if (x->requires_grad) {
      Tensor g(x->value.shape);
      for (int64_t i = 0; i < g.numel(); ++i)
        g.data[static_cast<size_t>(i)] = go[i] * (xv[i] >= 0.0f ? 1.0f : s[i % c]);
      Tape::accum(x, g);
    }
    if (slope->requires_grad) {
      Tensor g(slope->value.shape);
      for (int64_t i = 0; i < x->value.numel(); ++i)
        if (xv[i] < 0.0f) g.data[static_cast<size_t>(i % c)] += go[i] * xv[i];
      Tape::accum(slope, g);
    }
  };
  return r;
}

Value reshape(Tape& t, Value a, Shape s) {
  if (Tensor::count(s) != a->value.numel()) throw ShapeError("reshape: element count mismatch");
  Tensor out(std::move(s), a->value.data);
  Value r = t.make(std::move(out), a->requires_grad);
  r->back = [a, r] { Tape::accum(a, Tensor(a->value.shape, r->grad.data)); };
  return r;
}

namespace {

std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[static_cast<size_t>(i)] = st[static_cast<size_t>(i) + 1] * s[static_cast<size_t>(i) + 1];
  return st;
}

}  // namespace

Value permute(Tape& t, Value a, const std::vector<int>& perm) {
  const Shape& is = a->value.shape;
  if (perm.size() != is.size()) throw ShapeError("permute: rank mismatch");
  Shape os(is.size());
  for (size_t i = 0; i < perm.size(); ++i) os[i] = is[static_cast<size_t>(perm[i])];
  const auto ist = strides_of(is);
  const auto ost = strides_of(os);
  const int64_t n = a->value.numel();
  auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n));
  // out index -> in index
  std::vector<int64_t> idx(is.size(), 0);
  for (int64_t o = 0; o < n; ++o) {
    int64_t rem = o, in = 0;
    for (size_t d = 0; d < os.size(); ++d) {
      const int64_t q = rem / ost[d];
      rem -= q * ost[d];
      in += q * ist[static_cast<size_t>(perm[d])];
    }
    (*map)[static_cast<size_t>(o)] = in;
  }
  return gather_perm(t, a, map, os);
}

Value gather_perm(Tape& t, Value a, std::shared_ptr<const std::vector<int64_t>> perm, Shape out_shape) {
  if (static_cast<int64_t>(perm->size()) != a->value.numel() ||
      Tensor::count(out_shape) != a->value.numel())
    throw ShapeError("gather_perm: size mismatch");
  Tensor out(std::move(out_shape));
  for (size_t i = 0; i < perm->size(); ++i) out.data[i] = a->value.data[static_cast<size_t>((*perm)[i])];
  Value r = t.make(std::move(out), a->requires_grad);
  r->back = [a, r, perm] {
    Tensor g(a->value.shape);
    for (size_t i = 0; i < perm->size(); ++i) g.data[static_cast<size_t>((*perm)[i])] += r->grad.data[i];
    Tape::accum(a, g);
  };
  return r;
}

Value concat(Tape& t, const std::vector<Value>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  Shape os = xs[0]->value.shape;
  if (axis < 0) axis += static_cast<int>(os.size());
  int64_t total = 0;
  for (Value x : xs) {
    if (x->value.ndim() != static_cast<int>(os.size())) throw ShapeError("concat: rank mismatch");
    for (int d = 0; d < x->value.ndim(); ++d)
      if (d != axis && x->value.shape[static_cast<size_t>(d)] != os[static_cast<size_t>(d)])
        throw ShapeError("concat: incompatible shapes");
    total += x->value.shape[static_cast<size_t>(axis)];
  }
  os[static_cast<size_t>(axis)] = total;
  const auto sp = split_axis(os, axis);
  Tensor out(os);
  bool rg = false;
  int64_t off = 0;
  for (Value x : xs) {
    rg = rg || x->requires_grad;
    const int64_t nx = x->value.shape[static_cast<size_t>(axis)];
    for (int64_t o = 0; o < sp.outer; ++o)
      std::memcpy(&out.data[static_cast<size_t>((o * sp.n + off) * sp.inner)],
                  &x->value.data[static_cast<size_t>(o * nx * sp.inner)],
                  static_cast<size_t>(nx * sp.inner) * sizeof(float));
    off += nx;
  }
  Value r = t.make(std::move(out), rg);
  std::vector<Value> inputs = xs;
  r->back = [inputs, r, sp, axis] {
    int64_t off2 = 0;
    for (Value x : inputs) {
      const int64_t nx = x->value.shape[static_cast<size_t>(axis)];
      if (x->requires_grad) {
        Tensor g(x->value.shape);
        for (int64_t o = 0; o < sp.outer; ++o)
          std::memcpy(&g.data[static_cast<size_t>(o * nx * sp.inner)],
                      &r->grad.data[static_cast<size_t>((o * sp.n + off2) * sp.inner)],
                      static_cast<size_t>(nx * sp.inner) * sizeof(float));
        Tape::accum(x, g);
      }
      off2 += nx;
    }
  };
  return r;
}

Value slice(Tape& t, Value a, int axis, int64_t start, int64_t len) {
  const Shape& is = a->value.shape;
  if (axis < 0) axis += static_cast<int>(is.size());
  const auto sp = split_axis(is, axis);
  if (start < 0 || start + len > sp.n) throw ShapeError("slice: range out of bounds");
  Shape os = is;
  os[static_cast<size_t>(axis)] = len;
  Tensor out(os);
  for (int64_t o = 0; o < sp.outer; ++o)
    std::memcpy(&out.data[static_cast<size_t>(o * len * sp.inner)],
                &a->value.data[static_cast<size_t>((o * sp.n + start) * sp.inner)],
                static_cast<size_t>(len * sp.inner) * sizeof(float));
  Value r = t.make(std::move(out), a->requires_grad);
  r->back = [a, r, sp, start, len] {
    Tensor g(a->value.shape);
    for (int64_t o = 0; o < sp.outer; ++o)
      std::memcpy(&g.data[static_cast<size_t>((o * sp.n + start) * sp.inner)],
                  &r->grad.data[static_cast<size_t>(o * len * sp.inner)],
                  static_cast<size_t>(len * sp.inner) * sizeof(float));
    Tape::accum(a, g);
  };
  return r;
}

Value repeat_axis1(Tape& t, Value a, int64_t copies) {
  if (a->value.ndim() != 3) throw ShapeError("repeat_axis1: expected [N,T,C]");
  const int64_t n = a->value.shape[0], inner = a->value.shape[1] * a->value.shape[2];
  Tensor out({n, copies, a->value.shape[1], a->value.shape[2]});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < copies; ++c)
      std::memcpy(&out.data[static_cast<size_t>((i * copies + c) * inner)],
                  &a->value.data[static_cast<size_t>(i * inner)],
                  static_cast<size_t>(inner) * sizeof(float));
  Value r = t.make(std::move(out), a->requires_grad);
  r->back = [a, r, n, copies, inner] {
    Tensor g(a->value.shape);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < copies; ++c) {
        const float* src = &r->grad.data[static_cast<size_t>((i * copies + c) * inner)];
        float* dst = &g.data[static_cast<size_t>(i * inner)];
        for (int64_t k = 0; k < inner; ++k) dst[k] += src[k];
      }
    Tape::accum(a, g);
  };
  return r;
}

Value tile_channels(Tape& t, Value a, int r) {
  const int64_t c = a->value.dim(-1);
  const int64_t outer = a->value.numel() / c;
  Shape os = a->value.shape;
  os.back() = c * r;
  Tensor out(os);
  for (int64_t o = 0; o < outer; ++o)
    for (int m = 0; m < r; ++m)
      std::memcpy(&out.data[static_cast<size_t>(o * c * r + m * c)],
                  &a->value.data[static_cast<size_t>(o * c)], static_cast<size_t>(c) * sizeof(float));
  Value v = t.make(std::move(out), a->requires_grad);
  v->back = [a, v, c, outer, r] {
    Tensor g(a->value.shape);
    for (int64_t o = 0; o < outer; ++o)
      for (int m = 0; m < r; ++m) {
        const float* src = &v->grad.data[static_cast<size_t>(o * c * r + m * c)];
        float* dst = &g.data[static_cast<size_t>(o * c)];
        for (int64_t k = 0; k < c; ++k) dst[k] += src[k];
      }
    Tape::accum(a, g);
  };
  return v;
}

Value channel_group_pool(Tape& t, Value a, int r) {
  const int64_t cin = a->value.dim(-1);
  if (cin % r != 0) throw ShapeError("channel_group_pool: channels not divisible");
  const int64_t c = cin / r;
  const int64_t outer = a->value.numel() / cin;
  Shape os = a->value.shape;
  os.back() = c;
  Tensor out(os);
  const float inv = 1.0f / static_cast<float>(r);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t k = 0; k < c; ++k) {
      float s = 0.0f;
      for (int m = 0; m < r; ++m) s += a->value.data[static_cast<size_t>(o * cin + m * c + k)];
      out.data[static_cast<size_t>(o * c + k)] = s * inv;
    }
  Value v = t.make(std::move(out), a->requires_grad);
  v->back = [a, v, c, cin, outer, r, inv] {
    Tensor g(a->value.shape);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t k = 0; k < c; ++k) {
        const float go = v->grad.data[static_cast<size_t>(o * c + k)] * inv;
        for (int m = 0; m < r; ++m) g.data[static_cast<size_t>(o * cin + m * c + k)] = go;
      }
    Tape::accum(a, g);
  };
  return v;
}

Value mean_axis(Tape& t, Value a, int axis) {
  const auto sp = split_axis(a->value.shape, axis);
  if (sp.n == 0) throw DomainError("mean_axis: empty axis");
  Shape os;
  for (int d = 0; d < a->value.ndim(); ++d) {
    int ax = axis < 0 ? axis + a->value.ndim() : axis;
    if (d != ax) os.push_back(a->value.shape[static_cast<size_t>(d)]);
  }
  Tensor out(os);
  const float inv = 1.0f / static_cast<float>(sp.n);
  for (int64_t o = 0; o < sp.outer; ++o)
    for (int64_t i = 0; i < sp.inner; ++i) {
      double s = 0.0;
      for (int64_t k = 0; k < sp.n; ++k)
        s += a->value.data[static_cast<size_t>((o * sp.n + k) * sp.inner + i)];
      out.data[static_cast<size_t>(o * sp.inner + i)] = static_cast<float>(s) * inv;
    }
  Value r = t.make(std::move(out), a->requires_grad);
  r->back = [a, r, sp, inv] {
    Tensor g(a->value.shape);
    for (int64_t o = 0; o < sp.outer; ++o)
      for (int64_t i = 0; i < sp.inner; ++i) {
        const float go = r->grad.data[static_cast<size_t>(o * sp.inner + i)] * inv;
        for (int64_t k = 0; k < sp.n; ++k)
          g.data[static_cast<size_t>((o * sp.n + k) * sp.inner + i)] = go;
      }
    Tape::accum(a, g);
  };
  return r;
}

Value sum_all(Tape& t, Value a) {
  double s = 0.0;
  for (float x : a->value.data) s += x;
  Value r = t.make(Tensor::scalar(static_cast<float>(s)), a->requires_grad);
  r->back = [a, r] { Tape::accum(a, Tensor::full(a->value.shape, r->grad.data[0])); };
  return r;
}

Value mean_all(Tape& t, Value a) {
  return scale(t, sum_all(t, a), 1.0f / static_cast<float>(a->value.numel()));
}

void softmax_rows(const Tensor& in, Tensor& out) {
  const int64_t k = in.dim(-1);
  if (k == 0) throw DomainError("softmax: empty axis");
  const int64_t rows = in.numel() / k;
  for (int64_t r = 0; r < rows; ++r) {
    const float* x = &in.data[static_cast<size_t>(r * k)];
    float* y = &out.data[static_cast<size_t>(r * k)];
    float m = x[0];
    for (int64_t i = 1; i < k; ++i) m = std::max(m, x[i]);
    double s = 0.0;
    for (int64_t i = 0; i < k; ++i) {
      y[i] = std::exp(x[i] - m);
      s += y[i];
    }
    const float inv = static_cast<float>(1.0 / s);
    for (int64_t i = 0; i < k; ++i) y[i] *= inv;
  }
}

Value softmax(Tape& t, Value a) {
  Tensor out(a->value.shape);
  softmax_rows(a->value, out);
  Value r = t.make(std::move(out), a->requires_grad);
  r->back = [a, r] {
    const int64_t k = r->value.dim(-1);
    const int64_t rows = r->value.numel() / k;
    Tensor g(a->value.shape);
    for (int64_t row = 0; row < rows; ++row) {
      const float* p = &r->value.data[static_cast<size_t>(row * k)];
      const float* go = &r->grad.data[static_cast<size_t>(row * k)];
      double dot = 0.0;
      for (int64_t i = 0; i < k; ++i) dot += static_cast<double>(go[i]) * p[i];
      float* dst = &g.data[static_cast<size_t>(row * k)];
      for (int64_t i = 0; i < k; ++i) dst[i] = p[i] * (go[i] - static_cast<float>(dot));
    }
    Tape::accum(a, g);
  };
  return r;
}

Value log_softmax(Tape& t, Value a) {
  const int64_t k = a->value.dim(-1);
  if (k == 0) throw DomainError("log_softmax: empty axis");
  const int64_t rows = a->value.numel() / k;
  Tensor out(a->value.shape);
  for (int64_t r = 0; r < rows; ++r) {
    const float* x = &a->value.data[static_cast<size_t>(r * k)];
    float* y = &out.data[static_cast<size_t>(r * k)];
    float m = x[0];
    for (int64_t i = 1; i < k; ++i) m = std::max(m, x[i]);
    double s = 0.0;
    for (int64_t i = 0; i < k; ++i) s += std::exp(static_cast<double>(x[i]) - m);
    const float lse = m + static_cast<float>(std::log(s));
    for (int64_t i = 0; i < k; ++i) y[i] = x[i] - lse;
  }
  Value r = t.make(std::move(out), a->requires_grad);
  r->back = [a, r, k, rows] {
    Tensor g(a->value.shape);
    for (int64_t row = 0; row < rows; ++row) {
      const float* ls = &r->value.data[static_cast<size_t>(row * k)];
      const float* go = &r->grad.data[static_cast<size_t>(row * k)];
      double gsum = 0.0;
      for (int64_t i = 0; i < k; ++i) gsum += go[i];
      float* dst = &g.data[static_cast<size_t>(row * k)];
      for (int64_t i = 0; i < k; ++i)
        dst[i] = go[i] - static_cast<float>(gsum) * std::exp(ls[i]);
    }
    Tape::accum(a, g);
  };
  return r;
}

namespace {

struct MatDims {
  int64_t batch, m, k, n;
  bool shared_b;  // b is a single [K,N]/[N,K] matrix shared over batches
};

MatDims matmul_dims(const Tensor& a, const Tensor& b, bool tb) {
  if (a.ndim() < 2 || b.ndim() < 2) throw ShapeError("matmul: need at least 2-D operands");
  MatDims d{};
  d.m = a.shape[a.shape.size() - 2];
  d.k = a.shape[a.shape.size() - 1];
  d.batch = a.numel() / (d.m * d.k);
  const int64_t bk = tb ? b.shape[b.shape.size() - 1] : b.shape[b.shape.size() - 2];
  d.n = tb ? b.shape[b.shape.size() - 2] : b.shape[b.shape.size() - 1];
  if (bk != d.k) throw ShapeError("matmul: inner dimension mismatch");
  d.shared_b = b.ndim() == 2;
  if (!d.shared_b && b.numel() / (bk * d.n) != d.batch)
    throw ShapeError("matmul: batch dimension mismatch");
  return d;
}

void gemm_dense(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n, bool tb) {
  std::fill(c, c + m * n, 0.0f);
  if (!tb) {
    for (int64_t i = 0; i < m; ++i)
      for (int64_t kk = 0; kk < k; ++kk) {
        const float av = a[i * k + kk];
        const float* br = b + kk * n;
        float* cr = c + i * n;
        for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
      }
  } else {
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) {
        const float* ar = a + i * k;
        const float* br = b + j * k;
        float s = 0.0f;
        for (int64_t kk = 0; kk < k; ++kk) s += ar[kk] * br[kk];
        c[i * n + j] = s;
      }
  }
}

Tensor pack_from_ptr(const float* p, int64_t rows, int64_t cols) {
  Tensor t({rows, cols});
  std::memcpy(t.data.data(), p, static_cast<size_t>(rows * cols) * sizeof(float));
  return t;
}

}  // namespace

Value matmul(Tape& t, Value a, Value b, bool transpose_b, bool use_bits) {
  const MatDims d = matmul_dims(a->value, b->value, transpose_b);
  Shape os(a->value.shape.begin(), a->value.shape.end() - 1);
  os.back() = d.m;
  os.push_back(d.n);
  Tensor out(os);
  const float* ad = a->value.data.data();
  const float* bd = b->value.data.data();
  float* cd = out.data.data();
  const int64_t bstride = d.shared_b ? 0 : d.k * d.n;
  if (!use_bits) {
    for (int64_t bi = 0; bi < d.batch; ++bi)
      gemm_dense(ad + bi * d.m * d.k, bd + bi * bstride, cd + bi * d.m * d.n, d.m, d.k, d.n,
                 transpose_b);
  } else {
    // Packed route: operands must be +-1 valued; results are exact integers.
    BitMatrix bt_shared;
    if (d.shared_b) {
      BitMatrix bm = pack(pack_from_ptr(bd, transpose_b ? d.n : d.k, transpose_b ? d.k : d.n));
      bt_shared = transpose_b ? std::move(bm) : bit_transpose(bm);
    }
    for (int64_t bi = 0; bi < d.batch; ++bi) {
      BitMatrix am = pack(pack_from_ptr(ad + bi * d.m * d.k, d.m, d.k));
      const BitMatrix* bt = &bt_shared;
      BitMatrix bt_local;
      if (!d.shared_b) {
        BitMatrix bm = pack(pack_from_ptr(bd + bi * bstride, transpose_b ? d.n : d.k,
                                          transpose_b ? d.k : d.n));
        bt_local = transpose_b ? std::move(bm) : bit_transpose(bm);
        bt = &bt_local;
      }
      IntMatrix r = xnor_gemm_nt(am, *bt);
      float* dst = cd + bi * d.m * d.n;
      for (size_t i = 0; i < r.v.size(); ++i) dst[i] = static_cast<float>(r.v[i]);
    }
  }
  Value r = t.make(std::move(out), a->requires_grad || b->requires_grad);
  r->back = [a, b, r, d, transpose_b, bstride] {
    const float* go = r->grad.data.data();
    const float* ad2 = a->value.data.data();
    const float* bd2 = b->value.data.data();
    if (a->requires_grad) {
      Tensor ga(a->value.shape);
      float* gad = ga.data.data();
      for (int64_t bi = 0; bi < d.batch; ++bi) {
        const float* g = go + bi * d.m * d.n;
        const float* bm = bd2 + bi * bstride;
        float* dst = gad + bi * d.m * d.k;
        if (!transpose_b) {
          // dA[i,k] = sum_n g[i,n] * B[k,n]
          for (int64_t i = 0; i < d.m; ++i)
            for (int64_t kk = 0; kk < d.k; ++kk) {
              const float* gr = g + i * d.n;
              const float* br = bm + kk * d.n;
              float s = 0.0f;
              for (int64_t j = 0; j < d.n; ++j) s += gr[j] * br[j];
              dst[i * d.k + kk] = s;
            }
        } else {
          // B stored [N,K]: dA[i,k] = sum_n g[i,n] * B[n,k]
          for (int64_t i = 0; i < d.m; ++i) {
            float* dr = dst + i * d.k;
            std::fill(dr, dr + d.k, 0.0f);
            const float* gr = g + i * d.n;
            for (int64_t j = 0; j < d.n; ++j) {
              const float gv = gr[j];
              const float* br = bm + j * d.k;
              for (int64_t kk = 0; kk < d.k; ++kk) dr[kk] += gv * br[kk];
            }
          }
        }
      }
      Tape::accum(a, ga);
    }
    if (b->requires_grad) {
      Tensor gb(b->value.shape);
      float* gbd = gb.data.data();
      for (int64_t bi = 0; bi < d.batch; ++bi) {
        const float* g = go + bi * d.m * d.n;
        const float* am = ad2 + bi * d.m * d.k;
        float* dst = gbd + bi * bstride;  // accumulates when shared
        if (!transpose_b) {
          // dB[k,n] += sum_i A[i,k] * g[i,n]
          for (int64_t i = 0; i < d.m; ++i) {
            const float* ar = am + i * d.k;
            const float* gr = g + i * d.n;
            for (int64_t kk = 0; kk < d.k; ++kk) {
              const float av = ar[kk];
              float* dr = dst + kk * d.n;
              for (int64_t j = 0; j < d.n; ++j) dr[j] += av * gr[j];
            }
          }
        } else {
          // dB[n,k] += sum_i g[i,n] * A[i,k]
          for (int64_t i = 0; i < d.m; ++i) {
            const float* ar = am + i * d.k;
            const float* gr = g + i * d.n;
            for (int64_t j = 0; j < d.n; ++j) {
              const float gv = gr[j];
              float* dr = dst + j * d.k;
              for (int64_t kk = 0; kk < d.k; ++kk) dr[kk] += gv * ar[kk];
            }
          }
        }
      }
      Tape::accum(b, gb);
    }
  };
  return r;
}

namespace {

struct ConvDims {
  int64_t n, h, w, c, kh, kw, cg, cout, oh, ow, cpg;  // cpg = cout per group
  int stride, pad, dil, groups;
};

ConvDims conv_dims(const Tensor& x, const Tensor& wt, int stride, int pad, int dil, int groups) {
  if (x.ndim() != 4) throw ShapeError("conv2d: input must be [N,H,W,C]");
  if (wt.ndim() != 4) throw ShapeError("conv2d: weight must be [KH,KW,C/groups,Cout]");
  ConvDims d{};
  d.n = x.shape[0];
  d.h = x.shape[1];
  d.w = x.shape[2];
  d.c = x.shape[3];
  d.kh = wt.shape[0];
  d.kw = wt.shape[1];
  d.cg = wt.shape[2];
  d.cout = wt.shape[3];
  d.stride = stride;
  d.pad = pad;
  d.dil = dil;
  d.groups = groups;
  if (d.c % groups != 0 || d.cout % groups != 0)
    throw ConfigError("conv2d: channels not divisible by groups");
  if (d.cg != d.c / groups) throw ShapeError("conv2d: weight group-channel mismatch");
  d.cpg = d.cout / groups;
  d.oh = (d.h + 2 * pad - dil * (d.kh - 1) - 1) / stride + 1;
  d.ow = (d.w + 2 * pad - dil * (d.kw - 1) - 1) / stride + 1;
  if (d.oh <= 0 || d.ow <= 0) throw ShapeError("conv2d: empty output");
  return d;
}

void conv_forward_dense(const ConvDims& d, const float* x, const float* wt, float* y) {
  const int64_t ostride = d.cout;
  for (int64_t n = 0; n < d.n; ++n) {
    const float* xn = x + n * d.h * d.w * d.c;
    float* yn = y + n * d.oh * d.ow * d.cout;
    for (int64_t oh = 0; oh < d.oh; ++oh)
      for (int64_t ow = 0; ow < d.ow; ++ow) {
        float* acc = yn + (oh * d.ow + ow) * ostride;
        std::fill(acc, acc + d.cout, 0.0f);
        for (int64_t kh = 0; kh < d.kh; ++kh) {
          const int64_t ih = oh * d.stride - d.pad + kh * d.dil;
          if (ih < 0 || ih >= d.h) continue;
          for (int64_t kw = 0; kw < d.kw; ++kw) {
            const int64_t iw = ow * d.stride - d.pad + kw * d.dil;
            if (iw < 0 || iw >= d.w) continue;
            const float* xp = xn + (ih * d.w + iw) * d.c;
            const float* wp = wt + (kh * d.kw + kw) * d.cg * d.cout;
            for (int g = 0; g < d.groups; ++g) {
              const int64_t cbase = static_cast<int64_t>(g) * d.cg;
              const int64_t obase = static_cast<int64_t>(g) * d.cpg;
              for (int64_t cg = 0; cg < d.cg; ++cg) {
                const float xv = xp[cbase + cg];
                const float* wr = wp + cg * d.cout + obase;
                float* ar = acc + obase;
                for (int64_t co = 0; co < d.cpg; ++co) ar[co] += xv * wr[co];
              }
            }
          }
        }
      }
  }
}

// Packed xnor route: positions whose receptive field is fully inside the
// input go through pack + xnor_dot; boundary positions (zero-pad taps) fall
// back to the dense dot, which stays in the integer domain for +-1 inputs.
void conv_forward_bits(const ConvDims& d, const float* x, const float* wt, float* y) {
  const int64_t taps = d.kh * d.kw;
  const int64_t cols = taps * d.cg;
  // weight rows per group: row co -> [tap-major, cg-minor]
  std::vector<BitMatrix> wrows(static_cast<size_t>(d.groups));
  for (int g = 0; g < d.groups; ++g) {
    Tensor wr({d.cpg, cols});
    for (int64_t co = 0; co < d.cpg; ++co)
      for (int64_t tp = 0; tp < taps; ++tp)
        for (int64_t cg = 0; cg < d.cg; ++cg)
          wr.at2(co, tp * d.cg + cg) =
              wt[(tp * d.cg + cg) * d.cout + static_cast<int64_t>(g) * d.cpg + co];
    wrows[static_cast<size_t>(g)] = pack(wr);
  }
  std::vector<float> row(static_cast<size_t>(cols));
  Tensor rowt({1, cols});
  for (int64_t n = 0; n < d.n; ++n) {
    const float* xn = x + n * d.h * d.w * d.c;
    float* yn = y + n * d.oh * d.ow * d.cout;
    for (int64_t oh = 0; oh < d.oh; ++oh)
      for (int64_t ow = 0; ow < d.ow; ++ow) {
        float* acc = yn + (oh * d.ow + ow) * d.cout;
        for (int g = 0; g < d.groups; ++g) {
          bool padded = false;
          for (int64_t kh = 0; kh < d.kh && !padded; ++kh)
            for (int64_t kw = 0; kw < d.kw; ++kw) {
              const int64_t ih = oh * d.stride - d.pad + kh * d.dil;
              const int64_t iw = ow * d.stride - d.pad + kw * d.dil;
              const int64_t tp = kh * d.kw + kw;
              if (ih < 0 || ih >= d.h || iw < 0 || iw >= d.w) {
                std::fill(row.begin() + tp * d.cg, row.begin() + (tp + 1) * d.cg, 0.0f);
                padded = true;
                continue;
              }
              const float* xp = xn + (ih * d.w + iw) * d.c + static_cast<int64_t>(g) * d.cg;
              std::copy(xp, xp + d.cg, row.begin() + tp * d.cg);
            }
          if (padded) {
            // finish gathering remaining taps, then integer-domain dot
            for (int64_t tp = 0; tp < taps; ++tp) {
              const int64_t kh = tp / d.kw, kw = tp % d.kw;
              const int64_t ih = oh * d.stride - d.pad + kh * d.dil;
              const int64_t iw = ow * d.stride - d.pad + kw * d.dil;
              if (ih < 0 || ih >= d.h || iw < 0 || iw >= d.w) {
                std::fill(row.begin() + tp * d.cg, row.begin() + (tp + 1) * d.cg, 0.0f);
              } else {
                const float* xp = xn + (ih * d.w + iw) * d.c + static_cast<int64_t>(g) * d.cg;
                std::copy(xp, xp + d.cg, row.begin() + tp * d.cg);
              }
            }
            for (int64_t co = 0; co < d.cpg; ++co) {
              int32_t s = 0;
              for (int64_t i = 0; i < cols; ++i) {
                const float xv = row[static_cast<size_t>(i)];
                if (xv == 0.0f) continue;
                const bool wbit = wrows[static_cast<size_t>(g)].get(co, i);
                s += (xv > 0.0f) == wbit ? 1 : -1;
              }
              acc[static_cast<int64_t>(g) * d.cpg + co] = static_cast<float>(s);
            }
          } else {
            std::memcpy(rowt.data.data(), row.data(), static_cast<size_t>(cols) * sizeof(float));
            BitMatrix rb = pack(rowt);
            for (int64_t co = 0; co < d.cpg; ++co)
              acc[static_cast<int64_t>(g) * d.cpg + co] =
                  static_cast<float>(xnor_dot(rb, 0, wrows[static_cast<size_t>(g)], co));
          }
        }
      }
  }
}

}  // namespace

Value conv2d(Tape& t, Value x, Value w, int stride, int pad, int dilation, int groups,
             bool use_bits) {
  const ConvDims d = conv_dims(x->value, w->value, stride, pad, dilation, groups);
  Tensor out({d.n, d.oh, d.ow, d.cout});
  if (use_bits)
    conv_forward_bits(d, x->value.data.data(), w->value.data.data(), out.data.data());
  else
    conv_forward_dense(d, x->value.data.data(), w->value.data.data(), out.data.data());
  Value r = t.make(std::move(out), x->requires_grad || w->requires_grad);
  r->back = [x, w, r, d] {
    const float* go = r->grad.data.data();
    const float* xd = x->value.data.data();
    const float* wd = w->value.data.data();
    Tensor gx, gw;
    if (x->requires_grad) gx = Tensor(x->value.shape);
    if (w->requires_grad) gw = Tensor(w->value.shape);
    for (int64_t n = 0; n < d.n; ++n) {
      const float* xn = xd + n * d.h * d.w * d.c;
      const float* gn = go + n * d.oh * d.ow * d.cout;
      float* gxn = x->requires_grad ? gx.data.data() + n * d.h * d.w * d.c : nullptr;
      for (int64_t oh = 0; oh < d.oh; ++oh)
        for (int64_t ow = 0; ow < d.ow; ++ow) {
          const float* gp = gn + (oh * d.ow + ow) * d.cout;
          for (int64_t kh = 0; kh < d.kh; ++kh) {
            const int64_t ih = oh * d.stride - d.pad + kh * d.dil;
            if (ih < 0 || ih >= d.h) continue;
            for (int64_t kw = 0; kw < d.kw; ++kw) {
              const int64_t iw = ow * d.stride - d.pad + kw * d.dil;
              if (iw < 0 || iw >= d.w) continue;
              const int64_t tap = (kh * d.kw + kw) * d.cg * d.cout;
              const float* xp = xn + (ih * d.w + iw) * d.c;
              for (int g = 0; g < d.groups; ++g) {
                const int64_t cbase = static_cast<int64_t>(g) * d.cg;
                const int64_t obase = static_cast<int64_t>(g) * d.cpg;
                for (int64_t cg = 0; cg < d.cg; ++cg) {
                  const float* wr = wd + tap + cg * d.cout + obase;
                  const float xv = xp[cbase + cg];
                  float s = 0.0f;
                  float* gwr = w->requires_grad ? gw.data.data() + tap + cg * d.cout + obase : nullptr;
                  for (int64_t co = 0; co < d.cpg; ++co) {
                    const float g2 = gp[obase + co];
                    s += g2 * wr[co];
                    if (gwr) gwr[co] += g2 * xv;
                  }
                  if (gxn) gxn[(ih * d.w + iw) * d.c + cbase + cg] += s;
                }
              }
            }
          }
        }
    }
    if (x->requires_grad) Tape::accum(x, gx);
    if (w->requires_grad) Tape::accum(w, gw);
  };
  return r;
}

Value avg_pool2d(Tape& t, Value x, int k) {
  if (x->value.ndim() != 4) throw ShapeError("avg_pool2d: input must be [N,H,W,C]");
  const int64_t n = x->value.shape[0], h = x->value.shape[1], w = x->value.shape[2],
                c = x->value.shape[3];
  if (h % k != 0 || w % k != 0) throw ConfigError("avg_pool2d: dims not divisible by kernel");
  const int64_t oh = h / k, ow = w / k;
  Tensor out({n, oh, ow, c});
  const float inv = 1.0f / static_cast<float>(k * k);
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t i = 0; i < oh; ++i)
      for (int64_t j = 0; j < ow; ++j) {
        float* acc = &out.data[static_cast<size_t>(((ni * oh + i) * ow + j) * c)];
        for (int a = 0; a < k; ++a)
          for (int b = 0; b < k; ++b) {
            const float* src =
                &x->value.data[static_cast<size_t>(((ni * h + i * k + a) * w + j * k + b) * c)];
            for (int64_t ch = 0; ch < c; ++ch) acc[ch] += src[ch];
          }
        for (int64_t ch = 0; ch < c; ++ch) acc[ch] *= inv;
      }
  Value r = t.make(std::move(out), x->requires_grad);
  r->back = [x, r, n, h, w, c, oh, ow, k, inv] {
    Tensor g(x->value.shape);
    for (int64_t ni = 0; ni < n; ++ni)
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) {
          const float* go = &r->grad.data[static_cast<size_t>(((ni * oh + i) * ow + j) * c)];
          for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) {
              float* dst = &g.data[static_cast<size_t>(((ni * h + i * k + a) * w + j * k + b) * c)];
              for (int64_t ch = 0; ch < c; ++ch) dst[ch] += go[ch] * inv;
            }
        }
    Tape::accum(x, g);
  };
  return r;
}

Value nearest_upsample2d(Tape& t, Value x, int k) {
  if (x->value.ndim() != 4) throw ShapeError("nearest_upsample2d: input must be [N,H,W,C]");
  const int64_t n = x->value.shape[0], h = x->value.shape[1], w = x->value.shape[2],
                c = x->value.shape[3];
  const int64_t oh = h * k, ow = w * k;
  Tensor out({n, oh, ow, c});
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t i = 0; i < oh; ++i)
      for (int64_t j = 0; j < ow; ++j)
        std::memcpy(&out.data[static_cast<size_t>(((ni * oh + i) * ow + j) * c)],
                    &x->value.data[static_cast<size_t>(((ni * h + i / k) * w + j / k) * c)],
                    static_cast<size_t>(c) * sizeof(float));
  Value r = t.make(std::move(out), x->requires_grad);
  r->back = [x, r, n, h, w, c, oh, ow, k] {
    Tensor g(x->value.shape);
    for (int64_t ni = 0; ni < n; ++ni)
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) {
          const float* go = &r->grad.data[static_cast<size_t>(((ni * oh + i) * ow + j) * c)];
          float* dst = &g.data[static_cast<size_t>(((ni * h + i / k) * w + j / k) * c)];
          for (int64_t ch = 0; ch < c; ++ch) dst[ch] += go[ch];
        }
    Tape::accum(x, g);
  };
  return r;
}

Value batch_norm(Tape& t, Value x, Value gamma, Value beta, BnState& state, bool training,
                 float eps, float momentum) {
  const int64_t c = x->value.dim(-1);
  if (gamma->value.numel() != c || beta->value.numel() != c)
    throw ShapeError("batch_norm: parameter size mismatch");
  const int64_t m = x->value.numel() / c;
  if (!state.initialized) {
    state.running_mean = Tensor::zeros({c});
    state.running_var = Tensor::full({c}, 1.0f);
    state.initialized = true;
  }
  auto mean = std::make_shared<Tensor>(Shape{c});
  auto invstd = std::make_shared<Tensor>(Shape{c});
  if (training) {
    std::vector<double> mu(static_cast<size_t>(c), 0.0), var(static_cast<size_t>(c), 0.0);
    const float* xd = x->value.data.data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t ch = 0; ch < c; ++ch) mu[static_cast<size_t>(ch)] += xd[i * c + ch];
    for (int64_t ch = 0; ch < c; ++ch) mu[static_cast<size_t>(ch)] /= m;
    for (int64_t i = 0; i < m; ++i)
      for (int64_t ch = 0; ch < c; ++ch) {
        const double d = xd[i * c + ch] - mu[static_cast<size_t>(ch)];
        var[static_cast<size_t>(ch)] += d * d;
      }
    for (int64_t ch = 0; ch < c; ++ch) {
      const double v = var[static_cast<size_t>(ch)] / m;  // biased, used for normalization
      mean->data[static_cast<size_t>(ch)] = static_cast<float>(mu[static_cast<size_t>(ch)]);
      invstd->data[static_cast<size_t>(ch)] = static_cast<float>(1.0 / std::sqrt(v + eps));
      const double unbiased = m > 1 ? var[static_cast<size_t>(ch)] / (m - 1) : v;
      state.running_mean.data[static_cast<size_t>(ch)] =
          (1.0f - momentum) * state.running_mean.data[static_cast<size_t>(ch)] +
          momentum * static_cast<float>(mu[static_cast<size_t>(ch)]);
      state.running_var.data[static_cast<size_t>(ch)] =
          (1.0f - momentum) * state.running_var.data[static_cast<size_t>(ch)] +
          momentum * static_cast<float>(unbiased);
    }
  } else {
    for (int64_t ch = 0; ch < c; ++ch) {
      mean->data[static_cast<size_t>(ch)] = state.running_mean.data[static_cast<size_t>(ch)];
      invstd->data[static_cast<size_t>(ch)] =
          1.0f / std::sqrt(state.running_var.data[static_cast<size_t>(ch)] + eps);
    }
  }
  auto xhat = std::make_shared<Tensor>(x->value.shape);
  Tensor out(x->value.shape);
  {
    const float* xd = x->value.data.data();
    const float* gd = gamma->value.data.data();
    const float* bd = beta->value.data.data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t ch = 0; ch < c; ++ch) {
        const float xh = (xd[i * c + ch] - mean->data[static_cast<size_t>(ch)]) *
                         invstd->data[static_cast<size_t>(ch)];
        xhat->data[static_cast<size_t>(i * c + ch)] = xh;
        out.data[static_cast<size_t>(i * c + ch)] = gd[ch] * xh + bd[ch];
      }
  }
  Value r = t.make(std::move(out), x->requires_grad || gamma->requires_grad || beta->requires_grad);
  r->back = [x, gamma, beta, r, mean, invstd, xhat, m, c, training] {
    const float* go = r->grad.data.data();
    const float* gd = gamma->value.data.data();
    if (gamma->requires_grad) {
      Tensor gg({c});
      for (int64_t i = 0; i < m; ++i)
        for (int64_t ch = 0; ch < c; ++ch)
          gg.data[static_cast<size_t>(ch)] += go[i * c + ch] * xhat->data[static_cast<size_t>(i * c + ch)];
      Tape::accum(gamma, gg);
    }
    if (beta->requires_grad) {
      Tensor gb({c});
      for (int64_t i = 0; i < m; ++i)
        for (int64_t ch = 0; ch < c; ++ch) gb.data[static_cast<size_t>(ch)] += go[i * c + ch];
      Tape::accum(beta, gb);
    }
    if (x->requires_grad) {
      Tensor gx(x->value.shape);
      if (training) {
        std::vector<double> sum_g(static_cast<size_t>(c), 0.0), sum_gx(static_cast<size_t>(c), 0.0);
        for (int64_t i = 0; i < m; ++i)
          for (int64_t ch = 0; ch < c; ++ch) {
            const double dxh = static_cast<double>(go[i * c + ch]) * gd[ch];
            sum_g[static_cast<size_t>(ch)] += dxh;
            sum_gx[static_cast<size_t>(ch)] += dxh * xhat->data[static_cast<size_t>(i * c + ch)];
          }
        for (int64_t i = 0; i < m; ++i)
          for (int64_t ch = 0; ch < c; ++ch) {
            const double dxh = static_cast<double>(go[i * c + ch]) * gd[ch];
            gx.data[static_cast<size_t>(i * c + ch)] = static_cast<float>(
                invstd->data[static_cast<size_t>(ch)] *
                (dxh - sum_g[static_cast<size_t>(ch)] / m -
                 xhat->data[static_cast<size_t>(i * c + ch)] * sum_gx[static_cast<size_t>(ch)] / m));
          }
      } else {
        for (int64_t i = 0; i < m; ++i)
          for (int64_t ch = 0; ch < c; ++ch)
            gx.data[static_cast<size_t>(i * c + ch)] =
                go[i * c + ch] * gd[ch] * invstd->data[static_cast<size_t>(ch)];
      }
      Tape::accum(x, gx);
    }
  };
  return r;
}

Value cross_entropy(Tape& t, Value logits, const std::vector<int>& labels) {
  if (logits->value.ndim() != 2) throw ShapeError("cross_entropy: logits must be [N,K]");
  const int64_t n = logits->value.shape[0], k = logits->value.shape[1];
  if (static_cast<int64_t>(labels.size()) != n) throw ShapeError("cross_entropy: label count mismatch");
  Value ls = log_softmax(t, logits);
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= k) throw DomainError("cross_entropy: label out of range");
    loss -= ls->value.data[static_cast<size_t>(i * k + y)];
  }
  Value r = t.make(Tensor::scalar(static_cast<float>(loss / n)), logits->requires_grad);
  auto lab = std::make_shared<std::vector<int>>(labels);
  r->back = [ls, r, lab, n, k] {
    Tensor g(ls->value.shape);
    const float s = r->grad.data[0] / static_cast<float>(n);
    for (int64_t i = 0; i < n; ++i) g.data[static_cast<size_t>(i * k + (*lab)[static_cast<size_t>(i)])] = -s;
    Tape::accum(ls, g);
  };
  return r;
}

Value soft_cross_entropy(Tape& t, Value logits, const Tensor& target_probs) {
  if (!logits->value.same_shape(target_probs)) throw ShapeError("soft_cross_entropy: shape mismatch");
  const int64_t n = logits->value.shape[0], k = logits->value.shape[1];
  Value ls = log_softmax(t, logits);
  double loss = 0.0;
  for (int64_t i = 0; i < n * k; ++i)
    loss -= static_cast<double>(target_probs.data[static_cast<size_t>(i)]) *
            ls->value.data[static_cast<size_t>(i)];
  Value r = t.make(Tensor::scalar(static_cast<float>(loss / n)), logits->requires_grad);
  auto tp = std::make_shared<Tensor>(target_probs);
  r->back = [ls, r, tp, n] {
    Tensor g(ls->value.shape);
    const float s = r->grad.data[0] / static_cast<float>(n);
    for (int64_t i = 0; i < g.numel(); ++i) g.data[static_cast<size_t>(i)] = -s * tp->data[static_cast<size_t>(i)];
    Tape::accum(ls, g);
  };
  return r;
}

Value custom_grad(Tape& t, const std::vector<Value>& inputs, Tensor forward_value,
                  std::function<std::vector<Tensor>(const Tensor& upstream)> backward_fn) {
  bool rg = false;
  for (Value v : inputs) rg = rg || v->requires_grad;
  Value r = t.make(std::move(forward_value), rg);
  std::vector<Value> ins = inputs;
  r->back = [ins, r, backward_fn] {
    std::vector<Tensor> grads = backward_fn(r->grad);
    if (grads.size() != ins.size()) throw ShapeError("custom_grad: gradient count mismatch");
    for (size_t i = 0; i < ins.size(); ++i) {
      if (grads[i].data.empty()) continue;
      if (!grads[i].same_shape(ins[i]->value))
        throw ShapeError("custom_grad: backward output shape mismatch");
      Tape::accum(ins[i], grads[i]);
    }
  };
  return r;
}

float grad_check(const std::function<Value(Tape&, Value)>& f, const Tensor& x, float eps) {
  Tensor analytic;
  {
    Tape t;
    Value xv = t.leaf(x, true);
    Value y = f(t, xv);
    if (y->value.numel() != 1) throw DomainError("grad_check: f must be scalar-valued");
    t.backward(y);
    Tape::ensure_grad(xv);
    analytic = xv->grad;
  }
  auto eval = [&](const Tensor& xt) {
    Tape t;
    Value xv = t.leaf(xt, false);
    return f(t, xv)->value.data[0];
  };
  float max_err = 0.0f;
  Tensor xp = x;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const float orig = xp.data[static_cast<size_t>(i)];
    xp.data[static_cast<size_t>(i)] = orig + eps;
    const float fp = eval(xp);
    xp.data[static_cast<size_t>(i)] = orig - eps;
    const float fm = eval(xp);
    xp.data[static_cast<size_t>(i)] = orig;
    const float fd = (fp - fm) / (2.0f * eps);
    const float a = analytic.data[static_cast<size_t>(i)];
    const float err = std::fabs(a - fd) / std::max(1.0f, std::fabs(a));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace bhvit
