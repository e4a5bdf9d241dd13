#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bhvit {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<int64_t>;
using Rng = std::mt19937;

/// Dense row-major float tensor. The single value type flowing through the
/// autograd engine; shapes are explicit, no implicit views.
struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(count(shape), 0.0f) {}
  Tensor(Shape s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != count(shape))
      throw ShapeError("tensor data length does not match shape");
  }

  static int64_t count(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d < 0) throw ShapeError("negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, float v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(float v) { return Tensor({}, {v}); }
  static Tensor randn(Shape s, Rng& rng, float stddev = 1.0f, float mean = 0.0f) {
    Tensor t(std::move(s));
    std::normal_distribution<float> d(mean, stddev);
    for (float& x : t.data) x = d(rng);
    return t;
  }
  static Tensor uniform(Shape s, Rng& rng, float lo, float hi) {
    Tensor t(std::move(s));
    std::uniform_real_distribution<float> d(lo, hi);
    for (float& x : t.data) x = d(rng);
    return t;
  }
  /// Random +-1 entries.
  static Tensor rand_sign(Shape s, Rng& rng) {
    Tensor t(std::move(s));
    std::bernoulli_distribution d(0.5);
    for (float& x : t.data) x = d(rng) ? 1.0f : -1.0f;
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const {
    if (i < 0) i += ndim();
    return shape.at(static_cast<size_t>(i));
  }

  float& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  /// 2-D element access; bounds unchecked beyond debug builds.
  float& at2(int64_t r, int64_t c) { return data[static_cast<size_t>(r * shape[1] + c)]; }
  float at2(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * shape[1] + c)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  float max_abs_diff(const Tensor& o) const;
};

std::string shape_str(const Shape& s);
void require_shape(bool cond, const std::string& what);

}  // namespace bhvit
