#include "bhvit/tensor.hpp"

#include <cmath>
#include <sstream>

namespace bhvit {

bool Tensor::all_finite() const {
  for (float x : data)
    if (!std::isfinite(x)) return false;
  return true;
}

float Tensor::max_abs_diff(const Tensor& o) const {
  if (!same_shape(o)) throw ShapeError("max_abs_diff: shape mismatch");
  float m = 0.0f;
  for (size_t i = 0; i < data.size(); ++i) m = std::max(m, std::fabs(data[i] - o.data[i]));
  return m;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

void require_shape(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

}  // namespace bhvit
