#include "bhvit/bitpack.hpp"

#include <bit>
#include <cmath>

namespace bhvit {

Tensor IntMatrix::to_tensor() const {
  Tensor t({rows, cols});
  for (size_t i = 0; i < v.size(); ++i) t.data[i] = static_cast<float>(v[i]);
  return t;
}

namespace {

void require_2d(const Tensor& t, const char* what) {
  if (t.ndim() != 2) throw ShapeError(std::string(what) + ": expected a 2-D tensor, got " + shape_str(t.shape));
}

}  // namespace

BitMatrix pack(const Tensor& values) {
  require_2d(values, "pack");
  BitMatrix m(values.shape[0], values.shape[1]);
  for (int64_t r = 0; r < m.rows; ++r) {
    uint64_t* w = m.row(r);
    for (int64_t c = 0; c < m.cols; ++c) {
      float v = values.at2(r, c);
      if (v == 1.0f)
        w[c >> 6] |= (uint64_t{1} << (c & 63));
      else if (v != -1.0f)
        throw DomainError("pack: element not in {-1,+1}");
    }
  }
  return m;
}

Tensor unpack(const BitMatrix& m) {
  Tensor t({m.rows, m.cols});
  for (int64_t r = 0; r < m.rows; ++r)
    for (int64_t c = 0; c < m.cols; ++c) t.at2(r, c) = m.get(r, c) ? 1.0f : -1.0f;
  return t;
}

MaskMatrix pack_mask(const Tensor& values) {
  require_2d(values, "pack_mask");
  MaskMatrix m(values.shape[0], values.shape[1]);
  for (int64_t r = 0; r < m.rows; ++r) {
    uint64_t* w = m.row(r);
    for (int64_t c = 0; c < m.cols; ++c) {
      float v = values.at2(r, c);
      if (v == 1.0f)
        w[c >> 6] |= (uint64_t{1} << (c & 63));
      else if (v != 0.0f)
        throw DomainError("pack_mask: element not in {0,1}");
    }
  }
  return m;
}

Tensor unpack_mask(const MaskMatrix& m) {
  Tensor t({m.rows, m.cols});
  for (int64_t r = 0; r < m.rows; ++r)
    for (int64_t c = 0; c < m.cols; ++c) t.at2(r, c) = m.get(r, c) ? 1.0f : 0.0f;
  return t;
}

BitMatrix bit_transpose(const BitMatrix& m) {
  BitMatrix t(m.cols, m.rows);
  for (int64_t r = 0; r < m.rows; ++r)
    for (int64_t c = 0; c < m.cols; ++c)
      if (m.get(r, c)) t.set(c, r, true);
  return t;
}

MaskMatrix mask_transpose(const MaskMatrix& m) {
  MaskMatrix t(m.cols, m.rows);
  for (int64_t r = 0; r < m.rows; ++r)
    for (int64_t c = 0; c < m.cols; ++c)
      if (m.get(r, c)) t.set(c, r, true);
  return t;
}

int32_t xnor_dot(const BitMatrix& a, int64_t row_a, const BitMatrix& b, int64_t row_b) {
  if (a.cols != b.cols) throw ShapeError("xnor_dot: length mismatch");
  const uint64_t* ra = a.row(row_a);
  const uint64_t* rb = b.row(row_b);
  const int64_t n = a.cols;
  const int64_t full = n >> 6;
  int64_t p = 0;
  for (int64_t w = 0; w < full; ++w) p += std::popcount(~(ra[w] ^ rb[w]));
  const int tail = static_cast<int>(n & 63);
  if (tail) {
    const uint64_t mask = (uint64_t{1} << tail) - 1;
    p += std::popcount(~(ra[full] ^ rb[full]) & mask);
  }
  return static_cast<int32_t>(2 * p - n);
}

IntMatrix xnor_gemm_nt(const BitMatrix& a, const BitMatrix& b_t) {
  if (a.cols != b_t.cols) throw ShapeError("xnor_gemm: inner dimension mismatch");
  IntMatrix out(a.rows, b_t.rows);
  for (int64_t i = 0; i < a.rows; ++i)
    for (int64_t j = 0; j < b_t.rows; ++j) out.at(i, j) = xnor_dot(a, i, b_t, j);
  return out;
}

IntMatrix xnor_gemm(const BitMatrix& a, const BitMatrix& b) {
  if (a.cols != b.rows) throw ShapeError("xnor_gemm: inner dimension mismatch");
  return xnor_gemm_nt(a, bit_transpose(b));
}

IntMatrix mask_aggregate(const MaskMatrix& m, const BitMatrix& v) {
  if (m.cols != v.rows) throw ShapeError("mask_aggregate: dimension mismatch");
  const BitMatrix vt = bit_transpose(v);
  IntMatrix out(m.rows, v.cols);
  const int64_t full = m.cols >> 6;
  const int tail = static_cast<int>(m.cols & 63);
  const uint64_t tail_mask = tail ? (uint64_t{1} << tail) - 1 : 0;
  for (int64_t i = 0; i < m.rows; ++i) {
    const uint64_t* rm = m.row(i);
    int64_t msum = 0;
    for (int64_t w = 0; w < full; ++w) msum += std::popcount(rm[w]);
    if (tail) msum += std::popcount(rm[full] & tail_mask);
    for (int64_t j = 0; j < v.cols; ++j) {
      const uint64_t* rv = vt.row(j);
      int64_t p = 0;
      for (int64_t w = 0; w < full; ++w) p += std::popcount(rm[w] & rv[w]);
      if (tail) p += std::popcount(rm[full] & rv[full] & tail_mask);
      out.at(i, j) = static_cast<int32_t>(2 * p - msum);
    }
  }
  return out;
}

Tensor dilated_gather(const Tensor& x, int dilation) {
  if (x.ndim() != 3) throw ShapeError("dilated_gather: expected [H,W,C]");
  if (dilation != 1 && dilation != 3 && dilation != 5)
    throw DomainError("dilated_gather: dilation must be one of {1,3,5}");
  const int64_t h = x.shape[0], w = x.shape[1], c = x.shape[2];
  Tensor out({h, w, c, 9});
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j)
      for (int t = 0; t < 9; ++t) {
        const int64_t ii = i + (t / 3 - 1) * dilation;
        const int64_t jj = j + (t % 3 - 1) * dilation;
        if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;  // zero pad
        const float* src = &x.data[static_cast<size_t>((ii * w + jj) * c)];
        float* dst = &out.data[static_cast<size_t>(((i * w + j) * c) * 9 + t)];
        for (int64_t k = 0; k < c; ++k) dst[static_cast<size_t>(k * 9)] = src[k];
      }
  return out;
}

}  // namespace bhvit
