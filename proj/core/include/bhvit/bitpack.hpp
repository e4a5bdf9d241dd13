#pragma once

#include <cstdint>
#include <vector>

#include "bhvit/tensor.hpp"

namespace bhvit {

/// Integer result matrix of the bit kernels.
struct IntMatrix {
  int64_t rows = 0, cols = 0;
  std::vector<int32_t> v;
  IntMatrix() = default;
  IntMatrix(int64_t r, int64_t c) : rows(r), cols(c), v(static_cast<size_t>(r * c), 0) {}
  int32_t& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
  int32_t at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)]; }
  Tensor to_tensor() const;
};

/// Bit-packed +-1 matrix. Bit 1 encodes +1, bit 0 encodes -1. Storage is
/// row-major 64-bit words, LSB-first within a word, padding bits zero —
/// the same layout the checkpoint format persists.
struct BitMatrix {
  int64_t rows = 0, cols = 0;
  int64_t words_per_row = 0;
  std::vector<uint64_t> words;

  BitMatrix() = default;
  BitMatrix(int64_t r, int64_t c)
      : rows(r), cols(c), words_per_row((c + 63) / 64),
        words(static_cast<size_t>(r * ((c + 63) / 64)), 0) {}

  const uint64_t* row(int64_t r) const { return words.data() + r * words_per_row; }
  uint64_t* row(int64_t r) { return words.data() + r * words_per_row; }

  bool get(int64_t r, int64_t c) const { return (row(r)[c >> 6] >> (c & 63)) & 1u; }
  void set(int64_t r, int64_t c, bool bit) {
    uint64_t& w = row(r)[c >> 6];
    if (bit)
      w |= (uint64_t{1} << (c & 63));
    else
      w &= ~(uint64_t{1} << (c & 63));
  }
};

/// {0,1} masks share the packed layout; bit 1 encodes value 1.
struct MaskMatrix : BitMatrix {
  MaskMatrix() = default;
  MaskMatrix(int64_t r, int64_t c) : BitMatrix(r, c) {}
};

/// Pack a +-1 matrix. Throws DomainError on any entry outside {-1,+1}.
BitMatrix pack(const Tensor& values);
Tensor unpack(const BitMatrix& m);

/// Pack a {0,1} matrix.
MaskMatrix pack_mask(const Tensor& values);
Tensor unpack_mask(const MaskMatrix& m);

BitMatrix bit_transpose(const BitMatrix& m);
MaskMatrix mask_transpose(const MaskMatrix& m);

/// 2p - n over logical bits of two packed rows of equal length n.
int32_t xnor_dot(const BitMatrix& a, int64_t row_a, const BitMatrix& b, int64_t row_b);

/// A [m x k] times B [k x p] over +-1 semantics; bit-exact match with the
/// dense float product of the unpacked operands.
IntMatrix xnor_gemm(const BitMatrix& a, const BitMatrix& b);
/// Same, with the right operand already transposed to [p x k].
IntMatrix xnor_gemm_nt(const BitMatrix& a, const BitMatrix& b_t);

/// Sum of selected +-1 rows of V per mask row:
/// out(i,j) = sum over l with M(i,l)=1 of V(l,j).
IntMatrix mask_aggregate(const MaskMatrix& m, const BitMatrix& v);

/// Gather the 9 taps of a 3x3 kernel with the given dilation at every
/// spatial position of x [H x W x C], zero outside bounds. Output
/// [H x W x C x 9], tap index row-major over the kernel.
Tensor dilated_gather(const Tensor& x, int dilation);

}  // namespace bhvit
