#pragma once

#include <string>
#include <vector>

#include "bhvit/tensor.hpp"

namespace bhvit {

/// Labeled image set, channels-last, values scaled to [-1, 1].
struct Dataset {
  Tensor images;  // [N, S, S, 3]
  std::vector<int> labels;
  int64_t size() const { return images.numel() == 0 ? 0 : images.shape[0]; }
  int64_t side() const { return images.numel() == 0 ? 0 : images.shape[1]; }
};

/// Load CIFAR-10 binary batches (1 label byte + 3072 plane-major pixel bytes
/// per record) from a file or from every *.bin in a directory, nearest-
/// neighbor resized to `input_size`. max_samples = 0 loads everything.
Dataset load_cifar(const std::string& path, int64_t input_size, int64_t max_samples = 0);

/// Load a raw directory: `labels.txt` lines of "<file> <label>", each file
/// holding side*side*3 raw RGB bytes, row-major channels-last.
Dataset load_raw_dir(const std::string& dir, int64_t side, int64_t input_size,
                     int64_t max_samples = 0);

/// Write a deterministic CIFAR-format fixture: each class is a smooth random
/// template plus per-sample noise, separable enough for a small model to
/// learn. Used where no real download is available.
void write_synthetic_cifar(const std::string& path, int64_t n, unsigned seed);

/// Random crop with 4-pixel zero padding plus horizontal flip.
Tensor augment_batch(const Tensor& images, Rng& rng);

/// Teacher logits sidecar: header (magic, sample count, class count) then
/// row-major little-endian f32.
struct TeacherLogits {
  Tensor rows;  // [N, K]
  int64_t count() const { return rows.numel() == 0 ? 0 : rows.shape[0]; }
};
void save_teacher_logits(const std::string& path, const TeacherLogits& t);
TeacherLogits load_teacher_logits(const std::string& path);

}  // namespace bhvit
