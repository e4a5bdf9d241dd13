#include "bhvit/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace bhvit {

namespace fs = std::filesystem;

namespace {

constexpr int64_t kCifarSide = 32;
constexpr int64_t kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;

float pixel_to_unit(uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

// nearest-neighbor resize of one [side,side,3] image into dst [out,out,3]
void resize_nearest(const float* src, int64_t side, float* dst, int64_t out) {
  for (int64_t i = 0; i < out; ++i) {
    const int64_t si = i * side / out;
    for (int64_t j = 0; j < out; ++j) {
      const int64_t sj = j * side / out;
      std::memcpy(dst + (i * out + j) * 3, src + (si * side + sj) * 3, 3 * sizeof(float));
    }
  }
}

std::vector<std::string> cifar_files(const std::string& path) {
  if (!fs::exists(path)) throw IoError("dataset path does not exist: " + path);
  if (!fs::is_directory(path)) return {path};
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(path))
    if (e.path().extension() == ".bin") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .bin batches found in " + path);
  return files;
}

}  // namespace

Dataset load_cifar(const std::string& path, int64_t input_size, int64_t max_samples) {
  const auto files = cifar_files(path);
  std::vector<uint8_t> records;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw IoError("cannot open " + f);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
    if (buf.size() % kCifarRecord != 0)
      throw IoError("file size of " + f + " is not a multiple of the record size");
    records.insert(records.end(), buf.begin(), buf.end());
    if (max_samples > 0 && static_cast<int64_t>(records.size() / kCifarRecord) >= max_samples)
      break;
  }
  int64_t n = static_cast<int64_t>(records.size()) / kCifarRecord;
  if (max_samples > 0) n = std::min(n, max_samples);
  Dataset d;
  d.images = Tensor({n, input_size, input_size, 3});
  d.labels.resize(static_cast<size_t>(n));
  std::vector<float> tmp(static_cast<size_t>(kCifarSide * kCifarSide * 3));
  for (int64_t s = 0; s < n; ++s) {
    const uint8_t* rec = records.data() + s * kCifarRecord;
    const int label = rec[0];
    if (label < 0 || label > 9) throw IoError("label out of range in CIFAR record");
    d.labels[static_cast<size_t>(s)] = label;
    // plane-major (R,G,B) to channels-last
    for (int64_t p = 0; p < kCifarSide * kCifarSide; ++p)
      for (int c = 0; c < 3; ++c)
        tmp[static_cast<size_t>(p * 3 + c)] =
            pixel_to_unit(rec[1 + c * kCifarSide * kCifarSide + p]);
    resize_nearest(tmp.data(), kCifarSide,
                   d.images.data.data() + s * input_size * input_size * 3, input_size);
  }
  return d;
}

Dataset load_raw_dir(const std::string& dir, int64_t side, int64_t input_size,
                     int64_t max_samples) {
  const fs::path root(dir);
  std::ifstream manifest(root / "labels.txt");
  if (!manifest) throw IoError("cannot open " + (root / "labels.txt").string());
  std::vector<std::pair<std::string, int>> entries;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string file;
    int label;
    if (!(ss >> file >> label)) throw IoError("malformed manifest line: " + line);
    entries.emplace_back(file, label);
    if (max_samples > 0 && static_cast<int64_t>(entries.size()) >= max_samples) break;
  }
  const int64_t n = static_cast<int64_t>(entries.size());
  Dataset d;
  d.images = Tensor({n, input_size, input_size, 3});
  d.labels.resize(static_cast<size_t>(n));
  std::vector<uint8_t> raw(static_cast<size_t>(side * side * 3));
  std::vector<float> tmp(raw.size());
  for (int64_t s = 0; s < n; ++s) {
    const auto path = root / entries[static_cast<size_t>(s)].first;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
      throw IoError("short read on " + path.string());
    for (size_t i = 0; i < raw.size(); ++i) tmp[i] = pixel_to_unit(raw[i]);
    resize_nearest(tmp.data(), side, d.images.data.data() + s * input_size * input_size * 3,
                   input_size);
    d.labels[static_cast<size_t>(s)] = entries[static_cast<size_t>(s)].second;
  }
  return d;
}

void write_synthetic_cifar(const std::string& path, int64_t n, unsigned seed) {
  Rng rng(seed);
  // one smooth template per class: coarse 4x4 RGB grid, bilinearly upsampled
  constexpr int kClasses = 10, kGrid = 4;
  std::vector<std::array<float, kGrid * kGrid * 3>> grids(kClasses);
  std::uniform_real_distribution<float> level(30.0f, 225.0f);
  for (auto& g : grids)
    for (auto& v : g) v = level(rng);
  auto sample_template = [&](int cls, float y, float x, int ch) {
    const float gy = y * (kGrid - 1) / (kCifarSide - 1);
    const float gx = x * (kGrid - 1) / (kCifarSide - 1);
    const int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
    const int y1 = std::min(y0 + 1, kGrid - 1), x1 = std::min(x0 + 1, kGrid - 1);
    const float fy = gy - y0, fx = gx - x0;
    const auto& g = grids[static_cast<size_t>(cls)];
    auto at = [&](int yy, int xx) { return g[static_cast<size_t>((yy * kGrid + xx) * 3 + ch)]; };
    return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
           fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  std::uniform_real_distribution<float> noise(-12.0f, 12.0f);
  std::uniform_int_distribution<int> jitter(-2, 2);
  std::vector<uint8_t> rec(static_cast<size_t>(kCifarRecord));
  for (int64_t s = 0; s < n; ++s) {
    const int cls = static_cast<int>(s % kClasses);
    rec[0] = static_cast<uint8_t>(cls);
    const int dy = jitter(rng), dx = jitter(rng);
    for (int ch = 0; ch < 3; ++ch)
      for (int64_t y = 0; y < kCifarSide; ++y)
        for (int64_t x = 0; x < kCifarSide; ++x) {
          const float sy = std::clamp(static_cast<float>(y + dy), 0.0f, kCifarSide - 1.0f);
          const float sx = std::clamp(static_cast<float>(x + dx), 0.0f, kCifarSide - 1.0f);
          const float v = sample_template(cls, sy, sx, ch) + noise(rng);
          rec[static_cast<size_t>(1 + ch * kCifarSide * kCifarSide + y * kCifarSide + x)] =
              static_cast<uint8_t>(std::clamp(v, 0.0f, 255.0f));
        }
    out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  }
  if (!out) throw IoError("write failed: " + path);
}

Tensor augment_batch(const Tensor& images, Rng& rng) {
  if (images.ndim() != 4) throw ShapeError("augment_batch: expected [N,S,S,3]");
  const int64_t n = images.shape[0], s = images.shape[1], c = images.shape[3];
  constexpr int64_t kPad = 4;
  Tensor out(images.shape);
  std::uniform_int_distribution<int> off(0, static_cast<int>(2 * kPad));
  std::bernoulli_distribution coin(0.5);
  for (int64_t i = 0; i < n; ++i) {
    const bool flip = coin(rng);
    const int64_t dy = off(rng) - kPad, dx = off(rng) - kPad;
    const float* src = images.data.data() + i * s * s * c;
    float* dst = out.data.data() + i * s * s * c;
    for (int64_t y = 0; y < s; ++y)
      for (int64_t x = 0; x < s; ++x) {
        const int64_t sy = y + dy;
        int64_t sx = x + dx;
        if (flip) sx = s - 1 - sx;
        float* d = dst + (y * s + x) * c;
        if (sy < 0 || sy >= s || sx < 0 || sx >= s)
          std::fill(d, d + c, 0.0f);
        else
          std::memcpy(d, src + (sy * s + sx) * c, static_cast<size_t>(c) * sizeof(float));
      }
  }
  return out;
}

void save_teacher_logits(const std::string& path, const TeacherLogits& t) {
  if (t.rows.ndim() != 2) throw ShapeError("teacher logits must be [N,K]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const uint32_t n = static_cast<uint32_t>(t.rows.shape[0]);
  const uint32_t k = static_cast<uint32_t>(t.rows.shape[1]);
  out.write("BHTL", 4);
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&k), 4);
  out.write(reinterpret_cast<const char*>(t.rows.data.data()),
            static_cast<std::streamsize>(t.rows.data.size() * sizeof(float)));
  if (!out) throw IoError("write failed: " + path);
}

TeacherLogits load_teacher_logits(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  uint32_t n = 0, k = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&n), 4);
  in.read(reinterpret_cast<char*>(&k), 4);
  if (!in || std::memcmp(magic, "BHTL", 4) != 0)
    throw IoError("not a teacher-logits file: " + path);
  TeacherLogits t;
  t.rows = Tensor({static_cast<int64_t>(n), static_cast<int64_t>(k)});
  in.read(reinterpret_cast<char*>(t.rows.data.data()),
          static_cast<std::streamsize>(t.rows.data.size() * sizeof(float)));
  if (!in) throw IoError("truncated teacher-logits file: " + path);
  return t;
}

}  // namespace bhvit
