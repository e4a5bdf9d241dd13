#include "bhvit/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "bhvit/bitpack.hpp"

namespace bhvit {

namespace {

constexpr char kMagic[4] = {'B', 'H', 'V', 'T'};
constexpr uint32_t kVersion = 1;
constexpr uint8_t kDenseF32 = 0;
constexpr uint8_t kBitpackedScaled = 1;

void write_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_i64(std::ostream& out, int64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_u8(std::ostream& out, uint8_t v) { out.write(reinterpret_cast<const char*>(&v), 1); }
void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void write_floats(std::ostream& out, const std::vector<float>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
int64_t read_i64(std::istream& in) {
  int64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
uint8_t read_u8(std::istream& in) {
  uint8_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 1);
  return v;
}
std::string read_str(std::istream& in) {
  const uint32_t len = read_u32(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  return s;
}
void read_floats(std::istream& in, std::vector<float>& v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void check_stream(const std::ios& s, const std::string& path) {
  if (!s) throw IoError("checkpoint I/O failed: " + path);
}

// Flattened [rows, cout] view of a latent weight (linear [in,out] or conv
// [kh,kw,cg,cout]); the last axis is the scaled output channel.
Tensor flat_view(const Tensor& w) {
  const int64_t cout = w.dim(-1);
  return Tensor({w.numel() / cout, cout}, w.data);
}

void open_and_check_header(std::ifstream& in, const std::string& path) {
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not a checkpoint file: " + path);
  const uint32_t version = read_u32(in);
  if (version != kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
}

}  // namespace

void save_checkpoint(const std::string& path, const BHViT& model, const AdamW* opt,
                     const CheckpointMeta& meta, bool pack_binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_str(out, model.cfg.to_json_text());
  write_u32(out, static_cast<uint32_t>(meta.epoch));
  write_str(out, meta.rng_state);

  write_u32(out, static_cast<uint32_t>(model.params.items.size()));
  for (const auto& p : model.params.items) {
    write_str(out, p.name);
    const bool packed = pack_binary && p.binary_latent;
    write_u8(out, packed ? kBitpackedScaled : kDenseF32);
    write_u8(out, static_cast<uint8_t>(p.value.ndim()));
    for (int64_t d : p.value.shape) write_i64(out, d);
    if (!packed) {
      write_floats(out, p.value.data);
    } else {
      const Tensor flat = flat_view(p.value);
      const Tensor alpha = weight_alpha(flat);
      write_floats(out, alpha.data);
      BitMatrix bits(flat.shape[0], flat.shape[1]);
      for (int64_t r = 0; r < bits.rows; ++r)
        for (int64_t c = 0; c < bits.cols; ++c)
          if (flat.at2(r, c) >= 0.0f) bits.set(r, c, true);
      out.write(reinterpret_cast<const char*>(bits.words.data()),
                static_cast<std::streamsize>(bits.words.size() * sizeof(uint64_t)));
    }
  }

  write_u8(out, opt ? 1 : 0);
  if (opt) {
    write_i64(out, opt->t);
    for (const auto& t : opt->m) write_floats(out, t.data);
    for (const auto& t : opt->v) write_floats(out, t.data);
  }
  check_stream(out, path);
}

CheckpointMeta load_checkpoint(const std::string& path, BHViT& model, AdamW* opt) {
  std::ifstream in(path, std::ios::binary);
  open_and_check_header(in, path);
  const std::string cfg_text = read_str(in);
  const ModelConfig stored = ModelConfig::from_json_text(cfg_text);
  if (stored.to_json_text() != model.cfg.to_json_text())
    throw ConfigError("checkpoint config does not match the model: " + path);
  CheckpointMeta meta;
  meta.epoch = static_cast<int>(read_u32(in));
  meta.rng_state = read_str(in);

  const uint32_t count = read_u32(in);
  if (count != model.params.items.size())
    throw IoError("checkpoint parameter count mismatch: " + path);
  for (auto& p : model.params.items) {
    const std::string name = read_str(in);
    if (name != p.name) throw IoError("checkpoint parameter order mismatch at " + name);
    const uint8_t kind = read_u8(in);
    const int ndim = read_u8(in);
    Shape shape(static_cast<size_t>(ndim));
    for (auto& d : shape) d = read_i64(in);
    if (shape != p.value.shape) throw IoError("checkpoint shape mismatch at " + name);
    if (kind == kDenseF32) {
      read_floats(in, p.value.data);
    } else if (kind == kBitpackedScaled) {
      const int64_t cout = p.value.dim(-1);
      const int64_t rows = p.value.numel() / cout;
      std::vector<float> alpha(static_cast<size_t>(cout));
      read_floats(in, alpha);
      BitMatrix bits(rows, cout);
      in.read(reinterpret_cast<char*>(bits.words.data()),
              static_cast<std::streamsize>(bits.words.size() * sizeof(uint64_t)));
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cout; ++c)
          p.value.data[static_cast<size_t>(r * cout + c)] =
              bits.get(r, c) ? alpha[static_cast<size_t>(c)] : -alpha[static_cast<size_t>(c)];
    } else {
      throw IoError("unknown tensor kind in checkpoint: " + path);
    }
  }

  const bool has_opt = read_u8(in) != 0;
  if (has_opt) {
    const int64_t t = read_i64(in);
    if (opt) {
      if (opt->m.size() != model.params.items.size())
        throw ShapeError("optimizer state size mismatch");
      opt->t = t;
      for (auto& m : opt->m) read_floats(in, m.data);
      for (auto& v : opt->v) read_floats(in, v.data);
    } else {
      // skip the optimizer payload
      int64_t floats = 0;
      for (const auto& p : model.params.items) floats += 2 * p.value.numel();
      in.seekg(floats * static_cast<int64_t>(sizeof(float)), std::ios::cur);
    }
  } else if (opt) {
    throw IoError("checkpoint has no optimizer state: " + path);
  }
  check_stream(in, path);
  return meta;
}

ModelConfig peek_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  open_and_check_header(in, path);
  const std::string cfg_text = read_str(in);
  check_stream(in, path);
  return ModelConfig::from_json_text(cfg_text);
}

}  // namespace bhvit
