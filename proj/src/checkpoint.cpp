// SPDX-License-Identifier: Apache-2.0
#include <cstring>
#include <sstream>

#include "hierpath/cnnmodel.hpp"
#include "hierpath/digest.hpp"
#include "hierpath/error.hpp"
#include "hierpath/io.hpp"

// Layout (all integers little-endian):
//   magic "HPCNNCKP" | u32 version | u8 kind (0 cnn, 1 constant) | u64 vocab digest
//   u32 class count, then u32 length + bytes per code
//   u64 length + metadata/config text block (key=value lines)
//   u32 parameter count, then per parameter:
//     u32 name length + name | u32 rank | u64 dims... | f64 value[] | f64 acc_grad_sq[] | f64 acc_update_sq[]
//   u64 FNV-1a of every preceding byte

namespace hierpath {

namespace {

constexpr char kMagic[8] = {'H', 'P', 'C', 'N', 'N', 'C', 'K', 'P'};

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, sizeof v);
    u64(v);
  }
  void str32(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::string& buffer() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::string_view bytes(std::size_t n) {
    if (n > data_.size() - pos_) throw CheckpointCorrupt("checkpoint is truncated at byte " + std::to_string(pos_));
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
  std::uint32_t u32() {
    auto b = bytes(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
    return v;
  }
  std::uint64_t u64() {
    auto b = bytes(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
    return v;
  }
  double f64() {
    const auto v = u64();
    double d;
    std::memcpy(&d, &v, sizeof d);
    return d;
  }
  std::string str32() {
    const auto n = u32();
    return std::string(bytes(n));
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

void write_array(Writer& w, const nn::NdArray& a) {
  for (double v : a.values) w.f64(v);
}

nn::NdArray read_array(Reader& r, const std::vector<std::size_t>& shape, std::size_t count) {
  if (count > r.remaining() / 8) throw CheckpointCorrupt("checkpoint is truncated inside a parameter block");
  nn::NdArray a(shape);
  for (auto& v : a.values) v = r.f64();
  return a;
}

std::string meta_text(const Checkpoint& c) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", c.meta.best_metric);
  std::string text = "best_epoch=" + std::to_string(c.meta.best_epoch) + "\nbest_metric=" + buf +
                     "\ntrain_seed=" + std::to_string(c.meta.seed) + "\n";
  if (c.model) text += "vocab_size=" + std::to_string(c.model->vocab_size()) + "\n" + c.model->config().to_text();
  return text;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes(std::string_view(kMagic, sizeof kMagic));
  w.u32(kCheckpointVersion);
  w.u8(c.model ? 0 : 1);
  w.u64(c.vocab_digest);
  w.u32(static_cast<std::uint32_t>(c.class_codes.size()));
  for (const auto& code : c.class_codes) w.str32(code);
  const auto text = meta_text(c);
  w.u64(text.size());
  w.bytes(text);
  if (c.model) {
    const auto params = c.model->parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto* p : params) {
      w.str32(p->name);
      w.u32(static_cast<std::uint32_t>(p->value.rank()));
      for (auto d : p->value.shape) w.u64(d);
      write_array(w, p->value);
      write_array(w, p->acc_grad_sq);
      write_array(w, p->acc_update_sq);
    }
  } else {
    w.u32(0);
  }
  w.u64(fnv1a(w.buffer()));
  return std::move(w.buffer());
}

Checkpoint parse_checkpoint(std::string_view bytes, std::optional<std::uint64_t> expected_vocab_digest) {
  Reader r(bytes);
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw CheckpointCorrupt("not a checkpoint file (bad magic)");
  r.bytes(sizeof kMagic);
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint format version " + std::to_string(version) +
                                 " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  if (bytes.size() < 8 + 8) throw CheckpointCorrupt("checkpoint is truncated");
  const auto body = bytes.substr(0, bytes.size() - 8);
  Reader trailer(bytes.substr(bytes.size() - 8));
  if (trailer.u64() != fnv1a(body)) throw CheckpointCorrupt("checkpoint checksum mismatch (truncated or corrupt file)");

  Checkpoint c;
  const auto kind = r.u8();
  if (kind > 1) throw CheckpointCorrupt("unknown checkpoint kind " + std::to_string(kind));
  c.vocab_digest = r.u64();
  if (expected_vocab_digest && *expected_vocab_digest != c.vocab_digest)
    throw DigestMismatch("checkpoint was trained with vocabulary " + digest_hex(c.vocab_digest) +
                         " but vocabulary " + digest_hex(*expected_vocab_digest) + " was supplied");
  const auto num_codes = r.u32();
  if (num_codes > r.remaining()) throw CheckpointCorrupt("class map length is implausible");
  for (std::uint32_t i = 0; i < num_codes; ++i) c.class_codes.push_back(r.str32());
  const auto text_len = r.u64();
  if (text_len > r.remaining()) throw CheckpointCorrupt("metadata block is truncated");
  const std::string text(r.bytes(text_len));

  std::string config_text;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 1);
    if (key == "best_epoch") c.meta.best_epoch = std::stoll(value);
    else if (key == "best_metric") c.meta.best_metric = std::stod(value);
    else if (key == "train_seed") c.meta.seed = std::stoull(value);
    else if (key == "vocab_size") continue;
    else config_text += line + "\n";
  }

  const auto num_params = r.u32();
  if (kind == 1) {
    if (num_params != 0 || c.class_codes.size() != 1)
      throw CheckpointCorrupt("constant checkpoint must have one class and no parameters");
    return c;
  }
  std::vector<nn::Parameter> params;
  for (std::uint32_t i = 0; i < num_params; ++i) {
    auto name = r.str32();
    const auto rank = r.u32();
    if (rank == 0 || rank > 4) throw CheckpointCorrupt("parameter " + name + " has invalid rank");
    std::vector<std::size_t> shape;
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(r.u64());
      count *= shape.back();
    }
    nn::Parameter p(name, read_array(r, shape, count));
    p.acc_grad_sq = read_array(r, shape, count);
    p.acc_update_sq = read_array(r, shape, count);
    params.push_back(std::move(p));
  }
  if (r.remaining() != 8) throw CheckpointCorrupt("unexpected trailing bytes in checkpoint");
  c.model = assemble_model(CnnConfig::parse(config_text), std::move(params));
  if (c.class_codes.size() != c.model->config().num_classes)
    throw CheckpointCorrupt("class map size does not match the model's output width");
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_vocab_digest) {
  return parse_checkpoint(read_file(path), expected_vocab_digest);
}

}  // namespace hierpath
