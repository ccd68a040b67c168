#include "depthfuse/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "depthfuse/data_io.hpp"
#include "depthfuse/error.hpp"

namespace depthfuse {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void str(const std::string& s) {
    if (s.size() > UINT32_MAX) throw ConfigError("checkpoint string too long");
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensors(const Parameters<float>& list) {
    u32(static_cast<std::uint32_t>(list.size()));
    for (std::size_t i = 0; i < list.size(); ++i) {
      str(list.name(i));
      const Shape& s = list[i].shape();
      u32(4);
      for (std::size_t d : {s.n, s.c, s.h, s.w}) u32(static_cast<std::uint32_t>(d));
      bytes(list[i].raw(), list[i].numel() * sizeof(float));
    }
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) throw FormatError(std::string("truncated checkpoint: expected ") + what, pos_);
  }
  void bytes(void* p, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    bytes(&v, 4, what);
    return v;
  }
  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    bytes(&v, 8, what);
    return v;
  }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  Parameters<float> tensors(const char* what) {
    Parameters<float> list;
    const std::uint32_t count = u32(what);
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::size_t at = pos_;
      std::string name = str("tensor name");
      const std::size_t rank_at = pos_;
      const std::uint32_t rank = u32("tensor rank");
      if (rank != 4) throw FormatError("tensor " + name + " has rank " + std::to_string(rank) + ", expected 4", rank_at);
      Shape s;
      s.n = u32("tensor dims");
      s.c = u32("tensor dims");
      s.h = u32("tensor dims");
      s.w = u32("tensor dims");
      const std::size_t numel = s.numel();
      if (numel != 0 && (in_.size() - pos_) / sizeof(float) < numel) {
        throw FormatError("truncated checkpoint: data of tensor " + name, pos_);
      }
      std::vector<float> data(numel);
      bytes(data.data(), numel * sizeof(float), "tensor data");
      if (list.find(name)) throw FormatError("duplicate tensor name " + name, at);
      list.add(std::move(name), Tensor<float>(s, std::move(data)));
    }
    return list;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  Writer w;
  w.bytes("DFCK", 4);
  w.u32(Checkpoint::kVersion);
  w.tensors(checkpoint.params);
  w.tensors(checkpoint.optimizer.slots);
  w.u64(checkpoint.optimizer.step);
  w.u64(checkpoint.iteration);
  w.str(checkpoint.rng_state);
  w.str(checkpoint.fingerprint);
  w.str(checkpoint.config_json);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, "DFCK", 4) != 0) throw FormatError("bad checkpoint magic (expected DFCK)", 0);
  const std::uint32_t version = r.u32("format version");
  if (version != Checkpoint::kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  Checkpoint c;
  c.params = r.tensors("parameter count");
  c.optimizer.slots = r.tensors("optimizer slot count");
  c.optimizer.step = r.u64("optimizer step");
  c.iteration = r.u64("iteration counter");
  c.rng_state = r.str("rng state");
  c.fingerprint = r.str("config fingerprint");
  c.config_json = r.str("config JSON");
  if (!r.done()) throw FormatError("trailing bytes after checkpoint", r.pos());
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace depthfuse
