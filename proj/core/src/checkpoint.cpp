#include "spikesplit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <stdexcept>

#include "spikesplit/error.hpp"
#include "spikesplit/wire.hpp"

namespace spikesplit {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'C', 'K'};

class Writer {
 public:
  void u8(std::uint8_t v) { out.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void str(const std::string& s) {
    if (s.size() > 0xFFFF) throw ValueError("name too long for checkpoint");
    u16(static_cast<std::uint16_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> out;

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  std::string str() {
    const std::size_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ValueError("checkpoint truncated");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint capture(const Model& model) {
  Checkpoint c;
  c.arch_name = model.arch().name;
  c.arch_id = model.arch().id;
  if (const auto& bn = model.bottleneck()) {
    c.bottleneck = BottleneckPlacement{model.bottleneck_split(), bn->out_shape, bn->timesteps};
  }
  for (const Param* p : model.parameters()) c.tensors.push_back({p->name, p->value});
  return c;
}

void restore(Model& model, const Checkpoint& ckpt) {
  if (ckpt.arch_name != model.arch().name || ckpt.arch_id != model.arch().id) {
    throw ValueError("checkpoint is for " + ckpt.arch_name + " (id " + std::to_string(ckpt.arch_id) +
                     "), model is " + model.arch().name);
  }
  std::optional<BottleneckPlacement> have;
  if (const auto& bn = model.bottleneck()) {
    have = BottleneckPlacement{model.bottleneck_split(), bn->out_shape, bn->timesteps};
  }
  if (have != ckpt.bottleneck) throw ValueError("checkpoint bottleneck placement differs from the model's");
  std::map<std::string, const Tensor*> by_name;
  for (const auto& t : ckpt.tensors) {
    if (!by_name.emplace(t.name, &t.value).second) throw ValueError("duplicate tensor '" + t.name + "' in checkpoint");
  }
  const auto params = model.parameters();
  if (params.size() != by_name.size()) {
    throw ValueError("checkpoint holds " + std::to_string(by_name.size()) + " tensors, model has " +
                     std::to_string(params.size()));
  }
  for (Param* p : params) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end()) throw ValueError("checkpoint lacks '" + p->name + "'");
    if (it->second->dims() != p->value.dims()) {
      throw ShapeError("'" + p->name + "' is " + dims_to_string(it->second->dims()) + " in the checkpoint, " +
                       dims_to_string(p->value.dims()) + " in the model");
    }
    p->value = *it->second;
  }
}

Model model_from_checkpoint(const ArchitectureSpec& arch, const Checkpoint& ckpt) {
  Model m = Model::build(arch, 0);
  if (ckpt.bottleneck) {
    const auto& b = *ckpt.bottleneck;
    m.insert_bottleneck(b.split, make_bottleneck(arch.split_shape(b.split), b.out_shape, b.timesteps), 0);
  }
  restore(m, ckpt);
  return m;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt, DType dtype) {
  Writer w;
  w.out.insert(w.out.end(), std::begin(kMagic), std::end(kMagic));
  w.u32(ckpt.version);
  w.u16(ckpt.arch_id);
  w.str(ckpt.arch_name);
  w.u8(ckpt.bottleneck ? 1 : 0);
  if (ckpt.bottleneck) {
    const auto& b = *ckpt.bottleneck;
    for (std::size_t v : {b.split, b.out_shape.c, b.out_shape.h, b.out_shape.w, b.timesteps}) {
      w.u32(static_cast<std::uint32_t>(v));
    }
  }
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    w.str(t.name);
    w.u8(static_cast<std::uint8_t>(dtype));
    if (t.value.rank() > 255) throw ValueError("tensor rank too large");
    w.u8(static_cast<std::uint8_t>(t.value.rank()));
    for (std::size_t d : t.value.dims()) w.u32(static_cast<std::uint32_t>(d));
    for (Real v : t.value.values()) {
      if (dtype == DType::float64) {
        w.u64(std::bit_cast<std::uint64_t>(static_cast<double>(v)));
      } else {
        w.u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      }
    }
  }
  w.u32(crc32(w.out));
  return std::move(w.out);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw ValueError("not a checkpoint file");
  const std::size_t body = bytes.size() - 4;
  Reader tail(bytes.subspan(body));
  if (crc32(bytes.first(body)) != tail.u32()) throw ValueError("checkpoint checksum mismatch");

  Reader r(bytes.subspan(4, body - 4));
  Checkpoint c;
  c.version = r.u32();
  if (c.version != Checkpoint::kFormatVersion) {
    throw ValueError("unsupported checkpoint version " + std::to_string(c.version));
  }
  c.arch_id = r.u16();
  c.arch_name = r.str();
  if (r.u8()) {
    BottleneckPlacement b;
    b.split = r.u32();
    b.out_shape.c = r.u32();
    b.out_shape.h = r.u32();
    b.out_shape.w = r.u32();
    b.timesteps = r.u32();
    c.bottleneck = b;
  }
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedTensor t;
    t.name = r.str();
    const auto dtype = static_cast<DType>(r.u8());
    if (dtype != DType::float32 && dtype != DType::float64) throw ValueError("unknown dtype in '" + t.name + "'");
    const std::size_t rank = r.u8();
    std::vector<std::size_t> dims(rank);
    std::size_t numel = 1;
    for (auto& d : dims) {
      d = r.u32();
      numel *= d;
    }
    if (numel > bytes.size()) throw ValueError("tensor '" + t.name + "' larger than the file");
    std::vector<Real> data(numel);
    for (auto& v : data) {
      v = dtype == DType::float64 ? std::bit_cast<double>(r.u64())
                                  : static_cast<Real>(std::bit_cast<float>(r.u32()));
    }
    t.value = Tensor(std::move(dims), std::move(data));
    c.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw ValueError("trailing bytes in checkpoint");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path, DType dtype) {
  const auto bytes = encode_checkpoint(ckpt, dtype);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace spikesplit
