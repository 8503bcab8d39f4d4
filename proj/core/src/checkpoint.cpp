#include "invdec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "invdec/error.hpp"

namespace invdec::ckpt {
namespace {

constexpr const char* kSeedStreams[] = {"init.patch",      "init.encoder",    "init.var_embed",
                                        "init.decoder",    "init.fusion",     "init.head",
                                        "dropout.encoder", "dropout.decoder", "shuffle"};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::string take() { return std::move(out_); }

 private:
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  const char* bytes(std::size_t n, const char* what) {
    if (n > in_.size() - pos_) throw FormatError(std::string("checkpoint truncated while reading ") + what);
    const char* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32(const char* what) { return le<std::uint32_t>(what); }
  std::uint64_t u64(const char* what) { return le<std::uint64_t>(what); }
  double f64(const char* what) { return std::bit_cast<double>(le<std::uint64_t>(what)); }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    return std::string(bytes(n, what), n);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  template <typename T>
  T le(const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes(sizeof(T), what));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
    return v;
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

std::string encode(const Checkpoint& ck) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.str(ck.config_text);
  w.str(ck.norm_stats_ref);
  w.u32(static_cast<std::uint32_t>(ck.rng_seeds.size()));
  for (const auto& [name, seed] : ck.rng_seeds) {
    w.str(name);
    w.u64(seed);
  }
  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.data()) w.f64(v);
  }
  return w.take();
}

Checkpoint decode(const std::string& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.bytes(sizeof kMagic, "magic"), kMagic, sizeof kMagic) != 0) {
    throw FormatError("not an invdec checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kVersion) + ")");
  }
  Checkpoint ck;
  ck.config_text = r.str("config block");
  ck.norm_stats_ref = r.str("normalization reference");
  const std::uint32_t seeds = r.u32("seed count");
  for (std::uint32_t i = 0; i < seeds; ++i) {
    std::string name = r.str("seed name");
    ck.rng_seeds.emplace_back(std::move(name), r.u64("seed value"));
  }
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str("tensor name");
    const std::uint32_t ndim = r.u32("tensor rank");
    if (ndim == 0 || ndim > 8) throw FormatError("tensor " + name + " has invalid rank " + std::to_string(ndim));
    Shape shape(ndim);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = r.u64("tensor dims");
      if (d == 0 || d > (std::size_t{1} << 32)) throw FormatError("tensor " + name + " has an invalid extent");
      numel *= d;
    }
    if (numel > bytes.size() / 8) throw FormatError("checkpoint truncated in tensor " + name);
    std::vector<double> values(numel);
    for (auto& v : values) v = r.f64("tensor payload");
    ck.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint payload");
  return ck;
}

void save(const std::filesystem::path& path, const Checkpoint& ck) {
  const std::string bytes = encode(ck);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode(buf.str());
}

Checkpoint capture(const model::ModelParams& params, std::string config_text,
                   std::string norm_stats_ref, std::uint64_t seed) {
  Checkpoint ck;
  ck.config_text = std::move(config_text);
  ck.norm_stats_ref = std::move(norm_stats_ref);
  RngStreams rng(seed);
  ck.rng_seeds.emplace_back("master", seed);
  for (const char* name : kSeedStreams) ck.rng_seeds.emplace_back(name, rng.stream_seed(name));
  for (const auto& p : params.store) ck.tensors.emplace_back(p.name, p.value);
  return ck;
}

void restore(const Checkpoint& ck, model::ModelParams& params) {
  for (auto& p : params.store) {
    const Tensor* t = ck.find(p.name);
    if (t == nullptr) throw FormatError("checkpoint lacks parameter " + p.name);
    if (t->shape() != p.value.shape()) {
      throw FormatError("checkpoint parameter " + p.name + " has shape " + shape_str(t->shape()) +
                        ", model expects " + shape_str(p.value.shape()));
    }
    p.value = *t;
  }
}

}  // namespace invdec::ckpt
