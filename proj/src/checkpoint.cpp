#include "tilenet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tilenet {

namespace {

constexpr char kMagic[4] = {'T', 'N', 'C', 'K'};

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  void values(const Tensor& t) {
    for (double v : t.values()) f64(v);
  }
  std::string take() { return std::move(out_); }
  const std::string& bytes() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& in, std::size_t end) : in_(in), end_(end) {}

  void need(std::size_t n) {
    if (pos_ + n > end_) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(in_[pos_++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Tensor values(const Shape& shape) {
    Tensor t(shape);
    need(t.size() * 8);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = f64();
    return t;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& in_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

const CheckpointGroup& Checkpoint::group(const std::string& name) const {
  for (const auto& g : groups)
    if (g.name == name) return g;
  throw CheckpointError("checkpoint has no parameter group '" + name + "'");
}

CheckpointGroup capture_group(std::string name, const ParameterList& params,
                              const AdamState* optimizer) {
  CheckpointGroup g;
  g.name = std::move(name);
  for (const Parameter* p : params) g.tensors.push_back({p->name, p->value});
  if (optimizer) g.optimizer = *optimizer;
  return g;
}

void restore_group(const CheckpointGroup& group, const ParameterList& params, AdamState* optimizer) {
  if (group.tensors.size() != params.size()) {
    throw CheckpointError("group '" + group.name + "' stores " +
                          std::to_string(group.tensors.size()) + " tensors, model has " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const NamedTensor& nt = group.tensors[i];
    Parameter& p = *params[i];
    if (nt.name != p.name) {
      throw CheckpointError("tensor '" + p.name + "' not found in group '" + group.name +
                            "' (found '" + nt.name + "')");
    }
    if (!nt.value.same_shape(p.value)) {
      throw CheckpointError("tensor '" + p.name + "' has shape " + shape_string(nt.value.shape()) +
                            " in checkpoint but " + shape_string(p.value.shape()) + " in model");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = group.tensors[i].value;
    params[i]->zero_grad();
  }
  if (optimizer) {
    if (!group.optimizer) throw CheckpointError("group '" + group.name + "' has no optimizer state");
    *optimizer = *group.optimizer;
  }
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u64(ckpt.step);
  w.str(ckpt.metadata);
  w.u32(static_cast<std::uint32_t>(ckpt.groups.size()));
  for (const CheckpointGroup& g : ckpt.groups) {
    w.str(g.name);
    w.u32(static_cast<std::uint32_t>(g.tensors.size()));
    for (const NamedTensor& t : g.tensors) {
      w.str(t.name);
      w.u32(static_cast<std::uint32_t>(t.value.rank()));
      for (auto e : t.value.shape()) w.u64(e);
      w.values(t.value);
    }
    w.u8(g.optimizer ? 1 : 0);
    if (g.optimizer) {
      const AdamState& s = *g.optimizer;
      w.f64(s.config.learning_rate);
      w.f64(s.config.beta1);
      w.f64(s.config.beta2);
      w.f64(s.config.epsilon);
      w.u64(s.step);
      if (s.first_moment.size() != s.second_moment.size() ||
          (!s.first_moment.empty() && s.first_moment.size() != g.tensors.size())) {
        throw CheckpointError("optimizer state of group '" + g.name + "' does not match its tensors");
      }
      w.u32(static_cast<std::uint32_t>(s.first_moment.size()));
      for (std::size_t i = 0; i < s.first_moment.size(); ++i) {
        if (!s.first_moment[i].same_shape(g.tensors[i].value)) {
          throw CheckpointError("optimizer moment shape mismatch for '" + g.tensors[i].name + "'");
        }
        w.values(s.first_moment[i]);
        w.values(s.second_moment[i]);
      }
    }
  }
  const std::uint64_t sum = fnv1a(w.bytes().data(), w.bytes().size());
  w.u64(sum);
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 + 4 + 8) throw CheckpointError("checkpoint truncated: header incomplete");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw CheckpointError("not a checkpoint file (bad magic)");
  const std::size_t body = bytes.size() - 8;
  {
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i)
      stored |= std::uint64_t(static_cast<unsigned char>(bytes[body + i])) << (8 * i);
    if (stored != fnv1a(bytes.data(), body)) {
      throw CheckpointError("checkpoint checksum mismatch (file truncated or corrupted)");
    }
  }
  Reader r(bytes, body);
  r.need(4);
  for (int i = 0; i < 4; ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  ckpt.step = r.u64();
  ckpt.metadata = r.str();
  const std::uint32_t groups = r.u32();
  for (std::uint32_t gi = 0; gi < groups; ++gi) {
    CheckpointGroup g;
    g.name = r.str();
    const std::uint32_t count = r.u32();
    for (std::uint32_t ti = 0; ti < count; ++ti) {
      NamedTensor t;
      t.name = r.str();
      const std::uint32_t rank = r.u32();
      Shape shape(rank);
      for (auto& e : shape) e = r.u64();
      try {
        t.value = r.values(shape);
      } catch (const ShapeError& e) {
        throw CheckpointError("tensor '" + t.name + "': " + e.what());
      }
      g.tensors.push_back(std::move(t));
    }
    if (r.u8()) {
      AdamState s;
      s.config.learning_rate = r.f64();
      s.config.beta1 = r.f64();
      s.config.beta2 = r.f64();
      s.config.epsilon = r.f64();
      s.step = r.u64();
      const std::uint32_t moments = r.u32();
      if (moments != 0 && moments != g.tensors.size()) {
        throw CheckpointError("optimizer moment count mismatch in group '" + g.name + "'");
      }
      for (std::uint32_t i = 0; i < moments; ++i) {
        s.first_moment.push_back(r.values(g.tensors[i].value.shape()));
        s.second_moment.push_back(r.values(g.tensors[i].value.shape()));
      }
      g.optimizer = std::move(s);
    }
    ckpt.groups.push_back(std::move(g));
  }
  if (r.pos() != body) throw CheckpointError("checkpoint has trailing bytes before checksum");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open '" + tmp + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace tilenet
