// SPDX-License-Identifier: Apache-2.0

#include "mmfs/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <set>

#include "mmfs/errors.hpp"
#include "mmfs/feature_io.hpp"

namespace mmfs {
namespace {

constexpr char kMagic[8] = {'M', 'M', 'F', 'S', 'C', 'K', 'P', 'T'};

template <class T>
void put(std::string& out, T v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : b_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<uint32_t>();
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void get_raw(void* dst, size_t n) {
    need(n);
    std::memcpy(dst, b_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(size_t n) const {
    if (pos_ + n > b_.size()) throw DataError("checkpoint is truncated");
  }
  const std::string& b_;
  size_t pos_ = 0;
};

}  // namespace

Checkpoint snapshot(const ParameterStore& store, std::string stage, uint64_t config_hash) {
  Checkpoint c;
  c.stage = std::move(stage);
  c.config_hash = config_hash;
  for (const auto& p : store.params()) c.tensors.push_back({p->name, p->value});
  return c;
}

void restore(ParameterStore& store, const Checkpoint& ckpt) {
  std::set<std::string> seen;
  for (const auto& t : ckpt.tensors) {
    Parameter* p = store.find(t.name);
    if (!p) throw DataError("checkpoint tensor '" + t.name + "' does not belong to this model");
    if (p->value.rows() != t.value.rows() || p->value.cols() != t.value.cols()) {
      throw DataError("checkpoint tensor '" + t.name + "' is " + std::to_string(t.value.rows()) + "×" +
                      std::to_string(t.value.cols()) + " but the model expects " +
                      std::to_string(p->value.rows()) + "×" + std::to_string(p->value.cols()));
    }
    seen.insert(t.name);
  }
  for (const auto& p : store.params()) {
    if (!seen.count(p->name)) throw DataError("checkpoint is missing tensor '" + p->name + "'");
  }
  for (const auto& t : ckpt.tensors) store.find(t.name)->value = t.value;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  put<uint32_t>(out, kCheckpointVersion);
  put_string(out, ckpt.stage);
  put<uint64_t>(out, ckpt.config_hash);
  put<uint32_t>(out, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put_string(out, t.name);
    put<int64_t>(out, t.value.rows());
    put<int64_t>(out, t.value.cols());
    // Row-major so the byte layout does not depend on Eigen's storage order.
    for (Index r = 0; r < t.value.rows(); ++r) {
      for (Index c = 0; c < t.value.cols(); ++c) put<double>(out, t.value(r, c));
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  Reader r(bytes);
  char magic[sizeof(kMagic)];
  r.get_raw(magic, sizeof(magic));
  const auto version = r.get<uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  c.stage = r.get_string();
  c.config_hash = r.get<uint64_t>();
  const auto n = r.get<uint32_t>();
  for (uint32_t i = 0; i < n; ++i) {
    NamedTensor t;
    t.name = r.get_string();
    const auto rows = r.get<int64_t>();
    const auto cols = r.get<int64_t>();
    if (rows < 0 || cols < 0 || rows > (1 << 24) || cols > (1 << 24)) {
      throw DataError("checkpoint tensor '" + t.name + "' has an invalid shape");
    }
    t.value.resize(rows, cols);
    for (Index a = 0; a < rows; ++a) {
      for (Index b = 0; b < cols; ++b) t.value(a, b) = r.get<double>();
    }
    c.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw DataError("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_text_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint '" + path.string() + "' does not exist");
  return decode_checkpoint(read_text_file(path));
}

}  // namespace mmfs
