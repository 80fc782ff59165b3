#include "medqc/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "medqc/error.hpp"
#include "medqc/io.hpp"

namespace medqc {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void read_doubles(double* dst, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw InputError("checkpoint is truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const std::string& metadata, const TensorStore& tensors) {
  std::string out;
  out.reserve(64 + metadata.size() + tensors.total_size() * sizeof(double));
  out.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, metadata.size());
  out += metadata;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.tensor_count()));
  for (std::size_t i = 0; i < tensors.tensor_count(); ++i) {
    const auto& spec = tensors.spec(i);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.name.size()));
    out += spec.name;
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, spec.rows);
    put<std::uint64_t>(out, spec.cols);
    out.append(reinterpret_cast<const char*>(tensors.values().data() + spec.offset),
               spec.size() * sizeof(double));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  const std::string magic = r.take(sizeof(kCheckpointMagic));
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw InputError("not a checkpoint file (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.metadata = r.take(r.get<std::uint64_t>());
  const auto count = r.get<std::uint32_t>();
  std::vector<TensorSpec> specs;
  std::vector<std::pair<std::size_t, std::vector<double>>> payloads;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorSpec spec;
    spec.name = r.take(r.get<std::uint32_t>());
    const auto ndim = r.get<std::uint32_t>();
    if (ndim != 2) throw InputError("tensor '" + spec.name + "' must be 2-dimensional");
    spec.rows = r.get<std::uint64_t>();
    spec.cols = r.get<std::uint64_t>();
    std::vector<double> data(spec.size());
    r.read_doubles(data.data(), data.size());
    specs.push_back(spec);
    payloads.emplace_back(i, std::move(data));
  }
  if (!r.done()) throw InputError("trailing bytes after the last checkpoint tensor");
  ck.tensors = TensorStore(std::move(specs));
  for (auto& [i, data] : payloads) {
    std::copy(data.begin(), data.end(), ck.tensors.values().begin() +
                                            static_cast<std::ptrdiff_t>(ck.tensors.spec(i).offset));
  }
  return ck;
}

void save_checkpoint(const std::string& path, const std::string& metadata, const TensorStore& tensors) {
  io::write_file(path, serialize_checkpoint(metadata, tensors));
}

Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(io::read_file(path)); }

}  // namespace medqc
