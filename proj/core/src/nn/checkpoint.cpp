#include "hiermesh/nn/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hiermesh/error.hpp"
#include "hiermesh/rng.hpp"

namespace hiermesh::nn {

namespace {

constexpr char kMagic[4] = {'H', 'M', 'C', 'K'};

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
    HIERMESH_CHECK(pos_ + n <= bytes_.size(), ErrorKind::kSchema, "checkpoint is truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const NamedTensor& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, checkpoint.metadata.size());
  out += checkpoint.metadata;
  put<std::uint64_t>(out, checkpoint.tensors.size());
  for (const NamedTensor& t : checkpoint.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::int64_t>(out, t.value.rows());
    put<std::int64_t>(out, t.value.cols());
    out.append(reinterpret_cast<const char*>(t.value.data()), static_cast<std::size_t>(t.value.size()) * sizeof(double));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  HIERMESH_CHECK(in.take(4) == std::string(kMagic, 4), ErrorKind::kSchema, "not a checkpoint (bad magic)");
  const auto version = in.get<std::uint32_t>();
  HIERMESH_CHECK(version == kCheckpointVersion, ErrorKind::kSchema,
                 "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.metadata = in.take(in.get<std::uint64_t>());
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = in.take(in.get<std::uint32_t>());
    const auto rows = in.get<std::int64_t>();
    const auto cols = in.get<std::int64_t>();
    HIERMESH_CHECK(rows >= 0 && cols >= 0, ErrorKind::kSchema, "negative tensor shape in checkpoint");
    t.value.resize(rows, cols);
    in.read_doubles(t.value.data(), static_cast<std::size_t>(rows * cols));
    ck.tensors.push_back(std::move(t));
  }
  HIERMESH_CHECK(in.done(), ErrorKind::kSchema, "trailing bytes in checkpoint");
  return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string bytes = serialize_checkpoint(checkpoint);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    HIERMESH_CHECK(out.good(), ErrorKind::kIo, "cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  HIERMESH_CHECK(in.good(), ErrorKind::kIo, "cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

void add_parameters(Checkpoint& checkpoint, const ParameterStore& store, const std::string& prefix) {
  for (const Parameter& p : store.all()) checkpoint.tensors.push_back({prefix + p.name, p.value});
}

void load_parameters(ParameterStore& store, const Checkpoint& checkpoint, const std::string& prefix) {
  for (Parameter& p : store.all()) {
    const Matrix* m = checkpoint.find(prefix + p.name);
    HIERMESH_CHECK(m != nullptr, ErrorKind::kSchema, "checkpoint lacks parameter '" + prefix + p.name + "'");
    HIERMESH_CHECK(m->rows() == p.value.rows() && m->cols() == p.value.cols(), ErrorKind::kShape,
                   "checkpoint shape mismatch for '" + p.name + "'");
    p.value = *m;
  }
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  HIERMESH_CHECK(in.good(), ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(fnv1a(buf.str())));
  return hex;
}

}  // namespace hiermesh::nn
