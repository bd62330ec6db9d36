#include "crossdiff/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include "crossdiff/errors.hpp"
#include "crossdiff/text_io.hpp"

namespace crossdiff {

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; add byte swapping for this platform");

namespace {

constexpr char kMagic[4] = {'M', 'U', 'S', 'C'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

uint32_t checked_u32(size_t n, const char* what) {
  if (n > std::numeric_limits<uint32_t>::max()) {
    throw ValidationError(std::string(what) + " too large for the tensor file format");
  }
  return static_cast<uint32_t>(n);
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }
  size_t pos() const { return pos_; }

 private:
  void need(size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(source_, 0, std::string("truncated while reading ") + what + " at byte " +
                                       std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  const std::string& source_;
  size_t pos_ = 0;
};

}  // namespace

const NamedTensor& TensorFile::find(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw ValidationError("tensor '" + std::string(name) + "' not present");
}

bool TensorFile::contains(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

std::string encode_tensor_file(const TensorFile& file) {
  std::string out(kMagic, 4);
  put<uint16_t>(out, kTensorFileVersion);
  put<uint32_t>(out, checked_u32(file.manifest.size(), "manifest"));
  out += file.manifest;
  put<uint32_t>(out, checked_u32(file.tensors.size(), "tensor count"));
  for (const auto& t : file.tensors) {
    size_t n = 1;
    for (size_t d : t.shape) n *= d;
    if (n != t.data.size()) {
      throw ValidationError("tensor '" + t.name + "' shape does not match its data");
    }
    put<uint32_t>(out, checked_u32(t.name.size(), "tensor name"));
    out += t.name;
    put<uint32_t>(out, checked_u32(t.shape.size(), "rank"));
    for (size_t d : t.shape) put<uint32_t>(out, checked_u32(d, "dimension"));
    for (double v : t.data) put<float>(out, static_cast<float>(v));
  }
  return out;
}

TensorFile decode_tensor_file(std::string_view bytes, const std::string& source_name) {
  Reader in(bytes, source_name);
  if (in.take(4, "magic") != std::string_view(kMagic, 4)) {
    throw ParseError(source_name, 0, "not a tensor file (bad magic)");
  }
  const auto version = in.get<uint16_t>("version");
  if (version != kTensorFileVersion) {
    throw ParseError(source_name, 0, "unsupported tensor file version " + std::to_string(version));
  }
  TensorFile file;
  file.manifest = std::string(in.take(in.get<uint32_t>("manifest length"), "manifest"));
  const uint32_t count = in.get<uint32_t>("tensor count");
  for (uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name = std::string(in.take(in.get<uint32_t>("name length"), "tensor name"));
    const uint32_t rank = in.get<uint32_t>("rank");
    size_t n = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      t.shape.push_back(in.get<uint32_t>("dimension"));
      n *= t.shape.back();
    }
    if (n > (bytes.size() - in.pos()) / sizeof(float)) {
      throw ParseError(source_name, 0, "tensor '" + t.name + "' runs past end of file");
    }
    t.data.resize(n);
    for (size_t i = 0; i < n; ++i) t.data[i] = static_cast<double>(in.get<float>("tensor data"));
    file.tensors.push_back(std::move(t));
  }
  if (!in.done()) throw ParseError(source_name, 0, "trailing bytes after last tensor");
  return file;
}

void write_tensor_file(const TensorFile& file, const std::filesystem::path& path) {
  write_file(path, encode_tensor_file(file));
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  return decode_tensor_file(read_file(path), path.string());
}

NamedTensor table_tensor(const std::string& name, const EntityTable& table,
                         std::vector<std::string>& ids) {
  NamedTensor t;
  t.name = name;
  t.shape = {table.size(), table.dim()};
  ids.clear();
  t.data.reserve(table.size() * table.dim());
  for (const auto& [id, row] : table.rows()) {
    ids.push_back(id);
    t.data.insert(t.data.end(), row.begin(), row.end());
  }
  return t;
}

EntityTable tensor_table(const NamedTensor& tensor, const std::vector<std::string>& ids) {
  if (tensor.shape.size() != 2 || tensor.shape[0] != ids.size()) {
    throw ValidationError("tensor '" + tensor.name + "' does not match its id list");
  }
  const size_t dim = tensor.shape[1];
  EntityTable table(dim);
  for (size_t i = 0; i < ids.size(); ++i) {
    table.set(ids[i], Vec(tensor.data.begin() + static_cast<long>(i * dim),
                          tensor.data.begin() + static_cast<long>((i + 1) * dim)));
  }
  return table;
}

}  // namespace crossdiff
