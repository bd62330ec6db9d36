#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "crossdiff/features.hpp"

namespace crossdiff {

/// Binary container shared by checkpoints and feature tables:
///
///   "MUSC" | u16 version | u32 manifest length | manifest (UTF-8 JSON)
///   u32 tensor count
///   per tensor: u32 name length | name | u32 ndim | u32 dims[ndim] | f32 data
///
/// All integers and floats are little-endian. Values are stored as float32, so
/// doubles that are already float32-representable round-trip exactly.
inline constexpr uint16_t kTensorFileVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<size_t> shape;
  std::vector<double> data;

  bool operator==(const NamedTensor&) const = default;
};

struct TensorFile {
  std::string manifest;
  std::vector<NamedTensor> tensors;

  const NamedTensor& find(std::string_view name) const;
  bool contains(std::string_view name) const;
};

std::string encode_tensor_file(const TensorFile& file);
/// Throws ParseError on truncation, bad magic or an unsupported version.
TensorFile decode_tensor_file(std::string_view bytes, const std::string& source_name);

void write_tensor_file(const TensorFile& file, const std::filesystem::path& path);
TensorFile read_tensor_file(const std::filesystem::path& path);

/// Packs a table as one n x dim tensor; the ids go into `ids`.
NamedTensor table_tensor(const std::string& name, const EntityTable& table,
                         std::vector<std::string>& ids);
EntityTable tensor_table(const NamedTensor& tensor, const std::vector<std::string>& ids);

}  // namespace crossdiff
