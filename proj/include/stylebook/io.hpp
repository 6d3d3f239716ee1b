#pragma once

// Binary file formats. All integers and floats are little-endian; matrices
// are stored row-major as float32.

#include "stylebook/autodiff.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace stylebook {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix file: 16-byte header {magic "SBMF", rows, cols, label_offset}
/// followed by rows*cols float32 values and, when label_offset != 0, rows
/// int32 labels starting at that byte offset.
inline constexpr std::uint32_t kMatrixMagic = 0x464D4253;  // "SBMF"

struct MatrixFile {
  Matrix data;
  std::vector<int> labels;  // empty when the file has no label block
};

void write_matrix_file(const std::filesystem::path& path, const Matrix& data, const std::vector<int>* labels = nullptr);
MatrixFile read_matrix_file(const std::filesystem::path& path);

/// Named-tensor container used for checkpoints.
///
///   u32 magic "SBCK", u32 version, u32 tensor_count, u32 metadata_bytes
///   metadata (UTF-8, usually JSON)
///   tensor_count x { u32 name_bytes, name, u32 rows, u32 cols, u64 offset }
///   float32 payloads at the recorded absolute offsets
inline constexpr std::uint32_t kCheckpointMagic = 0x4B434253;  // "SBCK"
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorArchive {
  std::string metadata;
  std::map<std::string, Matrix> tensors;

  const Matrix& at(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive read_archive(const std::filesystem::path& path);

/// Copies parameter values into the archive by name.
void store_parameters(TensorArchive& archive, const ParameterList& params);
/// Loads parameter values by name; shapes must match exactly.
void load_parameters(const TensorArchive& archive, const ParameterList& params);

namespace le {
void put_u16(std::string& out, std::uint16_t v);
void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
void put_f32(std::string& out, float v);
std::uint16_t get_u16(const std::string& in, std::size_t at);
std::uint32_t get_u32(const std::string& in, std::size_t at);
std::uint64_t get_u64(const std::string& in, std::size_t at);
float get_f32(const std::string& in, std::size_t at);
}  // namespace le

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::string& bytes);

/// FNV-1a 64-bit, used for determinism checks.
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace stylebook
