#include "stylebook/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace stylebook {

namespace le {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

namespace {
void require(const std::string& in, std::size_t at, std::size_t n) {
  if (at + n > in.size()) throw FormatError("truncated file");
}
}  // namespace

std::uint16_t get_u16(const std::string& in, std::size_t at) {
  require(in, at, 2);
  return static_cast<std::uint16_t>(static_cast<unsigned char>(in[at]) |
                                    (static_cast<unsigned char>(in[at + 1]) << 8));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  require(in, at, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  require(in, at, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

float get_f32(const std::string& in, std::size_t at) { return std::bit_cast<float>(get_u32(in, at)); }

}  // namespace le

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write to " + path.string());
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void write_matrix_file(const std::filesystem::path& path, const Matrix& data, const std::vector<int>* labels) {
  if (labels != nullptr && static_cast<Eigen::Index>(labels->size()) != data.rows()) {
    throw std::invalid_argument("write_matrix_file: label count differs from row count");
  }
  std::string out;
  const std::size_t payload = static_cast<std::size_t>(data.size()) * 4;
  const std::uint32_t label_offset = labels != nullptr ? static_cast<std::uint32_t>(16 + payload) : 0;
  out.reserve(16 + payload + (labels ? labels->size() * 4 : 0));
  le::put_u32(out, kMatrixMagic);
  le::put_u32(out, static_cast<std::uint32_t>(data.rows()));
  le::put_u32(out, static_cast<std::uint32_t>(data.cols()));
  le::put_u32(out, label_offset);
  for (Eigen::Index i = 0; i < data.size(); ++i) le::put_f32(out, static_cast<float>(data.data()[i]));
  if (labels != nullptr) {
    for (int l : *labels) le::put_u32(out, static_cast<std::uint32_t>(l));
  }
  write_file_bytes(path, out);
}

MatrixFile read_matrix_file(const std::filesystem::path& path) {
  const std::string in = read_file_bytes(path);
  if (le::get_u32(in, 0) != kMatrixMagic) throw FormatError("not a matrix file: " + path.string());
  const auto rows = le::get_u32(in, 4);
  const auto cols = le::get_u32(in, 8);
  const auto label_offset = le::get_u32(in, 12);
  MatrixFile mf;
  mf.data.resize(rows, cols);
  for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * cols; ++i) {
    mf.data.data()[i] = le::get_f32(in, 16 + 4 * i);
  }
  if (label_offset != 0) {
    mf.labels.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) mf.labels[i] = static_cast<int>(le::get_u32(in, label_offset + 4 * i));
  }
  return mf;
}

const Matrix& TensorArchive::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw FormatError("archive has no tensor named " + name);
  return it->second;
}

void write_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  std::string head;
  le::put_u32(head, kCheckpointMagic);
  le::put_u32(head, kCheckpointVersion);
  le::put_u32(head, static_cast<std::uint32_t>(archive.tensors.size()));
  le::put_u32(head, static_cast<std::uint32_t>(archive.metadata.size()));
  head += archive.metadata;

  std::size_t toc_bytes = 0;
  for (const auto& [name, m] : archive.tensors) toc_bytes += 4 + name.size() + 4 + 4 + 8;
  std::uint64_t offset = head.size() + toc_bytes;
  std::string toc, data;
  for (const auto& [name, m] : archive.tensors) {
    le::put_u32(toc, static_cast<std::uint32_t>(name.size()));
    toc += name;
    le::put_u32(toc, static_cast<std::uint32_t>(m.rows()));
    le::put_u32(toc, static_cast<std::uint32_t>(m.cols()));
    le::put_u64(toc, offset);
    for (Eigen::Index i = 0; i < m.size(); ++i) le::put_f32(data, static_cast<float>(m.data()[i]));
    offset += static_cast<std::uint64_t>(m.size()) * 4;
  }
  write_file_bytes(path, head + toc + data);
}

TensorArchive read_archive(const std::filesystem::path& path) {
  const std::string in = read_file_bytes(path);
  if (le::get_u32(in, 0) != kCheckpointMagic) throw FormatError("not a checkpoint: " + path.string());
  const auto version = le::get_u32(in, 4);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto count = le::get_u32(in, 8);
  const auto meta_bytes = le::get_u32(in, 12);
  if (16 + static_cast<std::size_t>(meta_bytes) > in.size()) throw FormatError("truncated checkpoint metadata");
  TensorArchive archive;
  archive.metadata = in.substr(16, meta_bytes);
  std::size_t at = 16 + meta_bytes;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = le::get_u32(in, at);
    at += 4;
    if (at + name_len > in.size()) throw FormatError("truncated checkpoint table");
    std::string name = in.substr(at, name_len);
    at += name_len;
    const auto rows = le::get_u32(in, at);
    const auto cols = le::get_u32(in, at + 4);
    const auto offset = le::get_u64(in, at + 8);
    at += 16;
    Matrix m(rows, cols);
    for (std::size_t j = 0; j < static_cast<std::size_t>(rows) * cols; ++j) m.data()[j] = le::get_f32(in, offset + 4 * j);
    archive.tensors.emplace(std::move(name), std::move(m));
  }
  return archive;
}

void store_parameters(TensorArchive& archive, const ParameterList& params) {
  for (const Parameter* p : params) archive.tensors[p->name] = p->value;
}

void load_parameters(const TensorArchive& archive, const ParameterList& params) {
  for (Parameter* p : params) {
    const Matrix& m = archive.at(p->name);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw FormatError("checkpoint tensor " + p->name + " has shape " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()) + ", model expects " + std::to_string(p->value.rows()) + "x" +
                        std::to_string(p->value.cols()));
    }
    p->value = m;
    p->zero_grad();
  }
}

}  // namespace stylebook
