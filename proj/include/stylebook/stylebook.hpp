#pragma once

// Transposed dual attention.
//
// Summarization: a learned query set attends over the target's content
// embeddings (keys) and style-encoder outputs (values), producing a Q x d_s
// stylebook whose size does not depend on the target length.
//
// Retrieval: source content embeddings are the queries, the same query set
// is the keys, and the stylebook is the values, giving one style embedding
// per source frame.

#include "stylebook/layers.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace stylebook {

struct StylebookConfig {
  int num_queries = 128;
  int query_dim = 256;
  int stylebook_dim = 64;
  int attention_dim = 256;
  int attention_heads = 2;
  int mel_hidden = 256;
  int style_channels = 256;
};

/// 3-layer MLP over mel frames, concatenated with content embeddings and
/// passed through a 3-layer kernel-3 CNN with length-preserving padding.
class StyleEncoder : public Module {
 public:
  StyleEncoder() = default;
  StyleEncoder(const StylebookConfig& config, Eigen::Index mel_dim, Eigen::Index content_dim, Rng& rng);

  Var forward(Tape& tape, const Var& mel, const Var& content, Eigen::Index seq_len) const;
  void collect(ParameterList& out) override;

  Mlp mel_encoder;
  std::vector<Conv1d> convs;
};

class DualAttention : public Module {
 public:
  DualAttention() = default;
  DualAttention(const StylebookConfig& config, Eigen::Index content_dim, Rng& rng);

  /// content/style hold B blocks of seq_len rows; returns (B*Q) x d_s.
  Var summarize(Tape& tape, const Var& content, const Var& style, Eigen::Index seq_len) const;
  /// source holds B blocks of seq_len rows, stylebooks B blocks of Q rows.
  Var retrieve(Tape& tape, const Var& source_content, const Var& stylebooks, Eigen::Index seq_len,
               Matrix* weights_out = nullptr) const;
  void collect(ParameterList& out) override;

  Eigen::Index num_queries() const { return query_set.value.rows(); }

  mutable Parameter query_set;
  MultiHeadAttention summarize_attention;
  MultiHeadAttention retrieve_attention;
};

struct Stylebook {
  Matrix entries;  // Q x d_s
  std::string provenance;
};

Matrix encode_style(const StyleEncoder& encoder, const Matrix& target_mel, const Matrix& target_content_emb);

Stylebook build_stylebook(const MultiHeadAttention& summarize, const Matrix& query_set, const Matrix& target_content_emb,
                          const Matrix& target_style_seq);

Matrix retrieve_styles(const MultiHeadAttention& retrieve, const Matrix& source_content_emb, const Matrix& query_set,
                       const Stylebook& stylebook, Matrix* weights_out = nullptr);

struct AttentionProfile {
  std::vector<int> classes;           // class id of each profile row
  std::vector<int> omitted_classes;   // classes with no frames
  Matrix profiles;                    // classes.size() x Q
  Matrix similarity;                  // cosine similarity between profile rows
};

/// Mean retrieval attention (averaged over heads) per phone class.
AttentionProfile attention_profile(const MultiHeadAttention& retrieve, const Matrix& source_content_emb,
                                   const Matrix& query_set, const std::vector<int>& phone_labels, int num_classes);

Matrix cosine_similarity_matrix(const Matrix& rows);

/// Enrollment file: 24-byte header {magic "STBK", version, Q, d_s, flags,
/// provenance_bytes}, Q*d_s float32 values, then a zero-padded 64-byte
/// provenance block (longer strings are truncated). The file size depends
/// only on Q and d_s.
inline constexpr std::uint32_t kStylebookMagic = 0x4B425453;  // "STBK"
inline constexpr std::uint32_t kStylebookVersion = 1;
inline constexpr std::size_t kStylebookHeaderBytes = 24;
inline constexpr std::size_t kStylebookProvenanceBytes = 64;

void write_stylebook(const std::filesystem::path& path, const Stylebook& book);
Stylebook read_stylebook(const std::filesystem::path& path);
std::size_t stylebook_payload_bytes(const Stylebook& book);

}  // namespace stylebook
