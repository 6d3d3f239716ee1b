#include "stylebook/stylebook.hpp"

#include "stylebook/io.hpp"

#include <cmath>
#include <stdexcept>

namespace stylebook {

StyleEncoder::StyleEncoder(const StylebookConfig& config, Eigen::Index mel_dim, Eigen::Index content_dim, Rng& rng)
    : mel_encoder("style.mel_encoder", {mel_dim, config.mel_hidden, config.mel_hidden, config.mel_hidden}, rng) {
  Eigen::Index in = config.mel_hidden + content_dim;
  for (int i = 0; i < 3; ++i) {
    convs.emplace_back("style.conv" + std::to_string(i), in, config.style_channels, 3, rng);
    in = config.style_channels;
  }
}

Var StyleEncoder::forward(Tape& tape, const Var& mel, const Var& content, Eigen::Index seq_len) const {
  if (mel.rows() != content.rows()) throw std::invalid_argument("style encoder: mel and content lengths differ");
  const Var m = mel_encoder.forward(tape, mel);
  const Var parts[] = {ops::relu(m), content};
  Var h = ops::concat_cols(parts);
  for (std::size_t i = 0; i < convs.size(); ++i) {
    h = convs[i].forward(tape, h, seq_len);
    if (i + 1 < convs.size()) h = ops::relu(h);
  }
  return h;
}

void StyleEncoder::collect(ParameterList& out) {
  mel_encoder.collect(out);
  for (auto& c : convs) c.collect(out);
}

DualAttention::DualAttention(const StylebookConfig& config, Eigen::Index content_dim, Rng& rng)
    : query_set("dual.query_set", rng.normal_matrix(config.num_queries, config.query_dim)),
      summarize_attention("dual.summarize", config.attention_heads, config.attention_dim, config.query_dim, content_dim,
                          config.style_channels, config.stylebook_dim, rng),
      retrieve_attention("dual.retrieve", config.attention_heads, config.attention_dim, content_dim, config.query_dim,
                         config.stylebook_dim, config.stylebook_dim, rng) {}

Var DualAttention::summarize(Tape& tape, const Var& content, const Var& style, Eigen::Index seq_len) const {
  if (content.rows() != style.rows()) throw std::invalid_argument("summarize: content and style lengths differ");
  if (content.rows() < 1) throw std::invalid_argument("summarize: empty target set");
  const Eigen::Index groups = content.rows() / seq_len;
  const Var qs = tape.param(query_set);
  Var queries = qs;
  if (groups > 1) {
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(groups * num_queries()));
    for (Eigen::Index g = 0; g < groups; ++g) {
      for (Eigen::Index q = 0; q < num_queries(); ++q) idx.push_back(static_cast<int>(q));
    }
    queries = ops::gather_rows(qs, idx);
  }
  return summarize_attention.forward(tape, queries, content, style, num_queries(), seq_len);
}

Var DualAttention::retrieve(Tape& tape, const Var& source_content, const Var& stylebooks, Eigen::Index seq_len,
                            Matrix* weights_out) const {
  const Eigen::Index groups = source_content.rows() / seq_len;
  if (stylebooks.rows() != groups * num_queries()) {
    throw std::invalid_argument("retrieve: stylebook rows do not match query-set size");
  }
  const Var qs = tape.param(query_set);
  Var keys = qs;
  if (groups > 1) {
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(groups * num_queries()));
    for (Eigen::Index g = 0; g < groups; ++g) {
      for (Eigen::Index q = 0; q < num_queries(); ++q) idx.push_back(static_cast<int>(q));
    }
    keys = ops::gather_rows(qs, idx);
  }
  return retrieve_attention.forward(tape, source_content, keys, stylebooks, seq_len, num_queries(), weights_out);
}

void DualAttention::collect(ParameterList& out) {
  out.push_back(&query_set);
  summarize_attention.collect(out);
  retrieve_attention.collect(out);
}

Matrix encode_style(const StyleEncoder& encoder, const Matrix& target_mel, const Matrix& target_content_emb) {
  if (target_mel.rows() != target_content_emb.rows()) {
    throw std::invalid_argument("encode_style: mel and content sequences differ in length");
  }
  if (target_mel.rows() < 1) throw std::invalid_argument("encode_style: empty sequence");
  Tape tape;
  return encoder.forward(tape, tape.constant(target_mel), tape.constant(target_content_emb), target_mel.rows()).value();
}

Stylebook build_stylebook(const MultiHeadAttention& summarize, const Matrix& query_set, const Matrix& target_content_emb,
                          const Matrix& target_style_seq) {
  if (target_content_emb.rows() < 1) throw std::invalid_argument("build_stylebook: empty target set");
  if (target_content_emb.rows() != target_style_seq.rows()) {
    throw std::invalid_argument("build_stylebook: content and style sequences are not aligned");
  }
  Stylebook book;
  book.entries = mha_forward(summarize, query_set, target_content_emb, target_style_seq);
  return book;
}

Matrix retrieve_styles(const MultiHeadAttention& retrieve, const Matrix& source_content_emb, const Matrix& query_set,
                       const Stylebook& stylebook, Matrix* weights_out) {
  if (stylebook.entries.rows() != query_set.rows()) {
    throw std::invalid_argument("retrieve_styles: stylebook and query set row counts differ");
  }
  return mha_forward(retrieve, source_content_emb, query_set, stylebook.entries, weights_out);
}

Matrix cosine_similarity_matrix(const Matrix& rows) {
  const Eigen::Index n = rows.rows();
  Matrix sim(n, n);
  const Eigen::VectorXd norms = rows.rowwise().norm();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double denom = norms(i) * norms(j);
      sim(i, j) = denom > 0 ? rows.row(i).dot(rows.row(j)) / denom : (i == j ? 1.0 : 0.0);
    }
  }
  return sim;
}

AttentionProfile attention_profile(const MultiHeadAttention& retrieve, const Matrix& source_content_emb,
                                   const Matrix& query_set, const std::vector<int>& phone_labels, int num_classes) {
  if (static_cast<Eigen::Index>(phone_labels.size()) != source_content_emb.rows()) {
    throw std::invalid_argument("attention_profile: labels not aligned with frames");
  }
  Matrix weights;
  // The values do not influence the weights; a zero stylebook suffices.
  const Matrix dummy = Matrix::Zero(query_set.rows(), retrieve.wv.value.rows());
  mha_forward(retrieve, source_content_emb, query_set, dummy, &weights);

  Matrix sums = Matrix::Zero(num_classes, query_set.rows());
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t t = 0; t < phone_labels.size(); ++t) {
    const int c = phone_labels[t];
    if (c < 0 || c >= num_classes) throw std::out_of_range("attention_profile: label out of range");
    sums.row(c) += weights.row(static_cast<Eigen::Index>(t));
    ++counts[static_cast<std::size_t>(c)];
  }
  AttentionProfile profile;
  for (int c = 0; c < num_classes; ++c) {
    (counts[static_cast<std::size_t>(c)] > 0 ? profile.classes : profile.omitted_classes).push_back(c);
  }
  profile.profiles.resize(static_cast<Eigen::Index>(profile.classes.size()), query_set.rows());
  for (std::size_t i = 0; i < profile.classes.size(); ++i) {
    const int c = profile.classes[i];
    profile.profiles.row(static_cast<Eigen::Index>(i)) =
        sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
  }
  profile.similarity = cosine_similarity_matrix(profile.profiles);
  return profile;
}

std::size_t stylebook_payload_bytes(const Stylebook& book) { return static_cast<std::size_t>(book.entries.size()) * 4; }

void write_stylebook(const std::filesystem::path& path, const Stylebook& book) {
  std::string out;
  le::put_u32(out, kStylebookMagic);
  le::put_u32(out, kStylebookVersion);
  le::put_u32(out, static_cast<std::uint32_t>(book.entries.rows()));
  le::put_u32(out, static_cast<std::uint32_t>(book.entries.cols()));
  le::put_u32(out, 0);
  const std::string prov = book.provenance.substr(0, kStylebookProvenanceBytes);
  le::put_u32(out, static_cast<std::uint32_t>(prov.size()));
  for (Eigen::Index i = 0; i < book.entries.size(); ++i) le::put_f32(out, static_cast<float>(book.entries.data()[i]));
  out += prov;
  out.append(kStylebookProvenanceBytes - prov.size(), '\0');
  write_file_bytes(path, out);
}

Stylebook read_stylebook(const std::filesystem::path& path) {
  const std::string in = read_file_bytes(path);
  if (in.size() < kStylebookHeaderBytes || le::get_u32(in, 0) != kStylebookMagic) {
    throw FormatError("not a stylebook file: " + path.string());
  }
  const auto version = le::get_u32(in, 4);
  if (version != kStylebookVersion) throw FormatError("unsupported stylebook version " + std::to_string(version));
  const auto rows = le::get_u32(in, 8);
  const auto cols = le::get_u32(in, 12);
  const auto prov = le::get_u32(in, 20);
  const std::size_t payload = static_cast<std::size_t>(rows) * cols * 4;
  if (prov > kStylebookProvenanceBytes || in.size() != kStylebookHeaderBytes + payload + kStylebookProvenanceBytes) {
    throw FormatError("stylebook file size mismatch");
  }
  Stylebook book;
  book.entries.resize(rows, cols);
  for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * cols; ++i) {
    book.entries.data()[i] = le::get_f32(in, kStylebookHeaderBytes + 4 * i);
  }
  book.provenance = in.substr(kStylebookHeaderBytes + payload, prov);
  return book;
}

}  // namespace stylebook
