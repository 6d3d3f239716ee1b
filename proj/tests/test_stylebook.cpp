#include "stylebook/grad_check.hpp"
#include "stylebook/io.hpp"
#include "stylebook/stylebook.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <filesystem>
#include <numeric>

using namespace stylebook;
using stylebook::testing::max_abs_diff;

namespace {

StylebookConfig small_config() { return {8, 12, 6, 16, 2, 16, 16}; }

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("stylebook_test_" + name);
}

}  // namespace

TEST_CASE("encode_style preserves length and is deterministic") {
  Rng rng(1);
  const StyleEncoder enc(small_config(), 5, 7, rng);
  for (Eigen::Index T : {1, 7, 250}) {
    const Matrix mel = rng.normal_matrix(T, 5), content = rng.normal_matrix(T, 7);
    const Matrix out = encode_style(enc, mel, content);
    CHECK(out.rows() == T);
    CHECK(out.cols() == 16);
    CHECK(testing::bit_equal(out, encode_style(enc, mel, content)));
  }
  CHECK_THROWS_AS(encode_style(enc, rng.normal_matrix(4, 5), rng.normal_matrix(5, 7)), std::invalid_argument);
}

TEST_CASE("encode_style: a frame only influences its receptive field") {
  Rng rng(2);
  const StyleEncoder enc(small_config(), 5, 7, rng);
  const Eigen::Index T = 20, t = 9;
  Matrix mel = rng.normal_matrix(T, 5);
  const Matrix content = rng.normal_matrix(T, 7);
  const Matrix before = encode_style(enc, mel, content);
  mel.row(t) += rng.normal_matrix(1, 5);
  const Matrix after = encode_style(enc, mel, content);
  for (Eigen::Index r = 0; r < T; ++r) {
    const double change = (after.row(r) - before.row(r)).cwiseAbs().maxCoeff();
    if (std::abs(r - t) > 3) {
      CHECK(change == 0.0);
    }
  }
  CHECK((after.row(t) - before.row(t)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("build_stylebook: single frame, permutation, fixed size") {
  Rng rng(3);
  const DualAttention dual(small_config(), 7, rng);
  const MultiHeadAttention& mha = dual.summarize_attention;
  const Matrix& queries = dual.query_set.value;

  const Matrix one = build_stylebook(mha, queries, rng.normal_matrix(1, 7), rng.normal_matrix(1, 16)).entries;
  for (Eigen::Index r = 1; r < one.rows(); ++r) CHECK(max_abs_diff(one.row(r), one.row(0)) < 1e-12);

  const Eigen::Index T = 31;
  const Matrix content = rng.normal_matrix(T, 7), style = rng.normal_matrix(T, 16);
  std::vector<int> perm(static_cast<std::size_t>(T));
  std::iota(perm.begin(), perm.end(), 0);
  for (Eigen::Index i = T - 1; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
  Matrix pc(T, 7), ps(T, 16);
  for (Eigen::Index i = 0; i < T; ++i) {
    pc.row(i) = content.row(perm[static_cast<std::size_t>(i)]);
    ps.row(i) = style.row(perm[static_cast<std::size_t>(i)]);
  }
  CHECK(max_abs_diff(build_stylebook(mha, queries, content, style).entries,
                     build_stylebook(mha, queries, pc, ps).entries) < 1e-12);

  std::uintmax_t size = 0;
  for (Eigen::Index len : {50, 500, 5000, 15000}) {
    Stylebook book = build_stylebook(mha, queries, rng.normal_matrix(len, 7), rng.normal_matrix(len, 16));
    CHECK(book.entries.rows() == 8);
    CHECK(book.entries.cols() == 6);
    book.provenance = "target of " + std::to_string(len) + " frames";
    const auto path = temp_file("fixed.stbk");
    write_stylebook(path, book);
    if (size == 0) size = std::filesystem::file_size(path);
    CHECK(std::filesystem::file_size(path) == size);
  }
  CHECK_THROWS_AS(build_stylebook(mha, queries, Matrix(0, 7), Matrix(0, 16)), std::invalid_argument);
  CHECK_THROWS_AS(build_stylebook(mha, queries, rng.normal_matrix(3, 7), rng.normal_matrix(4, 16)), std::invalid_argument);
}

TEST_CASE("retrieve_styles: constant stylebook, lengths, row-count mismatch") {
  Rng rng(4);
  const DualAttention dual(small_config(), 7, rng);
  const MultiHeadAttention& mha = dual.retrieve_attention;
  const Matrix& queries = dual.query_set.value;
  const RowVector v = rng.normal_matrix(1, 6).row(0);
  Stylebook book{v.replicate(8, 1), "constant"};
  const Matrix expect = (v * mha.wv.value + mha.bv.value) * mha.wo.value + mha.bo.value;
  for (Eigen::Index T : {1, 100}) {
    Matrix weights;
    const Matrix out = retrieve_styles(mha, rng.normal_matrix(T, 7), queries, book, &weights);
    CHECK(out.rows() == T);
    for (Eigen::Index r = 0; r < T; ++r) {
      CHECK(max_abs_diff(out.row(r), expect) < 1e-12);
      CHECK(std::abs(weights.row(r).sum() - 1.0) < 1e-6);
    }
  }
  Stylebook wrong{rng.normal_matrix(7, 6), ""};
  CHECK_THROWS_AS(retrieve_styles(mha, rng.normal_matrix(3, 7), queries, wrong, nullptr), std::invalid_argument);
}

TEST_CASE("batched dual attention equals the single-sequence functions") {
  Rng rng(5);
  const DualAttention dual(small_config(), 7, rng);
  const Eigen::Index L = 6;
  const Matrix content = rng.normal_matrix(2 * L, 7), style = rng.normal_matrix(2 * L, 16);
  Tape tape;
  const Var books = dual.summarize(tape, tape.constant(content), tape.constant(style), L);
  const Var styles = dual.retrieve(tape, tape.constant(content), books, L);
  for (int b = 0; b < 2; ++b) {
    const Stylebook single =
        build_stylebook(dual.summarize_attention, dual.query_set.value, content.middleRows(b * L, L), style.middleRows(b * L, L));
    CHECK(max_abs_diff(books.value().middleRows(b * 8, 8), single.entries) < 1e-12);
    const Matrix r = retrieve_styles(dual.retrieve_attention, content.middleRows(b * L, L), dual.query_set.value, single);
    CHECK(max_abs_diff(styles.value().middleRows(b * L, L), r) < 1e-12);
  }
}

TEST_CASE("attention_profile: rows sum to one, single class, omitted classes") {
  Rng rng(6);
  const DualAttention dual(small_config(), 7, rng);
  const Matrix src = rng.normal_matrix(40, 7);
  std::vector<int> labels(40);
  for (int i = 0; i < 40; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
  const AttentionProfile p = attention_profile(dual.retrieve_attention, src, dual.query_set.value, labels, 5);
  CHECK(p.classes == std::vector<int>{0, 1, 2});
  CHECK(p.omitted_classes == std::vector<int>{3, 4});
  for (Eigen::Index r = 0; r < p.profiles.rows(); ++r) CHECK(std::abs(p.profiles.row(r).sum() - 1.0) < 1e-5);
  CHECK(max_abs_diff(p.similarity, p.similarity.transpose()) < 1e-12);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(std::abs(p.similarity(i, i) - 1.0) < 1e-6);

  const std::vector<int> same(40, 2);
  const AttentionProfile one = attention_profile(dual.retrieve_attention, src, dual.query_set.value, same, 5);
  REQUIRE(one.similarity.rows() == 1);
  CHECK(one.similarity(0, 0) == doctest::Approx(1.0));
  labels[0] = 5;
  CHECK_THROWS(attention_profile(dual.retrieve_attention, src, dual.query_set.value, labels, 5));
}

TEST_CASE("stylebook file round trip and rejection of bad files") {
  Rng rng(7);
  Stylebook book{rng.normal_matrix(128, 64), "speaker 3 / 3 utterances"};
  const auto path = temp_file("round.stbk");
  write_stylebook(path, book);
  CHECK(stylebook_payload_bytes(book) == 32768);
  CHECK(std::filesystem::file_size(path) == kStylebookHeaderBytes + 32768 + kStylebookProvenanceBytes);
  const Stylebook back = read_stylebook(path);
  CHECK(back.provenance == book.provenance);
  CHECK(max_abs_diff(back.entries, book.entries.cast<float>().cast<double>()) == 0.0);

  std::string bytes = read_file_bytes(path);
  std::string bad = bytes;
  bad[0] = 'X';
  write_file_bytes(path, bad);
  CHECK_THROWS_AS(read_stylebook(path), FormatError);
  bad = bytes;
  bad[4] = 9;
  write_file_bytes(path, bad);
  CHECK_THROWS_AS(read_stylebook(path), FormatError);
  write_file_bytes(path, bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_AS(read_stylebook(path), FormatError);
}

TEST_CASE("grad_check: style encoder and both attention passes") {
  Rng rng(8);
  StylebookConfig cfg{4, 6, 3, 8, 2, 6, 5};
  StyleEncoder enc(cfg, 3, 4, rng);
  DualAttention dual(cfg, 4, rng);
  const Eigen::Index L = 5;
  Parameter mel("mel", rng.normal_matrix(2 * L, 3));
  Parameter content("content", rng.normal_matrix(2 * L, 4));
  const Matrix target = rng.normal_matrix(2 * L, 3);
  ParameterList params = enc.parameters();
  for (Parameter* p : dual.parameters()) params.push_back(p);
  oracles::jitter_biases(params, rng);
  params.push_back(&mel);
  params.push_back(&content);
  const auto report = grad_check(
      [&](Tape& t) {
        const Var c = t.param(content);
        const Var style = enc.forward(t, t.param(mel), c, L);
        const Var books = dual.summarize(t, c, style, L);
        return ops::mse(dual.retrieve(t, c, books, L), t.constant(target));
      },
      params, 1e-5);
  CHECK(report.max_relative_error < 1e-4);
  CHECK(report.zero_gradient.empty());
}
