#include "stylebook/content.hpp"
#include "stylebook/synth_corpus.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>

using namespace stylebook;
using stylebook::testing::max_abs_diff;

TEST_CASE("k-means with K equal to the number of distinct frames") {
  Rng rng(1);
  const Matrix distinct = rng.normal_matrix(5, 3);
  Matrix data(20, 3);
  for (int i = 0; i < 20; ++i) data.row(i) = distinct.row(i % 5);
  const KMeansResult r = fit_codebook(data, 5, 20, 7);
  REQUIRE(r.codebook.size() == 5);
  CHECK(r.distortion.back() == doctest::Approx(0.0));
  for (Eigen::Index c = 0; c < 5; ++c) {
    double best = 1e9;
    for (Eigen::Index i = 0; i < 5; ++i) best = std::min(best, (r.codebook.centroids.row(c) - distinct.row(i)).norm());
    CHECK(best < 1e-12);
  }
}

TEST_CASE("k-means recovers three separated clusters") {
  Rng rng(2);
  Matrix centers(3, 4);
  centers << 3, 0, 0, 0, 0, 3, 0, 0, 0, 0, 3, 0;
  const double sigma = 0.1;
  Matrix data(600, 4);
  std::vector<int> labels(600);
  for (int i = 0; i < 600; ++i) {
    labels[static_cast<std::size_t>(i)] = i % 3;
    data.row(i) = centers.row(i % 3) + rng.normal_matrix(1, 4, sigma);
  }
  const KMeansResult r = fit_codebook(data, 3, 50, 3);
  // Map each learned centroid to its nearest true center.
  std::vector<int> map(3);
  for (int c = 0; c < 3; ++c) {
    int best = 0;
    for (int k = 1; k < 3; ++k) {
      if ((r.codebook.centroids.row(c) - centers.row(k)).norm() < (r.codebook.centroids.row(c) - centers.row(best)).norm()) {
        best = k;
      }
    }
    map[static_cast<std::size_t>(c)] = best;
    CHECK((r.codebook.centroids.row(c) - centers.row(best)).norm() < 2.0 * sigma);
  }
  const UnitSequence units = quantize(r.codebook, data);
  int agree = 0;
  for (int i = 0; i < 600; ++i) agree += map[static_cast<std::size_t>(units[static_cast<std::size_t>(i)])] == labels[static_cast<std::size_t>(i)];
  CHECK(agree / 600.0 >= 0.99);
}

TEST_CASE("Lloyd distortion never increases and runs are deterministic") {
  CorpusSpec spec;
  spec.num_speakers = 2;
  const Corpus c = generate_corpus(spec, 2, 200);
  Matrix all(800, spec.content_dim);
  for (int i = 0; i < 4; ++i) all.middleRows(i * 200, 200) = c.utterances[static_cast<std::size_t>(i)].content_features;
  const KMeansResult a = fit_codebook(all, 30, 25, 5);
  for (std::size_t i = 1; i < a.distortion.size(); ++i) CHECK(a.distortion[i] <= a.distortion[i - 1] + 1e-9);
  const KMeansResult b = fit_codebook(all, 30, 25, 5);
  CHECK(testing::bit_equal(a.codebook.centroids, b.codebook.centroids));
  for (Eigen::Index i = 0; i < 30; ++i) {
    for (Eigen::Index j = i + 1; j < 30; ++j) CHECK(a.codebook.centroids.row(i) != a.codebook.centroids.row(j));
  }
}

TEST_CASE("k-means precondition: at least K distinct frames") {
  Matrix data = Matrix::Ones(10, 2);
  data.row(3) << 2, 2;
  CHECK_THROWS_AS(fit_codebook(data, 3, 5, 1), std::invalid_argument);
  CHECK_THROWS_AS(fit_codebook(data, 1, 5, 1), std::invalid_argument);
  CHECK_NOTHROW(fit_codebook(data, 2, 5, 1));
}

TEST_CASE("quantize: exact hits, identity on centroids, lowest-index ties") {
  Rng rng(4);
  Codebook cb{rng.normal_matrix(10, 3)};
  CHECK(quantize(cb, cb.centroids.row(7))[0] == 7);
  const UnitSequence ids = quantize(cb, cb.centroids);
  for (int k = 0; k < 10; ++k) CHECK(ids[static_cast<std::size_t>(k)] == k);

  Codebook tie{Matrix::Zero(6, 2)};
  tie.centroids << 10, 10, 20, 20, 1, 0, 30, 30, 40, 40, -1, 0;
  Matrix mid(1, 2);
  mid << 0, 0;
  CHECK(quantize(tie, mid)[0] == 2);
  CHECK_THROWS_AS(quantize(cb, rng.normal_matrix(2, 4)), std::invalid_argument);
}

TEST_CASE("content encoder: shapes, determinism, sensitivity, bad ids") {
  Rng rng(5);
  ContentEncoderConfig cfg{20, 16, 2, 2, 32};
  const ContentEncoder enc(cfg, rng);
  for (int T : {1, 7, 33}) {
    UnitSequence units(static_cast<std::size_t>(T));
    for (auto& u : units) u = static_cast<int>(rng.below(20));
    const Matrix e = encode_content(enc, units);
    CHECK(e.rows() == T);
    CHECK(e.cols() == 16);
    CHECK(e.allFinite());
    CHECK(testing::bit_equal(e, encode_content(enc, units)));
    UnitSequence other = units;
    other[0] = (other[0] + 1) % 20;
    CHECK(max_abs_diff(e, encode_content(enc, other)) > 0.0);
  }
  CHECK_THROWS_AS(encode_content(enc, {0, 20}), std::out_of_range);
  CHECK_THROWS_AS(encode_content(enc, {-1}), std::out_of_range);
}

TEST_CASE("batched content encoding equals per-sequence encoding") {
  Rng rng(6);
  const ContentEncoder enc({20, 16, 2, 2, 32}, rng);
  UnitSequence a{1, 2, 3, 4, 5}, b{6, 7, 8, 9, 10};
  UnitSequence ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  Tape tape;
  const Matrix both = enc.forward(tape, ab, 5).value();
  CHECK(max_abs_diff(both.topRows(5), encode_content(enc, a)) < 1e-12);
  CHECK(max_abs_diff(both.bottomRows(5), encode_content(enc, b)) < 1e-12);
}
