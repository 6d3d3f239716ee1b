#include "stylebook/io.hpp"
#include "stylebook/synth_corpus.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <filesystem>
#include <set>

using namespace stylebook;
using stylebook::testing::bit_equal;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("stylebook_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

int nearest_center(const Matrix& centers, const Eigen::Ref<const RowVector>& x) {
  int best = 0;
  double best_d = (centers.row(0) - x).squaredNorm();
  for (Eigen::Index c = 1; c < centers.rows(); ++c) {
    const double d = (centers.row(c) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("noise-free identity speaker reproduces the class center") {
  CorpusSpec spec;
  spec.num_phone_classes = 1;
  spec.num_speakers = 1;
  spec.content_dim = spec.mel_dim = 6;
  spec.content_noise_sigma = 0.0;
  spec.identity_speaker_maps = true;
  const Corpus c = generate_corpus(spec, 2, 30);
  for (const auto& u : c.utterances) {
    for (Eigen::Index t = 0; t < u.length(); ++t) {
      CHECK(u.mel_frames.row(t) == c.class_centers.row(0));
      CHECK(u.content_features.row(t) == c.class_centers.row(0));
    }
  }
  CHECK(std::abs(c.class_centers.row(0).norm() - 1.0) < 1e-12);
}

TEST_CASE("corpus generation is deterministic down to the saved bytes") {
  CorpusSpec spec;
  spec.seed = 99;
  const Corpus a = generate_corpus(spec, 2, 60);
  const Corpus b = generate_corpus(spec, 2, 60);
  REQUIRE(a.utterances.size() == b.utterances.size());
  for (std::size_t i = 0; i < a.utterances.size(); ++i) {
    CHECK(bit_equal(a.utterances[i].content_features, b.utterances[i].content_features));
    CHECK(bit_equal(a.utterances[i].mel_frames, b.utterances[i].mel_frames));
    CHECK(a.utterances[i].phone_labels == b.utterances[i].phone_labels);
  }
  const auto da = temp_dir("det_a"), db = temp_dir("det_b");
  save_corpus(da, a);
  save_corpus(db, b);
  for (const auto& entry : std::filesystem::directory_iterator(da)) {
    CHECK(fnv1a64(read_file_bytes(entry.path())) == fnv1a64(read_file_bytes(db / entry.path().filename())));
  }
  spec.seed = 100;
  const Corpus c = generate_corpus(spec, 2, 60);
  CHECK_FALSE(bit_equal(a.utterances[0].content_features, c.utterances[0].content_features));
}

TEST_CASE("default corpus: content clusters are separable and sequences valid") {
  const CorpusSpec spec;
  const Corpus c = generate_corpus(spec, 4, 500);
  CHECK(c.utterances.size() == 32);
  double hits = 0, total = 0, run_lengths = 0, runs = 0;
  for (const auto& u : c.utterances) {
    REQUIRE(u.length() == 500);
    REQUIRE(u.mel_frames.rows() == 500);
    REQUIRE(u.phone_labels.size() == 500);
    for (Eigen::Index t = 0; t < u.length(); ++t) {
      const int label = u.phone_labels[static_cast<std::size_t>(t)];
      REQUIRE(label >= 0);
      REQUIRE(label < spec.num_phone_classes);
      hits += nearest_center(c.class_centers, u.content_features.row(t)) == label;
      total += 1;
    }
    // Segment lengths: consecutive segments may repeat a class, so count
    // label changes as a lower bound on segment count.
    int changes = 0;
    for (std::size_t t = 1; t < u.phone_labels.size(); ++t) changes += u.phone_labels[t] != u.phone_labels[t - 1];
    run_lengths += 500;
    runs += changes + 1;
  }
  CHECK(hits / total >= 0.99);
  // Mean run length between label changes: duration 5 stretched by repeats
  // of the same class (probability 1/10), i.e. about 5 / 0.9.
  CHECK(run_lengths / runs == doctest::Approx(5.0 / 0.9).epsilon(0.1));
}

TEST_CASE("class centers: unit norm, adjacent pair at the configured distance, others farther") {
  const CorpusSpec spec;
  const Corpus c = generate_corpus(spec, 1, 10);
  const auto [a, b] = Corpus::kAdjacentClasses;
  for (Eigen::Index i = 0; i < c.class_centers.rows(); ++i) CHECK(c.class_centers.row(i).norm() == doctest::Approx(1.0));
  CHECK((c.class_centers.row(a) - c.class_centers.row(b)).norm() == doctest::Approx(spec.adjacent_class_separation));
  for (Eigen::Index i = 0; i < c.class_centers.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < c.class_centers.rows(); ++j) {
      const double d = (c.class_centers.row(i) - c.class_centers.row(j)).norm();
      CHECK(d >= 4.0 * spec.content_noise_sigma - 1e-12);
      if (!(i == a && j == b)) CHECK(d > spec.adjacent_class_separation);
    }
  }
}

TEST_CASE("speakers differ in mel space for the same class") {
  const CorpusSpec spec;
  const Corpus c = generate_corpus(spec, 1, 10);
  for (std::size_t s = 0; s < c.speakers.size(); ++s) {
    for (std::size_t r = s + 1; r < c.speakers.size(); ++r) {
      for (Eigen::Index k = 0; k < c.class_centers.rows(); ++k) {
        const RowVector x = c.class_centers.row(k);
        const RowVector ms = (c.speakers[s].linear * x.transpose()).transpose() + c.speakers[s].bias;
        const RowVector mr = (c.speakers[r].linear * x.transpose()).transpose() + c.speakers[r].bias;
        CHECK((ms - mr).norm() > 10.0 * spec.content_noise_sigma);
      }
    }
  }
  for (const auto& sp : c.speakers) {
    Eigen::JacobiSVD<Matrix> svd(sp.linear);
    CHECK(svd.singularValues().maxCoeff() <= 2.0 + 1e-9);
    CHECK(svd.singularValues().minCoeff() >= 0.5 - 1e-9);
  }
}

TEST_CASE("speaker_map_spread controls how much speakers share their map") {
  CorpusSpec spec;
  auto mean_pair_distance = [](const Corpus& c) {
    double total = 0.0;
    int n = 0;
    for (std::size_t s = 0; s < c.speakers.size(); ++s) {
      for (std::size_t r = s + 1; r < c.speakers.size(); ++r, ++n) {
        total += (c.speakers[s].linear - c.speakers[r].linear).norm();
      }
    }
    return total / n;
  };
  spec.speaker_map_spread = 0.0;
  const Corpus same = generate_corpus(spec, 1, 10);
  CHECK(mean_pair_distance(same) < 1e-9);
  spec.speaker_map_spread = 0.5;
  const double mid = mean_pair_distance(generate_corpus(spec, 1, 10));
  spec.speaker_map_spread = 100.0;
  const double far = mean_pair_distance(generate_corpus(spec, 1, 10));
  CHECK(mid > 1.0);
  CHECK(far > mid);
  spec.speaker_map_spread = -1.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("split_corpus keeps every speaker on both sides") {
  CorpusSpec spec;
  SUBCASE("8 x 10 at 0.8") {
    const Corpus c = generate_corpus(spec, 10, 20);
    const auto [train, eval] = split_corpus(c.utterances, 0.8);
    CHECK(train.size() == 64);
    CHECK(eval.size() == 16);
    std::set<int> st, se;
    for (const auto& u : train) st.insert(u.speaker_id);
    for (const auto& u : eval) se.insert(u.speaker_id);
    CHECK(st.size() == 8);
    CHECK(se.size() == 8);
  }
  SUBCASE("2 per speaker at 0.5") {
    const Corpus c = generate_corpus(spec, 2, 20);
    const auto [train, eval] = split_corpus(c.utterances, 0.5);
    CHECK(train.size() == 8);
    CHECK(eval.size() == 8);
  }
  SUBCASE("a speaker with one utterance is rejected") {
    const Corpus c = generate_corpus(spec, 1, 20);
    CHECK_THROWS_AS(split_corpus(c.utterances, 0.5), std::invalid_argument);
  }
  SUBCASE("fraction must lie strictly inside (0, 1)") {
    const Corpus c = generate_corpus(spec, 2, 20);
    CHECK_THROWS_AS(split_corpus(c.utterances, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(split_corpus(c.utterances, 1.0), std::invalid_argument);
  }
}

TEST_CASE("corpus spec validation") {
  CorpusSpec spec;
  spec.num_phone_classes = 0;
  CHECK_THROWS_AS(generate_corpus(spec, 1, 1), std::invalid_argument);
  spec = CorpusSpec{};
  spec.content_dim = 0;
  CHECK_THROWS_AS(generate_corpus(spec, 1, 1), std::invalid_argument);
  spec = CorpusSpec{};
  spec.content_noise_sigma = -0.1;
  CHECK_THROWS_AS(generate_corpus(spec, 1, 1), std::invalid_argument);
  spec = CorpusSpec{};
  CHECK_THROWS_AS(generate_corpus(spec, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(generate_corpus(spec, 1, 0), std::invalid_argument);
}

TEST_CASE("corpus directory round trip") {
  CorpusSpec spec;
  spec.num_speakers = 2;
  const Corpus c = generate_corpus(spec, 2, 25);
  const auto dir = temp_dir("roundtrip");
  save_corpus(dir, c);
  const Corpus back = load_corpus(dir);
  REQUIRE(back.utterances.size() == c.utterances.size());
  CHECK(back.spec.seed == spec.seed);
  for (std::size_t i = 0; i < c.utterances.size(); ++i) {
    const auto& u = c.utterances[i];
    const auto& v = back.utterances[i];
    CHECK(v.speaker_id == u.speaker_id);
    CHECK(v.phone_labels == u.phone_labels);
    CHECK(testing::max_abs_diff(v.mel_frames, u.mel_frames) < 1e-6);
    CHECK(testing::max_abs_diff(v.content_features, u.content_features) < 1e-6);
  }
  write_file_bytes(dir / "manifest.json", "{\"format\": \"something-else\"}");
  CHECK_THROWS_AS(load_corpus(dir), FormatError);
}
