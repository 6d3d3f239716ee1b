#include "stylebook/config.hpp"
#include "stylebook/io.hpp"
#include "stylebook/layers.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <filesystem>

using namespace stylebook;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("stylebook_test_" + name);
}

}  // namespace

TEST_CASE("matrix file round trip with and without labels") {
  Rng rng(1);
  const Matrix m = rng.normal_matrix(7, 3);
  const std::vector<int> labels{0, 1, 2, 3, 4, 5, 6};
  const auto path = temp_file("m.sbm");
  write_matrix_file(path, m, &labels);
  const MatrixFile back = read_matrix_file(path);
  CHECK(back.labels == labels);
  CHECK(testing::max_abs_diff(back.data, m.cast<float>().cast<double>()) == 0.0);
  CHECK(std::filesystem::file_size(path) == 16 + 7 * 3 * 4 + 7 * 4);
  const std::string bytes = read_file_bytes(path);
  CHECK(le::get_u32(bytes, 0) == kMatrixMagic);
  CHECK(le::get_u32(bytes, 4) == 7);
  CHECK(le::get_u32(bytes, 8) == 3);
  CHECK(le::get_u32(bytes, 12) == 16 + 7 * 3 * 4);

  write_matrix_file(path, m);
  CHECK(read_matrix_file(path).labels.empty());

  std::string bad = read_file_bytes(path);
  bad[1] = 'Q';
  write_file_bytes(path, bad);
  CHECK_THROWS_AS(read_matrix_file(path), FormatError);
  CHECK_THROWS_AS(read_matrix_file(temp_file("missing.sbm")), IoError);
}

TEST_CASE("tensor archive round trip and shape checking") {
  Rng rng(2);
  Parameter a("layer.a", rng.normal_matrix(3, 4)), b("layer.b", rng.normal_matrix(1, 4));
  TensorArchive ar;
  ar.metadata = "{\"k\": 1}";
  store_parameters(ar, {&a, &b});
  const auto path = temp_file("ck.sbck");
  write_archive(path, ar);
  const TensorArchive back = read_archive(path);
  CHECK(back.metadata == ar.metadata);
  Parameter a2("layer.a", Matrix::Zero(3, 4)), b2("layer.b", Matrix::Zero(1, 4));
  load_parameters(back, {&a2, &b2});
  CHECK(testing::max_abs_diff(a2.value, a.value.cast<float>().cast<double>()) == 0.0);
  Parameter wrong("layer.a", Matrix::Zero(4, 3));
  CHECK_THROWS_AS(load_parameters(back, {&wrong}), FormatError);
  Parameter missing("layer.c", Matrix::Zero(1, 1));
  CHECK_THROWS_AS(load_parameters(back, {&missing}), FormatError);

  std::string bytes = read_file_bytes(path);
  write_file_bytes(path, bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_archive(path), FormatError);
}

TEST_CASE("run config: JSON round trip, dotted overrides, validation") {
  RunConfig c;
  c.validate();
  c.set("training.steps", "123");
  c.set("schedule.guidance_style", "0.25");
  c.set("corpus.identity_speaker_maps", "false");
  c.set("output_dir", "elsewhere");
  CHECK(c.training.steps == 123);
  CHECK(c.schedule.guidance_scale_style == 0.25);
  CHECK(c.output_dir == "elsewhere");

  const auto path = temp_file("config.json");
  save_run_config(path, c);
  const RunConfig back = load_run_config(path);
  CHECK(back.to_json() == c.to_json());

  CHECK_THROWS_AS(c.set("training.nope", "1"), std::invalid_argument);
  CHECK_THROWS_AS(c.set("training.steps", "12x"), std::invalid_argument);
  CHECK_THROWS_AS(c.set("corpus.seed", "-4"), std::invalid_argument);
  CHECK_THROWS_AS(c.set("corpus.identity_speaker_maps", "maybe"), std::invalid_argument);

  RunConfig partial = RunConfig::from_json(nlohmann::json::parse(R"({"training": {"batch_size": 3}})"));
  CHECK(partial.training.batch_size == 3);
  CHECK(partial.training.steps == RunConfig{}.training.steps);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"training": {"batch_size": "x"}})")),
                  std::invalid_argument);

  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"sizing": {"train_fraction": 0.5}})")),
                  std::invalid_argument);

  RunConfig invalid;
  invalid.sizing.train_fraction = 1.0;
  CHECK_THROWS_AS(invalid.validate(), std::invalid_argument);
  invalid = RunConfig{};
  invalid.model.encoder.num_heads = 3;
  CHECK_THROWS_AS(invalid.validate(), std::invalid_argument);
  invalid = RunConfig{};
  invalid.training.segment_frames = invalid.sizing.frames_per_utterance + 1;
  CHECK_THROWS_AS(invalid.validate(), std::invalid_argument);
  invalid = RunConfig{};
  invalid.set("corpus.mel_dim", "32");
  CHECK(invalid.model.mel_dim == 32);
  CHECK_NOTHROW(invalid.validate());

  write_file_bytes(path, "{ not json");
  CHECK_THROWS_AS(load_run_config(path), FormatError);
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}
