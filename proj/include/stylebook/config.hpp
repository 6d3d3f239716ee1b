#pragma once

// Run configuration. Serialized as JSON; every key is optional in a config
// file and falls back to the defaults below. Dotted keys (for example
// "training.steps") address nested fields for command-line overrides.
//
//   corpus.*        synthetic corpus spec plus utterances_per_speaker,
//                   frames_per_utterance, train_fraction
//   units.*         num_units (K), iterations, seed
//   model.*         encoder_dim, encoder_layers, encoder_heads, encoder_ff,
//                   num_queries, query_dim, stylebook_dim, attention_dim,
//                   attention_heads, mel_hidden, style_channels,
//                   score_base_dim, score_time_dim, score_data_std,
//                   seed
//   schedule.*      beta_0, beta_1, steps, guidance_content, guidance_style,
//                   uncond_drop_prob
//   optimizer.*     learning_rate, beta1, beta2, epsilon
//   training.*      steps, batch_size, segment_frames, log_every,
//                   checkpoint_every, seed
//   eval.*          pairs, source_frames, target_utterances, seed
//   output_dir      where subcommands write results (overridden by the
//                   STYLEBOOK_RUN_DIR environment variable)

#include "stylebook/diffusion.hpp"
#include "stylebook/model.hpp"
#include "stylebook/synth_corpus.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace stylebook {

struct CorpusSizing {
  int utterances_per_speaker = 12;
  int frames_per_utterance = 500;
  double train_fraction = 0.75;
};

struct UnitsConfig {
  int iterations = 25;
  std::uint64_t seed = 11;
};

struct OptimizerConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainingConfig {
  int steps = 2000;
  int batch_size = 16;
  int segment_frames = 100;
  int log_every = 50;
  int checkpoint_every = 500;
  std::uint64_t seed = 7;
};

struct EvalConfig {
  int pairs = 112;
  int source_frames = 200;
  int target_utterances = 3;
  std::uint64_t seed = 13;
};

/// Model sizes used by default. Q, d_s and the decoder width are the
/// published ones; encoder, style-encoder and attention widths are scaled
/// down so default training fits one CPU core.
ModelConfig desk_model_config();

struct RunConfig {
  CorpusSpec corpus;
  CorpusSizing sizing;
  UnitsConfig units;
  ModelConfig model = desk_model_config();
  std::uint64_t model_seed = 5;
  DiffusionSchedule schedule;
  OptimizerConfig optimizer;
  TrainingConfig training;
  EvalConfig eval;
  std::string output_dir = "run";

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  /// Sets one dotted key from its string form; throws on unknown keys.
  void set(const std::string& key, const std::string& value);
};

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace stylebook
