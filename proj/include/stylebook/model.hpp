#pragma once

// The full conversion model: units -> content encoder -> (prior mean,
// style encoder, dual attention) -> diffusion decoder.

#include "stylebook/content.hpp"
#include "stylebook/diffusion.hpp"
#include "stylebook/stylebook.hpp"
#include "stylebook/synth_corpus.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stylebook {

struct ModelConfig {
  int content_feature_dim = 64;
  int mel_dim = 64;
  ContentEncoderConfig encoder;
  StylebookConfig stylebook;
  int score_base_dim = 128;
  int score_time_dim = 64;
  double score_data_std = 0.2;

  void validate() const;
};

struct TrainingBatch {
  std::vector<int> units;  // B * seq_len unit ids
  Matrix mel;              // (B * seq_len) x mel_dim
  Eigen::Index seq_len = 0;

  Eigen::Index batch_size() const { return seq_len == 0 ? 0 : mel.rows() / seq_len; }
};

/// Random quantities of one loss evaluation, drawn up front so the loss is a
/// deterministic function of parameters (needed for finite differences).
struct LossDraws {
  std::vector<double> times;       // one per sequence, in (0, 1]
  Matrix noise;                    // same shape as batch.mel
  std::vector<bool> drop_style;    // one per sequence
};

struct LossTerms {
  Var total;
  Var diffusion;
  Var encoder;
};

class VoiceConversionModel : public Module {
 public:
  VoiceConversionModel() = default;
  VoiceConversionModel(const ModelConfig& config, Codebook codebook, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  static LossDraws draw_loss_randomness(const TrainingBatch& batch, double drop_prob, Rng& rng);

  /// L_total = L_Diff + L_Enc. L_Diff is the noise-prediction MSE (score
  /// matching weighted by the marginal variance); L_Enc is the MSE between
  /// the projected content embeddings (the prior mean) and the mel frames.
  LossTerms training_loss(Tape& tape, const TrainingBatch& batch, const LossDraws& draws,
                          const DiffusionSchedule& schedule) const;

  UnitSequence units(const Matrix& content_features) const;
  Matrix content_embeddings(const Matrix& content_features) const;
  Matrix prior_mean(const Matrix& content_embeddings) const;

  /// Encodes each target utterance separately, concatenates content and
  /// style sequences along time, then summarizes them into a stylebook.
  Stylebook enroll(const std::vector<Utterance>& targets, const std::string& provenance) const;

  /// Per-frame retrieved style embeddings for a source utterance.
  Matrix retrieve(const Matrix& source_content_emb, const Stylebook& book, Matrix* weights = nullptr) const;

  /// quantize -> encode -> retrieve -> sample.
  Matrix convert(const Matrix& source_content_features, const Stylebook& book, const DiffusionSchedule& schedule,
                 std::uint64_t seed) const;

  void collect(ParameterList& out) override;
  /// Parameters of the stylebook path (style encoder, query set, both
  /// attention layers).
  ParameterList stylebook_parameters();

  Codebook codebook;
  ContentEncoder content_encoder;
  Linear prior;
  StyleEncoder style_encoder;
  DualAttention dual;
  mutable Parameter uncond_style;
  ScoreNetwork score_net;

 private:
  ModelConfig config_;
};

}  // namespace stylebook
