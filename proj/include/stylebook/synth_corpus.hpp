#pragma once

// Synthetic corpus with known phone-class and speaker factors.
//
// Phone classes are Gaussian clusters around unit-norm centers in content
// space. A speaker is an affine map on mel space: mel = A_s * center + b_s,
// evaluated on the noiseless center, plus small noise. Classes 0 and 1 are
// generated as a deliberately adjacent pair.

#include "stylebook/autodiff.hpp"

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace stylebook {

struct CorpusSpec {
  int num_phone_classes = 10;
  int num_speakers = 8;
  int content_dim = 64;
  int mel_dim = 64;
  double frame_rate = 50.0;
  double mean_phone_duration = 5.0;
  double content_noise_sigma = 0.1;
  /// Euclidean distance between the centers of classes 0 and 1.
  double adjacent_class_separation = 0.5;
  /// Weight of each speaker's own random map relative to a map shared by
  /// all speakers. Large values make speakers unrelated, so the
  /// speaker-average voice carries no phone information.
  double speaker_map_spread = 0.5;
  /// Test hook: every speaker map is the identity with zero bias
  /// (requires mel_dim == content_dim).
  bool identity_speaker_maps = false;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Utterance {
  Matrix content_features;  // T x content_dim
  Matrix mel_frames;        // T x mel_dim
  std::vector<int> phone_labels;
  int speaker_id = 0;

  Eigen::Index length() const { return content_features.rows(); }
};

struct SpeakerMap {
  Matrix linear;  // mel_dim x content_dim
  RowVector bias;
};

struct Corpus {
  CorpusSpec spec;
  Matrix class_centers;  // num_phone_classes x content_dim
  std::vector<SpeakerMap> speakers;
  std::vector<Utterance> utterances;

  /// Classes generated next to each other in content space.
  static constexpr std::pair<int, int> kAdjacentClasses{0, 1};
};

Corpus generate_corpus(const CorpusSpec& spec, int utterances_per_speaker, int frames_per_utterance);

/// Draws one utterance of `frames` frames for `speaker` using the corpus'
/// centers and speaker maps.
Utterance generate_utterance(const Corpus& corpus, int speaker, Eigen::Index frames, std::uint64_t seed);

/// Splits by utterance, per speaker, keeping the first round(n * fraction)
/// (clamped to [1, n-1]) utterances of every speaker for training.
std::pair<std::vector<Utterance>, std::vector<Utterance>> split_corpus(const std::vector<Utterance>& utterances,
                                                                       double train_fraction);

/// Directory layout: manifest.json plus one matrix file per utterance
/// holding [content | mel] columns and the phone labels.
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace stylebook
