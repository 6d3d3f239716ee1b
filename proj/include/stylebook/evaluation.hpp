#pragma once

// Evaluation probes, the storage-cost model and the attention-profile
// analysis. Style similarity here is a proxy: cosine similarity between
// mel-statistics signatures, not a speaker-verification score.

#include "stylebook/config.hpp"
#include "stylebook/model.hpp"
#include "stylebook/synth_corpus.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace stylebook {

enum class MemoryMethod { kYourTts, kFreeVc, kDiffVc, kProposed, kKnnVc };

MemoryMethod parse_memory_method(const std::string& name);
std::string memory_method_name(MemoryMethod method);
const std::vector<MemoryMethod>& all_memory_methods();

/// KiB needed to store one target speaker's style, for a target recording
/// of `target_seconds`. The proposed row uses 128 x 64 float32 entries; the
/// kNN-VC row stores 50 frames/s of 1024-dim float32 features.
double memory_model_kib(MemoryMethod method, double target_seconds);

/// Per-dimension mean followed by per-dimension standard deviation.
RowVector speaker_signature(const Matrix& mel_frames);

/// Ground-truth statistics of every speaker in the reference set: centred
/// signatures and per-class mean mel frames (the phone probe).
struct ReferenceStats {
  RowVector signature_center;
  std::vector<RowVector> signatures;  // centred, one per speaker
  std::vector<Matrix> class_means;    // per speaker: classes x mel_dim
  int num_classes = 0;

  static ReferenceStats build(const std::vector<Utterance>& reference, int num_speakers, int num_classes);
  /// Cosine similarity between the centred signature of `mel` and speaker `s`.
  double style_similarity(const Matrix& mel, int speaker) const;
  /// Nearest class mean of `speaker` for each frame.
  std::vector<int> probe(const Matrix& mel, int speaker) const;
};

struct PairResult {
  int source_speaker = 0;
  int target_speaker = 0;
  std::size_t source_utterance = 0;  // index into the evaluation set
  double similarity_to_target = 0.0;
  double similarity_to_source = 0.0;
  double content_accuracy = 0.0;
};

struct EvalReport {
  int pairs = 0;
  double content_accuracy = 0.0;        // pooled over all converted frames
  double content_accuracy_chance = 0.0; // 1 / num_classes
  double style_win_rate = 0.0;          // fraction with sim(target) > sim(source)
  double mean_similarity_to_target = 0.0;
  double mean_similarity_to_source = 0.0;
  std::vector<PairResult> pair_results;

  nlohmann::json to_json() const;
};

/// Converts `pairs` source/target pairs drawn from distinct speakers of
/// `eval_set` and scores them against statistics of `reference`.
EvalReport evaluate(const VoiceConversionModel& model, const RunConfig& config, const std::vector<Utterance>& reference,
                    const std::vector<Utterance>& eval_set, int pairs);

struct AttentionAnalysis {
  std::vector<int> classes;
  Matrix profiles;    // classes x Q, pooled over the evaluation set
  Matrix similarity;  // classes x classes
  double mean_within_class = 0.0;   // same class, different utterances
  double mean_between_class = 0.0;  // different classes, different utterances
  int adjacent_pair_rank = 0;       // 1-based rank among off-diagonal pairs
  int off_diagonal_pairs = 0;
  int globally_used_entries = 0;

  nlohmann::json summary_json() const;
};

AttentionAnalysis analyze_attention(const VoiceConversionModel& model, const std::vector<Utterance>& eval_set,
                                    int num_classes, std::pair<int, int> adjacent_classes);

/// Writes profiles.tsv (class x entry) and similarity.tsv (class x class).
void write_attention_tables(const std::filesystem::path& dir, const AttentionAnalysis& analysis);

}  // namespace stylebook
