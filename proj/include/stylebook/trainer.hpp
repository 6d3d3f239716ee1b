#pragma once

// Joint training of every model component on fixed-length segments, with
// Adam and periodic checkpoints.

#include "stylebook/config.hpp"
#include "stylebook/model.hpp"

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <vector>

namespace stylebook {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Adam {
 public:
  Adam(ParameterList params, const OptimizerConfig& config);
  /// Applies one update from the accumulated gradients, then zeroes them.
  void step();
  long steps_taken() const { return t_; }

 private:
  ParameterList params_;
  OptimizerConfig config_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

struct LossPoint {
  int step = 0;
  double total = 0.0;
  double diffusion = 0.0;
  double encoder = 0.0;
};

struct TrainingResult {
  std::vector<LossPoint> losses;  // one per step
};

/// Draws `batch_size` random segments of `segment_frames` frames; utterances
/// shorter than a segment are never drawn.
TrainingBatch sample_batch(const VoiceConversionModel& model, const std::vector<Utterance>& utterances,
                           int batch_size, int segment_frames, Rng& rng);

using StepCallback = std::function<void(const LossPoint&)>;

/// Trains `model` in place for config.training.steps steps. When
/// `checkpoint_dir` is non-empty a checkpoint is written every
/// checkpoint_every steps and at the end (checkpoint_final.sbck).
TrainingResult train(VoiceConversionModel& model, const RunConfig& config, const std::vector<Utterance>& utterances,
                     const std::filesystem::path& checkpoint_dir = {}, const StepCallback& on_step = {});

/// Builds a model from a unit codebook fit on the training utterances.
VoiceConversionModel initialize_model(const RunConfig& config, const std::vector<Utterance>& utterances);
Codebook fit_units(const RunConfig& config, const std::vector<Utterance>& utterances);

struct Checkpoint {
  RunConfig config;
  int step = 0;
  VoiceConversionModel model;
};

void save_checkpoint(const std::filesystem::path& path, VoiceConversionModel& model, const RunConfig& config,
                     int step);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stylebook
