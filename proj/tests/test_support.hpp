#pragma once

#include "stylebook/config.hpp"
#include "stylebook/layers.hpp"

#include <cmath>

namespace stylebook::testing {

/// Small configuration for fast unit tests.
inline RunConfig tiny_config() {
  RunConfig c;
  c.corpus.num_phone_classes = 4;
  c.corpus.num_speakers = 3;
  c.corpus.content_dim = 8;
  c.corpus.mel_dim = 8;
  c.corpus.adjacent_class_separation = 0.5;
  c.sizing.utterances_per_speaker = 4;
  c.sizing.frames_per_utterance = 40;
  c.sizing.train_fraction = 0.5;
  c.model.content_feature_dim = 8;
  c.model.mel_dim = 8;
  c.model.encoder = {12, 16, 1, 2, 32};
  c.model.stylebook = {8, 12, 6, 16, 2, 16, 16};
  c.model.score_base_dim = 8;
  c.model.score_time_dim = 8;
  c.training.steps = 20;
  c.training.batch_size = 2;
  c.training.segment_frames = 12;
  c.training.checkpoint_every = 0;
  c.eval.pairs = 6;
  c.eval.source_frames = 20;
  c.eval.target_utterances = 2;
  c.schedule.steps = 5;
  c.units.iterations = 10;
  return c;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

inline bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::equal(a.data(), a.data() + a.size(), b.data());
}

}  // namespace stylebook::testing
