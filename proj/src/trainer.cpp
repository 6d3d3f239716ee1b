#include "stylebook/trainer.hpp"

#include "stylebook/io.hpp"

#include <cmath>
#include <cstdio>
#include <string>

namespace stylebook {

Adam::Adam(ParameterList params, const OptimizerConfig& config) : params_(std::move(params)), config_(config) {
  for (const Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * p.grad;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -=
        config_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.epsilon);
    p.zero_grad();
  }
}

TrainingBatch sample_batch(const VoiceConversionModel& model, const std::vector<Utterance>& utterances,
                           int batch_size, int segment_frames, Rng& rng) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    if (utterances[i].length() >= segment_frames) eligible.push_back(i);
  }
  if (eligible.empty()) throw std::invalid_argument("train: no utterance is as long as one segment");
  const Eigen::Index mel_dim = utterances[eligible[0]].mel_frames.cols();
  TrainingBatch batch;
  batch.seq_len = segment_frames;
  batch.mel.resize(static_cast<Eigen::Index>(batch_size) * segment_frames, mel_dim);
  batch.units.reserve(static_cast<std::size_t>(batch.mel.rows()));
  for (int b = 0; b < batch_size; ++b) {
    const Utterance& u = utterances[eligible[rng.below(eligible.size())]];
    const auto start = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(u.length() - segment_frames + 1)));
    const UnitSequence units = model.units(u.content_features.middleRows(start, segment_frames));
    batch.units.insert(batch.units.end(), units.begin(), units.end());
    batch.mel.middleRows(static_cast<Eigen::Index>(b) * segment_frames, segment_frames) =
        u.mel_frames.middleRows(start, segment_frames);
  }
  return batch;
}

Codebook fit_units(const RunConfig& config, const std::vector<Utterance>& utterances) {
  if (utterances.empty()) throw std::invalid_argument("fit_units: empty corpus");
  Eigen::Index total = 0;
  for (const auto& u : utterances) total += u.length();
  Matrix all(total, utterances[0].content_features.cols());
  Eigen::Index at = 0;
  for (const auto& u : utterances) {
    all.middleRows(at, u.length()) = u.content_features;
    at += u.length();
  }
  return fit_codebook(all, config.model.encoder.num_units, config.units.iterations, config.units.seed).codebook;
}

VoiceConversionModel initialize_model(const RunConfig& config, const std::vector<Utterance>& utterances) {
  config.validate();
  return VoiceConversionModel(config.model, fit_units(config, utterances), config.model_seed);
}

TrainingResult train(VoiceConversionModel& model, const RunConfig& config, const std::vector<Utterance>& utterances,
                     const std::filesystem::path& checkpoint_dir, const StepCallback& on_step) {
  config.validate();
  if (utterances.empty()) throw std::invalid_argument("train: empty corpus");
  ParameterList params = model.parameters();
  for (Parameter* p : params) p->zero_grad();
  Adam adam(params, config.optimizer);
  Rng rng(config.training.seed);
  TrainingResult result;
  for (int step = 1; step <= config.training.steps; ++step) {
    const TrainingBatch batch =
        sample_batch(model, utterances, config.training.batch_size, config.training.segment_frames, rng);
    const LossDraws draws = VoiceConversionModel::draw_loss_randomness(batch, config.schedule.uncond_drop_prob, rng);
    Tape tape;
    const LossTerms loss = model.training_loss(tape, batch, draws, config.schedule);
    const LossPoint point{step, loss.total.value()(0, 0), loss.diffusion.value()(0, 0), loss.encoder.value()(0, 0)};
    if (!std::isfinite(point.total)) {
      throw DivergenceError("train: non-finite loss at step " + std::to_string(step) + " (diffusion " +
                            std::to_string(point.diffusion) + ", encoder " + std::to_string(point.encoder) + ")");
    }
    tape.backward(loss.total);
    adam.step();
    result.losses.push_back(point);
    if (on_step) on_step(point);
    if (!checkpoint_dir.empty() && config.training.checkpoint_every > 0 &&
        step % config.training.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_%06d.sbck", step);
      save_checkpoint(checkpoint_dir / name, model, config, step);
    }
  }
  if (!checkpoint_dir.empty()) {
    save_checkpoint(checkpoint_dir / "checkpoint_final.sbck", model, config, config.training.steps);
  }
  return result;
}

void save_checkpoint(const std::filesystem::path& path, VoiceConversionModel& model, const RunConfig& config,
                     int step) {
  TensorArchive archive;
  nlohmann::json meta;
  meta["config"] = config.to_json();
  meta["step"] = step;
  archive.metadata = meta.dump();
  store_parameters(archive, model.parameters());
  archive.tensors["codebook.centroids"] = model.codebook.centroids;
  write_archive(path, archive);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const TensorArchive archive = read_archive(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(archive.metadata);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("checkpoint: bad metadata in " + path.string() + ": " + e.what());
  }
  if (!meta.contains("config") || !meta.contains("step")) {
    throw FormatError("checkpoint: metadata lacks config/step in " + path.string());
  }
  Checkpoint ckpt;
  ckpt.config = RunConfig::from_json(meta["config"]);
  ckpt.config.validate();
  ckpt.step = meta["step"].get<int>();
  Codebook codebook;
  codebook.centroids = archive.at("codebook.centroids");
  ckpt.model = VoiceConversionModel(ckpt.config.model, std::move(codebook), ckpt.config.model_seed);
  load_parameters(archive, ckpt.model.parameters());
  return ckpt;
}

}  // namespace stylebook
