#include "stylebook/model.hpp"

#include <cmath>
#include <stdexcept>

namespace stylebook {

void ModelConfig::validate() const {
  if (content_feature_dim < 1 || mel_dim < 1) throw std::invalid_argument("model: feature dims must be >= 1");
  if (encoder.num_units < 2) throw std::invalid_argument("model: need at least 2 units");
  if (encoder.model_dim % encoder.num_heads != 0) {
    throw std::invalid_argument("model: encoder dim must be divisible by encoder heads");
  }
  if (stylebook.attention_dim % stylebook.attention_heads != 0) {
    throw std::invalid_argument("model: attention dim must be divisible by attention heads");
  }
  if (stylebook.num_queries < 1 || stylebook.query_dim < 1 || stylebook.stylebook_dim < 1) {
    throw std::invalid_argument("model: stylebook dims must be >= 1");
  }
  if (score_base_dim < 1 || score_time_dim < 2) throw std::invalid_argument("model: score network dims");
  if (!(score_data_std >= 0.0)) throw std::invalid_argument("model: score_data_std must be >= 0");
}

VoiceConversionModel::VoiceConversionModel(const ModelConfig& config, Codebook book, std::uint64_t seed)
    : codebook(std::move(book)), config_(config) {
  config.validate();
  if (codebook.size() != config.encoder.num_units || codebook.dim() != config.content_feature_dim) {
    throw std::invalid_argument("model: codebook does not match unit count / feature dim");
  }
  Rng rng(seed);
  content_encoder = ContentEncoder(config.encoder, rng);
  prior = Linear("prior", config.encoder.model_dim, config.mel_dim, rng);
  // Encoder outputs are layer-normalized (unit scale per dim) while mels vary
  // by a few tenths around the speaker mean. A full-scale prior makes the
  // encoder loss shrink the normalization gain and flatten the content.
  prior.weight.value *= 0.1;
  style_encoder = StyleEncoder(config.stylebook, config.mel_dim, config.encoder.model_dim, rng);
  dual = DualAttention(config.stylebook, config.encoder.model_dim, rng);
  uncond_style = Parameter("uncond_style", rng.normal_matrix(1, config.stylebook.stylebook_dim, 0.1));
  ScoreNetworkConfig sc;
  sc.mel_dim = config.mel_dim;
  sc.content_dim = config.encoder.model_dim;
  sc.style_dim = config.stylebook.stylebook_dim;
  sc.base_dim = config.score_base_dim;
  sc.time_dim = config.score_time_dim;
  sc.data_std = config.score_data_std;
  score_net = ScoreNetwork(sc, rng);
}

LossDraws VoiceConversionModel::draw_loss_randomness(const TrainingBatch& batch, double drop_prob, Rng& rng) {
  LossDraws d;
  const Eigen::Index b = batch.batch_size();
  for (Eigen::Index i = 0; i < b; ++i) {
    d.times.push_back(1e-5 + (1.0 - 1e-5) * rng.uniform());
    d.drop_style.push_back(rng.uniform() < drop_prob);
  }
  d.noise = rng.normal_matrix(batch.mel.rows(), batch.mel.cols());
  return d;
}

LossTerms VoiceConversionModel::training_loss(Tape& tape, const TrainingBatch& batch, const LossDraws& draws,
                                              const DiffusionSchedule& schedule) const {
  const Eigen::Index L = batch.seq_len;
  const Eigen::Index B = batch.batch_size();
  if (B < 1) throw std::invalid_argument("training_loss: empty batch");
  if (static_cast<Eigen::Index>(batch.units.size()) != batch.mel.rows() || batch.mel.rows() != B * L) {
    throw std::invalid_argument("training_loss: units and mel frames are not aligned");
  }
  if (static_cast<Eigen::Index>(draws.times.size()) != B || static_cast<Eigen::Index>(draws.drop_style.size()) != B) {
    throw std::invalid_argument("training_loss: draws do not match batch");
  }
  const Var mel = tape.constant(batch.mel);
  const Var content = content_encoder.forward(tape, batch.units, L);
  const Var mu = prior.forward(tape, content);
  const Var enc_loss = ops::mse(mu, mel);

  // The source segment doubles as its own target.
  const Var style_seq = style_encoder.forward(tape, mel, content, L);
  const Var books = dual.summarize(tape, content, style_seq, L);
  Var style = dual.retrieve(tape, content, books, L);

  bool any_drop = false;
  for (bool d : draws.drop_style) any_drop = any_drop || d;
  if (any_drop) {
    const Var rows[] = {style, tape.param(uncond_style)};
    const Var stacked = ops::concat_rows(rows);
    std::vector<int> idx(static_cast<std::size_t>(B * L));
    for (Eigen::Index b = 0; b < B; ++b) {
      for (Eigen::Index p = 0; p < L; ++p) {
        idx[static_cast<std::size_t>(b * L + p)] =
            draws.drop_style[static_cast<std::size_t>(b)] ? static_cast<int>(B * L) : static_cast<int>(b * L + p);
      }
    }
    style = ops::gather_rows(stacked, idx);
  }

  RowVector mu_factor(B * L);
  Matrix fixed(B * L, batch.mel.cols());
  for (Eigen::Index b = 0; b < B; ++b) {
    const double t = draws.times[static_cast<std::size_t>(b)];
    const double a = schedule.decay(t);
    const double s = std::sqrt(schedule.variance(t));
    mu_factor.segment(b * L, L).setConstant(1.0 - a);
    fixed.middleRows(b * L, L) = batch.mel.middleRows(b * L, L) * a + draws.noise.middleRows(b * L, L) * s;
  }
  const Var x_t = ops::add(ops::scale_rows(mu, mu_factor), tape.constant(std::move(fixed)));
  const Var eps_hat = predict_noise(tape, score_net, schedule, x_t, mu, content, style, draws.times, L);
  const Var diff_loss = ops::mse(eps_hat, tape.constant(draws.noise));
  return {ops::add(diff_loss, enc_loss), diff_loss, enc_loss};
}

UnitSequence VoiceConversionModel::units(const Matrix& content_features) const {
  return quantize(codebook, content_features);
}

Matrix VoiceConversionModel::content_embeddings(const Matrix& content_features) const {
  return encode_content(content_encoder, units(content_features));
}

Matrix VoiceConversionModel::prior_mean(const Matrix& content_emb) const {
  Tape tape;
  return prior.forward(tape, tape.constant(content_emb)).value();
}

Stylebook VoiceConversionModel::enroll(const std::vector<Utterance>& targets, const std::string& provenance) const {
  if (targets.empty()) throw std::invalid_argument("enroll: empty target set");
  Eigen::Index total = 0;
  for (const auto& u : targets) total += u.length();
  if (total < 1) throw std::invalid_argument("enroll: empty target set");
  Matrix content(total, config_.encoder.model_dim);
  Matrix style(total, config_.stylebook.style_channels);
  Eigen::Index at = 0;
  for (const auto& u : targets) {
    if (u.mel_frames.rows() != u.content_features.rows()) throw std::invalid_argument("enroll: misaligned utterance");
    const Matrix c = content_embeddings(u.content_features);
    content.middleRows(at, u.length()) = c;
    style.middleRows(at, u.length()) = encode_style(style_encoder, u.mel_frames, c);
    at += u.length();
  }
  Stylebook book = build_stylebook(dual.summarize_attention, dual.query_set.value, content, style);
  book.provenance = provenance;
  return book;
}

Matrix VoiceConversionModel::retrieve(const Matrix& source_content_emb, const Stylebook& book, Matrix* weights) const {
  return retrieve_styles(dual.retrieve_attention, source_content_emb, dual.query_set.value, book, weights);
}

Matrix VoiceConversionModel::convert(const Matrix& source_content_features, const Stylebook& book,
                                     const DiffusionSchedule& schedule, std::uint64_t seed) const {
  if (book.entries.rows() != dual.num_queries() || book.entries.cols() != config_.stylebook.stylebook_dim) {
    throw std::invalid_argument("convert: stylebook is " + std::to_string(book.entries.rows()) + "x" +
                                std::to_string(book.entries.cols()) + ", model expects " +
                                std::to_string(dual.num_queries()) + "x" +
                                std::to_string(config_.stylebook.stylebook_dim));
  }
  const Matrix content = content_embeddings(source_content_features);
  const Matrix style = retrieve(content, book);
  const Matrix mu = prior_mean(content);
  const NetworkScore score(score_net, schedule);
  return sample(score, mu, content, style, uncond_style.value.row(0), schedule, seed);
}

void VoiceConversionModel::collect(ParameterList& out) {
  content_encoder.collect(out);
  prior.collect(out);
  style_encoder.collect(out);
  dual.collect(out);
  out.push_back(&uncond_style);
  score_net.collect(out);
}

ParameterList VoiceConversionModel::stylebook_parameters() {
  ParameterList out;
  style_encoder.collect(out);
  dual.collect(out);
  return out;
}

}  // namespace stylebook
