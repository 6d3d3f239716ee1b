#include "stylebook/synth_corpus.hpp"

#include "stylebook/io.hpp"
#include "stylebook/layers.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace stylebook {

void CorpusSpec::validate() const {
  if (num_phone_classes < 1 || num_speakers < 1 || content_dim < 1 || mel_dim < 1) {
    throw std::invalid_argument("corpus spec: counts and dimensions must be >= 1");
  }
  if (!(frame_rate > 0.0) || !(mean_phone_duration >= 1.0)) {
    throw std::invalid_argument("corpus spec: frame_rate must be > 0 and mean_phone_duration >= 1");
  }
  if (!(content_noise_sigma >= 0.0)) throw std::invalid_argument("corpus spec: sigma must be >= 0");
  if (num_phone_classes >= 3 && adjacent_class_separation < 4.0 * content_noise_sigma) {
    throw std::invalid_argument("corpus spec: adjacent_class_separation must be >= 4 sigma");
  }
  if (!(speaker_map_spread >= 0.0)) throw std::invalid_argument("corpus spec: speaker_map_spread must be >= 0");
  if (identity_speaker_maps && mel_dim != content_dim) {
    throw std::invalid_argument("corpus spec: identity speaker maps need mel_dim == content_dim");
  }
}

namespace {

RowVector random_unit(Rng& rng, Eigen::Index dim) {
  RowVector v = rng.normal_matrix(1, dim).row(0);
  const double n = v.norm();
  return n > 0 ? RowVector(v / n) : RowVector(RowVector::Unit(dim, 0));
}

Matrix draw_centers(const CorpusSpec& spec, Rng& rng) {
  const Eigen::Index d = spec.content_dim;
  const double min_sep = 4.0 * spec.content_noise_sigma;
  Matrix centers(spec.num_phone_classes, d);
  int next = 0;
  if (spec.num_phone_classes >= 3 && d >= 2) {
    const RowVector c0 = random_unit(rng, d);
    RowVector u = rng.normal_matrix(1, d).row(0);
    u -= u.dot(c0) * c0;
    u.normalize();
    const double theta = 2.0 * std::asin(std::min(1.0, spec.adjacent_class_separation / 2.0));
    centers.row(0) = c0;
    centers.row(1) = std::cos(theta) * c0 + std::sin(theta) * u;
    next = 2;
  }
  // Other centers keep clear of every existing center by twice the adjacent
  // distance, so the designated pair stays the closest one. The requirement
  // relaxes to 4 sigma if the space is too crowded to satisfy it.
  const bool has_pair = next == 2;
  double generic_sep = has_pair ? std::max(min_sep, 2.0 * spec.adjacent_class_separation) : min_sep;
  for (int attempts = 0; next < spec.num_phone_classes; ++attempts) {
    if (attempts == 20000) generic_sep = min_sep;
    if (attempts > 200000) throw std::runtime_error("corpus: cannot place separated class centers");
    const RowVector c = random_unit(rng, d);
    bool ok = true;
    for (int j = 0; j < next && ok; ++j) {
      const double dist = (centers.row(j) - c).norm();
      ok = dist >= generic_sep && dist > 1e-9;
    }
    if (ok) centers.row(next++) = c;
  }
  return centers;
}

Matrix random_orthogonal(Rng& rng, Eigen::Index n) {
  const Matrix g = rng.normal_matrix(n, n);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  // Fix column signs so the draw is a deterministic function of g.
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (r(i, i) < 0) q.col(i) *= -1.0;
  }
  return q;
}

Matrix random_map(Rng& rng, Eigen::Index m, Eigen::Index c) {
  const Eigen::Index r = std::min(m, c);
  const Matrix u = random_orthogonal(rng, m);
  const Matrix v = random_orthogonal(rng, c);
  Eigen::VectorXd sv(r);
  for (Eigen::Index i = 0; i < r; ++i) sv(i) = 0.5 + 1.5 * rng.uniform();
  return u.leftCols(r) * sv.asDiagonal() * v.leftCols(r).transpose();
}

SpeakerMap draw_speaker(const CorpusSpec& spec, const Matrix& shared, Rng& rng) {
  SpeakerMap s;
  if (spec.identity_speaker_maps) {
    s.linear = Matrix::Identity(spec.mel_dim, spec.content_dim);
    s.bias = RowVector::Zero(spec.mel_dim);
    return s;
  }
  const Eigen::Index m = spec.mel_dim;
  // Blend with the shared map, then clip the spectrum back into [0.5, 2].
  const Matrix blend = (shared + spec.speaker_map_spread * random_map(rng, m, spec.content_dim)) /
                       (1.0 + spec.speaker_map_spread);
  Eigen::JacobiSVD<Matrix> svd(blend, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues().cwiseMax(0.5).cwiseMin(2.0);
  s.linear = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
  s.bias = rng.normal_matrix(1, m, 1.0 / std::sqrt(static_cast<double>(m))).row(0);
  return s;
}

int geometric_duration(Rng& rng, double mean) {
  if (mean <= 1.0) return 1;
  const double p = 1.0 / mean;
  double u = rng.uniform();
  if (u <= 0.0) u = 0x1.0p-53;
  return 1 + static_cast<int>(std::floor(std::log(u) / std::log(1.0 - p)));
}

Utterance draw_utterance(const Corpus& corpus, int speaker, Eigen::Index frames, Rng& rng) {
  const CorpusSpec& spec = corpus.spec;
  const SpeakerMap& sm = corpus.speakers.at(static_cast<std::size_t>(speaker));
  Utterance u;
  u.speaker_id = speaker;
  u.content_features.resize(frames, spec.content_dim);
  u.mel_frames.resize(frames, spec.mel_dim);
  u.phone_labels.resize(static_cast<std::size_t>(frames));
  const double sigma = spec.content_noise_sigma;
  const double mel_sigma = 0.5 * sigma;
  Eigen::Index t = 0;
  while (t < frames) {
    const int cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.num_phone_classes)));
    const int dur = geometric_duration(rng, spec.mean_phone_duration);
    const RowVector center = corpus.class_centers.row(cls);
    const RowVector mel_center = (sm.linear * center.transpose()).transpose() + sm.bias;
    for (int k = 0; k < dur && t < frames; ++k, ++t) {
      u.phone_labels[static_cast<std::size_t>(t)] = cls;
      for (Eigen::Index j = 0; j < spec.content_dim; ++j) u.content_features(t, j) = center(j) + sigma * rng.normal();
      for (Eigen::Index j = 0; j < spec.mel_dim; ++j) u.mel_frames(t, j) = mel_center(j) + mel_sigma * rng.normal();
    }
  }
  return u;
}

}  // namespace

Corpus generate_corpus(const CorpusSpec& spec, int utterances_per_speaker, int frames_per_utterance) {
  spec.validate();
  if (utterances_per_speaker < 1 || frames_per_utterance < 1) {
    throw std::invalid_argument("generate_corpus: utterance and frame counts must be >= 1");
  }
  Rng rng(spec.seed);
  Corpus corpus;
  corpus.spec = spec;
  corpus.class_centers = draw_centers(spec, rng);
  const Matrix shared = random_map(rng, spec.mel_dim, spec.content_dim);
  for (int s = 0; s < spec.num_speakers; ++s) corpus.speakers.push_back(draw_speaker(spec, shared, rng));
  for (int s = 0; s < spec.num_speakers; ++s) {
    for (int i = 0; i < utterances_per_speaker; ++i) {
      corpus.utterances.push_back(draw_utterance(corpus, s, frames_per_utterance, rng));
    }
  }
  return corpus;
}

Utterance generate_utterance(const Corpus& corpus, int speaker, Eigen::Index frames, std::uint64_t seed) {
  if (frames < 1) throw std::invalid_argument("generate_utterance: frames must be >= 1");
  if (speaker < 0 || speaker >= static_cast<int>(corpus.speakers.size())) {
    throw std::out_of_range("generate_utterance: unknown speaker");
  }
  Rng rng(seed);
  return draw_utterance(corpus, speaker, frames, rng);
}

std::pair<std::vector<Utterance>, std::vector<Utterance>> split_corpus(const std::vector<Utterance>& utterances,
                                                                       double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split_corpus: fraction must be in (0, 1)");
  }
  std::map<int, std::vector<const Utterance*>> by_speaker;
  for (const auto& u : utterances) by_speaker[u.speaker_id].push_back(&u);
  std::pair<std::vector<Utterance>, std::vector<Utterance>> out;
  for (const auto& [speaker, list] : by_speaker) {
    const auto n = static_cast<long>(list.size());
    if (n < 2) {
      throw std::invalid_argument("split_corpus: speaker " + std::to_string(speaker) + " has fewer than 2 utterances");
    }
    const long n_train = std::clamp(std::lround(static_cast<double>(n) * train_fraction), 1L, n - 1);
    for (long i = 0; i < n; ++i) (i < n_train ? out.first : out.second).push_back(*list[static_cast<std::size_t>(i)]);
  }
  return out;
}

namespace {

nlohmann::json spec_to_json(const CorpusSpec& s) {
  return {{"num_phone_classes", s.num_phone_classes},
          {"num_speakers", s.num_speakers},
          {"content_dim", s.content_dim},
          {"mel_dim", s.mel_dim},
          {"frame_rate", s.frame_rate},
          {"mean_phone_duration", s.mean_phone_duration},
          {"content_noise_sigma", s.content_noise_sigma},
          {"adjacent_class_separation", s.adjacent_class_separation},
          {"speaker_map_spread", s.speaker_map_spread},
          {"identity_speaker_maps", s.identity_speaker_maps},
          {"seed", s.seed}};
}

CorpusSpec spec_from_json(const nlohmann::json& j) {
  CorpusSpec s;
  s.num_phone_classes = j.at("num_phone_classes").get<int>();
  s.num_speakers = j.at("num_speakers").get<int>();
  s.content_dim = j.at("content_dim").get<int>();
  s.mel_dim = j.at("mel_dim").get<int>();
  s.frame_rate = j.at("frame_rate").get<double>();
  s.mean_phone_duration = j.at("mean_phone_duration").get<double>();
  s.content_noise_sigma = j.at("content_noise_sigma").get<double>();
  s.adjacent_class_separation = j.value("adjacent_class_separation", 0.5);
  s.speaker_map_spread = j.value("speaker_map_spread", 0.5);
  s.identity_speaker_maps = j.value("identity_speaker_maps", false);
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

}  // namespace

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "stylebook-corpus";
  manifest["version"] = 1;
  manifest["spec"] = spec_to_json(corpus.spec);
  manifest["adjacent_classes"] = {Corpus::kAdjacentClasses.first, Corpus::kAdjacentClasses.second};
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    const Utterance& u = corpus.utterances[i];
    char name[32];
    std::snprintf(name, sizeof(name), "utt_%05zu.sbm", i);
    Matrix both(u.length(), u.content_features.cols() + u.mel_frames.cols());
    both << u.content_features, u.mel_frames;
    write_matrix_file(dir / name, both, &u.phone_labels);
    list.push_back({{"file", name}, {"speaker", u.speaker_id}, {"frames", u.length()}});
  }
  manifest["utterances"] = list;
  write_matrix_file(dir / "class_centers.sbm", corpus.class_centers);
  write_file_bytes(dir / "manifest.json", manifest.dump(2) + "\n");
}

Corpus load_corpus(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file_bytes(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corpus manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "stylebook-corpus") throw FormatError("not a corpus manifest");
  Corpus corpus;
  corpus.spec = spec_from_json(manifest.at("spec"));
  if (std::filesystem::exists(dir / "class_centers.sbm")) {
    corpus.class_centers = read_matrix_file(dir / "class_centers.sbm").data;
  }
  const int cd = corpus.spec.content_dim;
  const int md = corpus.spec.mel_dim;
  for (const auto& entry : manifest.at("utterances")) {
    MatrixFile mf = read_matrix_file(dir / entry.at("file").get<std::string>());
    if (mf.data.cols() != cd + md) throw FormatError("utterance width does not match manifest dims");
    Utterance u;
    u.content_features = mf.data.leftCols(cd);
    u.mel_frames = mf.data.rightCols(md);
    u.phone_labels = std::move(mf.labels);
    u.speaker_id = entry.at("speaker").get<int>();
    if (static_cast<Eigen::Index>(u.phone_labels.size()) != u.length()) throw FormatError("utterance without labels");
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

}  // namespace stylebook
