#include "stylebook/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

namespace stylebook {

namespace {

double cosine(const RowVector& a, const RowVector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

}  // namespace

MemoryMethod parse_memory_method(const std::string& name) {
  for (MemoryMethod m : all_memory_methods()) {
    if (memory_method_name(m) == name) return m;
  }
  throw std::invalid_argument("memory_model: unknown method '" + name + "'");
}

std::string memory_method_name(MemoryMethod method) {
  switch (method) {
    case MemoryMethod::kYourTts: return "yourtts";
    case MemoryMethod::kFreeVc: return "freevc";
    case MemoryMethod::kDiffVc: return "diffvc";
    case MemoryMethod::kProposed: return "proposed";
    case MemoryMethod::kKnnVc: return "knnvc";
  }
  throw std::invalid_argument("memory_model: unknown method");
}

const std::vector<MemoryMethod>& all_memory_methods() {
  static const std::vector<MemoryMethod> methods{MemoryMethod::kYourTts, MemoryMethod::kFreeVc, MemoryMethod::kDiffVc,
                                                 MemoryMethod::kProposed, MemoryMethod::kKnnVc};
  return methods;
}

double memory_model_kib(MemoryMethod method, double target_seconds) {
  if (!(target_seconds > 0.0) || !std::isfinite(target_seconds)) {
    throw std::invalid_argument("memory_model: target_seconds must be > 0");
  }
  switch (method) {
    case MemoryMethod::kYourTts: return 2.0;
    case MemoryMethod::kFreeVc: return 1.0;
    case MemoryMethod::kDiffVc: return 1.5;
    case MemoryMethod::kProposed: return 128.0 * 64.0 * 4.0 / 1024.0;
    case MemoryMethod::kKnnVc: return target_seconds * 50.0 * 1024.0 * 4.0 / 1024.0;
  }
  throw std::invalid_argument("memory_model: unknown method");
}

RowVector speaker_signature(const Matrix& mel) {
  if (mel.rows() < 1) throw std::invalid_argument("speaker_signature: no frames");
  const Eigen::Index d = mel.cols();
  RowVector sig(2 * d);
  const RowVector mean = mel.colwise().mean();
  sig.head(d) = mean;
  sig.tail(d) = ((mel.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(mel.rows())).sqrt();
  return sig;
}

ReferenceStats ReferenceStats::build(const std::vector<Utterance>& reference, int num_speakers, int num_classes) {
  ReferenceStats r;
  r.num_classes = num_classes;
  std::vector<std::vector<const Utterance*>> by_speaker(static_cast<std::size_t>(num_speakers));
  for (const auto& u : reference) {
    if (u.speaker_id < 0 || u.speaker_id >= num_speakers) throw std::out_of_range("reference: bad speaker id");
    by_speaker[static_cast<std::size_t>(u.speaker_id)].push_back(&u);
  }
  std::vector<RowVector> raw;
  for (int s = 0; s < num_speakers; ++s) {
    const auto& utts = by_speaker[static_cast<std::size_t>(s)];
    if (utts.empty()) throw std::invalid_argument("reference: speaker " + std::to_string(s) + " has no utterances");
    Eigen::Index total = 0;
    for (const auto* u : utts) total += u->length();
    const Eigen::Index d = utts[0]->mel_frames.cols();
    Matrix all(total, d);
    Matrix sums = Matrix::Zero(num_classes, d);
    std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
    Eigen::Index at = 0;
    for (const auto* u : utts) {
      all.middleRows(at, u->length()) = u->mel_frames;
      at += u->length();
      for (Eigen::Index t = 0; t < u->length(); ++t) {
        const int c = u->phone_labels[static_cast<std::size_t>(t)];
        sums.row(c) += u->mel_frames.row(t);
        counts[static_cast<std::size_t>(c)] += 1.0;
      }
    }
    for (int c = 0; c < num_classes; ++c) {
      // Classes never seen for this speaker can never be predicted.
      if (counts[static_cast<std::size_t>(c)] > 0.0) {
        sums.row(c) /= counts[static_cast<std::size_t>(c)];
      } else {
        sums.row(c).setConstant(std::numeric_limits<double>::infinity());
      }
    }
    r.class_means.push_back(std::move(sums));
    raw.push_back(speaker_signature(all));
  }
  r.signature_center = RowVector::Zero(raw[0].size());
  for (const auto& s : raw) r.signature_center += s;
  r.signature_center /= static_cast<double>(raw.size());
  for (const auto& s : raw) r.signatures.push_back(s - r.signature_center);
  return r;
}

double ReferenceStats::style_similarity(const Matrix& mel, int speaker) const {
  return cosine(speaker_signature(mel) - signature_center, signatures.at(static_cast<std::size_t>(speaker)));
}

std::vector<int> ReferenceStats::probe(const Matrix& mel, int speaker) const {
  const Matrix& means = class_means.at(static_cast<std::size_t>(speaker));
  std::vector<int> out(static_cast<std::size_t>(mel.rows()));
  for (Eigen::Index t = 0; t < mel.rows(); ++t) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < num_classes; ++c) {
      const double d = (means.row(c) - mel.row(t)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    out[static_cast<std::size_t>(t)] = best;
  }
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["pairs"] = pairs;
  j["content_accuracy"] = content_accuracy;
  j["content_accuracy_chance"] = content_accuracy_chance;
  j["style_win_rate"] = style_win_rate;
  j["mean_similarity_to_target"] = mean_similarity_to_target;
  j["mean_similarity_to_source"] = mean_similarity_to_source;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& p : pair_results) {
    rows.push_back({{"source_speaker", p.source_speaker},
                    {"target_speaker", p.target_speaker},
                    {"source_utterance", p.source_utterance},
                    {"similarity_to_target", p.similarity_to_target},
                    {"similarity_to_source", p.similarity_to_source},
                    {"content_accuracy", p.content_accuracy}});
  }
  j["pair_results"] = rows;
  return j;
}

EvalReport evaluate(const VoiceConversionModel& model, const RunConfig& config, const std::vector<Utterance>& reference,
                    const std::vector<Utterance>& eval_set, int pairs) {
  if (pairs < 1) throw std::invalid_argument("evaluate: need at least one pair");
  const int num_speakers = config.corpus.num_speakers;
  const int num_classes = config.corpus.num_phone_classes;
  std::vector<std::vector<std::size_t>> by_speaker(static_cast<std::size_t>(num_speakers));
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    const int s = eval_set[i].speaker_id;
    if (s < 0 || s >= num_speakers) throw std::out_of_range("evaluate: bad speaker id");
    by_speaker[static_cast<std::size_t>(s)].push_back(i);
  }
  std::vector<int> present;
  for (int s = 0; s < num_speakers; ++s) {
    if (!by_speaker[static_cast<std::size_t>(s)].empty()) present.push_back(s);
  }
  if (present.size() < 2) throw std::invalid_argument("evaluate: need at least 2 speakers in the evaluation set");
  std::vector<std::pair<int, int>> speaker_pairs;
  for (int s : present) {
    for (int t : present) {
      if (s != t) speaker_pairs.emplace_back(s, t);
    }
  }

  const ReferenceStats ref = ReferenceStats::build(reference, num_speakers, num_classes);
  std::map<int, Stylebook> books;
  EvalReport report;
  report.pairs = pairs;
  report.content_accuracy_chance = 1.0 / num_classes;
  double correct = 0.0, frames = 0.0;
  int wins = 0;
  for (int i = 0; i < pairs; ++i) {
    const auto [s, t] = speaker_pairs[static_cast<std::size_t>(i) % speaker_pairs.size()];
    const auto& src_list = by_speaker[static_cast<std::size_t>(s)];
    const std::size_t src_index = src_list[(static_cast<std::size_t>(i) / speaker_pairs.size()) % src_list.size()];
    const Utterance& src = eval_set[src_index];
    const Eigen::Index len = std::min<Eigen::Index>(src.length(), config.eval.source_frames);

    auto it = books.find(t);
    if (it == books.end()) {
      std::vector<Utterance> targets;
      const auto& tgt_list = by_speaker[static_cast<std::size_t>(t)];
      for (std::size_t k = 0; k < tgt_list.size() && static_cast<int>(k) < config.eval.target_utterances; ++k) {
        targets.push_back(eval_set[tgt_list[k]]);
      }
      it = books.emplace(t, model.enroll(targets, "speaker " + std::to_string(t))).first;
    }
    const Matrix converted = model.convert(src.content_features.topRows(len), it->second, config.schedule,
                                           config.eval.seed + static_cast<std::uint64_t>(i));
    PairResult pr;
    pr.source_speaker = s;
    pr.target_speaker = t;
    pr.source_utterance = src_index;
    pr.similarity_to_target = ref.style_similarity(converted, t);
    pr.similarity_to_source = ref.style_similarity(converted, s);
    const std::vector<int> predicted = ref.probe(converted, t);
    int hits = 0;
    for (Eigen::Index f = 0; f < len; ++f) {
      if (predicted[static_cast<std::size_t>(f)] == src.phone_labels[static_cast<std::size_t>(f)]) ++hits;
    }
    pr.content_accuracy = static_cast<double>(hits) / static_cast<double>(len);
    correct += hits;
    frames += static_cast<double>(len);
    if (pr.similarity_to_target > pr.similarity_to_source) ++wins;
    report.mean_similarity_to_target += pr.similarity_to_target / pairs;
    report.mean_similarity_to_source += pr.similarity_to_source / pairs;
    report.pair_results.push_back(pr);
  }
  report.content_accuracy = correct / frames;
  report.style_win_rate = static_cast<double>(wins) / pairs;
  return report;
}

nlohmann::json AttentionAnalysis::summary_json() const {
  nlohmann::json j;
  j["classes"] = classes;
  j["mean_within_class"] = mean_within_class;
  j["mean_between_class"] = mean_between_class;
  j["adjacent_pair_rank"] = adjacent_pair_rank;
  j["off_diagonal_pairs"] = off_diagonal_pairs;
  j["globally_used_entries"] = globally_used_entries;
  return j;
}

AttentionAnalysis analyze_attention(const VoiceConversionModel& model, const std::vector<Utterance>& eval_set,
                                    int num_classes, std::pair<int, int> adjacent_classes) {
  if (eval_set.empty()) throw std::invalid_argument("analyze_attention: empty evaluation set");
  const MultiHeadAttention& retrieve = model.dual.retrieve_attention;
  const Matrix& queries = model.dual.query_set.value;

  std::vector<AttentionProfile> per_utt;
  Eigen::Index total = 0;
  std::vector<Matrix> embeddings;
  for (const auto& u : eval_set) {
    embeddings.push_back(model.content_embeddings(u.content_features));
    per_utt.push_back(attention_profile(retrieve, embeddings.back(), queries, u.phone_labels, num_classes));
    total += u.length();
  }
  Matrix all(total, embeddings[0].cols());
  std::vector<int> labels;
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    all.middleRows(at, embeddings[i].rows()) = embeddings[i];
    at += embeddings[i].rows();
    labels.insert(labels.end(), eval_set[i].phone_labels.begin(), eval_set[i].phone_labels.end());
  }
  const AttentionProfile pooled = attention_profile(retrieve, all, queries, labels, num_classes);

  AttentionAnalysis a;
  a.classes = pooled.classes;
  a.profiles = pooled.profiles;
  a.similarity = pooled.similarity;

  // Within/between similarities compare profiles from different utterances.
  double within = 0.0, between = 0.0;
  double n_within = 0.0, n_between = 0.0;
  for (std::size_t u = 0; u < per_utt.size(); ++u) {
    for (std::size_t v = u + 1; v < per_utt.size(); ++v) {
      const auto& pu = per_utt[u];
      const auto& pv = per_utt[v];
      for (std::size_t i = 0; i < pu.classes.size(); ++i) {
        for (std::size_t j = 0; j < pv.classes.size(); ++j) {
          const double c = cosine(pu.profiles.row(static_cast<Eigen::Index>(i)),
                                  pv.profiles.row(static_cast<Eigen::Index>(j)));
          if (pu.classes[i] == pv.classes[j]) {
            within += c;
            n_within += 1.0;
          } else {
            between += c;
            n_between += 1.0;
          }
        }
      }
    }
  }
  a.mean_within_class = n_within > 0.0 ? within / n_within : 0.0;
  a.mean_between_class = n_between > 0.0 ? between / n_between : 0.0;

  const Eigen::Index n = static_cast<Eigen::Index>(a.classes.size());
  std::vector<std::pair<double, std::pair<int, int>>> off;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      off.push_back({a.similarity(i, j), {a.classes[static_cast<std::size_t>(i)], a.classes[static_cast<std::size_t>(j)]}});
    }
  }
  std::stable_sort(off.begin(), off.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  a.off_diagonal_pairs = static_cast<int>(off.size());
  const std::pair<int, int> adj{std::min(adjacent_classes.first, adjacent_classes.second),
                                std::max(adjacent_classes.first, adjacent_classes.second)};
  for (std::size_t r = 0; r < off.size(); ++r) {
    if (off[r].second == adj) a.adjacent_pair_rank = static_cast<int>(r) + 1;
  }

  const double uniform = 1.0 / static_cast<double>(queries.rows());
  for (Eigen::Index q = 0; q < a.profiles.cols(); ++q) {
    int above = 0;
    for (Eigen::Index c = 0; c < n; ++c) {
      if (a.profiles(c, q) > uniform) ++above;
    }
    if (n > 0 && static_cast<double>(above) >= 0.9 * static_cast<double>(n)) ++a.globally_used_entries;
  }
  return a;
}

void write_attention_tables(const std::filesystem::path& dir, const AttentionAnalysis& analysis) {
  std::filesystem::create_directories(dir);
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  std::string profiles = "class";
  for (Eigen::Index q = 0; q < analysis.profiles.cols(); ++q) profiles += "\tentry_" + std::to_string(q);
  profiles += "\n";
  for (Eigen::Index i = 0; i < analysis.profiles.rows(); ++i) {
    profiles += std::to_string(analysis.classes[static_cast<std::size_t>(i)]);
    for (Eigen::Index q = 0; q < analysis.profiles.cols(); ++q) profiles += "\t" + fmt(analysis.profiles(i, q));
    profiles += "\n";
  }
  std::string sim = "class";
  for (int c : analysis.classes) sim += "\t" + std::to_string(c);
  sim += "\n";
  for (Eigen::Index i = 0; i < analysis.similarity.rows(); ++i) {
    sim += std::to_string(analysis.classes[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < analysis.similarity.cols(); ++j) sim += "\t" + fmt(analysis.similarity(i, j));
    sim += "\n";
  }
  std::ofstream(dir / "profiles.tsv", std::ios::binary) << profiles;
  std::ofstream(dir / "similarity.tsv", std::ios::binary) << sim;
}

}  // namespace stylebook
