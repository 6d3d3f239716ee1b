#include "stylebook/config.hpp"

#include "stylebook/io.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>
#include <variant>
#include <vector>

namespace stylebook {

ModelConfig desk_model_config() {
  ModelConfig m;
  m.encoder.num_units = 100;
  m.encoder.model_dim = 128;
  m.encoder.num_layers = 2;
  m.encoder.num_heads = 2;
  m.encoder.ff_dim = 256;
  m.stylebook.query_dim = 128;
  m.stylebook.attention_dim = 128;
  m.stylebook.mel_hidden = 128;
  m.stylebook.style_channels = 128;
  return m;
}

namespace {

using FieldRef = std::variant<int*, double*, std::uint64_t*, bool*, std::string*>;

struct Field {
  std::string key;
  FieldRef ref;
};

std::vector<Field> fields(RunConfig& c) {
  return {
      {"corpus.num_phone_classes", &c.corpus.num_phone_classes},
      {"corpus.num_speakers", &c.corpus.num_speakers},
      {"corpus.content_dim", &c.corpus.content_dim},
      {"corpus.mel_dim", &c.corpus.mel_dim},
      {"corpus.frame_rate", &c.corpus.frame_rate},
      {"corpus.mean_phone_duration", &c.corpus.mean_phone_duration},
      {"corpus.content_noise_sigma", &c.corpus.content_noise_sigma},
      {"corpus.adjacent_class_separation", &c.corpus.adjacent_class_separation},
      {"corpus.speaker_map_spread", &c.corpus.speaker_map_spread},
      {"corpus.identity_speaker_maps", &c.corpus.identity_speaker_maps},
      {"corpus.seed", &c.corpus.seed},
      {"corpus.utterances_per_speaker", &c.sizing.utterances_per_speaker},
      {"corpus.frames_per_utterance", &c.sizing.frames_per_utterance},
      {"corpus.train_fraction", &c.sizing.train_fraction},
      {"units.num_units", &c.model.encoder.num_units},
      {"units.iterations", &c.units.iterations},
      {"units.seed", &c.units.seed},
      {"model.encoder_dim", &c.model.encoder.model_dim},
      {"model.encoder_layers", &c.model.encoder.num_layers},
      {"model.encoder_heads", &c.model.encoder.num_heads},
      {"model.encoder_ff", &c.model.encoder.ff_dim},
      {"model.num_queries", &c.model.stylebook.num_queries},
      {"model.query_dim", &c.model.stylebook.query_dim},
      {"model.stylebook_dim", &c.model.stylebook.stylebook_dim},
      {"model.attention_dim", &c.model.stylebook.attention_dim},
      {"model.attention_heads", &c.model.stylebook.attention_heads},
      {"model.mel_hidden", &c.model.stylebook.mel_hidden},
      {"model.style_channels", &c.model.stylebook.style_channels},
      {"model.score_base_dim", &c.model.score_base_dim},
      {"model.score_time_dim", &c.model.score_time_dim},
      {"model.score_data_std", &c.model.score_data_std},
      {"model.seed", &c.model_seed},
      {"schedule.beta_0", &c.schedule.beta_0},
      {"schedule.beta_1", &c.schedule.beta_1},
      {"schedule.steps", &c.schedule.steps},
      {"schedule.guidance_content", &c.schedule.guidance_scale_content},
      {"schedule.guidance_style", &c.schedule.guidance_scale_style},
      {"schedule.uncond_drop_prob", &c.schedule.uncond_drop_prob},
      {"optimizer.learning_rate", &c.optimizer.learning_rate},
      {"optimizer.beta1", &c.optimizer.beta1},
      {"optimizer.beta2", &c.optimizer.beta2},
      {"optimizer.epsilon", &c.optimizer.epsilon},
      {"training.steps", &c.training.steps},
      {"training.batch_size", &c.training.batch_size},
      {"training.segment_frames", &c.training.segment_frames},
      {"training.log_every", &c.training.log_every},
      {"training.checkpoint_every", &c.training.checkpoint_every},
      {"training.seed", &c.training.seed},
      {"eval.pairs", &c.eval.pairs},
      {"eval.source_frames", &c.eval.source_frames},
      {"eval.target_utterances", &c.eval.target_utterances},
      {"eval.seed", &c.eval.seed},
      {"output_dir", &c.output_dir},
  };
}

const nlohmann::json* find_dotted(const nlohmann::json& j, const std::string& key) {
  const nlohmann::json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object() || !cur->contains(part)) return nullptr;
    cur = &(*cur)[part];
    if (dot == std::string::npos) return cur;
    start = dot + 1;
  }
}

void collect_leaf_keys(const nlohmann::json& j, const std::string& prefix, std::vector<std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      collect_leaf_keys(*it, key, out);
    } else {
      out.push_back(key);
    }
  }
}

void put_dotted(nlohmann::json& j, const std::string& key, nlohmann::json value) {
  nlohmann::json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    if (dot == std::string::npos) {
      (*cur)[key.substr(start)] = std::move(value);
      return;
    }
    cur = &(*cur)[key.substr(start, dot - start)];
    start = dot + 1;
  }
}

template <typename T>
T parse_scalar(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    T v{};
    if constexpr (std::is_same_v<T, int>) {
      v = std::stoi(text, &used);
    } else if constexpr (std::is_same_v<T, double>) {
      v = std::stod(text, &used);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
      v = std::stoull(text, &used);
    }
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad value '" + text + "' for " + key);
  }
}

}  // namespace

void RunConfig::validate() const {
  corpus.validate();
  model.validate();
  schedule.validate();
  if (model.content_feature_dim != corpus.content_dim || model.mel_dim != corpus.mel_dim) {
    throw std::invalid_argument("config: model feature dims must match the corpus");
  }
  if (sizing.utterances_per_speaker < 2) throw std::invalid_argument("config: need >= 2 utterances per speaker");
  if (sizing.frames_per_utterance < 1) throw std::invalid_argument("config: frames_per_utterance must be >= 1");
  if (!(sizing.train_fraction > 0.0 && sizing.train_fraction < 1.0)) {
    throw std::invalid_argument("config: train_fraction must be in (0, 1)");
  }
  if (units.iterations < 1) throw std::invalid_argument("config: units.iterations must be >= 1");
  if (!(optimizer.learning_rate > 0.0) || !(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
      !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0) || !(optimizer.epsilon > 0.0)) {
    throw std::invalid_argument("config: invalid optimizer settings");
  }
  if (training.steps < 0 || training.batch_size < 1 || training.segment_frames < 1 || training.log_every < 1 ||
      training.checkpoint_every < 0) {
    throw std::invalid_argument("config: invalid training settings");
  }
  if (training.segment_frames > sizing.frames_per_utterance) {
    throw std::invalid_argument("config: segment_frames exceeds frames_per_utterance");
  }
  if (eval.pairs < 1 || eval.source_frames < 1 || eval.target_utterances < 1) {
    throw std::invalid_argument("config: invalid eval settings");
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : fields(const_cast<RunConfig&>(*this))) {
    std::visit([&](auto* p) { put_dotted(j, f.key, *p); }, f.ref);
  }
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  std::vector<Field> fs = fields(c);
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  std::vector<std::string> present;
  collect_leaf_keys(j, "", present);
  for (const std::string& key : present) {
    const bool known = std::any_of(fs.begin(), fs.end(), [&](const Field& f) { return f.key == key; });
    if (!known) throw std::invalid_argument("config: unknown key " + key);
  }
  for (const auto& f : fs) {
    const nlohmann::json* v = find_dotted(j, f.key);
    if (v == nullptr) continue;
    try {
      std::visit([&](auto* p) { *p = v->get<std::remove_pointer_t<decltype(p)>>(); }, f.ref);
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument("config: wrong type for " + f.key);
    }
  }
  c.model.content_feature_dim = c.corpus.content_dim;
  c.model.mel_dim = c.corpus.mel_dim;
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields(*this)) {
    if (f.key != key) continue;
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, std::string>) {
            *p = value;
          } else if constexpr (std::is_same_v<T, bool>) {
            if (value == "true" || value == "1") {
              *p = true;
            } else if (value == "false" || value == "0") {
              *p = false;
            } else {
              throw std::invalid_argument("config: bad boolean '" + value + "' for " + key);
            }
          } else {
            *p = parse_scalar<T>(key, value);
          }
        },
        f.ref);
    model.content_feature_dim = corpus.content_dim;
    model.mel_dim = corpus.mel_dim;
    return;
  }
  throw std::invalid_argument("config: unknown key " + key);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return RunConfig::from_json(nlohmann::json::parse(read_file_bytes(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  write_file_bytes(path, config.to_json().dump(2) + "\n");
}

}  // namespace stylebook
