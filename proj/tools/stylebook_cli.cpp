// Command-line front end. Every subcommand reads and writes files under the
// run directory (--run-dir, else $STYLEBOOK_RUN_DIR, else output_dir from
// the config) so subcommands can be chained as separate processes.

#include "stylebook/config.hpp"
#include "stylebook/evaluation.hpp"
#include "stylebook/io.hpp"
#include "stylebook/knn.hpp"
#include "stylebook/stylebook.hpp"
#include "stylebook/synth_corpus.hpp"
#include "stylebook/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace stylebook;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string run_dir;
};

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig config = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
  for (const std::string& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  config.validate();
  return config;
}

fs::path resolve_run_dir(const GlobalOptions& g, const RunConfig& config) {
  if (!g.run_dir.empty()) return g.run_dir;
  if (const char* env = std::getenv("STYLEBOOK_RUN_DIR"); env != nullptr && *env != '\0') return env;
  return config.output_dir;
}

fs::path corpus_dir(const fs::path& run) { return run / "corpus"; }
fs::path units_path(const fs::path& run) { return run / "units.sbck"; }
fs::path default_checkpoint(const fs::path& run) { return run / "checkpoints" / "checkpoint_final.sbck"; }

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

struct Splits {
  Corpus corpus;
  std::vector<Utterance> train, eval;
};

Splits load_splits(const fs::path& run, const RunConfig& config) {
  Splits s;
  s.corpus = load_corpus(corpus_dir(run));
  std::tie(s.train, s.eval) = split_corpus(s.corpus.utterances, config.sizing.train_fraction);
  return s;
}

std::vector<Utterance> speaker_utterances(const std::vector<Utterance>& set, int speaker, int count) {
  std::vector<Utterance> out;
  for (const Utterance& u : set) {
    if (u.speaker_id == speaker && static_cast<int>(out.size()) < count) out.push_back(u);
  }
  if (out.empty()) throw std::invalid_argument("no evaluation utterances for speaker " + std::to_string(speaker));
  return out;
}

const Utterance& utterance_at(const std::vector<Utterance>& set, std::size_t index) {
  if (index >= set.size()) {
    throw std::invalid_argument("utterance index " + std::to_string(index) + " out of range (evaluation split has " +
                                std::to_string(set.size()) + ")");
  }
  return set[index];
}

Matrix crop(const Matrix& m, int frames) {
  if (frames <= 0 || frames >= m.rows()) return m;
  return m.topRows(frames);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  write_file_bytes(path, text);
}

// synth-corpus

void cmd_synth_corpus(const GlobalOptions& g) {
  const RunConfig config = resolve_config(g);
  const fs::path run = resolve_run_dir(g, config);
  const Corpus corpus =
      generate_corpus(config.corpus, config.sizing.utterances_per_speaker, config.sizing.frames_per_utterance);
  save_corpus(corpus_dir(run), corpus);
  std::cout << "wrote " << corpus.utterances.size() << " utterances to " << corpus_dir(run).string() << "\n";
}

// fit-units

void save_units(const fs::path& path, const Codebook& codebook, const RunConfig& config) {
  TensorArchive archive;
  archive.metadata = nlohmann::json{{"num_units", config.model.encoder.num_units},
                                    {"iterations", config.units.iterations},
                                    {"seed", config.units.seed}}
                         .dump();
  archive.tensors["codebook.centroids"] = codebook.centroids;
  ensure_parent(path);
  write_archive(path, archive);
}

Codebook load_units(const fs::path& path) {
  const TensorArchive archive = read_archive(path);
  const auto it = archive.tensors.find("codebook.centroids");
  if (it == archive.tensors.end()) throw FormatError("units file lacks codebook.centroids: " + path.string());
  Codebook codebook;
  codebook.centroids = it->second;
  return codebook;
}

void cmd_fit_units(const GlobalOptions& g) {
  const RunConfig config = resolve_config(g);
  const fs::path run = resolve_run_dir(g, config);
  const Splits s = load_splits(run, config);
  const Codebook codebook = fit_units(config, s.train);
  save_units(units_path(run), codebook, config);
  std::cout << "wrote " << codebook.centroids.rows() << " units to " << units_path(run).string() << "\n";
}

// train

void cmd_train(const GlobalOptions& g) {
  const RunConfig config = resolve_config(g);
  const fs::path run = resolve_run_dir(g, config);
  const Splits s = load_splits(run, config);
  VoiceConversionModel model;
  if (fs::exists(units_path(run))) {
    Codebook codebook = load_units(units_path(run));
    if (codebook.centroids.rows() != config.model.encoder.num_units ||
        codebook.centroids.cols() != config.model.content_feature_dim) {
      throw std::invalid_argument("units file does not match model.num_units / content dim; rerun fit-units");
    }
    model = VoiceConversionModel(config.model, std::move(codebook), config.model_seed);
  } else {
    model = initialize_model(config, s.train);
  }
  const int log_every = config.training.log_every;
  const TrainingResult result =
      train(model, config, s.train, run / "checkpoints", [log_every](const LossPoint& p) {
        if (log_every > 0 && p.step % log_every == 0) {
          std::cout << "step " << p.step << " total " << p.total << " diffusion " << p.diffusion << " encoder "
                    << p.encoder << std::endl;
        }
      });
  std::ostringstream tsv;
  tsv << "step\ttotal\tdiffusion\tencoder\n";
  for (const LossPoint& p : result.losses) {
    tsv << p.step << '\t' << format_double(p.total) << '\t' << format_double(p.diffusion) << '\t'
        << format_double(p.encoder) << '\n';
  }
  write_text(run / "losses.tsv", tsv.str());
  std::cout << "wrote " << default_checkpoint(run).string() << "\n";
}

// enroll

struct EnrollOptions {
  std::string checkpoint;
  int speaker = 0;
  int utterances = 0;
  std::string out;
};

void cmd_enroll(const GlobalOptions& g, const EnrollOptions& o) {
  const RunConfig config = resolve_config(g);
  const fs::path run = resolve_run_dir(g, config);
  const fs::path ckpt_path = o.checkpoint.empty() ? default_checkpoint(run) : fs::path(o.checkpoint);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Splits s = load_splits(run, ckpt.config);
  const int count = o.utterances > 0 ? o.utterances : ckpt.config.eval.target_utterances;
  const std::vector<Utterance> targets = speaker_utterances(s.eval, o.speaker, count);
  const std::string provenance =
      "speaker=" + std::to_string(o.speaker) + ";utterances=" + std::to_string(targets.size());
  const Stylebook book = ckpt.model.enroll(targets, provenance);
  const fs::path out =
      o.out.empty() ? run / "stylebooks" / ("speaker_" + std::to_string(o.speaker) + ".sbsb") : fs::path(o.out);
  ensure_parent(out);
  write_stylebook(out, book);
  std::cout << "wrote " << out.string() << " (" << stylebook_payload_bytes(book) << " payload bytes)\n";
}

// convert

struct ConvertOptions {
  std::string checkpoint;
  std::string stylebook;
  std::size_t source = 0;
  int frames = 0;
  std::optional<int> steps;
  std::optional<double> guidance_style;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void cmd_convert(const GlobalOptions& g, const ConvertOptions& o) {
  const RunConfig config = resolve_config(g);
  const fs::path run = resolve_run_dir(g, config);
  const fs::path ckpt_path = o.checkpoint.empty() ? default_checkpoint(run) : fs::path(o.checkpoint);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Stylebook book = read_stylebook(o.stylebook);
  const Splits s = load_splits(run, ckpt.config);
  const Utterance& src = utterance_at(s.eval, o.source);
  DiffusionSchedule schedule = ckpt.config.schedule;
  if (o.steps) schedule.steps = *o.steps;
  if (o.guidance_style) schedule.guidance_scale_style = *o.guidance_style;
  schedule.validate();
  const std::uint64_t seed = o.seed.value_or(ckpt.config.eval.seed + o.source);
  const Matrix out_mel = ckpt.model.convert(crop(src.content_features, o.frames), book, schedule, seed);
  const fs::path out =
      o.out.empty() ? run / "converted" / ("utterance_" + std::to_string(o.source) + ".sbm") : fs::path(o.out);
  ensure_parent(out);
  write_matrix_file(out, out_mel);
  std::cout << "wrote " << out.string() << " (" << out_mel.rows() << " frames)\n";
}

// baseline-knn

struct KnnOptions {
  int target_speaker = 0;
  int target_utterances = 0;
  std::size_t source = 0;
  int frames = 0;
  int k = 4;
  std::string out;
};

// Bank frames are [content | mel] rows of the target speaker; the mel
// columns of the matched mean are the converted output.
Matrix joint_frames(const Utterance& u) {
  Matrix m(u.length(), u.content_features.cols() + u.mel_frames.cols());
  m << u.content_features, u.mel_frames;
  return m;
}

void cmd_baseline_knn(const GlobalOptions& g, const KnnOptions& o) {
  const RunConfig config = resolve_config(g);
  const fs::path run = resolve_run_dir(g, config);
  const Splits s = load_splits(run, config);
  const int count = o.target_utterances > 0 ? o.target_utterances : config.eval.target_utterances;
  const std::vector<Utterance> targets = speaker_utterances(s.eval, o.target_speaker, count);
  Eigen::Index rows = 0;
  for (const Utterance& u : targets) rows += u.length();
  TargetBank bank{Matrix(rows, targets.front().content_features.cols() + targets.front().mel_frames.cols())};
  Eigen::Index at = 0;
  for (const Utterance& u : targets) {
    bank.frames.middleRows(at, u.length()) = joint_frames(u);
    at += u.length();
  }
  const Utterance& src = utterance_at(s.eval, o.source);
  const Matrix source = crop(joint_frames(src), o.frames);
  const Matrix matched = knn_match(bank, source, o.k);
  const Matrix out_mel = matched.rightCols(src.mel_frames.cols());

  const fs::path bank_path = run / "knn" / ("bank_speaker_" + std::to_string(o.target_speaker) + ".sbm");
  ensure_parent(bank_path);
  write_matrix_file(bank_path, bank.frames);
  const fs::path out = o.out.empty() ? run / "knn" / ("converted_" + std::to_string(o.source) + "_to_" +
                                                      std::to_string(o.target_speaker) + ".sbm")
                                     : fs::path(o.out);
  ensure_parent(out);
  write_matrix_file(out, out_mel);
  std::cout << "bank " << bank.frames.rows() << " frames, " << bank_memory_bytes(bank) << " bytes; wrote "
            << out.string() << "\n";
}

// bench-memory

void cmd_bench_memory(const GlobalOptions& g, const std::vector<double>& seconds) {
  const RunConfig config = resolve_config(g);
  const fs::path run = resolve_run_dir(g, config);
  std::ostringstream tsv;
  tsv << "method";
  for (double s : seconds) tsv << "\tkib_at_" << format_double(s) << "s";
  tsv << '\n';
  for (MemoryMethod m : all_memory_methods()) {
    tsv << memory_method_name(m);
    for (double s : seconds) tsv << '\t' << format_double(memory_model_kib(m, s));
    tsv << '\n';
  }
  write_text(run / "memory.tsv", tsv.str());
  std::cout << tsv.str();
}

// evaluate

void cmd_evaluate(const GlobalOptions& g, const std::string& checkpoint, int pairs) {
  const RunConfig config = resolve_config(g);
  const fs::path run = resolve_run_dir(g, config);
  const Checkpoint ckpt = load_checkpoint(checkpoint.empty() ? default_checkpoint(run) : fs::path(checkpoint));
  const Splits s = load_splits(run, ckpt.config);
  const EvalReport report =
      evaluate(ckpt.model, ckpt.config, s.train, s.eval, pairs > 0 ? pairs : ckpt.config.eval.pairs);
  write_text(run / "eval" / "report.json", report.to_json().dump(2) + "\n");
  std::cout << "content_accuracy " << report.content_accuracy << " style_win_rate " << report.style_win_rate
            << " pairs " << report.pairs << "\n";
}

// analyze-attention

void cmd_analyze_attention(const GlobalOptions& g, const std::string& checkpoint) {
  const RunConfig config = resolve_config(g);
  const fs::path run = resolve_run_dir(g, config);
  const Checkpoint ckpt = load_checkpoint(checkpoint.empty() ? default_checkpoint(run) : fs::path(checkpoint));
  const Splits s = load_splits(run, ckpt.config);
  const AttentionAnalysis a =
      analyze_attention(ckpt.model, s.eval, ckpt.config.corpus.num_phone_classes, Corpus::kAdjacentClasses);
  const fs::path dir = run / "attention";
  fs::create_directories(dir);
  write_attention_tables(dir, a);
  write_text(dir / "summary.json", a.summary_json().dump(2) + "\n");
  std::cout << a.summary_json().dump() << "\n";
}

std::string json_escape(const std::string& s) { return nlohmann::json(s).dump(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stylebook voice conversion on synthetic feature corpora"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("-c,--config", g.config_path, "JSON run config")->check(CLI::ExistingFile);
  app.add_option("-s,--set", g.overrides, "Override a config field, e.g. --set training.steps=500");
  app.add_option("--run-dir", g.run_dir, "Run directory (default: $STYLEBOOK_RUN_DIR, then output_dir)");

  auto* synth = app.add_subcommand("synth-corpus", "Generate the synthetic corpus");

  auto* units = app.add_subcommand("fit-units", "Fit the k-means unit codebook on the training split");
  std::optional<int> num_units, unit_iters;
  std::optional<std::uint64_t> unit_seed;
  units->add_option("--units", num_units, "Number of units K");
  units->add_option("--iterations", unit_iters, "Lloyd iterations");
  units->add_option("--seed", unit_seed, "Initialization seed");

  auto* train_cmd = app.add_subcommand("train", "Train the model");
  std::optional<int> train_steps;
  train_cmd->add_option("--steps", train_steps, "Training steps");

  auto* enroll = app.add_subcommand("enroll", "Build a stylebook file for one target speaker");
  EnrollOptions eo;
  enroll->add_option("--checkpoint", eo.checkpoint, "Checkpoint file");
  enroll->add_option("--speaker", eo.speaker, "Target speaker id")->required();
  enroll->add_option("--utterances", eo.utterances, "Number of evaluation-split utterances to enroll");
  enroll->add_option("-o,--out", eo.out, "Output stylebook file");

  auto* convert = app.add_subcommand("convert", "Convert a source utterance with a stylebook file");
  ConvertOptions co;
  convert->add_option("--checkpoint", co.checkpoint, "Checkpoint file");
  convert->add_option("--stylebook", co.stylebook, "Stylebook file")->required()->check(CLI::ExistingFile);
  convert->add_option("--source", co.source, "Source utterance index in the evaluation split");
  convert->add_option("--frames", co.frames, "Crop the source to this many frames (0 keeps all)");
  convert->add_option("--steps", co.steps, "Reverse-diffusion steps");
  convert->add_option("--guidance-style", co.guidance_style, "Style guidance scale");
  convert->add_option("--seed", co.seed, "Sampling seed (default eval.seed + source)");
  convert->add_option("-o,--out", co.out, "Output matrix file");

  auto* knn = app.add_subcommand("baseline-knn", "kNN frame-matching baseline");
  KnnOptions ko;
  knn->add_option("--target-speaker", ko.target_speaker, "Target speaker id")->required();
  knn->add_option("--target-utterances", ko.target_utterances, "Number of target utterances in the bank");
  knn->add_option("--source", ko.source, "Source utterance index in the evaluation split");
  knn->add_option("--frames", ko.frames, "Crop the source to this many frames (0 keeps all)");
  knn->add_option("-k", ko.k, "Neighbours per frame");
  knn->add_option("-o,--out", ko.out, "Output matrix file");

  auto* bench = app.add_subcommand("bench-memory", "Per-speaker style storage for each method");
  std::vector<double> seconds{10.0, 60.0, 300.0};
  bench->add_option("--seconds", seconds, "Target durations in seconds");

  auto* eval = app.add_subcommand("evaluate", "Content and style probes over cross-speaker pairs");
  std::string eval_ckpt;
  int eval_pairs = 0;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file");
  eval->add_option("--pairs", eval_pairs, "Number of pairs (default eval.pairs)");

  auto* attn = app.add_subcommand("analyze-attention", "Per-class attention profiles and their similarity");
  std::string attn_ckpt;
  attn->add_option("--checkpoint", attn_ckpt, "Checkpoint file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::string command = app.get_subcommands().front()->get_name();
  try {
    if (num_units) g.overrides.push_back("units.num_units=" + std::to_string(*num_units));
    if (unit_iters) g.overrides.push_back("units.iterations=" + std::to_string(*unit_iters));
    if (unit_seed) g.overrides.push_back("units.seed=" + std::to_string(*unit_seed));
    if (train_steps) g.overrides.push_back("training.steps=" + std::to_string(*train_steps));

    if (*synth) cmd_synth_corpus(g);
    else if (*units) cmd_fit_units(g);
    else if (*train_cmd) cmd_train(g);
    else if (*enroll) cmd_enroll(g, eo);
    else if (*convert) cmd_convert(g, co);
    else if (*knn) cmd_baseline_knn(g, ko);
    else if (*bench) cmd_bench_memory(g, seconds);
    else if (*eval) cmd_evaluate(g, eval_ckpt, eval_pairs);
    else if (*attn) cmd_analyze_attention(g, attn_ckpt);
    return 0;
  } catch (const std::exception& e) {
    std::string kind = "error";
    if (dynamic_cast<const std::invalid_argument*>(&e)) kind = "invalid_argument";
    else if (dynamic_cast<const FormatError*>(&e)) kind = "format_error";
    else if (dynamic_cast<const IoError*>(&e)) kind = "io_error";
    else if (dynamic_cast<const DivergenceError*>(&e)) kind = "divergence";
    std::cerr << "{\"error\":" << json_escape(kind) << ",\"command\":" << json_escape(command)
              << ",\"message\":" << json_escape(e.what()) << "}" << std::endl;
    return 1;
  }
}
