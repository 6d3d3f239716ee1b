// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance [--criteria 1,2,...] [--checkpoint FILE] [--work-dir DIR] [--cli PATH]
//
// Criteria 7 and 8 need a trained model. Without --checkpoint the default
// configuration is trained from scratch (the training time is part of
// criterion 7) and the result is saved under the work directory.

#include "oracles.hpp"
#include "test_support.hpp"

#include "stylebook/evaluation.hpp"
#include "stylebook/grad_check.hpp"
#include "stylebook/io.hpp"
#include "stylebook/knn.hpp"
#include "stylebook/stylebook.hpp"
#include "stylebook/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace stylebook;
using namespace stylebook::oracles;
using stylebook::testing::max_abs_diff;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, format, a);
  return buf;
}

// 1. Memory model table.

Outcome memory_table() {
  const auto t0 = Clock::now();
  struct Row {
    MemoryMethod method;
    double kib[3];
  };
  const Row rows[] = {{MemoryMethod::kYourTts, {2, 2, 2}},
                      {MemoryMethod::kFreeVc, {1, 1, 1}},
                      {MemoryMethod::kDiffVc, {1.5, 1.5, 1.5}},
                      {MemoryMethod::kProposed, {32, 32, 32}},
                      {MemoryMethod::kKnnVc, {2000, 12000, 60000}}};
  const double seconds[] = {10, 60, 300};
  int mismatches = 0;
  for (const Row& r : rows) {
    for (int i = 0; i < 3; ++i) mismatches += memory_model_kib(r.method, seconds[i]) != r.kib[i];
  }
  // Cross-checks against the storage arithmetic.
  mismatches += memory_model_kib(MemoryMethod::kProposed, 60) != 128.0 * 64 * 4 / 1024;
  mismatches += memory_model_kib(MemoryMethod::kKnnVc, 10) != 10.0 * 50 * 1024 * 4 / 1024;
  const double elapsed = seconds_since(t0);
  return {mismatches == 0 && elapsed < 1.0,
          std::to_string(mismatches) + " mismatches over 15 cells + 2 cross-checks, " + fmt("%.4f s", elapsed)};
}

// 2. Fixed-size stylebook.

Outcome fixed_size_stylebook(const fs::path& work) {
  const auto t0 = Clock::now();
  RunConfig config;
  const Corpus corpus =
      generate_corpus(config.corpus, config.sizing.utterances_per_speaker, config.sizing.frames_per_utterance);
  const auto [train_set, eval_set] = split_corpus(corpus.utterances, config.sizing.train_fraction);
  const VoiceConversionModel model = initialize_model(config, train_set);
  const double fps = config.corpus.frame_rate;
  const int chunk = static_cast<int>(10 * fps);  // enrolled in 10 s utterances

  const Utterance source = generate_utterance(corpus, 0, 200, 1001);
  const Matrix source_emb = model.content_embeddings(source.content_features);

  std::vector<std::uintmax_t> sizes;
  std::vector<std::size_t> payloads;
  std::vector<double> retrieve_times;
  for (double secs : {10.0, 60.0, 300.0}) {
    const int pieces = static_cast<int>(secs * fps) / chunk;
    std::vector<Utterance> targets;
    for (int i = 0; i < pieces; ++i) targets.push_back(generate_utterance(corpus, 1, chunk, 2000 + i));
    const Stylebook book = model.enroll(targets, "target " + fmt("%.0f s", secs));
    const fs::path path = work / ("stylebook_" + fmt("%.0f", secs) + "s.sbsb");
    write_stylebook(path, book);
    sizes.push_back(fs::file_size(path));
    payloads.push_back(stylebook_payload_bytes(read_stylebook(path)));

    // Median of repeated retrievals.
    std::vector<double> times;
    for (int rep = 0; rep < 15; ++rep) {
      const auto r0 = Clock::now();
      const Matrix styles = model.retrieve(source_emb, book);
      times.push_back(seconds_since(r0));
      if (styles.rows() != source_emb.rows()) times.back() = 1e9;
    }
    std::nth_element(times.begin(), times.begin() + 7, times.end());
    retrieve_times.push_back(times[7]);
  }
  const bool same_size = sizes[0] == sizes[1] && sizes[1] == sizes[2];
  const bool payload_ok = std::all_of(payloads.begin(), payloads.end(), [](std::size_t p) { return p == 32768; });
  const double ratio = *std::max_element(retrieve_times.begin(), retrieve_times.end()) /
                       *std::min_element(retrieve_times.begin(), retrieve_times.end());
  const double elapsed = seconds_since(t0);
  std::ostringstream d;
  d << "file sizes " << sizes[0] << "/" << sizes[1] << "/" << sizes[2] << " B, payload " << payloads[0]
    << " B, retrieve time ratio " << fmt("%.2f", ratio) << ", " << fmt("%.1f s", elapsed);
  return {same_size && payload_ok && ratio < 2.0 && elapsed < 60.0, d.str()};
}

// 3. Attention correctness.

Outcome attention_correctness() {
  const auto t0 = Clock::now();
  Rng rng(42);
  double worst_out = 0.0, worst_w = 0.0, worst_row = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int heads = 1 + static_cast<int>(rng.below(3));
    const Eigen::Index dh = 1 + static_cast<Eigen::Index>(rng.below(4));
    const Eigen::Index dq = 1 + rng.below(6), dk = 1 + rng.below(6), dv = 1 + rng.below(6), out = 1 + rng.below(5);
    const Eigen::Index R = 1 + rng.below(6), T = 1 + rng.below(7);
    MultiHeadAttention mha("m", heads, heads * dh, dq, dk, dv, out, rng);
    randomize(mha, rng);
    const Matrix Q = rng.normal_matrix(R, dq), K = rng.normal_matrix(T, dk), V = rng.normal_matrix(T, dv);
    Matrix w_fast, w_ref;
    const Matrix fast = mha_forward(mha, Q, K, V, &w_fast);
    const Matrix ref = naive_mha(mha, Q, K, V, &w_ref);
    worst_out = std::max(worst_out, max_abs_diff(fast, ref));
    worst_w = std::max(worst_w, max_abs_diff(w_fast, w_ref));
    for (Eigen::Index r = 0; r < R; ++r) worst_row = std::max(worst_row, std::abs(w_fast.row(r).sum() - 1.0));
  }

  // Joint permutation of the target frames fed to build_stylebook.
  RunConfig config;
  Rng model_rng(7);
  const DualAttention dual(config.model.stylebook, config.model.encoder.model_dim, model_rng);
  const Eigen::Index T = 300;
  const Matrix content = rng.normal_matrix(T, config.model.encoder.model_dim);
  const Matrix style = rng.normal_matrix(T, config.model.stylebook.style_channels);
  const std::vector<int> perm = random_permutation(static_cast<int>(T), rng);
  Matrix pc(T, content.cols()), ps(T, style.cols());
  for (Eigen::Index i = 0; i < T; ++i) {
    pc.row(i) = content.row(perm[static_cast<std::size_t>(i)]);
    ps.row(i) = style.row(perm[static_cast<std::size_t>(i)]);
  }
  const double perm_diff =
      max_abs_diff(build_stylebook(dual.summarize_attention, dual.query_set.value, content, style).entries,
                   build_stylebook(dual.summarize_attention, dual.query_set.value, pc, ps).entries);
  const double elapsed = seconds_since(t0);
  std::ostringstream d;
  d << "max |fast - naive| " << fmt("%.2e", worst_out) << " (weights " << fmt("%.2e", worst_w)
    << "), max |row sum - 1| " << fmt("%.2e", worst_row) << ", permutation change " << fmt("%.2e", perm_diff) << ", "
    << fmt("%.2f s", elapsed);
  return {worst_out <= 1e-10 && worst_w <= 1e-10 && worst_row <= 1e-6 && perm_diff < 1e-12 && elapsed < 60.0,
          d.str()};
}

// 4. Gradient suite.

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::map<std::string, double> errors;
  std::vector<std::string> zero;
  Rng rng(11);
  {
    Linear lin("lin", 5, 3, rng);
    Parameter x("x", rng.normal_matrix(4, 5));
    const Matrix target = rng.normal_matrix(4, 3);
    ParameterList params = lin.parameters();
    params.push_back(&x);
    errors["linear"] = grad_check(
        [&](Tape& t) { return ops::mse(lin.forward(t, t.param(x)), t.constant(target)); }, params, 1e-5)
                           .max_relative_error;
  }
  {
    Parameter logits("logits", rng.normal_matrix(6, 5, 2.0));
    const std::vector<int> labels{0, 4, 2, 2, 1, 3};
    errors["softmax_ce"] =
        grad_check([&](Tape& t) { return ops::softmax_cross_entropy(t.param(logits), labels); }, {&logits}, 1e-5)
            .max_relative_error;
  }
  {
    MultiHeadAttention mha("mha", 2, 8, 8, 8, 8, 8, rng);
    randomize(mha, rng);
    Parameter q("q", rng.normal_matrix(3, 8)), k("k", rng.normal_matrix(5, 8)), v("v", rng.normal_matrix(5, 8));
    const Matrix target = rng.normal_matrix(3, 8);
    ParameterList params = mha.parameters();
    params.insert(params.end(), {&q, &k, &v});
    const auto r = grad_check(
        [&](Tape& t) {
          return ops::mse(mha.forward(t, t.param(q), t.param(k), t.param(v), 3, 5), t.constant(target));
        },
        params, 1e-5);
    errors["mha"] = r.max_relative_error;
    zero.insert(zero.end(), r.zero_gradient.begin(), r.zero_gradient.end());
  }
  {
    StylebookConfig cfg{4, 6, 3, 8, 2, 6, 5};
    StyleEncoder enc(cfg, 3, 4, rng);
    DualAttention dual(cfg, 4, rng);
    const Eigen::Index L = 5;
    Parameter mel("mel", rng.normal_matrix(2 * L, 3));
    Parameter content("content", rng.normal_matrix(2 * L, 4));
    const Matrix target = rng.normal_matrix(2 * L, 3);
    ParameterList params = enc.parameters();
    for (Parameter* p : dual.parameters()) params.push_back(p);
    jitter_biases(params, rng);
    params.insert(params.end(), {&mel, &content});
    const auto r = grad_check(
        [&](Tape& t) {
          const Var c = t.param(content);
          const Var s = enc.forward(t, t.param(mel), c, L);
          return ops::mse(dual.retrieve(t, c, dual.summarize(t, c, s, L), L), t.constant(target));
        },
        params, 1e-5);
    errors["style_encoder+attention"] = r.max_relative_error;
    zero.insert(zero.end(), r.zero_gradient.begin(), r.zero_gradient.end());
  }
  {
    RunConfig c = stylebook::testing::tiny_config();
    c.model.encoder = {6, 8, 1, 2, 8};
    c.model.stylebook = {4, 6, 3, 8, 2, 8, 8};
    c.model.score_base_dim = 4;
    c.model.score_time_dim = 4;
    const Corpus corpus = generate_corpus(c.corpus, c.sizing.utterances_per_speaker, c.sizing.frames_per_utterance);
    const auto [train_set, eval_set] = split_corpus(corpus.utterances, c.sizing.train_fraction);
    VoiceConversionModel model = initialize_model(c, train_set);
    Rng brng(3);
    const TrainingBatch batch = sample_batch(model, train_set, 2, 8, brng);
    LossDraws draws = VoiceConversionModel::draw_loss_randomness(batch, 0.0, brng);
    draws.drop_style = {true, false};
    ParameterList params;
    model.collect(params);
    jitter_biases(params, brng);
    const auto r = grad_check(
        [&](Tape& t) { return model.training_loss(t, batch, draws, c.schedule).total; }, params, 1e-5, 6);
    errors["full_loss"] = r.max_relative_error;
  }
  double worst = 0.0;
  std::ostringstream d;
  for (const auto& [name, e] : errors) {
    worst = std::max(worst, e);
    d << name << " " << fmt("%.1e", e) << ", ";
  }
  const double elapsed = seconds_since(t0);
  d << "zero-gradient params " << zero.size() << ", " << fmt("%.1f s", elapsed);
  return {worst < 1e-4 && zero.empty() && elapsed < 300.0, d.str()};
}

// 5. Diffusion numerics.

Outcome diffusion_numerics() {
  const auto t0 = Clock::now();
  DiffusionSchedule s;
  Rng rng(21);
  const Eigen::Index n = 10000;
  double worst_mean = 0.0, worst_var = 0.0;
  for (double t : {0.1, 0.5, 0.9}) {
    const Matrix data = (rng.normal_matrix(n, 1) * 0.5).array() + 2.0;
    const Matrix prior = Matrix::Constant(n, 1, -1.0);
    const Moments m = moments(forward_perturb(data, prior, t, rng.normal_matrix(n, 1), s));
    const double a = s.decay(t);
    const double mean = -1.0 + 3.0 * a, var = a * a * 0.25 + s.variance(t);
    worst_mean = std::max(worst_mean, std::abs(m.mean(0) - mean) / std::sqrt(var));
    worst_var = std::max(worst_var, std::abs(m.cov(0, 0) - var) / var);
  }

  // CFG identities.
  const Matrix x = rng.normal_matrix(5, 3), mu = rng.normal_matrix(5, 3), content = rng.normal_matrix(5, 4);
  const Matrix style = rng.normal_matrix(5, 2);
  const RowVector uncond = RowVector::Constant(2, -9.0);
  Rng net_rng(3);
  ScoreNetwork net({3, 4, 2, 8, 8}, net_rng);
  const NetworkScore ns(net, s);
  s.guidance_scale_style = 0.0;
  double cfg_err = max_abs_diff(cfg_score(ns, x, 0.3, mu, content, style, uncond, s), ns.score(x, mu, content, style, 0.3));
  const Matrix same = uncond.replicate(5, 1);
  for (double g : {0.5, 2.0}) {
    s.guidance_scale_style = g;
    cfg_err = std::max(cfg_err, max_abs_diff(cfg_score(ns, x, 0.3, mu, content, same, uncond, s),
                                             ns.score(x, mu, content, same, 0.3)));
  }

  // Analytic-score sampling of a 2-D Gaussian.
  DiffusionSchedule gs;
  gs.guidance_scale_style = 0.0;
  gs.steps = 30;
  RowVector m(2);
  m << 1.0, -0.5;
  Matrix S(2, 2);
  S << 0.8, 0.3, 0.3, 0.6;
  RowVector prior(2);
  prior << 0.8, -0.3;
  const GaussianScore score(m, S, gs);
  const Matrix mus = prior.replicate(10000, 1), none = Matrix::Zero(10000, 1);
  const Moments got = moments(sample(score, mus, none, none, RowVector::Zero(1), gs, 17));
  const double mean_err = (got.mean - m).norm() / m.norm(), cov_err = (got.cov - S).norm() / S.norm();
  const double elapsed = seconds_since(t0);
  std::ostringstream d;
  d << "forward mean err " << fmt("%.2f%%", 100 * worst_mean) << " (in std units), var err "
    << fmt("%.2f%%", 100 * worst_var) << ", cfg identity err " << fmt("%.1e", cfg_err) << ", N=30 sampling mean err "
    << fmt("%.2f%%", 100 * mean_err) << " cov err " << fmt("%.2f%%", 100 * cov_err) << ", " << fmt("%.1f s", elapsed);
  return {worst_mean < 0.03 && worst_var < 0.03 && cfg_err == 0.0 && mean_err < 0.05 && cov_err < 0.05 &&
              elapsed < 300.0,
          d.str()};
}

// 6. kNN oracle.

Outcome knn_oracle() {
  Rng rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index T = 1 + rng.below(30), D = 1 + rng.below(6);
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
    TargetBank bank{rng.normal_matrix(T, D)};
    const Matrix src = rng.normal_matrix(1 + rng.below(10), D);
    worst = std::max(worst, max_abs_diff(knn_match(bank, src, k), full_sort_reference(bank.frames, src, k)));
  }
  TargetBank bank{rng.normal_matrix(17, 5)};
  RowVector mean = RowVector::Zero(5);
  for (Eigen::Index i = 0; i < 17; ++i) mean += bank.frames.row(i);
  mean /= 17.0;
  const Matrix all = knn_match(bank, rng.normal_matrix(9, 5), 17);
  bool exact = true;
  for (Eigen::Index r = 0; r < all.rows(); ++r) exact = exact && all.row(r) == mean;
  return {worst <= 1e-12 && exact,
          "max |knn - full sort| " + fmt("%.1e", worst) + std::string(", k=T mean ") + (exact ? "exact" : "inexact")};
}

// 7 and 8 share one trained model.

struct Trained {
  RunConfig config;
  VoiceConversionModel model;
  std::vector<Utterance> train_set, eval_set;
  std::optional<double> train_seconds;
};

Trained obtain_model(const std::string& checkpoint, const fs::path& work) {
  Trained t;
  if (!checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(checkpoint);
    t.config = ck.config;
    t.model = std::move(ck.model);
    std::cout << "  using checkpoint " << checkpoint << " (step " << ck.step << ")" << std::endl;
  } else {
    std::cout << "  training the default configuration (" << t.config.training.steps << " steps)..." << std::endl;
  }
  const Corpus corpus =
      generate_corpus(t.config.corpus, t.config.sizing.utterances_per_speaker, t.config.sizing.frames_per_utterance);
  std::tie(t.train_set, t.eval_set) = split_corpus(corpus.utterances, t.config.sizing.train_fraction);
  if (checkpoint.empty()) {
    const auto t0 = Clock::now();
    t.model = initialize_model(t.config, t.train_set);
    const int every = std::max(1, t.config.training.steps / 10);
    train(t.model, t.config, t.train_set, {}, [&](const LossPoint& p) {
      if (p.step % every == 0) {
        std::cout << "  step " << p.step << " loss " << fmt("%.4f", p.total) << " (" << fmt("%.0f s", seconds_since(t0))
                  << ")" << std::endl;
      }
    });
    t.train_seconds = seconds_since(t0);
    fs::create_directories(work);
    save_checkpoint(work / "trained.sbck", t.model, t.config, t.config.training.steps);
    std::cout << "  saved " << (work / "trained.sbck").string() << std::endl;
  }
  return t;
}

Outcome end_to_end(const Trained& t) {
  const auto t0 = Clock::now();
  const int pairs = std::max(100, t.config.eval.pairs);
  const EvalReport r = evaluate(t.model, t.config, t.train_set, t.eval_set, pairs);
  std::ostringstream d;
  d << "proxy metrics on " << r.pairs << " pairs: style win rate " << fmt("%.3f", r.style_win_rate)
    << " (>= 0.80), probe accuracy " << fmt("%.3f", r.content_accuracy) << " (>= 0.85, chance "
    << fmt("%.2f", r.content_accuracy_chance) << "), training ";
  d << (t.train_seconds ? fmt("%.0f s", *t.train_seconds) : std::string("not timed (checkpoint given)"))
    << ", evaluation " << fmt("%.0f s", seconds_since(t0));
  const bool time_ok = !t.train_seconds || *t.train_seconds < 30 * 60;
  return {r.style_win_rate >= 0.8 && r.content_accuracy >= 0.85 && time_ok, d.str()};
}

Outcome attention_structure(const Trained& t) {
  const auto t0 = Clock::now();
  const AttentionAnalysis a =
      analyze_attention(t.model, t.eval_set, t.config.corpus.num_phone_classes, Corpus::kAdjacentClasses);
  const int top_decile = static_cast<int>(std::ceil(0.1 * a.off_diagonal_pairs));
  const double elapsed = seconds_since(t0);
  std::ostringstream d;
  d << "within " << fmt("%.4f", a.mean_within_class) << " vs between " << fmt("%.4f", a.mean_between_class)
    << ", adjacent pair rank " << a.adjacent_pair_rank << "/" << a.off_diagonal_pairs << " (top decile <= "
    << top_decile << "), globally used entries " << a.globally_used_entries << ", " << fmt("%.1f s", elapsed);
  return {a.mean_within_class > a.mean_between_class && a.adjacent_pair_rank <= top_decile && elapsed < 120.0,
          d.str()};
}

// 9. CLI determinism.

std::string quote(const std::string& s) { return "'" + s + "'"; }

Outcome cli_determinism(const fs::path& work, const fs::path& cli) {
  const auto t0 = Clock::now();
  if (!fs::exists(cli)) return {false, "CLI binary not found at " + cli.string()};
  const fs::path dir = work / "cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunConfig c = stylebook::testing::tiny_config();
  c.training.checkpoint_every = 10;
  c.model.encoder.num_units = 6;
  save_run_config(dir / "config.json", c);

  const std::vector<std::string> commands = {
      "synth-corpus",
      "fit-units",
      "train",
      "enroll --speaker 1",
      "convert --stylebook {run}/stylebooks/speaker_1.sbsb --source 0",
      "baseline-knn --target-speaker 1 --source 0",
      "bench-memory",
      "evaluate",
      "analyze-attention"};
  std::map<std::string, std::string> first;
  std::vector<std::string> failures;
  for (int round = 0; round < 2; ++round) {
    const fs::path run = dir / ("run" + std::to_string(round));
    for (const std::string& cmd : commands) {
      std::string args = cmd;
      if (const auto p = args.find("{run}"); p != std::string::npos) args.replace(p, 5, quote(run.string()));
      const std::string line = quote(cli.string()) + " -c " + quote((dir / "config.json").string()) + " --run-dir " +
                               quote(run.string()) + " " + args + " > /dev/null";
      if (std::system(line.c_str()) != 0) failures.push_back(cmd + " exited nonzero");
    }
    for (const auto& entry : fs::recursive_directory_iterator(run)) {
      if (!entry.is_regular_file()) continue;
      const std::string rel = fs::relative(entry.path(), run).string();
      const std::string bytes = read_file_bytes(entry.path());
      if (round == 0) {
        first[rel] = bytes;
      } else {
        const auto it = first.find(rel);
        if (it == first.end() || it->second != bytes) failures.push_back(rel + " differs");
        if (it != first.end()) first.erase(it);
      }
    }
  }
  for (const auto& [rel, bytes] : first) failures.push_back(rel + " missing on rerun");
  std::ostringstream d;
  d << commands.size() << " subcommands run twice, ";
  if (failures.empty()) {
    d << "all output files byte-identical";
  } else {
    d << failures.size() << " problems, first: " << failures.front();
  }
  d << ", " << fmt("%.1f s", seconds_since(t0));
  return {failures.empty(), d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::vector<int> criteria{1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::string checkpoint, work_dir = "acceptance_run", cli_path;
  app.add_option("--criteria", criteria, "Criteria to run")->delimiter(',');
  app.add_option("--checkpoint", checkpoint, "Trained checkpoint for criteria 7 and 8")->check(CLI::ExistingFile);
  app.add_option("--work-dir", work_dir, "Scratch directory");
  app.add_option("--cli", cli_path, "Path to the stylebook CLI (default: next to this binary)");
  CLI11_PARSE(app, argc, argv);

  const fs::path work = work_dir;
  fs::create_directories(work);
  const fs::path cli = cli_path.empty() ? fs::absolute(argv[0]).parent_path() / "stylebook" : fs::path(cli_path);
  const std::set<int> wanted(criteria.begin(), criteria.end());

  std::optional<Trained> trained;
  auto need_model = [&]() -> const Trained& {
    if (!trained) trained = obtain_model(checkpoint, work);
    return *trained;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> all = {
      {"per-speaker memory model", [] { return memory_table(); }},
      {"fixed-size stylebook", [&] { return fixed_size_stylebook(work); }},
      {"attention correctness", [] { return attention_correctness(); }},
      {"gradient suite", [] { return gradient_suite(); }},
      {"diffusion numerics", [] { return diffusion_numerics(); }},
      {"kNN oracle", [] { return knn_oracle(); }},
      {"end-to-end conversion (proxy thresholds)", [&] { return end_to_end(need_model()); }},
      {"attention-profile structure", [&] { return attention_structure(need_model()); }},
      {"CLI determinism", [&] { return cli_determinism(work, cli); }}};

  int failed = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.count(id)) continue;
    Outcome o;
    try {
      o = all[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << all[i].first << "): " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
