// Tests for the AdamW optimizer and the epoch training loop.
//
// The optimizer tests pin the exact update arithmetic against a hand-rolled
// reference evaluated inline in double precision. The loop tests run on tiny
// synthetic corpora and validate artifacts (checkpoint, CSV log), byte
// determinism, and the early-stop contract, parsing the log rather than
// trusting the return struct alone.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mdfn/checkpoint.hpp"
#include "mdfn/data.hpp"
#include "mdfn/error.hpp"
#include "mdfn/optimizer.hpp"
#include "mdfn/train.hpp"

using namespace mdfn;
using doctest::Approx;
using doctest::Contains;

namespace {

std::filesystem::path work_dir(const std::string& leaf) {
  auto dir = std::filesystem::temp_directory_path() / "mdfn_train_test" / leaf;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  return lines;
}

ModelSpecConfig tiny_spec() {
  ModelSpecConfig spec;
  spec.model.d = 8;
  spec.model.heads = 2;
  spec.encoder.vocab_size = 0;  // filled in from vocab.txt
  spec.encoder.d = 8;
  spec.encoder.heads = 2;
  spec.encoder.layers = 1;
  spec.encoder.max_len = 32;
  spec.assembly.max_len = 32;
  return spec;
}

std::filesystem::path make_corpus(const std::string& leaf, int n_dialogues,
                                  uint64_t seed) {
  SynthConfig cfg;
  cfg.task = "speaker_echo";
  cfg.n_dialogues = n_dialogues;
  cfg.turns_lo = 2;
  cfg.turns_hi = 3;
  cfg.utt_len_lo = 2;
  cfg.utt_len_hi = 3;
  cfg.vocab_size = 60;
  cfg.seed = seed;
  const auto dir = work_dir(leaf);
  write_synthetic(generate_synthetic(cfg), dir.string());
  return dir;
}

}  // namespace

TEST_CASE("adamw follows the decoupled-decay update rule exactly") {
  nn::ParamRegistry<double> reg(0);
  auto w = reg.zeros_param("w", {1, 2});
  w.val() = {1.0, -0.5};

  OptimConfig cfg;
  cfg.lr = 1e-3;
  cfg.beta1 = 0.9;
  cfg.beta2 = 0.999;
  cfg.eps = 1e-8;
  cfg.weight_decay = 0.01;
  AdamW<double> opt(reg, cfg);
  CHECK(opt.step_count() == 0);

  const std::vector<double> g = {1.0, 2.0};
  // Reference: decay first, then the bias-corrected moment step.
  std::vector<double> ref = w.val();
  std::vector<double> m(2, 0.0), v(2, 0.0);
  auto ref_step = [&](int t) {
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (size_t i = 0; i < ref.size(); ++i) {
      ref[i] -= cfg.lr * cfg.weight_decay * ref[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      ref[i] -= cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
    }
  };

  for (int t = 1; t <= 3; ++t) {
    w.grad() = {g[0], g[1]};
    opt.step();
    ref_step(t);
    CHECK(opt.step_count() == t);
    CHECK(w.val()[0] == Approx(ref[0]).epsilon(1e-14));
    CHECK(w.val()[1] == Approx(ref[1]).epsilon(1e-14));
  }

  // First step from w=1, g=1 lands at 1 - lr*wd - lr/(1+eps) + tiny cross
  // terms; spot-check the closed form for t=1.
  nn::ParamRegistry<double> reg2(0);
  auto w2 = reg2.zeros_param("w", {1, 1});
  w2.val() = {1.0};
  AdamW<double> opt2(reg2, cfg);
  w2.grad() = {1.0};
  opt2.step();
  const double decayed = 1.0 - cfg.lr * cfg.weight_decay;
  const double expect = decayed - cfg.lr * 1.0 / (1.0 + cfg.eps);
  CHECK(w2.val()[0] == Approx(expect).epsilon(1e-14));
}

TEST_CASE("zero gradients leave only the weight-decay shrink") {
  nn::ParamRegistry<double> reg(0);
  auto w = reg.zeros_param("w", {1, 3});
  w.val() = {2.0, -4.0, 0.25};
  auto frozen = reg.buffer("frozen", {1, 1});
  frozen.val() = {3.0};

  OptimConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  AdamW<double> opt(reg, cfg);
  w.grad() = {0.0, 0.0, 0.0};
  opt.step();

  // m and v stay zero, so the moment step contributes exactly nothing.
  CHECK(w.val()[0] == Approx(2.0 * 0.95).epsilon(1e-15));
  CHECK(w.val()[1] == Approx(-4.0 * 0.95).epsilon(1e-15));
  CHECK(w.val()[2] == Approx(0.25 * 0.95).epsilon(1e-15));
  CHECK(frozen.val()[0] == 3.0);  // buffers are not optimizer state

  // With decay off as well, a zero-gradient step is a no-op.
  nn::ParamRegistry<double> reg2(0);
  auto w2 = reg2.zeros_param("w", {1, 1});
  w2.val() = {1.25};
  OptimConfig cfg2;
  cfg2.weight_decay = 0.0;
  AdamW<double> opt2(reg2, cfg2);
  w2.grad() = {0.0};
  opt2.step();
  CHECK(w2.val()[0] == 1.25);
}

TEST_CASE("optimizer construction validates its configuration") {
  nn::ParamRegistry<float> reg(0);
  reg.zeros_param("w", {1, 1});

  OptimConfig bad;
  bad.lr = 0.0;
  CHECK_THROWS_WITH_AS(AdamW<float>(reg, bad), Contains("lr must be positive"),
                       MdfnError);
  bad.lr = -1.0;
  CHECK_THROWS_AS(AdamW<float>(reg, bad), MdfnError);

  OptimConfig bad2;
  bad2.batch_size = 0;
  CHECK_THROWS_WITH_AS(AdamW<float>(reg, bad2), Contains("batch_size"), MdfnError);
}

TEST_CASE("non-finite gradients abort the step and name the parameter") {
  nn::ParamRegistry<double> reg(0);
  auto a = reg.zeros_param("layer.alpha", {1, 2});
  reg.zeros_param("layer.beta", {1, 1});

  OptimConfig cfg;
  AdamW<double> opt(reg, cfg);
  a.grad() = {0.0, std::numeric_limits<double>::quiet_NaN()};
  try {
    opt.step();
    FAIL("expected a NanGradient error");
  } catch (const MdfnError& e) {
    CHECK(e.code() == ErrorCode::NanGradient);
    CHECK(std::string(e.what()).find("layer.alpha[1]") != std::string::npos);
  }

  a.grad() = {std::numeric_limits<double>::infinity(), 0.0};
  CHECK_THROWS_WITH_AS(opt.step(), Contains("layer.alpha[0]"), MdfnError);
}

TEST_CASE("a handful of steps overfits a single dialogue") {
  MdfnConfig mcfg;
  mcfg.d = 8;
  mcfg.heads = 2;
  EncoderConfig ecfg;
  ecfg.vocab_size = 30;
  ecfg.d = 8;
  ecfg.heads = 2;
  ecfg.layers = 1;
  ecfg.max_len = 24;
  AssemblyConfig acfg;
  acfg.max_len = 24;
  MdfnModel<float> model(mcfg, ecfg, acfg, 5);

  Dialogue d;
  d.id = "overfit";
  d.context = {Utterance{{10, 11, 12}, SpeakerRole::Receiver},
               Utterance{{13, 14}, SpeakerRole::Sender}};
  d.candidates = {Utterance{{15, 16}, SpeakerRole::Sender},
                  Utterance{{14, 17}, SpeakerRole::Sender},
                  Utterance{{18, 19}, SpeakerRole::Sender},
                  Utterance{{20, 21}, SpeakerRole::Sender}};
  d.labels = {0, 1, 0, 0};

  OptimConfig ocfg;
  ocfg.lr = 0.01;
  AdamW<float> opt(model.params(), ocfg);

  auto loss_once = [&]() {
    nn::Tape<float> tape(/*grad_enabled=*/false);
    return static_cast<double>(model.multi_choice_loss(tape, d).item());
  };
  const double initial = loss_once();
  CHECK(initial == Approx(std::log(4.0)).epsilon(0.5));  // near-uniform start

  for (int step = 0; step < 40; ++step) {
    model.params().zero_grad();
    nn::Tape<float> tape;
    auto loss = model.multi_choice_loss(tape, d);
    tape.backward(loss, 1.0f);
    opt.step();
  }
  const double final_loss = loss_once();
  CHECK(final_loss < 0.7 * initial);
  CHECK(final_loss < initial - 0.1);

  // The positive candidate now wins the ranking.
  const auto scores = model.rank_scores(d);
  for (size_t c = 0; c < scores.size(); ++c)
    if (c != 1) CHECK(scores[1] > scores[c]);
}

TEST_CASE("train_model writes a log and a best checkpoint, deterministically") {
  const auto data_dir = make_corpus("loop_data", 20, 7);
  const auto out_a = work_dir("loop_out_a");
  const auto out_b = work_dir("loop_out_b");

  OptimConfig ocfg;
  ocfg.epochs = 2;
  ocfg.batch_size = 4;
  ocfg.seed = 42;

  std::vector<std::string> log_lines;
  const TrainResult res = train_model(
      data_dir.string(), tiny_spec(), ocfg, out_a.string(),
      [&](const std::string& line) { log_lines.push_back(line); });

  // 16 training dialogues in 4-unit batches, two epochs.
  CHECK(res.steps == 8);
  CHECK(res.epochs_run == 2);
  CHECK(std::isfinite(res.final_loss));
  CHECK(res.best_epoch >= 1);
  CHECK(res.best_epoch <= 2);
  CHECK(res.best_checkpoint == (out_a / "best").string());
  REQUIRE(std::filesystem::exists(out_a / "best"));
  REQUIRE(std::filesystem::exists(out_a / "train_log.csv"));
  REQUIRE(log_lines.size() == 2);
  CHECK(log_lines[0].find("epoch 1 loss") != std::string::npos);

  const auto lines = read_lines(out_a / "train_log.csv");
  REQUIRE(lines.size() == 1 + 8 + 2);
  CHECK(lines[0] == "step,epoch,loss,val_r_at_1,val_mrr");
  int batch_rows = 0, epoch_rows = 0;
  for (size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv_line(lines[i]);
    REQUIRE(f.size() == 5);
    CHECK(!f[0].empty());
    CHECK(!f[2].empty());
    if (f[3].empty()) {
      CHECK(f[4].empty());
      ++batch_rows;
    } else {
      CHECK(!f[4].empty());
      ++epoch_rows;
    }
  }
  CHECK(batch_rows == 8);
  CHECK(epoch_rows == 2);

  // The checkpoint carries the vocabulary and the auto-filled encoder size.
  LoadedModel loaded = load_checkpoint(res.best_checkpoint);
  CHECK(loaded.vocab.size() == 60);
  CHECK(loaded.spec.encoder.vocab_size == 60);
  CHECK(loaded.meta.metrics.count("val_r_at_1") == 1);
  CHECK(loaded.meta.metrics.count("epoch") == 1);
  CHECK(loaded.meta.metrics.at("epoch") == Approx(res.best_epoch));
  CHECK(loaded.meta.metrics.at("val_r_at_1") == Approx(res.best_r1));

  // Bitwise repeatability of both artifacts.
  const TrainResult res_b =
      train_model(data_dir.string(), tiny_spec(), ocfg, out_b.string());
  CHECK(res_b.steps == res.steps);
  CHECK(res_b.best_r1 == res.best_r1);
  CHECK(slurp(out_a / "best") == slurp(out_b / "best"));
  CHECK(slurp(out_a / "train_log.csv") == slurp(out_b / "train_log.csv"));
}

TEST_CASE("binary scoring trains one unit per candidate pair") {
  const auto data_dir = make_corpus("pair_data", 20, 9);
  const auto out = work_dir("pair_out");

  ModelSpecConfig spec = tiny_spec();
  spec.model.mode = ScoreMode::Binary;
  OptimConfig ocfg;
  ocfg.epochs = 1;
  ocfg.batch_size = 8;

  // 16 dialogues x 4 candidates = 64 pair units -> 8 batches of 8.
  const TrainResult res = train_model(data_dir.string(), spec, ocfg, out.string());
  CHECK(res.steps == 8);
  CHECK(res.epochs_run == 1);
  CHECK(std::filesystem::exists(out / "best"));
}

TEST_CASE("train_model validates its inputs") {
  const auto data_dir = make_corpus("bad_inputs", 20, 11);
  const auto out = work_dir("bad_inputs_out");

  ModelSpecConfig spec = tiny_spec();
  spec.encoder.vocab_size = 37;
  OptimConfig ocfg;
  ocfg.epochs = 1;
  CHECK_THROWS_WITH_AS(train_model(data_dir.string(), spec, ocfg, out.string()),
                       Contains("!= vocabulary size"), MdfnError);

  CHECK_THROWS_AS(
      train_model((data_dir / "nowhere").string(), tiny_spec(), ocfg, out.string()),
      MdfnError);

  // Wipe the training split: the loop refuses to run on nothing.
  const auto empty_dir = work_dir("empty_train");
  std::filesystem::copy(data_dir / "vocab.txt", empty_dir / "vocab.txt");
  std::filesystem::copy(data_dir / "valid.jsonl", empty_dir / "valid.jsonl");
  std::ofstream(empty_dir / "train.jsonl").close();
  CHECK_THROWS_WITH_AS(
      train_model(empty_dir.string(), tiny_spec(), ocfg, out.string()),
      Contains("empty training set"), MdfnError);
}

TEST_CASE("early stopping halts after the epoch that reaches the target") {
  const auto data_dir = make_corpus("early_data", 40, 13);
  const auto out = work_dir("early_out");

  OptimConfig ocfg;
  ocfg.epochs = 5;
  ocfg.batch_size = 4;
  ocfg.early_stop_r1 = 0.01;

  const TrainResult res = train_model(data_dir.string(), tiny_spec(), ocfg, out.string());

  // Reconstruct the stop decision from the logged validation column.
  std::vector<double> epoch_r1;
  for (const auto& line : read_lines(out / "train_log.csv")) {
    const auto f = split_csv_line(line);
    if (f.size() == 5 && !f[3].empty() && f[3] != "val_r_at_1")
      epoch_r1.push_back(std::stod(f[3]));
  }
  REQUIRE(static_cast<int>(epoch_r1.size()) == res.epochs_run);
  int expected_stop = ocfg.epochs;
  for (int e = 0; e < static_cast<int>(epoch_r1.size()); ++e)
    if (epoch_r1[static_cast<size_t>(e)] >= ocfg.early_stop_r1) {
      expected_stop = e + 1;
      break;
    }
  CHECK(res.epochs_run == expected_stop);

  // The checkpointed metric equals the best logged value (6-decimal log).
  LoadedModel loaded = load_checkpoint(res.best_checkpoint);
  double best_logged = -1;
  for (double r : epoch_r1) best_logged = std::max(best_logged, r);
  CHECK(loaded.meta.metrics.at("val_r_at_1") == Approx(best_logged).epsilon(1e-5));
}
