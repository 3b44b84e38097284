#include "mdfn/train.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "mdfn/error.hpp"
#include "mdfn/rng.hpp"

namespace mdfn {

std::vector<RankingInstance> score_dataset(const MdfnModel<float>& model,
                                           const Vocab& vocab,
                                           const std::vector<RawDialogue>& data,
                                           int threads) {
  std::vector<RankingInstance> out(data.size());
  auto worker = [&](size_t begin, size_t stride) {
    for (size_t i = begin; i < data.size(); i += stride) {
      const Dialogue d = to_dialogue(data[i], vocab);
      out[i] = RankingInstance{d.id, model.rank_scores(d), d.labels};
    }
  };
  if (threads <= 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back(worker, static_cast<size_t>(t), static_cast<size_t>(threads));
    for (auto& th : pool) th.join();
  }
  return out;
}

EvalSummary summarize(const std::vector<RankingInstance>& instances) {
  if (instances.empty()) fail(ErrorCode::ConfigError, "no instances to evaluate");
  EvalSummary s;
  s.instances = static_cast<int>(instances.size());
  s.n_candidates = static_cast<int>(instances[0].scores.size());
  s.r_at_1 = recall_at_k(instances, s.n_candidates, 1, &s.skipped);
  if (s.n_candidates >= 2) s.r_at_2 = recall_at_k(instances, s.n_candidates, 2);
  s.mrr = mean_reciprocal_rank(instances);
  s.map = mean_average_precision(instances);
  s.p_at_1 = precision_at_1(instances);
  return s;
}

EvalSummary evaluate_dataset(const MdfnModel<float>& model, const Vocab& vocab,
                             const std::vector<RawDialogue>& data, int threads) {
  return summarize(score_dataset(model, vocab, data, threads));
}

namespace {

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

TrainResult train_model(const std::string& data_dir, ModelSpecConfig spec,
                        const OptimConfig& ocfg, const std::string& out_dir,
                        const LogFn& log) {
  const std::filesystem::path dir(data_dir);
  const Vocab vocab = Vocab::load((dir / "vocab.txt").string());
  if (spec.encoder.vocab_size == 0) spec.encoder.vocab_size = vocab.size();
  if (spec.encoder.vocab_size != vocab.size())
    fail(ErrorCode::ConfigError,
         "encoder vocab_size " + std::to_string(spec.encoder.vocab_size) +
             " != vocabulary size " + std::to_string(vocab.size()));

  auto train_raw = read_jsonl((dir / "train.jsonl").string(), spec.model.mode);
  auto valid_raw = read_jsonl((dir / "valid.jsonl").string(), spec.model.mode);
  if (train_raw.dialogues.empty()) fail(ErrorCode::ConfigError, "empty training set");
  if (valid_raw.dialogues.empty()) fail(ErrorCode::ConfigError, "empty validation set");
  if (log)
    for (const auto& e : train_raw.line_errors) log("train.jsonl skipped " + e);

  std::vector<Dialogue> train;
  train.reserve(train_raw.dialogues.size());
  for (const auto& r : train_raw.dialogues) train.push_back(to_dialogue(r, vocab));

  MdfnModel<float> model(spec.model, spec.encoder, spec.assembly, ocfg.seed);
  AdamW<float> opt(model.params(), ocfg);

  // Binary mode trains on individual (context, candidate) pairs.
  const bool binary = spec.model.mode == ScoreMode::Binary;
  std::vector<std::pair<int, int>> units;
  for (int i = 0; i < static_cast<int>(train.size()); ++i) {
    if (binary)
      for (int k = 0; k < static_cast<int>(train[static_cast<size_t>(i)].candidates.size()); ++k)
        units.emplace_back(i, k);
    else
      units.emplace_back(i, -1);
  }

  std::filesystem::create_directories(out_dir);
  const std::filesystem::path odir(out_dir);
  std::ofstream csv(odir / "train_log.csv", std::ios::binary);
  if (!csv) fail(ErrorCode::IoError, "cannot write training log in " + out_dir);
  csv << "step,epoch,loss,val_r_at_1,val_mrr\n";

  TrainResult result;
  result.best_checkpoint = (odir / "best").string();
  double best_r1 = -1;

  int step = 0;
  for (int epoch = 1; epoch <= ocfg.epochs; ++epoch) {
    SplitMix64 shuffle_rng(ocfg.seed + 0x9e3779b97f4a7c15ull * static_cast<uint64_t>(epoch));
    shuffle_rng.shuffle(units);

    double epoch_loss = 0;
    int epoch_units = 0;
    for (size_t off = 0; off < units.size(); off += static_cast<size_t>(ocfg.batch_size)) {
      const size_t end = std::min(units.size(), off + static_cast<size_t>(ocfg.batch_size));
      const float inv_b = 1.0f / static_cast<float>(end - off);
      model.params().zero_grad();
      double batch_loss = 0;
      for (size_t u = off; u < end; ++u) {
        const auto& [di, ci] = units[u];
        nn::Tape<float> tape;
        nn::Tensor<float> loss =
            binary ? model.pair_loss(tape, train[static_cast<size_t>(di)], ci)
                   : model.multi_choice_loss(tape, train[static_cast<size_t>(di)]);
        batch_loss += static_cast<double>(loss.item());
        tape.backward(loss, inv_b);
      }
      opt.step();
      ++step;
      batch_loss /= static_cast<double>(end - off);
      epoch_loss += batch_loss * static_cast<double>(end - off);
      epoch_units += static_cast<int>(end - off);
      csv << step << ',' << epoch << ',' << fmt6(batch_loss) << ",,\n";
    }
    epoch_loss /= std::max(1, epoch_units);

    const EvalSummary val = evaluate_dataset(model, vocab, valid_raw.dialogues, 1);
    csv << step << ',' << epoch << ',' << fmt6(epoch_loss) << ','
        << fmt6(val.r_at_1) << ',' << fmt6(val.mrr) << "\n";
    csv.flush();
    if (log)
      log("epoch " + std::to_string(epoch) + " loss " + fmt6(epoch_loss) +
          " val_r@1 " + fmt6(val.r_at_1) + " val_mrr " + fmt6(val.mrr));

    result.epochs_run = epoch;
    result.final_loss = epoch_loss;
    if (val.r_at_1 > best_r1) {
      best_r1 = val.r_at_1;
      result.best_epoch = epoch;
      result.best_r1 = val.r_at_1;
      result.best_mrr = val.mrr;
      CheckpointMeta meta;
      meta.step = step;
      meta.seed = ocfg.seed;
      meta.metrics = {{"val_r_at_1", val.r_at_1},
                      {"val_mrr", val.mrr},
                      {"epoch", static_cast<double>(epoch)}};
      save_checkpoint(result.best_checkpoint, model, spec, vocab, meta);
    }
    if (ocfg.early_stop_r1 > 0 && val.r_at_1 >= ocfg.early_stop_r1) break;
  }
  result.steps = step;
  return result;
}

}  // namespace mdfn
