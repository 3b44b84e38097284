#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mdfn/checkpoint.hpp"
#include "mdfn/config.hpp"
#include "mdfn/data.hpp"
#include "mdfn/metrics.hpp"
#include "mdfn/model.hpp"
#include "mdfn/optimizer.hpp"

namespace mdfn {

struct EvalSummary {
  double r_at_1 = 0, r_at_2 = 0, mrr = 0, map = 0, p_at_1 = 0;
  int n_candidates = 0;
  int instances = 0;
  int skipped = 0;  // instances without a positive label
};

struct TrainResult {
  std::string best_checkpoint;
  int best_epoch = 0;
  double best_r1 = 0, best_mrr = 0;
  int steps = 0;
  int epochs_run = 0;
  double final_loss = 0;
};

using LogFn = std::function<void(const std::string&)>;

// Scores every dialogue; thread-parallel over instances with read-only
// parameters, results ordered by input index regardless of thread count.
std::vector<RankingInstance> score_dataset(const MdfnModel<float>& model,
                                           const Vocab& vocab,
                                           const std::vector<RawDialogue>& data,
                                           int threads = 1);

EvalSummary summarize(const std::vector<RankingInstance>& instances);

EvalSummary evaluate_dataset(const MdfnModel<float>& model, const Vocab& vocab,
                             const std::vector<RawDialogue>& data, int threads = 1);

// Epoch loop with seeded shuffling, per-epoch validation, best-R@1
// checkpointing to <out_dir>/best and a CSV log at <out_dir>/train_log.csv
// (header: step,epoch,loss,val_r_at_1,val_mrr).
TrainResult train_model(const std::string& data_dir, ModelSpecConfig spec,
                        const OptimConfig& ocfg, const std::string& out_dir,
                        const LogFn& log = nullptr);

}  // namespace mdfn
