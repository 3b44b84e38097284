#include "mdfn/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "mdfn/error.hpp"

namespace mdfn {

std::vector<int> ranked_order(const std::vector<double>& scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
  });
  return order;
}

namespace {

bool has_positive(const RankingInstance& inst) {
  for (int y : inst.labels)
    if (y == 1) return true;
  return false;
}

void check_labels(const RankingInstance& inst) {
  if (inst.scores.size() != inst.labels.size())
    fail(ErrorCode::MetricError,
         "instance " + inst.id + ": scores/labels length mismatch");
  if (inst.scores.empty())
    fail(ErrorCode::MetricError, "instance " + inst.id + ": no candidates");
}

// Averages fn over instances that carry a positive.
template <typename F>
double mean_over(const std::vector<RankingInstance>& instances, int* skipped, F fn) {
  int skip = 0;
  double total = 0;
  int used = 0;
  for (const auto& inst : instances) {
    check_labels(inst);
    if (!has_positive(inst)) {
      ++skip;
      continue;
    }
    total += fn(inst);
    ++used;
  }
  if (skipped) *skipped = skip;
  if (used == 0) fail(ErrorCode::MetricError, "no instance with a positive label");
  return total / used;
}

}  // namespace

double recall_at_k(const std::vector<RankingInstance>& instances, int n, int k,
                   int* skipped) {
  if (k < 1 || k > n) fail(ErrorCode::MetricError, "recall_at_k: need 1 <= k <= n");
  return mean_over(instances, skipped, [&](const RankingInstance& inst) {
    if (static_cast<int>(inst.scores.size()) != n)
      fail(ErrorCode::MetricError,
           "instance " + inst.id + ": expected " + std::to_string(n) +
               " candidates, got " + std::to_string(inst.scores.size()));
    const auto order = ranked_order(inst.scores);
    for (int r = 0; r < k; ++r)
      if (inst.labels[static_cast<size_t>(order[static_cast<size_t>(r)])] == 1)
        return 1.0;
    return 0.0;
  });
}

double mean_average_precision(const std::vector<RankingInstance>& instances,
                              int* skipped) {
  return mean_over(instances, skipped, [](const RankingInstance& inst) {
    const auto order = ranked_order(inst.scores);
    int positives_seen = 0;
    double ap = 0;
    for (size_t r = 0; r < order.size(); ++r) {
      if (inst.labels[static_cast<size_t>(order[r])] == 1) {
        ++positives_seen;
        ap += static_cast<double>(positives_seen) / static_cast<double>(r + 1);
      }
    }
    return ap / positives_seen;
  });
}

double mean_reciprocal_rank(const std::vector<RankingInstance>& instances,
                            int* skipped) {
  return mean_over(instances, skipped, [](const RankingInstance& inst) {
    const auto order = ranked_order(inst.scores);
    for (size_t r = 0; r < order.size(); ++r)
      if (inst.labels[static_cast<size_t>(order[r])] == 1)
        return 1.0 / static_cast<double>(r + 1);
    return 0.0;  // unreachable: a positive exists
  });
}

double precision_at_1(const std::vector<RankingInstance>& instances, int* skipped) {
  return mean_over(instances, skipped, [](const RankingInstance& inst) {
    const auto order = ranked_order(inst.scores);
    return inst.labels[static_cast<size_t>(order[0])] == 1 ? 1.0 : 0.0;
  });
}

}  // namespace mdfn
