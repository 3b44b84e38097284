#pragma once

#include <string>
#include <vector>

namespace mdfn {

struct RankingInstance {
  std::string id;
  std::vector<double> scores;
  std::vector<int> labels;  // 0/1 per candidate
};

// All metrics rank candidates by score descending with ties broken by
// ascending candidate index. Instances without a positive are skipped; the
// skip count is reported through *skipped when non-null.

// Fraction of instances with a positive inside the top k of exactly n
// candidates; a count mismatch raises MetricError.
double recall_at_k(const std::vector<RankingInstance>& instances, int n, int k,
                   int* skipped = nullptr);
double mean_average_precision(const std::vector<RankingInstance>& instances,
                              int* skipped = nullptr);
double mean_reciprocal_rank(const std::vector<RankingInstance>& instances,
                            int* skipped = nullptr);
double precision_at_1(const std::vector<RankingInstance>& instances,
                      int* skipped = nullptr);

// Candidate indices ordered by rank (score desc, index asc on ties).
std::vector<int> ranked_order(const std::vector<double>& scores);

}  // namespace mdfn
