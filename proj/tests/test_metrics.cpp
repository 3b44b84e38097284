// Ranking metric tests: single-instance values forced by the definitions,
// the worked average-precision example, tie handling, invariance under
// monotone score transforms, and agreement with brute-force oracles on
// random instances.
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "mdfn/error.hpp"
#include "mdfn/metrics.hpp"
#include "mdfn/rng.hpp"

using namespace mdfn;

namespace {

RankingInstance inst(std::vector<double> scores, std::vector<int> labels) {
  RankingInstance r;
  r.id = "i";
  r.scores = std::move(scores);
  r.labels = std::move(labels);
  return r;
}

// Brute-force oracles working directly off the rank order definition.
std::vector<int> oracle_order(const std::vector<double>& s) {
  std::vector<int> idx(s.size());
  for (size_t i = 0; i < s.size(); ++i) idx[i] = static_cast<int>(i);
  // Selection sort by (score desc, index asc); independent of std::sort
  // internals.
  for (size_t a = 0; a < idx.size(); ++a) {
    size_t best = a;
    for (size_t b = a + 1; b < idx.size(); ++b) {
      const double sb = s[static_cast<size_t>(idx[b])];
      const double sbest = s[static_cast<size_t>(idx[best])];
      if (sb > sbest || (sb == sbest && idx[b] < idx[best])) best = b;
    }
    std::swap(idx[a], idx[best]);
  }
  return idx;
}

double oracle_rr(const RankingInstance& r) {
  auto ord = oracle_order(r.scores);
  for (size_t k = 0; k < ord.size(); ++k)
    if (r.labels[static_cast<size_t>(ord[k])] == 1)
      return 1.0 / static_cast<double>(k + 1);
  return 0.0;
}

double oracle_ap(const RankingInstance& r) {
  auto ord = oracle_order(r.scores);
  int seen = 0;
  double ap = 0;
  for (size_t k = 0; k < ord.size(); ++k)
    if (r.labels[static_cast<size_t>(ord[k])] == 1) {
      ++seen;
      ap += static_cast<double>(seen) / static_cast<double>(k + 1);
    }
  return ap / seen;
}

bool oracle_hit_at_k(const RankingInstance& r, int k) {
  auto ord = oracle_order(r.scores);
  for (int q = 0; q < k; ++q)
    if (r.labels[static_cast<size_t>(ord[static_cast<size_t>(q)])] == 1) return true;
  return false;
}

}  // namespace

TEST_CASE("ranked_order: descending scores, ties keep ascending index") {
  CHECK(ranked_order({0.1, 0.9, 0.5}) == std::vector<int>{1, 2, 0});
  CHECK(ranked_order({0.5, 0.5, 0.5}) == std::vector<int>{0, 1, 2});
  CHECK(ranked_order({0.2, 0.8, 0.8, 0.1}) == std::vector<int>{1, 2, 0, 3});
  CHECK(ranked_order({1.0}) == std::vector<int>{0});
}

TEST_CASE("single-instance values forced by the definitions") {
  // Positive ranked second among four: R@1 = 0, R@2 = 1, RR = 1/2.
  auto i = inst({0.4, 0.9, 0.1, 0.2}, {1, 0, 0, 0});
  std::vector<RankingInstance> v{i};
  CHECK(recall_at_k(v, 4, 1) == 0.0);
  CHECK(recall_at_k(v, 4, 2) == 1.0);
  CHECK(recall_at_k(v, 4, 4) == 1.0);  // k = n always hits
  CHECK(mean_reciprocal_rank(v) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(precision_at_1(v) == 0.0);

  // Positive on top.
  std::vector<RankingInstance> top{inst({0.9, 0.1}, {1, 0})};
  CHECK(recall_at_k(top, 2, 1) == 1.0);
  CHECK(mean_reciprocal_rank(top) == 1.0);
  CHECK(precision_at_1(top) == 1.0);
  CHECK(mean_average_precision(top) == 1.0);
}

TEST_CASE("average precision: two positives at ranks 1 and 3 give 0.833333") {
  // AP = (1/1 + 2/3) / 2 = 5/6.
  std::vector<RankingInstance> v{inst({0.9, 0.1, 0.5}, {1, 1, 0})};
  CHECK(mean_average_precision(v) == doctest::Approx(5.0 / 6.0).epsilon(1e-9));
  CHECK(std::fabs(mean_average_precision(v) - 0.833333) < 1e-6);
}

TEST_CASE("metrics average over instances and skip positive-free ones") {
  std::vector<RankingInstance> v{
      inst({0.9, 0.1}, {1, 0}),   // RR 1
      inst({0.9, 0.1}, {0, 1}),   // RR 1/2
      inst({0.3, 0.2}, {0, 0}),   // skipped
  };
  int skipped = -1;
  CHECK(mean_reciprocal_rank(v, &skipped) == doctest::Approx(0.75));
  CHECK(skipped == 1);
  CHECK(recall_at_k(v, 2, 1, &skipped) == doctest::Approx(0.5));
  CHECK(skipped == 1);
  CHECK(precision_at_1(v, &skipped) == doctest::Approx(0.5));
}

TEST_CASE("metrics are invariant under monotone score transforms") {
  SplitMix64 rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 6;
    RankingInstance a;
    a.id = "a";
    for (int i = 0; i < n; ++i) {
      a.scores.push_back(rng.uniform(-3.0, 3.0));
      a.labels.push_back(0);
    }
    a.labels[static_cast<size_t>(rng.below(n))] = 1;
    RankingInstance b = a;
    for (auto& s : b.scores) s = 1.0 / (1.0 + std::exp(-2.0 * s)) + 7.0;

    std::vector<RankingInstance> va{a}, vb{b};
    CHECK(mean_reciprocal_rank(va) == doctest::Approx(mean_reciprocal_rank(vb)));
    CHECK(recall_at_k(va, n, 2) == recall_at_k(vb, n, 2));
    CHECK(mean_average_precision(va) ==
          doctest::Approx(mean_average_precision(vb)));
  }
}

TEST_CASE("metrics agree with brute-force oracles on random instances") {
  SplitMix64 rng(505);
  std::vector<RankingInstance> all;
  double want_rr = 0, want_ap = 0, want_r1 = 0, want_r2 = 0;
  const int n = 5, count = 400;
  for (int t = 0; t < count; ++t) {
    RankingInstance r;
    r.id = "r" + std::to_string(t);
    for (int i = 0; i < n; ++i) {
      // Coarse grid scores force plenty of exact ties.
      r.scores.push_back(static_cast<double>(rng.below(4)) / 4.0);
      r.labels.push_back(0);
    }
    const int positives = 1 + static_cast<int>(rng.below(2));
    std::vector<int> where = rng.sample_distinct(n, positives);
    for (int w : where) r.labels[static_cast<size_t>(w)] = 1;
    want_rr += oracle_rr(r);
    want_ap += oracle_ap(r);
    want_r1 += oracle_hit_at_k(r, 1) ? 1 : 0;
    want_r2 += oracle_hit_at_k(r, 2) ? 1 : 0;
    all.push_back(std::move(r));
  }
  CHECK(mean_reciprocal_rank(all) == doctest::Approx(want_rr / count).epsilon(1e-12));
  CHECK(mean_average_precision(all) == doctest::Approx(want_ap / count).epsilon(1e-12));
  CHECK(recall_at_k(all, n, 1) == doctest::Approx(want_r1 / count).epsilon(1e-12));
  CHECK(recall_at_k(all, n, 2) == doctest::Approx(want_r2 / count).epsilon(1e-12));
}

TEST_CASE("metric error cases") {
  std::vector<RankingInstance> ok{inst({0.9, 0.1}, {1, 0})};
  CHECK_THROWS_AS(recall_at_k(ok, 2, 0), MdfnError);   // k < 1
  CHECK_THROWS_AS(recall_at_k(ok, 2, 3), MdfnError);   // k > n
  CHECK_THROWS_AS(recall_at_k(ok, 4, 2), MdfnError);   // wrong candidate count

  std::vector<RankingInstance> mismatch{inst({0.9, 0.1}, {1})};
  CHECK_THROWS_AS(mean_reciprocal_rank(mismatch), MdfnError);

  std::vector<RankingInstance> empty{inst({}, {})};
  CHECK_THROWS_AS(precision_at_1(empty), MdfnError);

  // Every instance skipped: the mean is undefined.
  std::vector<RankingInstance> no_pos{inst({0.9, 0.1}, {0, 0})};
  CHECK_THROWS_AS(mean_reciprocal_rank(no_pos), MdfnError);
}
