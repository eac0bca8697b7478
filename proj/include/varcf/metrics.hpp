#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "varcf/layers.hpp"

namespace varcf {

/// One test rating with the model's (averaged, clamped) prediction.
struct ScoredRating {
    Index user = 0;
    Index item = 0;
    double truth = 0.0;
    double predicted = 0.0;
};

double mae(std::span<const ScoredRating> pairs);
double mse(std::span<const ScoredRating> pairs);
// 1 - SSE / SST, with SST taken around the mean of the supplied (test) ratings.
double r2(std::span<const ScoredRating> pairs);

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    std::size_t users = 0;         // users averaged for precision
    std::size_t recall_users = 0;  // users with at least one relevant test item

    friend bool operator==(const PrecisionRecall&, const PrecisionRecall&) = default;
};

struct Ndcg {
    double value = 0.0;
    std::size_t users = 0;  // users with non-zero IDCG

    friend bool operator==(const Ndcg&, const Ndcg&) = default;
};

// Each user's test items are ranked by predicted score (descending, ties by ascending
// item index) and the first min(N, |test items|) form the recommendation list.
// Precision divides hits by N. Users without relevant items are left out of recall;
// recall is 0 when no user qualifies.
PrecisionRecall precision_recall_at_n(std::span<const ScoredRating> pairs, std::size_t n,
                                      double threshold);

// Gain 2^r - 1 discounted by log2(position + 1). Users with IDCG = 0 are skipped.
Ndcg ndcg_at_n(std::span<const ScoredRating> pairs, std::size_t n);

struct RankingPoint {
    std::size_t n = 0;
    PrecisionRecall pr;
    Ndcg ndcg;

    friend bool operator==(const RankingPoint&, const RankingPoint&) = default;
};

std::vector<RankingPoint> ranking_curve(std::span<const ScoredRating> pairs,
                                        std::span<const std::size_t> n_values, double threshold);

}  // namespace varcf
