#include "varcf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "varcf/error.hpp"

namespace varcf {

namespace {

void require_nonempty(std::span<const ScoredRating> pairs, const char* metric) {
    if (pairs.empty()) throw Error(ErrorKind::EmptyMetric, std::string(metric) + " of an empty test set");
}

void require_valid_n(std::size_t n) {
    if (n == 0) throw Error(ErrorKind::Config, "ranking cutoff N must be >= 1");
}

// Sorted by user, then predicted score descending, then item ascending.
std::vector<ScoredRating> ranked_by_user(std::span<const ScoredRating> pairs) {
    std::vector<ScoredRating> sorted(pairs.begin(), pairs.end());
    std::sort(sorted.begin(), sorted.end(), [](const ScoredRating& a, const ScoredRating& b) {
        if (a.user != b.user) return a.user < b.user;
        if (a.predicted != b.predicted) return a.predicted > b.predicted;
        return a.item < b.item;
    });
    return sorted;
}

template <typename Fn>
void for_each_user(const std::vector<ScoredRating>& sorted, Fn&& fn) {
    std::size_t start = 0;
    while (start < sorted.size()) {
        std::size_t end = start;
        while (end < sorted.size() && sorted[end].user == sorted[start].user) ++end;
        fn(std::span<const ScoredRating>(sorted.data() + start, end - start));
        start = end;
    }
}

double gain(double rating) { return std::exp2(rating) - 1.0; }

double discount(std::size_t position) { return std::log2(static_cast<double>(position) + 1.0); }

}  // namespace

double mae(std::span<const ScoredRating> pairs) {
    require_nonempty(pairs, "MAE");
    double acc = 0.0;
    for (const auto& p : pairs) acc += std::abs(p.truth - p.predicted);
    return acc / static_cast<double>(pairs.size());
}

double mse(std::span<const ScoredRating> pairs) {
    require_nonempty(pairs, "MSE");
    double acc = 0.0;
    for (const auto& p : pairs) acc += (p.truth - p.predicted) * (p.truth - p.predicted);
    return acc / static_cast<double>(pairs.size());
}

double r2(std::span<const ScoredRating> pairs) {
    require_nonempty(pairs, "R2");
    double mean = 0.0;
    for (const auto& p : pairs) mean += p.truth;
    mean /= static_cast<double>(pairs.size());
    double sse = 0.0;
    double sst = 0.0;
    for (const auto& p : pairs) {
        sse += (p.truth - p.predicted) * (p.truth - p.predicted);
        sst += (p.truth - mean) * (p.truth - mean);
    }
    if (sst == 0.0) {
        throw Error(ErrorKind::DegenerateVariance, "R2 undefined: all test ratings are equal");
    }
    return 1.0 - sse / sst;
}

PrecisionRecall precision_recall_at_n(std::span<const ScoredRating> pairs, std::size_t n,
                                      double threshold) {
    require_nonempty(pairs, "precision/recall");
    require_valid_n(n);
    PrecisionRecall out;
    double precision_sum = 0.0;
    double recall_sum = 0.0;
    for_each_user(ranked_by_user(pairs), [&](std::span<const ScoredRating> items) {
        const std::size_t top = std::min(n, items.size());
        std::size_t hits = 0;
        for (std::size_t k = 0; k < top; ++k) hits += items[k].truth >= threshold ? 1 : 0;
        const auto relevant = static_cast<std::size_t>(std::count_if(
            items.begin(), items.end(), [&](const ScoredRating& r) { return r.truth >= threshold; }));
        precision_sum += static_cast<double>(hits) / static_cast<double>(n);
        out.users += 1;
        if (relevant > 0) {
            recall_sum += static_cast<double>(hits) / static_cast<double>(relevant);
            out.recall_users += 1;
        }
    });
    out.precision = precision_sum / static_cast<double>(out.users);
    out.recall = out.recall_users == 0 ? 0.0 : recall_sum / static_cast<double>(out.recall_users);
    return out;
}

Ndcg ndcg_at_n(std::span<const ScoredRating> pairs, std::size_t n) {
    require_nonempty(pairs, "nDCG");
    require_valid_n(n);
    Ndcg out;
    double sum = 0.0;
    std::vector<double> ideal;
    for_each_user(ranked_by_user(pairs), [&](std::span<const ScoredRating> items) {
        const std::size_t top = std::min(n, items.size());
        double dcg = 0.0;
        for (std::size_t k = 0; k < top; ++k) dcg += gain(items[k].truth) / discount(k + 1);
        ideal.clear();
        for (const auto& r : items) ideal.push_back(r.truth);
        std::sort(ideal.begin(), ideal.end(), std::greater<>());
        double idcg = 0.0;
        for (std::size_t k = 0; k < top; ++k) idcg += gain(ideal[k]) / discount(k + 1);
        if (idcg <= 0.0) return;
        sum += dcg / idcg;
        out.users += 1;
    });
    out.value = out.users == 0 ? 0.0 : sum / static_cast<double>(out.users);
    return out;
}

std::vector<RankingPoint> ranking_curve(std::span<const ScoredRating> pairs,
                                        std::span<const std::size_t> n_values, double threshold) {
    std::vector<RankingPoint> curve;
    curve.reserve(n_values.size());
    for (auto n : n_values) {
        curve.push_back({n, precision_recall_at_n(pairs, n, threshold), ndcg_at_n(pairs, n)});
    }
    return curve;
}

}  // namespace varcf
