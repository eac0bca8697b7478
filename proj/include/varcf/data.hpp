#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "varcf/model.hpp"

namespace varcf {

struct Rating {
    Index user = 0;
    Index item = 0;
    double value = 0.0;

    friend bool operator==(const Rating&, const Rating&) = default;
};

/// Bijection between raw identifiers and dense indices in first-appearance order.
class IdIndex {
public:
    IdIndex() = default;
    explicit IdIndex(std::vector<std::string> names);

    Index intern(const std::string& raw);
    std::optional<Index> find(const std::string& raw) const;
    const std::string& name(Index idx) const { return names_.at(idx); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    std::size_t size() const noexcept { return names_.size(); }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, Index> lookup_;
};

struct RatingsDataset {
    std::string name;
    std::vector<Rating> triples;
    IdIndex users;
    IdIndex items;
    RatingScale scale;
    double threshold = 0.0;
    std::size_t duplicates_dropped = 0;

    std::size_t num_users() const noexcept { return users.size(); }
    std::size_t num_items() const noexcept { return items.size(); }
    std::size_t size() const noexcept { return triples.size(); }
};

/// Built-in corpus metadata: rating scale, relevance threshold and reference sizes.
struct DatasetInfo {
    std::string name;
    RatingScale scale;
    double threshold = 0.0;
    std::size_t users = 0;
    std::size_t items = 0;
    std::size_t ratings = 0;
};

// Lookup ignores case and punctuation ("ml-1m" and "movielens" both hit MovieLens).
std::optional<DatasetInfo> registry(std::string_view name);

struct LoadOptions {
    std::string name;
    std::optional<double> threshold;  // overrides the registry
    std::optional<RatingScale> scale; // overrides registry and observed range
};

// Fallback threshold for corpora without a registry entry: 75% of the way up the scale.
double default_threshold(const RatingScale& scale) noexcept;

// Columns user,item,rating[,timestamp]; delimiter is ',', tab, "::" or blanks,
// detected from the first data line. A header row is recognized by its column names.
// Duplicate (user, item) pairs keep the last occurrence.
RatingsDataset load_ratings(const std::filesystem::path& path, const LoadOptions& options = {});
RatingsDataset parse_ratings(std::istream& in, const LoadOptions& options = {});

// Parses ratings against fixed id maps (e.g. from a checkpoint); unknown ids are an error.
RatingsDataset load_ratings_with_ids(const std::filesystem::path& path, const IdIndex& users,
                                     const IdIndex& items, const LoadOptions& options = {});

void write_ratings_csv(const RatingsDataset& data, const std::filesystem::path& path);

struct SplitPair {
    RatingsDataset train;
    RatingsDataset test;
};

// Uniform rating-level partition; train gets round(ratio * n) triples.
SplitPair split(const RatingsDataset& data, double ratio, std::uint64_t seed);

// Shuffled per (seed, epoch); the last batch may be short.
std::vector<TrainingBatch> batches(const RatingsDataset& train, std::size_t batch_size,
                                   std::uint64_t seed, std::uint64_t epoch);

// FNV-1a over the (user, item, rating-bits) sequence.
std::uint64_t checksum(std::span<const Rating> triples) noexcept;
std::string checksum_hex(std::span<const Rating> triples);

struct SplitManifest {
    int format_version = 1;
    std::string dataset;
    std::uint64_t seed = 0;
    double ratio = 0.0;
    std::size_t total = 0;
    std::size_t train = 0;
    std::size_t test = 0;
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    std::string corpus_checksum;
    std::string train_checksum;
    std::string test_checksum;
    std::string duplicate_policy = "keep-last";
    std::size_t duplicates_dropped = 0;
};

SplitManifest make_manifest(const RatingsDataset& corpus, const SplitPair& parts, double ratio,
                            std::uint64_t seed);
void write_manifest(const SplitManifest& manifest, const std::filesystem::path& path);
SplitManifest read_manifest(const std::filesystem::path& path);

}  // namespace varcf
