#include "varcf/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "varcf/error.hpp"

namespace varcf {

IdIndex::IdIndex(std::vector<std::string> names) : names_(std::move(names)) {
    lookup_.reserve(names_.size());
    for (Index i = 0; i < names_.size(); ++i) {
        if (!lookup_.emplace(names_[i], i).second) {
            throw Error(ErrorKind::Format, "duplicate identifier '" + names_[i] + "' in id map");
        }
    }
}

Index IdIndex::intern(const std::string& raw) {
    auto [it, inserted] = lookup_.try_emplace(raw, names_.size());
    if (inserted) names_.push_back(raw);
    return it->second;
}

std::optional<Index> IdIndex::find(const std::string& raw) const {
    auto it = lookup_.find(raw);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
}

namespace {

std::string normalize_name(std::string_view name) {
    std::string out;
    for (char c : name) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    return out;
}

}  // namespace

std::optional<DatasetInfo> registry(std::string_view name) {
    const std::string key = normalize_name(name);
    if (key == "filmtrust") return DatasetInfo{"FilmTrust", {0.5, 4.0}, 3.0, 1508, 2071, 35494};
    if (key == "movielens" || key == "movielens1m" || key == "ml1m") {
        return DatasetInfo{"MovieLens", {1.0, 5.0}, 4.0, 6040, 3706, 1000209};
    }
    if (key == "myanimelist") return DatasetInfo{"MyAnimeList", {1.0, 10.0}, 8.0, 69600, 9927, 6337234};
    if (key == "netflix") return DatasetInfo{"Netflix", {1.0, 5.0}, 4.0, 480189, 17770, 100480507};
    return std::nullopt;
}

double default_threshold(const RatingScale& scale) noexcept {
    return scale.min + 0.75 * (scale.max - scale.min);
}

namespace {

struct RawRow {
    std::string user;
    std::string item;
    double rating = 0.0;
    std::size_t line = 0;
};

enum class Delimiter { Comma, Tab, DoubleColon, Blank };

Delimiter detect_delimiter(std::string_view line) {
    if (line.find("::") != std::string_view::npos) return Delimiter::DoubleColon;
    if (line.find('\t') != std::string_view::npos) return Delimiter::Tab;
    if (line.find(',') != std::string_view::npos) return Delimiter::Comma;
    return Delimiter::Blank;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line, Delimiter delim) {
    std::vector<std::string_view> fields;
    if (delim == Delimiter::Blank) {
        std::size_t pos = 0;
        while (pos < line.size()) {
            while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
            if (pos >= line.size()) break;
            std::size_t end = pos;
            while (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end]))) ++end;
            fields.push_back(line.substr(pos, end - pos));
            pos = end;
        }
        return fields;
    }
    const std::string_view sep = delim == Delimiter::Comma ? "," : delim == Delimiter::Tab ? "\t" : "::";
    std::size_t pos = 0;
    while (true) {
        const std::size_t next = line.find(sep, pos);
        fields.push_back(trim(line.substr(pos, next == std::string_view::npos ? line.npos : next - pos)));
        if (next == std::string_view::npos) break;
        pos = next + sep.size();
    }
    return fields;
}

std::optional<double> parse_number(std::string_view token) {
    double value = 0.0;
    const char* end = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(token.data(), end, value);
    if (ec != std::errc{} || ptr != end || !std::isfinite(value)) return std::nullopt;
    return value;
}

bool looks_like_header(const std::vector<std::string_view>& fields) {
    if (parse_number(fields[2])) return false;
    static const char* const words[] = {"user", "item", "movie", "rating", "score", "anime", "uid", "iid"};
    for (auto f : fields) {
        const std::string key = normalize_name(f);
        for (const char* w : words) {
            if (key.find(w) != std::string::npos) return true;
        }
    }
    return false;
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& msg) {
    throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + msg);
}

std::vector<RawRow> read_rows(std::istream& in) {
    std::vector<RawRow> rows;
    std::optional<Delimiter> delim;
    std::string line;
    std::size_t line_no = 0;
    bool first_data_line = true;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = trim(line);
        if (view.empty()) continue;
        if (line_no == 1 && view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
        if (!delim) delim = detect_delimiter(view);
        auto fields = split_fields(view, *delim);
        if (fields.size() < 3 || fields.size() > 4) {
            parse_fail(line_no, "expected user,item,rating[,timestamp] but found " +
                                    std::to_string(fields.size()) + " fields");
        }
        if (first_data_line) {
            first_data_line = false;
            if (looks_like_header(fields)) continue;
        }
        if (fields[0].empty() || fields[1].empty()) parse_fail(line_no, "empty user or item id");
        auto rating = parse_number(fields[2]);
        if (!rating) parse_fail(line_no, "rating '" + std::string(fields[2]) + "' is not a finite number");
        rows.push_back({std::string(fields[0]), std::string(fields[1]), *rating, line_no});
    }
    if (rows.empty()) throw Error(ErrorKind::EmptyDataset, "no ratings found");
    return rows;
}

void resolve_scale(RatingsDataset& data, const LoadOptions& options,
                   const std::vector<RawRow>& rows) {
    const auto info = registry(options.name);
    if (options.scale) {
        data.scale = *options.scale;
    } else if (info) {
        data.scale = info->scale;
    } else {
        auto [lo, hi] = std::minmax_element(rows.begin(), rows.end(),
                                            [](const RawRow& a, const RawRow& b) { return a.rating < b.rating; });
        data.scale = {lo->rating, hi->rating};
    }
    if (options.threshold) {
        data.threshold = *options.threshold;
    } else if (info) {
        data.threshold = info->threshold;
    } else {
        data.threshold = default_threshold(data.scale);
    }
    for (const auto& row : rows) {
        if (row.rating < data.scale.min || row.rating > data.scale.max) {
            std::ostringstream msg;
            msg << "rating " << row.rating << " outside scale [" << data.scale.min << ", "
                << data.scale.max << "]";
            parse_fail(row.line, msg.str());
        }
    }
}

// Keep-last deduplication preserving the position of the surviving occurrence.
void dedupe_keep_last(RatingsDataset& data) {
    std::unordered_map<std::uint64_t, std::size_t> last;
    last.reserve(data.triples.size());
    const std::uint64_t stride = data.items.size();
    for (std::size_t k = 0; k < data.triples.size(); ++k) {
        last[data.triples[k].user * stride + data.triples[k].item] = k;
    }
    if (last.size() == data.triples.size()) return;
    std::vector<Rating> kept;
    kept.reserve(last.size());
    for (std::size_t k = 0; k < data.triples.size(); ++k) {
        if (last[data.triples[k].user * stride + data.triples[k].item] == k) kept.push_back(data.triples[k]);
    }
    data.duplicates_dropped = data.triples.size() - kept.size();
    data.triples = std::move(kept);
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open ratings file " + path.string());
    return in;
}

std::string dataset_name(const std::filesystem::path& path, const LoadOptions& options) {
    if (!options.name.empty()) return options.name;
    return path.stem().string();
}

}  // namespace

RatingsDataset parse_ratings(std::istream& in, const LoadOptions& options) {
    auto rows = read_rows(in);
    RatingsDataset data;
    data.name = options.name;
    resolve_scale(data, options, rows);
    data.triples.reserve(rows.size());
    for (const auto& row : rows) {
        const Index u = data.users.intern(row.user);
        const Index i = data.items.intern(row.item);
        data.triples.push_back({u, i, row.rating});
    }
    dedupe_keep_last(data);
    return data;
}

RatingsDataset load_ratings(const std::filesystem::path& path, const LoadOptions& options) {
    auto in = open_input(path);
    LoadOptions named = options;
    named.name = dataset_name(path, options);
    try {
        return parse_ratings(in, named);
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

RatingsDataset load_ratings_with_ids(const std::filesystem::path& path, const IdIndex& users,
                                     const IdIndex& items, const LoadOptions& options) {
    auto in = open_input(path);
    LoadOptions named = options;
    named.name = dataset_name(path, options);
    try {
        auto rows = read_rows(in);
        RatingsDataset data;
        data.name = named.name;
        data.users = users;
        data.items = items;
        resolve_scale(data, named, rows);
        for (const auto& row : rows) {
            auto u = users.find(row.user);
            auto i = items.find(row.item);
            if (!u) parse_fail(row.line, "unknown user id '" + row.user + "'");
            if (!i) parse_fail(row.line, "unknown item id '" + row.item + "'");
            data.triples.push_back({*u, *i, row.rating});
        }
        dedupe_keep_last(data);
        return data;
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

void write_ratings_csv(const RatingsDataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << std::setprecision(17);
    for (const auto& r : data.triples) {
        out << data.users.name(r.user) << ',' << data.items.name(r.item) << ',' << r.value << '\n';
    }
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

namespace {

RatingsDataset with_triples(const RatingsDataset& like, std::vector<Rating> triples) {
    RatingsDataset out;
    out.name = like.name;
    out.users = like.users;
    out.items = like.items;
    out.scale = like.scale;
    out.threshold = like.threshold;
    out.triples = std::move(triples);
    return out;
}

}  // namespace

SplitPair split(const RatingsDataset& data, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw Error(ErrorKind::Config, "split ratio must be in (0, 1], got " + std::to_string(ratio));
    }
    std::vector<std::size_t> order(data.triples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span(order));
    const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(order.size())));
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::sort(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::vector<Rating> train, test;
    train.reserve(n_train);
    test.reserve(order.size() - n_train);
    for (std::size_t k = 0; k < order.size(); ++k) {
        (k < n_train ? train : test).push_back(data.triples[order[k]]);
    }
    return {with_triples(data, std::move(train)), with_triples(data, std::move(test))};
}

std::vector<TrainingBatch> batches(const RatingsDataset& train, std::size_t batch_size,
                                   std::uint64_t seed, std::uint64_t epoch) {
    if (batch_size == 0) throw Error(ErrorKind::Config, "batch_size must be > 0");
    std::vector<std::size_t> order(train.triples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, epoch));
    rng.shuffle(std::span(order));
    std::vector<TrainingBatch> out;
    out.reserve((order.size() + batch_size - 1) / batch_size);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        TrainingBatch batch;
        batch.user_ids.reserve(end - start);
        batch.item_ids.reserve(end - start);
        batch.ratings.reserve(end - start);
        for (std::size_t k = start; k < end; ++k) {
            const Rating& r = train.triples[order[k]];
            batch.user_ids.push_back(r.user);
            batch.item_ids.push_back(r.item);
            batch.ratings.push_back(r.value);
        }
        out.push_back(std::move(batch));
    }
    return out;
}

std::uint64_t checksum(std::span<const Rating> triples) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t word) {
        for (int b = 0; b < 8; ++b) {
            h ^= (word >> (8 * b)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& r : triples) {
        mix(r.user);
        mix(r.item);
        mix(std::bit_cast<std::uint64_t>(r.value));
    }
    return h;
}

std::string checksum_hex(std::span<const Rating> triples) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(checksum(triples)));
    return buf;
}

SplitManifest make_manifest(const RatingsDataset& corpus, const SplitPair& parts, double ratio,
                            std::uint64_t seed) {
    SplitManifest m;
    m.dataset = corpus.name;
    m.seed = seed;
    m.ratio = ratio;
    m.total = corpus.size();
    m.train = parts.train.size();
    m.test = parts.test.size();
    m.num_users = corpus.num_users();
    m.num_items = corpus.num_items();
    m.corpus_checksum = checksum_hex(corpus.triples);
    m.train_checksum = checksum_hex(parts.train.triples);
    m.test_checksum = checksum_hex(parts.test.triples);
    m.duplicates_dropped = corpus.duplicates_dropped;
    return m;
}

void write_manifest(const SplitManifest& m, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["format_version"] = m.format_version;
    j["dataset"] = m.dataset;
    j["seed"] = m.seed;
    j["ratio"] = m.ratio;
    j["counts"] = {{"total", m.total}, {"train", m.train}, {"test", m.test},
                   {"users", m.num_users}, {"items", m.num_items}};
    j["checksums"] = {{"corpus", m.corpus_checksum}, {"train", m.train_checksum}, {"test", m.test_checksum}};
    j["duplicate_policy"] = m.duplicate_policy;
    j["duplicates_dropped"] = m.duplicates_dropped;
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write manifest " + path.string());
    out << j.dump(2) << '\n';
}

SplitManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open manifest " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        SplitManifest m;
        m.format_version = j.at("format_version").get<int>();
        if (m.format_version != 1) {
            throw Error(ErrorKind::Format, "unsupported manifest version " + std::to_string(m.format_version));
        }
        m.dataset = j.at("dataset").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.ratio = j.at("ratio").get<double>();
        const auto& c = j.at("counts");
        m.total = c.at("total");
        m.train = c.at("train");
        m.test = c.at("test");
        m.num_users = c.at("users");
        m.num_items = c.at("items");
        const auto& s = j.at("checksums");
        m.corpus_checksum = s.at("corpus");
        m.train_checksum = s.at("train");
        m.test_checksum = s.at("test");
        m.duplicate_policy = j.at("duplicate_policy");
        m.duplicates_dropped = j.at("duplicates_dropped");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Format, "malformed manifest " + path.string() + ": " + e.what());
    }
}

}  // namespace varcf
