#include "varcf/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "varcf/checkpoint.hpp"
#include "varcf/error.hpp"
#include "varcf/trainer.hpp"

namespace varcf {

using nlohmann::json;
using nlohmann::ordered_json;

ReportFormat parse_report_format(std::string_view name) {
    if (name == "json") return ReportFormat::Json;
    if (name == "csv") return ReportFormat::Csv;
    throw Error(ErrorKind::Usage, "unknown report format '" + std::string(name) + "' (valid: json, csv)");
}

std::size_t default_epochs(Architecture arch, std::string_view dataset) {
    const auto info = registry(dataset);
    if (!info) return 10;
    // Columns: VDeepMF, DeepMF, VNCF, NCF.
    struct Budget {
        const char* name;
        std::size_t epochs[4];
    };
    static constexpr Budget budgets[] = {
        {"FilmTrust", {15, 25, 7, 15}},
        {"MovieLens", {6, 10, 9, 10}},
        {"MyAnimeList", {9, 20, 9, 15}},
        {"Netflix", {3, 4, 3, 4}},
    };
    const int column = arch == Architecture::VDeepMF ? 0 : arch == Architecture::DeepMF ? 1
                     : arch == Architecture::VNCF    ? 2 : 3;
    for (const auto& b : budgets) {
        if (info->name == b.name) return b.epochs[column];
    }
    return 10;
}

std::vector<std::size_t> default_top_n_sweep() { return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}; }

void validate(const ExperimentSpec& spec) {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::Config, msg); };
    if (spec.architectures.empty()) fail("experiment needs at least one architecture");
    if (!(spec.split_ratio > 0.0 && spec.split_ratio <= 1.0)) fail("split ratio must be in (0, 1]");
    if (spec.top_n.empty()) fail("top-N sweep is empty");
    for (auto n : spec.top_n) {
        if (n == 0) fail("top-N values must be >= 1");
    }
    if (spec.epochs && *spec.epochs == 0) fail("epochs must be > 0");
}

ExperimentSpec spec_from_json(const json& j, ExperimentSpec spec) {
    try {
        if (j.contains("dataset")) {
            const auto& d = j["dataset"];
            if (d.contains("path")) spec.dataset_path = d["path"].get<std::string>();
            if (d.contains("name")) spec.dataset_name = d["name"].get<std::string>();
            if (d.contains("threshold")) spec.threshold = d["threshold"].get<double>();
        }
        if (j.contains("architectures")) {
            spec.architectures.clear();
            for (const auto& a : j["architectures"]) spec.architectures.push_back(parse_architecture(a.get<std::string>()));
        }
        if (j.contains("model")) spec.model = config_from_json(j["model"], spec.model);
        if (j.contains("epochs")) spec.epochs = j["epochs"].get<std::size_t>();
        if (j.contains("split")) {
            const auto& s = j["split"];
            if (s.contains("ratio")) spec.split_ratio = s["ratio"].get<double>();
            if (s.contains("seed")) spec.split_seed = s["seed"].get<std::uint64_t>();
        }
        if (j.contains("seeds")) {
            const auto& s = j["seeds"];
            if (s.contains("split")) spec.split_seed = s["split"].get<std::uint64_t>();
            if (s.contains("init")) spec.init_seed = s["init"].get<std::uint64_t>();
            if (s.contains("sample")) spec.sample_seed = s["sample"].get<std::uint64_t>();
        }
        if (j.contains("top_n")) spec.top_n = j["top_n"].get<std::vector<std::size_t>>();
        if (j.contains("report")) {
            const auto& r = j["report"];
            if (r.contains("path")) spec.report_path = r["path"].get<std::string>();
            if (r.contains("format")) spec.report_format = parse_report_format(r["format"].get<std::string>());
            if (r.contains("timing")) spec.record_timing = r["timing"].get<bool>();
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, std::string("bad experiment config: ") + e.what());
    }
    return spec;
}

ExperimentSpec load_spec(const std::filesystem::path& path, ExperimentSpec base) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, "config " + path.string() + " is not valid JSON: " + e.what());
    }
    auto spec = spec_from_json(j, std::move(base));
    // Relative dataset paths are taken from the config file's directory.
    if (!spec.dataset_path.empty() && spec.dataset_path.is_relative() && j.contains("dataset") &&
        j["dataset"].contains("path")) {
        spec.dataset_path = path.parent_path() / spec.dataset_path;
    }
    return spec;
}

ArchitectureResult evaluate_model(const ModelParams& params, const ModelConfig& config,
                                  const RatingsDataset& test, std::span<const std::size_t> top_n,
                                  double threshold) {
    std::vector<Index> users, items;
    users.reserve(test.size());
    items.reserve(test.size());
    for (const auto& r : test.triples) {
        users.push_back(r.user);
        items.push_back(r.item);
    }
    Rng rng = prediction_stream(config);
    const auto predicted = predict(params, config, users, items, rng);
    std::vector<ScoredRating> scored;
    scored.reserve(test.size());
    for (std::size_t k = 0; k < test.size(); ++k) {
        if (!std::isfinite(predicted[k])) throw Error(ErrorKind::Numeric, "non-finite prediction");
        scored.push_back({users[k], items[k], test.triples[k].value, predicted[k]});
    }
    ArchitectureResult result;
    result.architecture = config.architecture;
    result.config = config;
    result.mae = mae(scored);
    result.mse = mse(scored);
    result.r2 = r2(scored);
    result.curve = ranking_curve(scored, top_n, threshold);
    return result;
}

namespace {

template <typename Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.kind(), "stage '" + stage + "': " + e.what());
    }
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

ModelConfig architecture_config(const ExperimentSpec& spec, Architecture arch,
                                const RatingsDataset& corpus) {
    ModelConfig c = spec.model;
    c.architecture = arch;
    c.num_users = corpus.num_users();
    c.num_items = corpus.num_items();
    c.scale = corpus.scale;
    c.init_seed = spec.init_seed;
    c.sample_seed = spec.sample_seed;
    c.epochs = spec.epochs.value_or(default_epochs(arch, corpus.name));
    if (!uses_mlp(arch)) {
        c.mlp_hidden.clear();
    } else if (c.mlp_hidden.empty()) {
        c.mlp_hidden = default_mlp_hidden(c.latent_dim);
    }
    return c;
}

MetricsReport run_experiment(const ExperimentSpec& spec, const RatingsDataset& corpus) {
    in_stage("config", [&] { validate(spec); });
    const double threshold = spec.threshold.value_or(corpus.threshold);
    const SplitPair parts = in_stage("split", [&] {
        auto p = split(corpus, spec.split_ratio, spec.split_seed);
        if (p.test.triples.empty()) throw Error(ErrorKind::EmptyMetric, "test split is empty");
        return p;
    });

    MetricsReport report;
    auto& meta = report.metadata;
    meta.dataset = corpus.name;
    meta.corpus_checksum = checksum_hex(corpus.triples);
    meta.num_users = corpus.num_users();
    meta.num_items = corpus.num_items();
    meta.num_ratings = corpus.size();
    meta.train_size = parts.train.size();
    meta.test_size = parts.test.size();
    std::set<Index> train_users;
    for (const auto& r : parts.train.triples) train_users.insert(r.user);
    std::set<Index> cold;
    for (const auto& r : parts.test.triples) {
        if (!train_users.contains(r.user)) cold.insert(r.user);
    }
    meta.cold_start_test_users = cold.size();
    meta.threshold = threshold;
    meta.scale = corpus.scale;
    meta.split_ratio = spec.split_ratio;
    meta.split_seed = spec.split_seed;
    meta.init_seed = spec.init_seed;
    meta.sample_seed = spec.sample_seed;
    meta.n_prediction_samples = spec.model.n_prediction_samples;
    if (spec.record_timing) meta.timestamp = utc_timestamp();

    for (const auto arch : spec.architectures) {
        const std::string name(to_string(arch));
        const ModelConfig config = in_stage("config " + name, [&] {
            auto c = architecture_config(spec, arch, corpus);
            validate(c);
            return c;
        });
        ModelParams params = in_stage("init " + name, [&] { return build_model(config); });
        const auto start = std::chrono::steady_clock::now();
        FitResult fitted = in_stage("train " + name, [&] { return fit(params, config, parts.train); });
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        ArchitectureResult result = in_stage("evaluate " + name, [&] {
            return evaluate_model(params, config, parts.test, spec.top_n, threshold);
        });
        result.fit_epochs = fitted.epochs;
        result.epoch_losses = std::move(fitted.epoch_losses);
        if (spec.record_timing) result.fit_seconds = elapsed.count();
        report.results.push_back(std::move(result));
    }
    return report;
}

MetricsReport run_experiment(const ExperimentSpec& spec) {
    const RatingsDataset corpus = in_stage("load", [&] {
        LoadOptions options;
        options.name = spec.dataset_name;
        options.threshold = spec.threshold;
        return load_ratings(spec.dataset_path, options);
    });
    return run_experiment(spec, corpus);
}

ordered_json report_to_json(const MetricsReport& report) {
    ordered_json j;
    j["schema_version"] = std::to_string(report.schema_major) + "." + std::to_string(report.schema_minor);
    const auto& m = report.metadata;
    ordered_json meta;
    meta["dataset"] = m.dataset;
    meta["corpus_checksum"] = m.corpus_checksum;
    meta["num_users"] = m.num_users;
    meta["num_items"] = m.num_items;
    meta["num_ratings"] = m.num_ratings;
    meta["train_size"] = m.train_size;
    meta["test_size"] = m.test_size;
    meta["cold_start_test_users"] = m.cold_start_test_users;
    meta["threshold"] = m.threshold;
    meta["scale"] = {{"min", m.scale.min}, {"max", m.scale.max}};
    meta["split_ratio"] = m.split_ratio;
    meta["seeds"] = {{"split", m.split_seed}, {"init", m.init_seed}, {"sample", m.sample_seed}};
    meta["n_prediction_samples"] = m.n_prediction_samples;
    meta["protocol"] = {{"candidate_set", m.candidate_set},
                        {"duplicate_policy", m.duplicate_policy},
                        {"loss", m.loss}};
    if (m.timestamp) meta["timestamp"] = *m.timestamp;
    j["metadata"] = std::move(meta);

    ordered_json results = ordered_json::array();
    for (const auto& r : report.results) {
        ordered_json block;
        block["architecture"] = std::string(to_string(r.architecture));
        block["config"] = config_to_json(r.config);
        ordered_json fit_info;
        fit_info["epochs"] = r.fit_epochs;
        if (r.fit_seconds) fit_info["seconds"] = *r.fit_seconds;
        fit_info["epoch_losses"] = r.epoch_losses;
        block["fit"] = std::move(fit_info);
        block["metrics"] = {{"mae", r.mae}, {"mse", r.mse}, {"r2", r.r2}};
        ordered_json ranking;
        std::vector<std::size_t> ns, users, recall_users, ndcg_users;
        std::vector<double> precision, recall, ndcg;
        for (const auto& p : r.curve) {
            ns.push_back(p.n);
            precision.push_back(p.pr.precision);
            recall.push_back(p.pr.recall);
            ndcg.push_back(p.ndcg.value);
            users.push_back(p.pr.users);
            recall_users.push_back(p.pr.recall_users);
            ndcg_users.push_back(p.ndcg.users);
        }
        ranking["n"] = ns;
        ranking["precision"] = precision;
        ranking["recall"] = recall;
        ranking["ndcg"] = ndcg;
        ranking["users"] = users;
        ranking["recall_users"] = recall_users;
        ranking["ndcg_users"] = ndcg_users;
        block["ranking"] = std::move(ranking);
        results.push_back(std::move(block));
    }
    j["results"] = std::move(results);
    return j;
}

MetricsReport report_from_json(const json& j) {
    MetricsReport report;
    try {
        const auto version = j.at("schema_version").get<std::string>();
        int major = 0;
        int minor = 0;
        if (std::sscanf(version.c_str(), "%d.%d", &major, &minor) != 2) {
            throw Error(ErrorKind::Format, "malformed report schema_version '" + version + "'");
        }
        if (major != kReportSchemaMajor) {
            throw Error(ErrorKind::Format, "unsupported report schema major version " + std::to_string(major));
        }
        report.schema_major = major;
        report.schema_minor = minor;
        const auto& meta = j.at("metadata");
        auto& m = report.metadata;
        m.dataset = meta.at("dataset");
        m.corpus_checksum = meta.at("corpus_checksum");
        m.num_users = meta.at("num_users");
        m.num_items = meta.at("num_items");
        m.num_ratings = meta.at("num_ratings");
        m.train_size = meta.at("train_size");
        m.test_size = meta.at("test_size");
        m.cold_start_test_users = meta.at("cold_start_test_users");
        m.threshold = meta.at("threshold");
        m.scale = {meta.at("scale").at("min"), meta.at("scale").at("max")};
        m.split_ratio = meta.at("split_ratio");
        m.split_seed = meta.at("seeds").at("split");
        m.init_seed = meta.at("seeds").at("init");
        m.sample_seed = meta.at("seeds").at("sample");
        m.n_prediction_samples = meta.at("n_prediction_samples");
        m.candidate_set = meta.at("protocol").at("candidate_set");
        m.duplicate_policy = meta.at("protocol").at("duplicate_policy");
        m.loss = meta.at("protocol").at("loss");
        if (meta.contains("timestamp")) m.timestamp = meta["timestamp"].get<std::string>();

        for (const auto& block : j.at("results")) {
            ArchitectureResult r;
            r.architecture = parse_architecture(block.at("architecture").get<std::string>());
            r.config = config_from_json(block.at("config"));
            const auto& f = block.at("fit");
            r.fit_epochs = f.at("epochs");
            if (f.contains("seconds")) r.fit_seconds = f["seconds"].get<double>();
            r.epoch_losses = f.at("epoch_losses").get<std::vector<double>>();
            r.mae = block.at("metrics").at("mae");
            r.mse = block.at("metrics").at("mse");
            r.r2 = block.at("metrics").at("r2");
            const auto& rk = block.at("ranking");
            const auto ns = rk.at("n").get<std::vector<std::size_t>>();
            for (std::size_t k = 0; k < ns.size(); ++k) {
                RankingPoint p;
                p.n = ns[k];
                p.pr.precision = rk.at("precision").at(k);
                p.pr.recall = rk.at("recall").at(k);
                p.pr.users = rk.at("users").at(k);
                p.pr.recall_users = rk.at("recall_users").at(k);
                p.ndcg.value = rk.at("ndcg").at(k);
                p.ndcg.users = rk.at("ndcg_users").at(k);
                r.curve.push_back(p);
            }
            report.results.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, std::string("malformed report: ") + e.what());
    }
    return report;
}

namespace {

std::string number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

}  // namespace

std::string report_to_csv(const MetricsReport& report) {
    std::ostringstream out;
    out << "architecture,metric,n,value\n";
    auto row = [&out](const std::string& arch, const std::string& metric, const std::string& n,
                      const std::string& value) {
        out << csv_field(arch) << ',' << csv_field(metric) << ',' << n << ',' << csv_field(value) << '\n';
    };
    for (const auto& r : report.results) {
        const std::string arch(to_string(r.architecture));
        row(arch, "mae", "", number(r.mae));
        row(arch, "mse", "", number(r.mse));
        row(arch, "r2", "", number(r.r2));
        for (const auto& p : r.curve) {
            const auto n = std::to_string(p.n);
            row(arch, "precision", n, number(p.pr.precision));
            row(arch, "recall", n, number(p.pr.recall));
            row(arch, "ndcg", n, number(p.ndcg.value));
        }
    }
    const auto& m = report.metadata;
    auto meta = [&row](const std::string& key, const std::string& value) { row("meta", key, "", value); };
    meta("schema_version", std::to_string(report.schema_major) + "." + std::to_string(report.schema_minor));
    meta("dataset", m.dataset);
    meta("corpus_checksum", m.corpus_checksum);
    meta("num_users", std::to_string(m.num_users));
    meta("num_items", std::to_string(m.num_items));
    meta("num_ratings", std::to_string(m.num_ratings));
    meta("train_size", std::to_string(m.train_size));
    meta("test_size", std::to_string(m.test_size));
    meta("cold_start_test_users", std::to_string(m.cold_start_test_users));
    meta("threshold", number(m.threshold));
    meta("scale_min", number(m.scale.min));
    meta("scale_max", number(m.scale.max));
    meta("split_ratio", number(m.split_ratio));
    meta("split_seed", std::to_string(m.split_seed));
    meta("init_seed", std::to_string(m.init_seed));
    meta("sample_seed", std::to_string(m.sample_seed));
    meta("n_prediction_samples", std::to_string(m.n_prediction_samples));
    meta("candidate_set", m.candidate_set);
    meta("duplicate_policy", m.duplicate_policy);
    meta("loss", m.loss);
    if (m.timestamp) meta("timestamp", *m.timestamp);
    for (const auto& r : report.results) {
        const std::string arch(to_string(r.architecture));
        meta(arch + ".fit_epochs", std::to_string(r.fit_epochs));
        if (r.fit_seconds) meta(arch + ".fit_seconds", number(*r.fit_seconds));
    }
    return out.str();
}

void emit_report(const MetricsReport& report, const std::filesystem::path& path, ReportFormat format) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write report " + path.string());
    if (format == ReportFormat::Json) {
        out << report_to_json(report).dump(2) << '\n';
    } else {
        out << report_to_csv(report);
    }
    if (!out) throw Error(ErrorKind::Io, "write failed for report " + path.string());
}

}  // namespace varcf
