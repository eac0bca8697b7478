// Batch experiment driver: split, train, evaluate, run, predict.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "varcf/checkpoint.hpp"
#include "varcf/data.hpp"
#include "varcf/error.hpp"
#include "varcf/experiment.hpp"
#include "varcf/trainer.hpp"

namespace fs = std::filesystem;
using namespace varcf;

namespace {

// Accepts "1-10", "1,5,10" or a mix such as "1-3,5".
std::vector<std::size_t> parse_sweep(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream in(text);
    std::string part;
    try {
        while (std::getline(in, part, ',')) {
            const auto dash = part.find('-');
            if (dash == std::string::npos) {
                out.push_back(std::stoul(part));
            } else {
                const auto lo = std::stoul(part.substr(0, dash));
                const auto hi = std::stoul(part.substr(dash + 1));
                if (lo > hi) throw std::invalid_argument(part);
                for (auto n = lo; n <= hi; ++n) out.push_back(n);
            }
        }
    } catch (const std::exception&) {
        throw Error(ErrorKind::Usage, "bad --top-n-sweep '" + text + "' (use e.g. 1-10 or 1,5,10)");
    }
    if (out.empty()) throw Error(ErrorKind::Usage, "empty --top-n-sweep");
    return out;
}

// Flags shared by train and run; values only apply when given (CLI > file > default).
struct SpecFlags {
    std::string config;
    std::string dataset;
    std::string dataset_name;
    double threshold = 0.0;
    std::vector<std::string> archs;
    std::size_t epochs = 0;
    std::size_t latent_dim = 0;
    std::size_t embedding_dim = 0;
    std::size_t batch_size = 0;
    double lr = 0.0;
    double ratio = 0.0;
    std::uint64_t split_seed = 0;
    std::uint64_t init_seed = 0;
    std::uint64_t sample_seed = 0;
    std::size_t n_samples = 0;
    std::string sweep;
    std::string report;
    std::string format;
    bool no_timing = false;

    std::vector<CLI::Option*> given;
    CLI::Option* o_threshold = nullptr;
    CLI::Option* o_epochs = nullptr;
    CLI::Option* o_latent = nullptr;
    CLI::Option* o_embedding = nullptr;
    CLI::Option* o_batch = nullptr;
    CLI::Option* o_lr = nullptr;
    CLI::Option* o_ratio = nullptr;
    CLI::Option* o_split_seed = nullptr;
    CLI::Option* o_init_seed = nullptr;
    CLI::Option* o_sample_seed = nullptr;
    CLI::Option* o_n_samples = nullptr;

    void attach(CLI::App* app) {
        app->add_option("--config", config, "JSON experiment config");
        app->add_option("--dataset", dataset, "ratings file (csv/tsv/dat)");
        app->add_option("--dataset-name", dataset_name, "registry name (FilmTrust, MovieLens, MyAnimeList, Netflix)");
        o_threshold = app->add_option("--threshold", threshold, "relevance threshold for ranking metrics");
        app->add_option("--arch", archs, "DeepMF, NCF, VDeepMF, VNCF (comma-separated or repeated)")->delimiter(',');
        o_epochs = app->add_option("--epochs", epochs);
        o_latent = app->add_option("--latent-dim", latent_dim, "K");
        o_embedding = app->add_option("--embedding-dim", embedding_dim, "L");
        o_batch = app->add_option("--batch-size", batch_size);
        o_lr = app->add_option("--lr", lr, "Adam learning rate");
        o_ratio = app->add_option("--ratio", ratio, "train fraction of the split");
        o_split_seed = app->add_option("--split-seed", split_seed);
        o_init_seed = app->add_option("--init-seed", init_seed);
        o_sample_seed = app->add_option("--sample-seed", sample_seed);
        o_n_samples = app->add_option("--n-samples", n_samples, "prediction samples to average (default 10)");
        app->add_option("--top-n-sweep", sweep, "e.g. 1-10");
        app->add_option("--report", report, "report output path");
        app->add_option("--format", format, "json or csv");
        app->add_flag("--no-timing", no_timing, "omit wall-clock fields from the report");
    }

    ExperimentSpec resolve() const {
        ExperimentSpec spec;
        if (!config.empty()) spec = load_spec(config, spec);
        const bool latent_given = o_latent->count() > 0;
        if (!dataset.empty()) spec.dataset_path = dataset;
        if (!dataset_name.empty()) spec.dataset_name = dataset_name;
        if (o_threshold->count()) spec.threshold = threshold;
        if (!archs.empty()) {
            spec.architectures.clear();
            for (const auto& a : archs) spec.architectures.push_back(parse_architecture(a));
        }
        if (o_epochs->count()) spec.epochs = epochs;
        if (latent_given) {
            spec.model.latent_dim = latent_dim;
            spec.model.mlp_hidden.clear();
        }
        if (o_embedding->count()) spec.model.embedding_dim = embedding_dim;
        if (o_batch->count()) spec.model.batch_size = batch_size;
        if (o_lr->count()) spec.model.learning_rate = lr;
        if (o_ratio->count()) spec.split_ratio = ratio;
        if (o_split_seed->count()) spec.split_seed = split_seed;
        if (o_init_seed->count()) spec.init_seed = init_seed;
        if (o_sample_seed->count()) spec.sample_seed = sample_seed;
        if (o_n_samples->count()) spec.model.n_prediction_samples = n_samples;
        if (!sweep.empty()) spec.top_n = parse_sweep(sweep);
        if (!report.empty()) spec.report_path = report;
        if (!format.empty()) spec.report_format = parse_report_format(format);
        if (no_timing) spec.record_timing = false;
        if (spec.dataset_path.empty()) throw Error(ErrorKind::Usage, "--dataset is required");
        validate(spec);
        return spec;
    }
};

RatingsDataset load_corpus(const ExperimentSpec& spec) {
    LoadOptions options;
    options.name = spec.dataset_name;
    options.threshold = spec.threshold;
    return load_ratings(spec.dataset_path, options);
}

void print_summary(const MetricsReport& report) {
    const auto& m = report.metadata;
    std::printf("%s: %zu users, %zu items, %zu ratings (train %zu / test %zu)\n", m.dataset.c_str(),
                m.num_users, m.num_items, m.num_ratings, m.train_size, m.test_size);
    for (const auto& r : report.results) {
        std::printf("%-8s epochs=%-3zu MAE=%.4f MSE=%.4f R2=%.4f", std::string(to_string(r.architecture)).c_str(),
                    r.fit_epochs, r.mae, r.mse, r.r2);
        if (r.fit_seconds) std::printf(" fit=%.1fs", *r.fit_seconds);
        std::printf("\n");
    }
}

void write_report(const MetricsReport& report, const ExperimentSpec& spec) {
    if (spec.report_path.empty()) {
        if (spec.report_format == ReportFormat::Json) {
            std::cout << report_to_json(report).dump(2) << '\n';
        } else {
            std::cout << report_to_csv(report);
        }
        return;
    }
    emit_report(report, spec.report_path, spec.report_format);
    print_summary(report);
}

int cmd_split(const std::string& dataset, const std::string& name, double ratio, std::uint64_t seed,
              const std::string& out_dir) {
    LoadOptions options;
    options.name = name;
    const auto corpus = load_ratings(dataset, options);
    const auto parts = split(corpus, ratio, seed);
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    write_ratings_csv(parts.train, dir / "train.csv");
    write_ratings_csv(parts.test, dir / "test.csv");
    write_manifest(make_manifest(corpus, parts, ratio, seed), dir / "manifest.json");
    std::printf("%s: %zu ratings -> train %zu, test %zu (seed %llu)\n", corpus.name.c_str(), corpus.size(),
                parts.train.size(), parts.test.size(), static_cast<unsigned long long>(seed));
    return 0;
}

int cmd_train(const SpecFlags& flags, const std::string& checkpoint_path) {
    const auto spec = flags.resolve();
    if (spec.architectures.size() != 1) {
        throw Error(ErrorKind::Usage, "train takes exactly one --arch");
    }
    const auto corpus = load_corpus(spec);
    const auto parts = split(corpus, spec.split_ratio, spec.split_seed);
    const Architecture arch = spec.architectures.front();
    const ModelConfig config = architecture_config(spec, arch, corpus);
    ModelParams params = build_model(config);
    fit(params, config, parts.train, [](std::size_t epoch, double loss) {
        std::printf("epoch %zu loss %.6f\n", epoch + 1, loss);
    });
    save_checkpoint({config, params, corpus.name, corpus.threshold, corpus.users, corpus.items},
                    checkpoint_path);
    std::printf("wrote %s\n", checkpoint_path.c_str());
    return 0;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& test_path, const SpecFlags& flags) {
    const auto ckpt = load_checkpoint(checkpoint_path);
    ModelConfig config = ckpt.config;
    if (flags.o_n_samples->count()) config.n_prediction_samples = flags.n_samples;
    LoadOptions options;
    options.name = ckpt.dataset;
    options.scale = config.scale;
    const auto test = load_ratings_with_ids(test_path, ckpt.users, ckpt.items, options);
    const double threshold = flags.o_threshold->count() ? flags.threshold : ckpt.threshold;
    const auto sweep = flags.sweep.empty() ? default_top_n_sweep() : parse_sweep(flags.sweep);

    MetricsReport report;
    auto& m = report.metadata;
    m.dataset = ckpt.dataset;
    m.corpus_checksum = checksum_hex(test.triples);
    m.num_users = config.num_users;
    m.num_items = config.num_items;
    m.num_ratings = test.size();
    m.test_size = test.size();
    m.threshold = threshold;
    m.scale = config.scale;
    m.init_seed = config.init_seed;
    m.sample_seed = config.sample_seed;
    m.split_seed = flags.o_split_seed->count() ? flags.split_seed : 0;
    m.n_prediction_samples = config.n_prediction_samples;
    auto result = evaluate_model(ckpt.params, config, test, sweep, threshold);
    result.fit_epochs = config.epochs;
    report.results.push_back(std::move(result));

    ExperimentSpec out;
    if (!flags.report.empty()) out.report_path = flags.report;
    if (!flags.format.empty()) out.report_format = parse_report_format(flags.format);
    write_report(report, out);
    return 0;
}

int cmd_run(const SpecFlags& flags) {
    const auto spec = flags.resolve();
    const auto report = run_experiment(spec);
    write_report(report, spec);
    return 0;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& pairs_path, std::size_t n_samples,
                bool n_given) {
    const auto ckpt = load_checkpoint(checkpoint_path);
    ModelConfig config = ckpt.config;
    if (n_given) config.n_prediction_samples = n_samples;
    std::ifstream in(pairs_path);
    if (!in) throw Error(ErrorKind::Io, "cannot open pairs file " + pairs_path);
    std::vector<std::string> raw_users, raw_items;
    std::vector<Index> users, items;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
        const auto cut = line.find(delim);
        if (cut == std::string::npos) {
            throw Error(ErrorKind::Parse, pairs_path + ": line " + std::to_string(line_no) + ": expected user,item");
        }
        std::string u = line.substr(0, cut);
        std::string i = line.substr(cut + 1);
        if (const auto extra = i.find(delim); extra != std::string::npos) i.resize(extra);
        const auto ui = ckpt.users.find(u);
        const auto ii = ckpt.items.find(i);
        if (!ui || !ii) {
            if (line_no == 1) continue;  // header
            throw Error(ErrorKind::Index, pairs_path + ": line " + std::to_string(line_no) + ": unknown " +
                                              (ui ? "item '" + i + "'" : "user '" + u + "'"));
        }
        raw_users.push_back(u);
        raw_items.push_back(i);
        users.push_back(*ui);
        items.push_back(*ii);
    }
    Rng rng = prediction_stream(config);
    const auto scores = predict(ckpt.params, config, users, items, rng);
    for (std::size_t k = 0; k < scores.size(); ++k) {
        std::printf("%s,%s,%.6f\n", raw_users[k].c_str(), raw_items[k].c_str(), scores[k]);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variational deep collaborative filtering experiments"};
    app.require_subcommand(1);

    std::string dataset, dataset_name, out_dir = ".";
    double ratio = 0.8;
    std::uint64_t split_seed = 42;
    auto* split_cmd = app.add_subcommand("split", "split a corpus into train/test files plus a manifest");
    split_cmd->add_option("--dataset", dataset, "ratings file")->required();
    split_cmd->add_option("--dataset-name", dataset_name);
    split_cmd->add_option("--ratio", ratio, "train fraction");
    split_cmd->add_option("--split-seed", split_seed);
    split_cmd->add_option("--out", out_dir, "output directory");

    SpecFlags train_flags;
    std::string checkpoint_out;
    auto* train_cmd = app.add_subcommand("train", "train one architecture on the train split");
    train_flags.attach(train_cmd);
    train_cmd->add_option("--checkpoint", checkpoint_out, "checkpoint output path")->required();

    SpecFlags eval_flags;
    std::string checkpoint_in, test_path;
    auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on a test split");
    eval_flags.attach(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint_in)->required();
    eval_cmd->add_option("--test", test_path, "test ratings file")->required();

    SpecFlags run_flags;
    auto* run_cmd = app.add_subcommand("run", "load, split, train and evaluate every architecture");
    run_flags.attach(run_cmd);

    std::string predict_ckpt, pairs_path;
    std::size_t predict_samples = 10;
    auto* predict_cmd = app.add_subcommand("predict", "score user,item pairs with a checkpoint");
    predict_cmd->add_option("--checkpoint", predict_ckpt)->required();
    predict_cmd->add_option("--pairs", pairs_path, "file of user,item lines")->required();
    auto* predict_n = predict_cmd->add_option("--n-samples", predict_samples);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*split_cmd) return cmd_split(dataset, dataset_name, ratio, split_seed, out_dir);
        if (*train_cmd) return cmd_train(train_flags, checkpoint_out);
        if (*eval_cmd) return cmd_evaluate(checkpoint_in, test_path, eval_flags);
        if (*run_cmd) return cmd_run(run_flags);
        if (*predict_cmd) return cmd_predict(predict_ckpt, pairs_path, predict_samples, predict_n->count() > 0);
    } catch (const Error& e) {
        std::fprintf(stderr, "varcf: %s: %s\n", to_string(e.kind()), e.what());
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "varcf: %s\n", e.what());
        return 2;
    }
    return 1;
}
