#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "support/synthetic.hpp"
#include "varcf/error.hpp"
#include "varcf/experiment.hpp"

using namespace varcf;

namespace {

// 20 ratings over 5 users and 5 items with varied values.
const char* kToyCorpus =
    "u0,i0,1\nu0,i1,3.5\nu0,i2,2\nu0,i3,4\n"
    "u1,i0,0.5\nu1,i1,3\nu1,i2,2.5\nu1,i4,4\n"
    "u2,i0,2\nu2,i2,1.5\nu2,i3,3.5\nu2,i4,1\n"
    "u3,i1,4\nu3,i2,3\nu3,i3,0.5\nu3,i4,2\n"
    "u4,i0,3\nu4,i1,1\nu4,i3,2.5\nu4,i4,3.5\n";

RatingsDataset toy_corpus() {
    std::istringstream in(kToyCorpus);
    LoadOptions options;
    options.name = "filmtrust";
    return parse_ratings(in, options);
}

ExperimentSpec toy_spec(std::vector<Architecture> archs) {
    ExperimentSpec spec;
    spec.architectures = std::move(archs);
    spec.epochs = 3;
    spec.model.batch_size = 4;
    spec.top_n = {1, 2, 3};
    spec.record_timing = false;
    return spec;
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("varcf_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("DeepMF on a toy corpus yields one populated block") {
    const auto report = run_experiment(toy_spec({Architecture::DeepMF}), toy_corpus());
    REQUIRE(report.results.size() == 1);
    const auto& r = report.results[0];
    CHECK(r.architecture == Architecture::DeepMF);
    CHECK(r.fit_epochs == 3);
    CHECK(r.epoch_losses.size() == 3);
    CHECK(r.mae > 0.0);
    CHECK(r.mse >= r.mae * r.mae);
    REQUIRE(r.curve.size() == 3);
    CHECK(r.curve[2].n == 3);
    CHECK_FALSE(r.fit_seconds.has_value());
    CHECK(report.metadata.train_size == 16);
    CHECK(report.metadata.test_size == 4);
    CHECK(report.metadata.threshold == 3.0);
    CHECK_FALSE(report.metadata.timestamp.has_value());
}

TEST_CASE("default epochs follow the dataset") {
    CHECK(default_epochs(Architecture::VDeepMF, "FilmTrust") == 15);
    CHECK(default_epochs(Architecture::DeepMF, "filmtrust") == 25);
    CHECK(default_epochs(Architecture::VNCF, "ml-1m") == 9);
    CHECK(default_epochs(Architecture::NCF, "netflix") == 4);
    CHECK(default_epochs(Architecture::VDeepMF, "elsewhere") == 10);
    CHECK(default_top_n_sweep().size() == 10);
}

TEST_CASE("same spec gives bitwise-identical reports") {
    const auto corpus = testing::synthetic_dataset(30, 25, 300, 17);
    auto spec = toy_spec({Architecture::DeepMF, Architecture::VDeepMF, Architecture::NCF, Architecture::VNCF});
    spec.epochs = 2;
    spec.model.batch_size = 32;
    const auto a = run_experiment(spec, corpus);
    const auto b = run_experiment(spec, corpus);
    CHECK(a == b);
    CHECK(report_to_json(a).dump() == report_to_json(b).dump());
    CHECK(report_to_csv(a) == report_to_csv(b));

    spec.sample_seed = 43;
    CHECK(report_to_json(run_experiment(spec, corpus)).dump() != report_to_json(a).dump());
}

TEST_CASE("emitted reports round trip and flatten") {
    const auto dir = scratch_dir("report");
    const auto corpus = testing::synthetic_dataset(20, 20, 150, 3);
    auto spec = toy_spec({Architecture::VDeepMF, Architecture::DeepMF});
    spec.record_timing = true;
    const auto report = run_experiment(spec, corpus);
    REQUIRE(report.metadata.timestamp.has_value());
    REQUIRE(report.results[0].fit_seconds.has_value());

    emit_report(report, dir / "r.json", ReportFormat::Json);
    const auto parsed = report_from_json(nlohmann::json::parse(slurp(dir / "r.json")));
    CHECK(parsed == report);

    emit_report(report, dir / "r.csv", ReportFormat::Csv);
    std::istringstream csv(slurp(dir / "r.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "architecture,metric,n,value");
    std::size_t metric_rows = 0;
    std::size_t meta_rows = 0;
    while (std::getline(csv, line)) (line.rfind("meta,", 0) == 0 ? meta_rows : metric_rows)++;
    CHECK(metric_rows == 2 * (3 + 3 * spec.top_n.size()));
    CHECK(meta_rows > 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("report readers reject unknown major versions") {
    const auto report = run_experiment(toy_spec({Architecture::DeepMF}), toy_corpus());
    auto j = nlohmann::json::parse(report_to_json(report).dump());
    CHECK(j.at("schema_version") == "1.0");
    j["schema_version"] = "1.7";
    CHECK(report_from_json(j).schema_minor == 7);
    j["schema_version"] = "2.0";
    try {
        report_from_json(j);
        FAIL("expected format error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Format);
    }
}

TEST_CASE("unknown report format is a usage error") {
    try {
        parse_report_format("xml");
        FAIL("expected usage error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Usage);
        CHECK(std::string(e.what()).find("json, csv") != std::string::npos);
    }
    CHECK(parse_report_format("csv") == ReportFormat::Csv);
}

TEST_CASE("config files override defaults key by key") {
    const auto j = nlohmann::json::parse(R"({
        "dataset": {"path": "ratings.txt", "name": "FilmTrust"},
        "architectures": ["deepmf", "VNCF"],
        "model": {"latent_dim": 7, "embedding_dim": 7},
        "seeds": {"init": 5},
        "top_n": [1, 5],
        "report": {"format": "csv", "timing": false}
    })");
    const auto spec = spec_from_json(j);
    CHECK(spec.dataset_name == "FilmTrust");
    REQUIRE(spec.architectures.size() == 2);
    CHECK(spec.architectures[1] == Architecture::VNCF);
    CHECK(spec.model.latent_dim == 7);
    CHECK(spec.model.batch_size == 32);
    CHECK(spec.init_seed == 5);
    CHECK(spec.split_seed == 42);
    CHECK(spec.top_n == std::vector<std::size_t>{1, 5});
    CHECK(spec.report_format == ReportFormat::Csv);
    CHECK_FALSE(spec.record_timing);
    CHECK_THROWS_AS(spec_from_json(nlohmann::json::parse(R"({"architectures": ["svd"]})")), Error);
    CHECK_THROWS_AS(spec_from_json(nlohmann::json::parse(R"({"epochs": "many"})")), Error);
}

TEST_CASE("load_spec resolves the dataset relative to the config file") {
    const auto dir = scratch_dir("spec");
    {
        std::ofstream out(dir / "ratings.csv");
        out << kToyCorpus;
        std::ofstream cfg(dir / "exp.json");
        cfg << R"({"dataset": {"path": "ratings.csv", "name": "FilmTrust"}, "architectures": ["DeepMF"],
                   "epochs": 1, "top_n": [1], "report": {"timing": false}})";
    }
    const auto spec = load_spec(dir / "exp.json");
    CHECK(spec.dataset_path == dir / "ratings.csv");
    const auto report = run_experiment(spec);
    CHECK(report.metadata.num_ratings == 20);
    std::filesystem::remove_all(dir);
}

TEST_CASE("failures name their stage") {
    ExperimentSpec spec = toy_spec({Architecture::DeepMF});
    spec.dataset_path = "/nonexistent/ratings.csv";
    try {
        run_experiment(spec);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("stage 'load'") != std::string::npos);
    }
    spec.split_ratio = 0.0;
    CHECK_THROWS_AS(run_experiment(spec, toy_corpus()), Error);
}
