#include "varcf/checkpoint.hpp"

#include <fstream>

#include "varcf/error.hpp"

namespace varcf {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json config_to_json(const ModelConfig& c) {
    ordered_json j;
    j["architecture"] = std::string(to_string(c.architecture));
    j["num_users"] = c.num_users;
    j["num_items"] = c.num_items;
    j["embedding_dim"] = c.embedding_dim;
    j["latent_dim"] = c.latent_dim;
    j["mlp_hidden"] = c.mlp_hidden;
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    j["learning_rate"] = c.learning_rate;
    j["init_seed"] = c.init_seed;
    j["sample_seed"] = c.sample_seed;
    j["n_prediction_samples"] = c.n_prediction_samples;
    j["scale"] = {{"min", c.scale.min}, {"max", c.scale.max}};
    return j;
}

ModelConfig config_from_json(const json& j, ModelConfig c) {
    try {
        if (j.contains("architecture")) c.architecture = parse_architecture(j["architecture"].get<std::string>());
        auto read = [&j](const char* key, auto& field) {
            if (j.contains(key)) field = j[key].get<std::remove_reference_t<decltype(field)>>();
        };
        read("num_users", c.num_users);
        read("num_items", c.num_items);
        read("embedding_dim", c.embedding_dim);
        read("latent_dim", c.latent_dim);
        read("mlp_hidden", c.mlp_hidden);
        read("batch_size", c.batch_size);
        read("epochs", c.epochs);
        read("learning_rate", c.learning_rate);
        read("init_seed", c.init_seed);
        read("sample_seed", c.sample_seed);
        read("n_prediction_samples", c.n_prediction_samples);
        if (j.contains("scale")) {
            c.scale.min = j["scale"].at("min").get<double>();
            c.scale.max = j["scale"].at("max").get<double>();
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, std::string("bad model config: ") + e.what());
    }
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    ordered_json j;
    j["format"] = "varcf-checkpoint";
    j["format_version"] = kCheckpointVersion;
    j["config"] = config_to_json(ckpt.config);
    j["dataset"] = {{"name", ckpt.dataset},
                    {"threshold", ckpt.threshold},
                    {"users", ckpt.users.names()},
                    {"items", ckpt.items.names()}};
    ordered_json tensors = ordered_json::array();
    ModelParams params = ckpt.params;
    for (const auto& view : parameter_views(params)) {
        tensors.push_back({{"name", view.name},
                           {"shape", {view.rows, view.cols}},
                           {"data", std::vector<double>(view.values.begin(), view.values.end())}});
    }
    j["params"] = std::move(tensors);
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write checkpoint " + path.string());
    out << j.dump() << '\n';
    if (!out) throw Error(ErrorKind::Io, "write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open checkpoint " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, "checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    try {
        if (j.value("format", std::string{}) != "varcf-checkpoint") {
            throw Error(ErrorKind::Format, path.string() + " is not a varcf checkpoint");
        }
        const int version = j.at("format_version").get<int>();
        if (version != kCheckpointVersion) {
            throw Error(ErrorKind::Format, "unsupported checkpoint version " + std::to_string(version));
        }
        Checkpoint ckpt;
        ckpt.config = config_from_json(j.at("config"));
        const auto& ds = j.at("dataset");
        ckpt.dataset = ds.at("name").get<std::string>();
        ckpt.threshold = ds.at("threshold").get<double>();
        ckpt.users = IdIndex(ds.at("users").get<std::vector<std::string>>());
        ckpt.items = IdIndex(ds.at("items").get<std::vector<std::string>>());

        // Allocate the layout the config implies, then overwrite every block.
        Rng scratch(0);
        ckpt.params = build_model(ckpt.config, scratch);
        auto views = parameter_views(ckpt.params);
        const auto& tensors = j.at("params");
        if (tensors.size() != views.size()) {
            throw Error(ErrorKind::Format, "checkpoint has " + std::to_string(tensors.size()) +
                                               " parameter blocks, config implies " +
                                               std::to_string(views.size()));
        }
        for (std::size_t k = 0; k < views.size(); ++k) {
            const auto& t = tensors[k];
            const auto name = t.at("name").get<std::string>();
            const auto shape = t.at("shape").get<std::vector<std::size_t>>();
            const auto& data = t.at("data");
            if (name != views[k].name || shape.size() != 2 || shape[0] != views[k].rows ||
                shape[1] != views[k].cols || data.size() != views[k].values.size()) {
                throw Error(ErrorKind::Format, "checkpoint block '" + name + "' does not match expected '" +
                                                   views[k].name + "'");
            }
            for (std::size_t i = 0; i < data.size(); ++i) views[k].values[i] = data[i].get<double>();
        }
        if (ckpt.users.size() != 0 && ckpt.users.size() != ckpt.config.num_users) {
            throw Error(ErrorKind::Format, "checkpoint user map size does not match num_users");
        }
        if (ckpt.items.size() != 0 && ckpt.items.size() != ckpt.config.num_items) {
            throw Error(ErrorKind::Format, "checkpoint item map size does not match num_items");
        }
        return ckpt;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, "malformed checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace varcf
