#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "varcf/layers.hpp"
#include "varcf/rng.hpp"

namespace varcf {

enum class Architecture { DeepMF, NCF, VDeepMF, VNCF };

std::string_view to_string(Architecture arch) noexcept;
// Case-insensitive; throws Config on unknown names.
Architecture parse_architecture(std::string_view name);

constexpr bool is_variational(Architecture a) noexcept {
    return a == Architecture::VDeepMF || a == Architecture::VNCF;
}
constexpr bool uses_mlp(Architecture a) noexcept {
    return a == Architecture::NCF || a == Architecture::VNCF;
}

struct RatingScale {
    double min = 0.0;
    double max = 0.0;

    bool bounded() const noexcept { return max > min; }
    // Identity when the scale is unset.
    double clamp(double v) const noexcept {
        if (!bounded()) return v;
        return v < min ? min : (v > max ? max : v);
    }
    friend bool operator==(const RatingScale&, const RatingScale&) = default;
};

struct ModelConfig {
    Architecture architecture = Architecture::VDeepMF;
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    std::size_t embedding_dim = 5;  // L
    std::size_t latent_dim = 5;     // K, the sampling dimension for variational models
    std::vector<std::size_t> mlp_hidden;
    std::size_t batch_size = 32;
    std::size_t epochs = 15;
    double learning_rate = 0.001;
    std::uint64_t init_seed = 42;
    std::uint64_t sample_seed = 42;
    std::size_t n_prediction_samples = 10;
    RatingScale scale{};

    // Width of each of p and q as seen by the regression layer.
    std::size_t regression_input_dim() const noexcept {
        return is_variational(architecture) ? latent_dim : embedding_dim;
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Hidden widths [K, K/2] (at least 1) used when an MLP architecture has none set.
std::vector<std::size_t> default_mlp_hidden(std::size_t latent_dim);

ModelConfig default_config(Architecture arch);

void validate(const ModelConfig& config);

struct ModelParams {
    EmbeddingTable user_embedding;
    EmbeddingTable item_embedding;
    std::optional<VariationalHead> user_head;
    std::optional<VariationalHead> item_head;
    // Empty for dot-product models; hidden relu layers then a linear scalar output otherwise.
    std::vector<DenseLayer> regression;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct HeadGrad {
    DenseGrad mean;
    DenseGrad logvar;
};

struct GradientSet {
    SparseRowGrad user_embedding;
    SparseRowGrad item_embedding;
    std::optional<HeadGrad> user_head;
    std::optional<HeadGrad> item_head;
    std::vector<DenseGrad> regression;
};

/// Named flat view over one parameter block (a weight matrix, a bias vector).
struct ParamView {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::span<double> values;
};

// Fixed traversal order shared by checkpoints, optimizers and tests.
std::vector<ParamView> parameter_views(ModelParams& params);
std::size_t parameter_count(const ModelParams& params);

// Dense copy of a gradient set laid out like `like` (zeros where no gradient).
ModelParams densify(const GradientSet& grads, const ModelParams& like);

ModelParams build_model(const ModelConfig& config, Rng& rng);
ModelParams build_model(const ModelConfig& config);  // uses config.init_seed

struct TrainingBatch {
    std::vector<Index> user_ids;
    std::vector<Index> item_ids;
    std::vector<double> ratings;

    std::size_t size() const noexcept { return ratings.size(); }
};

enum class SamplingMode { Stochastic, Deterministic };

// Raw model output h(u, i), unclamped. Stochastic mode draws eps for the user side
// then the item side, each (batch x K), from rng.
std::vector<double> forward(const ModelParams& params, const ModelConfig& config,
                            std::span<const Index> users, std::span<const Index> items, Rng& rng,
                            SamplingMode mode = SamplingMode::Stochastic);

struct LossAndGrads {
    double loss = 0.0;
    GradientSet grads;
};

// Mean squared error over the batch of a stochastic forward pass and its exact
// gradient through the eps values actually drawn.
LossAndGrads loss_and_grads(const ModelParams& params, const ModelConfig& config,
                            const TrainingBatch& batch, Rng& rng);

// Average of n stochastic passes (single pass for deterministic models), unclamped.
std::vector<double> predict_mean(const ModelParams& params, const ModelConfig& config,
                                 std::span<const Index> users, std::span<const Index> items,
                                 Rng& rng, std::size_t n_samples);

// Reporting prediction: predict_mean with config.n_prediction_samples, clamped to config.scale.
std::vector<double> predict(const ModelParams& params, const ModelConfig& config,
                            std::span<const Index> users, std::span<const Index> items, Rng& rng);

}  // namespace varcf
