#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "varcf/adam.hpp"
#include "varcf/data.hpp"
#include "varcf/model.hpp"

namespace varcf {

// Independent random streams derived from config.sample_seed.
Rng shuffle_stream(const ModelConfig& config);
std::uint64_t shuffle_seed(const ModelConfig& config) noexcept;
Rng training_noise_stream(const ModelConfig& config);
Rng prediction_stream(const ModelConfig& config);

struct FitResult {
    std::vector<double> epoch_losses;  // size-weighted mean batch loss per epoch
    std::size_t epochs = 0;
    std::uint64_t steps = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

// Mini-batch Adam on the MSE loss for config.epochs epochs. Throws Numeric on a
// non-finite loss.
FitResult fit(ModelParams& params, const ModelConfig& config, const RatingsDataset& train,
              const EpochCallback& on_epoch = {});

}  // namespace varcf
