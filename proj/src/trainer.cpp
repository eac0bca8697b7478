#include "varcf/trainer.hpp"

#include <cmath>
#include <string>

#include "varcf/error.hpp"

namespace varcf {

namespace {
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
constexpr std::uint64_t kPredictStream = 3;
}  // namespace

std::uint64_t shuffle_seed(const ModelConfig& config) noexcept {
    return derive_seed(config.sample_seed, kShuffleStream);
}
Rng shuffle_stream(const ModelConfig& config) { return Rng(shuffle_seed(config)); }
Rng training_noise_stream(const ModelConfig& config) {
    return Rng(derive_seed(config.sample_seed, kNoiseStream));
}
Rng prediction_stream(const ModelConfig& config) {
    return Rng(derive_seed(config.sample_seed, kPredictStream));
}

FitResult fit(ModelParams& params, const ModelConfig& config, const RatingsDataset& train,
              const EpochCallback& on_epoch) {
    validate(config);
    if (train.triples.empty()) throw Error(ErrorKind::EmptyDataset, "training split is empty");
    AdamState adam = make_adam_state(params, AdamHyper{config.learning_rate});
    Rng noise = training_noise_stream(config);
    FitResult result;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (const auto& batch : batches(train, config.batch_size, shuffle_seed(config), epoch)) {
            auto step = loss_and_grads(params, config, batch, noise);
            if (!std::isfinite(step.loss)) {
                throw Error(ErrorKind::Numeric, "non-finite training loss at epoch " +
                                                    std::to_string(epoch + 1) + ", step " +
                                                    std::to_string(adam.step + 1));
            }
            adam_update(params, step.grads, adam);
            loss_sum += step.loss * static_cast<double>(batch.size());
        }
        const double mean_loss = loss_sum / static_cast<double>(train.triples.size());
        result.epoch_losses.push_back(mean_loss);
        if (on_epoch) on_epoch(epoch, mean_loss);
    }
    result.epochs = config.epochs;
    result.steps = adam.step;
    return result;
}

}  // namespace varcf
