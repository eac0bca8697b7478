#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "support/finite_diff.hpp"
#include "support/synthetic.hpp"
#include "varcf/adam.hpp"
#include "varcf/checkpoint.hpp"
#include "varcf/error.hpp"
#include "varcf/model.hpp"
#include "varcf/trainer.hpp"

using namespace varcf;
using varcf::testing::max_fd_error;

namespace {

const Architecture kAll[] = {Architecture::DeepMF, Architecture::NCF, Architecture::VDeepMF,
                             Architecture::VNCF};

ModelConfig toy_config(Architecture arch, std::size_t users = 6, std::size_t items = 7, std::size_t dim = 3) {
    ModelConfig c = default_config(arch);
    c.num_users = users;
    c.num_items = items;
    c.embedding_dim = dim;
    c.latent_dim = dim;
    c.mlp_hidden = uses_mlp(arch) ? std::vector<std::size_t>{4, 3} : std::vector<std::size_t>{};
    c.scale = {0.5, 4.0};
    return c;
}

void zero_all(ModelParams& params) {
    for (auto& v : parameter_views(params)) std::fill(v.values.begin(), v.values.end(), 0.0);
}

TrainingBatch toy_batch() {
    return TrainingBatch{{0, 3, 5, 3}, {1, 6, 0, 2}, {3.5, 1.0, 2.5, 4.0}};
}

}  // namespace

TEST_CASE("build_model shapes follow the architecture") {
    ModelConfig c = default_config(Architecture::VDeepMF);
    c.num_users = 3;
    c.num_items = 4;
    const ModelParams p = build_model(c);
    CHECK(p.user_embedding.weights.shape_string() == "(3x5)");
    CHECK(p.item_embedding.weights.shape_string() == "(4x5)");
    REQUIRE(p.user_head);
    REQUIRE(p.item_head);
    for (const auto* layer : {&p.user_head->mean, &p.user_head->logvar, &p.item_head->mean, &p.item_head->logvar}) {
        CHECK(layer->weights.shape_string() == "(5x5)");
        CHECK(layer->bias.size() == 5);
    }
    CHECK(p.regression.empty());

    ModelConfig d = c;
    d.architecture = Architecture::DeepMF;
    CHECK_FALSE(build_model(d).user_head.has_value());

    CHECK(build_model(c) == build_model(c));
    ModelConfig other_seed = c;
    other_seed.init_seed = c.init_seed + 1;
    CHECK_FALSE(build_model(c) == build_model(other_seed));
}

TEST_CASE("MLP architectures need hidden layers") {
    ModelConfig c = toy_config(Architecture::NCF);
    c.mlp_hidden.clear();
    CHECK_THROWS_AS(build_model(c), Error);
    c.architecture = Architecture::VNCF;
    CHECK_THROWS_AS(build_model(c), Error);
    const auto p = build_model(toy_config(Architecture::VNCF));
    REQUIRE(p.regression.size() == 3);
    CHECK(p.regression[0].in_dim() == 6);
    CHECK(p.regression[2].out_dim() == 1);
    CHECK(p.regression[2].activation == Activation::Linear);
    CHECK(default_mlp_hidden(5) == std::vector<std::size_t>{5, 2});
}

TEST_CASE("all-zero parameters predict zero") {
    for (auto arch : kAll) {
        const auto config = toy_config(arch);
        ModelParams p = build_model(config);
        zero_all(p);
        Rng rng(1);
        const std::vector<Index> users{0, 5, 2}, items{6, 0, 3};
        // Zero logvar means unit variance, so VDeepMF is only exactly zero without noise.
        const auto mode = arch == Architecture::VDeepMF ? SamplingMode::Deterministic
                                                        : SamplingMode::Stochastic;
        for (double y : forward(p, config, users, items, rng, mode)) CHECK(y == 0.0);
    }
}

TEST_CASE("VDeepMF deterministic mode equals DeepMF on the head means") {
    auto vconfig = toy_config(Architecture::VDeepMF);
    const ModelParams vp = build_model(vconfig);
    const std::vector<Index> users{0, 1, 5, 5}, items{2, 6, 0, 1};
    Rng rng(4);
    const auto deterministic = forward(vp, vconfig, users, items, rng, SamplingMode::Deterministic);

    // DeepMF whose embeddings are the head means of every user/item.
    auto dconfig = vconfig;
    dconfig.architecture = Architecture::DeepMF;
    ModelParams dp;
    std::vector<Index> all_users(vconfig.num_users), all_items(vconfig.num_items);
    std::iota(all_users.begin(), all_users.end(), Index{0});
    std::iota(all_items.begin(), all_items.end(), Index{0});
    dp.user_embedding.weights = dense_forward(vp.user_head->mean, embedding_forward(vp.user_embedding, all_users));
    dp.item_embedding.weights = dense_forward(vp.item_head->mean, embedding_forward(vp.item_embedding, all_items));
    const auto reference = forward(dp, dconfig, users, items, rng);
    for (std::size_t k = 0; k < users.size(); ++k) CHECK(deterministic[k] == doctest::Approx(reference[k]).epsilon(1e-14));
}

TEST_CASE("hand-set one-dimensional VDeepMF") {
    ModelConfig c = toy_config(Architecture::VDeepMF, 1, 1, 1);
    ModelParams p = build_model(c);
    p.user_embedding.weights(0, 0) = 2.0;
    p.item_embedding.weights(0, 0) = 3.0;
    for (auto* head : {&*p.user_head, &*p.item_head}) {
        head->mean.weights(0, 0) = 1.0;
        head->mean.bias[0] = 0.0;
    }
    Rng rng(0);
    const std::vector<Index> zero{0};
    CHECK(forward(p, c, zero, zero, rng, SamplingMode::Deterministic)[0] == 6.0);
}

TEST_CASE("forward rejects out-of-range ids") {
    const auto c = toy_config(Architecture::DeepMF);
    const auto p = build_model(c);
    Rng rng(0);
    const std::vector<Index> users{6}, items{0};
    CHECK_THROWS_AS(forward(p, c, users, items, rng), Error);
}

TEST_CASE("loss is zero with zero gradients at an exact fit") {
    for (auto arch : kAll) {
        const auto c = toy_config(arch);
        const ModelParams p = build_model(c);
        TrainingBatch batch = toy_batch();
        Rng rng(8);
        Rng replay = rng;
        batch.ratings = forward(p, c, batch.user_ids, batch.item_ids, replay);
        const auto out = loss_and_grads(p, c, batch, rng);
        CHECK(out.loss == 0.0);
        ModelParams dense = densify(out.grads, p);
        for (const auto& v : parameter_views(dense))
            for (double g : v.values) CHECK(g == 0.0);
    }
}

TEST_CASE("loss of a single off-by-one rating is 1") {
    auto c = toy_config(Architecture::DeepMF, 1, 1, 1);
    ModelParams p = build_model(c);
    p.user_embedding.weights(0, 0) = 1.0;
    p.item_embedding.weights(0, 0) = 3.0;
    Rng rng(0);
    const auto out = loss_and_grads(p, c, TrainingBatch{{0}, {0}, {4.0}}, rng);
    CHECK(out.loss == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("end-to-end gradients match finite differences with frozen eps") {
    for (auto arch : kAll) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            CAPTURE(to_string(arch));
            CAPTURE(seed);
            auto c = toy_config(arch, 6, 7, 3);
            c.init_seed = seed;
            ModelParams p = build_model(c);
            // Larger embeddings keep every path's gradient well above round-off.
            Rng jitter(seed + 100);
            for (double& w : p.user_embedding.weights.values()) w = jitter.uniform(-1, 1);
            for (double& w : p.item_embedding.weights.values()) w = jitter.uniform(-1, 1);
            if (p.user_head) {
                for (auto* head : {&*p.user_head, &*p.item_head})
                    for (double& b : head->logvar.bias) b = jitter.uniform(-1.0, -0.2);
            }
            // Non-zero biases keep relu pre-activations off the kink at 0.
            for (auto& layer : p.regression)
                for (double& b : layer.bias) b = jitter.uniform(0.1, 0.5);
            const TrainingBatch batch = toy_batch();
            const Rng frozen(seed * 7);
            Rng rng = frozen;
            const auto analytic = loss_and_grads(p, c, batch, rng);
            ModelParams grad = densify(analytic.grads, p);
            auto grad_views = parameter_views(grad);
            auto views = parameter_views(p);
            auto loss = [&] {
                Rng replay = frozen;
                return loss_and_grads(p, c, batch, replay).loss;
            };
            for (std::size_t v = 0; v < views.size(); ++v) {
                CAPTURE(views[v].name);
                CHECK(max_fd_error(views[v].values, grad_views[v].values, loss) <= 1e-5);
            }
        }
    }
}

TEST_CASE("deterministic architectures ignore the sample count") {
    for (auto arch : {Architecture::DeepMF, Architecture::NCF}) {
        const auto c = toy_config(arch);
        const auto p = build_model(c);
        const std::vector<Index> users{0, 1, 2}, items{3, 4, 5};
        Rng a(1), b(2);
        CHECK(predict_mean(p, c, users, items, a, 1) == predict_mean(p, c, users, items, b, 13));
    }
}

TEST_CASE("one-sample prediction equals one stochastic forward") {
    const auto c = toy_config(Architecture::VNCF);
    const auto p = build_model(c);
    const std::vector<Index> users{0, 1, 2, 0}, items{3, 4, 5, 6};
    Rng a(9), b(9);
    CHECK(predict_mean(p, c, users, items, a, 1) == forward(p, c, users, items, b));
}

TEST_CASE("averaged prediction variance shrinks like 1/n") {
    const auto c = toy_config(Architecture::VDeepMF);
    const auto p = build_model(c);
    const std::vector<Index> users{0, 1, 2, 3, 4, 5}, items{6, 5, 4, 3, 2, 1};
    Rng rng(77);
    auto mean_variance = [&](std::size_t n) {
        std::vector<double> sum(users.size(), 0.0), sum_sq(users.size(), 0.0);
        const int reps = 200;
        for (int r = 0; r < reps; ++r) {
            const auto y = predict_mean(p, c, users, items, rng, n);
            for (std::size_t k = 0; k < y.size(); ++k) {
                sum[k] += y[k];
                sum_sq[k] += y[k] * y[k];
            }
        }
        double total = 0.0;
        for (std::size_t k = 0; k < users.size(); ++k) {
            const double m = sum[k] / reps;
            total += (sum_sq[k] - reps * m * m) / (reps - 1);
        }
        return total / static_cast<double>(users.size());
    };
    const double ratio = mean_variance(1) / mean_variance(16);
    CAPTURE(ratio);
    CHECK(ratio >= 16.0 / 1.5);
    CHECK(ratio <= 16.0 * 1.5);
}

TEST_CASE("predict clamps to the rating scale") {
    auto c = toy_config(Architecture::DeepMF, 1, 1, 1);
    ModelParams p = build_model(c);
    p.user_embedding.weights(0, 0) = 10.0;
    p.item_embedding.weights(0, 0) = 10.0;
    Rng rng(0);
    const std::vector<Index> zero{0};
    CHECK(predict(p, c, zero, zero, rng)[0] == 4.0);
    p.item_embedding.weights(0, 0) = -10.0;
    CHECK(predict(p, c, zero, zero, rng)[0] == 0.5);
}

TEST_CASE("negligible variance heads reproduce deterministic predictions") {
    auto c = toy_config(Architecture::VDeepMF, 10, 12, 5);
    ModelParams p = build_model(c);
    for (auto* head : {&*p.user_head, &*p.item_head}) {
        for (double& w : head->logvar.weights.values()) w = -50.0;
        for (double& b : head->logvar.bias) b = -50.0;
    }
    std::vector<Index> users, items;
    for (Index u = 0; u < 10; ++u)
        for (Index i = 0; i < 12; ++i) {
            users.push_back(u);
            items.push_back(i);
        }
    Rng rng(5);
    const auto stochastic = forward(p, c, users, items, rng, SamplingMode::Stochastic);
    const auto deterministic = forward(p, c, users, items, rng, SamplingMode::Deterministic);
    for (std::size_t k = 0; k < users.size(); ++k) CHECK(std::abs(stochastic[k] - deterministic[k]) < 1e-8);
}

TEST_CASE("one training step only moves the touched embedding rows") {
    for (auto arch : kAll) {
        const auto c = toy_config(arch);
        ModelParams p = build_model(c);
        const ModelParams before = p;
        AdamState adam = make_adam_state(p);
        Rng rng(3);
        const auto step = loss_and_grads(p, c, TrainingBatch{{2}, {4}, {3.5}}, rng);
        adam_update(p, step.grads, adam);
        for (Index u = 0; u < c.num_users; ++u) {
            const bool same = std::equal(p.user_embedding.weights.row(u).begin(), p.user_embedding.weights.row(u).end(),
                                         before.user_embedding.weights.row(u).begin());
            CHECK(same == (u != 2));
        }
        for (Index i = 0; i < c.num_items; ++i) {
            const bool same = std::equal(p.item_embedding.weights.row(i).begin(), p.item_embedding.weights.row(i).end(),
                                         before.item_embedding.weights.row(i).begin());
            CHECK(same == (i != 4));
        }
    }
}

TEST_CASE("training loss decreases for every architecture") {
    const auto data = testing::synthetic_dataset(30, 25, 100, 42);
    for (auto arch : kAll) {
        CAPTURE(to_string(arch));
        auto c = default_config(arch);
        c.num_users = data.num_users();
        c.num_items = data.num_items();
        c.scale = data.scale;
        c.epochs = 15;
        c.init_seed = 42;
        c.sample_seed = 42;
        ModelParams p = build_model(c);
        const auto result = fit(p, c, data);
        REQUIRE(result.epoch_losses.size() == 15);
        CHECK(result.epoch_losses.back() < result.epoch_losses.front());
    }
}

TEST_CASE("training is deterministic per seed") {
    const auto data = testing::synthetic_dataset(20, 20, 120, 3);
    auto c = default_config(Architecture::VNCF);
    c.num_users = data.num_users();
    c.num_items = data.num_items();
    c.epochs = 3;
    ModelParams a = build_model(c), b = build_model(c);
    fit(a, c, data);
    fit(b, c, data);
    CHECK(a == b);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    const auto path = std::filesystem::temp_directory_path() / "varcf_test_ckpt.json";
    for (auto arch : kAll) {
        Checkpoint ckpt;
        ckpt.config = toy_config(arch);
        ckpt.params = build_model(ckpt.config);
        Rng rng(6);
        for (auto& v : parameter_views(ckpt.params))
            for (double& x : v.values) x = rng.normal() * 1e3 / 7.0;
        ckpt.dataset = "toy";
        ckpt.threshold = 3.0;
        for (int u = 0; u < 6; ++u) ckpt.users.intern("user" + std::to_string(u));
        for (int i = 0; i < 7; ++i) ckpt.items.intern("item" + std::to_string(i));
        save_checkpoint(ckpt, path);
        Checkpoint back = load_checkpoint(path);
        CHECK(back.config == ckpt.config);
        CHECK(back.users.names() == ckpt.users.names());
        auto a = parameter_views(ckpt.params);
        auto b = parameter_views(back.params);
        REQUIRE(a.size() == b.size());
        for (std::size_t k = 0; k < a.size(); ++k) {
            REQUIRE(a[k].values.size() == b[k].values.size());
            CHECK(std::memcmp(a[k].values.data(), b[k].values.data(), a[k].values.size() * sizeof(double)) == 0);
        }
    }
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects other versions") {
    const auto path = std::filesystem::temp_directory_path() / "varcf_test_bad_ckpt.json";
    {
        std::ofstream out(path);
        out << R"({"format":"varcf-checkpoint","format_version":2})";
    }
    try {
        load_checkpoint(path);
        FAIL("expected format error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Format);
    }
    std::filesystem::remove(path);
}
