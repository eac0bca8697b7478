#include <cmath>

#include "doctest.h"
#include "varcf/adam.hpp"
#include "varcf/error.hpp"
#include "varcf/rng.hpp"
#include "varcf/tensor.hpp"

using namespace varcf;

namespace {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            out(i, j) = s;
        }
    return out;
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (double& v : m.values()) v = rng.uniform(-2.0, 2.0);
    return m;
}

}  // namespace

TEST_CASE("matmul hand examples") {
    CHECK(matmul(Matrix{{1, 0}, {0, 1}}, Matrix{{1, 2}, {3, 4}}) == Matrix{{1, 2}, {3, 4}});
    CHECK(matmul(Matrix{{1, 2}}, Matrix{{3}, {4}}) == Matrix{{11}});
    CHECK(matmul(Matrix{{1, 0}, {0, 1}, {1, 1}}, Matrix{{2, 5}, {3, 7}}) == Matrix{{2, 5}, {3, 7}, {5, 12}});
}

TEST_CASE("matmul shape mismatch names both shapes") {
    try {
        matmul(Matrix(2, 3), Matrix(2, 3));
        FAIL("expected a dimension error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Dimension);
        CHECK(std::string(e.what()).find("(2x3)") != std::string::npos);
    }
}

TEST_CASE("matmul and transposed variants agree with the triple loop") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix a = random_matrix(rng, 5, 5);
        const Matrix b = random_matrix(rng, 5, 5);
        const Matrix expect = naive_matmul(a, b);
        const Matrix got = matmul(a, b);
        const Matrix got_tn = matmul_tn(transpose(a), b);
        const Matrix got_nt = matmul_nt(a, transpose(b));
        for (std::size_t k = 0; k < expect.size(); ++k) {
            const double scale = std::max(1.0, std::abs(expect.values()[k]));
            CHECK(std::abs(got.values()[k] - expect.values()[k]) / scale < 1e-12);
            CHECK(std::abs(got_tn.values()[k] - expect.values()[k]) / scale < 1e-12);
            CHECK(std::abs(got_nt.values()[k] - expect.values()[k]) / scale < 1e-12);
        }
    }
}

TEST_CASE("standard normal sampling is deterministic per seed") {
    Rng a(123), b(123), c(124);
    const Matrix x = sample_standard_normal(a, 4, 3);
    const Matrix y = sample_standard_normal(b, 4, 3);
    const Matrix z = sample_standard_normal(c, 4, 3);
    CHECK(x == y);
    CHECK_FALSE(x == z);
    CHECK_THROWS_AS(sample_standard_normal(a, 0, 3), Error);
}

TEST_CASE("standard normal moments over a million draws") {
    Rng rng(2024);
    const Matrix draws = sample_standard_normal(rng, 1000, 1000);
    const double n = static_cast<double>(draws.size());
    double mean = 0.0;
    for (double v : draws.values()) mean += v;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : draws.values()) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    const double sd = std::sqrt(m2);
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(sd - 1.0) < 0.01);
    CHECK(std::abs(m3 / (sd * sd * sd)) < 0.02);
    CHECK(std::abs(m4 / (m2 * m2) - 3.0) < 0.02);
}

TEST_CASE("rng state survives serialization mid-stream") {
    Rng rng(99);
    for (int i = 0; i < 7; ++i) rng.normal();  // leaves a cached spare
    const std::string saved = rng.serialize();
    Rng restored = Rng::deserialize(saved);
    for (int i = 0; i < 50; ++i) {
        CHECK(rng.normal() == restored.normal());
        CHECK(rng.next_u64() == restored.next_u64());
    }
    CHECK_THROWS_AS(Rng::deserialize("not-a-state"), Error);
}

TEST_CASE("below stays in range and shuffle is a permutation") {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) CHECK(rng.below(7) < 7);
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    rng.shuffle(std::span(v));
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}

namespace {

// 1 user x 1 item, L = 1: the user embedding is a single scalar parameter.
ModelParams scalar_model(double value) {
    ModelConfig config = default_config(Architecture::DeepMF);
    config.num_users = 1;
    config.num_items = 1;
    config.embedding_dim = 1;
    config.latent_dim = 1;
    ModelParams params = build_model(config);
    params.user_embedding.weights(0, 0) = value;
    return params;
}

GradientSet scalar_grad(double g) {
    GradientSet grads;
    grads.user_embedding.dim = 1;
    grads.user_embedding.rows[0] = {g};
    grads.item_embedding.dim = 1;
    return grads;
}

}  // namespace

TEST_CASE("adam first step moves by the learning rate") {
    ModelParams params = scalar_model(0.5);
    AdamState state = make_adam_state(params);
    adam_update(params, scalar_grad(1.0), state);
    CHECK(state.step == 1);
    CHECK(params.user_embedding.weights(0, 0) - 0.5 == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("adam second step with constant gradient also moves by about alpha") {
    ModelParams params = scalar_model(0.0);
    AdamState state = make_adam_state(params);
    adam_update(params, scalar_grad(1.0), state);
    const double after_first = params.user_embedding.weights(0, 0);
    adam_update(params, scalar_grad(1.0), state);
    const double second_update = params.user_embedding.weights(0, 0) - after_first;
    CHECK(std::abs(std::abs(second_update) - 0.001) < 1e-6);
    CHECK(state.step == 2);
}

TEST_CASE("adam with zero gradients leaves parameters unchanged for any state") {
    ModelConfig config = default_config(Architecture::VNCF);
    config.num_users = 4;
    config.num_items = 5;
    config.mlp_hidden = default_mlp_hidden(config.latent_dim);
    ModelParams params = build_model(config);
    AdamState state = make_adam_state(params);
    // Non-trivial moments first.
    Rng rng(3);
    for (auto& view : parameter_views(state.first_moment))
        for (double& v : view.values) v = rng.uniform(-1, 1);
    for (auto& view : parameter_views(state.second_moment))
        for (double& v : view.values) v = rng.uniform(0, 1);
    state.step = 17;
    const ModelParams before = params;
    GradientSet zero = GradientSet{};
    zero.user_embedding.dim = config.embedding_dim;
    zero.item_embedding.dim = config.embedding_dim;
    zero.user_embedding.rows[1] = std::vector<double>(config.embedding_dim, 0.0);
    ModelParams zero_like = params;
    for (auto& view : parameter_views(zero_like)) std::fill(view.values.begin(), view.values.end(), 0.0);
    zero.user_head = HeadGrad{{zero_like.user_head->mean.weights, zero_like.user_head->mean.bias},
                              {zero_like.user_head->logvar.weights, zero_like.user_head->logvar.bias}};
    for (const auto& layer : zero_like.regression) zero.regression.push_back({layer.weights, layer.bias});
    adam_update(params, zero, state);
    CHECK(params == before);
    CHECK(state.step == 18);
}

TEST_CASE("adam rejects mismatched structures") {
    ModelParams params = scalar_model(0.0);
    AdamState state = make_adam_state(params);
    GradientSet bad = scalar_grad(1.0);
    bad.user_embedding.rows[0] = {1.0, 2.0};
    CHECK_THROWS_AS(adam_update(params, bad, state), Error);
    GradientSet out_of_range = scalar_grad(1.0);
    out_of_range.user_embedding.rows[3] = {1.0};
    CHECK_THROWS_AS(adam_update(params, out_of_range, state), Error);
}
