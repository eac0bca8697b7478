#include "varcf/model.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "varcf/error.hpp"

namespace varcf {

std::string_view to_string(Architecture arch) noexcept {
    switch (arch) {
        case Architecture::DeepMF: return "DeepMF";
        case Architecture::NCF: return "NCF";
        case Architecture::VDeepMF: return "VDeepMF";
        case Architecture::VNCF: return "VNCF";
    }
    return "?";
}

Architecture parse_architecture(std::string_view name) {
    std::string lower;
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "deepmf") return Architecture::DeepMF;
    if (lower == "ncf") return Architecture::NCF;
    if (lower == "vdeepmf") return Architecture::VDeepMF;
    if (lower == "vncf") return Architecture::VNCF;
    throw Error(ErrorKind::Config, "unknown architecture '" + std::string(name) +
                                       "' (expected DeepMF, NCF, VDeepMF or VNCF)");
}

std::vector<std::size_t> default_mlp_hidden(std::size_t latent_dim) {
    return {std::max<std::size_t>(latent_dim, 1), std::max<std::size_t>(latent_dim / 2, 1)};
}

ModelConfig default_config(Architecture arch) {
    ModelConfig config;
    config.architecture = arch;
    if (uses_mlp(arch)) config.mlp_hidden = default_mlp_hidden(config.latent_dim);
    return config;
}

void validate(const ModelConfig& config) {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::Config, msg); };
    if (config.num_users == 0 || config.num_items == 0) fail("model needs at least one user and one item");
    if (config.embedding_dim == 0) fail("embedding_dim must be > 0");
    if (config.latent_dim == 0) fail("latent_dim must be > 0");
    if (config.batch_size == 0) fail("batch_size must be > 0");
    if (config.n_prediction_samples == 0) fail("n_prediction_samples must be > 0");
    if (!(config.learning_rate > 0.0)) fail("learning_rate must be > 0");
    if (config.scale.min > config.scale.max) fail("rating scale min exceeds max");
    if (uses_mlp(config.architecture)) {
        if (config.mlp_hidden.empty()) {
            fail(std::string(to_string(config.architecture)) + " requires at least one mlp_hidden layer");
        }
        for (auto w : config.mlp_hidden) {
            if (w == 0) fail("mlp_hidden widths must be > 0");
        }
    }
}

std::vector<ParamView> parameter_views(ModelParams& params) {
    std::vector<ParamView> views;
    auto add_matrix = [&](std::string name, Matrix& m) {
        views.push_back({std::move(name), m.rows(), m.cols(), m.values()});
    };
    auto add_dense = [&](const std::string& prefix, DenseLayer& layer) {
        add_matrix(prefix + ".weights", layer.weights);
        views.push_back({prefix + ".bias", 1, layer.bias.size(), layer.bias});
    };
    add_matrix("user_embedding", params.user_embedding.weights);
    add_matrix("item_embedding", params.item_embedding.weights);
    if (params.user_head) {
        add_dense("user_head.mean", params.user_head->mean);
        add_dense("user_head.logvar", params.user_head->logvar);
    }
    if (params.item_head) {
        add_dense("item_head.mean", params.item_head->mean);
        add_dense("item_head.logvar", params.item_head->logvar);
    }
    for (std::size_t l = 0; l < params.regression.size(); ++l) {
        add_dense("regression." + std::to_string(l), params.regression[l]);
    }
    return views;
}

std::size_t parameter_count(const ModelParams& params) {
    std::size_t n = 0;
    for (const auto& v : parameter_views(const_cast<ModelParams&>(params))) n += v.values.size();
    return n;
}

ModelParams densify(const GradientSet& grads, const ModelParams& like) {
    ModelParams out = like;
    for (auto& view : parameter_views(out)) std::fill(view.values.begin(), view.values.end(), 0.0);
    auto fill_sparse = [](Matrix& dst, const SparseRowGrad& src) {
        for (const auto& [row, values] : src.rows) {
            std::copy(values.begin(), values.end(), dst.row(row).begin());
        }
    };
    auto fill_dense = [](DenseLayer& dst, const DenseGrad& src) {
        dst.weights = src.weights;
        dst.bias = src.bias;
    };
    fill_sparse(out.user_embedding.weights, grads.user_embedding);
    fill_sparse(out.item_embedding.weights, grads.item_embedding);
    if (out.user_head && grads.user_head) {
        fill_dense(out.user_head->mean, grads.user_head->mean);
        fill_dense(out.user_head->logvar, grads.user_head->logvar);
    }
    if (out.item_head && grads.item_head) {
        fill_dense(out.item_head->mean, grads.item_head->mean);
        fill_dense(out.item_head->logvar, grads.item_head->logvar);
    }
    for (std::size_t l = 0; l < out.regression.size() && l < grads.regression.size(); ++l) {
        fill_dense(out.regression[l], grads.regression[l]);
    }
    return out;
}

ModelParams build_model(const ModelConfig& config, Rng& rng) {
    validate(config);
    ModelParams params;
    params.user_embedding = make_embedding(rng, config.num_users, config.embedding_dim);
    params.item_embedding = make_embedding(rng, config.num_items, config.embedding_dim);
    if (is_variational(config.architecture)) {
        auto make_head = [&] {
            VariationalHead head;
            head.mean = make_dense(rng, config.embedding_dim, config.latent_dim, Activation::Linear);
            head.logvar = make_dense(rng, config.embedding_dim, config.latent_dim, Activation::Linear);
            return head;
        };
        params.user_head = make_head();
        params.item_head = make_head();
    }
    if (uses_mlp(config.architecture)) {
        std::size_t in = 2 * config.regression_input_dim();
        for (auto width : config.mlp_hidden) {
            params.regression.push_back(make_dense(rng, in, width, Activation::Relu));
            in = width;
        }
        params.regression.push_back(make_dense(rng, in, 1, Activation::Linear));
    }
    return params;
}

ModelParams build_model(const ModelConfig& config) {
    Rng rng(config.init_seed);
    return build_model(config, rng);
}

namespace {

struct SideTrace {
    Matrix embedded;
    Matrix mu;
    Matrix logvar;
    Matrix eps;
    Matrix z;
};

struct ForwardTrace {
    SideTrace user;
    SideTrace item;
    std::vector<Matrix> mlp_inputs;
    std::vector<double> output;
};

void check_structure(const ModelParams& params, const ModelConfig& config) {
    const bool variational = is_variational(config.architecture);
    if (variational != (params.user_head.has_value() && params.item_head.has_value()) ||
        uses_mlp(config.architecture) == params.regression.empty()) {
        throw Error(ErrorKind::Structure, "parameters do not match architecture " +
                                              std::string(to_string(config.architecture)));
    }
}

SideTrace run_side(const EmbeddingTable& table, const std::optional<VariationalHead>& head,
                   std::span<const Index> ids, Rng& rng, SamplingMode mode) {
    SideTrace side;
    side.embedded = embedding_forward(table, ids);
    if (!head) {
        side.z = side.embedded;
        return side;
    }
    side.mu = dense_forward(head->mean, side.embedded);
    side.logvar = dense_forward(head->logvar, side.embedded);
    if (mode == SamplingMode::Stochastic) {
        side.eps = sample_standard_normal(rng, side.mu.rows(), side.mu.cols());
    } else {
        side.eps = Matrix(side.mu.rows(), side.mu.cols());
    }
    side.z = variational_sample(side.mu, side.logvar, side.eps);
    return side;
}

ForwardTrace run_forward(const ModelParams& params, const ModelConfig& config,
                         std::span<const Index> users, std::span<const Index> items, Rng& rng,
                         SamplingMode mode) {
    check_structure(params, config);
    if (users.size() != items.size()) {
        throw Error(ErrorKind::Dimension, "forward: " + std::to_string(users.size()) + " users vs " +
                                              std::to_string(items.size()) + " items");
    }
    ForwardTrace trace;
    if (users.empty()) return trace;
    trace.user = run_side(params.user_embedding, params.user_head, users, rng, mode);
    trace.item = run_side(params.item_embedding, params.item_head, items, rng, mode);
    if (params.regression.empty()) {
        trace.output = dot_combine(trace.user.z, trace.item.z);
        return trace;
    }
    Matrix x = concat_combine(trace.user.z, trace.item.z);
    for (const auto& layer : params.regression) {
        trace.mlp_inputs.push_back(x);
        x = dense_forward(layer, x);
    }
    trace.output.assign(x.values().begin(), x.values().end());
    return trace;
}

void accumulate(Matrix& dst, const Matrix& src) {
    for (std::size_t k = 0; k < dst.size(); ++k) dst.values()[k] += src.values()[k];
}

// Returns the gradient with respect to the embedded rows and fills the head gradient.
Matrix backward_side(const SideTrace& side, const std::optional<VariationalHead>& head,
                     const Matrix& grad_z, std::optional<HeadGrad>& head_grad) {
    if (!head) return grad_z;
    VariationalGrad vg = variational_backward(grad_z, side.logvar, side.eps);
    DenseBackward mean_back = dense_backward(head->mean, side.embedded, vg.grad_mu);
    DenseBackward logvar_back = dense_backward(head->logvar, side.embedded, vg.grad_logvar);
    head_grad = HeadGrad{std::move(mean_back.grad), std::move(logvar_back.grad)};
    accumulate(mean_back.grad_x, logvar_back.grad_x);
    return std::move(mean_back.grad_x);
}

}  // namespace

std::vector<double> forward(const ModelParams& params, const ModelConfig& config,
                            std::span<const Index> users, std::span<const Index> items, Rng& rng,
                            SamplingMode mode) {
    return run_forward(params, config, users, items, rng, mode).output;
}

LossAndGrads loss_and_grads(const ModelParams& params, const ModelConfig& config,
                            const TrainingBatch& batch, Rng& rng) {
    if (batch.size() == 0) throw Error(ErrorKind::Dimension, "loss_and_grads on an empty batch");
    if (batch.user_ids.size() != batch.size() || batch.item_ids.size() != batch.size()) {
        throw Error(ErrorKind::Dimension, "training batch columns have different lengths");
    }
    ForwardTrace trace = run_forward(params, config, batch.user_ids, batch.item_ids, rng,
                                     SamplingMode::Stochastic);
    const double n = static_cast<double>(batch.size());
    LossAndGrads out;
    std::vector<double> grad_y(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const double diff = trace.output[b] - batch.ratings[b];
        out.loss += diff * diff;
        grad_y[b] = 2.0 * diff / n;
    }
    out.loss /= n;

    PairGrad pair;
    if (params.regression.empty()) {
        pair = dot_backward(trace.user.z, trace.item.z, grad_y);
    } else {
        Matrix grad = Matrix::from_data(batch.size(), 1, grad_y);
        out.grads.regression.resize(params.regression.size());
        for (std::size_t l = params.regression.size(); l-- > 0;) {
            DenseBackward back = dense_backward(params.regression[l], trace.mlp_inputs[l], grad);
            out.grads.regression[l] = std::move(back.grad);
            grad = std::move(back.grad_x);
        }
        pair = concat_backward(grad, trace.user.z.cols());
    }
    Matrix grad_user = backward_side(trace.user, params.user_head, pair.grad_p, out.grads.user_head);
    Matrix grad_item = backward_side(trace.item, params.item_head, pair.grad_q, out.grads.item_head);
    out.grads.user_embedding = embedding_backward(batch.user_ids, grad_user);
    out.grads.item_embedding = embedding_backward(batch.item_ids, grad_item);
    return out;
}

std::vector<double> predict_mean(const ModelParams& params, const ModelConfig& config,
                                 std::span<const Index> users, std::span<const Index> items,
                                 Rng& rng, std::size_t n_samples) {
    if (n_samples == 0) throw Error(ErrorKind::Config, "prediction needs at least one sample");
    if (!is_variational(config.architecture)) n_samples = 1;
    std::vector<double> mean(users.size(), 0.0);
    for (std::size_t s = 0; s < n_samples; ++s) {
        auto pass = forward(params, config, users, items, rng, SamplingMode::Stochastic);
        for (std::size_t k = 0; k < pass.size(); ++k) mean[k] += pass[k];
    }
    if (n_samples > 1) {
        for (double& v : mean) v /= static_cast<double>(n_samples);
    }
    return mean;
}

std::vector<double> predict(const ModelParams& params, const ModelConfig& config,
                            std::span<const Index> users, std::span<const Index> items, Rng& rng) {
    auto out = predict_mean(params, config, users, items, rng, config.n_prediction_samples);
    for (double& v : out) v = config.scale.clamp(v);
    return out;
}

}  // namespace varcf
