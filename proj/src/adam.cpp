#include "varcf/adam.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "varcf/error.hpp"

namespace varcf {

namespace {

struct Corrections {
    double lr;
    double beta1;
    double beta2;
    double epsilon;
    double bias1;  // 1 - beta1^t
    double bias2;  // 1 - beta2^t
};

bool all_zero(std::span<const double> g) {
    return std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; });
}

void step_block(std::span<double> param, std::span<const double> grad, std::span<double> m,
                std::span<double> v, const Corrections& c) {
    if (all_zero(grad)) return;
    for (std::size_t k = 0; k < param.size(); ++k) {
        m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * grad[k];
        v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * grad[k] * grad[k];
        const double m_hat = m[k] / c.bias1;
        const double v_hat = v[k] / c.bias2;
        param[k] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
}

[[noreturn]] void mismatch(const std::string& what) {
    throw Error(ErrorKind::Structure, "adam_update: " + what);
}

void step_matrix(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, const Corrections& c,
                 const char* name) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols() || param.rows() != m.rows() ||
        param.cols() != m.cols() || param.rows() != v.rows() || param.cols() != v.cols()) {
        mismatch(std::string(name) + " gradient " + grad.shape_string() + " vs parameter " +
                 param.shape_string());
    }
    step_block(param.values(), grad.values(), m.values(), v.values(), c);
}

void step_dense(DenseLayer& layer, const DenseGrad& grad, DenseLayer& m, DenseLayer& v,
                const Corrections& c, const char* name) {
    step_matrix(layer.weights, grad.weights, m.weights, v.weights, c, name);
    if (grad.bias.size() != layer.bias.size() || m.bias.size() != layer.bias.size() ||
        v.bias.size() != layer.bias.size()) {
        mismatch(std::string(name) + " bias length");
    }
    step_block(layer.bias, grad.bias, m.bias, v.bias, c);
}

void step_embedding(EmbeddingTable& table, const SparseRowGrad& grad, EmbeddingTable& m,
                    EmbeddingTable& v, const Corrections& c, const char* name) {
    if (m.weights.rows() != table.num_entries() || v.weights.rows() != table.num_entries() ||
        m.weights.cols() != table.dim() || v.weights.cols() != table.dim()) {
        mismatch(std::string(name) + " moment shape");
    }
    if (!grad.rows.empty() && grad.dim != table.dim()) {
        mismatch(std::string(name) + " gradient dim " + std::to_string(grad.dim) + " vs " +
                 std::to_string(table.dim()));
    }
    for (const auto& [row, values] : grad.rows) {
        if (row >= table.num_entries()) {
            mismatch(std::string(name) + " gradient row " + std::to_string(row) + " out of range");
        }
        if (values.size() != table.dim()) mismatch(std::string(name) + " gradient row width");
        step_block(table.weights.row(row), values, m.weights.row(row), v.weights.row(row), c);
    }
}

void step_head(std::optional<VariationalHead>& head, const std::optional<HeadGrad>& grad,
               std::optional<VariationalHead>& m, std::optional<VariationalHead>& v,
               const Corrections& c, const char* name) {
    if (head.has_value() != m.has_value() || head.has_value() != v.has_value()) {
        mismatch(std::string(name) + " moment structure");
    }
    if (!grad) return;
    if (!head) mismatch(std::string(name) + " gradient for a model without that head");
    step_dense(head->mean, grad->mean, m->mean, v->mean, c, name);
    step_dense(head->logvar, grad->logvar, m->logvar, v->logvar, c, name);
}

}  // namespace

AdamState make_adam_state(const ModelParams& params, AdamHyper hyper) {
    AdamState state{hyper, 0, params, params};
    for (auto* moments : {&state.first_moment, &state.second_moment}) {
        for (auto& view : parameter_views(*moments)) std::fill(view.values.begin(), view.values.end(), 0.0);
    }
    return state;
}

void adam_update(ModelParams& params, const GradientSet& grads, AdamState& state) {
    if (state.first_moment.regression.size() != params.regression.size() ||
        state.second_moment.regression.size() != params.regression.size()) {
        mismatch("regression moment depth");
    }
    if (!grads.regression.empty() && grads.regression.size() != params.regression.size()) {
        mismatch("regression gradient depth " + std::to_string(grads.regression.size()) + " vs " +
                 std::to_string(params.regression.size()));
    }

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const Corrections c{state.hyper.learning_rate,
                        state.hyper.beta1,
                        state.hyper.beta2,
                        state.hyper.epsilon,
                        1.0 - std::pow(state.hyper.beta1, t),
                        1.0 - std::pow(state.hyper.beta2, t)};

    step_embedding(params.user_embedding, grads.user_embedding, state.first_moment.user_embedding,
                   state.second_moment.user_embedding, c, "user_embedding");
    step_embedding(params.item_embedding, grads.item_embedding, state.first_moment.item_embedding,
                   state.second_moment.item_embedding, c, "item_embedding");
    step_head(params.user_head, grads.user_head, state.first_moment.user_head,
              state.second_moment.user_head, c, "user_head");
    step_head(params.item_head, grads.item_head, state.first_moment.item_head,
              state.second_moment.item_head, c, "item_head");
    for (std::size_t l = 0; l < grads.regression.size(); ++l) {
        step_dense(params.regression[l], grads.regression[l], state.first_moment.regression[l],
                   state.second_moment.regression[l], c, "regression");
    }
}

}  // namespace varcf
