#include "varcf/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "varcf/error.hpp"

namespace varcf {

EmbeddingTable make_embedding(Rng& rng, std::size_t num_entries, std::size_t dim, double stddev) {
    if (num_entries == 0 || dim == 0) {
        throw Error(ErrorKind::Config, "embedding table needs positive entries and dim");
    }
    EmbeddingTable table{Matrix(num_entries, dim)};
    for (double& w : table.weights.values()) w = stddev * rng.normal();
    return table;
}

DenseLayer make_dense(Rng& rng, std::size_t in_dim, std::size_t out_dim, Activation activation) {
    if (in_dim == 0 || out_dim == 0) {
        throw Error(ErrorKind::Config, "dense layer needs positive in/out dims");
    }
    DenseLayer layer{Matrix(in_dim, out_dim), std::vector<double>(out_dim, 0.0), activation};
    const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    for (double& w : layer.weights.values()) w = rng.uniform(-limit, limit);
    return layer;
}

Matrix embedding_forward(const EmbeddingTable& table, std::span<const Index> ids) {
    Matrix out(ids.size(), table.dim());
    for (std::size_t b = 0; b < ids.size(); ++b) {
        if (ids[b] >= table.num_entries()) {
            throw Error(ErrorKind::Index, "embedding id " + std::to_string(ids[b]) +
                                              " out of range [0, " +
                                              std::to_string(table.num_entries()) + ")");
        }
        auto src = table.weights.row(ids[b]);
        std::copy(src.begin(), src.end(), out.row(b).begin());
    }
    return out;
}

SparseRowGrad embedding_backward(std::span<const Index> ids, const Matrix& grad_out) {
    if (grad_out.rows() != ids.size()) {
        throw Error(ErrorKind::Dimension, "embedding_backward: " + std::to_string(ids.size()) +
                                              " ids but gradient " + grad_out.shape_string());
    }
    SparseRowGrad grad{grad_out.cols(), {}};
    for (std::size_t b = 0; b < ids.size(); ++b) {
        auto [it, inserted] = grad.rows.try_emplace(ids[b], grad_out.cols(), 0.0);
        auto src = grad_out.row(b);
        for (std::size_t j = 0; j < src.size(); ++j) it->second[j] += src[j];
    }
    return grad;
}

namespace {

void check_dense_input(const DenseLayer& layer, const Matrix& x, const char* op) {
    if (x.cols() != layer.in_dim()) {
        throw Error(ErrorKind::Dimension, std::string(op) + ": input " + x.shape_string() +
                                              " does not match weights " +
                                              layer.weights.shape_string());
    }
    if (layer.bias.size() != layer.out_dim()) {
        throw Error(ErrorKind::Dimension, std::string(op) + ": bias length " +
                                              std::to_string(layer.bias.size()) +
                                              " does not match out_dim " +
                                              std::to_string(layer.out_dim()));
    }
}

Matrix affine(const DenseLayer& layer, const Matrix& x) {
    Matrix out = matmul(x, layer.weights);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += layer.bias[j];
    }
    return out;
}

}  // namespace

Matrix dense_forward(const DenseLayer& layer, const Matrix& x) {
    check_dense_input(layer, x, "dense_forward");
    Matrix out = affine(layer, x);
    if (layer.activation == Activation::Relu) {
        for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    }
    return out;
}

DenseBackward dense_backward(const DenseLayer& layer, const Matrix& x, const Matrix& grad_out) {
    check_dense_input(layer, x, "dense_backward");
    if (grad_out.rows() != x.rows() || grad_out.cols() != layer.out_dim()) {
        throw Error(ErrorKind::Dimension, "dense_backward: gradient " + grad_out.shape_string() +
                                              " does not match output (" +
                                              std::to_string(x.rows()) + "x" +
                                              std::to_string(layer.out_dim()) + ")");
    }
    Matrix local = grad_out;
    if (layer.activation == Activation::Relu) {
        const Matrix pre = affine(layer, x);
        // Subgradient at exactly 0 is taken as 0.
        for (std::size_t k = 0; k < local.size(); ++k) {
            if (!(pre.values()[k] > 0.0)) local.values()[k] = 0.0;
        }
    }
    DenseBackward out;
    out.grad_x = matmul_nt(local, layer.weights);
    out.grad.weights = matmul_tn(x, local);
    out.grad.bias.assign(layer.out_dim(), 0.0);
    for (std::size_t r = 0; r < local.rows(); ++r) {
        auto row = local.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) out.grad.bias[j] += row[j];
    }
    return out;
}

Matrix variational_sample(const Matrix& mu, const Matrix& logvar, const Matrix& eps) {
    require_same_shape(mu, logvar, "variational_sample");
    require_same_shape(mu, eps, "variational_sample");
    Matrix z(mu.rows(), mu.cols());
    for (std::size_t k = 0; k < z.size(); ++k) {
        z.values()[k] = mu.values()[k] + std::exp(logvar.values()[k]) * eps.values()[k];
    }
    return z;
}

VariationalGrad variational_backward(const Matrix& grad_z, const Matrix& logvar, const Matrix& eps) {
    require_same_shape(grad_z, logvar, "variational_backward");
    require_same_shape(grad_z, eps, "variational_backward");
    VariationalGrad out{grad_z, Matrix(grad_z.rows(), grad_z.cols())};
    for (std::size_t k = 0; k < grad_z.size(); ++k) {
        out.grad_logvar.values()[k] =
            grad_z.values()[k] * eps.values()[k] * std::exp(logvar.values()[k]);
    }
    return out;
}

std::vector<double> dot_combine(const Matrix& p, const Matrix& q) {
    require_same_shape(p, q, "dot_combine");
    std::vector<double> out(p.rows(), 0.0);
    for (std::size_t r = 0; r < p.rows(); ++r) {
        auto pr = p.row(r);
        auto qr = q.row(r);
        double acc = 0.0;
        for (std::size_t j = 0; j < pr.size(); ++j) acc += pr[j] * qr[j];
        out[r] = acc;
    }
    return out;
}

PairGrad dot_backward(const Matrix& p, const Matrix& q, std::span<const double> grad_out) {
    require_same_shape(p, q, "dot_backward");
    if (grad_out.size() != p.rows()) {
        throw Error(ErrorKind::Dimension, "dot_backward: " + std::to_string(grad_out.size()) +
                                              " output gradients for " + p.shape_string());
    }
    PairGrad out{Matrix(p.rows(), p.cols()), Matrix(q.rows(), q.cols())};
    for (std::size_t r = 0; r < p.rows(); ++r) {
        for (std::size_t j = 0; j < p.cols(); ++j) {
            out.grad_p(r, j) = grad_out[r] * q(r, j);
            out.grad_q(r, j) = grad_out[r] * p(r, j);
        }
    }
    return out;
}

Matrix concat_combine(const Matrix& p, const Matrix& q) {
    require_same_shape(p, q, "concat_combine");
    Matrix out(p.rows(), p.cols() + q.cols());
    for (std::size_t r = 0; r < p.rows(); ++r) {
        auto dst = out.row(r);
        std::copy(p.row(r).begin(), p.row(r).end(), dst.begin());
        std::copy(q.row(r).begin(), q.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(p.cols()));
    }
    return out;
}

PairGrad concat_backward(const Matrix& grad_out, std::size_t left_cols) {
    if (left_cols > grad_out.cols()) {
        throw Error(ErrorKind::Dimension, "concat_backward: split at " + std::to_string(left_cols) +
                                              " exceeds " + grad_out.shape_string());
    }
    const std::size_t right_cols = grad_out.cols() - left_cols;
    PairGrad out{Matrix(grad_out.rows(), left_cols), Matrix(grad_out.rows(), right_cols)};
    for (std::size_t r = 0; r < grad_out.rows(); ++r) {
        auto src = grad_out.row(r);
        std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(left_cols), out.grad_p.row(r).begin());
        std::copy(src.begin() + static_cast<std::ptrdiff_t>(left_cols), src.end(), out.grad_q.row(r).begin());
    }
    return out;
}

}  // namespace varcf
