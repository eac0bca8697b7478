#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "varcf/rng.hpp"
#include "varcf/tensor.hpp"

namespace varcf {

using Index = std::size_t;

/// Lookup table mapping an id in [0, num_entries) to a dense row of width dim.
struct EmbeddingTable {
    Matrix weights;

    std::size_t num_entries() const noexcept { return weights.rows(); }
    std::size_t dim() const noexcept { return weights.cols(); }

    friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;
};

/// Row-indexed gradient of an embedding table. Rows absent from the map
/// received no gradient in this step.
struct SparseRowGrad {
    std::size_t dim = 0;
    std::map<Index, std::vector<double>> rows;
};

enum class Activation { Linear, Relu };

struct DenseLayer {
    Matrix weights;             // in_dim x out_dim
    std::vector<double> bias;   // out_dim
    Activation activation = Activation::Linear;

    std::size_t in_dim() const noexcept { return weights.rows(); }
    std::size_t out_dim() const noexcept { return weights.cols(); }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct DenseGrad {
    Matrix weights;
    std::vector<double> bias;
};

struct DenseBackward {
    Matrix grad_x;
    DenseGrad grad;
};

/// Mean and log-scale heads of the variational stage. Both map L -> K linearly.
struct VariationalHead {
    DenseLayer mean;
    DenseLayer logvar;

    friend bool operator==(const VariationalHead&, const VariationalHead&) = default;
};

struct VariationalGrad {
    Matrix grad_mu;
    Matrix grad_logvar;
};

struct PairGrad {
    Matrix grad_p;
    Matrix grad_q;
};

EmbeddingTable make_embedding(Rng& rng, std::size_t num_entries, std::size_t dim, double stddev = 0.05);
// Glorot-uniform weights, zero bias.
DenseLayer make_dense(Rng& rng, std::size_t in_dim, std::size_t out_dim, Activation activation);

Matrix embedding_forward(const EmbeddingTable& table, std::span<const Index> ids);
SparseRowGrad embedding_backward(std::span<const Index> ids, const Matrix& grad_out);

Matrix dense_forward(const DenseLayer& layer, const Matrix& x);
DenseBackward dense_backward(const DenseLayer& layer, const Matrix& x, const Matrix& grad_out);

// z = mu + exp(logvar) * eps, elementwise. The scale is exp(logvar), not exp(logvar / 2).
Matrix variational_sample(const Matrix& mu, const Matrix& logvar, const Matrix& eps);
VariationalGrad variational_backward(const Matrix& grad_z, const Matrix& logvar, const Matrix& eps);

std::vector<double> dot_combine(const Matrix& p, const Matrix& q);
PairGrad dot_backward(const Matrix& p, const Matrix& q, std::span<const double> grad_out);

Matrix concat_combine(const Matrix& p, const Matrix& q);
// Splits a (batch x (left_cols + right_cols)) gradient back into its two halves.
PairGrad concat_backward(const Matrix& grad_out, std::size_t left_cols);

}  // namespace varcf
