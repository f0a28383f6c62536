#pragma once

#include "gvci/autodiff.hpp"

#include <Eigen/Sparse>

#include <random>
#include <string>
#include <vector>

namespace gvci {

constexpr double kLogVarMin = -15.0;
constexpr double kLogVarMax = 15.0;

// Affine layers applied in sequence; weights are (in x out), biases (1 x out).
class DenseStack {
public:
    struct Layer {
        Parameter weight;
        Parameter bias;
        Activation activation = Activation::identity;
    };

    DenseStack() = default;
    // widths = {in, h1, ..., out}; activations.size() == widths.size() - 1.
    DenseStack(const std::string& name, const std::vector<int>& widths,
               const std::vector<Activation>& activations, std::mt19937_64& rng);

    Var forward(Tape& tape, const Var& input);
    Matrix forward(const Matrix& input) const;

    int in_dim() const;
    int out_dim() const;
    bool empty() const { return layers_.empty(); }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }
    void collect(std::vector<Parameter*>& out);

private:
    std::vector<Layer> layers_;
};

struct GaussianVar {
    Var mean;
    Var logvar;  // clamped to [kLogVarMin, kLogVarMax]
};

// Diagonal Gaussian produced from a shared trunk followed by separate linear
// heads for the mean and the log-variance.
class DiagGaussianHead {
public:
    DiagGaussianHead() = default;
    DiagGaussianHead(const std::string& name, int in_dim, const std::vector<int>& hidden, int out_dim,
                     Activation hidden_activation, std::mt19937_64& rng);

    GaussianVar forward(Tape& tape, const Var& input);

    int in_dim() const;
    int out_dim() const { return mean_.out_dim(); }
    DenseStack& trunk() { return trunk_; }
    DenseStack& mean_head() { return mean_; }
    DenseStack& logvar_head() { return logvar_; }
    void collect(std::vector<Parameter*>& out);

private:
    DenseStack trunk_;
    DenseStack mean_;
    DenseStack logvar_;
};

// Row-normalised adjacency (mean over the self-augmented neighbourhood).
// Rows are source nodes: node i aggregates from every j with adjacency(i, j) = 1.
Matrix normalize_adjacency(const Matrix& adjacency, bool add_self_loops = true);

class GraphConvStack {
public:
    GraphConvStack() = default;
    GraphConvStack(const std::string& name, const std::vector<int>& widths,
                   const std::vector<Activation>& activations, std::mt19937_64& rng);

    // features: n x v. normalized_adjacency from normalize_adjacency().
    Var forward(Tape& tape, const Var& features, const Matrix& normalized_adjacency);
    Matrix forward(const Matrix& features, const Matrix& normalized_adjacency) const;

    std::vector<Parameter>& weights() { return weights_; }
    const std::vector<Activation>& activations() const { return activations_; }
    int out_dim() const;
    void collect(std::vector<Parameter*>& out);

private:
    std::vector<Parameter> weights_;
    std::vector<Activation> activations_;
};

// Per-feature attention over a d-dimensional key given a node embedding query.
// logits = query * query_weight + key * key_weight + bias, softmax over the d
// feature dimensions. In key-independent mode the key term is dropped.
struct AttentionParams {
    Parameter query_weight;  // d_G x d
    Parameter key_weight;    // d x d
    Parameter bias;          // 1 x d
    bool key_dependent = true;

    AttentionParams() = default;
    AttentionParams(const std::string& name, int query_dim, int key_dim, bool key_dependent, std::mt19937_64& rng);
    void collect(std::vector<Parameter*>& out);
};

RowVector attention_scores(const RowVector& query, const RowVector& key, const AttentionParams& params);

// Decodes every (cell, node) pair at once: out(b, i) = att(query_i, key_b) . key_b.
// queries: n x d_G node embeddings; keys: B x d. Result: B x n.
Var attention_decode(Tape& tape, const Var& queries, const Var& keys, AttentionParams& params);

// mean + sqrt(variance) * noise; negative variance is rejected, zero yields the mean.
Vector reparam_sample(const Vector& mean, const Vector& variance, const Vector& noise);
// Tape version parameterised by clamped log-variance. noise has the shape of mean.
Var reparam_sample(const Var& mean, const Var& logvar, const Matrix& noise);

// KL(p || q) for diagonal Gaussians.
double kl_diag_gaussian(const Vector& p_mean, const Vector& p_var, const Vector& q_mean, const Vector& q_var);
// Row-wise KL between two batches of diagonal Gaussians given log-variances; B x 1.
Var kl_diag_gaussian(const Var& p_mean, const Var& p_logvar, const Var& q_mean, const Var& q_logvar);

double gaussian_log_likelihood(const Vector& x, const Vector& mean, const Vector& variance);
// Row-wise log-density; x and mean are B x n, logvar is B x n or 1 x n. Returns B x 1.
Var gaussian_log_likelihood(const Var& x, const Var& mean, const Var& logvar);
// Same with constant mean/variance (stratum fits); variance rows must match x.
Var gaussian_log_likelihood(const Var& x, const Matrix& mean, const Matrix& variance);

// Sparse keep-pattern: for every row, the sorted list of kept columns.
struct SparseMask {
    Eigen::Index size = 0;
    std::vector<std::vector<Eigen::Index>> rows;

    std::size_t nnz() const;
    bool contains(Eigen::Index r, Eigen::Index c) const;
    Matrix to_dense() const;
};

// Row softmax of the logits restricted to kept entries; dropped entries are
// excluded from the normaliser.
Eigen::SparseMatrix<double, Eigen::RowMajor> masked_row_softmax(const Matrix& logits, const SparseMask& mask);

// softmax_r(M . L) applied block-wise to a stack of node matrices: h has
// (batches * n) rows, every consecutive n-row block is aggregated with the same
// row-softmax weights. Gradients flow to both logits and h.
Var masked_softmax_aggregate(const Var& logits, const SparseMask& mask, const Var& h);

}  // namespace gvci
