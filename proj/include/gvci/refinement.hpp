#pragma once

// Relation-graph refinement: a GCN g with learnable dense edge logits L is
// trained to predict every gene's expression from node inputs
// O_i = [Y_i, V_i, X]. Each step samples a keep-mask that retains prior edges
// with probability 1 - r_l and other edges with probability 1 - r_h (the
// diagonal is always kept). The refined graph thresholds sigmoid(L).

#include "gvci/data.hpp"
#include "gvci/nn.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace gvci {

struct RefinementConfig {
    double r_l = 0.1;  // dropout rate of prior edges
    double r_h = 0.9;  // dropout rate of non-prior edges
    double omega = 100.0;
    double alpha = 0.3;
    bool penalize_diagonal = false;  // adds omega * mean(diag W) to the loss
    std::size_t epochs = 10;
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    int hidden = 64;
    std::size_t layers = 2;
    std::uint64_t seed = 0;
    std::size_t top_k = 0;  // edge_weights.tsv rows kept per source node; 0 writes the dense matrix

    void validate() const;  // throws ConfigError naming the field
};

// E~: binary prior adjacency with an all-ones diagonal.
Matrix prior_with_self_loops(const Matrix& adjacency);

SparseMask sample_keep_mask(const Matrix& prior, double r_l, double r_h, std::mt19937_64& rng);

// act(softmax_r(M . L) H Theta), blockwise over the stacked node matrices in h.
Var masked_softmax_conv(const Var& h, const Var& logits, const SparseMask& mask, const Var& theta, Activation act);

// n x (1 + v + m): row i is [y_i, features row i, x].
Matrix build_node_inputs(const RowVector& y, const Matrix& features, const RowVector& x);

// Squared error summed over nodes and averaged over cells (rows of y are
// cells, prediction is the stacked (cells * n) x 1 output), plus
// omega * sum(W) / n^2.
Var refinement_objective(const Var& prediction, const Matrix& y, const Var& weights, double omega);

// Elementwise logistic transform 1 / (1 + exp(-L)).
Matrix rescale_weights(const Matrix& logits);

// 1 where weight > alpha; the diagonal is cleared.
Matrix threshold_graph(const Matrix& weights, double alpha);

struct RefinementState {
    Parameter logits;  // L, n x n
    GraphConvStack g;  // layer weights Theta
    Matrix prior;      // E~

    RefinementState() = default;
    RefinementState(const Matrix& prior_adjacency, int input_dim, const RefinementConfig& config);
    std::vector<Parameter*> parameters();
    // Stacked predictions for the cells in `inputs` ((cells * n) x (1 + v + m)).
    Var forward(Tape& tape, const Matrix& inputs, const SparseMask& mask);
};

struct RefinementResult {
    RelationGraph refined;
    Matrix weights;  // W~ = sigmoid(L)
    std::vector<double> epoch_loss;
};

// Trains on `cells` (all cells when empty).
RefinementResult refine(const ExpressionDataset& data, const RelationGraph& graph, const RefinementConfig& config,
                        const std::vector<std::size_t>& cells = {});

// Writes source, target, weight rows; top_k > 0 keeps the k largest off-diagonal weights per source.
void save_edge_weights(const Matrix& weights, const std::vector<std::string>& names, std::size_t top_k,
                       const std::string& path);

// Average precision of `scores` against binary `truth` over off-diagonal
// entries; tied scores are ranked as one block.
double auprc(const Matrix& scores, const Matrix& truth);

// |Pearson correlation| between genes over `cells` (all when empty).
Matrix abs_correlation(const ExpressionDataset& data, const std::vector<std::size_t>& cells = {});

}  // namespace gvci
