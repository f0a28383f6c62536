#pragma once

// Graph-conditioned variational causal model.
//
// Encoder:  Z_G = f_G(features, adjacency)           (n x d_G, shared by all cells)
//           Z_M = f_M(Y, X, T)                       (B x d)
//           Z_H ~ q_H(Z_M, aggr(Z_G))                (diagonal Gaussian over R^d)
// Decoder:  Y_M ~ p_M(Z_H, T)                        (diagonal Gaussian over R^d)
//           mean_i = att(Z_G(i), Y_M) . Y_M          (per gene, convex weights)
//           Y_i ~ N(mean_i, exp(output_logvar_i))

#include "gvci/data.hpp"
#include "gvci/nn.hpp"

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace gvci {

enum class Aggregation { sum, max, mean };
enum class CounterfactualMode { uniform_other, permute };

Aggregation parse_aggregation(const std::string& s);
std::string to_string(Aggregation a);
CounterfactualMode parse_counterfactual_mode(const std::string& s);
std::string to_string(CounterfactualMode m);

struct ModelConfig {
    int latent_dim = 16;  // d
    int graph_dim = 8;    // d_G
    std::vector<int> encoder_hidden{64};
    std::vector<int> gcn_hidden{};
    std::vector<int> posterior_hidden{64};
    std::vector<int> decoder_hidden{64};
    Activation hidden_activation = Activation::relu;
    Activation gcn_activation = Activation::tanh;
    bool key_dependent_attention = true;
    Aggregation aggregation = Aggregation::mean;
    bool add_self_loops = true;
    double initial_output_logvar = 0.0;
};

struct ModelDims {
    int genes = 0;          // n
    int covariates = 0;     // m, width of the covariate one-hot
    int treatments = 0;     // r
    int node_features = 0;  // v
};

ModelDims dims_of(const ExpressionDataset& data, const RelationGraph& graph);

class GraphVciModel {
public:
    GraphVciModel() = default;
    GraphVciModel(const ModelConfig& config, const ModelDims& dims, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    const ModelDims& dims() const { return dims_; }
    std::vector<Parameter*> parameters();

    std::string metadata_json() const;
    static GraphVciModel from_metadata(const std::string& json);
    void save(const std::string& path);
    static GraphVciModel load(const std::string& path);

    DenseStack f_m;
    GraphConvStack f_g;
    DiagGaussianHead q_h;
    DiagGaussianHead p_m;
    AttentionParams f_h;
    Parameter output_logvar;  // 1 x n

private:
    ModelConfig config_;
    ModelDims dims_;
};

// Graph inputs prepared once per graph.
struct GraphInputs {
    Matrix features;
    Matrix normalized_adjacency;
};

GraphInputs prepare_graph(const RelationGraph& graph, bool add_self_loops);

struct LatentVar {
    Var z_graph;  // n x d_G
    Var mean;     // B x d
    Var logvar;   // B x d
    Var sample;   // B x d (equals mean in eval mode)
};

struct DecodedVar {
    Var y_m;     // B x d
    Var mean;    // B x n
    Var logvar;  // 1 x n
};

Var graph_embedding(Tape& tape, GraphVciModel& model, const GraphInputs& graph);

// noise == nullptr selects eval mode (latent mean).
LatentVar encode(Tape& tape, GraphVciModel& model, const Var& z_graph, const Var& y, const Matrix& x,
                 const Matrix& t, const Matrix* noise);
DecodedVar decode(Tape& tape, GraphVciModel& model, const Var& z_graph, const Var& z_h, const Matrix& t,
                  const Matrix* y_m_noise);

struct Batch {
    Matrix y;                 // B x n
    Matrix x;                 // B x m
    std::vector<int> t;       // treatment codes
    std::vector<int> groups;  // covariate group codes
};

Batch make_batch(const ExpressionDataset& data, const std::vector<std::size_t>& cells);

// Random draws consumed by one objective evaluation.
struct ObjectiveNoise {
    Matrix z;            // B x d, factual latent
    Matrix y_m;          // B x d, factual decoder latent
    Matrix cf_y_m;       // B x d, counterfactual decoder latent
    Matrix cf_y;         // B x n, counterfactual outcome
    std::vector<int> cf_t;
};

std::vector<int> sample_counterfactual_treatment(const std::vector<int>& t, int treatment_count,
                                                 CounterfactualMode mode, std::mt19937_64& rng);

ObjectiveNoise draw_noise(const Batch& batch, const ModelDims& dims, int latent_dim, CounterfactualMode mode,
                          std::mt19937_64& rng);

struct CounterfactualVar {
    LatentVar factual;
    DecodedVar reconstruction;
    DecodedVar counterfactual;
    Var y_cf;  // B x n outcome sample (mean when noise is absent)
    LatentVar recoded;
};

// Eval mode when `noise` is null: every draw is replaced by its mean.
CounterfactualVar counterfactual_forward(Tape& tape, GraphVciModel& model, const GraphInputs& graph, const Batch& batch,
                                         const std::vector<int>& cf_t, const ObjectiveNoise* noise);

struct ObjectiveWeights {
    double omega1 = 1.0;
    double omega2 = 0.1;
};

struct LossTerms {
    double total = 0.0;
    double recon_nll = 0.0;  // -E log p(Y | Z, T), batch mean
    double dist_loss = 0.0;  // -log p_hat(Y' | X, T'), batch mean
    double kl = 0.0;         // KL(q(Z_H | Y, T) || q(Z_H | Y', T')), batch mean
};

// total = recon_nll + omega1 * dist_loss + omega2 * kl
Var objective(Tape& tape, GraphVciModel& model, const GraphInputs& graph, const Batch& batch, const StratumFits& strata,
              const ObjectiveNoise& noise, const ObjectiveWeights& weights, LossTerms* terms = nullptr);

// Counterfactual means (eval mode) of `cells` under treatments `cf_t`; rows follow `cells`.
Matrix predict_counterfactual(GraphVciModel& model, const GraphInputs& graph, const ExpressionDataset& data,
                              const std::vector<std::size_t>& cells, const std::vector<int>& cf_t);

struct R2Summary {
    double r2_all = 0.0;
    double r2_de = 0.0;
    std::size_t groups = 0;
    struct Group {
        int covariate_group;
        int treatment;
        double r2_all;
        double r2_de;
        Vector predicted;  // mean counterfactual prediction
        Vector truth;      // mean observed outcome
    };
    std::vector<Group> detail;
};

// For every (covariate group, treatment) present among `tag` cells, predict the
// group's mean from control cells of the same covariate group (taken from the
// same split when available, otherwise from train) with T' set to that
// treatment, and score it against the observed group mean.
R2Summary evaluate_r2(GraphVciModel& model, const GraphInputs& graph, const ExpressionDataset& data,
                      const SplitAssignment& split, SplitTag tag, const GeneSets& gene_sets,
                      const std::string& control_label);

// Same metric with each group's own cells as factual inputs (T' = T).
R2Summary reconstruction_r2(GraphVciModel& model, const GraphInputs& graph, const ExpressionDataset& data,
                            const std::vector<std::size_t>& cells, const GeneSets& gene_sets);

struct TrainingConfig {
    ObjectiveWeights weights;
    double learning_rate = 3e-3;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 200;
    std::size_t eval_every = 5;
    std::size_t patience = 4;
    std::uint64_t seed = 0;
    CounterfactualMode counterfactual_mode = CounterfactualMode::uniform_other;
    double variance_floor = kDefaultVarianceFloor;
    std::size_t min_stratum_size = kDefaultMinStratumSize;
    std::string control_label = "ctrl";
    // Stop as soon as the validation R2 (all genes) reaches this value; disabled when not finite.
    double target_r2 = -std::numeric_limits<double>::infinity();

    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double recon_nll = 0.0;
    double dist_loss = 0.0;
    double kl = 0.0;
    bool evaluated = false;
    double val_r2_all = 0.0;
    double val_r2_de = 0.0;
};

struct TrainResult {
    GraphVciModel model;  // best validation checkpoint
    std::vector<EpochMetrics> history;
    std::size_t best_epoch = 0;
    double best_val_r2 = 0.0;
};

TrainResult train(GraphVciModel model, const ExpressionDataset& data, const RelationGraph& graph,
                  const SplitAssignment& split, const TrainingConfig& config, const GeneSets& de_genes);

void write_metrics_csv(const std::vector<EpochMetrics>& history, const std::string& path);

}  // namespace gvci
