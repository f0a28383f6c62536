#pragma once

// Covariate-stratified marginal effect estimation. For treatment a and
// covariate group c:
//   empirical mean:  mean_{X=c} pred_k
//   robust:          mean_{X=c, T=a} (Y_k - pred_k) + mean_{X=c} pred_k
// where pred_k is the decoded counterfactual mean of cell k at T' = a.

#include "gvci/data.hpp"
#include "gvci/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gvci {

enum class EstimatorMethod { robust, empirical_mean };
std::string to_string(EstimatorMethod m);

struct MarginalEstimate {
    int treatment = 0;
    int covariate_group = 0;
    Vector estimate;
    EstimatorMethod method = EstimatorMethod::robust;
    std::size_t n_c = 0;   // cells in the covariate group
    std::size_t n_ac = 0;  // of which received treatment a
};

// Everything the estimators need about one covariate stratum.
struct StratumPredictions {
    int treatment = 0;
    int covariate_group = 0;
    Matrix outcomes;            // n_c x n observed Y
    Matrix predictions;         // n_c x n predictions at T' = a
    std::vector<bool> treated;  // T_k == a
};

MarginalEstimate robust_estimate(const StratumPredictions& s);
MarginalEstimate empirical_mean_estimate(const StratumPredictions& s);

struct PredictionOptions {
    bool sample_latent = false;  // draw Z_H from q instead of using its mean
    std::uint64_t seed = 0;
};

// Collects stratum (a, c) from `cells` (all cells when empty). Throws DataError
// when the stratum is empty.
StratumPredictions stratum_predictions(GraphVciModel& model, const GraphInputs& graph, const ExpressionDataset& data,
                                       int treatment, int covariate_group, const std::vector<std::size_t>& cells = {},
                                       const PredictionOptions& options = {});

// Model-level wrappers. robust_estimate throws DataError when no cell of the
// group received `treatment` (empirical_mean_estimate is the fallback).
MarginalEstimate robust_estimate(GraphVciModel& model, const GraphInputs& graph, const ExpressionDataset& data,
                                 int treatment, int covariate_group, const std::vector<std::size_t>& cells = {},
                                 const PredictionOptions& options = {});
MarginalEstimate empirical_mean_estimate(GraphVciModel& model, const GraphInputs& graph,
                                         const ExpressionDataset& data, int treatment, int covariate_group,
                                         const std::vector<std::size_t>& cells = {},
                                         const PredictionOptions& options = {});

struct InfluenceObservation {
    Vector y;
    bool in_group = false;  // X == c
    bool treated = false;   // T == a
};

// I(X=c, T=a) / p(c, a) * (Y - E[Y | Z, T]) + I(X=c) / p(c) * (E[Y' | Z, T'=a] - psi).
// Probabilities must lie in (0, 1].
Vector efficient_influence(const InfluenceObservation& obs, const Vector& prediction,
                           const Vector& conditional_mean, double p_group_treatment, double p_group, const Vector& psi);

struct ComparisonRow {
    std::string method;    // robust | empirical_mean
    std::string gene_set;  // all | de
    double r2 = 0.0;       // mean over compared strata
    double r2_std = 0.0;   // sample std over runs (0 for a single run)
};

struct ComparisonResult {
    std::vector<ComparisonRow> rows;
    std::vector<MarginalEstimate> estimates;  // both methods for every compared stratum
    std::vector<std::string> skipped;         // reasons for strata left out
    std::size_t strata = 0;
};

// (treatment label, covariate group label) pairs; empty compares every pair.
using StratumList = std::vector<std::pair<std::string, std::string>>;

// Estimates on `estimate_cells`, scored by R2 against the mean outcome of the
// same stratum among `reference_cells`.
ComparisonResult compare_estimators(GraphVciModel& model, const GraphInputs& graph, const ExpressionDataset& data,
                                    const std::vector<std::size_t>& estimate_cells,
                                    const std::vector<std::size_t>& reference_cells, const GeneSets& de_genes,
                                    const StratumList& strata = {}, const PredictionOptions& options = {});

// Mean and sample std of each (method, gene set) row across runs.
std::vector<ComparisonRow> summarize_runs(const std::vector<ComparisonResult>& runs);

void write_marginals_tsv(const std::vector<MarginalEstimate>& estimates, const ExpressionDataset& data,
                         const std::string& path);
void write_comparison_csv(const std::vector<ComparisonRow>& rows, const std::string& path);

}  // namespace gvci
