#pragma once

// Seeded linear-Gaussian structural causal model over a planted gene DAG.
//
//   gene_j = baseline_j(c) + sum_{i -> j} coeff_ij * gene_i + effect_j(t) + noise_j
//
// Genes are generated in topological order. With `nonlinear` the parent sum is
// passed through tanh, and only Monte-Carlo oracles apply.

#include "gvci/data.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gvci {

struct SynthConfig {
    std::size_t genes = 50;
    std::size_t cells = 2000;
    std::size_t treatments = 5;  // including the control
    std::size_t covariate_levels = 2;
    double expected_parents = 1.5;
    double coeff_min = 0.3;
    double coeff_max = 0.8;
    double noise_scale = 0.5;
    double baseline_scale = 2.0;
    double covariate_shift = 1.0;
    std::size_t effect_genes = 5;  // direct targets per non-control treatment
    double effect_min = 1.0;
    double effect_max = 3.0;
    std::size_t feature_noise_dims = 4;
    double feature_noise = 0.1;
    double prior_deletion_rate = 0.2;  // an equal number of false edges is added
    bool nonlinear = false;
    std::string control_label = "ctrl";
    std::string covariate_name = "cell_type";
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError naming the offending field
};

struct SyntheticScm {
    std::vector<int> order;  // topological order of genes
    Matrix adjacency;        // n x n, rows are sources
    Matrix coefficients;     // n x n, coefficients(i, j) for edge i -> j
    Vector noise_scale;      // per gene
    Matrix effects;          // treatments x n (the control row is all zero)
    Matrix baselines;        // covariate levels x n
    bool nonlinear = false;
    // stored realisation of every generated cell
    Matrix noise;            // cells x n
    std::vector<int> cell_level;
    std::vector<int> cell_treatment;

    std::size_t genes() const { return static_cast<std::size_t>(adjacency.rows()); }
    // Propagates baseline(level) + effect(treatment) + noise through the DAG.
    Vector propagate(int level, int treatment, const Vector& noise_row) const;
};

struct SyntheticData {
    ExpressionDataset dataset;
    RelationGraph truth;  // planted edges
    RelationGraph prior;  // truth with deleted and added edges, same node features
    SyntheticScm scm;
};

SyntheticData generate(const SynthConfig& config);

// Model from explicit tables (no stored cells). Throws ConfigError when the
// adjacency contains a cycle or the table shapes disagree.
SyntheticScm make_scm(const Matrix& adjacency, const Matrix& coefficients, const Vector& noise_scale,
                      const Matrix& effects, const Matrix& baselines, bool nonlinear = false);

// Draws cells for the given (level, treatment) pairs, replacing the stored
// realisation of `scm`. Returns cells x n outcomes.
Matrix sample_cells(SyntheticScm& scm, const std::vector<int>& levels, const std::vector<int>& treatments,
                    std::uint64_t seed);

// Abduction-action-prediction: re-propagates the stored noise of `cell` under
// treatment `treatment`. Throws DataError for an unknown cell.
Vector true_counterfactual(const SyntheticScm& scm, std::size_t cell, int treatment);
// Same, but verifies that `observed` is the factual outcome of that cell.
Vector true_counterfactual(const SyntheticScm& scm, std::size_t cell, const Vector& observed, int treatment);

// E[Y | X = level, T = treatment]. Closed form for the linear model,
// Monte-Carlo (fixed internal seed, `mc_samples` draws) when nonlinear.
Vector true_marginal(const SyntheticScm& scm, int treatment, int level, std::size_t mc_samples = 200000);

// Structured dump of the generating parameters.
std::string scm_to_json(const SyntheticScm& scm, const ExpressionDataset& data);

}  // namespace gvci
