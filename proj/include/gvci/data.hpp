#pragma once

#include "gvci/autodiff.hpp"
#include "gvci/errors.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gvci {

// One categorical column. Levels are enumerated in order of first occurrence.
struct CategoricalColumn {
    std::string name;
    std::vector<std::string> levels;
    std::vector<int> codes;  // one per cell

    static CategoricalColumn from_labels(std::string name, const std::vector<std::string>& labels);
    int level_index(const std::string& label) const;  // -1 when absent
    std::string label(std::size_t cell) const { return levels[static_cast<std::size_t>(codes[cell])]; }
};

class ExpressionDataset {
public:
    ExpressionDataset() = default;
    // Validates finiteness and that every column has one entry per cell.
    ExpressionDataset(Matrix outcomes, std::vector<std::string> gene_names, std::vector<CategoricalColumn> covariates,
                      CategoricalColumn treatment);

    const Matrix& outcomes() const { return outcomes_; }
    const std::vector<std::string>& gene_names() const { return gene_names_; }
    const std::vector<CategoricalColumn>& covariates() const { return covariates_; }
    const CategoricalColumn& treatment() const { return treatment_; }

    std::size_t cells() const { return static_cast<std::size_t>(outcomes_.rows()); }
    std::size_t genes() const { return static_cast<std::size_t>(outcomes_.cols()); }
    std::size_t treatment_count() const { return treatment_.levels.size(); }
    int treatment_code(std::size_t cell) const { return treatment_.codes[cell]; }

    // Covariate tuple of every cell, enumerated by first occurrence ("A|Z" labels).
    int covariate_group(std::size_t cell) const { return group_codes_[cell]; }
    const std::vector<std::string>& covariate_group_labels() const { return group_labels_; }
    std::size_t covariate_group_count() const { return group_labels_.size(); }

    int gene_index(const std::string& name) const;  // -1 when absent

private:
    Matrix outcomes_;
    std::vector<std::string> gene_names_;
    std::vector<CategoricalColumn> covariates_;
    CategoricalColumn treatment_;
    std::vector<int> group_codes_;
    std::vector<std::string> group_labels_;
};

// Directed relation graph over the genes; adjacency rows are source nodes.
struct RelationGraph {
    std::vector<std::string> node_names;
    Matrix node_features;  // n x v
    Matrix adjacency;      // n x n in {0, 1}

    std::size_t nodes() const { return node_names.size(); }
    std::size_t edge_count() const;
    void validate() const;
};

ExpressionDataset load_dataset(const std::string& expression_path, const std::string& covariate_path,
                               const std::string& treatment_path);
void save_dataset(const ExpressionDataset& data, const std::string& expression_path, const std::string& covariate_path,
                  const std::string& treatment_path);

// Nodes follow `gene_names`; unknown genes in either file are a DataError.
RelationGraph load_graph(const std::string& edges_path, const std::string& features_path,
                         const std::vector<std::string>& gene_names);
void save_edges(const RelationGraph& graph, const std::string& edges_path);
void save_features(const RelationGraph& graph, const std::string& features_path);

Matrix encode_covariates(const ExpressionDataset& data);
Matrix encode_treatments(const ExpressionDataset& data);
Matrix one_hot(const std::vector<int>& codes, std::size_t width);

// Per-treatment mean expression; rows indexed by treatment code.
Matrix pseudobulk(const ExpressionDataset& data);

enum class SplitTag : std::uint8_t { train, val, ood };
using SplitAssignment = std::vector<SplitTag>;

std::string to_string(SplitTag tag);
std::vector<std::size_t> cells_with(const SplitAssignment& split, SplitTag tag);
void save_split(const SplitAssignment& split, const std::string& path);

// Euclidean distance between each treatment's pseudobulk and the pseudobulk of
// every cell not carrying that treatment, indexed by treatment code.
std::vector<double> treatment_distances(const ExpressionDataset& data);

struct OodSelection {
    SplitAssignment split;            // ood or train (train/val are split later)
    std::vector<int> held_out;        // treatment codes, most distant first
};

// Tags cells of `category` in covariate `covariate` whose treatment is among the k
// most distant treatments as ood (all eligible ones when k exceeds their number).
// Treatments in `excluded` are never held out.
OodSelection select_ood(const ExpressionDataset& data, const std::string& covariate, const std::string& category,
                        std::size_t k, const std::vector<std::string>& excluded = {});

// Splits every non-ood cell 4:1 into train/val, deterministic in the seed.
SplitAssignment split_train_val(const ExpressionDataset& data, const SplitAssignment& assignment, std::uint64_t seed);

using GeneSets = std::vector<std::vector<int>>;  // indexed by treatment code

// Top genes per treatment by |mean_t - mean_ctrl| / (pooled_sd + eps).
GeneSets select_de_genes(const ExpressionDataset& data, std::size_t per_treatment_count,
                         const std::string& control_label);

struct StratumGaussian {
    int covariate_group = 0;
    int treatment = 0;
    Vector mean;
    Vector variance;
    std::size_t count = 0;
    bool pooled = false;  // fit pooled over covariates because the stratum was too small
};

class StratumFits {
public:
    StratumFits() = default;
    StratumFits(std::vector<StratumGaussian> strata, std::vector<StratumGaussian> pooled, std::size_t groups);

    // Fit for (group, treatment); strata absent from the fit use the pooled
    // treatment fit. Throws DataError when the treatment was never observed.
    const StratumGaussian& lookup(int covariate_group, int treatment) const;
    const std::vector<StratumGaussian>& strata() const { return strata_; }

private:
    std::vector<StratumGaussian> strata_;
    std::vector<StratumGaussian> pooled_;  // by treatment code
    std::vector<int> index_;               // group * T + treatment -> strata_ index or -1
    std::size_t groups_ = 0;
};

constexpr double kDefaultVarianceFloor = 1e-4;
constexpr std::size_t kDefaultMinStratumSize = 3;

// Population-variance diagonal Gaussians per (covariate group, treatment) over
// `cells` (all cells when empty). Every treatment must be present.
StratumFits fit_stratum_gaussians(const ExpressionDataset& data, double variance_floor = kDefaultVarianceFloor,
                                  std::size_t min_stratum_size = kDefaultMinStratumSize,
                                  const std::vector<std::size_t>& cells = {});

// Coefficient of determination of `prediction` against `truth` (1 - SS_res / SS_tot).
double r2_score(const Vector& truth, const Vector& prediction);

}  // namespace gvci
