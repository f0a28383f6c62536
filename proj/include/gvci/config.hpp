#pragma once

// Run configuration shared by every CLI command. A JSON document with the
// blocks seed, paths, synth, model, training, refinement, split and estimator;
// keys absent from the document keep their defaults, unknown keys are rejected.
//
// Seeds: every subsystem seed is derive_seed(seed, stream) (see seed.hpp)
// unless the block pins its own.

#include "gvci/marginal.hpp"
#include "gvci/model.hpp"
#include "gvci/refinement.hpp"
#include "gvci/synth.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gvci {

struct PathsConfig {
    std::string out = "run";
    std::string data;      // directory holding expression/covariates/treatments TSVs; defaults to out
    std::string graph;     // edges TSV; defaults to <data>/graph.edges.tsv
    std::string features;  // node feature TSV; defaults to <data>/graph.features.tsv
    std::string checkpoint;  // defaults to <out>/model.ckpt

    std::string data_dir() const { return data.empty() ? out : data; }
    std::string expression() const;
    std::string covariates() const;
    std::string treatments() const;
    std::string graph_edges() const;
    std::string graph_features() const;
    std::string checkpoint_path() const;
    std::string output(const std::string& name) const;
};

struct SplitConfig {
    std::string covariate = "cell_type";
    std::string category;  // held-out covariate level; empty selects the first level
    std::size_t k = 20;    // treatments held out in that level
    std::optional<std::uint64_t> seed;
};

struct EstimatorConfig {
    StratumList strata;  // empty means every stratum
    bool sample_latent = false;
};

struct RunConfig {
    std::uint64_t seed = 0;
    PathsConfig paths;
    SynthConfig synth;
    ModelConfig model;
    TrainingConfig training;
    std::size_t de_genes = 50;  // per treatment
    RefinementConfig refinement;
    SplitConfig split;
    EstimatorConfig estimator;

    // Seeds derived from the root unless pinned in the document.
    std::uint64_t synth_seed() const;
    std::uint64_t split_seed() const;
    std::uint64_t refine_seed() const;
    std::uint64_t model_seed() const;
    std::uint64_t train_seed() const;
    std::uint64_t estimate_seed() const;

    void validate() const;  // throws ConfigError naming the field
};

// Defaults as a JSON document (the accepted schema).
nlohmann::json default_config_json();

// Merges `doc` over the defaults and converts; throws ConfigError on unknown
// keys or mistyped values.
RunConfig config_from_json(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

// "section.key=value"; the value is read as JSON when it parses, otherwise as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

nlohmann::json config_to_json(const RunConfig& config);

}  // namespace gvci
