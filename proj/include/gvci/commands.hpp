#pragma once

// Pipeline commands behind the CLI. Each reads its inputs from the paths in
// the run config, writes its artifacts to paths.out and logs one-line
// summaries to `log`. Failures surface as ConfigError, DataError or
// DivergenceError.

#include "gvci/config.hpp"

#include <ostream>

namespace gvci {

// expression.tsv, covariates.tsv, treatments.tsv, graph.edges.tsv (corrupted
// prior), graph.features.tsv, truth.edges.tsv, scm_truth.json
void cmd_synth(const RunConfig& config, std::ostream& log);
// refined.edges.tsv, edge_weights.tsv
void cmd_refine(const RunConfig& config, std::ostream& log);
// model.ckpt (or paths.checkpoint), metrics.csv, split.tsv
void cmd_train(const RunConfig& config, std::ostream& log);
// predictions.tsv, evaluation.json
void cmd_evaluate(const RunConfig& config, std::ostream& log);
// marginals.tsv, estimator_comparison.csv
void cmd_estimate(const RunConfig& config, std::ostream& log);

// Split used by every command after synth: ood selection in split.category
// followed by the 4:1 train/val split.
SplitAssignment make_split(const RunConfig& config, const ExpressionDataset& data);

}  // namespace gvci
