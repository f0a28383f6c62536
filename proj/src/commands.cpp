#include "gvci/commands.hpp"

#include "gvci/errors.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>

namespace gvci {

namespace fs = std::filesystem;

namespace {

void require_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw DataError(what + " not found: " + path);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

ExpressionDataset load_inputs(const RunConfig& c) {
    require_file(c.paths.expression(), "expression table");
    require_file(c.paths.covariates(), "covariate table");
    require_file(c.paths.treatments(), "treatment table");
    return load_dataset(c.paths.expression(), c.paths.covariates(), c.paths.treatments());
}

RelationGraph load_input_graph(const RunConfig& c, const ExpressionDataset& data) {
    require_file(c.paths.graph_edges(), "graph edge list");
    require_file(c.paths.graph_features(), "graph feature table");
    return load_graph(c.paths.graph_edges(), c.paths.graph_features(), data.gene_names());
}

GraphVciModel load_model(const RunConfig& c, const ExpressionDataset& data, const RelationGraph& graph) {
    require_file(c.paths.checkpoint_path(), "checkpoint (run train first)");
    GraphVciModel model = GraphVciModel::load(c.paths.checkpoint_path());
    const ModelDims d = dims_of(data, graph);
    const ModelDims m = model.dims();
    if (d.genes != m.genes || d.covariates != m.covariates || d.treatments != m.treatments ||
        d.node_features != m.node_features)
        throw DataError("checkpoint " + c.paths.checkpoint_path() + " was trained on data of different shape");
    return model;
}

void write_json(const nlohmann::json& doc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << doc.dump(2) << '\n';
}

nlohmann::json summary_json(const R2Summary& s) {
    return {{"r2_all", s.r2_all}, {"r2_de", s.r2_de}, {"groups", s.groups}};
}

}  // namespace

SplitAssignment make_split(const RunConfig& c, const ExpressionDataset& data) {
    std::string category = c.split.category;
    if (category.empty()) {
        for (const auto& col : data.covariates())
            if (col.name == c.split.covariate && !col.levels.empty()) category = col.levels.front();
        if (category.empty()) throw DataError("split: unknown covariate '" + c.split.covariate + "'");
    }
    const OodSelection ood = select_ood(data, c.split.covariate, category, c.split.k, {c.training.control_label});
    return split_train_val(data, ood.split, c.split_seed());
}

void cmd_synth(const RunConfig& c, std::ostream& log) {
    const SyntheticData s = generate(c.synth);
    const std::string dir = c.paths.data_dir();
    ensure_dir(dir);
    save_dataset(s.dataset, c.paths.expression(), c.paths.covariates(), c.paths.treatments());
    save_edges(s.prior, (fs::path(dir) / "graph.edges.tsv").string());
    save_features(s.prior, (fs::path(dir) / "graph.features.tsv").string());
    save_edges(s.truth, (fs::path(dir) / "truth.edges.tsv").string());
    std::ofstream truth((fs::path(dir) / "scm_truth.json").string());
    if (!truth) throw DataError("cannot write scm_truth.json in " + dir);
    truth << scm_to_json(s.scm, s.dataset) << '\n';
    log << "synth: " << s.dataset.cells() << " cells x " << s.dataset.genes() << " genes, "
        << s.dataset.treatment_count() << " treatments; true edges " << s.truth.edge_count() << ", prior edges "
        << s.prior.edge_count() << " -> " << dir << '\n';
}

void cmd_refine(const RunConfig& c, std::ostream& log) {
    const ExpressionDataset data = load_inputs(c);
    const RelationGraph graph = load_input_graph(c, data);
    const SplitAssignment split = make_split(c, data);
    const RefinementResult r = refine(data, graph, c.refinement, cells_with(split, SplitTag::train));
    ensure_dir(c.paths.out);
    save_edges(r.refined, c.paths.output("refined.edges.tsv"));
    save_edge_weights(r.weights, graph.node_names, c.refinement.top_k, c.paths.output("edge_weights.tsv"));
    const std::size_t n = graph.nodes();
    const std::size_t after = r.refined.edge_count();
    log << "refine-graph: edges " << graph.edge_count() << " -> " << after << " (alpha " << c.refinement.alpha
        << ", final loss " << r.epoch_loss.back() << ")\n";
    if (n > 1 && 2 * after > n * (n - 1))
        log << "warning: refined graph is dense (" << after << " of " << n * (n - 1)
            << " possible edges); consider a larger refinement.alpha or refinement.omega\n";
}

void cmd_train(const RunConfig& c, std::ostream& log) {
    const ExpressionDataset data = load_inputs(c);
    const RelationGraph graph = load_input_graph(c, data);
    const SplitAssignment split = make_split(c, data);
    const GeneSets de = select_de_genes(data, c.de_genes, c.training.control_label);
    GraphVciModel model(c.model, dims_of(data, graph), c.model_seed());
    ensure_dir(c.paths.out);
    save_split(split, c.paths.output("split.tsv"));
    TrainResult r = train(std::move(model), data, graph, split, c.training, de);
    write_metrics_csv(r.history, c.paths.output("metrics.csv"));
    const std::string ckpt = c.paths.checkpoint_path();
    ensure_dir(fs::path(ckpt).parent_path().empty() ? "." : fs::path(ckpt).parent_path().string());
    r.model.save(ckpt);
    log << "train: " << r.history.size() << " epochs, best validation R2 " << r.best_val_r2 << " at epoch "
        << r.best_epoch << " -> " << ckpt << '\n';
}

void cmd_evaluate(const RunConfig& c, std::ostream& log) {
    const ExpressionDataset data = load_inputs(c);
    const RelationGraph graph = load_input_graph(c, data);
    GraphVciModel model = load_model(c, data, graph);
    const SplitAssignment split = make_split(c, data);
    const GeneSets de = select_de_genes(data, c.de_genes, c.training.control_label);
    const GraphInputs g = prepare_graph(graph, model.config().add_self_loops);

    ensure_dir(c.paths.out);
    std::ofstream out(c.paths.output("predictions.tsv"));
    if (!out) throw DataError("cannot write predictions.tsv in " + c.paths.out);
    out << "split\tcovariate\ttreatment\tgene\tpredicted\tobserved\n" << std::setprecision(17);
    auto dump = [&](const std::string& tag, const R2Summary& s) {
        for (const auto& grp : s.detail)
            for (Eigen::Index j = 0; j < grp.predicted.size(); ++j)
                out << tag << '\t' << data.covariate_group_labels()[static_cast<std::size_t>(grp.covariate_group)] << '\t'
                    << data.treatment().levels[static_cast<std::size_t>(grp.treatment)] << '\t'
                    << data.gene_names()[static_cast<std::size_t>(j)] << '\t' << grp.predicted(j) << '\t'
                    << grp.truth(j) << '\n';
    };

    nlohmann::json summary;
    const R2Summary recon = reconstruction_r2(model, g, data, cells_with(split, SplitTag::train), de);
    dump("train", recon);
    summary["train_reconstruction"] = summary_json(recon);
    log << "evaluate: train reconstruction R2 " << recon.r2_all << " (DE " << recon.r2_de << ")\n";
    for (SplitTag tag : {SplitTag::val, SplitTag::ood}) {
        if (cells_with(split, tag).empty()) continue;
        const R2Summary s = evaluate_r2(model, g, data, split, tag, de, c.training.control_label);
        dump(to_string(tag), s);
        summary[to_string(tag)] = summary_json(s);
        log << "evaluate: " << to_string(tag) << " R2 " << s.r2_all << " (DE " << s.r2_de << ") over " << s.groups
            << " groups\n";
    }
    write_json(summary, c.paths.output("evaluation.json"));
}

void cmd_estimate(const RunConfig& c, std::ostream& log) {
    const ExpressionDataset data = load_inputs(c);
    const RelationGraph graph = load_input_graph(c, data);
    GraphVciModel model = load_model(c, data, graph);
    const SplitAssignment split = make_split(c, data);
    const GeneSets de = select_de_genes(data, c.de_genes, c.training.control_label);
    const GraphInputs g = prepare_graph(graph, model.config().add_self_loops);
    const PredictionOptions options{c.estimator.sample_latent, c.estimate_seed()};
    const ComparisonResult r = compare_estimators(model, g, data, cells_with(split, SplitTag::train),
                                                  cells_with(split, SplitTag::val), de, c.estimator.strata, options);
    for (const auto& s : r.skipped) log << "warning: skipped " << s << '\n';
    ensure_dir(c.paths.out);
    write_marginals_tsv(r.estimates, data, c.paths.output("marginals.tsv"));
    write_comparison_csv(summarize_runs({r}), c.paths.output("estimator_comparison.csv"));
    for (const auto& row : r.rows)
        log << "estimate: " << row.method << " " << row.gene_set << " R2 " << row.r2 << " over " << r.strata
            << " strata\n";
}

}  // namespace gvci
