#include "gvci/model.hpp"

#include "gvci/checkpoint.hpp"
#include "gvci/errors.hpp"
#include "gvci/optim.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>

namespace gvci {

using json = nlohmann::json;

Aggregation parse_aggregation(const std::string& s) {
    if (s == "sum") return Aggregation::sum;
    if (s == "max") return Aggregation::max;
    if (s == "mean") return Aggregation::mean;
    throw ConfigError("unknown aggregation '" + s + "' (expected sum, max or mean)");
}

std::string to_string(Aggregation a) {
    switch (a) {
        case Aggregation::sum: return "sum";
        case Aggregation::max: return "max";
        case Aggregation::mean: return "mean";
    }
    return "mean";
}

CounterfactualMode parse_counterfactual_mode(const std::string& s) {
    if (s == "uniform_other") return CounterfactualMode::uniform_other;
    if (s == "permute") return CounterfactualMode::permute;
    throw ConfigError("unknown counterfactual mode '" + s + "' (expected uniform_other or permute)");
}

std::string to_string(CounterfactualMode m) {
    return m == CounterfactualMode::permute ? "permute" : "uniform_other";
}

ModelDims dims_of(const ExpressionDataset& data, const RelationGraph& graph) {
    if (graph.nodes() != data.genes())
        throw DataError("graph has " + std::to_string(graph.nodes()) + " nodes but the dataset has " +
                        std::to_string(data.genes()) + " genes");
    ModelDims d;
    d.genes = static_cast<int>(data.genes());
    d.covariates = static_cast<int>(encode_covariates(data).cols());
    d.treatments = static_cast<int>(data.treatment_count());
    d.node_features = static_cast<int>(graph.node_features.cols());
    return d;
}

namespace {

std::vector<int> widths_of(int in, const std::vector<int>& hidden, int out) {
    std::vector<int> w{in};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(out);
    return w;
}

void check_positive(const std::vector<int>& v, const std::string& field) {
    for (int x : v)
        if (x <= 0) throw ConfigError("model." + field + " entries must be positive");
}

}  // namespace

GraphVciModel::GraphVciModel(const ModelConfig& config, const ModelDims& dims, std::uint64_t seed)
    : config_(config), dims_(dims) {
    if (config.latent_dim <= 0) throw ConfigError("model.latent_dim must be positive");
    if (config.graph_dim <= 0) throw ConfigError("model.graph_dim must be positive");
    check_positive(config.encoder_hidden, "encoder_hidden");
    check_positive(config.gcn_hidden, "gcn_hidden");
    check_positive(config.posterior_hidden, "posterior_hidden");
    check_positive(config.decoder_hidden, "decoder_hidden");
    if (dims.genes <= 0 || dims.treatments <= 0 || dims.covariates < 0 || dims.node_features <= 0)
        throw DataError("model dimensions must be positive");

    std::mt19937_64 rng(seed);
    const int d = config.latent_dim;
    const int dg = config.graph_dim;

    auto enc_w = widths_of(dims.genes + dims.covariates + dims.treatments, config.encoder_hidden, d);
    std::vector<Activation> enc_a(enc_w.size() - 1, config.hidden_activation);
    enc_a.back() = Activation::identity;
    f_m = DenseStack("f_m", enc_w, enc_a, rng);

    auto gcn_w = widths_of(dims.node_features, config.gcn_hidden, dg);
    f_g = GraphConvStack("f_g", gcn_w, std::vector<Activation>(gcn_w.size() - 1, config.gcn_activation), rng);

    q_h = DiagGaussianHead("q_h", d + dg, config.posterior_hidden, d, config.hidden_activation, rng);
    p_m = DiagGaussianHead("p_m", d + dims.treatments, config.decoder_hidden, d, config.hidden_activation, rng);
    f_h = AttentionParams("f_h", dg, d, config.key_dependent_attention, rng);
    output_logvar = Parameter("output_logvar", Matrix::Constant(1, dims.genes, config.initial_output_logvar));
}

std::vector<Parameter*> GraphVciModel::parameters() {
    std::vector<Parameter*> out;
    f_m.collect(out);
    f_g.collect(out);
    q_h.collect(out);
    p_m.collect(out);
    f_h.collect(out);
    out.push_back(&output_logvar);
    return out;
}

std::string GraphVciModel::metadata_json() const {
    json j;
    j["format"] = "gvci-model";
    j["config"] = {{"latent_dim", config_.latent_dim},
                   {"graph_dim", config_.graph_dim},
                   {"encoder_hidden", config_.encoder_hidden},
                   {"gcn_hidden", config_.gcn_hidden},
                   {"posterior_hidden", config_.posterior_hidden},
                   {"decoder_hidden", config_.decoder_hidden},
                   {"hidden_activation", to_string(config_.hidden_activation)},
                   {"gcn_activation", to_string(config_.gcn_activation)},
                   {"key_dependent_attention", config_.key_dependent_attention},
                   {"aggregation", to_string(config_.aggregation)},
                   {"add_self_loops", config_.add_self_loops},
                   {"initial_output_logvar", config_.initial_output_logvar}};
    j["dims"] = {{"genes", dims_.genes},
                 {"covariates", dims_.covariates},
                 {"treatments", dims_.treatments},
                 {"node_features", dims_.node_features}};
    return j.dump();
}

GraphVciModel GraphVciModel::from_metadata(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
        if (j.value("format", "") != "gvci-model") throw DataError("checkpoint metadata is not a gvci model");
        const auto& c = j.at("config");
        ModelConfig cfg;
        cfg.latent_dim = c.at("latent_dim").get<int>();
        cfg.graph_dim = c.at("graph_dim").get<int>();
        cfg.encoder_hidden = c.at("encoder_hidden").get<std::vector<int>>();
        cfg.gcn_hidden = c.at("gcn_hidden").get<std::vector<int>>();
        cfg.posterior_hidden = c.at("posterior_hidden").get<std::vector<int>>();
        cfg.decoder_hidden = c.at("decoder_hidden").get<std::vector<int>>();
        cfg.hidden_activation = parse_activation(c.at("hidden_activation").get<std::string>());
        cfg.gcn_activation = parse_activation(c.at("gcn_activation").get<std::string>());
        cfg.key_dependent_attention = c.at("key_dependent_attention").get<bool>();
        cfg.aggregation = parse_aggregation(c.at("aggregation").get<std::string>());
        cfg.add_self_loops = c.at("add_self_loops").get<bool>();
        cfg.initial_output_logvar = c.at("initial_output_logvar").get<double>();
        const auto& d = j.at("dims");
        ModelDims dims;
        dims.genes = d.at("genes").get<int>();
        dims.covariates = d.at("covariates").get<int>();
        dims.treatments = d.at("treatments").get<int>();
        dims.node_features = d.at("node_features").get<int>();
        return GraphVciModel(cfg, dims, 0);
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint metadata: ") + e.what());
    }
}

void GraphVciModel::save(const std::string& path) { save_checkpoint(path, metadata_json(), parameters()); }

GraphVciModel GraphVciModel::load(const std::string& path) {
    Checkpoint ckpt;
    try {
        ckpt = load_checkpoint(path);
    } catch (const DataError&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    GraphVciModel model = from_metadata(ckpt.metadata);
    try {
        restore_parameters(ckpt, model.parameters());
    } catch (const std::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    return model;
}

GraphInputs prepare_graph(const RelationGraph& graph, bool add_self_loops) {
    graph.validate();
    GraphInputs g;
    g.features = graph.node_features;
    try {
        g.normalized_adjacency = normalize_adjacency(graph.adjacency, add_self_loops);
    } catch (const std::invalid_argument& e) {
        throw DataError(e.what());
    }
    return g;
}

Var graph_embedding(Tape& tape, GraphVciModel& model, const GraphInputs& graph) {
    return model.f_g.forward(tape, tape.constant(graph.features), graph.normalized_adjacency);
}

LatentVar encode(Tape& tape, GraphVciModel& model, const Var& z_graph, const Var& y, const Matrix& x, const Matrix& t,
                 const Matrix* noise) {
    const Eigen::Index b = y.rows();
    Var z_m = model.f_m.forward(tape, concat_cols({y, tape.constant(x), tape.constant(t)}));
    Var agg;
    switch (model.config().aggregation) {
        case Aggregation::sum: agg = col_sum(z_graph); break;
        case Aggregation::max: agg = col_max(z_graph); break;
        case Aggregation::mean: agg = col_mean(z_graph); break;
    }
    GaussianVar q = model.q_h.forward(tape, concat_cols({z_m, broadcast_rows(agg, b)}));
    LatentVar out{z_graph, q.mean, q.logvar, q.mean};
    if (noise) out.sample = reparam_sample(q.mean, q.logvar, *noise);
    return out;
}

DecodedVar decode(Tape& tape, GraphVciModel& model, const Var& z_graph, const Var& z_h, const Matrix& t,
                  const Matrix* y_m_noise) {
    GaussianVar p = model.p_m.forward(tape, concat_cols({z_h, tape.constant(t)}));
    Var y_m = y_m_noise ? reparam_sample(p.mean, p.logvar, *y_m_noise) : p.mean;
    Var mean = attention_decode(tape, z_graph, y_m, model.f_h);
    Var logvar = clamp(tape.param(model.output_logvar), kLogVarMin, kLogVarMax);
    return DecodedVar{y_m, mean, logvar};
}

Batch make_batch(const ExpressionDataset& data, const std::vector<std::size_t>& cells) {
    Batch b;
    const Matrix x_all = encode_covariates(data);
    b.y.resize(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(data.genes()));
    b.x.resize(static_cast<Eigen::Index>(cells.size()), x_all.cols());
    for (std::size_t k = 0; k < cells.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        const auto c = static_cast<Eigen::Index>(cells[k]);
        b.y.row(r) = data.outcomes().row(c);
        b.x.row(r) = x_all.row(c);
        b.t.push_back(data.treatment_code(cells[k]));
        b.groups.push_back(data.covariate_group(cells[k]));
    }
    return b;
}

std::vector<int> sample_counterfactual_treatment(const std::vector<int>& t, int treatment_count,
                                                 CounterfactualMode mode, std::mt19937_64& rng) {
    if (treatment_count < 2) throw DataError("counterfactual sampling needs at least two treatment labels");
    std::vector<int> out(t.size());
    if (mode == CounterfactualMode::permute) {
        out = t;
        std::shuffle(out.begin(), out.end(), rng);
        return out;
    }
    std::uniform_int_distribution<int> pick(0, treatment_count - 2);
    for (std::size_t k = 0; k < t.size(); ++k) {
        int a = pick(rng);
        if (a >= t[k]) ++a;
        out[k] = a;
    }
    return out;
}

ObjectiveNoise draw_noise(const Batch& batch, const ModelDims& dims, int latent_dim, CounterfactualMode mode,
                          std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto b = batch.y.rows();
    auto draw = [&](Eigen::Index rows, Eigen::Index cols) {
        Matrix m(rows, cols);
        for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = normal(rng);
        return m;
    };
    ObjectiveNoise n;
    n.cf_t = sample_counterfactual_treatment(batch.t, dims.treatments, mode, rng);
    n.z = draw(b, latent_dim);
    n.y_m = draw(b, latent_dim);
    n.cf_y_m = draw(b, latent_dim);
    n.cf_y = draw(b, dims.genes);
    return n;
}

CounterfactualVar counterfactual_forward(Tape& tape, GraphVciModel& model, const GraphInputs& graph, const Batch& batch,
                                         const std::vector<int>& cf_t, const ObjectiveNoise* noise) {
    if (cf_t.size() != batch.t.size()) throw std::invalid_argument("counterfactual treatments do not match the batch");
    const auto r = static_cast<std::size_t>(model.dims().treatments);
    const Matrix t = one_hot(batch.t, r);
    const Matrix t_cf = one_hot(cf_t, r);
    Var zg = graph_embedding(tape, model, graph);
    CounterfactualVar out;
    out.factual = encode(tape, model, zg, tape.constant(batch.y), batch.x, t, noise ? &noise->z : nullptr);
    out.reconstruction = decode(tape, model, zg, out.factual.sample, t, noise ? &noise->y_m : nullptr);
    out.counterfactual = decode(tape, model, zg, out.factual.sample, t_cf, noise ? &noise->cf_y_m : nullptr);
    out.y_cf = out.counterfactual.mean;
    if (noise)
        out.y_cf = reparam_sample(out.counterfactual.mean, broadcast_rows(out.counterfactual.logvar, batch.y.rows()),
                                  noise->cf_y);
    out.recoded = encode(tape, model, zg, out.y_cf, batch.x, t_cf, nullptr);
    return out;
}

Var objective(Tape& tape, GraphVciModel& model, const GraphInputs& graph, const Batch& batch, const StratumFits& strata,
              const ObjectiveNoise& noise, const ObjectiveWeights& weights, LossTerms* terms) {
    CounterfactualVar cf = counterfactual_forward(tape, model, graph, batch, noise.cf_t, &noise);

    Var recon_ll = gaussian_log_likelihood(tape.constant(batch.y), cf.reconstruction.mean, cf.reconstruction.logvar);

    Matrix fit_mean(batch.y.rows(), batch.y.cols());
    Matrix fit_var(batch.y.rows(), batch.y.cols());
    for (Eigen::Index k = 0; k < batch.y.rows(); ++k) {
        const auto& s = strata.lookup(batch.groups[static_cast<std::size_t>(k)], noise.cf_t[static_cast<std::size_t>(k)]);
        fit_mean.row(k) = s.mean.transpose();
        fit_var.row(k) = s.variance.transpose();
    }
    Var dist_ll = gaussian_log_likelihood(cf.y_cf, fit_mean, fit_var);
    Var kl = kl_diag_gaussian(cf.factual.mean, cf.factual.logvar, cf.recoded.mean, cf.recoded.logvar);

    Var recon_term = -mean(recon_ll);
    Var dist_term = -mean(dist_ll);
    Var kl_term = mean(kl);
    Var total = recon_term + weights.omega1 * dist_term + weights.omega2 * kl_term;
    if (terms) {
        terms->recon_nll = recon_term.scalar();
        terms->dist_loss = dist_term.scalar();
        terms->kl = kl_term.scalar();
        terms->total = total.scalar();
    }
    return total;
}

Matrix predict_counterfactual(GraphVciModel& model, const GraphInputs& graph, const ExpressionDataset& data,
                              const std::vector<std::size_t>& cells, const std::vector<int>& cf_t) {
    if (cells.size() != cf_t.size()) throw std::invalid_argument("predict_counterfactual: size mismatch");
    for (int a : cf_t)
        if (a < 0 || a >= model.dims().treatments) throw DataError("unknown treatment code " + std::to_string(a));
    Matrix out(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(data.genes()));
    constexpr std::size_t kChunk = 512;
    const auto r = static_cast<std::size_t>(model.dims().treatments);
    for (std::size_t start = 0; start < cells.size(); start += kChunk) {
        const std::size_t end = std::min(cells.size(), start + kChunk);
        std::vector<std::size_t> chunk(cells.begin() + static_cast<std::ptrdiff_t>(start),
                                       cells.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<int> t_cf(cf_t.begin() + static_cast<std::ptrdiff_t>(start),
                              cf_t.begin() + static_cast<std::ptrdiff_t>(end));
        Batch b = make_batch(data, chunk);
        Tape tape;
        Var zg = graph_embedding(tape, model, graph);
        LatentVar z = encode(tape, model, zg, tape.constant(b.y), b.x, one_hot(b.t, r), nullptr);
        DecodedVar y = decode(tape, model, zg, z.sample, one_hot(t_cf, r), nullptr);
        out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) = y.mean.value();
    }
    return out;
}

namespace {

Vector subset(const Vector& v, const std::vector<int>& idx) {
    Vector out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = v(idx[k]);
    return out;
}

Vector mean_rows(const Matrix& m) { return m.colwise().mean().transpose(); }

Vector mean_outcome(const ExpressionDataset& data, const std::vector<std::size_t>& cells) {
    Vector acc = Vector::Zero(static_cast<Eigen::Index>(data.genes()));
    for (auto c : cells) acc += data.outcomes().row(static_cast<Eigen::Index>(c)).transpose();
    return acc / static_cast<double>(cells.size());
}

R2Summary::Group score_group(int g, int a, const Vector& pred, const Vector& truth, const GeneSets& gene_sets) {
    R2Summary::Group out{g, a, r2_score(truth, pred), 0.0, pred, truth};
    const bool has_de = static_cast<std::size_t>(a) < gene_sets.size() && !gene_sets[static_cast<std::size_t>(a)].empty();
    if (has_de) {
        const auto& idx = gene_sets[static_cast<std::size_t>(a)];
        out.r2_de = r2_score(subset(truth, idx), subset(pred, idx));
    } else {
        out.r2_de = out.r2_all;
    }
    return out;
}

void finish(R2Summary& s) {
    s.groups = s.detail.size();
    if (s.groups == 0) return;
    for (const auto& g : s.detail) {
        s.r2_all += g.r2_all;
        s.r2_de += g.r2_de;
    }
    s.r2_all /= static_cast<double>(s.groups);
    s.r2_de /= static_cast<double>(s.groups);
}

}  // namespace

R2Summary evaluate_r2(GraphVciModel& model, const GraphInputs& graph, const ExpressionDataset& data,
                      const SplitAssignment& split, SplitTag tag, const GeneSets& gene_sets,
                      const std::string& control_label) {
    if (split.size() != data.cells()) throw DataError("split assignment does not cover every cell");
    const int control = data.treatment().level_index(control_label);
    if (control < 0) throw DataError("control label '" + control_label + "' is not a treatment level");

    std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
    for (std::size_t c = 0; c < data.cells(); ++c)
        if (split[c] == tag) groups[{data.covariate_group(c), data.treatment_code(c)}].push_back(c);

    R2Summary summary;
    for (const auto& [key, members] : groups) {
        const auto [g, a] = key;
        std::vector<std::size_t> seeds;
        for (SplitTag source : {tag, SplitTag::train}) {
            for (std::size_t c = 0; c < data.cells(); ++c)
                if (split[c] == source && data.covariate_group(c) == g && data.treatment_code(c) == control)
                    seeds.push_back(c);
            if (!seeds.empty()) break;
        }
        if (seeds.empty())
            throw DataError("no control cells for covariate group '" + data.covariate_group_labels()[static_cast<std::size_t>(g)] +
                            "'");
        Matrix pred = predict_counterfactual(model, graph, data, seeds, std::vector<int>(seeds.size(), a));
        summary.detail.push_back(score_group(g, a, mean_rows(pred), mean_outcome(data, members), gene_sets));
    }
    finish(summary);
    return summary;
}

R2Summary reconstruction_r2(GraphVciModel& model, const GraphInputs& graph, const ExpressionDataset& data,
                            const std::vector<std::size_t>& cells, const GeneSets& gene_sets) {
    std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
    for (auto c : cells) groups[{data.covariate_group(c), data.treatment_code(c)}].push_back(c);
    R2Summary summary;
    for (const auto& [key, members] : groups) {
        Matrix pred = predict_counterfactual(model, graph, data, members, std::vector<int>(members.size(), key.second));
        summary.detail.push_back(score_group(key.first, key.second, mean_rows(pred), mean_outcome(data, members), gene_sets));
    }
    finish(summary);
    return summary;
}

void TrainingConfig::validate() const {
    auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (!finite_nonneg(weights.omega1)) throw ConfigError("training.omega1 must be a finite non-negative number");
    if (!finite_nonneg(weights.omega2)) throw ConfigError("training.omega2 must be a finite non-negative number");
    if (!(std::isfinite(learning_rate) && learning_rate > 0.0))
        throw ConfigError("training.learning_rate must be positive");
    if (batch_size == 0) throw ConfigError("training.batch_size must be positive");
    if (max_epochs == 0) throw ConfigError("training.max_epochs must be positive");
    if (eval_every == 0) throw ConfigError("training.eval_every must be positive");
    if (!(std::isfinite(variance_floor) && variance_floor > 0.0))
        throw ConfigError("training.variance_floor must be positive");
    if (min_stratum_size == 0) throw ConfigError("training.min_stratum_size must be positive");
    if (control_label.empty()) throw ConfigError("training.control_label must not be empty");
}

TrainResult train(GraphVciModel model, const ExpressionDataset& data, const RelationGraph& graph,
                  const SplitAssignment& split, const TrainingConfig& config, const GeneSets& de_genes) {
    config.validate();
    if (split.size() != data.cells()) throw DataError("split assignment does not cover every cell");
    const ModelDims expected = dims_of(data, graph);
    const ModelDims& have = model.dims();
    if (have.genes != expected.genes || have.covariates != expected.covariates ||
        have.treatments != expected.treatments || have.node_features != expected.node_features)
        throw DataError("model dimensions do not match the dataset and graph");

    std::vector<std::size_t> train_cells = cells_with(split, SplitTag::train);
    const std::vector<std::size_t> val_cells = cells_with(split, SplitTag::val);
    if (train_cells.empty()) throw DataError("training split is empty");

    const StratumFits strata =
        fit_stratum_gaussians(data, config.variance_floor, config.min_stratum_size, train_cells);
    const GraphInputs g = prepare_graph(graph, model.config().add_self_loops);

    std::vector<Parameter*> params = model.parameters();
    Adam opt(config.learning_rate);
    std::mt19937_64 rng(config.seed);

    TrainResult result;
    bool have_best = false;
    std::size_t stale = 0;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(train_cells.begin(), train_cells.end(), rng);
        EpochMetrics m;
        m.epoch = epoch;
        for (std::size_t start = 0; start < train_cells.size(); start += config.batch_size) {
            const std::size_t end = std::min(train_cells.size(), start + config.batch_size);
            std::vector<std::size_t> idx(train_cells.begin() + static_cast<std::ptrdiff_t>(start),
                                         train_cells.begin() + static_cast<std::ptrdiff_t>(end));
            Batch batch = make_batch(data, idx);
            ObjectiveNoise noise = draw_noise(batch, model.dims(), model.config().latent_dim,
                                              config.counterfactual_mode, rng);
            for (auto* p : params) p->zero_grad();
            LossTerms terms;
            Tape tape;
            Var loss = objective(tape, model, g, batch, strata, noise, config.weights, &terms);
            if (!std::isfinite(terms.total))
                throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ": loss is " +
                                      std::to_string(terms.total));
            tape.backward(loss);
            opt.step(params);
            const double w = static_cast<double>(idx.size()) / static_cast<double>(train_cells.size());
            m.recon_nll += w * terms.recon_nll;
            m.dist_loss += w * terms.dist_loss;
            m.kl += w * terms.kl;
        }

        const bool eval_now = !val_cells.empty() && (epoch % config.eval_every == 0 || epoch == config.max_epochs);
        bool stop = false;
        if (eval_now) {
            R2Summary s = evaluate_r2(model, g, data, split, SplitTag::val, de_genes, config.control_label);
            m.evaluated = true;
            m.val_r2_all = s.r2_all;
            m.val_r2_de = s.r2_de;
            if (!have_best || s.r2_all > result.best_val_r2) {
                have_best = true;
                result.best_val_r2 = s.r2_all;
                result.best_epoch = epoch;
                result.model = model;
                stale = 0;
            } else if (++stale > config.patience) {
                stop = true;
            }
            if (std::isfinite(config.target_r2) && s.r2_all >= config.target_r2) stop = true;
        }
        result.history.push_back(m);
        if (stop) break;
    }
    if (!have_best) {
        result.model = model;
        result.best_epoch = result.history.size();
    }
    return result;
}

void write_metrics_csv(const std::vector<EpochMetrics>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "epoch,recon_nll,dist_loss,kl,val_r2_all,val_r2_de\n" << std::setprecision(10);
    for (const auto& m : history) {
        out << m.epoch << ',' << m.recon_nll << ',' << m.dist_loss << ',' << m.kl << ',';
        if (m.evaluated) out << m.val_r2_all << ',' << m.val_r2_de;
        else out << ',';
        out << '\n';
    }
}

}  // namespace gvci
