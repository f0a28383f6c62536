#include "gvci/refinement.hpp"

#include "gvci/errors.hpp"
#include "gvci/optim.hpp"
#include "gvci/seed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace gvci {

void RefinementConfig::validate() const {
    auto prob = [](double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; };
    if (!prob(r_l)) throw ConfigError("refinement.r_l must lie in [0, 1]");
    if (!prob(r_h)) throw ConfigError("refinement.r_h must lie in [0, 1]");
    if (!(r_l < r_h)) throw ConfigError("refinement.r_l must be smaller than refinement.r_h");
    if (!(std::isfinite(omega) && omega >= 0.0)) throw ConfigError("refinement.omega must be non-negative");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("refinement.alpha must lie in (0, 1)");
    if (epochs == 0) throw ConfigError("refinement.epochs must be positive");
    if (!(std::isfinite(learning_rate) && learning_rate > 0.0))
        throw ConfigError("refinement.learning_rate must be positive");
    if (batch_size == 0) throw ConfigError("refinement.batch_size must be positive");
    if (hidden <= 0) throw ConfigError("refinement.hidden must be positive");
    if (layers == 0) throw ConfigError("refinement.layers must be positive");
}

Matrix prior_with_self_loops(const Matrix& adjacency) {
    Matrix e = (adjacency.array() != 0.0).cast<double>();
    e.diagonal().setOnes();
    return e;
}

SparseMask sample_keep_mask(const Matrix& prior, double r_l, double r_h, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SparseMask m;
    m.size = prior.rows();
    m.rows.resize(static_cast<std::size_t>(m.size));
    for (Eigen::Index i = 0; i < m.size; ++i) {
        auto& row = m.rows[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < m.size; ++j) {
            // one draw per entry keeps the stream layout independent of the rates
            const double draw = u(rng);
            if (i == j) {
                row.push_back(j);
                continue;
            }
            const double keep = prior(i, j) != 0.0 ? 1.0 - r_l : 1.0 - r_h;
            if (draw < keep) row.push_back(j);
        }
    }
    return m;
}

Var masked_softmax_conv(const Var& h, const Var& logits, const SparseMask& mask, const Var& theta, Activation act) {
    return apply(act, matmul(masked_softmax_aggregate(logits, mask, h), theta));
}

Matrix build_node_inputs(const RowVector& y, const Matrix& features, const RowVector& x) {
    const Eigen::Index n = features.rows();
    if (y.size() != n) throw std::invalid_argument("build_node_inputs: expression length does not match node count");
    Matrix o(n, 1 + features.cols() + x.size());
    o.col(0) = y.transpose();
    o.middleCols(1, features.cols()) = features;
    if (x.size() > 0) o.rightCols(x.size()) = x.replicate(n, 1);
    return o;
}

Var refinement_objective(const Var& prediction, const Matrix& y, const Var& weights, double omega) {
    const Eigen::Index cells = y.rows();
    const Eigen::Index n = y.cols();
    if (prediction.rows() != cells * n || prediction.cols() != 1)
        throw std::invalid_argument("refinement_objective: prediction shape");
    Matrix target(cells * n, 1);
    for (Eigen::Index b = 0; b < cells; ++b) target.middleRows(b * n, n) = y.row(b).transpose();
    Tape& tape = *prediction.tape();
    Var sq = sum(square(prediction - tape.constant(target)));
    Var loss = (1.0 / static_cast<double>(cells)) * sq;
    if (omega != 0.0) loss = loss + (omega / static_cast<double>(weights.rows() * weights.cols())) * sum(weights);
    return loss;
}

Matrix rescale_weights(const Matrix& logits) {
    return logits.unaryExpr([](double l) { return 1.0 / (1.0 + std::exp(-l)); });
}

Matrix threshold_graph(const Matrix& weights, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("refinement.alpha must lie in (0, 1)");
    Matrix e = (weights.array() > alpha).cast<double>();
    e.diagonal().setZero();
    return e;
}

RefinementState::RefinementState(const Matrix& prior_adjacency, int input_dim, const RefinementConfig& config)
    : logits("refine.logits", Matrix::Zero(prior_adjacency.rows(), prior_adjacency.cols())),
      prior(prior_with_self_loops(prior_adjacency)) {
    std::mt19937_64 rng(config.seed);
    std::vector<int> widths{input_dim};
    std::vector<Activation> acts;
    for (std::size_t l = 0; l + 1 < config.layers; ++l) {
        widths.push_back(config.hidden);
        acts.push_back(Activation::relu);
    }
    widths.push_back(1);
    acts.push_back(Activation::identity);
    g = GraphConvStack("refine.g", widths, acts, rng);
}

std::vector<Parameter*> RefinementState::parameters() {
    std::vector<Parameter*> out{&logits};
    g.collect(out);
    return out;
}

Var RefinementState::forward(Tape& tape, const Matrix& inputs, const SparseMask& mask) {
    Var l = tape.param(logits);
    Var h = tape.constant(inputs);
    auto& weights = g.weights();
    for (std::size_t k = 0; k < weights.size(); ++k)
        h = masked_softmax_conv(h, l, mask, tape.param(weights[k]), g.activations()[k]);
    return h;
}

RefinementResult refine(const ExpressionDataset& data, const RelationGraph& graph, const RefinementConfig& config,
                        const std::vector<std::size_t>& cells_in) {
    config.validate();
    graph.validate();
    if (graph.nodes() != data.genes())
        throw DataError("graph has " + std::to_string(graph.nodes()) + " nodes but the dataset has " +
                        std::to_string(data.genes()) + " genes");
    std::vector<std::size_t> cells = cells_in;
    if (cells.empty()) {
        cells.resize(data.cells());
        std::iota(cells.begin(), cells.end(), std::size_t{0});
    }
    if (cells.empty()) throw DataError("refinement needs at least one cell");

    const Matrix x_all = encode_covariates(data);
    const Matrix& features = graph.node_features;
    const Eigen::Index n = static_cast<Eigen::Index>(data.genes());
    const Eigen::Index width = 1 + features.cols() + x_all.cols();

    RefinementState state(graph.adjacency, static_cast<int>(width), config);
    std::vector<Parameter*> params = state.parameters();
    Adam opt(config.learning_rate);
    std::mt19937_64 rng(derive_seed(config.seed, seed_stream::refine_sampling));

    RefinementResult result;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(cells.begin(), cells.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < cells.size(); start += config.batch_size) {
            const std::size_t end = std::min(cells.size(), start + config.batch_size);
            const auto b = static_cast<Eigen::Index>(end - start);
            Matrix inputs(b * n, width);
            Matrix y(b, n);
            for (Eigen::Index k = 0; k < b; ++k) {
                const auto c = static_cast<Eigen::Index>(cells[start + static_cast<std::size_t>(k)]);
                y.row(k) = data.outcomes().row(c);
                inputs.middleRows(k * n, n) = build_node_inputs(y.row(k), features, x_all.row(c));
            }
            SparseMask mask = sample_keep_mask(state.prior, config.r_l, config.r_h, rng);

            for (auto* p : params) p->zero_grad();
            Tape tape;
            Var pred = state.forward(tape, inputs, mask);
            Var w = sigmoid(tape.param(state.logits));
            Var loss = refinement_objective(pred, y, w, config.omega);
            if (config.penalize_diagonal) {
                Matrix eye = Matrix::Identity(n, n);
                loss = loss + (config.omega / static_cast<double>(n)) * sum(hadamard(w, tape.constant(eye)));
            }
            if (!std::isfinite(loss.scalar()))
                throw DivergenceError("graph refinement diverged at epoch " + std::to_string(epoch));
            tape.backward(loss);
            opt.step(params);
            epoch_loss += loss.scalar() * static_cast<double>(b) / static_cast<double>(cells.size());
        }
        result.epoch_loss.push_back(epoch_loss);
    }

    result.weights = rescale_weights(state.logits.value);
    result.refined.node_names = graph.node_names;
    result.refined.node_features = graph.node_features;
    result.refined.adjacency = threshold_graph(result.weights, config.alpha);
    return result;
}

void save_edge_weights(const Matrix& weights, const std::vector<std::string>& names, std::size_t top_k,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "source\ttarget\tweight\n" << std::setprecision(17);
    const Eigen::Index n = weights.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<Eigen::Index> cols;
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j) cols.push_back(j);
        if (top_k > 0) {
            std::stable_sort(cols.begin(), cols.end(), [&](Eigen::Index a, Eigen::Index b) { return weights(i, a) > weights(i, b); });
            if (cols.size() > top_k) cols.resize(top_k);
        }
        for (auto j : cols)
            out << names[static_cast<std::size_t>(i)] << '\t' << names[static_cast<std::size_t>(j)] << '\t' << weights(i, j)
                << '\n';
    }
}

double auprc(const Matrix& scores, const Matrix& truth) {
    if (scores.rows() != truth.rows() || scores.cols() != truth.cols())
        throw std::invalid_argument("auprc: shape mismatch");
    std::vector<std::pair<double, bool>> items;
    std::size_t positives = 0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i)
        for (Eigen::Index j = 0; j < scores.cols(); ++j) {
            if (i == j) continue;
            const bool pos = truth(i, j) != 0.0;
            positives += pos;
            items.emplace_back(scores(i, j), pos);
        }
    if (positives == 0) throw std::invalid_argument("auprc: no positive entries");
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    double ap = 0.0;
    std::size_t tp = 0, seen = 0;
    for (std::size_t k = 0; k < items.size();) {
        std::size_t block_tp = 0, e = k;
        while (e < items.size() && items[e].first == items[k].first) block_tp += items[e++].second;
        tp += block_tp;
        seen = e;
        ap += static_cast<double>(block_tp) / static_cast<double>(positives) * static_cast<double>(tp) /
              static_cast<double>(seen);
        k = e;
    }
    return ap;
}

Matrix abs_correlation(const ExpressionDataset& data, const std::vector<std::size_t>& cells) {
    Matrix y;
    if (cells.empty()) {
        y = data.outcomes();
    } else {
        y.resize(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(data.genes()));
        for (std::size_t k = 0; k < cells.size(); ++k)
            y.row(static_cast<Eigen::Index>(k)) = data.outcomes().row(static_cast<Eigen::Index>(cells[k]));
    }
    Matrix centered = y.rowwise() - y.colwise().mean();
    Matrix cov = centered.transpose() * centered;
    Vector sd = cov.diagonal().cwiseSqrt();
    Matrix corr(cov.rows(), cov.cols());
    for (Eigen::Index i = 0; i < cov.rows(); ++i)
        for (Eigen::Index j = 0; j < cov.cols(); ++j) {
            const double d = sd(i) * sd(j);
            corr(i, j) = d > 0.0 ? std::abs(cov(i, j)) / d : 0.0;
        }
    return corr;
}

}  // namespace gvci
