#include "gvci/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace gvci {

void SynthConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) { throw ConfigError("synth." + field + " " + why); };
    if (genes < 2) fail("genes", "must be >= 2");
    if (cells < 1) fail("cells", "must be >= 1");
    if (treatments < 2) fail("treatments", "must be >= 2");
    if (covariate_levels < 1) fail("covariate_levels", "must be >= 1");
    if (expected_parents < 0.0) fail("expected_parents", "must be >= 0");
    if (coeff_min < 0.0 || coeff_max < coeff_min) fail("coeff_max", "must be >= coeff_min >= 0");
    if (!(noise_scale > 0.0)) fail("noise_scale", "must be > 0");
    if (effect_max < effect_min) fail("effect_max", "must be >= effect_min");
    if (prior_deletion_rate < 0.0 || prior_deletion_rate > 1.0) fail("prior_deletion_rate", "must be in [0, 1]");
    if (feature_noise < 0.0) fail("feature_noise", "must be >= 0");
    if (control_label.empty()) fail("control_label", "must be non-empty");
}

Vector SyntheticScm::propagate(int level, int treatment, const Vector& noise_row) const {
    const auto n = static_cast<Eigen::Index>(genes());
    Vector y = Vector::Zero(n);
    for (int j : order) {
        double parents = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            if (adjacency(i, j) != 0.0) parents += coefficients(i, j) * y(i);
        if (nonlinear) parents = std::tanh(parents);
        y(j) = baselines(level, j) + parents + effects(treatment, j) + noise_row(j);
    }
    return y;
}

namespace {

std::string padded(const std::string& prefix, std::size_t k, std::size_t total) {
    std::string num = std::to_string(k);
    const std::size_t width = std::to_string(total > 0 ? total - 1 : 0).size();
    return prefix + std::string(width > num.size() ? width - num.size() : 0, '0') + num;
}

}  // namespace

SyntheticData generate(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const std::size_t n = cfg.genes;
    const auto ni = static_cast<Eigen::Index>(n);
    SyntheticScm scm;
    scm.nonlinear = cfg.nonlinear;
    scm.order.resize(n);
    std::iota(scm.order.begin(), scm.order.end(), 0);
    std::shuffle(scm.order.begin(), scm.order.end(), rng);

    scm.adjacency = Matrix::Zero(ni, ni);
    scm.coefficients = Matrix::Zero(ni, ni);
    const double p_edge = std::min(1.0, 2.0 * cfg.expected_parents / static_cast<double>(n - 1));
    for (std::size_t b = 1; b < n; ++b) {
        for (std::size_t a = 0; a < b; ++a) {
            if (unit(rng) >= p_edge) continue;
            const int src = scm.order[a];
            const int dst = scm.order[b];
            const double mag = cfg.coeff_min + (cfg.coeff_max - cfg.coeff_min) * unit(rng);
            scm.adjacency(src, dst) = 1.0;
            scm.coefficients(src, dst) = unit(rng) < 0.5 ? -mag : mag;
        }
    }
    // Keep the spread of deep descendants bounded: scale incoming coefficients
    // so their absolute sum stays below one.
    for (Eigen::Index j = 0; j < ni; ++j) {
        const double s = scm.coefficients.col(j).cwiseAbs().sum();
        if (s > 0.9) scm.coefficients.col(j) *= 0.9 / s;
    }

    scm.noise_scale = Vector::Constant(ni, cfg.noise_scale);
    const auto levels = static_cast<Eigen::Index>(cfg.covariate_levels);
    const auto treatments = static_cast<Eigen::Index>(cfg.treatments);
    Vector base(ni);
    for (Eigen::Index j = 0; j < ni; ++j) base(j) = cfg.baseline_scale * normal(rng);
    scm.baselines = Matrix(levels, ni);
    for (Eigen::Index l = 0; l < levels; ++l)
        for (Eigen::Index j = 0; j < ni; ++j) scm.baselines(l, j) = base(j) + (l == 0 ? 0.0 : cfg.covariate_shift * normal(rng));

    scm.effects = Matrix::Zero(treatments, ni);
    const std::size_t targets = std::min(cfg.effect_genes, n);
    std::vector<int> genes_idx(n);
    std::iota(genes_idx.begin(), genes_idx.end(), 0);
    for (Eigen::Index t = 1; t < treatments; ++t) {
        std::shuffle(genes_idx.begin(), genes_idx.end(), rng);
        for (std::size_t k = 0; k < targets; ++k) {
            const double mag = cfg.effect_min + (cfg.effect_max - cfg.effect_min) * unit(rng);
            scm.effects(t, genes_idx[k]) = unit(rng) < 0.5 ? -mag : mag;
        }
    }

    // Balanced stratum assignment, then shuffled.
    std::vector<std::pair<int, int>> slots(cfg.cells);
    for (std::size_t i = 0; i < cfg.cells; ++i)
        slots[i] = {static_cast<int>(i % cfg.covariate_levels),
                    static_cast<int>((i / cfg.covariate_levels) % cfg.treatments)};
    std::shuffle(slots.begin(), slots.end(), rng);

    const auto cells = static_cast<Eigen::Index>(cfg.cells);
    scm.noise = Matrix(cells, ni);
    Matrix y(cells, ni);
    scm.cell_level.resize(cfg.cells);
    scm.cell_treatment.resize(cfg.cells);
    for (Eigen::Index i = 0; i < cells; ++i) {
        for (Eigen::Index j = 0; j < ni; ++j) scm.noise(i, j) = scm.noise_scale(j) * normal(rng);
        const auto [lvl, trt] = slots[static_cast<std::size_t>(i)];
        scm.cell_level[static_cast<std::size_t>(i)] = lvl;
        scm.cell_treatment[static_cast<std::size_t>(i)] = trt;
        y.row(i) = scm.propagate(lvl, trt, scm.noise.row(i).transpose()).transpose();
    }

    std::vector<std::string> gene_names(n);
    for (std::size_t j = 0; j < n; ++j) gene_names[j] = padded("g", j, n);
    std::vector<std::string> level_names(cfg.covariate_levels);
    for (std::size_t l = 0; l < cfg.covariate_levels; ++l) level_names[l] = padded("ct", l, cfg.covariate_levels);
    std::vector<std::string> trt_names(cfg.treatments);
    trt_names[0] = cfg.control_label;
    for (std::size_t t = 1; t < cfg.treatments; ++t) trt_names[t] = padded("t", t, cfg.treatments);

    // Datasets enumerate labels by first occurrence; renumber the model so its
    // level and treatment codes agree with the dataset's.
    std::vector<std::string> level_labels(cfg.cells), trt_labels(cfg.cells);
    for (std::size_t i = 0; i < cfg.cells; ++i) {
        level_labels[i] = level_names[static_cast<std::size_t>(scm.cell_level[i])];
        trt_labels[i] = trt_names[static_cast<std::size_t>(scm.cell_treatment[i])];
    }
    CategoricalColumn cov = CategoricalColumn::from_labels(cfg.covariate_name, level_labels);
    CategoricalColumn trt = CategoricalColumn::from_labels("treatment", trt_labels);
    auto renumber = [](Matrix& table, const std::vector<std::string>& names, const CategoricalColumn& col) {
        Matrix out = Matrix::Zero(table.rows(), table.cols());
        std::vector<std::string> seen = col.levels;
        for (const auto& name : names)
            if (std::find(seen.begin(), seen.end(), name) == seen.end()) seen.push_back(name);
        for (std::size_t k = 0; k < seen.size(); ++k) {
            const auto from = std::find(names.begin(), names.end(), seen[k]) - names.begin();
            out.row(static_cast<Eigen::Index>(k)) = table.row(from);
        }
        table = std::move(out);
        return seen;
    };
    cov.levels = renumber(scm.baselines, level_names, cov);
    trt.levels = renumber(scm.effects, trt_names, trt);
    scm.cell_level = cov.codes;
    scm.cell_treatment = trt.codes;

    // Node features: structural role plus noise.
    const auto v = static_cast<Eigen::Index>(4 + cfg.feature_noise_dims);
    Matrix feats(ni, v);
    for (Eigen::Index j = 0; j < ni; ++j) {
        feats(j, 0) = scm.adjacency.col(j).sum();
        feats(j, 1) = scm.adjacency.row(j).sum();
        feats(j, 2) = scm.coefficients.col(j).cwiseAbs().sum();
        feats(j, 3) = scm.coefficients.row(j).cwiseAbs().sum();
    }
    for (Eigen::Index c = 0; c < 4; ++c) {
        const double mu = feats.col(c).mean();
        const double sd = std::sqrt((feats.col(c).array() - mu).square().mean());
        feats.col(c) = (feats.col(c).array() - mu) / (sd > 0.0 ? sd : 1.0);
        for (Eigen::Index j = 0; j < ni; ++j) feats(j, c) += cfg.feature_noise * normal(rng);
    }
    for (Eigen::Index c = 4; c < v; ++c)
        for (Eigen::Index j = 0; j < ni; ++j) feats(j, c) = normal(rng);

    RelationGraph truth{gene_names, feats, scm.adjacency};

    // Prior: delete a fraction of true edges, add the same number of false ones.
    RelationGraph prior = truth;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> edges, non_edges;
    for (Eigen::Index i = 0; i < ni; ++i)
        for (Eigen::Index j = 0; j < ni; ++j) {
            if (i == j) continue;
            (scm.adjacency(i, j) != 0.0 ? edges : non_edges).emplace_back(i, j);
        }
    std::shuffle(edges.begin(), edges.end(), rng);
    std::shuffle(non_edges.begin(), non_edges.end(), rng);
    const auto n_delete = static_cast<std::size_t>(std::llround(cfg.prior_deletion_rate * static_cast<double>(edges.size())));
    for (std::size_t k = 0; k < n_delete && k < edges.size(); ++k) prior.adjacency(edges[k].first, edges[k].second) = 0.0;
    for (std::size_t k = 0; k < n_delete && k < non_edges.size(); ++k)
        prior.adjacency(non_edges[k].first, non_edges[k].second) = 1.0;

    ExpressionDataset data(std::move(y), gene_names, {cov}, trt);
    return SyntheticData{std::move(data), std::move(truth), std::move(prior), std::move(scm)};
}

SyntheticScm make_scm(const Matrix& adjacency, const Matrix& coefficients, const Vector& noise_scale,
                      const Matrix& effects, const Matrix& baselines, bool nonlinear) {
    const Eigen::Index n = adjacency.rows();
    if (adjacency.cols() != n || coefficients.rows() != n || coefficients.cols() != n || noise_scale.size() != n ||
        effects.cols() != n || baselines.cols() != n)
        throw ConfigError("scm: table shapes disagree");
    if ((noise_scale.array() <= 0.0).any()) throw ConfigError("scm: noise scales must be positive");
    // Kahn's algorithm; leftover nodes sit on a cycle.
    std::vector<int> indegree(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (adjacency(i, j) != 0.0) ++indegree[static_cast<std::size_t>(j)];
    std::vector<int> order, ready;
    for (Eigen::Index j = n - 1; j >= 0; --j)
        if (indegree[static_cast<std::size_t>(j)] == 0) ready.push_back(static_cast<int>(j));
    while (!ready.empty()) {
        const int i = ready.back();
        ready.pop_back();
        order.push_back(i);
        for (Eigen::Index j = n - 1; j >= 0; --j)
            if (adjacency(i, j) != 0.0 && --indegree[static_cast<std::size_t>(j)] == 0) ready.push_back(static_cast<int>(j));
    }
    if (static_cast<Eigen::Index>(order.size()) != n) throw ConfigError("scm: adjacency contains a cycle");

    SyntheticScm scm;
    scm.order = std::move(order);
    scm.adjacency = (adjacency.array() != 0.0).cast<double>();
    scm.coefficients = coefficients.cwiseProduct(scm.adjacency);
    scm.noise_scale = noise_scale;
    scm.effects = effects;
    scm.baselines = baselines;
    scm.nonlinear = nonlinear;
    scm.noise = Matrix(0, n);
    return scm;
}

Matrix sample_cells(SyntheticScm& scm, const std::vector<int>& levels, const std::vector<int>& treatments,
                    std::uint64_t seed) {
    if (levels.size() != treatments.size()) throw DataError("sample_cells: level and treatment counts differ");
    const auto n = static_cast<Eigen::Index>(scm.genes());
    const auto cells = static_cast<Eigen::Index>(levels.size());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    scm.noise = Matrix(cells, n);
    scm.cell_level = levels;
    scm.cell_treatment = treatments;
    Matrix y(cells, n);
    for (Eigen::Index i = 0; i < cells; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (levels[k] < 0 || levels[k] >= scm.baselines.rows() || treatments[k] < 0 || treatments[k] >= scm.effects.rows())
            throw DataError("sample_cells: unknown level or treatment at cell " + std::to_string(i));
        for (Eigen::Index j = 0; j < n; ++j) scm.noise(i, j) = scm.noise_scale(j) * normal(rng);
        y.row(i) = scm.propagate(levels[k], treatments[k], scm.noise.row(i).transpose()).transpose();
    }
    return y;
}

Vector true_counterfactual(const SyntheticScm& scm, std::size_t cell, int treatment) {
    if (cell >= scm.cell_level.size()) throw DataError("true_counterfactual: cell " + std::to_string(cell) + " is not from this model");
    if (treatment < 0 || treatment >= scm.effects.rows()) throw DataError("true_counterfactual: unknown treatment");
    return scm.propagate(scm.cell_level[cell], treatment, scm.noise.row(static_cast<Eigen::Index>(cell)).transpose());
}

Vector true_counterfactual(const SyntheticScm& scm, std::size_t cell, const Vector& observed, int treatment) {
    const Vector factual = true_counterfactual(scm, cell, scm.cell_level.empty() ? 0 : scm.cell_treatment.at(cell));
    if (observed.size() != factual.size() || (observed - factual).cwiseAbs().maxCoeff() > 1e-9)
        throw DataError("true_counterfactual: observation does not match cell " + std::to_string(cell));
    return true_counterfactual(scm, cell, treatment);
}

Vector true_marginal(const SyntheticScm& scm, int treatment, int level, std::size_t mc_samples) {
    if (treatment < 0 || treatment >= scm.effects.rows()) throw DataError("true_marginal: unknown treatment");
    if (level < 0 || level >= scm.baselines.rows()) throw DataError("true_marginal: unknown covariate level");
    const auto n = static_cast<Eigen::Index>(scm.genes());
    if (!scm.nonlinear) return scm.propagate(level, treatment, Vector::Zero(n));
    std::mt19937_64 rng(0x5eedULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector acc = Vector::Zero(n);
    Vector e(n);
    for (std::size_t s = 0; s < mc_samples; ++s) {
        for (Eigen::Index j = 0; j < n; ++j) e(j) = scm.noise_scale(j) * normal(rng);
        acc += scm.propagate(level, treatment, e);
    }
    return acc / static_cast<double>(mc_samples);
}

std::string scm_to_json(const SyntheticScm& scm, const ExpressionDataset& data) {
    using nlohmann::json;
    json j;
    const auto& genes = data.gene_names();
    j["genes"] = genes;
    j["nonlinear"] = scm.nonlinear;
    j["topological_order"] = scm.order;
    json edges = json::array();
    for (Eigen::Index i = 0; i < scm.adjacency.rows(); ++i)
        for (Eigen::Index k = 0; k < scm.adjacency.cols(); ++k)
            if (scm.adjacency(i, k) != 0.0)
                edges.push_back({{"source", genes[static_cast<std::size_t>(i)]},
                                 {"target", genes[static_cast<std::size_t>(k)]},
                                 {"coefficient", scm.coefficients(i, k)}});
    j["edges"] = edges;
    j["noise_scale"] = std::vector<double>(scm.noise_scale.data(), scm.noise_scale.data() + scm.noise_scale.size());
    auto rows = [](const Matrix& m) {
        std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r)].push_back(m(r, c));
        return out;
    };
    json effects;
    for (std::size_t t = 0; t < data.treatment().levels.size(); ++t)
        effects[data.treatment().levels[t]] = rows(scm.effects)[t];
    j["effects"] = effects;
    json baselines;
    const auto& levels = data.covariates().front().levels;
    for (std::size_t l = 0; l < levels.size(); ++l) baselines[levels[l]] = rows(scm.baselines)[l];
    j["baselines"] = baselines;
    return j.dump(2);
}

}  // namespace gvci
