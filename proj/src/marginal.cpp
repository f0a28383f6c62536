#include "gvci/marginal.hpp"

#include "gvci/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>

namespace gvci {

std::string to_string(EstimatorMethod m) { return m == EstimatorMethod::robust ? "robust" : "empirical_mean"; }

namespace {

void check_stratum(const StratumPredictions& s) {
    if (s.outcomes.rows() == 0) throw DataError("marginal estimate: covariate stratum is empty");
    if (s.predictions.rows() != s.outcomes.rows() || s.predictions.cols() != s.outcomes.cols() ||
        static_cast<Eigen::Index>(s.treated.size()) != s.outcomes.rows())
        throw std::invalid_argument("marginal estimate: stratum arrays disagree in shape");
}

MarginalEstimate base_estimate(const StratumPredictions& s, EstimatorMethod m) {
    MarginalEstimate e;
    e.treatment = s.treatment;
    e.covariate_group = s.covariate_group;
    e.method = m;
    e.n_c = static_cast<std::size_t>(s.outcomes.rows());
    for (bool t : s.treated) e.n_ac += t;
    e.estimate = s.predictions.colwise().mean().transpose();
    return e;
}

}  // namespace

MarginalEstimate empirical_mean_estimate(const StratumPredictions& s) {
    check_stratum(s);
    return base_estimate(s, EstimatorMethod::empirical_mean);
}

MarginalEstimate robust_estimate(const StratumPredictions& s) {
    check_stratum(s);
    MarginalEstimate e = base_estimate(s, EstimatorMethod::robust);
    if (e.n_ac == 0)
        throw DataError("robust estimate: no cell of the covariate group received the treatment; use the empirical "
                        "mean estimator instead");
    Vector residual = Vector::Zero(s.outcomes.cols());
    for (Eigen::Index k = 0; k < s.outcomes.rows(); ++k)
        if (s.treated[static_cast<std::size_t>(k)])
            residual += (s.outcomes.row(k) - s.predictions.row(k)).transpose();
    e.estimate += residual / static_cast<double>(e.n_ac);
    return e;
}

StratumPredictions stratum_predictions(GraphVciModel& model, const GraphInputs& graph, const ExpressionDataset& data,
                                       int treatment, int covariate_group, const std::vector<std::size_t>& cells,
                                       const PredictionOptions& options) {
    if (treatment < 0 || static_cast<std::size_t>(treatment) >= data.treatment_count())
        throw DataError("marginal estimate: unknown treatment code " + std::to_string(treatment));
    std::vector<std::size_t> members;
    auto consider = [&](std::size_t i) {
        if (data.covariate_group(i) == covariate_group) members.push_back(i);
    };
    if (cells.empty())
        for (std::size_t i = 0; i < data.cells(); ++i) consider(i);
    else
        for (auto i : cells) consider(i);
    if (members.empty())
        throw DataError("marginal estimate: covariate group " + std::to_string(covariate_group) + " has no cells");

    StratumPredictions s;
    s.treatment = treatment;
    s.covariate_group = covariate_group;
    const Batch batch = make_batch(data, members);
    s.outcomes = batch.y;
    for (int t : batch.t) s.treated.push_back(t == treatment);

    if (!options.sample_latent) {
        s.predictions = predict_counterfactual(model, graph, data, members, std::vector<int>(members.size(), treatment));
        return s;
    }
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix noise(batch.y.rows(), model.config().latent_dim);
    for (Eigen::Index k = 0; k < noise.size(); ++k) noise(k) = normal(rng);
    const auto r = static_cast<std::size_t>(model.dims().treatments);
    Tape tape;
    Var zg = graph_embedding(tape, model, graph);
    LatentVar z = encode(tape, model, zg, tape.constant(batch.y), batch.x, one_hot(batch.t, r), &noise);
    DecodedVar d = decode(tape, model, zg, z.sample, one_hot(std::vector<int>(members.size(), treatment), r), nullptr);
    s.predictions = d.mean.value();
    return s;
}

MarginalEstimate robust_estimate(GraphVciModel& model, const GraphInputs& graph, const ExpressionDataset& data,
                                 int treatment, int covariate_group, const std::vector<std::size_t>& cells,
                                 const PredictionOptions& options) {
    return robust_estimate(stratum_predictions(model, graph, data, treatment, covariate_group, cells, options));
}

MarginalEstimate empirical_mean_estimate(GraphVciModel& model, const GraphInputs& graph,
                                         const ExpressionDataset& data, int treatment, int covariate_group,
                                         const std::vector<std::size_t>& cells, const PredictionOptions& options) {
    return empirical_mean_estimate(stratum_predictions(model, graph, data, treatment, covariate_group, cells, options));
}

Vector efficient_influence(const InfluenceObservation& obs, const Vector& prediction, const Vector& conditional_mean,
                           double p_group_treatment, double p_group, const Vector& psi) {
    auto valid = [](double p) { return std::isfinite(p) && p > 0.0 && p <= 1.0; };
    if (!valid(p_group_treatment) || !valid(p_group))
        throw std::invalid_argument("efficient_influence: probabilities must lie in (0, 1]");
    const auto n = obs.y.size();
    if (prediction.size() != n || conditional_mean.size() != n || psi.size() != n)
        throw std::invalid_argument("efficient_influence: size mismatch");
    Vector out = Vector::Zero(n);
    if (!obs.in_group) return out;
    if (obs.treated) out += (obs.y - conditional_mean) / p_group_treatment;
    out += (prediction - psi) / p_group;
    return out;
}

namespace {

Vector mean_of(const ExpressionDataset& data, const std::vector<std::size_t>& cells) {
    Vector m = Vector::Zero(static_cast<Eigen::Index>(data.genes()));
    for (auto c : cells) m += data.outcomes().row(static_cast<Eigen::Index>(c)).transpose();
    return m / static_cast<double>(cells.size());
}

Vector pick(const Vector& v, const std::vector<int>& idx) {
    Vector out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = v(idx[k]);
    return out;
}

}  // namespace

ComparisonResult compare_estimators(GraphVciModel& model, const GraphInputs& graph, const ExpressionDataset& data,
                                    const std::vector<std::size_t>& estimate_cells,
                                    const std::vector<std::size_t>& reference_cells, const GeneSets& de_genes,
                                    const StratumList& strata, const PredictionOptions& options) {
    if (estimate_cells.empty()) throw DataError("estimator comparison: no cells to estimate from");
    if (reference_cells.empty()) throw DataError("estimator comparison: reference split is empty");
    const auto groups = data.covariate_group_count();
    const auto treatments = data.treatment_count();

    // cells per (group, treatment) in each split
    auto index = [&](const std::vector<std::size_t>& cells) {
        std::vector<std::vector<std::size_t>> by(groups * treatments);
        for (auto c : cells)
            by[static_cast<std::size_t>(data.covariate_group(c)) * treatments +
               static_cast<std::size_t>(data.treatment_code(c))]
                .push_back(c);
        return by;
    };
    const auto est = index(estimate_cells);
    const auto ref = index(reference_cells);

    std::vector<std::pair<int, int>> pairs;  // (group, treatment)
    if (strata.empty()) {
        for (std::size_t g = 0; g < groups; ++g)
            for (std::size_t a = 0; a < treatments; ++a) pairs.emplace_back(static_cast<int>(g), static_cast<int>(a));
    } else {
        const auto& labels = data.covariate_group_labels();
        for (const auto& [trt, grp] : strata) {
            const int a = data.treatment().level_index(trt);
            const auto it = std::find(labels.begin(), labels.end(), grp);
            if (a < 0) throw DataError("estimator stratum names unknown treatment '" + trt + "'");
            if (it == labels.end()) throw DataError("estimator stratum names unknown covariate group '" + grp + "'");
            pairs.emplace_back(static_cast<int>(it - labels.begin()), a);
        }
    }

    ComparisonResult result;
    double sums[2][2] = {{0, 0}, {0, 0}};  // [method][gene set]
    for (const auto& [g, a] : pairs) {
        const std::size_t slot = static_cast<std::size_t>(g) * treatments + static_cast<std::size_t>(a);
        const std::string name = data.treatment().levels[static_cast<std::size_t>(a)] + " in " +
                                 data.covariate_group_labels()[static_cast<std::size_t>(g)];
        if (ref[slot].empty()) {
            result.skipped.push_back(name + ": absent from the reference split");
            continue;
        }
        if (est[slot].empty()) {
            result.skipped.push_back(name + ": no treated cells to estimate from");
            continue;
        }
        const StratumPredictions s = stratum_predictions(model, graph, data, a, g, estimate_cells, options);
        const MarginalEstimate robust = robust_estimate(s);
        const MarginalEstimate plain = empirical_mean_estimate(s);
        const Vector truth = mean_of(data, ref[slot]);
        const auto& de = de_genes.size() > static_cast<std::size_t>(a) ? de_genes[static_cast<std::size_t>(a)]
                                                                        : std::vector<int>{};
        const MarginalEstimate* both[2] = {&robust, &plain};
        for (int m = 0; m < 2; ++m) {
            const double all = r2_score(truth, both[m]->estimate);
            sums[m][0] += all;
            sums[m][1] += de.empty() ? all : r2_score(pick(truth, de), pick(both[m]->estimate, de));
        }
        result.estimates.push_back(robust);
        result.estimates.push_back(plain);
        ++result.strata;
    }
    if (result.strata == 0) throw DataError("estimator comparison: no stratum present in both splits");
    const char* methods[2] = {"robust", "empirical_mean"};
    const char* sets[2] = {"all", "de"};
    for (int m = 0; m < 2; ++m)
        for (int s = 0; s < 2; ++s)
            result.rows.push_back({methods[m], sets[s], sums[m][s] / static_cast<double>(result.strata), 0.0});
    return result;
}

std::vector<ComparisonRow> summarize_runs(const std::vector<ComparisonResult>& runs) {
    if (runs.empty()) return {};
    std::vector<ComparisonRow> out = runs.front().rows;
    for (std::size_t r = 0; r < out.size(); ++r) {
        double mean = 0.0;
        for (const auto& run : runs) mean += run.rows.at(r).r2;
        mean /= static_cast<double>(runs.size());
        double ss = 0.0;
        for (const auto& run : runs) ss += (run.rows.at(r).r2 - mean) * (run.rows.at(r).r2 - mean);
        out[r].r2 = mean;
        out[r].r2_std = runs.size() > 1 ? std::sqrt(ss / static_cast<double>(runs.size() - 1)) : 0.0;
    }
    return out;
}

void write_marginals_tsv(const std::vector<MarginalEstimate>& estimates, const ExpressionDataset& data,
                         const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "treatment\tcovariate\tmethod";
    for (const auto& g : data.gene_names()) out << '\t' << g;
    out << '\n' << std::setprecision(17);
    for (const auto& e : estimates) {
        out << data.treatment().levels[static_cast<std::size_t>(e.treatment)] << '\t'
            << data.covariate_group_labels()[static_cast<std::size_t>(e.covariate_group)] << '\t' << to_string(e.method);
        for (Eigen::Index j = 0; j < e.estimate.size(); ++j) out << '\t' << e.estimate(j);
        out << '\n';
    }
}

void write_comparison_csv(const std::vector<ComparisonRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "method,gene_set,r2,r2_std\n" << std::setprecision(17);
    for (const auto& r : rows) out << r.method << ',' << r.gene_set << ',' << r.r2 << ',' << r.r2_std << '\n';
}

}  // namespace gvci
