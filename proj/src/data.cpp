#include "gvci/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace gvci {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

std::vector<std::vector<std::string>> read_tsv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open '" + path + "'");
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(split_tabs(line));
    }
    if (rows.empty()) throw DataError("'" + path + "' is empty (missing header)");
    return rows;
}

void check_header(const std::vector<std::string>& header, const std::string& path) {
    std::set<std::string> seen;
    for (const auto& h : header) {
        if (h.empty()) throw DataError("'" + path + "': empty header field");
        if (!seen.insert(h).second) throw DataError("'" + path + "': duplicate header '" + h + "'");
    }
}

double parse_number(const std::string& s, const std::string& path, std::size_t row, std::size_t col) {
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (s.empty() || end != begin + s.size() || !std::isfinite(v)) {
        std::ostringstream msg;
        msg << "'" << path << "': invalid numeric value '" << s << "' at row " << row << ", column " << col;
        throw DataError(msg.str());
    }
    return v;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot write '" + path + "'");
    os.precision(17);
    return os;
}

}  // namespace

CategoricalColumn CategoricalColumn::from_labels(std::string name, const std::vector<std::string>& labels) {
    CategoricalColumn col;
    col.name = std::move(name);
    std::unordered_map<std::string, int> index;
    col.codes.reserve(labels.size());
    for (const auto& l : labels) {
        auto [it, inserted] = index.emplace(l, static_cast<int>(col.levels.size()));
        if (inserted) col.levels.push_back(l);
        col.codes.push_back(it->second);
    }
    return col;
}

int CategoricalColumn::level_index(const std::string& label) const {
    auto it = std::find(levels.begin(), levels.end(), label);
    return it == levels.end() ? -1 : static_cast<int>(it - levels.begin());
}

ExpressionDataset::ExpressionDataset(Matrix outcomes, std::vector<std::string> gene_names,
                                     std::vector<CategoricalColumn> covariates, CategoricalColumn treatment)
    : outcomes_(std::move(outcomes)),
      gene_names_(std::move(gene_names)),
      covariates_(std::move(covariates)),
      treatment_(std::move(treatment)) {
    const auto n_cells = static_cast<std::size_t>(outcomes_.rows());
    if (gene_names_.size() != static_cast<std::size_t>(outcomes_.cols()))
        throw DataError("gene name count does not match outcome columns");
    if (!outcomes_.allFinite()) throw DataError("outcomes contain non-finite values");
    if (treatment_.codes.size() != n_cells)
        throw DataError("dimension mismatch: " + std::to_string(treatment_.codes.size()) + " treatment labels for " +
                        std::to_string(n_cells) + " cells");
    for (const auto& c : covariates_)
        if (c.codes.size() != n_cells)
            throw DataError("dimension mismatch: covariate '" + c.name + "' has " + std::to_string(c.codes.size()) +
                            " labels for " + std::to_string(n_cells) + " cells");

    std::vector<std::string> tuples(n_cells);
    for (std::size_t i = 0; i < n_cells; ++i) {
        std::string key;
        for (std::size_t k = 0; k < covariates_.size(); ++k) {
            if (k) key += '|';
            key += covariates_[k].label(i);
        }
        tuples[i] = std::move(key);
    }
    auto groups = CategoricalColumn::from_labels("covariates", tuples);
    group_codes_ = std::move(groups.codes);
    group_labels_ = std::move(groups.levels);
}

int ExpressionDataset::gene_index(const std::string& name) const {
    auto it = std::find(gene_names_.begin(), gene_names_.end(), name);
    return it == gene_names_.end() ? -1 : static_cast<int>(it - gene_names_.begin());
}

std::size_t RelationGraph::edge_count() const {
    return static_cast<std::size_t>((adjacency.array() != 0.0).count());
}

void RelationGraph::validate() const {
    const auto n = static_cast<Eigen::Index>(node_names.size());
    if (adjacency.rows() != n || adjacency.cols() != n) throw DataError("graph: adjacency must be n x n");
    if (node_features.rows() != n) throw DataError("graph: node feature rows must equal node count");
    if (!((adjacency.array() == 0.0) || (adjacency.array() == 1.0)).all()) throw DataError("graph: adjacency must be binary");
    if (!node_features.allFinite()) throw DataError("graph: node features must be finite");
}

ExpressionDataset load_dataset(const std::string& expression_path, const std::string& covariate_path,
                               const std::string& treatment_path) {
    auto expr = read_tsv(expression_path);
    auto cov = read_tsv(covariate_path);
    auto trt = read_tsv(treatment_path);

    const auto& genes = expr.front();
    check_header(genes, expression_path);
    check_header(cov.front(), covariate_path);
    if (trt.front().size() != 1) throw DataError("'" + treatment_path + "': expected a single header column");
    check_header(trt.front(), treatment_path);

    const std::size_t n_cells = expr.size() - 1;
    if (cov.size() - 1 != n_cells || trt.size() - 1 != n_cells) {
        std::ostringstream msg;
        msg << "dimension mismatch: " << n_cells << " expression rows, " << cov.size() - 1 << " covariate rows, "
            << trt.size() - 1 << " treatment rows";
        throw DataError(msg.str());
    }

    Matrix y(static_cast<Eigen::Index>(n_cells), static_cast<Eigen::Index>(genes.size()));
    for (std::size_t r = 1; r < expr.size(); ++r) {
        if (expr[r].size() != genes.size())
            throw DataError("'" + expression_path + "': row " + std::to_string(r) + " has " +
                            std::to_string(expr[r].size()) + " fields, expected " + std::to_string(genes.size()));
        for (std::size_t c = 0; c < genes.size(); ++c)
            y(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c)) =
                parse_number(expr[r][c], expression_path, r, c + 1);
    }

    std::vector<CategoricalColumn> covariates;
    const auto& cov_names = cov.front();
    for (std::size_t k = 0; k < cov_names.size(); ++k) {
        std::vector<std::string> labels;
        labels.reserve(n_cells);
        for (std::size_t r = 1; r < cov.size(); ++r) {
            if (cov[r].size() != cov_names.size())
                throw DataError("'" + covariate_path + "': row " + std::to_string(r) + " has wrong field count");
            if (cov[r][k].empty()) throw DataError("'" + covariate_path + "': empty label at row " + std::to_string(r));
            labels.push_back(cov[r][k]);
        }
        covariates.push_back(CategoricalColumn::from_labels(cov_names[k], labels));
    }

    std::vector<std::string> t_labels;
    for (std::size_t r = 1; r < trt.size(); ++r) {
        if (trt[r].size() != 1 || trt[r][0].empty())
            throw DataError("'" + treatment_path + "': row " + std::to_string(r) + " must hold exactly one label");
        t_labels.push_back(trt[r][0]);
    }

    return ExpressionDataset(std::move(y), genes, std::move(covariates),
                             CategoricalColumn::from_labels(trt.front()[0], t_labels));
}

void save_dataset(const ExpressionDataset& data, const std::string& expression_path, const std::string& covariate_path,
                  const std::string& treatment_path) {
    auto expr = open_out(expression_path);
    const auto& names = data.gene_names();
    for (std::size_t g = 0; g < names.size(); ++g) expr << (g ? "\t" : "") << names[g];
    expr << '\n';
    const Matrix& y = data.outcomes();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        for (Eigen::Index c = 0; c < y.cols(); ++c) expr << (c ? "\t" : "") << y(r, c);
        expr << '\n';
    }

    auto cov = open_out(covariate_path);
    const auto& covs = data.covariates();
    for (std::size_t k = 0; k < covs.size(); ++k) cov << (k ? "\t" : "") << covs[k].name;
    cov << '\n';
    for (std::size_t i = 0; i < data.cells(); ++i) {
        for (std::size_t k = 0; k < covs.size(); ++k) cov << (k ? "\t" : "") << covs[k].label(i);
        cov << '\n';
    }

    auto trt = open_out(treatment_path);
    trt << data.treatment().name << '\n';
    for (std::size_t i = 0; i < data.cells(); ++i) trt << data.treatment().label(i) << '\n';
}

RelationGraph load_graph(const std::string& edges_path, const std::string& features_path,
                         const std::vector<std::string>& gene_names) {
    std::unordered_map<std::string, Eigen::Index> index;
    for (std::size_t g = 0; g < gene_names.size(); ++g) index.emplace(gene_names[g], static_cast<Eigen::Index>(g));
    const auto n = static_cast<Eigen::Index>(gene_names.size());
    auto lookup = [&](const std::string& name, const std::string& path) {
        auto it = index.find(name);
        if (it == index.end()) throw DataError("'" + path + "': gene '" + name + "' is not in the dataset");
        return it->second;
    };

    RelationGraph g;
    g.node_names = gene_names;
    g.adjacency = Matrix::Zero(n, n);
    auto edges = read_tsv(edges_path);
    const auto& eh = edges.front();
    if (eh.size() != 2) throw DataError("'" + edges_path + "': expected header 'source<TAB>target'");
    for (std::size_t r = 1; r < edges.size(); ++r) {
        if (edges[r].size() != 2) throw DataError("'" + edges_path + "': row " + std::to_string(r) + " must have 2 fields");
        g.adjacency(lookup(edges[r][0], edges_path), lookup(edges[r][1], edges_path)) = 1.0;
    }

    auto feats = read_tsv(features_path);
    check_header(feats.front(), features_path);
    const std::size_t v = feats.front().size() - 1;
    if (feats.front().empty() || v == 0) throw DataError("'" + features_path + "': expected header 'gene<TAB>f1...'");
    if (feats.size() - 1 != gene_names.size())
        throw DataError("'" + features_path + "': " + std::to_string(feats.size() - 1) + " rows for " +
                        std::to_string(gene_names.size()) + " genes");
    g.node_features = Matrix::Zero(n, static_cast<Eigen::Index>(v));
    std::vector<bool> seen(gene_names.size(), false);
    for (std::size_t r = 1; r < feats.size(); ++r) {
        if (feats[r].size() != v + 1) throw DataError("'" + features_path + "': row " + std::to_string(r) + " has wrong field count");
        const auto node = lookup(feats[r][0], features_path);
        if (seen[static_cast<std::size_t>(node)]) throw DataError("'" + features_path + "': duplicate gene '" + feats[r][0] + "'");
        seen[static_cast<std::size_t>(node)] = true;
        for (std::size_t c = 0; c < v; ++c)
            g.node_features(node, static_cast<Eigen::Index>(c)) = parse_number(feats[r][c + 1], features_path, r, c + 2);
    }
    g.validate();
    return g;
}

void save_edges(const RelationGraph& graph, const std::string& edges_path) {
    auto os = open_out(edges_path);
    os << "source\ttarget\n";
    for (Eigen::Index i = 0; i < graph.adjacency.rows(); ++i)
        for (Eigen::Index j = 0; j < graph.adjacency.cols(); ++j)
            if (graph.adjacency(i, j) != 0.0)
                os << graph.node_names[static_cast<std::size_t>(i)] << '\t' << graph.node_names[static_cast<std::size_t>(j)] << '\n';
}

void save_features(const RelationGraph& graph, const std::string& features_path) {
    auto os = open_out(features_path);
    os << "gene";
    for (Eigen::Index c = 0; c < graph.node_features.cols(); ++c) os << "\tf" << c;
    os << '\n';
    for (Eigen::Index i = 0; i < graph.node_features.rows(); ++i) {
        os << graph.node_names[static_cast<std::size_t>(i)];
        for (Eigen::Index c = 0; c < graph.node_features.cols(); ++c) os << '\t' << graph.node_features(i, c);
        os << '\n';
    }
}

Matrix one_hot(const std::vector<int>& codes, std::size_t width) {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(codes.size()), static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < codes.size(); ++i) m(static_cast<Eigen::Index>(i), codes[i]) = 1.0;
    return m;
}

Matrix encode_covariates(const ExpressionDataset& data) {
    Eigen::Index width = 0;
    for (const auto& c : data.covariates()) width += static_cast<Eigen::Index>(c.levels.size());
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(data.cells()), width);
    Eigen::Index offset = 0;
    for (const auto& c : data.covariates()) {
        const auto w = static_cast<Eigen::Index>(c.levels.size());
        m.middleCols(offset, w) = one_hot(c.codes, c.levels.size());
        offset += w;
    }
    return m;
}

Matrix encode_treatments(const ExpressionDataset& data) {
    return one_hot(data.treatment().codes, data.treatment_count());
}

Matrix pseudobulk(const ExpressionDataset& data) {
    const auto t = static_cast<Eigen::Index>(data.treatment_count());
    Matrix sums = Matrix::Zero(t, static_cast<Eigen::Index>(data.genes()));
    Vector counts = Vector::Zero(t);
    for (std::size_t i = 0; i < data.cells(); ++i) {
        sums.row(data.treatment_code(i)) += data.outcomes().row(static_cast<Eigen::Index>(i));
        counts(data.treatment_code(i)) += 1.0;
    }
    for (Eigen::Index k = 0; k < t; ++k) sums.row(k) /= counts(k);
    return sums;
}

std::string to_string(SplitTag tag) {
    switch (tag) {
        case SplitTag::train: return "train";
        case SplitTag::val: return "val";
        case SplitTag::ood: return "ood";
    }
    return "train";
}

std::vector<std::size_t> cells_with(const SplitAssignment& split, SplitTag tag) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == tag) out.push_back(i);
    return out;
}

void save_split(const SplitAssignment& split, const std::string& path) {
    auto os = open_out(path);
    os << "cell\tsplit\n";
    for (std::size_t i = 0; i < split.size(); ++i) os << i << '\t' << to_string(split[i]) << '\n';
}

std::vector<double> treatment_distances(const ExpressionDataset& data) {
    const auto t = data.treatment_count();
    const auto n = static_cast<Eigen::Index>(data.genes());
    RowVector total = data.outcomes().colwise().sum();
    Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(t), n);
    std::vector<double> counts(t, 0.0);
    for (std::size_t i = 0; i < data.cells(); ++i) {
        sums.row(data.treatment_code(i)) += data.outcomes().row(static_cast<Eigen::Index>(i));
        counts[static_cast<std::size_t>(data.treatment_code(i))] += 1.0;
    }
    const double all = static_cast<double>(data.cells());
    std::vector<double> dist(t, 0.0);
    for (std::size_t k = 0; k < t; ++k) {
        const double rest = all - counts[k];
        if (rest <= 0.0) continue;
        RowVector own = sums.row(static_cast<Eigen::Index>(k)) / counts[k];
        RowVector others = (total - sums.row(static_cast<Eigen::Index>(k))) / rest;
        dist[k] = (own - others).norm();
    }
    return dist;
}

OodSelection select_ood(const ExpressionDataset& data, const std::string& covariate, const std::string& category,
                        std::size_t k, const std::vector<std::string>& excluded) {
    const auto& covs = data.covariates();
    auto cit = std::find_if(covs.begin(), covs.end(), [&](const auto& c) { return c.name == covariate; });
    if (cit == covs.end()) throw DataError("select_ood: unknown covariate '" + covariate + "'");
    const int level = cit->level_index(category);
    if (level < 0) throw DataError("select_ood: covariate '" + covariate + "' has no category '" + category + "'");

    std::vector<int> candidates;
    for (std::size_t t = 0; t < data.treatment_count(); ++t) {
        const auto& label = data.treatment().levels[t];
        if (std::find(excluded.begin(), excluded.end(), label) == excluded.end()) candidates.push_back(static_cast<int>(t));
    }

    const auto dist = treatment_distances(data);
    std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        return dist[static_cast<std::size_t>(a)] > dist[static_cast<std::size_t>(b)];
    });
    candidates.resize(std::min(k, candidates.size()));

    OodSelection sel;
    sel.held_out = candidates;
    sel.split.assign(data.cells(), SplitTag::train);
    std::vector<bool> held(data.treatment_count(), false);
    for (int t : candidates) held[static_cast<std::size_t>(t)] = true;
    for (std::size_t i = 0; i < data.cells(); ++i)
        if (cit->codes[i] == level && held[static_cast<std::size_t>(data.treatment_code(i))]) sel.split[i] = SplitTag::ood;
    return sel;
}

SplitAssignment split_train_val(const ExpressionDataset& data, const SplitAssignment& assignment, std::uint64_t seed) {
    if (assignment.size() != data.cells()) throw DataError("split_train_val: assignment size mismatch");
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < assignment.size(); ++i)
        if (assignment[i] != SplitTag::ood) pool.push_back(i);
    if (pool.empty()) throw DataError("split_train_val: no non-ood cells");
    std::mt19937_64 rng(seed);
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t n_val = (pool.size() + 2) / 5;
    SplitAssignment out = assignment;
    for (std::size_t k = 0; k < pool.size(); ++k) out[pool[k]] = k < n_val ? SplitTag::val : SplitTag::train;
    return out;
}

GeneSets select_de_genes(const ExpressionDataset& data, std::size_t per_treatment_count, const std::string& control_label) {
    const int ctrl = data.treatment().level_index(control_label);
    if (ctrl < 0) throw DataError("select_de_genes: control treatment '" + control_label + "' not found");
    const auto t = data.treatment_count();
    const auto n = static_cast<Eigen::Index>(data.genes());
    Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(t), n);
    Matrix sumsq = Matrix::Zero(static_cast<Eigen::Index>(t), n);
    Vector count = Vector::Zero(static_cast<Eigen::Index>(t));
    for (std::size_t i = 0; i < data.cells(); ++i) {
        auto row = data.outcomes().row(static_cast<Eigen::Index>(i));
        const int k = data.treatment_code(i);
        sum.row(k) += row;
        sumsq.row(k) += row.cwiseAbs2();
        count(k) += 1.0;
    }
    const double eps = 1e-8;
    const std::size_t keep = std::min<std::size_t>(per_treatment_count, data.genes());
    GeneSets sets(t);
    RowVector mu_c = sum.row(ctrl) / count(ctrl);
    RowVector var_c = (sumsq.row(ctrl) / count(ctrl) - mu_c.cwiseAbs2()).cwiseMax(0.0);
    for (std::size_t k = 0; k < t; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        RowVector mu = sum.row(kk) / count(kk);
        RowVector var = (sumsq.row(kk) / count(kk) - mu.cwiseAbs2()).cwiseMax(0.0);
        RowVector pooled = ((count(kk) * var + count(ctrl) * var_c) / (count(kk) + count(ctrl))).cwiseSqrt();
        RowVector score = (mu - mu_c).cwiseAbs().array() / (pooled.array() + eps);
        std::vector<int> order(data.genes());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score(a) > score(b); });
        order.resize(keep);
        sets[k] = std::move(order);
    }
    return sets;
}

StratumFits::StratumFits(std::vector<StratumGaussian> strata, std::vector<StratumGaussian> pooled, std::size_t groups)
    : strata_(std::move(strata)), pooled_(std::move(pooled)), groups_(groups) {
    index_.assign(groups_ * pooled_.size(), -1);
    for (std::size_t s = 0; s < strata_.size(); ++s)
        index_[static_cast<std::size_t>(strata_[s].covariate_group) * pooled_.size() +
               static_cast<std::size_t>(strata_[s].treatment)] = static_cast<int>(s);
}

const StratumGaussian& StratumFits::lookup(int covariate_group, int treatment) const {
    if (treatment < 0 || static_cast<std::size_t>(treatment) >= pooled_.size() || pooled_[static_cast<std::size_t>(treatment)].count == 0)
        throw DataError("stratum fits: treatment " + std::to_string(treatment) + " has no fitted cells");
    if (covariate_group >= 0 && static_cast<std::size_t>(covariate_group) < groups_) {
        const int s = index_[static_cast<std::size_t>(covariate_group) * pooled_.size() + static_cast<std::size_t>(treatment)];
        if (s >= 0) return strata_[static_cast<std::size_t>(s)];
    }
    return pooled_[static_cast<std::size_t>(treatment)];
}

namespace {

StratumGaussian fit_one(const ExpressionDataset& data, const std::vector<std::size_t>& members, double floor) {
    StratumGaussian g;
    const auto n = static_cast<Eigen::Index>(data.genes());
    g.mean = Vector::Zero(n);
    g.variance = Vector::Zero(n);
    g.count = members.size();
    for (auto i : members) g.mean += data.outcomes().row(static_cast<Eigen::Index>(i)).transpose();
    g.mean /= static_cast<double>(members.size());
    for (auto i : members) g.variance += (data.outcomes().row(static_cast<Eigen::Index>(i)).transpose() - g.mean).cwiseAbs2();
    g.variance /= static_cast<double>(members.size());
    g.variance = g.variance.cwiseMax(floor);
    return g;
}

}  // namespace

StratumFits fit_stratum_gaussians(const ExpressionDataset& data, double variance_floor, std::size_t min_stratum_size,
                                  const std::vector<std::size_t>& cells) {
    if (!(variance_floor > 0.0)) throw DataError("fit_stratum_gaussians: variance floor must be positive");
    std::vector<std::size_t> use = cells;
    if (use.empty()) {
        use.resize(data.cells());
        std::iota(use.begin(), use.end(), std::size_t{0});
    }
    const auto t = data.treatment_count();
    const auto groups = data.covariate_group_count();
    std::vector<std::vector<std::size_t>> by_treatment(t);
    std::vector<std::vector<std::size_t>> by_stratum(t * groups);
    for (auto i : use) {
        const auto k = static_cast<std::size_t>(data.treatment_code(i));
        by_treatment[k].push_back(i);
        by_stratum[static_cast<std::size_t>(data.covariate_group(i)) * t + k].push_back(i);
    }

    std::vector<StratumGaussian> pooled(t);
    for (std::size_t k = 0; k < t; ++k) {
        if (by_treatment[k].empty())
            throw DataError("fit_stratum_gaussians: treatment '" + data.treatment().levels[k] + "' has no cells");
        pooled[k] = fit_one(data, by_treatment[k], variance_floor);
        pooled[k].treatment = static_cast<int>(k);
        pooled[k].covariate_group = -1;
        pooled[k].pooled = true;
    }

    std::vector<StratumGaussian> strata;
    for (std::size_t c = 0; c < groups; ++c) {
        for (std::size_t k = 0; k < t; ++k) {
            const auto& members = by_stratum[c * t + k];
            if (members.empty()) continue;
            StratumGaussian g;
            if (members.size() >= min_stratum_size) {
                g = fit_one(data, members, variance_floor);
            } else {
                g = pooled[k];
                g.pooled = true;
                g.count = members.size();
            }
            g.covariate_group = static_cast<int>(c);
            g.treatment = static_cast<int>(k);
            strata.push_back(std::move(g));
        }
    }
    return StratumFits(std::move(strata), std::move(pooled), groups);
}

double r2_score(const Vector& truth, const Vector& prediction) {
    if (truth.size() != prediction.size() || truth.size() == 0) throw std::invalid_argument("r2_score: size mismatch");
    const double mu = truth.mean();
    const double ss_tot = (truth.array() - mu).square().sum();
    const double ss_res = (truth - prediction).squaredNorm();
    if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
    return 1.0 - ss_res / ss_tot;
}

}  // namespace gvci
