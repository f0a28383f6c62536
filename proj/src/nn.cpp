#include "gvci/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace gvci {

namespace {

Matrix glorot(int in, int out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix w(in, out);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    return w;
}

Matrix activate(Activation act, const Matrix& m) {
    switch (act) {
        case Activation::identity: return m;
        case Activation::relu: return m.cwiseMax(0.0);
        case Activation::tanh: return m.array().tanh();
    }
    return m;
}

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

DenseStack::DenseStack(const std::string& name, const std::vector<int>& widths,
                       const std::vector<Activation>& activations, std::mt19937_64& rng) {
    if (widths.size() < 2 || activations.size() + 1 != widths.size())
        throw std::invalid_argument("DenseStack '" + name + "': widths/activations mismatch");
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        if (widths[l] <= 0 || widths[l + 1] <= 0) throw std::invalid_argument("DenseStack '" + name + "': non-positive width");
        const std::string prefix = name + "." + std::to_string(l);
        layers_.push_back(Layer{Parameter(prefix + ".weight", glorot(widths[l], widths[l + 1], rng)),
                                Parameter(prefix + ".bias", Matrix::Zero(1, widths[l + 1])), activations[l]});
    }
}

Var DenseStack::forward(Tape& tape, const Var& input) {
    if (!layers_.empty() && input.cols() != in_dim())
        throw std::invalid_argument("dense_forward: input width " + std::to_string(input.cols()) + " != " +
                                    std::to_string(in_dim()));
    Var h = input;
    for (auto& layer : layers_) {
        h = add_row(matmul(h, tape.param(layer.weight)), tape.param(layer.bias));
        h = apply(layer.activation, h);
    }
    return h;
}

Matrix DenseStack::forward(const Matrix& input) const {
    if (!layers_.empty() && input.cols() != in_dim()) throw std::invalid_argument("dense_forward: input width mismatch");
    Matrix h = input;
    for (const auto& layer : layers_) {
        Matrix z = h * layer.weight.value;
        z.rowwise() += layer.bias.value.row(0);
        h = activate(layer.activation, z);
    }
    return h;
}

int DenseStack::in_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.value.rows()); }
int DenseStack::out_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.value.cols()); }

void DenseStack::collect(std::vector<Parameter*>& out) {
    for (auto& layer : layers_) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
    }
}

DiagGaussianHead::DiagGaussianHead(const std::string& name, int in_dim, const std::vector<int>& hidden, int out_dim,
                                   Activation hidden_activation, std::mt19937_64& rng) {
    int head_in = in_dim;
    if (!hidden.empty()) {
        std::vector<int> widths{in_dim};
        widths.insert(widths.end(), hidden.begin(), hidden.end());
        trunk_ = DenseStack(name + ".trunk", widths, std::vector<Activation>(hidden.size(), hidden_activation), rng);
        head_in = hidden.back();
    }
    mean_ = DenseStack(name + ".mean", {head_in, out_dim}, {Activation::identity}, rng);
    logvar_ = DenseStack(name + ".logvar", {head_in, out_dim}, {Activation::identity}, rng);
}

GaussianVar DiagGaussianHead::forward(Tape& tape, const Var& input) {
    if (input.cols() != in_dim()) throw std::invalid_argument("gaussian head: input width mismatch");
    Var h = trunk_.empty() ? input : trunk_.forward(tape, input);
    return GaussianVar{mean_.forward(tape, h), clamp(logvar_.forward(tape, h), kLogVarMin, kLogVarMax)};
}

int DiagGaussianHead::in_dim() const { return trunk_.empty() ? mean_.in_dim() : trunk_.in_dim(); }

void DiagGaussianHead::collect(std::vector<Parameter*>& out) {
    trunk_.collect(out);
    mean_.collect(out);
    logvar_.collect(out);
}

Matrix normalize_adjacency(const Matrix& adjacency, bool add_self_loops) {
    if (adjacency.rows() != adjacency.cols()) throw std::invalid_argument("adjacency must be square");
    Matrix a = adjacency;
    if (add_self_loops) a.diagonal().setOnes();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double deg = a.row(i).sum();
        if (deg <= 0.0)
            throw std::invalid_argument("gcn_forward: node " + std::to_string(i) + " is isolated and self-loops are disabled");
        a.row(i) /= deg;
    }
    return a;
}

GraphConvStack::GraphConvStack(const std::string& name, const std::vector<int>& widths,
                               const std::vector<Activation>& activations, std::mt19937_64& rng)
    : activations_(activations) {
    if (widths.size() < 2 || activations.size() + 1 != widths.size())
        throw std::invalid_argument("GraphConvStack '" + name + "': widths/activations mismatch");
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
        weights_.emplace_back(name + "." + std::to_string(l) + ".theta", glorot(widths[l], widths[l + 1], rng));
}

Var GraphConvStack::forward(Tape& tape, const Var& features, const Matrix& normalized_adjacency) {
    if (normalized_adjacency.rows() != features.rows())
        throw std::invalid_argument("gcn_forward: adjacency/feature row mismatch");
    Var h = features;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        h = matmul(matmul(normalized_adjacency, h), tape.param(weights_[l]));
        h = apply(activations_[l], h);
    }
    return h;
}

Matrix GraphConvStack::forward(const Matrix& features, const Matrix& normalized_adjacency) const {
    Matrix h = features;
    for (std::size_t l = 0; l < weights_.size(); ++l) h = activate(activations_[l], normalized_adjacency * h * weights_[l].value);
    return h;
}

int GraphConvStack::out_dim() const { return weights_.empty() ? 0 : static_cast<int>(weights_.back().value.cols()); }

void GraphConvStack::collect(std::vector<Parameter*>& out) {
    for (auto& w : weights_) out.push_back(&w);
}

AttentionParams::AttentionParams(const std::string& name, int query_dim, int key_dim, bool key_dep, std::mt19937_64& rng)
    : query_weight(name + ".query", glorot(query_dim, key_dim, rng)),
      key_weight(name + ".key", key_dep ? glorot(key_dim, key_dim, rng) : Matrix::Zero(key_dim, key_dim)),
      bias(name + ".bias", Matrix::Zero(1, key_dim)),
      key_dependent(key_dep) {}

void AttentionParams::collect(std::vector<Parameter*>& out) {
    out.push_back(&query_weight);
    if (key_dependent) out.push_back(&key_weight);
    out.push_back(&bias);
}

RowVector attention_scores(const RowVector& query, const RowVector& key, const AttentionParams& params) {
    RowVector logits = query * params.query_weight.value + params.bias.value.row(0);
    if (params.key_dependent) logits += key * params.key_weight.value;
    logits.array() -= logits.maxCoeff();
    RowVector w = logits.array().exp();
    return w / w.sum();
}

Var attention_decode(Tape& tape, const Var& queries, const Var& keys, AttentionParams& params) {
    const Eigen::Index d = keys.cols();
    if (params.query_weight.value.rows() != queries.cols() || params.query_weight.value.cols() != d)
        throw std::invalid_argument("attention_decode: dimension mismatch");
    Var qproj = add_row(matmul(queries, tape.param(params.query_weight)), tape.param(params.bias));  // n x d
    Var kproj = params.key_dependent ? matmul(keys, tape.param(params.key_weight))
                                     : tape.constant(Matrix::Zero(keys.rows(), d));  // B x d

    const Matrix& q = qproj.value();
    const Matrix& k = kproj.value();
    const Matrix& y = keys.value();
    const Eigen::Index batch = y.rows();
    const Eigen::Index nodes = q.rows();

    // weights stored as (b * nodes + i) x d
    Matrix weights(batch * nodes, d);
    Matrix out(batch, nodes);
    for (Eigen::Index b = 0; b < batch; ++b) {
        for (Eigen::Index i = 0; i < nodes; ++i) {
            auto w = weights.row(b * nodes + i);
            w = q.row(i) + k.row(b);
            w.array() -= w.maxCoeff();
            w = w.array().exp();
            w /= w.sum();
            out(b, i) = w.dot(y.row(b));
        }
    }

    return tape.record(out, {qproj, kproj, keys}, [qproj, kproj, keys, weights, out](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& y = keys.value();
        const Eigen::Index batch = y.rows();
        const Eigen::Index nodes = out.cols();
        const Eigen::Index d = y.cols();
        Matrix dq = Matrix::Zero(nodes, d);
        Matrix dk = Matrix::Zero(batch, d);
        Matrix dy = Matrix::Zero(batch, d);
        for (Eigen::Index b = 0; b < batch; ++b) {
            for (Eigen::Index i = 0; i < nodes; ++i) {
                const double gi = g(b, i);
                if (gi == 0.0) continue;
                auto w = weights.row(b * nodes + i);
                dy.row(b) += gi * w;
                RowVector dl = gi * w.cwiseProduct((y.row(b).array() - out(b, i)).matrix());
                dq.row(i) += dl;
                dk.row(b) += dl;
            }
        }
        t.accumulate(qproj, dq);
        t.accumulate(kproj, dk);
        t.accumulate(keys, dy);
    });
}

Vector reparam_sample(const Vector& mean, const Vector& variance, const Vector& noise) {
    if (mean.size() != variance.size() || mean.size() != noise.size())
        throw std::invalid_argument("reparam_sample: size mismatch");
    if ((variance.array() < 0.0).any()) throw std::invalid_argument("reparam_sample: negative variance");
    return mean + variance.cwiseSqrt().cwiseProduct(noise);
}

Var reparam_sample(const Var& mean, const Var& logvar, const Matrix& noise) {
    if (noise.rows() != mean.rows() || noise.cols() != mean.cols())
        throw std::invalid_argument("reparam_sample: noise shape mismatch");
    Tape& tape = *mean.tape();
    Var scale = exp(0.5 * logvar);
    return mean + hadamard(scale, tape.constant(noise));
}

double kl_diag_gaussian(const Vector& p_mean, const Vector& p_var, const Vector& q_mean, const Vector& q_var) {
    if (p_mean.size() != p_var.size() || q_mean.size() != q_var.size() || p_mean.size() != q_mean.size())
        throw std::invalid_argument("kl_diag_gaussian: size mismatch");
    if ((p_var.array() <= 0.0).any() || (q_var.array() <= 0.0).any())
        throw std::invalid_argument("kl_diag_gaussian: variances must be positive");
    const auto diff = (p_mean - q_mean).array();
    return 0.5 * ((q_var.array() / p_var.array()).log() + (p_var.array() + diff.square()) / q_var.array() - 1.0).sum();
}

Var kl_diag_gaussian(const Var& p_mean, const Var& p_logvar, const Var& q_mean, const Var& q_logvar) {
    // 0.5 * sum(q_lv - p_lv + (exp(p_lv) + (pm - qm)^2) * exp(-q_lv) - 1)
    Var inv_q = exp(-q_logvar);
    Var term = q_logvar - p_logvar + hadamard(exp(p_logvar) + square(p_mean - q_mean), inv_q);
    Var per_dim = add_scalar(term, -1.0);
    return 0.5 * row_sum(per_dim);
}

double gaussian_log_likelihood(const Vector& x, const Vector& mean, const Vector& variance) {
    if (x.size() != mean.size() || x.size() != variance.size())
        throw std::invalid_argument("gaussian_log_likelihood: size mismatch");
    if ((variance.array() <= 0.0).any()) throw std::invalid_argument("gaussian_log_likelihood: variance must be positive");
    const auto diff = (x - mean).array();
    return -0.5 * (kLog2Pi + variance.array().log() + diff.square() / variance.array()).sum();
}

Var gaussian_log_likelihood(const Var& x, const Var& mean, const Var& logvar) {
    Var lv = logvar.rows() == x.rows() ? logvar : broadcast_rows(logvar, x.rows());
    Var sq = hadamard(square(x - mean), exp(-lv));
    Var per_dim = add_scalar(lv + sq, kLog2Pi);
    return -0.5 * row_sum(per_dim);
}

Var gaussian_log_likelihood(const Var& x, const Matrix& mean, const Matrix& variance) {
    if (mean.rows() != x.rows() || mean.cols() != x.cols() || variance.rows() != x.rows() || variance.cols() != x.cols())
        throw std::invalid_argument("gaussian_log_likelihood: shape mismatch");
    Tape& tape = *x.tape();
    Var sq = hadamard(square(x - tape.constant(mean)), tape.constant(variance.cwiseInverse()));
    Matrix consts = variance.array().log() + kLog2Pi;
    return -0.5 * row_sum(sq + tape.constant(consts));
}

std::size_t SparseMask::nnz() const {
    std::size_t total = 0;
    for (const auto& r : rows) total += r.size();
    return total;
}

bool SparseMask::contains(Eigen::Index r, Eigen::Index c) const {
    const auto& row = rows[static_cast<std::size_t>(r)];
    return std::binary_search(row.begin(), row.end(), c);
}

Matrix SparseMask::to_dense() const {
    Matrix m = Matrix::Zero(size, size);
    for (Eigen::Index r = 0; r < size; ++r)
        for (auto c : rows[static_cast<std::size_t>(r)]) m(r, c) = 1.0;
    return m;
}

Eigen::SparseMatrix<double, Eigen::RowMajor> masked_row_softmax(const Matrix& logits, const SparseMask& mask) {
    if (logits.rows() != mask.size || logits.cols() != mask.size)
        throw std::invalid_argument("masked_row_softmax: shape mismatch");
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(mask.nnz());
    for (Eigen::Index i = 0; i < mask.size; ++i) {
        const auto& cols = mask.rows[static_cast<std::size_t>(i)];
        if (cols.empty()) continue;
        double m = -std::numeric_limits<double>::infinity();
        for (auto j : cols) m = std::max(m, logits(i, j));
        double z = 0.0;
        for (auto j : cols) z += std::exp(logits(i, j) - m);
        for (auto j : cols) triplets.emplace_back(i, j, std::exp(logits(i, j) - m) / z);
    }
    Eigen::SparseMatrix<double, Eigen::RowMajor> out(mask.size, mask.size);
    out.setFromTriplets(triplets.begin(), triplets.end());
    return out;
}

Var masked_softmax_aggregate(const Var& logits, const SparseMask& mask, const Var& h) {
    const Eigen::Index n = mask.size;
    if (logits.rows() != n || logits.cols() != n) throw std::invalid_argument("masked_softmax_aggregate: logits shape");
    if (n == 0 || h.rows() % n != 0) throw std::invalid_argument("masked_softmax_aggregate: h rows not a multiple of n");
    for (const auto& r : mask.rows)
        if (r.empty()) throw std::invalid_argument("masked_softmax_aggregate: empty mask row");

    auto weights = masked_row_softmax(logits.value(), mask);
    const Matrix& hv = h.value();
    const Eigen::Index blocks = hv.rows() / n;
    Matrix out(hv.rows(), hv.cols());
    for (Eigen::Index b = 0; b < blocks; ++b) out.middleRows(b * n, n) = weights * hv.middleRows(b * n, n);

    return logits.tape()->record(std::move(out), {logits, h}, [logits, h, weights, blocks, n](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& hv = h.value();
        if (t.needs_grad(h.id())) {
            Matrix dh(hv.rows(), hv.cols());
            Eigen::SparseMatrix<double, Eigen::RowMajor> wt = weights.transpose();
            for (Eigen::Index b = 0; b < blocks; ++b) dh.middleRows(b * n, n) = wt * g.middleRows(b * n, n);
            t.accumulate(h, dh);
        }
        if (t.needs_grad(logits.id())) {
            // dL_ij = w_ij * (s_ij - sum_k w_ik s_ik), s_ij = sum_b g_(b,i) . h_(b,j)
            Matrix dl = Matrix::Zero(n, n);
            for (Eigen::Index i = 0; i < n; ++i) {
                double avg = 0.0;
                std::vector<std::pair<Eigen::Index, double>> entries;
                for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(weights, i); it; ++it) {
                    double s = 0.0;
                    for (Eigen::Index b = 0; b < blocks; ++b) s += g.row(b * n + i).dot(hv.row(b * n + it.col()));
                    entries.emplace_back(it.col(), s);
                    avg += it.value() * s;
                }
                std::size_t e = 0;
                for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(weights, i); it; ++it, ++e)
                    dl(i, it.col()) = it.value() * (entries[e].second - avg);
            }
            t.accumulate(logits, dl);
        }
    });
}

}  // namespace gvci
