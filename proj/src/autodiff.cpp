#include "gvci/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace gvci {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), Matrix(), nullptr, nullptr, false});
    return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
    nodes_.push_back(Node{p.value, Matrix(), nullptr, &p, true});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs,
                 std::function<void(Tape&, std::size_t)> backward) {
    bool needs = false;
    for (const auto& v : inputs) needs = needs || nodes_[v.id()].needs_grad;
    nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(backward) : nullptr, nullptr, needs});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs,
                 std::function<void(Tape&, std::size_t)> backward) {
    bool needs = false;
    for (const auto& v : inputs) needs = needs || nodes_[v.id()].needs_grad;
    nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(backward) : nullptr, nullptr, needs});
    return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad_mut(std::size_t id) {
    auto& node = nodes_[id];
    if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
    return node.grad;
}

void Tape::accumulate(const Var& v, const Matrix& g) {
    if (!nodes_[v.id()].needs_grad) return;
    grad_mut(v.id()) += g;
}

void Tape::backward(const Var& root) {
    if (root.value().size() != 1) throw std::invalid_argument("backward: root must be a scalar");
    grad_mut(root.id()).setOnes();
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        auto& node = nodes_[i];
        if (!node.needs_grad || node.grad.size() == 0) continue;
        if (node.backward) node.backward(*this, i);
        if (node.param) {
            if (node.param->grad.rows() != node.grad.rows() || node.param->grad.cols() != node.grad.cols())
                node.param->zero_grad();
            node.param->grad += node.grad;
        }
    }
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Var operator-(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        t.accumulate(a, g);
        t.accumulate(b, -g);
    });
}

Var operator*(double s, const Var& a) {
    return a.tape()->record(s * a.value(), {a}, [a, s](Tape& t, std::size_t self) {
        t.accumulate(a, s * t.grad(self));
    });
}

Var operator-(const Var& a) { return -1.0 * a; }

Var hadamard(const Var& a, const Var& b) {
    check_same_shape(a, b, "hadamard");
    return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        if (t.needs_grad(a.id())) t.accumulate(a, g.cwiseProduct(b.value()));
        if (t.needs_grad(b.id())) t.accumulate(b, g.cwiseProduct(a.value()));
    });
}

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
    return a.tape()->record(a.value() * b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        if (t.needs_grad(a.id())) t.accumulate(a, g * b.value().transpose());
        if (t.needs_grad(b.id())) t.accumulate(b, a.value().transpose() * g);
    });
}

Var matmul(const Matrix& a, const Var& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
    return b.tape()->record(a * b.value(), {b}, [a, b](Tape& t, std::size_t self) {
        t.accumulate(b, a.transpose() * t.grad(self));
    });
}

Var add_scalar(const Var& a, double s) {
    return a.tape()->record(a.value().array() + s, {a}, [a](Tape& t, std::size_t self) {
        t.accumulate(a, t.grad(self));
    });
}

Var add_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: shape mismatch");
    Matrix out = a.value().rowwise() + row.value().row(0);
    return a.tape()->record(std::move(out), {a, row}, [a, row](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        t.accumulate(a, g);
        if (t.needs_grad(row.id())) t.accumulate(row, g.colwise().sum());
    });
}

Var broadcast_rows(const Var& row, Eigen::Index rows) {
    if (row.rows() != 1) throw std::invalid_argument("broadcast_rows: expected a row");
    Matrix out = row.value().replicate(rows, 1);
    return row.tape()->record(std::move(out), {row}, [row](Tape& t, std::size_t self) {
        t.accumulate(row, t.grad(self).colwise().sum());
    });
}

Var relu(const Var& a) {
    Matrix out = a.value().cwiseMax(0.0);
    return a.tape()->record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
        Matrix mask = (a.value().array() > 0.0).cast<double>();
        t.accumulate(a, t.grad(self).cwiseProduct(mask));
    });
}

Var tanh(const Var& a) {
    Matrix out = a.value().array().tanh();
    return a.tape()->record(out, {a}, [a, out](Tape& t, std::size_t self) {
        Matrix d = 1.0 - out.array().square();
        t.accumulate(a, t.grad(self).cwiseProduct(d));
    });
}

Var exp(const Var& a) {
    Matrix out = a.value().array().exp();
    return a.tape()->record(out, {a}, [a, out](Tape& t, std::size_t self) {
        t.accumulate(a, t.grad(self).cwiseProduct(out));
    });
}

Var sigmoid(const Var& a) {
    Matrix out = (1.0 + (-a.value().array()).exp()).inverse();
    return a.tape()->record(out, {a}, [a, out](Tape& t, std::size_t self) {
        Matrix d = out.array() * (1.0 - out.array());
        t.accumulate(a, t.grad(self).cwiseProduct(d));
    });
}

Var square(const Var& a) {
    return a.tape()->record(a.value().array().square(), {a}, [a](Tape& t, std::size_t self) {
        t.accumulate(a, 2.0 * t.grad(self).cwiseProduct(a.value()));
    });
}

Var clamp(const Var& a, double lo, double hi) {
    Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
    return a.tape()->record(std::move(out), {a}, [a, lo, hi](Tape& t, std::size_t self) {
        Matrix mask = ((a.value().array() >= lo) && (a.value().array() <= hi)).cast<double>();
        t.accumulate(a, t.grad(self).cwiseProduct(mask));
    });
}

Var sum(const Var& a) {
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return a.tape()->record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
        t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), t.grad(self)(0, 0)));
    });
}

Var mean(const Var& a) {
    const double n = static_cast<double>(a.value().size());
    return (1.0 / n) * sum(a);
}

Var row_sum(const Var& a) {
    Matrix out = a.value().rowwise().sum();
    return a.tape()->record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
        t.accumulate(a, t.grad(self).replicate(1, a.cols()));
    });
}

Var col_sum(const Var& a) {
    Matrix out = a.value().colwise().sum();
    return a.tape()->record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
        t.accumulate(a, t.grad(self).replicate(a.rows(), 1));
    });
}

Var col_mean(const Var& a) { return (1.0 / static_cast<double>(a.rows())) * col_sum(a); }

Var col_max(const Var& a) {
    const Matrix& v = a.value();
    std::vector<Eigen::Index> arg(static_cast<std::size_t>(v.cols()), 0);
    Matrix out(1, v.cols());
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
        Eigen::Index r = 0;
        out(0, c) = v.col(c).maxCoeff(&r);
        arg[static_cast<std::size_t>(c)] = r;
    }
    return a.tape()->record(std::move(out), {a}, [a, arg](Tape& t, std::size_t self) {
        Matrix g = Matrix::Zero(a.rows(), a.cols());
        const Matrix& up = t.grad(self);
        for (Eigen::Index c = 0; c < a.cols(); ++c) g(arg[static_cast<std::size_t>(c)], c) = up(0, c);
        t.accumulate(a, g);
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += p.cols();
    }
    Matrix out(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    return parts.front().tape()->record(std::move(out), parts, [parts](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        Eigen::Index off = 0;
        for (const auto& p : parts) {
            if (t.needs_grad(p.id())) t.accumulate(p, g.middleCols(off, p.cols()));
            off += p.cols();
        }
    });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw std::invalid_argument("slice_cols: out of range");
    Matrix out = a.value().middleCols(start, count);
    return a.tape()->record(std::move(out), {a}, [a, start, count](Tape& t, std::size_t self) {
        Matrix g = Matrix::Zero(a.rows(), a.cols());
        g.middleCols(start, count) = t.grad(self);
        t.accumulate(a, g);
    });
}

Var softmax_rows(const Var& a) {
    Matrix out = a.value();
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double m = out.row(r).maxCoeff();
        out.row(r) = (out.row(r).array() - m).exp();
        out.row(r) /= out.row(r).sum();
    }
    return a.tape()->record(out, {a}, [a, out](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        Vector dot = (g.cwiseProduct(out)).rowwise().sum();
        Matrix d = out.cwiseProduct(g - dot.replicate(1, out.cols()));
        t.accumulate(a, d);
    });
}

Activation parse_activation(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
    }
    return "identity";
}

Var apply(Activation act, const Var& a) {
    switch (act) {
        case Activation::identity: return a;
        case Activation::relu: return relu(a);
        case Activation::tanh: return tanh(a);
    }
    return a;
}

}  // namespace gvci
