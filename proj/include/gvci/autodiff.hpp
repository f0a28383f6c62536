#pragma once

// Minimal reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every operation of one forward pass. Calling backward() on a
// 1x1 result accumulates gradients into every leaf created with param(); the
// gradient of each Parameter lands in Parameter::grad.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

namespace gvci {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    Parameter() = default;
    Parameter(std::string n, Matrix v)
        : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Matrix& value() const;
    const Matrix& grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    double scalar() const { return value()(0, 0); }

    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    Var param(Parameter& p);

    // Records a derived node. `backward` reads grad(self) and pushes into the
    // inputs; it is dropped when no input carries a gradient.
    Var record(Matrix value, std::initializer_list<Var> inputs,
               std::function<void(Tape&, std::size_t)> backward);
    Var record(Matrix value, const std::vector<Var>& inputs,
               std::function<void(Tape&, std::size_t)> backward);

    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
    Matrix& grad_mut(std::size_t id);
    void accumulate(const Var& v, const Matrix& g);

    void backward(const Var& root);
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void(Tape&, std::size_t)> backward;
        Parameter* param = nullptr;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
};

// Elementwise / structural operations. Shapes must match unless stated.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(double s, const Var& a);
Var operator-(const Var& a);
Var hadamard(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);
Var matmul(const Matrix& a, const Var& b);
Var add_scalar(const Var& a, double s);
// a (r x c) plus a 1 x c row broadcast over every row.
Var add_row(const Var& a, const Var& row);
// 1 x c row repeated `rows` times.
Var broadcast_rows(const Var& row, Eigen::Index rows);

Var relu(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var sigmoid(const Var& a);
Var square(const Var& a);
// Values outside [lo, hi] are clamped; gradient is zero there.
Var clamp(const Var& a, double lo, double hi);

Var sum(const Var& a);
Var mean(const Var& a);
Var row_sum(const Var& a);   // r x 1
Var col_mean(const Var& a);  // 1 x c
Var col_sum(const Var& a);   // 1 x c
Var col_max(const Var& a);   // 1 x c, gradient to the (first) argmax

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);

// Row-wise softmax over all columns.
Var softmax_rows(const Var& a);

enum class Activation { identity, relu, tanh };

Activation parse_activation(const std::string& s);
std::string to_string(Activation a);
Var apply(Activation act, const Var& a);

}  // namespace gvci
