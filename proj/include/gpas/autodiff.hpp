#pragma once

// Minimal reverse-mode differentiation over dense fp64 matrices.
//
// Every value is a row-major matrix (vectors are 1 x n rows, scalars 1 x 1).
// A Tape records the computation; nodes are appended in evaluation order,
// so walking the tape backwards is a reverse topological traversal. Learnable
// weights live outside the tape in Parameter objects; Tape::param() exposes
// one as a leaf whose gradient accumulates straight into Parameter::grad.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gpas/rng.hpp"

namespace gpas::ad {

struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    bool operator==(const Shape &) const = default;
    std::string str() const { return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]"; }
};

/// A learnable weight block with its accumulated gradient.
struct Parameter {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;

    Parameter() = default;
    explicit Parameter(Shape s) : shape(s), value(s.size(), 0.0), grad(s.size(), 0.0) {}

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

class Tape;

/// Handle to one node of a Tape. Cheap to copy; invalidated by Tape::reset().
class Var {
  public:
    Var() = default;

    bool valid() const { return tape_ != nullptr; }
    Tape &tape() const;
    std::uint32_t id() const { return id_; }
    std::uint64_t trace_id() const { return trace_; }

    Shape shape() const;
    std::span<const double> value() const;
    /// Empty until backward() has run on a trace that reaches this node.
    std::span<const double> grad() const;
    bool requires_grad() const;

    double at(std::size_t r, std::size_t c) const { return value()[r * shape().cols + c]; }
    /// Value of a 1 x 1 node.
    double item() const;

  private:
    friend class Tape;
    Var(Tape *t, std::uint32_t id, std::uint64_t trace) : tape_(t), id_(id), trace_(trace) {}

    Tape *tape_ = nullptr;
    std::uint32_t id_ = 0;
    std::uint64_t trace_ = 0;
};

enum class Op : std::uint8_t {
    constant,
    variable,
    param,
    matmul,
    add,
    sub,
    mul,
    tanh,
    sigmoid,
    softplus,
    add_row,
    scale,
    softmax_rows,
    log_softmax_rows,
    concat,
    gather_row,
    dropout,
    slice,
    transpose,
    sum,
    sum_rows,
    pick,
};

class Tape {
  public:
    Tape();
    Tape(const Tape &) = delete;
    Tape &operator=(const Tape &) = delete;

    /// Leaf without gradient.
    Var constant(Shape shape, std::vector<double> values);
    Var zeros(Shape shape) { return constant(shape, std::vector<double>(shape.size(), 0.0)); }
    /// Leaf with its own gradient buffer (for tests and ad-hoc functions).
    Var variable(Shape shape, std::vector<double> values);
    /// Leaf aliasing an external Parameter. Memoized per trace.
    Var param(Parameter &p);

    /// Populates dLoss/dNode for every node that requires a gradient.
    /// A second call on the same trace throws TraceError.
    void backward(Var loss);

    /// Drops every node and starts a fresh trace.
    void reset();

    std::uint64_t trace_id() const { return trace_id_; }
    std::size_t size() const { return nodes_.size(); }
    bool backward_done() const { return backward_done_; }

    // Low-level node access for the op implementations in autodiff.cpp.
    struct Node {
        Op op = Op::constant;
        Shape shape;
        bool requires_grad = false;
        std::vector<double> value;
        std::vector<double> grad;
        Parameter *param = nullptr;
        std::vector<std::uint32_t> args;
        std::vector<double> aux;
        std::vector<std::size_t> index;
        std::size_t offset = 0;
        int axis = 0;
        double scalar = 0.0;
    };

    Node &node(Var v);
    const Node &node(Var v) const;
    std::span<const double> values_of(const Node &n) const;
    std::span<double> grad_of(Node &n);
    Var push(Node n);

  private:
    friend class Var;

    void backward_node(Node &n);

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter *, std::uint32_t> param_nodes_;
    std::uint64_t trace_id_;
    bool backward_done_ = false;
};

/// Matrix product [m x k] * [k x n].
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise (Hadamard) product.
Var mul(Var a, Var b);
Var tanh(Var x);
Var sigmoid(Var x);
/// log(1 + e^x), computed stably.
Var softplus(Var x);
/// x[m x n] + row[1 x n] broadcast over rows; the only broadcast supported.
Var add_row(Var x, Var row);
Var scale(Var x, double factor);
/// Row-wise softmax with max subtraction. Throws NumericError on non-finite input.
Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
/// axis 0 stacks rows, axis 1 joins columns. Parts may be empty along the axis.
Var concat(std::span<const Var> parts, int axis);
Var concat(std::initializer_list<Var> parts, int axis);
/// Row `index` of table as a 1 x cols node; backward scatter-adds.
Var gather_row(Var table, std::size_t index);
/// Inverted dropout: kept entries scaled by 1/keep_prob. Identity when
/// !training or keep_prob == 1.
Var dropout(Var x, double keep_prob, RngStream &rng, bool training);
Var slice(Var x, int axis, std::size_t begin, std::size_t length);
Var transpose(Var x);
/// Sum of all entries, 1 x 1.
Var sum(Var x);
/// Column sums, 1 x n.
Var sum_rows(Var x);
/// out[i] = x[i, cols[i]], shape m x 1.
Var pick(Var x, std::span<const std::size_t> cols);

enum class Elementwise { add, mul, tanh, sigmoid };

/// Dispatches to the unary/binary pointwise ops by name.
Var elementwise(Elementwise op, std::span<const Var> operands);

} // namespace gpas::ad
