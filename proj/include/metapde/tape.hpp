#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "metapde/tensor.hpp"

namespace metapde {

/// Handle to a node on a Tape. Valid only for the tape that produced it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Append-only reverse-mode differentiation tape. One tape per forward pass;
/// node ids are strictly increasing and every op's inputs precede it, so the
/// reverse sweep is a single backwards scan.
///
/// Broadcasting in elementwise ops is limited to scalar-with-tensor and
/// equal shapes. Every produced value is checked finite; NaN/Inf raises.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable leaf (a parameter). Value is copied onto the tape.
    Var leaf(const Tensor& value);
    /// Non-differentiable input.
    Var constant(const Tensor& value);
    Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

    // Elementwise arithmetic; shapes must match or one operand is scalar.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var scale(Var a, double s);

    Var matmul(Var a, Var b);
    /// [R,C] + [C] with the bias added to every row.
    Var add_bias(Var m, Var bias);

    /// Concatenate rank-2 tensors with equal row counts along columns.
    Var concat_cols(const std::vector<Var>& parts);
    /// Columns [c0, c1) of a rank-2 tensor.
    Var slice_cols(Var m, std::size_t c0, std::size_t c1);

    Var sum(Var a);
    Var mean(Var a);

    Var tanh_op(Var a);
    Var sigmoid(Var a);
    Var relu(Var a);

    /// Rows of a rank-2 tensor selected by index; repeats allowed.
    Var gather_rows(Var m, const std::vector<std::size_t>& idx);
    /// Row i of the output is the sum of input rows j with idx[j] == i.
    Var scatter_sum_rows(Var m, const std::vector<std::size_t>& idx, std::size_t n_rows);
    /// As scatter_sum_rows but divided by the per-row count (rows with no
    /// contributions stay zero).
    Var scatter_mean_rows(Var m, const std::vector<std::size_t>& idx, std::size_t n_rows);

    /// Reverse accumulation from a scalar root. Unless accumulate is set,
    /// all gradients are zeroed first and a second call without new nodes
    /// is an error.
    void backward(Var root, bool accumulate = false);

    const Tensor& value(Var v) const { return node(v.id).value; }
    /// Gradient of the last backward root with respect to v; zeros for nodes
    /// the sweep never reached.
    const Tensor& grad(Var v);
    bool requires_grad(Var v) const { return node(v.id).requires_grad; }
    std::size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated on demand during backward
        bool requires_grad = false;
        bool grad_alloc = false;
        const char* op = "leaf";
        std::function<void(Tape&, int)> backprop;  // empty for leaves/constants
    };

    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

    Var push(const char* op, Tensor value, bool requires_grad,
             std::function<void(Tape&, int)> backprop);
    void check_finite(const char* op, const Tensor& t) const;
    Tensor& grad_buffer(int id);
    void accumulate_into(int id, const Tensor& g);

    // Shared implementation for add/sub/mul/div.
    Var elementwise(const char* op, Var a, Var b);

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

}  // namespace metapde
