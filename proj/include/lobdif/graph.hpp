#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "lobdif/tensor.hpp"

namespace lobdif::num {

/// Handle to a node of a Graph.
struct Var {
    std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
    [[nodiscard]] bool valid() const noexcept { return id != std::numeric_limits<std::uint32_t>::max(); }
};

enum class Op : std::uint8_t {
    input,
    param,
    matmul,
    matmul_nt,
    add,
    add_row,
    sub,
    mul,
    affine,
    relu,
    sigmoid,
    tanh,
    row_softmax,
    concat_cols,
    concat_rows,
    slice_rows,
    slice_cols,
    sum_square_diff,
    mean_square_diff,
    sum,
};

[[nodiscard]] const char* op_name(Op op) noexcept;

/// Define-then-run computation graph with reverse-mode differentiation.
///
/// Nodes are appended in topological order while the graph is built; shapes
/// are inferred and checked at that point. `forward()` evaluates every node
/// from the current input and parameter values, `backward()` propagates an
/// output gradient to all nodes and accumulates parameter gradients into the
/// sinks supplied at `param()` time. The structure is reusable: set new inputs
/// and run forward/backward again without reallocating.
///
/// A graph instance is single-threaded. Parameter tensors are read through
/// pointers, so they must outlive the graph and keep their shapes.
class Graph {
public:
    Var input(std::string name, Shape shape);
    /// Leaf bound to an external tensor. `grad_sink`, when non-null, receives
    /// accumulated gradients (it is never cleared by the graph).
    Var param(std::string name, const Tensor& value, Tensor* grad_sink = nullptr);

    Var matmul(Var a, Var b, std::string name = {});
    /// a * b^T
    Var matmul_nt(Var a, Var b, std::string name = {});
    /// Elementwise sum; `b` may also be a single row broadcast over a's rows.
    Var add(Var a, Var b, std::string name = {});
    Var sub(Var a, Var b, std::string name = {});
    Var mul(Var a, Var b, std::string name = {});
    /// scale * a + shift
    Var affine(Var a, double scale, double shift = 0.0, std::string name = {});
    Var relu(Var a, std::string name = {});
    Var sigmoid(Var a, std::string name = {});
    Var tanh(Var a, std::string name = {});
    Var row_softmax(Var a, std::string name = {});
    Var concat_cols(const std::vector<Var>& parts, std::string name = {});
    Var concat_rows(const std::vector<Var>& parts, std::string name = {});
    /// Rows [begin, end).
    Var slice_rows(Var a, std::size_t begin, std::size_t end, std::string name = {});
    /// Columns [begin, end).
    Var slice_cols(Var a, std::size_t begin, std::size_t end, std::string name = {});
    /// sum((a - b)^2) as a 1x1 tensor.
    Var sum_square_diff(Var a, Var b, std::string name = {});
    /// mean((a - b)^2) as a 1x1 tensor.
    Var mean_square_diff(Var a, Var b, std::string name = {});
    Var sum(Var a, std::string name = {});

    /// Whether backward() also fills gradients of input leaves (on by
    /// default). Turning it off skips work in input-only subgraphs.
    void set_input_gradients(bool enabled) noexcept { input_grads_ = enabled; }

    void set_input(Var v, const Tensor& value);
    /// Mutable access to an input's storage, for in-place filling.
    Tensor& input_value(Var v);

    void forward();
    /// Seeds d(output) with `output_grad` (ones when omitted).
    void backward(Var output, const Tensor* output_grad = nullptr);

    [[nodiscard]] const Tensor& value(Var v) const;
    [[nodiscard]] const Tensor& grad(Var v) const;
    [[nodiscard]] const Shape& shape(Var v) const;
    [[nodiscard]] const std::string& name(Var v) const;
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    [[nodiscard]] bool evaluated() const noexcept { return evaluated_; }

    /// Smallest |x| over all relu inputs seen in the last forward pass.
    [[nodiscard]] double relu_margin() const noexcept { return relu_margin_; }

private:
    struct Node {
        Op op = Op::input;
        std::string name;
        std::vector<std::uint32_t> inputs;
        std::size_t begin = 0;
        std::size_t end = 0;
        double scale = 1.0;
        double shift = 0.0;
        const Tensor* param = nullptr;
        Tensor* sink = nullptr;
        Tensor value;
        Tensor grad;
    };

    Var push(Node node, Shape shape);
    const Node& node(Var v) const;
    Node& node(Var v);
    std::string label(Op op, std::string name) const;
    void eval_node(Node& n);
    void backprop_node(Node& n);
    void refresh_grad_flags();

    std::vector<Node> nodes_;
    bool evaluated_ = false;
    bool input_grads_ = true;
    bool grad_flags_input_ = true;
    std::vector<std::uint8_t> grad_flags_;
    double relu_margin_ = std::numeric_limits<double>::infinity();
};

/// Result of comparing analytic and central-difference gradients.
struct GradientCheck {
    double max_relative_error = 0.0;
    std::size_t coordinates = 0;
    std::string worst_coordinate;
};

/// Compares d(loss)/d(param) from `backward` with (f(x+h) - f(x-h)) / 2h for
/// every coordinate of every tensor in `params`, which must be the tensors the
/// graph's param leaves are bound to. Relative error uses
/// |a - n| / max(|a|, |n|, floor).
///
/// Throws std::domain_error on non-finite values or when a relu input lies
/// within `relu_guard` of zero at the base point.
[[nodiscard]] GradientCheck check_gradients(Graph& graph, Var loss, const std::vector<Tensor*>& params,
                                            const std::vector<std::string>& names, double h,
                                            double floor = 1e-6, double relu_guard = 0.0);

} // namespace lobdif::num
