#include "lobdif/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lobdif::num {
namespace {

void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    const double* ap = a.data().data();
    const double* bp = b.data().data();
    double* cp = c.data().data();
    std::fill(cp, cp + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = cp + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ap[i * k + p];
            if (av == 0.0) continue;
            const double* brow = bp + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c (m x n) = a (m x k) * b^T where b is n x k
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    const double* ap = a.data().data();
    const double* bp = b.data().data();
    double* cp = c.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = ap + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = bp + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            cp[i * n + j] = acc;
        }
    }
}

// g_a (m x k) += g (m x n) * b^T, b is k x n
void acc_grad_a_nn(const Tensor& g, const Tensor& b, Tensor& ga) {
    const std::size_t m = g.rows(), n = g.cols(), k = b.rows();
    const double* gp = g.data().data();
    const double* bp = b.data().data();
    double* out = ga.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = gp + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = bp + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            out[i * k + p] += acc;
        }
    }
}

// g_b (k x n) += a^T (k x m) * g (m x n)
void acc_grad_b_nn(const Tensor& a, const Tensor& g, Tensor& gb) {
    const std::size_t m = a.rows(), k = a.cols(), n = g.cols();
    const double* ap = a.data().data();
    const double* gp = g.data().data();
    double* out = gb.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = gp + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ap[i * k + p];
            if (av == 0.0) continue;
            double* orow = out + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
        }
    }
}

[[noreturn]] void shape_error(const std::string& node, const std::string& what) {
    throw std::invalid_argument("shape mismatch at node '" + node + "': " + what);
}

Shape mat(std::size_t r, std::size_t c) { return {r, c}; }

} // namespace

const char* op_name(Op op) noexcept {
    switch (op) {
    case Op::input: return "input";
    case Op::param: return "param";
    case Op::matmul: return "matmul";
    case Op::matmul_nt: return "matmul_nt";
    case Op::add: return "add";
    case Op::add_row: return "add_row";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::affine: return "affine";
    case Op::relu: return "relu";
    case Op::sigmoid: return "sigmoid";
    case Op::tanh: return "tanh";
    case Op::row_softmax: return "row_softmax";
    case Op::concat_cols: return "concat_cols";
    case Op::concat_rows: return "concat_rows";
    case Op::slice_rows: return "slice_rows";
    case Op::slice_cols: return "slice_cols";
    case Op::sum_square_diff: return "sum_square_diff";
    case Op::mean_square_diff: return "mean_square_diff";
    case Op::sum: return "sum";
    }
    return "?";
}

std::string Graph::label(Op op, std::string name) const {
    if (!name.empty()) return name;
    return std::string(op_name(op)) + "#" + std::to_string(nodes_.size());
}

Var Graph::push(Node node, Shape shape) {
    node.value = Tensor(shape);
    node.grad = Tensor(std::move(shape));
    nodes_.push_back(std::move(node));
    evaluated_ = false;
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Graph::Node& Graph::node(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw std::out_of_range("graph: invalid variable handle");
    return nodes_[v.id];
}

Graph::Node& Graph::node(Var v) {
    if (!v.valid() || v.id >= nodes_.size()) throw std::out_of_range("graph: invalid variable handle");
    return nodes_[v.id];
}

Var Graph::input(std::string name, Shape shape) {
    Node n;
    n.op = Op::input;
    n.name = label(Op::input, std::move(name));
    return push(std::move(n), std::move(shape));
}

Var Graph::param(std::string name, const Tensor& value, Tensor* grad_sink) {
    Node n;
    n.op = Op::param;
    n.name = label(Op::param, std::move(name));
    n.param = &value;
    n.sink = grad_sink;
    if (grad_sink != nullptr && grad_sink->shape() != value.shape()) {
        shape_error(n.name, "gradient sink " + shape_string(grad_sink->shape()) + " vs parameter " +
                                shape_string(value.shape()));
    }
    return push(std::move(n), value.shape());
}

Var Graph::matmul(Var a, Var b, std::string name) {
    const Node& na = node(a);
    const Node& nb = node(b);
    Node n;
    n.op = Op::matmul;
    n.name = label(n.op, std::move(name));
    if (na.value.cols() != nb.value.rows()) {
        shape_error(n.name, shape_string(na.value.shape()) + " * " + shape_string(nb.value.shape()));
    }
    n.inputs = {a.id, b.id};
    const Shape s = mat(na.value.rows(), nb.value.cols());
    return push(std::move(n), s);
}

Var Graph::matmul_nt(Var a, Var b, std::string name) {
    const Node& na = node(a);
    const Node& nb = node(b);
    Node n;
    n.op = Op::matmul_nt;
    n.name = label(n.op, std::move(name));
    if (na.value.cols() != nb.value.cols()) {
        shape_error(n.name, shape_string(na.value.shape()) + " * " + shape_string(nb.value.shape()) + "^T");
    }
    n.inputs = {a.id, b.id};
    const Shape s = mat(na.value.rows(), nb.value.rows());
    return push(std::move(n), s);
}

Var Graph::add(Var a, Var b, std::string name) {
    const Node& na = node(a);
    const Node& nb = node(b);
    Node n;
    n.name = label(Op::add, std::move(name));
    if (na.value.size() == nb.value.size() && na.value.cols() == nb.value.cols()) {
        n.op = Op::add;
    } else if (nb.value.rows() == 1 && nb.value.cols() == na.value.cols()) {
        n.op = Op::add_row;
    } else {
        shape_error(n.name, shape_string(na.value.shape()) + " + " + shape_string(nb.value.shape()));
    }
    n.inputs = {a.id, b.id};
    const Shape s = mat(na.value.rows(), na.value.cols());
    return push(std::move(n), s);
}

Var Graph::sub(Var a, Var b, std::string name) {
    const Node& na = node(a);
    const Node& nb = node(b);
    Node n;
    n.op = Op::sub;
    n.name = label(n.op, std::move(name));
    if (na.value.size() != nb.value.size() || na.value.cols() != nb.value.cols()) {
        shape_error(n.name, shape_string(na.value.shape()) + " - " + shape_string(nb.value.shape()));
    }
    n.inputs = {a.id, b.id};
    const Shape s = mat(na.value.rows(), na.value.cols());
    return push(std::move(n), s);
}

Var Graph::mul(Var a, Var b, std::string name) {
    const Node& na = node(a);
    const Node& nb = node(b);
    Node n;
    n.op = Op::mul;
    n.name = label(n.op, std::move(name));
    if (na.value.size() != nb.value.size() || na.value.cols() != nb.value.cols()) {
        shape_error(n.name, shape_string(na.value.shape()) + " .* " + shape_string(nb.value.shape()));
    }
    n.inputs = {a.id, b.id};
    const Shape s = mat(na.value.rows(), na.value.cols());
    return push(std::move(n), s);
}

Var Graph::affine(Var a, double scale, double shift, std::string name) {
    const Node& na = node(a);
    Node n;
    n.op = Op::affine;
    n.name = label(n.op, std::move(name));
    n.inputs = {a.id};
    n.scale = scale;
    n.shift = shift;
    const Shape s = mat(na.value.rows(), na.value.cols());
    return push(std::move(n), s);
}

#define LOBDIF_UNARY(fn, opcode)                                                                                \
    Var Graph::fn(Var a, std::string name) {                                                                    \
        const Node& na = node(a);                                                                               \
        Node n;                                                                                                 \
        n.op = opcode;                                                                                          \
        n.name = label(n.op, std::move(name));                                                                  \
        n.inputs = {a.id};                                                                                      \
        const Shape s = mat(na.value.rows(), na.value.cols());                                                  \
        return push(std::move(n), s);                                                                           \
    }

LOBDIF_UNARY(relu, Op::relu)
LOBDIF_UNARY(sigmoid, Op::sigmoid)
LOBDIF_UNARY(tanh, Op::tanh)
LOBDIF_UNARY(row_softmax, Op::row_softmax)
#undef LOBDIF_UNARY

Var Graph::concat_cols(const std::vector<Var>& parts, std::string name) {
    Node n;
    n.op = Op::concat_cols;
    n.name = label(n.op, std::move(name));
    if (parts.empty()) shape_error(n.name, "no parts");
    const std::size_t rows = node(parts.front()).value.rows();
    std::size_t cols = 0;
    for (Var p : parts) {
        const Node& np = node(p);
        if (np.value.rows() != rows) {
            shape_error(n.name, "row count " + std::to_string(np.value.rows()) + " vs " + std::to_string(rows));
        }
        cols += np.value.cols();
        n.inputs.push_back(p.id);
    }
    return push(std::move(n), mat(rows, cols));
}

Var Graph::concat_rows(const std::vector<Var>& parts, std::string name) {
    Node n;
    n.op = Op::concat_rows;
    n.name = label(n.op, std::move(name));
    if (parts.empty()) shape_error(n.name, "no parts");
    const std::size_t cols = node(parts.front()).value.cols();
    std::size_t rows = 0;
    for (Var p : parts) {
        const Node& np = node(p);
        if (np.value.cols() != cols) {
            shape_error(n.name, "column count " + std::to_string(np.value.cols()) + " vs " + std::to_string(cols));
        }
        rows += np.value.rows();
        n.inputs.push_back(p.id);
    }
    return push(std::move(n), mat(rows, cols));
}

Var Graph::slice_rows(Var a, std::size_t begin, std::size_t end, std::string name) {
    const Node& na = node(a);
    Node n;
    n.op = Op::slice_rows;
    n.name = label(n.op, std::move(name));
    if (begin >= end || end > na.value.rows()) {
        shape_error(n.name, "rows [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                                shape_string(na.value.shape()));
    }
    n.inputs = {a.id};
    n.begin = begin;
    n.end = end;
    const Shape s = mat(end - begin, na.value.cols());
    return push(std::move(n), s);
}

Var Graph::slice_cols(Var a, std::size_t begin, std::size_t end, std::string name) {
    const Node& na = node(a);
    Node n;
    n.op = Op::slice_cols;
    n.name = label(n.op, std::move(name));
    if (begin >= end || end > na.value.cols()) {
        shape_error(n.name, "cols [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                                shape_string(na.value.shape()));
    }
    n.inputs = {a.id};
    n.begin = begin;
    n.end = end;
    const Shape s = mat(na.value.rows(), end - begin);
    return push(std::move(n), s);
}

Var Graph::sum_square_diff(Var a, Var b, std::string name) {
    const Node& na = node(a);
    const Node& nb = node(b);
    Node n;
    n.op = Op::sum_square_diff;
    n.name = label(n.op, std::move(name));
    if (na.value.size() != nb.value.size()) {
        shape_error(n.name, shape_string(na.value.shape()) + " vs " + shape_string(nb.value.shape()));
    }
    n.inputs = {a.id, b.id};
    return push(std::move(n), mat(1, 1));
}

Var Graph::mean_square_diff(Var a, Var b, std::string name) {
    const Node& na = node(a);
    const Node& nb = node(b);
    Node n;
    n.op = Op::mean_square_diff;
    n.name = label(n.op, std::move(name));
    if (na.value.size() != nb.value.size() || na.value.empty()) {
        shape_error(n.name, shape_string(na.value.shape()) + " vs " + shape_string(nb.value.shape()));
    }
    n.inputs = {a.id, b.id};
    return push(std::move(n), mat(1, 1));
}

Var Graph::sum(Var a, std::string name) {
    node(a);
    Node n;
    n.op = Op::sum;
    n.name = label(n.op, std::move(name));
    n.inputs = {a.id};
    return push(std::move(n), mat(1, 1));
}

void Graph::set_input(Var v, const Tensor& value) {
    Node& n = node(v);
    if (n.op != Op::input) throw std::invalid_argument("node '" + n.name + "' is not an input");
    if (value.size() != n.value.size() || value.cols() != n.value.cols()) {
        shape_error(n.name, "declared " + shape_string(n.value.shape()) + ", got " + shape_string(value.shape()));
    }
    std::copy(value.data().begin(), value.data().end(), n.value.data().begin());
    evaluated_ = false;
}

Tensor& Graph::input_value(Var v) {
    Node& n = node(v);
    if (n.op != Op::input) throw std::invalid_argument("node '" + n.name + "' is not an input");
    evaluated_ = false;
    return n.value;
}

const Tensor& Graph::value(Var v) const {
    const Node& n = node(v);
    return n.op == Op::param ? *n.param : n.value;
}

const Tensor& Graph::grad(Var v) const { return node(v).grad; }
const Shape& Graph::shape(Var v) const { return node(v).value.shape(); }
const std::string& Graph::name(Var v) const { return node(v).name; }

void Graph::forward() {
    relu_margin_ = std::numeric_limits<double>::infinity();
    for (Node& n : nodes_) {
        eval_node(n);
        const Tensor& v = n.op == Op::param ? *n.param : n.value;
        if (!v.all_finite()) {
            throw std::domain_error("non-finite value produced at node '" + n.name + "' (" + op_name(n.op) + ")");
        }
    }
    evaluated_ = true;
}

void Graph::eval_node(Node& n) {
    auto in = [&](std::size_t i) -> const Tensor& {
        const Node& src = nodes_[n.inputs[i]];
        return src.op == Op::param ? *src.param : src.value;
    };
    Tensor& out = n.value;
    switch (n.op) {
    case Op::input:
        return;
    case Op::param:
        if (n.param->shape() != out.shape()) {
            shape_error(n.name, "parameter changed shape to " + shape_string(n.param->shape()));
        }
        return;
    case Op::matmul:
        gemm_nn(in(0), in(1), out);
        return;
    case Op::matmul_nt:
        gemm_nt(in(0), in(1), out);
        return;
    case Op::add: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
        return;
    }
    case Op::add_row: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        const std::size_t cols = out.cols();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i % cols];
        return;
    }
    case Op::sub: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
        return;
    }
    case Op::mul: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
        return;
    }
    case Op::affine: {
        const Tensor& a = in(0);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = n.scale * a[i] + n.shift;
        return;
    }
    case Op::relu: {
        const Tensor& a = in(0);
        for (std::size_t i = 0; i < out.size(); ++i) {
            relu_margin_ = std::min(relu_margin_, std::abs(a[i]));
            out[i] = a[i] > 0.0 ? a[i] : 0.0;
        }
        return;
    }
    case Op::sigmoid: {
        const Tensor& a = in(0);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double x = a[i];
            out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        }
        return;
    }
    case Op::tanh: {
        const Tensor& a = in(0);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a[i]);
        return;
    }
    case Op::row_softmax: {
        const Tensor& a = in(0);
        const std::size_t rows = out.rows(), cols = out.cols();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* x = a.data().data() + r * cols;
            double* y = out.data().data() + r * cols;
            const double peak = *std::max_element(x, x + cols);
            double total = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
                y[c] = std::exp(x[c] - peak);
                total += y[c];
            }
            for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
        }
        return;
    }
    case Op::concat_cols: {
        const std::size_t rows = out.rows(), cols = out.cols();
        std::size_t offset = 0;
        for (std::size_t p = 0; p < n.inputs.size(); ++p) {
            const Tensor& part = in(p);
            const std::size_t pc = part.cols();
            for (std::size_t r = 0; r < rows; ++r) {
                std::copy_n(part.data().data() + r * pc, pc, out.data().data() + r * cols + offset);
            }
            offset += pc;
        }
        return;
    }
    case Op::concat_rows: {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < n.inputs.size(); ++p) {
            const Tensor& part = in(p);
            std::copy(part.data().begin(), part.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
            offset += part.size();
        }
        return;
    }
    case Op::slice_rows: {
        const Tensor& a = in(0);
        const std::size_t cols = a.cols();
        std::copy_n(a.data().data() + n.begin * cols, out.size(), out.data().data());
        return;
    }
    case Op::slice_cols: {
        const Tensor& a = in(0);
        const std::size_t rows = out.rows(), width = out.cols(), cols = a.cols();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(a.data().data() + r * cols + n.begin, width, out.data().data() + r * width);
        }
        return;
    }
    case Op::sum_square_diff:
    case Op::mean_square_diff: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = a[i] - b[i];
            acc += d * d;
        }
        out[0] = n.op == Op::mean_square_diff ? acc / static_cast<double>(a.size()) : acc;
        return;
    }
    case Op::sum: {
        const Tensor& a = in(0);
        double acc = 0.0;
        for (double v : a.data()) acc += v;
        out[0] = acc;
        return;
    }
    }
}

void Graph::refresh_grad_flags() {
    if (grad_flags_.size() == nodes_.size() && grad_flags_input_ == input_grads_) return;
    grad_flags_.assign(nodes_.size(), 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        bool need = n.op == Op::param || (n.op == Op::input && input_grads_);
        for (std::uint32_t in : n.inputs) need = need || grad_flags_[in] != 0;
        grad_flags_[i] = need ? 1 : 0;
    }
    grad_flags_input_ = input_grads_;
}

void Graph::backward(Var output, const Tensor* output_grad) {
    if (!evaluated_) throw std::logic_error("graph: backward called before forward");
    Node& out = node(output);
    refresh_grad_flags();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (grad_flags_[i] != 0) nodes_[i].grad.fill(0.0);
    }
    if (output_grad != nullptr) {
        if (output_grad->size() != out.grad.size()) {
            shape_error(out.name, "output gradient " + shape_string(output_grad->shape()));
        }
        std::copy(output_grad->data().begin(), output_grad->data().end(), out.grad.data().begin());
    } else {
        out.grad.fill(1.0);
    }
    for (std::size_t i = output.id + 1; i-- > 0;) {
        if (grad_flags_[i] != 0) backprop_node(nodes_[i]);
    }
}

void Graph::backprop_node(Node& n) {
    auto val = [&](std::size_t i) -> const Tensor& {
        const Node& src = nodes_[n.inputs[i]];
        return src.op == Op::param ? *src.param : src.value;
    };
    // null when the input does not lead back to a parameter
    auto grd = [&](std::size_t i) -> double* {
        return grad_flags_[n.inputs[i]] != 0 ? nodes_[n.inputs[i]].grad.data().data() : nullptr;
    };
    const Tensor& g = n.grad;
    const double* gp = g.data().data();
    const std::size_t size = g.size();
    switch (n.op) {
    case Op::input:
        return;
    case Op::param:
        if (n.sink != nullptr) {
            double* sink = n.sink->data().data();
            for (std::size_t i = 0; i < size; ++i) sink[i] += gp[i];
        }
        return;
    case Op::matmul:
        if (grd(0) != nullptr) acc_grad_a_nn(g, val(1), nodes_[n.inputs[0]].grad);
        if (grd(1) != nullptr) acc_grad_b_nn(val(0), g, nodes_[n.inputs[1]].grad);
        return;
    case Op::matmul_nt: {
        // C = A B^T: dA += dC B, dB += dC^T A
        const double* a = val(0).data().data();
        const double* b = val(1).data().data();
        double* ga = grd(0);
        double* gb = grd(1);
        const std::size_t m = g.rows(), nn = g.cols(), k = val(0).cols();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < nn; ++j) {
                const double gij = gp[i * nn + j];
                if (gij == 0.0) continue;
                if (ga != nullptr) {
                    const double* brow = b + j * k;
                    double* garow = ga + i * k;
                    for (std::size_t q = 0; q < k; ++q) garow[q] += gij * brow[q];
                }
                if (gb != nullptr) {
                    const double* arow = a + i * k;
                    double* gbrow = gb + j * k;
                    for (std::size_t q = 0; q < k; ++q) gbrow[q] += gij * arow[q];
                }
            }
        }
        return;
    }
    case Op::add:
    case Op::sub: {
        const double sign = n.op == Op::add ? 1.0 : -1.0;
        if (double* ga = grd(0)) {
            for (std::size_t i = 0; i < size; ++i) ga[i] += gp[i];
        }
        if (double* gb = grd(1)) {
            for (std::size_t i = 0; i < size; ++i) gb[i] += sign * gp[i];
        }
        return;
    }
    case Op::add_row: {
        const std::size_t cols = g.cols();
        if (double* ga = grd(0)) {
            for (std::size_t i = 0; i < size; ++i) ga[i] += gp[i];
        }
        if (double* gb = grd(1)) {
            for (std::size_t i = 0; i < size; ++i) gb[i % cols] += gp[i];
        }
        return;
    }
    case Op::mul: {
        const double* a = val(0).data().data();
        const double* b = val(1).data().data();
        if (double* ga = grd(0)) {
            for (std::size_t i = 0; i < size; ++i) ga[i] += gp[i] * b[i];
        }
        if (double* gb = grd(1)) {
            for (std::size_t i = 0; i < size; ++i) gb[i] += gp[i] * a[i];
        }
        return;
    }
    case Op::affine: {
        if (double* ga = grd(0)) {
            for (std::size_t i = 0; i < size; ++i) ga[i] += n.scale * gp[i];
        }
        return;
    }
    case Op::relu: {
        // subgradient at exactly 0 is 0
        const double* a = val(0).data().data();
        if (double* ga = grd(0)) {
            for (std::size_t i = 0; i < size; ++i) ga[i] += a[i] > 0.0 ? gp[i] : 0.0;
        }
        return;
    }
    case Op::sigmoid: {
        const double* y = n.value.data().data();
        if (double* ga = grd(0)) {
            for (std::size_t i = 0; i < size; ++i) ga[i] += gp[i] * y[i] * (1.0 - y[i]);
        }
        return;
    }
    case Op::tanh: {
        const double* y = n.value.data().data();
        if (double* ga = grd(0)) {
            for (std::size_t i = 0; i < size; ++i) ga[i] += gp[i] * (1.0 - y[i] * y[i]);
        }
        return;
    }
    case Op::row_softmax: {
        double* ga = grd(0);
        if (ga == nullptr) return;
        const std::size_t rows = g.rows(), cols = g.cols();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = n.value.data().data() + r * cols;
            const double* gy = gp + r * cols;
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += gy[c] * y[c];
            double* gx = ga + r * cols;
            for (std::size_t c = 0; c < cols; ++c) gx[c] += y[c] * (gy[c] - dot);
        }
        return;
    }
    case Op::concat_cols: {
        const std::size_t rows = g.rows(), cols = g.cols();
        std::size_t offset = 0;
        for (std::size_t q = 0; q < n.inputs.size(); ++q) {
            const std::size_t pc = nodes_[n.inputs[q]].grad.cols();
            if (double* gq = grd(q)) {
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* src = gp + r * cols + offset;
                    double* dst = gq + r * pc;
                    for (std::size_t c = 0; c < pc; ++c) dst[c] += src[c];
                }
            }
            offset += pc;
        }
        return;
    }
    case Op::concat_rows: {
        std::size_t offset = 0;
        for (std::size_t q = 0; q < n.inputs.size(); ++q) {
            const std::size_t qs = nodes_[n.inputs[q]].grad.size();
            if (double* gq = grd(q)) {
                for (std::size_t i = 0; i < qs; ++i) gq[i] += gp[offset + i];
            }
            offset += qs;
        }
        return;
    }
    case Op::slice_rows: {
        if (double* ga = grd(0)) {
            const std::size_t base = n.begin * nodes_[n.inputs[0]].grad.cols();
            for (std::size_t i = 0; i < size; ++i) ga[base + i] += gp[i];
        }
        return;
    }
    case Op::slice_cols: {
        if (double* ga = grd(0)) {
            const std::size_t rows = g.rows(), width = g.cols(), cols = nodes_[n.inputs[0]].grad.cols();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < width; ++c) ga[r * cols + n.begin + c] += gp[r * width + c];
            }
        }
        return;
    }
    case Op::sum_square_diff:
    case Op::mean_square_diff: {
        const Tensor& a = val(0);
        const Tensor& b = val(1);
        double* ga = grd(0);
        double* gb = grd(1);
        double coeff = 2.0 * gp[0];
        if (n.op == Op::mean_square_diff) coeff /= static_cast<double>(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = coeff * (a[i] - b[i]);
            if (ga != nullptr) ga[i] += d;
            if (gb != nullptr) gb[i] -= d;
        }
        return;
    }
    case Op::sum: {
        if (double* ga = grd(0)) {
            const std::size_t in_size = nodes_[n.inputs[0]].grad.size();
            for (std::size_t i = 0; i < in_size; ++i) ga[i] += gp[0];
        }
        return;
    }
    }
}

GradientCheck check_gradients(Graph& graph, Var loss, const std::vector<Tensor*>& params,
                              const std::vector<std::string>& names, double h, double floor, double relu_guard) {
    if (!(h >= 1e-7 && h <= 1e-3)) throw std::invalid_argument("check_gradients: h must lie in [1e-7, 1e-3]");
    if (names.size() != params.size()) throw std::invalid_argument("check_gradients: names/params size mismatch");

    graph.forward();
    if (graph.relu_margin() < relu_guard) {
        throw std::domain_error("check_gradients: relu input within " + std::to_string(relu_guard) + " of zero");
    }
    graph.backward(loss);

    // Analytic gradients are read from the param leaves bound to each tensor.
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const Tensor* p : params) analytic.emplace_back(p->shape());
    for (std::uint32_t id = 0; id < graph.size(); ++id) {
        const Var v{id};
        for (std::size_t k = 0; k < params.size(); ++k) {
            if (&graph.value(v) == params[k]) {
                const Tensor& g = graph.grad(v);
                for (std::size_t i = 0; i < g.size(); ++i) analytic[k][i] += g[i];
            }
        }
    }

    auto eval = [&]() {
        graph.forward();
        const double f = graph.value(loss)[0];
        if (!std::isfinite(f)) throw std::domain_error("check_gradients: non-finite loss");
        return f;
    };

    GradientCheck result;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double saved = p[i];
            p[i] = saved + h;
            const double up = eval();
            p[i] = saved - h;
            const double down = eval();
            p[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[k][i];
            if (!std::isfinite(a)) throw std::domain_error("check_gradients: non-finite analytic gradient");
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            ++result.coordinates;
            if (rel > result.max_relative_error) {
                result.max_relative_error = rel;
                result.worst_coordinate = names[k] + "[" + std::to_string(i) + "]";
            }
        }
    }
    graph.forward();
    return result;
}

} // namespace lobdif::num
