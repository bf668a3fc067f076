#pragma once

// Reverse-mode automatic differentiation over dense row-major tensors.
//
// A Graph is built once (declaring node shapes), evaluated with forward()
// on concrete inputs, then differentiated with backward() from a seed on any
// node. All arithmetic is 64-bit; kernels run serially so results are
// bitwise reproducible within one build.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsdtex::ad {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

struct Tensor {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d, bool grad = false);

    static Tensor zeros(Shape s);
    static Tensor filled(Shape s, double value);
    static Tensor scalar(double value);

    std::size_t size() const { return data.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
};

using NodeId = std::size_t;

class ShapeError : public std::invalid_argument {
public:
    ShapeError(NodeId node, const std::string& what)
        : std::invalid_argument("node " + std::to_string(node) + ": " + what), node_(node) {}
    NodeId node() const { return node_; }

private:
    NodeId node_;
};

class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class ClampGrad {
    // d/dx = 1 strictly inside (lo, hi), 0 elsewhere including the boundaries.
    Standard,
    // d/dx = 1 everywhere; the clamp only affects the forward value.
    StraightThrough,
};

class Graph {
public:
    // Leaves. Inputs are bound positionally in declaration order by forward().
    NodeId input(Shape shape, bool requires_grad = false, std::string name = {});
    NodeId constant(Tensor value);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId matmul(NodeId a, NodeId b);

    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId pow(NodeId a, double exponent);
    NodeId sqrt(NodeId a);
    NodeId clamp(NodeId a, double lo, double hi, ClampGrad mode = ClampGrad::Standard);
    NodeId relu(NodeId a);
    NodeId sigmoid(NodeId a);

    // Sum of all elements into a scalar (shape {}).
    NodeId sum(NodeId a);
    // Numpy-style broadcast of `a` to `shape` (trailing-aligned, size-1 or missing axes expand).
    NodeId broadcast(NodeId a, Shape shape);

    // Row gather: table [R, C], rows.size() = N -> [N, C].
    NodeId gather(NodeId table, std::vector<std::uint32_t> rows);

    // Multilinear interpolation of table rows: table [R, C]; for each of N points and
    // G groups, the K corner rows and weights are combined as sum_k w * table[row].
    // Output [N, G*C]. Differentiable w.r.t. the table only (weights are constants).
    NodeId interpolate(NodeId table, std::size_t groups, std::size_t corners,
                       std::vector<std::uint32_t> corner_rows, std::vector<double> corner_weights);

    // Piecewise-linear lookup along the middle axis: values [N, K, C], coord of N elements
    // in [0, 1] mapped onto K evenly spaced knots. Output [N, C]. Differentiable w.r.t.
    // both values and coord (coord slope is 0 outside the open interval).
    NodeId lerp(NodeId values, NodeId coord);

    // Convenience compositions built from the primitives above.
    NodeId scale(NodeId a, double s);
    NodeId offset(NodeId a, double c);
    NodeId abs(NodeId a);
    NodeId mean(NodeId a);
    // Column selection [N, C] -> [N, cols.size()] via a constant selector matmul.
    NodeId columns(NodeId a, std::span<const std::size_t> cols);

    const Shape& shape(NodeId id) const;
    std::size_t size() const { return nodes_.size(); }
    std::size_t input_count() const { return inputs_.size(); }

    // Evaluates every node. `inputs` binds the input() leaves in declaration order.
    void forward(std::span<const Tensor> inputs);
    bool evaluated() const { return evaluated_; }
    const Tensor& value(NodeId id) const;

    // Returns d(<seed, output>)/d(input) for every input leaf, in declaration order.
    // Entries for inputs declared without requires_grad are empty tensors.
    std::vector<Tensor> backward(NodeId output, const Tensor& seed);
    // Gradient accumulated on any node by the most recent backward().
    const Tensor& grad(NodeId id) const;

private:
    enum class Op {
        Input, Constant, Add, Sub, Mul, Div, MatMul, Exp, Log, Pow, Sqrt, Clamp, Relu,
        Sigmoid, Sum, Broadcast, Gather, Interpolate, Lerp
    };

    struct Node {
        Op op;
        std::vector<NodeId> parents;
        Shape shape;
        double p0 = 0.0;
        double p1 = 0.0;
        ClampGrad clamp_mode = ClampGrad::Standard;
        std::size_t groups = 0;
        std::size_t corners = 0;
        std::vector<std::uint32_t> rows;
        std::vector<double> weights;
        bool requires_grad = false;
        std::string name;
        Tensor value;
        Tensor grad;
    };

    NodeId push(Node node);
    NodeId elementwise(Op op, NodeId a, NodeId b);
    NodeId unary(Op op, NodeId a, double p0 = 0.0, double p1 = 0.0);
    void check_id(NodeId id) const;
    void eval(Node& node);
    void propagate(Node& node);

    std::vector<Node> nodes_;
    std::vector<NodeId> inputs_;
    bool evaluated_ = false;
    bool differentiated_ = false;
};

}  // namespace dsdtex::ad
