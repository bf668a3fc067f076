#include "dsdtex/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace dsdtex::ad {

std::size_t element_count(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d, bool grad)
    : shape(std::move(s)), data(std::move(d)), requires_grad(grad) {
    if (data.size() != element_count(shape))
        throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                    " does not match shape " + ad::to_string(shape));
}

Tensor Tensor::zeros(Shape s) { return filled(std::move(s), 0.0); }

Tensor Tensor::filled(Shape s, double value) {
    auto n = element_count(s);
    return Tensor(std::move(s), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

namespace {

double sigmoid_of(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// Per-output-axis strides into a broadcast source; 0 on expanded axes.
std::vector<std::size_t> broadcast_strides(const Shape& src, const Shape& dst) {
    std::vector<std::size_t> strides(dst.size(), 0);
    std::size_t stride = 1;
    for (std::size_t k = 0; k < src.size(); ++k) {
        std::size_t si = src.size() - 1 - k;
        std::size_t di = dst.size() - 1 - k;
        strides[di] = src[si] == 1 ? 0 : stride;
        stride *= src[si];
    }
    return strides;
}

template <typename F>
void for_each_broadcast(const Shape& src, const Shape& dst, F&& f) {
    auto strides = broadcast_strides(src, dst);
    std::size_t total = element_count(dst);
    std::vector<std::size_t> idx(dst.size(), 0);
    std::size_t src_off = 0;
    for (std::size_t out = 0; out < total; ++out) {
        f(out, src_off);
        for (std::size_t ax = dst.size(); ax-- > 0;) {
            ++idx[ax];
            src_off += strides[ax];
            if (idx[ax] < dst[ax]) break;
            src_off -= strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
}

}  // namespace

NodeId Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    evaluated_ = false;
    differentiated_ = false;
    return nodes_.size() - 1;
}

void Graph::check_id(NodeId id) const {
    if (id >= nodes_.size()) throw ShapeError(id, "unknown node id");
}

const Shape& Graph::shape(NodeId id) const {
    check_id(id);
    return nodes_[id].shape;
}

NodeId Graph::input(Shape shape, bool requires_grad, std::string name) {
    Node n{.op = Op::Input, .shape = std::move(shape)};
    n.requires_grad = requires_grad;
    n.name = std::move(name);
    auto id = push(std::move(n));
    inputs_.push_back(id);
    return id;
}

NodeId Graph::constant(Tensor value) {
    Node n{.op = Op::Constant, .shape = value.shape};
    n.value = std::move(value);
    return push(std::move(n));
}

NodeId Graph::elementwise(Op op, NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    if (nodes_[a].shape != nodes_[b].shape)
        throw ShapeError(nodes_.size(), "operand shapes differ: " + to_string(nodes_[a].shape) +
                                            " vs " + to_string(nodes_[b].shape));
    return push(Node{.op = op, .parents = {a, b}, .shape = nodes_[a].shape});
}

NodeId Graph::unary(Op op, NodeId a, double p0, double p1) {
    check_id(a);
    Node n{.op = op, .parents = {a}, .shape = nodes_[a].shape};
    n.p0 = p0;
    n.p1 = p1;
    return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) { return elementwise(Op::Add, a, b); }
NodeId Graph::sub(NodeId a, NodeId b) { return elementwise(Op::Sub, a, b); }
NodeId Graph::mul(NodeId a, NodeId b) { return elementwise(Op::Mul, a, b); }
NodeId Graph::div(NodeId a, NodeId b) { return elementwise(Op::Div, a, b); }

NodeId Graph::matmul(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    const auto& sa = nodes_[a].shape;
    const auto& sb = nodes_[b].shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
        throw ShapeError(nodes_.size(), "matmul shapes " + to_string(sa) + " x " + to_string(sb));
    return push(Node{.op = Op::MatMul, .parents = {a, b}, .shape = {sa[0], sb[1]}});
}

NodeId Graph::exp(NodeId a) { return unary(Op::Exp, a); }
NodeId Graph::log(NodeId a) { return unary(Op::Log, a); }
NodeId Graph::pow(NodeId a, double exponent) { return unary(Op::Pow, a, exponent); }
NodeId Graph::sqrt(NodeId a) { return unary(Op::Sqrt, a); }
NodeId Graph::relu(NodeId a) { return unary(Op::Relu, a); }
NodeId Graph::sigmoid(NodeId a) { return unary(Op::Sigmoid, a); }

NodeId Graph::clamp(NodeId a, double lo, double hi, ClampGrad mode) {
    if (!(lo <= hi)) throw ShapeError(nodes_.size(), "clamp bounds inverted");
    auto id = unary(Op::Clamp, a, lo, hi);
    nodes_[id].clamp_mode = mode;
    return id;
}

NodeId Graph::sum(NodeId a) {
    check_id(a);
    return push(Node{.op = Op::Sum, .parents = {a}, .shape = {}});
}

NodeId Graph::broadcast(NodeId a, Shape shape) {
    check_id(a);
    const auto& src = nodes_[a].shape;
    if (src.size() > shape.size())
        throw ShapeError(nodes_.size(), "cannot broadcast " + to_string(src) + " to " + to_string(shape));
    for (std::size_t k = 0; k < src.size(); ++k) {
        auto s = src[src.size() - 1 - k];
        auto d = shape[shape.size() - 1 - k];
        if (s != d && s != 1)
            throw ShapeError(nodes_.size(), "cannot broadcast " + to_string(src) + " to " + to_string(shape));
    }
    return push(Node{.op = Op::Broadcast, .parents = {a}, .shape = std::move(shape)});
}

NodeId Graph::gather(NodeId table, std::vector<std::uint32_t> rows) {
    check_id(table);
    const auto& st = nodes_[table].shape;
    if (st.size() != 2) throw ShapeError(nodes_.size(), "gather table must be rank 2");
    for (auto r : rows)
        if (r >= st[0]) throw ShapeError(nodes_.size(), "gather row " + std::to_string(r) + " out of range");
    Node n{.op = Op::Gather, .parents = {table}, .shape = {rows.size(), st[1]}};
    n.rows = std::move(rows);
    return push(std::move(n));
}

NodeId Graph::interpolate(NodeId table, std::size_t groups, std::size_t corners,
                          std::vector<std::uint32_t> corner_rows, std::vector<double> corner_weights) {
    check_id(table);
    const auto& st = nodes_[table].shape;
    if (st.size() != 2) throw ShapeError(nodes_.size(), "interpolate table must be rank 2");
    if (groups == 0 || corners == 0 || corner_rows.size() != corner_weights.size() ||
        corner_rows.size() % (groups * corners) != 0)
        throw ShapeError(nodes_.size(), "interpolate corner layout inconsistent");
    for (auto r : corner_rows)
        if (r >= st[0]) throw ShapeError(nodes_.size(), "interpolate row " + std::to_string(r) + " out of range");
    std::size_t points = corner_rows.size() / (groups * corners);
    Node n{.op = Op::Interpolate, .parents = {table}, .shape = {points, groups * st[1]}};
    n.groups = groups;
    n.corners = corners;
    n.rows = std::move(corner_rows);
    n.weights = std::move(corner_weights);
    return push(std::move(n));
}

NodeId Graph::lerp(NodeId values, NodeId coord) {
    check_id(values);
    check_id(coord);
    const auto& sv = nodes_[values].shape;
    if (sv.size() != 3 || sv[1] < 2) throw ShapeError(nodes_.size(), "lerp values must be [N,K>=2,C]");
    if (element_count(nodes_[coord].shape) != sv[0])
        throw ShapeError(nodes_.size(), "lerp coord must hold one value per row");
    return push(Node{.op = Op::Lerp, .parents = {values, coord}, .shape = {sv[0], sv[2]}});
}

NodeId Graph::scale(NodeId a, double s) {
    auto c = broadcast(constant(Tensor::scalar(s)), shape(a));
    return mul(a, c);
}

NodeId Graph::offset(NodeId a, double c) {
    auto k = broadcast(constant(Tensor::scalar(c)), shape(a));
    return add(a, k);
}

NodeId Graph::abs(NodeId a) { return add(relu(a), relu(scale(a, -1.0))); }

NodeId Graph::mean(NodeId a) {
    auto n = element_count(shape(a));
    return scale(sum(a), n ? 1.0 / static_cast<double>(n) : 0.0);
}

NodeId Graph::columns(NodeId a, std::span<const std::size_t> cols) {
    const auto& sa = shape(a);
    if (sa.size() != 2) throw ShapeError(nodes_.size(), "columns expects rank 2");
    Tensor sel = Tensor::zeros({sa[1], cols.size()});
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (cols[j] >= sa[1]) throw ShapeError(nodes_.size(), "column out of range");
        sel[cols[j] * cols.size() + j] = 1.0;
    }
    return matmul(a, constant(std::move(sel)));
}

void Graph::forward(std::span<const Tensor> inputs) {
    if (inputs.size() != inputs_.size())
        throw ShapeError(inputs_.empty() ? 0 : inputs_.front(),
                         "expected " + std::to_string(inputs_.size()) + " inputs, got " +
                             std::to_string(inputs.size()));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto& n = nodes_[inputs_[i]];
        if (inputs[i].shape != n.shape || inputs[i].data.size() != element_count(n.shape))
            throw ShapeError(inputs_[i], "input shape " + to_string(inputs[i].shape) +
                                             " does not conform to declared " + to_string(n.shape));
        n.value = inputs[i];
    }
    for (auto& n : nodes_)
        if (n.op != Op::Input && n.op != Op::Constant) eval(n);
    evaluated_ = true;
    differentiated_ = false;
}

const Tensor& Graph::value(NodeId id) const {
    check_id(id);
    if (!evaluated_ && nodes_[id].op != Op::Constant) throw StateError("value() requested before forward()");
    return nodes_[id].value;
}

const Tensor& Graph::grad(NodeId id) const {
    check_id(id);
    if (!differentiated_) throw StateError("grad() requested before backward()");
    return nodes_[id].grad;
}

void Graph::eval(Node& n) {
    auto& out = n.value;
    out.shape = n.shape;
    out.data.assign(element_count(n.shape), 0.0);
    auto& o = out.data;
    auto P = [&](std::size_t k) -> const std::vector<double>& { return nodes_[n.parents[k]].value.data; };

    switch (n.op) {
    case Op::Input:
    case Op::Constant:
        break;
    case Op::Add: {
        const auto &a = P(0), &b = P(1);
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + b[i];
        break;
    }
    case Op::Sub: {
        const auto &a = P(0), &b = P(1);
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] - b[i];
        break;
    }
    case Op::Mul: {
        const auto &a = P(0), &b = P(1);
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * b[i];
        break;
    }
    case Op::Div: {
        const auto &a = P(0), &b = P(1);
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] / b[i];
        break;
    }
    case Op::MatMul: {
        const auto &a = P(0), &b = P(1);
        std::size_t M = n.shape[0], N = n.shape[1], K = nodes_[n.parents[0]].shape[1];
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t k = 0; k < K; ++k) {
                double av = a[i * K + k];
                if (av == 0.0) continue;
                for (std::size_t j = 0; j < N; ++j) o[i * N + j] += av * b[k * N + j];
            }
        break;
    }
    case Op::Exp: {
        const auto& a = P(0);
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::exp(a[i]);
        break;
    }
    case Op::Log: {
        const auto& a = P(0);
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::log(a[i]);
        break;
    }
    case Op::Pow: {
        const auto& a = P(0);
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::pow(a[i], n.p0);
        break;
    }
    case Op::Sqrt: {
        const auto& a = P(0);
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::sqrt(a[i]);
        break;
    }
    case Op::Clamp: {
        const auto& a = P(0);
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::clamp(a[i], n.p0, n.p1);
        break;
    }
    case Op::Relu: {
        const auto& a = P(0);
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] > 0.0 ? a[i] : 0.0;
        break;
    }
    case Op::Sigmoid: {
        const auto& a = P(0);
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = sigmoid_of(a[i]);
        break;
    }
    case Op::Sum: {
        double s = 0.0;
        for (double v : P(0)) s += v;
        o[0] = s;
        break;
    }
    case Op::Broadcast: {
        const auto& a = P(0);
        for_each_broadcast(nodes_[n.parents[0]].shape, n.shape,
                           [&](std::size_t out, std::size_t src) { o[out] = a[src]; });
        break;
    }
    case Op::Gather: {
        const auto& t = P(0);
        std::size_t C = n.shape[1];
        for (std::size_t r = 0; r < n.rows.size(); ++r)
            std::copy_n(t.begin() + static_cast<std::ptrdiff_t>(n.rows[r] * C), C,
                        o.begin() + static_cast<std::ptrdiff_t>(r * C));
        break;
    }
    case Op::Interpolate: {
        const auto& t = P(0);
        std::size_t C = nodes_[n.parents[0]].shape[1];
        std::size_t points = n.shape[0];
        for (std::size_t p = 0; p < points; ++p)
            for (std::size_t g = 0; g < n.groups; ++g) {
                double* dst = &o[p * n.groups * C + g * C];
                std::size_t base = (p * n.groups + g) * n.corners;
                for (std::size_t k = 0; k < n.corners; ++k) {
                    double w = n.weights[base + k];
                    const double* src = &t[n.rows[base + k] * C];
                    for (std::size_t c = 0; c < C; ++c) dst[c] += w * src[c];
                }
            }
        break;
    }
    case Op::Lerp: {
        const auto &v = P(0), &u = P(1);
        const auto& sv = nodes_[n.parents[0]].shape;
        std::size_t N = sv[0], K = sv[1], C = sv[2];
        for (std::size_t r = 0; r < N; ++r) {
            double pos = std::clamp(u[r], 0.0, 1.0) * static_cast<double>(K - 1);
            auto i = std::min(static_cast<std::size_t>(pos), K - 2);
            double f = pos - static_cast<double>(i);
            for (std::size_t c = 0; c < C; ++c)
                o[r * C + c] = (1.0 - f) * v[(r * K + i) * C + c] + f * v[(r * K + i + 1) * C + c];
        }
        break;
    }
    }
}

std::vector<Tensor> Graph::backward(NodeId output, const Tensor& seed) {
    check_id(output);
    if (!evaluated_) throw StateError("backward() called before forward()");
    if (seed.shape != nodes_[output].shape && seed.data.size() != element_count(nodes_[output].shape))
        throw ShapeError(output, "seed shape " + to_string(seed.shape) + " does not match output " +
                                     to_string(nodes_[output].shape));

    for (auto& n : nodes_) n.grad = Tensor();
    nodes_[output].grad = Tensor(nodes_[output].shape, seed.data);

    // Node ids are already a topological order: every parent precedes its child.
    for (std::size_t id = output + 1; id-- > 0;) {
        auto& n = nodes_[id];
        if (n.grad.data.empty() || n.parents.empty()) continue;
        propagate(n);
    }
    differentiated_ = true;

    std::vector<Tensor> grads;
    grads.reserve(inputs_.size());
    for (auto id : inputs_) {
        auto& n = nodes_[id];
        if (!n.requires_grad) {
            grads.emplace_back();
        } else if (n.grad.data.empty()) {
            grads.push_back(Tensor::zeros(n.shape));
        } else {
            grads.push_back(n.grad);
        }
    }
    return grads;
}

void Graph::propagate(Node& n) {
    const auto& g = n.grad.data;
    auto acc = [&](std::size_t k) -> std::vector<double>& {
        auto& p = nodes_[n.parents[k]];
        if (p.grad.data.empty()) p.grad = Tensor::zeros(p.shape);
        return p.grad.data;
    };
    auto V = [&](std::size_t k) -> const std::vector<double>& { return nodes_[n.parents[k]].value.data; };
    const auto& y = n.value.data;

    switch (n.op) {
    case Op::Input:
    case Op::Constant:
        break;
    case Op::Add: {
        auto& ga = acc(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        auto& gb = acc(1);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        break;
    }
    case Op::Sub: {
        auto& ga = acc(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        auto& gb = acc(1);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        break;
    }
    case Op::Mul: {
        const auto &a = V(0), &b = V(1);
        auto& ga = acc(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
        auto& gb = acc(1);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
        break;
    }
    case Op::Div: {
        const auto &a = V(0), &b = V(1);
        auto& ga = acc(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / b[i];
        auto& gb = acc(1);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * a[i] / (b[i] * b[i]);
        break;
    }
    case Op::MatMul: {
        const auto &a = V(0), &b = V(1);
        std::size_t M = n.shape[0], N = n.shape[1], K = nodes_[n.parents[0]].shape[1];
        auto& ga = acc(0);
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t k = 0; k < K; ++k) {
                double s = 0.0;
                for (std::size_t j = 0; j < N; ++j) s += g[i * N + j] * b[k * N + j];
                ga[i * K + k] += s;
            }
        auto& gb = acc(1);
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t k = 0; k < K; ++k) {
                double av = a[i * K + k];
                if (av == 0.0) continue;
                for (std::size_t j = 0; j < N; ++j) gb[k * N + j] += av * g[i * N + j];
            }
        break;
    }
    case Op::Exp: {
        auto& ga = acc(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        break;
    }
    case Op::Log: {
        const auto& a = V(0);
        auto& ga = acc(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / a[i];
        break;
    }
    case Op::Pow: {
        const auto& a = V(0);
        auto& ga = acc(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.p0 * std::pow(a[i], n.p0 - 1.0);
        break;
    }
    case Op::Sqrt: {
        auto& ga = acc(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * 0.5 / y[i];
        break;
    }
    case Op::Clamp: {
        const auto& a = V(0);
        auto& ga = acc(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            bool pass = n.clamp_mode == ClampGrad::StraightThrough || (a[i] > n.p0 && a[i] < n.p1);
            if (pass) ga[i] += g[i];
        }
        break;
    }
    case Op::Relu: {
        const auto& a = V(0);
        auto& ga = acc(0);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (a[i] > 0.0) ga[i] += g[i];
        break;
    }
    case Op::Sigmoid: {
        auto& ga = acc(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
    }
    case Op::Sum: {
        auto& ga = acc(0);
        for (auto& v : ga) v += g[0];
        break;
    }
    case Op::Broadcast: {
        auto& ga = acc(0);
        for_each_broadcast(nodes_[n.parents[0]].shape, n.shape,
                           [&](std::size_t out, std::size_t src) { ga[src] += g[out]; });
        break;
    }
    case Op::Gather: {
        auto& ga = acc(0);
        std::size_t C = n.shape[1];
        for (std::size_t r = 0; r < n.rows.size(); ++r)
            for (std::size_t c = 0; c < C; ++c) ga[n.rows[r] * C + c] += g[r * C + c];
        break;
    }
    case Op::Interpolate: {
        auto& ga = acc(0);
        std::size_t C = nodes_[n.parents[0]].shape[1];
        std::size_t points = n.shape[0];
        for (std::size_t p = 0; p < points; ++p)
            for (std::size_t grp = 0; grp < n.groups; ++grp) {
                const double* src = &g[p * n.groups * C + grp * C];
                std::size_t base = (p * n.groups + grp) * n.corners;
                for (std::size_t k = 0; k < n.corners; ++k) {
                    double w = n.weights[base + k];
                    double* dst = &ga[n.rows[base + k] * C];
                    for (std::size_t c = 0; c < C; ++c) dst[c] += w * src[c];
                }
            }
        break;
    }
    case Op::Lerp: {
        const auto &v = V(0), &u = V(1);
        const auto& sv = nodes_[n.parents[0]].shape;
        std::size_t N = sv[0], K = sv[1], C = sv[2];
        auto& gv = acc(0);
        auto& gu = acc(1);
        for (std::size_t r = 0; r < N; ++r) {
            bool inside = u[r] > 0.0 && u[r] < 1.0;
            double pos = std::clamp(u[r], 0.0, 1.0) * static_cast<double>(K - 1);
            auto i = std::min(static_cast<std::size_t>(pos), K - 2);
            double f = pos - static_cast<double>(i);
            double du = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                double gi = g[r * C + c];
                gv[(r * K + i) * C + c] += (1.0 - f) * gi;
                gv[(r * K + i + 1) * C + c] += f * gi;
                du += gi * (v[(r * K + i + 1) * C + c] - v[(r * K + i) * C + c]);
            }
            if (inside) gu[r] += du * static_cast<double>(K - 1);
        }
        break;
    }
    }
}

}  // namespace dsdtex::ad
