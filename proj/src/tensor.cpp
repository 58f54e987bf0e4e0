#include "nofas/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nofas::ad {

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::leaf: return "leaf";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::div: return "div";
        case OpKind::matmul: return "matmul";
        case OpKind::exp: return "exp";
        case OpKind::log: return "log";
        case OpKind::tanh: return "tanh";
        case OpKind::relu: return "relu";
        case OpKind::softmax: return "softmax";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::square: return "square";
        case OpKind::neg: return "neg";
        case OpKind::broadcast: return "broadcast";
        case OpKind::slice: return "slice";
        case OpKind::concat: return "concat";
        case OpKind::max: return "max";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_size(shape) != data.size())
        throw Error("tensor: shape " + shape_str(shape) + " does not match data length " +
                    std::to_string(data.size()));
    impl_ = std::make_shared<Impl>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor({1}, {v}, requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> d(shape_size(shape), 0.0);
    return Tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    std::vector<double> d(shape_size(shape), v);
    return Tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::row_major(std::size_t rows, std::size_t cols, std::vector<double> data,
                         bool requires_grad) {
    return Tensor({rows, cols}, std::move(data), requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::size() const { return impl_->data.size(); }

std::size_t Tensor::rows() const {
    if (impl_->shape.size() != 2) throw Error("tensor: rows() on non-2D tensor");
    return impl_->shape[0];
}

std::size_t Tensor::cols() const {
    if (impl_->shape.size() != 2) throw Error("tensor: cols() on non-2D tensor");
    return impl_->shape[1];
}

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::value() const {
    if (size() != 1) throw Error("tensor: value() on non-scalar of shape " + shape_str(shape()));
    return impl_->data[0];
}

double Tensor::at(std::size_t i) const { return impl_->data.at(i); }

double Tensor::at(std::size_t r, std::size_t c) const {
    return impl_->data.at(r * cols() + c);
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool rg) { impl_->requires_grad = rg; }

Tensor Tensor::detach() const {
    return Tensor(impl_->shape, impl_->data, false);
}

std::uint64_t Tensor::traced_graph() const { return impl_ ? impl_->graph_id : 0; }
std::int64_t Tensor::traced_node() const { return impl_ ? impl_->node : -1; }

void Tensor::tag(std::uint64_t graph_id, std::int64_t node) const {
    impl_->graph_id = graph_id;
    impl_->node = node;
}

// ---------------------------------------------------------------------------
// Graph

namespace {
thread_local Graph* g_current = nullptr;
std::uint64_t next_graph_id() {
    static thread_local std::uint64_t counter = 0;
    return ++counter;
}
}  // namespace

Graph::Graph() : id_(next_graph_id()) {
    prev_ = g_current;
    g_current = this;
}

Graph::~Graph() { g_current = prev_; }

Graph* Graph::current() { return g_current; }

std::int64_t Graph::ensure_traced(const Tensor& t) {
    if (t.traced_graph() == id_ && t.traced_node() >= 0) return t.traced_node();
    if (!t.requires_grad()) return -1;
    std::int64_t node = static_cast<std::int64_t>(nodes_.size());
    nodes_.push_back(Node{OpKind::leaf, {}, t.size(), nullptr});
    leaves_.push_back(LeafRecord{node, t});
    t.tag(id_, node);
    return node;
}

std::int64_t Graph::emit(OpKind kind, const Tensor& out, std::vector<std::int64_t> inputs,
                         BackwardFn fn) {
    std::int64_t node = static_cast<std::int64_t>(nodes_.size());
    nodes_.push_back(Node{kind, std::move(inputs), out.size(), std::move(fn)});
    out.tag(id_, node);
    return node;
}

GradientMap Graph::backward(const Tensor& root) {
    if (root.size() != 1)
        throw Error("backward: root must be scalar, got shape " + shape_str(root.shape()));
    if (root.traced_graph() != id_ || root.traced_node() < 0)
        throw Error("backward: root is not traced in this graph");

    std::vector<std::vector<double>> grad(nodes_.size());
    const std::int64_t root_node = root.traced_node();
    grad[static_cast<std::size_t>(root_node)].assign(1, 1.0);

    for (std::int64_t i = root_node; i >= 0; --i) {
        auto& g = grad[static_cast<std::size_t>(i)];
        if (g.empty()) continue;
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.kind == OpKind::leaf || !n.backward) continue;
        GradResolver resolver = [&](std::size_t slot) -> double* {
            std::int64_t in = n.inputs[slot];
            if (in < 0) return nullptr;
            auto& buf = grad[static_cast<std::size_t>(in)];
            if (buf.empty()) buf.assign(nodes_[static_cast<std::size_t>(in)].out_size, 0.0);
            return buf.data();
        };
        n.backward(g.data(), resolver);
        if (i != root_node) {
            g.clear();
            g.shrink_to_fit();
        }
    }

    GradientMap out;
    out.graph_id_ = id_;
    for (const LeafRecord& leaf : leaves_) {
        auto& buf = grad[static_cast<std::size_t>(leaf.node)];
        std::vector<double> gvals = buf.empty()
                                        ? std::vector<double>(leaf.tensor.size(), 0.0)
                                        : std::move(buf);
        out.grads_.emplace(leaf.node, Tensor(leaf.tensor.shape(), std::move(gvals)));
    }
    return out;
}

bool GradientMap::contains(const Tensor& t) const {
    return t.traced_graph() == graph_id_ && grads_.count(t.traced_node()) > 0;
}

const Tensor& GradientMap::at(const Tensor& t) const {
    if (!contains(t))
        throw Error("gradient map: tensor was not a traced leaf of this graph");
    return grads_.at(t.traced_node());
}

// ---------------------------------------------------------------------------
// Op helpers

namespace {

bool graph_wants(const Tensor& t) {
    Graph* g = Graph::current();
    if (!g) return false;
    return t.requires_grad() || (t.traced_graph() == g->id() && t.traced_node() >= 0);
}

void trace_op(OpKind kind, std::initializer_list<const Tensor*> ins, const Tensor& out,
              BackwardFn fn) {
    Graph* g = Graph::current();
    if (!g) return;
    bool any = false;
    for (const Tensor* t : ins)
        if (graph_wants(*t)) { any = true; break; }
    if (!any) return;
    std::vector<std::int64_t> ids;
    ids.reserve(ins.size());
    for (const Tensor* t : ins) ids.push_back(g->ensure_traced(*t));
    g->emit(kind, out, std::move(ids), std::move(fn));
}

void check_same_shape(OpKind kind, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw Error(std::string(op_name(kind)) + ": shape mismatch " + shape_str(a.shape()) +
                    " vs " + shape_str(b.shape()));
}

Tensor binary_elementwise(OpKind kind, const Tensor& a, const Tensor& b,
                          double (*fwd)(double, double),
                          void (*bwd)(const double* g, const Tensor& a, const Tensor& b,
                                      double* ga, double* gb)) {
    check_same_shape(kind, a, b);
    std::vector<double> out(a.size());
    auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(da[i], db[i]);
    Tensor r(a.shape(), std::move(out));
    trace_op(kind, {&a, &b}, r, [a, b, bwd](const double* g, const GradResolver& gin) {
        bwd(g, a, b, gin(0), gin(1));
    });
    return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Arithmetic

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        OpKind::add, a, b, [](double x, double y) { return x + y; },
        [](const double* g, const Tensor& a, const Tensor& b, double* ga, double* gb) {
            const std::size_t n = a.size();
            (void)b;
            if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
            if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        OpKind::sub, a, b, [](double x, double y) { return x - y; },
        [](const double* g, const Tensor& a, const Tensor& b, double* ga, double* gb) {
            const std::size_t n = a.size();
            (void)b;
            if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
            if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        OpKind::mul, a, b, [](double x, double y) { return x * y; },
        [](const double* g, const Tensor& a, const Tensor& b, double* ga, double* gb) {
            const std::size_t n = a.size();
            auto da = a.data(), db = b.data();
            if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * db[i];
            if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * da[i];
        });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        OpKind::div, a, b, [](double x, double y) { return x / y; },
        [](const double* g, const Tensor& a, const Tensor& b, double* ga, double* gb) {
            const std::size_t n = a.size();
            auto da = a.data(), db = b.data();
            if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] / db[i];
            if (gb)
                for (std::size_t i = 0; i < n; ++i)
                    gb[i] -= g[i] * da[i] / (db[i] * db[i]);
        });
}

Tensor add(const Tensor& a, double b) { return add(a, Tensor::full(a.shape(), b)); }
Tensor sub(const Tensor& a, double b) { return sub(a, Tensor::full(a.shape(), b)); }
Tensor sub(double a, const Tensor& b) { return sub(Tensor::full(b.shape(), a), b); }
Tensor mul(const Tensor& a, double b) { return mul(a, Tensor::full(a.shape(), b)); }
Tensor div(const Tensor& a, double b) { return div(a, Tensor::full(a.shape(), b)); }

Tensor elementwise_max(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        OpKind::max, a, b, [](double x, double y) { return x >= y ? x : y; },
        [](const double* g, const Tensor& a, const Tensor& b, double* ga, double* gb) {
            const std::size_t n = a.size();
            auto da = a.data(), db = b.data();
            for (std::size_t i = 0; i < n; ++i) {
                if (da[i] >= db[i]) {
                    if (ga) ga[i] += g[i];
                } else if (gb) {
                    gb[i] += g[i];
                }
            }
        });
}

// ---------------------------------------------------------------------------
// matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
    const bool vec_rhs = b.shape().size() == 1;
    if (a.shape().size() != 2 || (b.shape().size() != 2 && !vec_rhs))
        throw Error("matmul: operands must be 2-D (or a 1-D right operand), got " +
                    shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const std::size_t n = a.shape()[0];
    const std::size_t k = a.shape()[1];
    const std::size_t kb = vec_rhs ? b.shape()[0] : b.shape()[0];
    const std::size_t m = vec_rhs ? 1 : b.shape()[1];
    if (k != kb)
        throw Error("matmul: shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));

    std::vector<double> out(n * m, 0.0);
    {
        const double* pa = a.data().data();
        const double* pb = b.data().data();
        for (std::size_t i = 0; i < n; ++i) {
            double* po = out.data() + i * m;
            const double* pai = pa + i * k;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double av = pai[kk];
                if (av == 0.0) continue;
                const double* pbk = pb + kk * m;
                for (std::size_t j = 0; j < m; ++j) po[j] += av * pbk[j];
            }
        }
    }
    Tensor r(vec_rhs ? Shape{n} : Shape{n, m}, std::move(out));
    trace_op(OpKind::matmul, {&a, &b}, r,
             [a, b, n, k, m](const double* g, const GradResolver& gin) {
                 const double* pa = a.data().data();
                 const double* pb = b.data().data();
                 if (double* ga = gin(0)) {
                     // ga += g * b^T
                     for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t kk = 0; kk < k; ++kk) {
                             double acc = 0.0;
                             const double* gi = g + i * m;
                             const double* pbk = pb + kk * m;
                             for (std::size_t j = 0; j < m; ++j) acc += gi[j] * pbk[j];
                             ga[i * k + kk] += acc;
                         }
                 }
                 if (double* gb = gin(1)) {
                     // gb += a^T * g
                     for (std::size_t i = 0; i < n; ++i) {
                         const double* pai = pa + i * k;
                         const double* gi = g + i * m;
                         for (std::size_t kk = 0; kk < k; ++kk) {
                             const double av = pai[kk];
                             if (av == 0.0) continue;
                             double* gbk = gb + kk * m;
                             for (std::size_t j = 0; j < m; ++j) gbk[j] += av * gi[j];
                         }
                     }
                 }
             });
    return r;
}

// ---------------------------------------------------------------------------
// Unary ops

namespace {

Tensor unary_elementwise(OpKind kind, const Tensor& a, double (*fwd)(double),
                         BackwardFn bwd) {
    std::vector<double> out(a.size());
    auto da = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(da[i]);
    Tensor r(a.shape(), std::move(out));
    trace_op(kind, {&a}, r, std::move(bwd));
    return r;
}

}  // namespace

Tensor exp(const Tensor& a) {
    std::vector<double> out(a.size());
    auto da = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(da[i]);
    Tensor r(a.shape(), std::move(out));
    trace_op(OpKind::exp, {&a}, r, [r](const double* g, const GradResolver& gin) {
        if (double* ga = gin(0)) {
            auto ov = r.data();
            for (std::size_t i = 0; i < ov.size(); ++i) ga[i] += g[i] * ov[i];
        }
    });
    return r;
}

Tensor log(const Tensor& a) {
    auto da = a.data();
    for (std::size_t i = 0; i < da.size(); ++i)
        if (!(da[i] > 0.0))
            throw Error("log: non-positive input " + std::to_string(da[i]) + " at index " +
                        std::to_string(i));
    return unary_elementwise(OpKind::log, a, [](double x) { return std::log(x); },
                             [a](const double* g, const GradResolver& gin) {
                                 if (double* ga = gin(0)) {
                                     auto dv = a.data();
                                     for (std::size_t i = 0; i < dv.size(); ++i)
                                         ga[i] += g[i] / dv[i];
                                 }
                             });
}

Tensor tanh(const Tensor& a) {
    std::vector<double> out(a.size());
    auto da = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(da[i]);
    Tensor r(a.shape(), std::move(out));
    trace_op(OpKind::tanh, {&a}, r, [r](const double* g, const GradResolver& gin) {
        if (double* ga = gin(0)) {
            auto ov = r.data();
            for (std::size_t i = 0; i < ov.size(); ++i) ga[i] += g[i] * (1.0 - ov[i] * ov[i]);
        }
    });
    return r;
}

Tensor relu(const Tensor& a) {
    return unary_elementwise(OpKind::relu, a, [](double x) { return x > 0.0 ? x : 0.0; },
                             [a](const double* g, const GradResolver& gin) {
                                 if (double* ga = gin(0)) {
                                     auto dv = a.data();
                                     // subgradient at 0 is 0
                                     for (std::size_t i = 0; i < dv.size(); ++i)
                                         if (dv[i] > 0.0) ga[i] += g[i];
                                 }
                             });
}

Tensor square(const Tensor& a) {
    return unary_elementwise(OpKind::square, a, [](double x) { return x * x; },
                             [a](const double* g, const GradResolver& gin) {
                                 if (double* ga = gin(0)) {
                                     auto dv = a.data();
                                     for (std::size_t i = 0; i < dv.size(); ++i)
                                         ga[i] += 2.0 * g[i] * dv[i];
                                 }
                             });
}

Tensor neg(const Tensor& a) {
    return unary_elementwise(OpKind::neg, a, [](double x) { return -x; },
                             [a](const double* g, const GradResolver& gin) {
                                 if (double* ga = gin(0))
                                     for (std::size_t i = 0; i < a.size(); ++i) ga[i] -= g[i];
                             });
}

Tensor softmax(const Tensor& a) {
    const std::size_t rank = a.shape().size();
    if (rank != 1 && rank != 2)
        throw Error("softmax: expected 1-D or 2-D input, got " + shape_str(a.shape()));
    const std::size_t rows = rank == 1 ? 1 : a.shape()[0];
    const std::size_t cols = rank == 1 ? a.shape()[0] : a.shape()[1];
    std::vector<double> out(a.size());
    auto da = a.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = da.data() + r * cols;
        double* y = out.data() + r * cols;
        double mx = x[0];
        for (std::size_t i = 1; i < cols; ++i) mx = std::max(mx, x[i]);
        double s = 0.0;
        for (std::size_t i = 0; i < cols; ++i) {
            y[i] = std::exp(x[i] - mx);
            s += y[i];
        }
        for (std::size_t i = 0; i < cols; ++i) y[i] /= s;
    }
    Tensor r(a.shape(), std::move(out));
    trace_op(OpKind::softmax, {&a}, r,
             [r, rows, cols](const double* g, const GradResolver& gin) {
                 if (double* ga = gin(0)) {
                     auto sv = r.data();
                     for (std::size_t row = 0; row < rows; ++row) {
                         const double* s = sv.data() + row * cols;
                         const double* gr = g + row * cols;
                         double dot = 0.0;
                         for (std::size_t i = 0; i < cols; ++i) dot += gr[i] * s[i];
                         double* gar = ga + row * cols;
                         for (std::size_t i = 0; i < cols; ++i)
                             gar[i] += s[i] * (gr[i] - dot);
                     }
                 }
             });
    return r;
}

// ---------------------------------------------------------------------------
// Reductions

namespace {

Tensor reduce(OpKind kind, const Tensor& a, int axis, bool take_mean) {
    const Shape& s = a.shape();
    auto da = a.data();
    if (axis == kAllAxes) {
        double acc = 0.0;
        for (double v : da) acc += v;
        const double scale = take_mean ? 1.0 / static_cast<double>(a.size()) : 1.0;
        Tensor r = Tensor::scalar(acc * scale);
        trace_op(kind, {&a}, r, [a, scale](const double* g, const GradResolver& gin) {
            if (double* ga = gin(0)) {
                const double gv = g[0] * scale;
                for (std::size_t i = 0; i < a.size(); ++i) ga[i] += gv;
            }
        });
        return r;
    }
    if (s.size() != 2 || (axis != 0 && axis != 1))
        throw Error(std::string(op_name(kind)) + ": axis reduction needs a 2-D tensor, got " +
                    shape_str(s) + " axis " + std::to_string(axis));
    const std::size_t R = s[0], C = s[1];
    if (axis == 0) {
        std::vector<double> out(C, 0.0);
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) out[c] += da[r * C + c];
        const double scale = take_mean ? 1.0 / static_cast<double>(R) : 1.0;
        if (take_mean)
            for (double& v : out) v *= scale;
        Tensor r(Shape{C}, std::move(out));
        trace_op(kind, {&a}, r, [R, C, scale](const double* g, const GradResolver& gin) {
            if (double* ga = gin(0))
                for (std::size_t r = 0; r < R; ++r)
                    for (std::size_t c = 0; c < C; ++c) ga[r * C + c] += g[c] * scale;
        });
        return r;
    }
    std::vector<double> out(R, 0.0);
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out[r] += da[r * C + c];
    const double scale = take_mean ? 1.0 / static_cast<double>(C) : 1.0;
    if (take_mean)
        for (double& v : out) v *= scale;
    Tensor r(Shape{R}, std::move(out));
    trace_op(kind, {&a}, r, [R, C, scale](const double* g, const GradResolver& gin) {
        if (double* ga = gin(0))
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) ga[r * C + c] += g[r] * scale;
    });
    return r;
}

}  // namespace

Tensor sum(const Tensor& a, int axis) { return reduce(OpKind::sum, a, axis, false); }
Tensor mean(const Tensor& a, int axis) { return reduce(OpKind::mean, a, axis, true); }

// ---------------------------------------------------------------------------
// Shape ops

Tensor broadcast(const Tensor& a, const Shape& target) {
    const Shape& s = a.shape();
    if (s == target) return a;
    if (target.size() > 2 || s.size() > target.size())
        throw Error("broadcast: cannot expand " + shape_str(s) + " to " + shape_str(target));
    // Right-align source dims; missing leading dims count as 1.
    Shape src(target.size(), 1);
    for (std::size_t i = 0; i < s.size(); ++i)
        src[target.size() - s.size() + i] = s[i];
    for (std::size_t i = 0; i < target.size(); ++i)
        if (src[i] != target[i] && src[i] != 1)
            throw Error("broadcast: cannot expand " + shape_str(s) + " to " + shape_str(target));

    auto da = a.data();
    std::vector<double> out(shape_size(target));
    if (target.size() == 1) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[0];
    } else {
        const std::size_t R = target[0], C = target[1];
        const std::size_t sr = src[0], sc = src[1];
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c)
                out[r * C + c] = da[(sr == 1 ? 0 : r) * sc + (sc == 1 ? 0 : c)];
    }
    Tensor r(target, std::move(out));
    trace_op(OpKind::broadcast, {&a}, r,
             [a, src, target](const double* g, const GradResolver& gin) {
                 double* ga = gin(0);
                 if (!ga) return;
                 if (target.size() == 1) {
                     double acc = 0.0;
                     for (std::size_t i = 0; i < target[0]; ++i) acc += g[i];
                     ga[0] += acc;
                     return;
                 }
                 const std::size_t R = target[0], C = target[1];
                 const std::size_t sr = src[0], sc = src[1];
                 for (std::size_t r = 0; r < R; ++r)
                     for (std::size_t c = 0; c < C; ++c)
                         ga[(sr == 1 ? 0 : r) * sc + (sc == 1 ? 0 : c)] += g[r * C + c];
             });
    return r;
}

Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t len) {
    const Shape& s = a.shape();
    if (s.size() == 1) {
        if (axis != 0 || start + len > s[0])
            throw Error("slice: out of range on " + shape_str(s));
        auto da = a.data();
        std::vector<double> out(da.begin() + static_cast<std::ptrdiff_t>(start),
                                da.begin() + static_cast<std::ptrdiff_t>(start + len));
        Tensor r(Shape{len}, std::move(out));
        trace_op(OpKind::slice, {&a}, r, [start, len](const double* g, const GradResolver& gin) {
            if (double* ga = gin(0))
                for (std::size_t i = 0; i < len; ++i) ga[start + i] += g[i];
        });
        return r;
    }
    if (s.size() != 2 || (axis != 0 && axis != 1))
        throw Error("slice: expected 1-D or 2-D tensor, got " + shape_str(s));
    const std::size_t R = s[0], C = s[1];
    auto da = a.data();
    if (axis == 0) {
        if (start + len > R) throw Error("slice: row range out of bounds on " + shape_str(s));
        std::vector<double> out(da.begin() + static_cast<std::ptrdiff_t>(start * C),
                                da.begin() + static_cast<std::ptrdiff_t>((start + len) * C));
        Tensor r(Shape{len, C}, std::move(out));
        trace_op(OpKind::slice, {&a}, r,
                 [start, len, C](const double* g, const GradResolver& gin) {
                     if (double* ga = gin(0))
                         for (std::size_t i = 0; i < len * C; ++i) ga[start * C + i] += g[i];
                 });
        return r;
    }
    if (start + len > C) throw Error("slice: column range out of bounds on " + shape_str(s));
    std::vector<double> out(R * len);
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < len; ++c) out[r * len + c] = da[r * C + start + c];
    Tensor r(Shape{R, len}, std::move(out));
    trace_op(OpKind::slice, {&a}, r,
             [R, C, start, len](const double* g, const GradResolver& gin) {
                 if (double* ga = gin(0))
                     for (std::size_t r = 0; r < R; ++r)
                         for (std::size_t c = 0; c < len; ++c)
                             ga[r * C + start + c] += g[r * len + c];
             });
    return r;
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != sb.size()) throw Error("concat: rank mismatch");
    auto da = a.data(), db = b.data();
    if (sa.size() == 1) {
        if (axis != 0) throw Error("concat: bad axis for 1-D tensors");
        std::vector<double> out;
        out.reserve(da.size() + db.size());
        out.insert(out.end(), da.begin(), da.end());
        out.insert(out.end(), db.begin(), db.end());
        Tensor r(Shape{da.size() + db.size()}, std::move(out));
        const std::size_t na = da.size(), nb = db.size();
        trace_op(OpKind::concat, {&a, &b}, r,
                 [na, nb](const double* g, const GradResolver& gin) {
                     if (double* ga = gin(0))
                         for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                     if (double* gb = gin(1))
                         for (std::size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
                 });
        return r;
    }
    if (sa.size() != 2 || (axis != 0 && axis != 1))
        throw Error("concat: expected 1-D or 2-D tensors");
    if (axis == 0) {
        if (sa[1] != sb[1]) throw Error("concat: column mismatch " + shape_str(sa) + " vs " +
                                        shape_str(sb));
        std::vector<double> out;
        out.reserve(da.size() + db.size());
        out.insert(out.end(), da.begin(), da.end());
        out.insert(out.end(), db.begin(), db.end());
        Tensor r(Shape{sa[0] + sb[0], sa[1]}, std::move(out));
        const std::size_t na = da.size(), nb = db.size();
        trace_op(OpKind::concat, {&a, &b}, r,
                 [na, nb](const double* g, const GradResolver& gin) {
                     if (double* ga = gin(0))
                         for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                     if (double* gb = gin(1))
                         for (std::size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
                 });
        return r;
    }
    if (sa[0] != sb[0])
        throw Error("concat: row mismatch " + shape_str(sa) + " vs " + shape_str(sb));
    const std::size_t R = sa[0], Ca = sa[1], Cb = sb[1];
    std::vector<double> out(R * (Ca + Cb));
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < Ca; ++c) out[r * (Ca + Cb) + c] = da[r * Ca + c];
        for (std::size_t c = 0; c < Cb; ++c) out[r * (Ca + Cb) + Ca + c] = db[r * Cb + c];
    }
    Tensor r(Shape{R, Ca + Cb}, std::move(out));
    trace_op(OpKind::concat, {&a, &b}, r,
             [R, Ca, Cb](const double* g, const GradResolver& gin) {
                 double* ga = gin(0);
                 double* gb = gin(1);
                 const std::size_t C = Ca + Cb;
                 for (std::size_t r = 0; r < R; ++r) {
                     if (ga)
                         for (std::size_t c = 0; c < Ca; ++c) ga[r * Ca + c] += g[r * C + c];
                     if (gb)
                         for (std::size_t c = 0; c < Cb; ++c)
                             gb[r * Cb + c] += g[r * C + Ca + c];
                 }
             });
    return r;
}

}  // namespace nofas::ad
