#ifndef NOFAS_TENSOR_HPP
#define NOFAS_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace nofas {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

enum class OpKind {
    leaf,
    add,
    sub,
    mul,
    div,
    matmul,
    exp,
    log,
    tanh,
    relu,
    softmax,
    sum,
    mean,
    square,
    neg,
    broadcast,
    slice,
    concat,
    max,
};

const char* op_name(OpKind k);

class Graph;

/// Dense row-major tensor of 64-bit floats. Copies share storage; the data
/// of a tensor that participates in a graph is treated as immutable until
/// the graph is discarded. `mutable_data` exists for optimizer updates
/// between steps.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor row_major(std::size_t rows, std::size_t cols, std::vector<double> data,
                            bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t rows() const;
    std::size_t cols() const;
    std::span<const double> data() const;
    std::span<double> mutable_data();
    double value() const;
    double at(std::size_t i) const;
    double at(std::size_t r, std::size_t c) const;

    bool requires_grad() const;
    void set_requires_grad(bool rg);

    /// Value-only copy detached from any graph.
    Tensor detach() const;

    // Trace bookkeeping, used by ops and the graph. A tag from a dead graph
    // is simply ignored by the next one.
    std::uint64_t traced_graph() const;
    std::int64_t traced_node() const;
    void tag(std::uint64_t graph_id, std::int64_t node) const;
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    struct Impl {
        Shape shape;
        std::vector<double> data;
        bool requires_grad = false;
        mutable std::uint64_t graph_id = 0;
        mutable std::int64_t node = -1;
    };
    std::shared_ptr<Impl> impl_;
};

class GradientMap {
public:
    bool contains(const Tensor& t) const;
    /// Gradient of the backward root with respect to `t`. Throws if `t` was
    /// not a traced leaf of the graph that produced this map.
    const Tensor& at(const Tensor& t) const;
    std::size_t size() const { return grads_.size(); }

private:
    friend class Graph;
    std::uint64_t graph_id_ = 0;
    std::unordered_map<std::int64_t, Tensor> grads_;
};

/// Resolves the gradient accumulation buffer for input slot `i` of a node,
/// or nullptr when that input is a constant.
using GradResolver = std::function<double*(std::size_t)>;
using BackwardFn = std::function<void(const double* out_grad, const GradResolver& grad_in)>;

/// Reverse-mode tape. Constructing a Graph makes it the active graph for the
/// current thread; ops trace into it whenever an input requires a gradient.
/// One graph per optimization step; discard after backward.
class Graph {
public:
    Graph();
    ~Graph();
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    static Graph* current();

    std::uint64_t id() const { return id_; }
    std::size_t node_count() const { return nodes_.size(); }

    /// Gradients of a scalar root with respect to every traced leaf that
    /// requires a gradient. Leaves the root does not depend on get zeros.
    GradientMap backward(const Tensor& root);

    // Used by op implementations.
    std::int64_t ensure_traced(const Tensor& t);
    std::int64_t emit(OpKind kind, const Tensor& out, std::vector<std::int64_t> inputs,
                      BackwardFn fn);

private:
    struct Node {
        OpKind kind;
        std::vector<std::int64_t> inputs;
        std::size_t out_size;
        BackwardFn backward;
    };
    struct LeafRecord {
        std::int64_t node;
        Tensor tensor;
    };
    std::vector<Node> nodes_;
    std::vector<LeafRecord> leaves_;
    std::uint64_t id_;
    Graph* prev_ = nullptr;
};

// Elementwise ops require identical shapes; use broadcast() to expand first.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, double b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor div(const Tensor& a, double b);

/// [n,k] x [k,m] -> [n,m]; a 1-D right operand [k] is treated as a column,
/// giving [n].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor neg(const Tensor& a);
/// Stable softmax along the last axis.
Tensor softmax(const Tensor& a);
Tensor elementwise_max(const Tensor& a, const Tensor& b);

constexpr int kAllAxes = -1;
Tensor sum(const Tensor& a, int axis = kAllAxes);
Tensor mean(const Tensor& a, int axis = kAllAxes);

/// Expand to `target`: source dims are right-aligned and must match or be 1;
/// a missing leading dim counts as 1.
Tensor broadcast(const Tensor& a, const Shape& target);
Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t len);
Tensor concat(const Tensor& a, const Tensor& b, int axis);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace ad
}  // namespace nofas

#endif
