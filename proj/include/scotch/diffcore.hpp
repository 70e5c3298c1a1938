#pragma once

// Tape-based reverse-mode differentiation over dense row-major arrays.
//
// A Tape owns every node created during one forward pass. Nodes are appended
// in creation order, so parents always precede children and the backward
// sweep simply walks the node list in reverse. The tape is rebuilt for every
// training step; parameters enter as leaves and their gradients are read back
// after backward().
//
// Most ops view their operands as matrices: rank 0 is 1x1, rank 1 of length n
// is a 1xn row, rank 2 is itself. Binary elementwise ops broadcast a 1x1
// scalar, a 1xc row or an rx1 column against an rxc operand.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <new>
#include <vector>

namespace scotch::ad {

using Shape = std::vector<std::size_t>;

// Every buffer starts on a cache line, so vectorized reductions split the
// data the same way wherever it lives and results stay bitwise reproducible.
template <class T>
struct CacheAlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    CacheAlignedAllocator() = default;
    template <class U>
    CacheAlignedAllocator(const CacheAlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    bool operator==(const CacheAlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, CacheAlignedAllocator<double>>;

std::string shape_string(const Shape& shape);

class Array {
public:
    Array() = default;
    explicit Array(Shape shape, double fill = 0.0);
    Array(Shape shape, std::vector<double> data);

    static Array scalar(double v);
    static Array vector(std::vector<double> v);
    static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Array matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Array identity(std::size_t n);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t rows() const noexcept;
    std::size_t cols() const noexcept;

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double item() const;

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    Array reshaped(Shape shape) const;
    bool all_finite() const noexcept;

    friend bool operator==(const Array&, const Array&) = default;

private:
    Shape shape_;
    Buffer data_;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

    const Array& value() const;
    const Array& grad() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    // Receives the gradient of the output node; accumulates into parents.
    using BackwardFn = std::function<void(Tape&, const Array& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // A leaf whose gradient is retained after backward().
    Var leaf(Array value);
    // A value that needs no gradient.
    Var constant(Array value);

    // Records an op result. requires_grad should be true when any parent needs
    // a gradient; when false the closure is dropped.
    Var record(Array value, bool requires_grad, BackwardFn backward);

    // Reverse sweep from a scalar root. Leaf gradients are zeroed first, so
    // calling backward twice on the same tape gives the same result.
    void backward(Var root);

    const Array& value(std::size_t id) const { return nodes_[id].value; }
    // Gradient of a node; an all-zero array of the value's shape if nothing
    // flowed into it.
    const Array& grad(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    // Accumulation buffer for a parent during backward; allocated on demand.
    Array& grad_buffer(std::size_t id);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Array value;
        Array grad;
        BackwardFn backward;
        bool requires_grad = false;
        bool is_leaf = false;
    };
    std::vector<Node> nodes_;
    mutable Array zero_scratch_;
};

// ---- ops ---------------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double k);
Var add_scalar(Var a, double k);

Var matmul(Var a, Var b);
// x * w + b with b a 1xcols row; a fused form of matmul + broadcast add.
Var linear(Var x, Var w, Var b);

Var sum(Var a);
Var mean(Var a);
// Column sums, rxc -> 1xc.
Var sum_rows(Var a);
// Row sums, rxc -> rx1.
Var sum_cols(Var a);

Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var abs(Var a);
Var square(Var a);

// axis 0 stacks rows, axis 1 stacks columns.
Var concat(std::span<const Var> parts, int axis);
Var concat(std::initializer_list<Var> parts, int axis);
Var slice(Var a, int axis, std::size_t begin, std::size_t end);
Var broadcast(Var a, std::size_t rows, std::size_t cols);
Var reshape(Var a, Shape shape);
// Repeat the whole matrix `reps` times vertically.
Var tile_rows(Var a, std::size_t reps);

// Batched masked aggregation. graphs is S x (D*D), block s holding a DxD
// adjacency (row = source i, column = target d). values is (S*D) x K with
// rows ordered (s, i). Returns (S*D) x K with row (s, d) equal to
// sum_i graphs_s[i, d] * values[(s, i), :].
Var graph_aggregate(Var graphs, Var values, std::size_t dim);

// Forward value `hard`, backward passes the gradient straight to `soft`.
Var straight_through(Array hard, Var soft);
Var stop_gradient(Var a);

// ---- gradient checking ------------------------------------------------

using ScalarFn = std::function<Var(Tape&, std::span<const Var> params)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
};

// Max over all parameter entries of
// |analytic - central| / (|analytic| + |central| + 1e-12).
GradCheckResult grad_check(const ScalarFn& f, std::vector<Array> params, double h = 1e-5);

}  // namespace scotch::ad
