#include "scotch/diffcore.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <sstream>

#include "scotch/error.hpp"

namespace scotch::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

MapC view(const Array& a) { return MapC(a.data().data(), a.rows(), a.cols()); }
Map view(Array& a) { return Map(a.data().data(), a.rows(), a.cols()); }

std::size_t product(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

#ifndef NDEBUG
void debug_check_finite(const Array& a, const char* op) {
    if (!a.all_finite()) throw DomainError(std::string("non-finite output from ") + op);
}
#else
void debug_check_finite(const Array&, const char*) {}
#endif

Tape& same_tape(Var a, Var b) {
    if (a.tape() != b.tape()) throw ContractError("operands live on different tapes");
    return *a.tape();
}

bool needs(Var a) { return a.tape()->requires_grad(a.id()); }

// Broadcasting geometry for a binary elementwise op.
struct Geometry {
    std::size_t rows, cols;
    std::size_t ar, ac, br, bc;
    Shape shape;
    bool same;

    std::size_t ia(std::size_t r, std::size_t c) const {
        return (ar == 1 ? 0 : r) * ac + (ac == 1 ? 0 : c);
    }
    std::size_t ib(std::size_t r, std::size_t c) const {
        return (br == 1 ? 0 : r) * bc + (bc == 1 ? 0 : c);
    }
};

Geometry geometry(const Array& a, const Array& b, const char* op) {
    Geometry g{};
    g.ar = a.rows();
    g.ac = a.cols();
    g.br = b.rows();
    g.bc = b.cols();
    g.same = a.shape() == b.shape();
    auto fit = [&](std::size_t x, std::size_t y, std::size_t& out) {
        if (x == y || y == 1) {
            out = x;
        } else if (x == 1) {
            out = y;
        } else {
            throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(a.shape()) +
                                 " with " + shape_string(b.shape()));
        }
    };
    fit(g.ar, g.br, g.rows);
    fit(g.ac, g.bc, g.cols);
    if (g.same) {
        g.shape = a.shape();
    } else if (a.size() == g.rows * g.cols && a.shape().size() >= b.shape().size()) {
        g.shape = a.shape();
    } else if (b.size() == g.rows * g.cols && b.shape().size() >= a.shape().size()) {
        g.shape = b.shape();
    } else {
        g.shape = {g.rows, g.cols};
    }
    return g;
}

template <class Fwd, class DA, class DB>
Var binary(Var a, Var b, const char* name, Fwd fwd, DA da, DB db) {
    Tape& tape = same_tape(a, b);
    const Array& av = a.value();
    const Array& bv = b.value();
    const Geometry g = geometry(av, bv, name);
    Array out(g.shape);
    if (g.same) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
    } else {
        for (std::size_t r = 0; r < g.rows; ++r)
            for (std::size_t c = 0; c < g.cols; ++c)
                out[r * g.cols + c] = fwd(av[g.ia(r, c)], bv[g.ib(r, c)]);
    }
    debug_check_finite(out, name);
    const bool rg = needs(a) || needs(b);
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(std::move(out), rg, [ia, ib, g, da, db](Tape& t, const Array& go) {
        const Array& av = t.value(ia);
        const Array& bv = t.value(ib);
        const bool ga = t.requires_grad(ia), gb = t.requires_grad(ib);
        Array* gA = ga ? &t.grad_buffer(ia) : nullptr;
        Array* gB = gb ? &t.grad_buffer(ib) : nullptr;
        if (g.same) {
            for (std::size_t i = 0; i < go.size(); ++i) {
                if (gA) (*gA)[i] += go[i] * da(av[i], bv[i]);
                if (gB) (*gB)[i] += go[i] * db(av[i], bv[i]);
            }
            return;
        }
        for (std::size_t r = 0; r < g.rows; ++r)
            for (std::size_t c = 0; c < g.cols; ++c) {
                const std::size_t i = r * g.cols + c;
                const double x = av[g.ia(r, c)], y = bv[g.ib(r, c)];
                if (gA) (*gA)[g.ia(r, c)] += go[i] * da(x, y);
                if (gB) (*gB)[g.ib(r, c)] += go[i] * db(x, y);
            }
    });
}

// dfn receives (input, output) and returns the local derivative.
// fill writes the whole output from the whole input, so it can vectorize.
template <class Fill, class Dfn>
Var mapped(Var a, const char* name, Fill fill, Dfn dfn) {
    Tape& tape = *a.tape();
    const Array& av = a.value();
    Array out(av.shape());
    fill(av, out);
    debug_check_finite(out, name);
    const std::size_t ia = a.id();
    const std::size_t self = tape.size();
    return tape.record(std::move(out), needs(a), [ia, self, dfn](Tape& t, const Array& go) {
        const Array& x = t.value(ia);
        const Array& y = t.value(self);
        Array& gA = t.grad_buffer(ia);
        for (std::size_t i = 0; i < go.size(); ++i) gA[i] += go[i] * dfn(x[i], y[i]);
    });
}

template <class Fwd, class Dfn>
Var unary(Var a, const char* name, Fwd fwd, Dfn dfn) {
    return mapped(
        a, name,
        [&fwd](const Array& in, Array& out) {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
        },
        dfn);
}

Eigen::Map<const Eigen::ArrayXd> flat(const Array& a) { return {a.data().data(), static_cast<Eigen::Index>(a.size())}; }
Eigen::Map<Eigen::ArrayXd> flat(Array& a) { return {a.data().data(), static_cast<Eigen::Index>(a.size())}; }

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid_value(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

// ---- Array ---------------------------------------------------------------

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)), data_(product(shape_), fill) {}

Array::Array(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (product(shape_) != data_.size())
        throw DimensionError("shape " + shape_string(shape_) + " does not hold " +
                             std::to_string(data_.size()) + " values");
}

Array Array::scalar(double v) { return Array(Shape{}, std::vector<double>{v}); }

Array Array::vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Array(Shape{n}, std::move(v));
}

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Array(Shape{rows, cols}, std::move(data));
}

Array Array::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return matrix(r, c, std::move(data));
}

Array Array::identity(std::size_t n) {
    Array a(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) a.at(i, i) = 1.0;
    return a;
}

std::size_t Array::rows() const noexcept {
    if (shape_.size() < 2) return 1;
    return product(Shape(shape_.begin(), shape_.end() - 1));
}

std::size_t Array::cols() const noexcept {
    if (shape_.empty()) return 1;
    return shape_.back();
}

double Array::item() const {
    if (data_.size() != 1) throw ContractError("item() on array of shape " + shape_string(shape_));
    return data_[0];
}

Array Array::reshaped(Shape shape) const {
    if (product(shape) != data_.size())
        throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    Array out = *this;
    out.shape_ = std::move(shape);
    return out;
}

bool Array::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

// ---- Tape -------------------------------------------------------------------

const Array& Var::value() const { return tape_->value(id_); }
const Array& Var::grad() const { return tape_->grad(id_); }

Var Tape::leaf(Array value) {
    nodes_.push_back(Node{std::move(value), {}, {}, true, true});
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Array value) {
    nodes_.push_back(Node{std::move(value), {}, {}, false, false});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Array value, bool requires_grad, BackwardFn backward) {
    Node n{std::move(value), {}, {}, requires_grad, false};
    if (requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Array& Tape::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size())
        n.grad = Array(n.value.shape());
    return n.grad;
}

const Array& Tape::grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.grad.size() == n.value.size() && n.grad.shape() == n.value.shape()) return n.grad;
    zero_scratch_ = Array(n.value.shape());
    return zero_scratch_;
}

void Tape::backward(Var root) {
    if (root.tape() != this) throw ContractError("backward root belongs to another tape");
    if (nodes_[root.id()].value.size() != 1)
        throw ContractError("backward requires a scalar root, got shape " +
                            shape_string(nodes_[root.id()].value.shape()));
    for (Node& n : nodes_) n.grad = Array();
    if (!nodes_[root.id()].requires_grad) return;
    grad_buffer(root.id())[0] = 1.0;
    for (std::size_t k = root.id() + 1; k-- > 0;) {
        Node& n = nodes_[k];
        if (!n.requires_grad || n.grad.empty()) continue;
        if (n.backward) {
            Array g = n.is_leaf ? n.grad : std::move(n.grad);
            n.backward(*this, g);
            if (!n.is_leaf) n.grad = Array();
        }
    }
}

// ---- elementwise ----------------------------------------------------------------

Var add(Var a, Var b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Var div(Var a, Var b) {
    for (double v : b.value().data())
        if (v == 0.0) throw DomainError("div: division by zero");
    return binary(
        a, b, "div", [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double k) {
    return unary(
        a, "scale", [k](double x) { return k * x; }, [k](double, double) { return k; });
}

Var add_scalar(Var a, double k) {
    return unary(
        a, "add_scalar", [k](double x) { return x + k; }, [](double, double) { return 1.0; });
}

Var tanh(Var a) {
    // sign(x) (1 - e^{-2|x|}) / (1 + e^{-2|x|}), vectorized through exp
    return mapped(
        a, "tanh",
        [](const Array& in, Array& out) {
            const auto x = flat(in);
            const Eigen::ArrayXd e = (-2.0 * x.abs()).exp();
            flat(out) = x.sign() * (1.0 - e) / (1.0 + e);
        },
        [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
    // e^{min(x,0)} / (1 + e^{-|x|})
    return mapped(
        a, "sigmoid",
        [](const Array& in, Array& out) {
            const auto x = flat(in);
            flat(out) = x.min(0.0).exp() / (1.0 + (-x.abs()).exp());
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
    return unary(
        a, "softplus", softplus_value, [](double x, double) { return sigmoid_value(x); });
}

Var exp(Var a) {
    return unary(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    for (double v : a.value().data())
        if (!(v > 0.0)) throw DomainError("log: argument must be positive");
    return unary(
        a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var abs(Var a) {
    return unary(
        a, "abs", [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var square(Var a) {
    return unary(
        a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---- linear algebra -------------------------------------------------------------

Var matmul(Var a, Var b) {
    Tape& tape = same_tape(a, b);
    const Array& av = a.value();
    const Array& bv = b.value();
    if (av.shape().size() > 2 || bv.shape().size() > 2 || av.cols() != bv.rows())
        throw DimensionError("matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
    Array out(Shape{av.rows(), bv.cols()});
    view(out).noalias() = view(av) * view(bv);
    debug_check_finite(out, "matmul");
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(std::move(out), needs(a) || needs(b), [ia, ib](Tape& t, const Array& go) {
        const auto G = view(go);
        if (t.requires_grad(ia)) view(t.grad_buffer(ia)).noalias() += G * view(t.value(ib)).transpose();
        if (t.requires_grad(ib)) view(t.grad_buffer(ib)).noalias() += view(t.value(ia)).transpose() * G;
    });
}

Var linear(Var x, Var w, Var b) {
    Tape& tape = same_tape(x, w);
    same_tape(x, b);
    const Array& xv = x.value();
    const Array& wv = w.value();
    const Array& bv = b.value();
    if (xv.cols() != wv.rows() || bv.size() != wv.cols())
        throw DimensionError("linear: x " + shape_string(xv.shape()) + ", w " + shape_string(wv.shape()) +
                             ", b " + shape_string(bv.shape()));
    Array out(Shape{xv.rows(), wv.cols()});
    auto O = view(out);
    O.noalias() = view(xv) * view(wv);
    O.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data().data(), bv.size());
    debug_check_finite(out, "linear");
    const std::size_t ix = x.id(), iw = w.id(), ibias = b.id();
    const bool rg = needs(x) || needs(w) || needs(b);
    return tape.record(std::move(out), rg, [ix, iw, ibias](Tape& t, const Array& go) {
        const auto G = view(go);
        if (t.requires_grad(ix)) view(t.grad_buffer(ix)).noalias() += G * view(t.value(iw)).transpose();
        if (t.requires_grad(iw)) view(t.grad_buffer(iw)).noalias() += view(t.value(ix)).transpose() * G;
        if (t.requires_grad(ibias)) {
            Array& gb = t.grad_buffer(ibias);
            Eigen::Map<Eigen::RowVectorXd>(gb.data().data(), gb.size()) += G.colwise().sum();
        }
    });
}

// ---- reductions ---------------------------------------------------------------

Var sum(Var a) {
    const Array& av = a.value();
    double s = 0.0;
    for (double v : av.data()) s += v;
    const std::size_t ia = a.id();
    return a.tape()->record(Array::scalar(s), needs(a), [ia](Tape& t, const Array& go) {
        Array& g = t.grad_buffer(ia);
        for (double& v : g.data()) v += go[0];
    });
}

Var mean(Var a) {
    const std::size_t n = a.value().size();
    if (n == 0) throw DimensionError("mean of empty array");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_rows(Var a) {
    const Array& av = a.value();
    Array out(Shape{1, av.cols()});
    view(out) = view(av).colwise().sum();
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(out), needs(a), [ia](Tape& t, const Array& go) {
        auto G = view(t.grad_buffer(ia));
        G.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(go.data().data(), go.size());
    });
}

Var sum_cols(Var a) {
    const Array& av = a.value();
    Array out(Shape{av.rows(), 1});
    view(out) = view(av).rowwise().sum();
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(out), needs(a), [ia](Tape& t, const Array& go) {
        auto G = view(t.grad_buffer(ia));
        G.colwise() += Eigen::Map<const Eigen::VectorXd>(go.data().data(), go.size());
    });
}

// ---- structural ----------------------------------------------------------------

Var concat(std::span<const Var> parts, int axis) {
    if (parts.empty()) throw DimensionError("concat of zero arrays");
    if (axis != 0 && axis != 1) throw DimensionError("concat axis must be 0 or 1");
    Tape& tape = *parts.front().tape();
    std::vector<std::size_t> ids;
    std::vector<std::size_t> offsets;
    std::size_t rows = parts.front().rows(), cols = parts.front().cols();
    std::size_t total = 0;
    bool rg = false;
    for (const Var& p : parts) {
        if (p.tape() != &tape) throw ContractError("concat operands live on different tapes");
        const std::size_t fixed = axis == 0 ? p.cols() : p.rows();
        if (fixed != (axis == 0 ? cols : rows))
            throw DimensionError("concat: incompatible shape " + shape_string(p.shape()));
        offsets.push_back(total);
        total += axis == 0 ? p.rows() : p.cols();
        ids.push_back(p.id());
        rg = rg || needs(p);
    }
    Array out(axis == 0 ? Shape{total, cols} : Shape{rows, total});
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Array& pv = parts[k].value();
        if (axis == 0)
            view(out).middleRows(offsets[k], pv.rows()) = view(pv);
        else
            view(out).middleCols(offsets[k], pv.cols()) = view(pv);
    }
    return tape.record(std::move(out), rg, [ids, offsets, axis](Tape& t, const Array& go) {
        const auto G = view(go);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!t.requires_grad(ids[k])) continue;
            Array& gb = t.grad_buffer(ids[k]);
            if (axis == 0)
                view(gb) += G.middleRows(offsets[k], gb.rows());
            else
                view(gb) += G.middleCols(offsets[k], gb.cols());
        }
    });
}

Var concat(std::initializer_list<Var> parts, int axis) {
    return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var slice(Var a, int axis, std::size_t begin, std::size_t end) {
    const Array& av = a.value();
    const std::size_t extent = axis == 0 ? av.rows() : av.cols();
    if ((axis != 0 && axis != 1) || begin > end || end > extent)
        throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of " +
                             shape_string(av.shape()));
    const std::size_t n = end - begin;
    Array out(axis == 0 ? Shape{n, av.cols()} : Shape{av.rows(), n});
    if (axis == 0)
        view(out) = view(av).middleRows(begin, n);
    else
        view(out) = view(av).middleCols(begin, n);
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(out), needs(a), [ia, axis, begin, n](Tape& t, const Array& go) {
        if (axis == 0)
            view(t.grad_buffer(ia)).middleRows(begin, n) += view(go);
        else
            view(t.grad_buffer(ia)).middleCols(begin, n) += view(go);
    });
}

Var broadcast(Var a, std::size_t rows, std::size_t cols) {
    const Array& av = a.value();
    if ((av.rows() != 1 && av.rows() != rows) || (av.cols() != 1 && av.cols() != cols))
        throw DimensionError("broadcast: " + shape_string(av.shape()) + " to [" + std::to_string(rows) +
                             "," + std::to_string(cols) + "]");
    Tape& tape = *a.tape();
    Var target = tape.constant(Array(Shape{rows, cols}));
    return add(a, target);
}

Var reshape(Var a, Shape shape) {
    Array out = a.value().reshaped(std::move(shape));
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(out), needs(a), [ia](Tape& t, const Array& go) {
        Array& g = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    });
}

Var tile_rows(Var a, std::size_t reps) {
    const Array& av = a.value();
    const std::size_t r = av.rows();
    Array out(Shape{r * reps, av.cols()});
    for (std::size_t k = 0; k < reps; ++k) view(out).middleRows(k * r, r) = view(av);
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(out), needs(a), [ia, reps, r](Tape& t, const Array& go) {
        auto G = view(t.grad_buffer(ia));
        const auto O = view(go);
        for (std::size_t k = 0; k < reps; ++k) G += O.middleRows(k * r, r);
    });
}

Var graph_aggregate(Var graphs, Var values, std::size_t dim) {
    Tape& tape = same_tape(graphs, values);
    const Array& gv = graphs.value();
    const Array& vv = values.value();
    const std::size_t batch = gv.rows();
    if (gv.cols() != dim * dim || vv.rows() != batch * dim)
        throw DimensionError("graph_aggregate: graphs " + shape_string(gv.shape()) + ", values " +
                             shape_string(vv.shape()) + ", dim " + std::to_string(dim));
    const std::size_t k = vv.cols();
    Array out(Shape{batch * dim, k});
    for (std::size_t s = 0; s < batch; ++s) {
        MapC G(gv.data().data() + s * dim * dim, dim, dim);
        MapC V(vv.data().data() + s * dim * k, dim, k);
        Map O(out.data().data() + s * dim * k, dim, k);
        O.noalias() = G.transpose() * V;
    }
    const std::size_t ig = graphs.id(), iv = values.id();
    return tape.record(std::move(out), needs(graphs) || needs(values),
                       [ig, iv, batch, dim, k](Tape& t, const Array& go) {
                           const Array& gv = t.value(ig);
                           const Array& vv = t.value(iv);
                           Array* gG = t.requires_grad(ig) ? &t.grad_buffer(ig) : nullptr;
                           Array* gV = t.requires_grad(iv) ? &t.grad_buffer(iv) : nullptr;
                           for (std::size_t s = 0; s < batch; ++s) {
                               MapC O(go.data().data() + s * dim * k, dim, k);
                               if (gV) {
                                   MapC G(gv.data().data() + s * dim * dim, dim, dim);
                                   Map(gV->data().data() + s * dim * k, dim, k).noalias() += G * O;
                               }
                               if (gG) {
                                   MapC V(vv.data().data() + s * dim * k, dim, k);
                                   Map(gG->data().data() + s * dim * dim, dim, dim).noalias() +=
                                       V * O.transpose();
                               }
                           }
                       });
}

Var straight_through(Array hard, Var soft) {
    if (hard.shape() != soft.shape())
        throw DimensionError("straight_through: " + shape_string(hard.shape()) + " vs " +
                             shape_string(soft.shape()));
    const std::size_t is = soft.id();
    return soft.tape()->record(std::move(hard), needs(soft), [is](Tape& t, const Array& go) {
        Array& g = t.grad_buffer(is);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    });
}

Var stop_gradient(Var a) { return a.tape()->constant(a.value()); }

// ---- gradient check ---------------------------------------------------------------

GradCheckResult grad_check(const ScalarFn& f, std::vector<Array> params, double h) {
    if (!(h > 0.0)) throw ContractError("grad_check: step must be positive");
    auto evaluate = [&](const std::vector<Array>& ps) {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(ps.size());
        for (const Array& p : ps) vars.push_back(tape.constant(p));
        const double v = f(tape, vars).value().item();
        if (!std::isfinite(v)) throw DomainError("grad_check: non-finite function value at probe");
        return v;
    };

    std::vector<Array> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const Array& p : params) vars.push_back(tape.leaf(p));
        Var root = f(tape, vars);
        if (!std::isfinite(root.value().item())) throw DomainError("grad_check: non-finite function value");
        tape.backward(root);
        for (const Var& v : vars) analytic.push_back(v.grad());
    }

    GradCheckResult result;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t i = 0; i < params[p].size(); ++i) {
            const double orig = params[p][i];
            params[p][i] = orig + h;
            const double up = evaluate(params);
            params[p][i] = orig - h;
            const double down = evaluate(params);
            params[p][i] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[p][i];
            const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
            if (rel > result.max_rel_error) result = {rel, p, i};
        }
    }
    return result;
}

}  // namespace scotch::ad
