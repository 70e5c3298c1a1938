#include "scotch/nets.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "scotch/error.hpp"

namespace scotch::nn {

std::size_t ParamStore::add(std::string name, Array init) {
    if (find(name)) throw ContractError("duplicate parameter name: " + name);
    names_.push_back(std::move(name));
    values_.push_back(std::move(init));
    return values_.size() - 1;
}

std::optional<std::size_t> ParamStore::find(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return i;
    return std::nullopt;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const Array& a : values_) n += a.size();
    return n;
}

std::vector<Var> ParamStore::bind(Tape& tape) const {
    std::vector<Var> out;
    out.reserve(values_.size());
    for (const Array& a : values_) out.push_back(tape.leaf(a));
    return out;
}

std::vector<Var> ParamStore::bind_constants(Tape& tape) const {
    std::vector<Var> out;
    out.reserve(values_.size());
    for (const Array& a : values_) out.push_back(tape.constant(a));
    return out;
}

std::vector<Array> gradients(std::span<const Var> bound) {
    std::vector<Array> out;
    out.reserve(bound.size());
    for (const Var& v : bound) out.push_back(v.grad());
    return out;
}

Array kaiming_uniform(std::size_t fan_in, ad::Shape shape, Rng& rng) {
    Array a(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : a.data()) v = uniform(rng, -bound, bound);
    return a;
}

// ---- Linear / Mlp ---------------------------------------------------------

Var Linear::operator()(Bound p, Var x) const {
    if (x.cols() != in)
        throw DimensionError("linear layer expects " + std::to_string(in) + " inputs, got " +
                             std::to_string(x.cols()));
    return ad::linear(x, p[weight], p[bias]);
}

Linear make_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    Linear l;
    l.in = in;
    l.out = out;
    l.weight = store.add(name + ".weight", kaiming_uniform(in, {in, out}, rng));
    l.bias = store.add(name + ".bias", kaiming_uniform(in, {1, out}, rng));
    return l;
}

Mlp::Mlp(ParamStore& store, const std::string& prefix, std::size_t in, std::vector<std::size_t> hidden,
         std::size_t out, bool residual, Rng& rng)
    : in_(in), out_(out), residual_(residual) {
    std::size_t width = in;
    for (std::size_t k = 0; k < hidden.size(); ++k) {
        layers_.push_back(make_linear(store, prefix + ".hidden" + std::to_string(k), width, hidden[k], rng));
        width = hidden[k];
    }
    layers_.push_back(make_linear(store, prefix + ".out", width, out, rng));
}

Var Mlp::forward(Bound p, Var x) const {
    if (x.cols() != in_)
        throw DimensionError("mlp expects input width " + std::to_string(in_) + ", got " +
                             std::to_string(x.cols()));
    Var h = x;
    for (std::size_t k = 0; k + 1 < layers_.size(); ++k) {
        Var a = ad::tanh(layers_[k](p, h));
        h = (residual_ && layers_[k].in == layers_[k].out) ? ad::add(a, h) : a;
    }
    return layers_.back()(p, h);
}

// ---- GRU ----------------------------------------------------------------

GruCell::GruCell(ParamStore& store, const std::string& prefix, std::size_t input, std::size_t hidden, Rng& rng)
    : input_(input), hidden_(hidden) {
    // PyTorch-style: every gate block scaled by 1/sqrt(hidden).
    wx_ = store.add(prefix + ".wx", kaiming_uniform(hidden, {input, 3 * hidden}, rng));
    wh_ = store.add(prefix + ".wh", kaiming_uniform(hidden, {hidden, 3 * hidden}, rng));
    bx_ = store.add(prefix + ".bx", kaiming_uniform(hidden, {1, 3 * hidden}, rng));
    bh_ = store.add(prefix + ".bh", kaiming_uniform(hidden, {1, 3 * hidden}, rng));
}

GruCell::Gates GruCell::gates(Bound p, Var h, Var x) const {
    if (x.cols() != input_ || h.cols() != hidden_ || x.rows() != h.rows())
        throw DimensionError("gru: x " + ad::shape_string(x.shape()) + ", h " + ad::shape_string(h.shape()));
    const std::size_t H = hidden_;
    Var gx = ad::linear(x, p[wx_], p[bx_]);
    Var gh = ad::linear(h, p[wh_], p[bh_]);
    Gates g;
    g.reset = ad::sigmoid(ad::add(ad::slice(gx, 1, 0, H), ad::slice(gh, 1, 0, H)));
    g.update = ad::sigmoid(ad::add(ad::slice(gx, 1, H, 2 * H), ad::slice(gh, 1, H, 2 * H)));
    g.candidate = ad::tanh(ad::add(ad::slice(gx, 1, 2 * H, 3 * H), ad::mul(g.reset, ad::slice(gh, 1, 2 * H, 3 * H))));
    // h' = n + z * (h - n)
    g.next = ad::add(g.candidate, ad::mul(g.update, ad::sub(h, g.candidate)));
    return g;
}

NodeEmbeddings::NodeEmbeddings(ParamStore& store, const std::string& name, std::size_t nodes, std::size_t dim,
                               Rng& rng)
    : nodes_(nodes), dim_(dim) {
    Array e({nodes, dim});
    for (double& v : e.data()) v = standard_normal(rng);
    id_ = store.add(name, std::move(e));
}

// ---- optimizer ------------------------------------------------------------

void adam_step(AdamState& state, ParamStore& params, std::span<const Array> grads, double lr) {
    if (grads.size() != params.size())
        throw DimensionError("adam: " + std::to_string(grads.size()) + " gradients for " +
                             std::to_string(params.size()) + " parameters");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].size() != params.value(i).size())
            throw DimensionError("adam: gradient shape mismatch for " + params.name(i));
        if (!grads[i].all_finite()) throw TrainingError("non-finite gradient for parameter " + params.name(i));
    }
    if (state.m.size() != params.size()) {
        state.m.clear();
        state.v.clear();
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m.emplace_back(params.value(i).shape());
            state.v.emplace_back(params.value(i).shape());
        }
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Array& w = params.value(i);
        Array& m = state.m[i];
        Array& v = state.v[i];
        const Array& g = grads[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
            w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + state.eps);
        }
    }
}

double warmup_schedule(long epoch, double target_lr, long warmup_epochs) {
    if (warmup_epochs <= 0) return target_lr;
    const double frac = static_cast<double>(epoch) / static_cast<double>(warmup_epochs);
    return target_lr * std::min(1.0, frac);
}

// ---- checkpoints ----------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const NamedArrays& entries) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out << kCheckpointMagic << '\n' << entries.size() << '\n';
    out << std::setprecision(17);
    for (const auto& [name, a] : entries) {
        if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
            throw ContractError("checkpoint entry name must be non-empty without whitespace: '" + name + "'");
        out << name << ' ' << a.shape().size();
        for (std::size_t d : a.shape()) out << ' ' << d;
        out << '\n';
        for (std::size_t i = 0; i < a.size(); ++i) out << (i ? " " : "") << a[i];
        out << '\n';
    }
    if (!out) throw Error("failed writing checkpoint " + path.string());
}

NamedArrays load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open checkpoint " + path.string());
    std::string magic;
    std::getline(in, magic);
    if (magic != kCheckpointMagic) throw ParseError(path.string() + ": bad checkpoint header '" + magic + "'");
    std::size_t count = 0;
    if (!(in >> count)) throw ParseError(path.string() + ": missing entry count");
    NamedArrays entries;
    for (std::size_t e = 0; e < count; ++e) {
        std::string name;
        std::size_t rank = 0;
        if (!(in >> name >> rank)) throw ParseError(path.string() + ": truncated entry header");
        ad::Shape shape(rank);
        for (std::size_t& d : shape)
            if (!(in >> d)) throw ParseError(path.string() + ": bad shape for " + name);
        Array a(shape);
        for (double& v : a.data()) {
            std::string tok;
            if (!(in >> tok)) throw ParseError(path.string() + ": truncated values for " + name);
            char* end = nullptr;
            v = std::strtod(tok.c_str(), &end);
            if (end != tok.c_str() + tok.size())
                throw ParseError(path.string() + ": bad number '" + tok + "' in " + name);
        }
        entries.emplace_back(std::move(name), std::move(a));
    }
    return entries;
}

}  // namespace scotch::nn
