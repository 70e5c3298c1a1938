#include "scotch/model.hpp"

#include <algorithm>
#include <cmath>

#include "scotch/error.hpp"

namespace scotch::model {

namespace {

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

}  // namespace

double graph_log_prior(const Graph& g, double sparsity) {
    if (sparsity < 0.0) throw ValidationError("sparsity coefficient must be non-negative");
    return -sparsity * static_cast<double>(g.edge_count());
}

Array edge_mask(std::size_t dim, bool allow_self_loops) {
    Array m({dim, dim}, 1.0);
    if (!allow_self_loops)
        for (std::size_t i = 0; i < dim; ++i) m.at(i, i) = 0.0;
    return m;
}

double graph_kl(const Array& probs, const Array& mask, double sparsity) {
    if (probs.size() != mask.size()) throw DimensionError("graph_kl: probability and mask sizes differ");
    double kl = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        if (mask[k] == 0.0) continue;
        const double phi = probs[k];
        if (phi < 0.0 || phi > 1.0) throw DomainError("graph_kl: probability outside [0, 1]");
        kl += xlogx(phi) + xlogx(1.0 - phi) + sparsity * phi;
    }
    return kl;
}

Var graph_kl(Var logits, const Array& mask, double sparsity) {
    // With phi = sigmoid(a): phi log phi + (1-phi) log(1-phi) = phi a - softplus(a).
    Tape& tape = *logits.tape();
    Var m = tape.constant(mask.reshaped(logits.shape()));
    Var phi = ad::sigmoid(logits);
    Var per_edge = ad::sub(ad::mul(phi, ad::add_scalar(logits, sparsity)), ad::softplus(logits));
    return ad::sum(ad::mul(per_edge, m));
}

GraphPosterior::GraphPosterior(ParamStore& store, std::size_t dim, bool allow_self_loops, double init_logit)
    : dim_(dim), allow_self_loops_(allow_self_loops), mask_(edge_mask(dim, allow_self_loops)) {
    id_ = store.add("graph.logits", Array({dim, dim}, init_logit));
}

Array GraphPosterior::probabilities(const ParamStore& store) const {
    const Array& logits = store.value(id_);
    Array p(logits.shape());
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = mask_[k] * sigmoid(logits[k]);
    return p;
}

Array logistic_noise(std::size_t n, Rng& rng) {
    Array noise({1, n});
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (double& v : noise.data()) {
        double u = unif(rng);
        while (u <= 0.0) u = unif(rng);
        v = std::log(u) - std::log1p(-u);
    }
    return noise;
}

Var sample_graphs(Var logits, const Array& mask, double temperature, const Array& noise, bool hard) {
    if (!(temperature > 0.0)) throw ValidationError("sample_graph: temperature must be positive");
    const std::size_t n = logits.value().size();
    if (mask.size() != n || noise.cols() != n) throw DimensionError("sample_graph: mask or noise size mismatch");
    Tape& tape = *logits.tape();
    Var row = ad::reshape(logits, {1, n});
    Var soft = ad::sigmoid(ad::scale(ad::add(tape.constant(noise), row), 1.0 / temperature));
    soft = ad::mul(soft, tape.constant(mask.reshaped({1, n})));
    if (!hard) return soft;
    Array rounded = soft.value();
    for (double& v : rounded.data()) v = v > 0.5 ? 1.0 : 0.0;
    return ad::straight_through(std::move(rounded), soft);
}

Var sample_graph(Var logits, const Array& mask, double temperature, Rng& rng, bool hard) {
    return sample_graphs(logits, mask, temperature, logistic_noise(logits.value().size(), rng), hard);
}

Graph sample_graph_exact(const Array& probs, bool allow_self_loops, Rng& rng) {
    const std::size_t d = probs.rows();
    Graph g(d, allow_self_loops);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double u = unif(rng);
            if ((allow_self_loops || i != j) && u < probs.at(i, j)) g.set_edge(i, j);
        }
    return g;
}

Var graph_log_prob(Var logits, const Array& hard_graphs, const Array& mask) {
    // log q(G) = sum_edges G a - softplus(a)
    Tape& tape = *logits.tape();
    const std::size_t n = logits.value().size();
    Var row = ad::reshape(logits, {1, n});
    Var m = tape.constant(mask.reshaped({1, n}));
    Var g = tape.constant(hard_graphs);
    Var per_edge = ad::sub(ad::mul(g, row), ad::softplus(row));
    return ad::sum_cols(ad::mul(per_edge, m));
}

Var obs_log_likelihood(Var x, Var z, double scale, const Array& mask) {
    if (!(scale > 0.0)) throw ValidationError("Laplace scale must be positive");
    Tape& tape = *z.tape();
    Var m = tape.constant(mask);
    Var dev = ad::scale(ad::abs(ad::sub(x, z)), -1.0 / scale);
    Var per_entry = ad::mul(ad::add_scalar(dev, -std::log(2.0 * scale)), m);
    if (per_entry.value().shape().size() < 2) return ad::sum_cols(ad::reshape(per_entry, {1, per_entry.value().size()}));
    return ad::sum_cols(per_entry);
}

double obs_log_likelihood(std::span<const double> x, std::span<const double> z, double scale) {
    if (!(scale > 0.0)) throw ValidationError("Laplace scale must be positive");
    if (x.size() != z.size()) throw DimensionError("obs_log_likelihood: size mismatch");
    double ll = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) ll += -std::log(2.0 * scale) - std::abs(x[d] - z[d]) / scale;
    return ll;
}

std::size_t PriorConfig::hidden_width() const { return hidden ? hidden : std::max(2 * dim, embed_dim); }

PriorModel::PriorModel(ParamStore& store, const PriorConfig& config, Rng& rng) : config_(config) {
    if (config.dim == 0) throw ValidationError("prior model needs at least one node");
    const std::size_t h = config.hidden_width();
    const std::size_t de = config.embed_dim, dg = config.agg_dim;
    embeddings_ = nn::NodeEmbeddings(store, "prior.embeddings", config.dim, de, rng);
    drift_local_ = nn::Mlp(store, "prior.drift.l", 1 + de, {h, h}, dg, config.residual, rng);
    drift_outer_ = nn::Mlp(store, "prior.drift.zeta", dg + de, {h, h}, 1, config.residual, rng);
    diff_local_ = nn::Mlp(store, "prior.diffusion.l", 1 + de, {h, h}, dg, config.residual, rng);
    diff_outer_ = nn::Mlp(store, "prior.diffusion.zeta", dg + de, {h, h}, 1, config.residual, rng);
}

Var PriorModel::node_function(Bound p, const nn::Mlp& local, const nn::Mlp& outer, Var graphs, Var z,
                              Var tiled) const {
    const std::size_t S = z.rows(), D = config_.dim;
    Var zcol = ad::reshape(z, {S * D, 1});
    Var messages = local.forward(p, ad::concat({zcol, tiled}, 1));
    Var agg = ad::graph_aggregate(graphs, messages, D);
    Var out = outer.forward(p, ad::concat({agg, tiled}, 1));
    return ad::reshape(out, {S, D});
}

PriorModel::Terms PriorModel::evaluate(Bound p, Var graphs, Var z) const {
    const std::size_t D = config_.dim;
    if (z.cols() != D || graphs.cols() != D * D || graphs.rows() != z.rows())
        throw DimensionError("prior model: graphs " + ad::shape_string(graphs.shape()) + ", z " +
                             ad::shape_string(z.shape()) + " for D=" + std::to_string(D));
    Var tiled = ad::tile_rows(embeddings_.table(p), z.rows());
    Terms t;
    t.drift = node_function(p, drift_local_, drift_outer_, graphs, z, tiled);
    Var raw = node_function(p, diff_local_, diff_outer_, graphs, z, tiled);
    t.diffusion = ad::add_scalar(ad::softplus(raw), config_.diffusion_floor);
    return t;
}

Array graph_row(const Graph& g) {
    const std::size_t n = g.dim() * g.dim();
    return g.to_array().reshaped({1, n});
}

std::vector<double> PriorModel::drift_at(const ParamStore& store, const Graph& g, std::span<const double> z) const {
    Tape tape;
    auto p = store.bind_constants(tape);
    Var zv = tape.constant(Array({1, z.size()}, std::vector<double>(z.begin(), z.end())));
    Var out = drift(p, tape.constant(graph_row(g)), zv);
    return {out.value().data().begin(), out.value().data().end()};
}

std::vector<double> PriorModel::diffusion_at(const ParamStore& store, const Graph& g,
                                             std::span<const double> z) const {
    Tape tape;
    auto p = store.bind_constants(tape);
    Var zv = tape.constant(Array({1, z.size()}, std::vector<double>(z.begin(), z.end())));
    Var out = diffusion(p, tape.constant(graph_row(g)), zv);
    return {out.value().data().begin(), out.value().data().end()};
}

}  // namespace scotch::model
