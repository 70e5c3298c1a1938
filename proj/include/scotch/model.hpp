#pragma once

// Generative side of the model: a Bernoulli posterior over graphs, the
// sparsity prior, graph-masked drift/diffusion networks and the Laplace
// observation likelihood.

#include <cstddef>
#include <span>
#include <vector>

#include "scotch/diffcore.hpp"
#include "scotch/graph.hpp"
#include "scotch/nets.hpp"
#include "scotch/rng.hpp"

namespace scotch::model {

using ad::Array;
using ad::Tape;
using ad::Var;
using nn::Bound;
using nn::ParamStore;

// -lambda * ||G||_F^2, the log-normalizer dropped.
double graph_log_prior(const Graph& g, double sparsity);

// 1 on every cell that may hold an edge, 0 on the diagonal when self-loops are
// disallowed.
Array edge_mask(std::size_t dim, bool allow_self_loops);

// Edgewise KL(q_phi || p~) against the unnormalized prior exp(-lambda ||G||^2):
//   sum_edges phi log phi + (1 - phi) log(1 - phi) + lambda phi
// with 0 log 0 = 0.
double graph_kl(const Array& probs, const Array& mask, double sparsity);
// Same quantity on the tape, parameterized by logits (numerically stable).
Var graph_kl(Var logits, const Array& mask, double sparsity);

class GraphPosterior {
public:
    GraphPosterior() = default;
    GraphPosterior(ParamStore& store, std::size_t dim, bool allow_self_loops, double init_logit = 0.0);

    Var logits(Bound p) const { return p[id_]; }
    // sigmoid(logits) with disallowed cells forced to 0.
    Array probabilities(const ParamStore& store) const;
    const Array& mask() const noexcept { return mask_; }
    std::size_t dim() const noexcept { return dim_; }
    bool allow_self_loops() const noexcept { return allow_self_loops_; }
    std::size_t param_id() const noexcept { return id_; }

private:
    std::size_t id_ = 0;
    std::size_t dim_ = 0;
    bool allow_self_loops_ = true;
    Array mask_;
};

// Binary-concrete sample of one graph as a 1 x D^2 row. With hard set, the
// forward value is the rounded sample (exactly Bernoulli(sigmoid(logit))) and
// gradients flow through the relaxation.
Var sample_graph(Var logits, const Array& mask, double temperature, Rng& rng, bool hard);
// Batched form: one graph per row of noise (S x D^2 logistic draws).
Var sample_graphs(Var logits, const Array& mask, double temperature, const Array& noise, bool hard);
// n standard logistic draws log(u) - log(1 - u) as a 1 x n row.
Array logistic_noise(std::size_t n, Rng& rng);

// Exact Bernoulli draw of the edges, no gradient path.
Graph sample_graph_exact(const Array& probs, bool allow_self_loops, Rng& rng);

// log q_phi(G) for a batch of hard graphs (S x D^2), returns S x 1.
Var graph_log_prob(Var logits, const Array& hard_graphs, const Array& mask);

// Sum over dims of log Laplace(x | z, b). Returns S x 1; mask (S x 1 or S x D)
// selects which entries count.
Var obs_log_likelihood(Var x, Var z, double scale, const Array& mask);
double obs_log_likelihood(std::span<const double> x, std::span<const double> z, double scale);

struct PriorConfig {
    std::size_t dim = 0;
    std::size_t embed_dim = 32;
    std::size_t agg_dim = 32;
    // 0 picks max(2 D, embed_dim).
    std::size_t hidden = 0;
    bool residual = true;
    double diffusion_floor = 1e-4;

    std::size_t hidden_width() const;
};

// Drift and diffusion of the prior SDE. For node d
//   out_d = zeta( sum_i G[i, d] l(z_i, e_i), e_d )
// with shared node embeddings e and separate (l, zeta) pairs for drift and
// diffusion. The diffusion output goes through softplus plus a floor.
class PriorModel {
public:
    struct Terms {
        Var drift;
        Var diffusion;
    };

    PriorModel() = default;
    PriorModel(ParamStore& store, const PriorConfig& config, Rng& rng);

    // graphs: S x D^2 (one graph per row, possibly relaxed); z: S x D.
    Terms evaluate(Bound p, Var graphs, Var z) const;
    Var drift(Bound p, Var graphs, Var z) const { return evaluate(p, graphs, z).drift; }
    Var diffusion(Bound p, Var graphs, Var z) const { return evaluate(p, graphs, z).diffusion; }

    // Plain evaluation for a single state and hard graph.
    std::vector<double> drift_at(const ParamStore& store, const Graph& g, std::span<const double> z) const;
    std::vector<double> diffusion_at(const ParamStore& store, const Graph& g, std::span<const double> z) const;

    const PriorConfig& config() const noexcept { return config_; }
    const nn::NodeEmbeddings& embeddings() const noexcept { return embeddings_; }

private:
    Var node_function(Bound p, const nn::Mlp& local, const nn::Mlp& outer, Var graphs, Var z, Var tiled) const;

    PriorConfig config_;
    nn::NodeEmbeddings embeddings_;
    nn::Mlp drift_local_, drift_outer_;
    nn::Mlp diff_local_, diff_outer_;
};

// Graph as a 1 x D^2 row array.
Array graph_row(const Graph& g);

}  // namespace scotch::model
