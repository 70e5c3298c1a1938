#pragma once

// Variational inference for the latent SDE model: the amortized posterior
// process, the ELBO, the training loop and the ODE-mean baseline.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scotch/datagen.hpp"
#include "scotch/diffcore.hpp"
#include "scotch/graph.hpp"
#include "scotch/model.hpp"
#include "scotch/nets.hpp"

namespace scotch::infer {

using ad::Array;
using ad::Tape;
using ad::Var;
using nn::Bound;
using nn::ParamStore;

struct TrainConfig {
    double sparsity = 500.0;
    double step = 1.0;
    double t_end = 100.0;
    double lr = 0.003;
    long warmup_epochs = 100;
    long epochs = 1500;
    // 0 trains full batch.
    std::size_t batch_size = 0;
    double tau_start = 1.0;
    double tau_end = 0.25;
    bool hard_graph = true;
    // Score-function gradient for the graph logits instead of the relaxation.
    bool score_function = false;
    std::uint64_t seed = 0;
    double laplace_scale = 0.01;
    bool allow_self_loops = true;
    bool normalize = false;

    std::size_t embed_dim = 32;
    std::size_t agg_dim = 32;
    std::size_t prior_hidden = 0;
    bool residual = true;
    double diffusion_floor = 1e-4;
    std::size_t encoder_hidden = 128;
    std::size_t context_dim = 64;
    std::size_t posterior_hidden = 128;
    double init_logit = 0.0;

    long snapshot_every = 50;
    // Consecutive divergent epochs tolerated before training aborts.
    long max_divergent_epochs = 10;

    // Throws ValidationError on non-positive sizes or a step that does not
    // divide t_end.
    void validate() const;
    std::size_t grid_steps() const;
    // Geometric anneal from tau_start to tau_end over the run.
    double temperature(long epoch) const;
};

// Observations of S series placed on the solver grid t_k = k * step.
struct GridBatch {
    std::vector<std::size_t> series;  // dataset indices, row order
    std::size_t dim = 0;
    std::size_t steps = 0;            // K; grid points 0..K
    std::vector<Array> values;        // K+1 entries of S x D, zero where missing
    std::vector<Array> observed;      // K+1 entries of S x 1 in {0, 1}
    std::vector<Array> gaps;          // K+1 entries of S x 1: time to the next later observation, 0 if none
    std::vector<bool> any_observed;   // per grid point
};

GridBatch make_grid_batch(const data::Dataset& dataset, std::span<const std::size_t> series, double step,
                          double t_end);

// q(z | G, X): reverse-time GRU over the observations, a context head on
// [hidden state, vec G], a posterior drift h(z, c) and linear initial-state
// heads for the mean and log-variance of z_0.
class PosteriorModel {
public:
    struct Config {
        std::size_t dim = 0;
        std::size_t encoder_hidden = 128;
        std::size_t context_dim = 64;
        std::size_t drift_hidden = 128;
    };

    struct Encoded {
        std::vector<Var> contexts;  // K entries; contexts[k] drives step k -> k+1
        Var mean;                   // S x D
        Var log_variance;           // S x D
    };

    PosteriorModel() = default;
    PosteriorModel(ParamStore& store, const Config& config, Rng& rng);

    // Hidden states after consuming every observation at grid index >= k,
    // k = 0..K+1 (the last is the zero state).
    std::vector<Var> encode_grid(Bound p, const GridBatch& batch) const;
    Encoded encode(Bound p, const GridBatch& batch, Var graphs) const;

    Var context(Bound p, Var hidden, Var graphs) const;
    Var drift(Bound p, Var z, Var context) const;

    // Context at an arbitrary time from the observations strictly after t.
    Array context_at(const ParamStore& store, const Graph& g, const data::TimeSeries& series, double t) const;

    const Config& config() const noexcept { return config_; }

private:
    Config config_;
    nn::GruCell gru_;
    nn::Linear context_head_;
    nn::Mlp drift_net_;
    nn::Linear mean_head_;
    nn::Linear logvar_head_;
};

// Everything learned: graph posterior, prior and posterior networks.
struct ScotchModel {
    TrainConfig config;
    std::size_t dim = 0;
    ParamStore params;
    model::GraphPosterior graph;
    model::PriorModel prior;
    PosteriorModel posterior;

    ScotchModel(std::size_t dim, const TrainConfig& config);

    Array edge_probabilities() const { return graph.probabilities(params); }
    std::vector<double> drift_at(const Graph& g, std::span<const double> z) const;
    std::vector<double> diffusion_at(const Graph& g, std::span<const double> z) const;
    // Edges with posterior probability above 0.5.
    Graph map_graph() const;
    sde::SdeSpec prior_spec(const Graph& g, double step, double t_end) const;
};

// u = (h - f) / g, elementwise for diagonal diffusion.
Var u_term(Var posterior_drift, Var prior_drift, Var diffusion);

struct ElboOptions {
    double temperature = 1.0;
    bool hard_graph = true;
    bool score_function = false;
    // N / S for mini-batches.
    double scale = 1.0;
    std::uint64_t seed = 0;
    long epoch = 0;
};

// Frozen randomness of one ELBO evaluation.
struct ElboNoise {
    Array graph_noise;               // S x D^2 logistic draws
    Array init_noise;                // S x D standard normals
    std::vector<Array> path_noise;   // K entries of S x D standard normals
};

ElboNoise draw_elbo_noise(const GridBatch& batch, std::uint64_t seed, long epoch);

struct ElboTerms {
    Var elbo;          // scalar estimate, scaled by N / S
    Var objective;     // scalar whose gradient is the ELBO gradient estimate
    Var likelihood;    // S x 1
    Var path_kl;       // S x 1
    Var graph_kl;      // scalar
    Var graphs;        // S x D^2 sample used
};

ElboTerms elbo(Tape& tape, Bound p, const ScotchModel& m, const GridBatch& batch, const ElboNoise& noise,
               const ElboOptions& opts);

struct HistoryRow {
    long epoch = 0;
    double elbo = 0.0;
    std::optional<double> auroc;
};

struct Snapshot {
    long epoch = 0;
    Array probabilities;
};

class Trainer {
public:
    Trainer(ScotchModel& model, const data::Dataset& dataset);

    // Runs until config.epochs; returns the final ELBO.
    double run(const std::function<void(const HistoryRow&)>& on_epoch = {});
    // One Adam step; returns the ELBO of the batch before the step.
    double step();

    long epoch() const noexcept { return epoch_; }
    const std::vector<HistoryRow>& history() const noexcept { return history_; }
    const std::vector<Snapshot>& snapshots() const noexcept { return snapshots_; }
    long divergent_epochs() const noexcept { return divergent_total_; }

    void save_checkpoint(const std::filesystem::path& path) const;
    void load_checkpoint(const std::filesystem::path& path);

private:
    std::vector<std::size_t> batch_indices() const;

    ScotchModel& model_;
    const data::Dataset& data_;
    nn::AdamState adam_;
    long epoch_ = 0;
    long divergent_run_ = 0;
    long divergent_total_ = 0;
    std::vector<HistoryRow> history_;
    std::vector<Snapshot> snapshots_;
    std::optional<GridBatch> full_batch_;
};

void save_history(const std::filesystem::path& path, const std::vector<HistoryRow>& history);

// Architecture and training scalars stored with the parameters.
nn::NamedArrays config_entries(const TrainConfig& config, std::size_t dim);
TrainConfig config_from_entries(const nn::NamedArrays& entries, std::size_t& dim);

// Reads a checkpoint written by Trainer::save_checkpoint into a fresh model.
ScotchModel load_model(const std::filesystem::path& path);

// ---- ODE-mean baseline ----------------------------------------------------------

struct OdeConfig {
    std::size_t hidden = 32;
    double lr = 0.005;
    long epochs = 1000;
    double group_lasso = 0.1;
    double step = 0.1;
    double t_end = 0.0;
    std::uint64_t seed = 0;
};

// One small MLP per output dimension, integrated by Euler from each series'
// first observation and fitted by squared error plus a group lasso over the
// first-layer input columns.
struct OdeMeanModel {
    std::size_t dim = 0;
    ParamStore params;
    std::vector<nn::Mlp> nets;

    std::vector<double> drift_at(std::span<const double> z) const;
    Var drift(Bound p, Var z) const;
    // score(i, d): norm of the weights reading input i in net d.
    Array graph_scores() const;
};

OdeMeanModel ode_mean_fit(const data::Dataset& dataset, const OdeConfig& config);

}  // namespace scotch::infer
