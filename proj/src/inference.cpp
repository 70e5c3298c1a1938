#include "scotch/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "scotch/error.hpp"
#include "scotch/eval.hpp"
#include "scotch/sde.hpp"

namespace scotch::infer {

namespace {

Array column(std::size_t rows, double v = 0.0) { return Array({rows, 1}, v); }

bool is_whole(double r) { return std::abs(r - std::round(r)) <= 1e-9 * std::max(1.0, std::abs(r)); }

}  // namespace

// ---- config -------------------------------------------------------------------

void TrainConfig::validate() const {
    if (!(step > 0.0)) throw ValidationError("step must be positive");
    if (!(t_end > 0.0)) throw ValidationError("time range end must be positive");
    if (!is_whole(t_end / step))
        throw ValidationError("step " + std::to_string(step) + " does not divide the time range [0, " +
                              std::to_string(t_end) + "]");
    if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
    if (epochs < 0 || warmup_epochs < 0) throw ValidationError("epoch counts must be non-negative");
    if (sparsity < 0.0) throw ValidationError("sparsity coefficient must be non-negative");
    if (!(tau_start > 0.0 && tau_end > 0.0)) throw ValidationError("temperatures must be positive");
    if (!(laplace_scale > 0.0)) throw ValidationError("Laplace scale must be positive");
    if (!(diffusion_floor > 0.0)) throw ValidationError("diffusion floor must be positive");
    if (embed_dim == 0 || agg_dim == 0 || encoder_hidden == 0 || context_dim == 0 || posterior_hidden == 0)
        throw ValidationError("network widths must be positive");
}

std::size_t TrainConfig::grid_steps() const { return static_cast<std::size_t>(std::llround(t_end / step)); }

double TrainConfig::temperature(long epoch) const {
    if (epochs <= 1) return tau_end;
    const double frac = std::clamp(static_cast<double>(epoch) / static_cast<double>(epochs - 1), 0.0, 1.0);
    return tau_start * std::pow(tau_end / tau_start, frac);
}

// ---- grid batch -----------------------------------------------------------------

GridBatch make_grid_batch(const data::Dataset& dataset, std::span<const std::size_t> series, double step,
                          double t_end) {
    if (!is_whole(t_end / step)) throw ValidationError("step does not divide the time range");
    GridBatch b;
    b.series.assign(series.begin(), series.end());
    b.dim = dataset.dim;
    b.steps = static_cast<std::size_t>(std::llround(t_end / step));
    const std::size_t S = series.size(), D = dataset.dim, K = b.steps;
    b.values.assign(K + 1, Array({S, D}));
    b.observed.assign(K + 1, column(S));
    b.gaps.assign(K + 1, column(S));
    b.any_observed.assign(K + 1, false);
    for (std::size_t s = 0; s < S; ++s) {
        const data::TimeSeries& ts = dataset.series.at(series[s]);
        const std::vector<std::size_t> idx = sde::snap_to_grid(ts.times, step, t_end);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const std::size_t k = idx[i];
            for (std::size_t d = 0; d < D; ++d) b.values[k].at(s, d) = ts.values.at(i, d);
            b.observed[k][s] = 1.0;
            b.gaps[k][s] = i + 1 < idx.size() ? ts.times[i + 1] - ts.times[i] : 0.0;
            b.any_observed[k] = true;
        }
    }
    return b;
}

// ---- posterior ------------------------------------------------------------------

PosteriorModel::PosteriorModel(ParamStore& store, const Config& config, Rng& rng) : config_(config) {
    const std::size_t D = config.dim, H = config.encoder_hidden, C = config.context_dim;
    gru_ = nn::GruCell(store, "posterior.encoder", D + 1, H, rng);
    context_head_ = nn::make_linear(store, "posterior.context", H + D * D, C, rng);
    drift_net_ = nn::Mlp(store, "posterior.drift", D + C, {config.drift_hidden}, D, false, rng);
    mean_head_ = nn::make_linear(store, "posterior.init_mean", C, D, rng);
    logvar_head_ = nn::make_linear(store, "posterior.init_logvar", C, D, rng);
}

std::vector<Var> PosteriorModel::encode_grid(Bound p, const GridBatch& batch) const {
    Tape& tape = *p[0].tape();
    const std::size_t S = batch.series.size(), K = batch.steps;
    std::vector<Var> hidden(K + 2);
    Var h = tape.constant(Array({S, config_.encoder_hidden}));
    hidden[K + 1] = h;
    for (std::size_t k = K + 1; k-- > 0;) {
        if (batch.any_observed[k]) {
            Var x = ad::concat({tape.constant(batch.values[k]), tape.constant(batch.gaps[k])}, 1);
            Var next = gru_.step(p, h, x);
            h = ad::add(h, ad::mul(tape.constant(batch.observed[k]), ad::sub(next, h)));
        }
        hidden[k] = h;
    }
    return hidden;
}

Var PosteriorModel::context(Bound p, Var hidden, Var graphs) const {
    return context_head_(p, ad::concat({hidden, graphs}, 1));
}

PosteriorModel::Encoded PosteriorModel::encode(Bound p, const GridBatch& batch, Var graphs) const {
    const std::size_t H = config_.encoder_hidden, K = batch.steps;
    const std::vector<Var> hidden = encode_grid(p, batch);
    // [h, G] W + b = h W_h + (G W_G + b); the graph part is shared by every step.
    Var w = p[context_head_.weight];
    Var w_h = ad::slice(w, 0, 0, H);
    Var graph_part = ad::linear(graphs, ad::slice(w, 0, H, w.rows()), p[context_head_.bias]);
    Encoded e;
    e.contexts.reserve(K);
    for (std::size_t k = 0; k < K; ++k) e.contexts.push_back(ad::add(ad::matmul(hidden[k + 1], w_h), graph_part));
    Var c0 = ad::add(ad::matmul(hidden[0], w_h), graph_part);
    e.mean = mean_head_(p, c0);
    e.log_variance = logvar_head_(p, c0);
    return e;
}

Var PosteriorModel::drift(Bound p, Var z, Var context) const {
    return drift_net_.forward(p, ad::concat({z, context}, 1));
}

Array PosteriorModel::context_at(const ParamStore& store, const Graph& g, const data::TimeSeries& series,
                                 double t) const {
    Tape tape;
    const auto p = store.bind_constants(tape);
    const std::size_t D = config_.dim;
    if (g.dim() != D || (series.size() && series.values.cols() != D))
        throw DimensionError("context_at: graph or series dimension mismatch");
    Var h = tape.constant(Array({1, config_.encoder_hidden}));
    for (std::size_t i = series.size(); i-- > 0;) {
        if (!(series.times[i] > t)) break;
        Array x({1, D + 1});
        for (std::size_t d = 0; d < D; ++d) x[d] = series.values.at(i, d);
        x[D] = i + 1 < series.size() ? series.times[i + 1] - series.times[i] : 0.0;
        h = gru_.step(p, h, tape.constant(std::move(x)));
    }
    return context(p, h, tape.constant(model::graph_row(g))).value();
}

// ---- model ----------------------------------------------------------------------

ScotchModel::ScotchModel(std::size_t dim_, const TrainConfig& cfg) : config(cfg), dim(dim_) {
    if (dim == 0) throw ValidationError("model dimension must be positive");
    Rng rng = make_rng(config.seed, "init");
    graph = model::GraphPosterior(params, dim, config.allow_self_loops, config.init_logit);
    model::PriorConfig pc;
    pc.dim = dim;
    pc.embed_dim = config.embed_dim;
    pc.agg_dim = config.agg_dim;
    pc.hidden = config.prior_hidden;
    pc.residual = config.residual;
    pc.diffusion_floor = config.diffusion_floor;
    prior = model::PriorModel(params, pc, rng);
    posterior = PosteriorModel(params, {dim, config.encoder_hidden, config.context_dim, config.posterior_hidden}, rng);
}

std::vector<double> ScotchModel::drift_at(const Graph& g, std::span<const double> z) const {
    return prior.drift_at(params, g, z);
}

std::vector<double> ScotchModel::diffusion_at(const Graph& g, std::span<const double> z) const {
    return prior.diffusion_at(params, g, z);
}

Graph ScotchModel::map_graph() const {
    return Graph::from_scores(edge_probabilities(), 0.5, config.allow_self_loops);
}

sde::SdeSpec ScotchModel::prior_spec(const Graph& g, double step, double t_end) const {
    sde::SdeSpec spec;
    spec.dim = dim;
    spec.step = step;
    spec.t_end = t_end;
    spec.drift = [this, g](std::span<const double> z, double) { return drift_at(g, z); };
    spec.diffusion = [this, g](std::span<const double> z, double) { return diffusion_at(g, z); };
    return spec;
}

// ---- ELBO -----------------------------------------------------------------------

Var u_term(Var posterior_drift, Var prior_drift, Var diffusion) {
    return ad::div(ad::sub(posterior_drift, prior_drift), diffusion);
}

ElboNoise draw_elbo_noise(const GridBatch& batch, std::uint64_t seed, long epoch) {
    const std::size_t S = batch.series.size(), D = batch.dim, K = batch.steps;
    ElboNoise n;
    n.graph_noise = Array({S, D * D});
    n.init_noise = Array({S, D});
    n.path_noise.assign(K, Array({S, D}));
    const auto e = static_cast<std::uint64_t>(epoch);
    for (std::size_t s = 0; s < S; ++s) {
        const std::uint64_t id = batch.series[s];
        Rng g = make_rng(seed, "graph", id, e);
        const Array row = model::logistic_noise(D * D, g);
        std::copy(row.data().begin(), row.data().end(), n.graph_noise.data().begin() + static_cast<std::ptrdiff_t>(s * D * D));
        Rng z = make_rng(seed, "z0", id, e);
        for (std::size_t d = 0; d < D; ++d) n.init_noise.at(s, d) = standard_normal(z);
        Rng path = make_rng(seed, "path", id, e);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t d = 0; d < D; ++d) n.path_noise[k].at(s, d) = standard_normal(path);
    }
    return n;
}

ElboTerms elbo(Tape& tape, Bound p, const ScotchModel& m, const GridBatch& batch, const ElboNoise& noise,
               const ElboOptions& opts) {
    const TrainConfig& cfg = m.config;
    const std::size_t S = batch.series.size(), D = m.dim, K = batch.steps;
    if (batch.dim != D) throw DimensionError("batch dimension does not match the model");
    if (S == 0) throw ValidationError("empty batch");
    if (noise.path_noise.size() != K) throw DimensionError("path noise does not match the grid");
    const Array& mask = m.graph.mask();
    Var logits = m.graph.logits(p);

    ElboTerms out;
    Array hard;
    if (opts.score_function) {
        hard = Array({S, D * D});
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t j = 0; j < D * D; ++j)
                hard.at(s, j) = mask[j] != 0.0 && logits.value()[j] + noise.graph_noise.at(s, j) > 0.0 ? 1.0 : 0.0;
        out.graphs = tape.constant(hard);
    } else {
        out.graphs = model::sample_graphs(logits, mask, opts.temperature, noise.graph_noise, opts.hard_graph);
    }

    const PosteriorModel::Encoded enc = m.posterior.encode(p, batch, out.graphs);
    Var z0 = ad::add(enc.mean, ad::mul(ad::exp(ad::scale(enc.log_variance, 0.5)), tape.constant(noise.init_noise)));

    const auto step_fn = [&](Var z, std::size_t k, double) {
        const model::PriorModel::Terms prior = m.prior.evaluate(p, out.graphs, z);
        Var h = m.posterior.drift(p, z, enc.contexts[k]);
        return sde::StepTerms{h, prior.diffusion, u_term(h, prior.drift, prior.diffusion)};
    };
    sde::DiffPath path;
    try {
        path = sde::em_solve_augmented(tape, z0, noise.path_noise, cfg.step, 0.0, step_fn);
    } catch (const DivergenceError& e) {
        throw DivergenceError(std::string("posterior path diverged (") + e.what() + "), batch series " +
                                  std::to_string(batch.series.front()) + ".." + std::to_string(batch.series.back()),
                              e.step());
    }
    out.path_kl = path.kl.valid() ? path.kl : tape.constant(column(S));

    Var ll = tape.constant(column(S));
    for (std::size_t k = 0; k <= K; ++k) {
        if (!batch.any_observed[k]) continue;
        ll = ad::add(ll, model::obs_log_likelihood(tape.constant(batch.values[k]), path.states[k], cfg.laplace_scale,
                                                   batch.observed[k]));
    }
    out.likelihood = ll;
    out.graph_kl = model::graph_kl(logits, mask, cfg.sparsity);
    Var per_series = ad::sub(ll, out.path_kl);
    out.elbo = ad::sub(ad::scale(ad::sum(per_series), opts.scale), out.graph_kl);
    out.objective = out.elbo;
    if (opts.score_function) {
        const Array& f = per_series.value();
        const double total = std::accumulate(f.data().begin(), f.data().end(), 0.0);
        Array weight = column(S);
        for (std::size_t s = 0; s < S; ++s) {
            const double baseline = S > 1 ? (total - f[s]) / static_cast<double>(S - 1) : 0.0;
            weight[s] = f[s] - baseline;
        }
        Var logq = model::graph_log_prob(logits, hard, mask);
        Var surrogate = ad::scale(ad::sum(ad::mul(tape.constant(std::move(weight)), logq)), opts.scale);
        out.objective = ad::add(out.elbo, surrogate);
    }
    return out;
}

// ---- trainer --------------------------------------------------------------------

Trainer::Trainer(ScotchModel& model, const data::Dataset& dataset) : model_(model), data_(dataset) {
    model.config.validate();
    dataset.validate();
    if (dataset.series.empty()) throw ValidationError("dataset has no series");
    if (dataset.dim != model.dim) throw DimensionError("dataset and model dimensions differ");
    if (dataset.last_time() > model.config.t_end + 1e-9)
        throw ValidationError("observations extend past the time range end " + std::to_string(model.config.t_end));
    if (model.config.batch_size == 0 || model.config.batch_size >= dataset.series.size()) {
        std::vector<std::size_t> all(dataset.series.size());
        std::iota(all.begin(), all.end(), 0);
        full_batch_ = make_grid_batch(dataset, all, model.config.step, model.config.t_end);
    }
}

std::vector<std::size_t> Trainer::batch_indices() const {
    std::vector<std::size_t> idx(data_.series.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = make_rng(model_.config.seed, "batch", static_cast<std::uint64_t>(epoch_));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(model_.config.batch_size);
    std::sort(idx.begin(), idx.end());
    return idx;
}

double Trainer::step() {
    const TrainConfig& cfg = model_.config;
    std::optional<GridBatch> local;
    if (!full_batch_) {
        const auto idx = batch_indices();
        local = make_grid_batch(data_, idx, cfg.step, cfg.t_end);
    }
    const GridBatch& batch = full_batch_ ? *full_batch_ : *local;
    const ElboNoise noise = draw_elbo_noise(batch, cfg.seed, epoch_);
    ElboOptions opts;
    opts.temperature = cfg.temperature(epoch_);
    opts.hard_graph = cfg.hard_graph;
    opts.score_function = cfg.score_function;
    opts.scale = static_cast<double>(data_.series.size()) / static_cast<double>(batch.series.size());
    opts.seed = cfg.seed;
    opts.epoch = epoch_;

    Tape tape;
    const auto p = model_.params.bind(tape);
    double value = 0.0;
    try {
        const ElboTerms terms = elbo(tape, p, model_, batch, noise, opts);
        value = terms.elbo.value().item();
        if (!std::isfinite(value))
            throw TrainingError("non-finite ELBO at epoch " + std::to_string(epoch_) + " (likelihood sum " +
                                std::to_string(ad::sum(terms.likelihood).value().item()) + ", path KL sum " +
                                std::to_string(ad::sum(terms.path_kl).value().item()) + ", graph KL " +
                                std::to_string(terms.graph_kl.value().item()) + ")");
        tape.backward(ad::neg(terms.objective));
    } catch (const DivergenceError& e) {
        ++divergent_total_;
        if (++divergent_run_ > cfg.max_divergent_epochs)
            throw DivergenceError("training diverged in " + std::to_string(divergent_run_) +
                                      " consecutive epochs; last: " + e.what(),
                                  e.step());
        ++epoch_;
        return std::nan("");
    }
    divergent_run_ = 0;
    const std::vector<Array> grads = nn::gradients(p);
    nn::adam_step(adam_, model_.params, grads, nn::warmup_schedule(epoch_, cfg.lr, cfg.warmup_epochs));

    HistoryRow row{epoch_, value, std::nullopt};
    if (data_.truth) {
        const Array mask = eval::evaluation_mask(model_.dim, !cfg.allow_self_loops);
        try {
            row.auroc = eval::auroc(model_.edge_probabilities(), *data_.truth, mask);
        } catch (const MetricError&) {
        }
    }
    history_.push_back(row);
    ++epoch_;
    if (cfg.snapshot_every > 0 && epoch_ % cfg.snapshot_every == 0)
        snapshots_.push_back({epoch_, model_.edge_probabilities()});
    return value;
}

double Trainer::run(const std::function<void(const HistoryRow&)>& on_epoch) {
    double last = std::nan("");
    while (epoch_ < model_.config.epochs) {
        const std::size_t before = history_.size();
        last = step();
        if (on_epoch && history_.size() > before) on_epoch(history_.back());
    }
    return last;
}

nn::NamedArrays config_entries(const TrainConfig& c, std::size_t dim) {
    auto s = [](double v) { return Array::scalar(v); };
    auto b = [](bool v) { return Array::scalar(v ? 1.0 : 0.0); };
    auto z = [](std::size_t v) { return Array::scalar(static_cast<double>(v)); };
    return {
        {"config.dim", z(dim)},
        {"config.sparsity", s(c.sparsity)},
        {"config.step", s(c.step)},
        {"config.t_end", s(c.t_end)},
        {"config.lr", s(c.lr)},
        {"config.warmup_epochs", s(static_cast<double>(c.warmup_epochs))},
        {"config.epochs", s(static_cast<double>(c.epochs))},
        {"config.batch_size", z(c.batch_size)},
        {"config.tau_start", s(c.tau_start)},
        {"config.tau_end", s(c.tau_end)},
        {"config.hard_graph", b(c.hard_graph)},
        {"config.score_function", b(c.score_function)},
        {"config.seed_hi", s(static_cast<double>(c.seed >> 32))},
        {"config.seed_lo", s(static_cast<double>(c.seed & 0xffffffffULL))},
        {"config.laplace_scale", s(c.laplace_scale)},
        {"config.allow_self_loops", b(c.allow_self_loops)},
        {"config.normalize", b(c.normalize)},
        {"config.embed_dim", z(c.embed_dim)},
        {"config.agg_dim", z(c.agg_dim)},
        {"config.prior_hidden", z(c.prior_hidden)},
        {"config.residual", b(c.residual)},
        {"config.diffusion_floor", s(c.diffusion_floor)},
        {"config.encoder_hidden", z(c.encoder_hidden)},
        {"config.context_dim", z(c.context_dim)},
        {"config.posterior_hidden", z(c.posterior_hidden)},
        {"config.init_logit", s(c.init_logit)},
        {"config.snapshot_every", s(static_cast<double>(c.snapshot_every))},
        {"config.max_divergent_epochs", s(static_cast<double>(c.max_divergent_epochs))},
    };
}

TrainConfig config_from_entries(const nn::NamedArrays& entries, std::size_t& dim) {
    auto get = [&](const std::string& key) {
        for (const auto& [name, a] : entries)
            if (name == "config." + key) return a.item();
        throw ParseError("checkpoint is missing config." + key);
    };
    auto sz = [&](const std::string& key) { return static_cast<std::size_t>(get(key)); };
    TrainConfig c;
    dim = sz("dim");
    c.sparsity = get("sparsity");
    c.step = get("step");
    c.t_end = get("t_end");
    c.lr = get("lr");
    c.warmup_epochs = static_cast<long>(get("warmup_epochs"));
    c.epochs = static_cast<long>(get("epochs"));
    c.batch_size = sz("batch_size");
    c.tau_start = get("tau_start");
    c.tau_end = get("tau_end");
    c.hard_graph = get("hard_graph") != 0.0;
    c.score_function = get("score_function") != 0.0;
    c.seed = (static_cast<std::uint64_t>(get("seed_hi")) << 32) | static_cast<std::uint64_t>(get("seed_lo"));
    c.laplace_scale = get("laplace_scale");
    c.allow_self_loops = get("allow_self_loops") != 0.0;
    c.normalize = get("normalize") != 0.0;
    c.embed_dim = sz("embed_dim");
    c.agg_dim = sz("agg_dim");
    c.prior_hidden = sz("prior_hidden");
    c.residual = get("residual") != 0.0;
    c.diffusion_floor = get("diffusion_floor");
    c.encoder_hidden = sz("encoder_hidden");
    c.context_dim = sz("context_dim");
    c.posterior_hidden = sz("posterior_hidden");
    c.init_logit = get("init_logit");
    c.snapshot_every = static_cast<long>(get("snapshot_every"));
    c.max_divergent_epochs = static_cast<long>(get("max_divergent_epochs"));
    return c;
}

namespace {

void restore_params(ParamStore& params, const nn::NamedArrays& entries, const std::string& where) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string key = "param." + params.name(i);
        auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.first == key; });
        if (it == entries.end()) throw ParseError(where + ": missing " + key);
        if (it->second.shape() != params.value(i).shape())
            throw ParseError(where + ": shape mismatch for " + key + ": " + ad::shape_string(it->second.shape()) +
                             " vs " + ad::shape_string(params.value(i).shape()));
        params.value(i) = it->second;
    }
}

const Array* find_entry(const nn::NamedArrays& entries, const std::string& key) {
    for (const auto& [name, a] : entries)
        if (name == key) return &a;
    return nullptr;
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
    nn::NamedArrays entries = config_entries(model_.config, model_.dim);
    const ParamStore& ps = model_.params;
    for (std::size_t i = 0; i < ps.size(); ++i) entries.emplace_back("param." + ps.name(i), ps.value(i));
    entries.emplace_back("trainer.epoch", Array::scalar(static_cast<double>(epoch_)));
    entries.emplace_back("trainer.divergent", Array::scalar(static_cast<double>(divergent_total_)));
    entries.emplace_back("adam.step", Array::scalar(static_cast<double>(adam_.step)));
    for (std::size_t i = 0; i < adam_.m.size(); ++i) {
        entries.emplace_back("adam.m." + ps.name(i), adam_.m[i]);
        entries.emplace_back("adam.v." + ps.name(i), adam_.v[i]);
    }
    nn::save_checkpoint(path, entries);
}

void Trainer::load_checkpoint(const std::filesystem::path& path) {
    const nn::NamedArrays entries = nn::load_checkpoint(path);
    std::size_t dim = 0;
    config_from_entries(entries, dim);
    if (dim != model_.dim) throw ValidationError("checkpoint dimension does not match the model");
    restore_params(model_.params, entries, path.string());
    auto scalar = [&](const std::string& key) {
        const Array* a = find_entry(entries, key);
        if (!a) throw ParseError(path.string() + ": missing " + key);
        return a->item();
    };
    epoch_ = static_cast<long>(scalar("trainer.epoch"));
    divergent_total_ = static_cast<long>(scalar("trainer.divergent"));
    adam_ = nn::AdamState{};
    adam_.step = static_cast<long>(scalar("adam.step"));
    if (adam_.step > 0) {
        const ParamStore& ps = model_.params;
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const Array* m = find_entry(entries, "adam.m." + ps.name(i));
            const Array* v = find_entry(entries, "adam.v." + ps.name(i));
            if (!m || !v) throw ParseError(path.string() + ": missing optimizer state for " + ps.name(i));
            adam_.m.push_back(*m);
            adam_.v.push_back(*v);
        }
    }
}

ScotchModel load_model(const std::filesystem::path& path) {
    const nn::NamedArrays entries = nn::load_checkpoint(path);
    std::size_t dim = 0;
    const TrainConfig cfg = config_from_entries(entries, dim);
    ScotchModel m(dim, cfg);
    restore_params(m.params, entries, path.string());
    return m;
}

void save_history(const std::filesystem::path& path, const std::vector<HistoryRow>& history) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    const bool with_auroc = std::any_of(history.begin(), history.end(), [](const HistoryRow& r) { return r.auroc; });
    out << (with_auroc ? "epoch,elbo,auroc\n" : "epoch,elbo\n");
    char buf[64];
    for (const HistoryRow& r : history) {
        std::snprintf(buf, sizeof buf, "%.17g", r.elbo);
        out << r.epoch << ',' << buf;
        if (with_auroc) {
            std::snprintf(buf, sizeof buf, "%.17g", r.auroc.value_or(std::nan("")));
            out << ',' << buf;
        }
        out << '\n';
    }
}

// ---- ODE-mean baseline ----------------------------------------------------------

Var OdeMeanModel::drift(Bound p, Var z) const {
    std::vector<Var> cols;
    cols.reserve(nets.size());
    for (const nn::Mlp& net : nets) cols.push_back(net.forward(p, z));
    return cols.size() == 1 ? cols[0] : ad::concat(std::span<const Var>(cols), 1);
}

std::vector<double> OdeMeanModel::drift_at(std::span<const double> z) const {
    Tape tape;
    const auto p = params.bind_constants(tape);
    Var out = drift(p, tape.constant(Array({1, z.size()}, std::vector<double>(z.begin(), z.end()))));
    return {out.value().data().begin(), out.value().data().end()};
}

Array OdeMeanModel::graph_scores() const {
    Array s({dim, dim});
    for (std::size_t d = 0; d < dim; ++d) {
        const Array& w = params.value(nets[d].layers().front().weight);
        for (std::size_t i = 0; i < dim; ++i) {
            double sq = 0.0;
            for (std::size_t h = 0; h < w.cols(); ++h) sq += w.at(i, h) * w.at(i, h);
            s.at(i, d) = std::sqrt(sq);
        }
    }
    return s;
}

OdeMeanModel ode_mean_fit(const data::Dataset& dataset, const OdeConfig& config) {
    dataset.validate();
    if (dataset.series.empty()) throw ValidationError("dataset has no series");
    if (!(config.step > 0.0)) throw ValidationError("step must be positive");
    const std::size_t D = dataset.dim;
    double t_end = config.t_end > 0.0 ? config.t_end : dataset.last_time();
    t_end = std::max(config.step, std::ceil(t_end / config.step - 1e-9) * config.step);

    OdeMeanModel m;
    m.dim = D;
    Rng rng = make_rng(config.seed, "ode.init");
    for (std::size_t d = 0; d < D; ++d)
        m.nets.emplace_back(m.params, "ode.f" + std::to_string(d), D, std::vector<std::size_t>{config.hidden}, 1, false,
                            rng);

    std::vector<std::size_t> all(dataset.series.size());
    std::iota(all.begin(), all.end(), 0);
    const GridBatch batch = make_grid_batch(dataset, all, config.step, t_end);
    const std::size_t S = all.size(), K = batch.steps;
    // reset[k] marks each series' first observation, where the path starts.
    std::vector<Array> reset(K + 1, column(S));
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t k = 0; k <= K; ++k)
            if (batch.observed[k][s] != 0.0) {
                reset[k][s] = 1.0;
                break;
            }

    nn::AdamState adam;
    for (long epoch = 0; epoch < config.epochs; ++epoch) {
        Tape tape;
        const auto p = m.params.bind(tape);
        Var z = tape.constant(Array({S, D}));
        Var loss = tape.constant(Array::scalar(0.0));
        for (std::size_t k = 0; k <= K; ++k) {
            if (k > 0) z = ad::add(z, ad::scale(m.drift(p, z), config.step));
            Var r = tape.constant(reset[k]);
            z = ad::add(z, ad::mul(r, ad::sub(tape.constant(batch.values[k]), z)));
            if (!batch.any_observed[k]) continue;
            Var err = ad::mul(ad::sub(tape.constant(batch.values[k]), z), tape.constant(batch.observed[k]));
            loss = ad::add(loss, ad::sum(ad::square(err)));
        }
        for (const nn::Mlp& net : m.nets) {
            Var w = p[net.layers().front().weight];
            Var norms = ad::exp(ad::scale(ad::log(ad::add_scalar(ad::sum_cols(ad::square(w)), 1e-12)), 0.5));
            loss = ad::add(loss, ad::scale(ad::sum(norms), config.group_lasso));
        }
        if (!std::isfinite(loss.value().item()))
            throw TrainingError("ODE-mean fit produced a non-finite loss at epoch " + std::to_string(epoch));
        tape.backward(loss);
        nn::adam_step(adam, m.params, nn::gradients(p), config.lr);
    }
    return m;
}

}  // namespace scotch::infer
