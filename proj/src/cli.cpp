#include "scotch/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "scotch/datagen.hpp"
#include "scotch/error.hpp"
#include "scotch/eval.hpp"
#include "scotch/graph.hpp"
#include "scotch/inference.hpp"
#include "scotch/intervene.hpp"
#include "scotch/model.hpp"
#include "scotch/sde.hpp"

namespace scotch::cli {

namespace fs = std::filesystem;
using ad::Array;
using data::KeyValues;

namespace {

// Shortest text that parses back to the same double.
std::string fmt(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string dashed(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

// Flags, config file and defaults merged with precedence flag > file > default.
class Settings {
public:
    void add(std::string key, std::string def, std::string help, bool flag = false) {
        Item it;
        it.key = std::move(key);
        it.def = std::move(def);
        it.help = std::move(help);
        it.flag = flag;
        items_.push_back(std::move(it));
    }

    void attach(CLI::App& app) {
        app.add_option("--config", config_, "key = value file of settings; flags override it");
        for (Item& it : items_) {
            const std::string help = it.help + " [default: " + (it.def.empty() ? "none" : it.def) + "]";
            if (it.flag)
                it.opt = app.add_flag("--" + dashed(it.key) + ",!--no-" + dashed(it.key), it.on, help);
            else
                it.opt = app.add_option("--" + dashed(it.key), it.text, help);
        }
    }

    KeyValues resolve() const {
        KeyValues kv;
        for (const Item& it : items_) kv[it.key] = it.def;
        if (!config_.empty()) {
            for (const auto& [key, value] : data::load_key_values(config_)) {
                if (key == "command" || key == "generator") continue;
                if (!kv.count(key)) throw ParseError(config_ + ": unknown setting '" + key + "'");
                kv[key] = value;
            }
        }
        for (const Item& it : items_)
            if (it.opt->count() > 0) kv[it.key] = it.flag ? (it.on ? "true" : "false") : it.text;
        return kv;
    }

private:
    struct Item {
        std::string key, def, help;
        bool flag = false;
        std::string text;
        bool on = false;
        CLI::Option* opt = nullptr;
    };
    std::deque<Item> items_;
    std::string config_;
};

const std::string& get(const KeyValues& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ParseError("missing setting '" + key + "'");
    return it->second;
}

bool is_auto(const KeyValues& kv, const std::string& key) {
    const std::string& v = get(kv, key);
    return v.empty() || v == "auto";
}

double number(const KeyValues& kv, const std::string& key) {
    const std::string& v = get(kv, key);
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) throw ParseError("setting '" + key + "': not a number: '" + v + "'");
    return x;
}

long integer(const KeyValues& kv, const std::string& key) {
    const double x = number(kv, key);
    if (x != std::floor(x) || std::abs(x) > 9e15) throw ParseError("setting '" + key + "': not an integer");
    return static_cast<long>(x);
}

std::size_t count(const KeyValues& kv, const std::string& key) {
    const long x = integer(kv, key);
    if (x < 0) throw ValidationError("setting '" + key + "' must be non-negative");
    return static_cast<std::size_t>(x);
}

std::uint64_t seed(const KeyValues& kv, const std::string& key) {
    const std::string& v = get(kv, key);
    try {
        std::size_t used = 0;
        const unsigned long long s = std::stoull(v, &used);
        if (used != v.size() || v[0] == '-') throw std::invalid_argument(v);
        return s;
    } catch (const std::exception&) {
        throw ParseError("setting '" + key + "': not an unsigned integer: '" + v + "'");
    }
}

bool boolean(const KeyValues& kv, const std::string& key) {
    const std::string& v = get(kv, key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ParseError("setting '" + key + "': not a boolean: '" + v + "'");
}

std::vector<double> numbers(const std::string& text, const std::string& key) {
    std::string s = text;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream in(s);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        char* end = nullptr;
        const double x = std::strtod(tok.c_str(), &end);
        if (end != tok.c_str() + tok.size()) throw ParseError("setting '" + key + "': not a number: '" + tok + "'");
        out.push_back(x);
    }
    return out;
}

void add_common(Settings& s) {
    s.add("out", "", std::string("output directory; defaults to $") + kOutputRootEnv + "/<command>");
    s.add("threads", "1", "worker threads; computation is single-threaded, so only 1 is accepted");
}

fs::path prepare_output(KeyValues& kv, const std::string& command) {
    if (count(kv, "threads") != 1) throw ValidationError("--threads: only single-threaded execution is supported");
    fs::path out = get(kv, "out");
    if (out.empty()) {
        const char* root = std::getenv(kOutputRootEnv);
        out = fs::path(root && *root ? root : "scotch_runs") / command;
    }
    fs::create_directories(out);
    kv["out"] = out.string();
    return out;
}

void persist(KeyValues kv, const std::string& command, const fs::path& out) {
    kv["command"] = command;
    data::save_key_values(out / "config.txt", kv);
}

// ---- normalization file ------------------------------------------------------------

void save_normalization(const fs::path& path, const data::Normalization& n) {
    KeyValues kv;
    kv["dim"] = std::to_string(n.mean.size());
    for (std::size_t d = 0; d < n.mean.size(); ++d) {
        kv["mean." + std::to_string(d)] = fmt(n.mean[d]);
        kv["std." + std::to_string(d)] = fmt(n.stddev[d]);
    }
    data::save_key_values(path, kv);
}

data::Normalization load_normalization(const fs::path& path) {
    const KeyValues kv = data::load_key_values(path);
    const std::size_t dim = count(kv, "dim");
    data::Normalization n;
    for (std::size_t d = 0; d < dim; ++d) {
        n.mean.push_back(number(kv, "mean." + std::to_string(d)));
        n.stddev.push_back(number(kv, "std." + std::to_string(d)));
    }
    return n;
}

// ---- generate ----------------------------------------------------------------------

void generate_settings(Settings& s) {
    s.add("n", "auto", "number of series N (lorenz96/glycolysis 100, bimodal 50)");
    s.add("length", "auto", "observations per series I (lorenz96/glycolysis 100, bimodal 50)");
    s.add("obs_interval", "auto", "time between observations (lorenz96/glycolysis 1, bimodal 0.1)");
    s.add("sigma", "auto", "diffusion scale (lorenz96 0.5, glycolysis/bimodal 0.01)");
    s.add("sim_dt", "0.005", "simulation step");
    s.add("dim", "10", "lorenz96 dimension");
    s.add("forcing", "10", "lorenz96 forcing F");
    s.add("p", "0", "probability of dropping each observation");
    s.add("normalize", "false", "z-score every dimension", true);
    s.add("seed", "0", "root seed");
    add_common(s);
}

int cmd_generate(const std::string& generator, KeyValues kv, std::ostream& out) {
    const fs::path dir = prepare_output(kv, "generate");
    kv["generator"] = generator;
    const std::uint64_t sd = seed(kv, "seed");
    auto or_default = [&](const std::string& key, double def) { return is_auto(kv, key) ? def : number(kv, key); };
    auto count_or = [&](const std::string& key, std::size_t def) { return is_auto(kv, key) ? def : count(kv, key); };

    auto record = [&](const auto& p) {
        kv["n"] = std::to_string(p.series);
        kv["length"] = std::to_string(p.length);
        kv["obs_interval"] = fmt(p.obs_interval);
        kv["sigma"] = fmt(p.sigma);
    };

    data::Dataset ds;
    if (generator == "lorenz96") {
        data::Lorenz96Params p;
        p.series = count_or("n", p.series);
        p.length = count_or("length", p.length);
        p.obs_interval = or_default("obs_interval", p.obs_interval);
        p.sigma = or_default("sigma", p.sigma);
        p.sim_dt = number(kv, "sim_dt");
        p.dim = count(kv, "dim");
        p.forcing = number(kv, "forcing");
        p.seed = sd;
        record(p);
        ds = data::gen_lorenz96(p);
    } else if (generator == "glycolysis") {
        data::GlycolysisParams p;
        p.series = count_or("n", p.series);
        p.length = count_or("length", p.length);
        p.obs_interval = or_default("obs_interval", p.obs_interval);
        p.sigma = or_default("sigma", p.sigma);
        p.sim_dt = number(kv, "sim_dt");
        p.seed = sd;
        record(p);
        ds = data::gen_glycolysis(p);
    } else if (generator == "bimodal") {
        data::BimodalParams p;
        p.series = count_or("n", p.series);
        p.length = count_or("length", p.length);
        p.obs_interval = or_default("obs_interval", p.obs_interval);
        p.sigma = or_default("sigma", p.sigma);
        p.sim_dt = number(kv, "sim_dt");
        p.seed = sd;
        record(p);
        ds = data::gen_bimodal(p);
    } else {
        throw ValidationError("unknown generator '" + generator + "'");
    }

    const double p = number(kv, "p");
    if (p > 0.0) {
        ds = data::drop_observations(ds, p, sd);
        ds.meta["drop_p"] = fmt(p);
    }
    if (boolean(kv, "normalize")) {
        const data::Normalization norm = data::fit_normalization(ds);
        ds = data::normalize(ds, norm);
        for (std::size_t d = 0; d < ds.dim; ++d) {
            ds.meta["norm.mean." + std::to_string(d)] = fmt(norm.mean[d]);
            ds.meta["norm.std." + std::to_string(d)] = fmt(norm.stddev[d]);
        }
        save_normalization(dir / "normalization.txt", norm);
    }
    data::save_dataset(ds, dir / "data.csv");
    persist(kv, "generate", dir);
    out << "wrote " << (dir / "data.csv").string() << " (" << ds.series.size() << " series, D=" << ds.dim << ", "
        << ds.observation_count() << " observations)\n";
    return kOk;
}

// ---- train -------------------------------------------------------------------------

void train_settings(Settings& s) {
    const infer::TrainConfig d;
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    s.add("data", "", "dataset CSV");
    s.add("resume", "", "checkpoint to resume from");
    s.add("sparsity", fmt(d.sparsity), "graph sparsity coefficient lambda_s");
    s.add("step", fmt(d.step), "solver step");
    s.add("t_end", "auto", "training horizon; auto rounds the last observation time up to the grid");
    s.add("lr", fmt(d.lr), "Adam learning rate after warmup");
    s.add("warmup_epochs", std::to_string(d.warmup_epochs), "linear learning-rate warmup length");
    s.add("epochs", std::to_string(d.epochs), "training epochs");
    s.add("batch_size", std::to_string(d.batch_size), "series per epoch, 0 for all");
    s.add("tau_start", fmt(d.tau_start), "initial relaxation temperature");
    s.add("tau_end", fmt(d.tau_end), "final relaxation temperature");
    s.add("hard_graph", b(d.hard_graph), "straight-through hard graph samples", true);
    s.add("score_function", b(d.score_function), "score-function gradient for the graph", true);
    s.add("seed", std::to_string(d.seed), "root seed");
    s.add("laplace_scale", fmt(d.laplace_scale), "observation noise scale b");
    s.add("allow_self_loops", b(d.allow_self_loops), "allow diagonal edges", true);
    s.add("normalize", b(d.normalize), "z-score the data before training", true);
    s.add("embed_dim", std::to_string(d.embed_dim), "node embedding width");
    s.add("agg_dim", std::to_string(d.agg_dim), "message width");
    s.add("prior_hidden", std::to_string(d.prior_hidden), "prior MLP width, 0 for max(2D, embed_dim)");
    s.add("residual", b(d.residual), "residual prior MLPs", true);
    s.add("diffusion_floor", fmt(d.diffusion_floor), "lower bound on the prior diffusion");
    s.add("encoder_hidden", std::to_string(d.encoder_hidden), "GRU width");
    s.add("context_dim", std::to_string(d.context_dim), "context width");
    s.add("posterior_hidden", std::to_string(d.posterior_hidden), "posterior drift width");
    s.add("init_logit", fmt(d.init_logit), "initial edge logit");
    s.add("snapshot_every", std::to_string(d.snapshot_every), "epochs between edge-probability snapshots");
    s.add("max_divergent_epochs", std::to_string(d.max_divergent_epochs), "consecutive divergent epochs tolerated");
    s.add("checkpoint_every", "0", "epochs between intermediate checkpoints, 0 for the final one only");
    s.add("log_every", "100", "epochs between progress lines, 0 for none");
    add_common(s);
}

infer::TrainConfig train_config(const KeyValues& kv) {
    infer::TrainConfig c;
    c.sparsity = number(kv, "sparsity");
    c.step = number(kv, "step");
    c.t_end = is_auto(kv, "t_end") ? 0.0 : number(kv, "t_end");
    c.lr = number(kv, "lr");
    c.warmup_epochs = integer(kv, "warmup_epochs");
    c.epochs = integer(kv, "epochs");
    c.batch_size = count(kv, "batch_size");
    c.tau_start = number(kv, "tau_start");
    c.tau_end = number(kv, "tau_end");
    c.hard_graph = boolean(kv, "hard_graph");
    c.score_function = boolean(kv, "score_function");
    c.seed = seed(kv, "seed");
    c.laplace_scale = number(kv, "laplace_scale");
    c.allow_self_loops = boolean(kv, "allow_self_loops");
    c.normalize = boolean(kv, "normalize");
    c.embed_dim = count(kv, "embed_dim");
    c.agg_dim = count(kv, "agg_dim");
    c.prior_hidden = count(kv, "prior_hidden");
    c.residual = boolean(kv, "residual");
    c.diffusion_floor = number(kv, "diffusion_floor");
    c.encoder_hidden = count(kv, "encoder_hidden");
    c.context_dim = count(kv, "context_dim");
    c.posterior_hidden = count(kv, "posterior_hidden");
    c.init_logit = number(kv, "init_logit");
    c.snapshot_every = integer(kv, "snapshot_every");
    c.max_divergent_epochs = integer(kv, "max_divergent_epochs");
    return c;
}

int cmd_train(KeyValues kv, std::ostream& out, std::ostream& err) {
    if (get(kv, "data").empty()) throw ValidationError("train needs --data");
    infer::TrainConfig cfg = train_config(kv);
    const long checkpoint_every = integer(kv, "checkpoint_every");
    const long log_every = integer(kv, "log_every");
    const fs::path dir = prepare_output(kv, "train");

    data::Dataset ds = data::load_dataset(get(kv, "data"));
    if (cfg.normalize) {
        const data::Normalization norm = data::fit_normalization(ds);
        ds = data::normalize(ds, norm);
        save_normalization(dir / "normalization.txt", norm);
    }
    if (cfg.t_end <= 0.0) {
        if (!(cfg.step > 0.0)) throw ValidationError("step must be positive");
        cfg.t_end = std::max(1.0, std::ceil(ds.last_time() / cfg.step - 1e-9)) * cfg.step;
    }
    kv["t_end"] = fmt(cfg.t_end);
    cfg.validate();

    infer::ScotchModel model(ds.dim, cfg);
    infer::Trainer trainer(model, ds);
    if (!get(kv, "resume").empty()) trainer.load_checkpoint(get(kv, "resume"));
    persist(kv, "train", dir);

    fs::create_directories(dir / "snapshots");
    std::size_t written = 0;
    auto flush_snapshots = [&] {
        for (; written < trainer.snapshots().size(); ++written) {
            const infer::Snapshot& s = trainer.snapshots()[written];
            save_matrix(dir / "snapshots" / ("edge_probs_" + std::to_string(s.epoch) + ".txt"), s.probabilities,
                        std::string("edge probabilities at epoch ") + std::to_string(s.epoch) + "; " +
                            kEdgeConvention);
        }
    };
    trainer.run([&](const infer::HistoryRow& row) {
        const long done = row.epoch + 1;
        if (log_every > 0 && (done % log_every == 0 || done == cfg.epochs)) {
            err << "epoch " << done << "/" << cfg.epochs << " elbo " << fmt(row.elbo);
            if (row.auroc) err << " auroc " << fmt(*row.auroc);
            err << '\n';
        }
        if (checkpoint_every > 0 && done % checkpoint_every == 0)
            trainer.save_checkpoint(dir / ("checkpoint_" + std::to_string(done) + ".txt"));
        flush_snapshots();
    });
    flush_snapshots();

    trainer.save_checkpoint(dir / "checkpoint.txt");
    save_matrix(dir / "edge_probs.txt", model.edge_probabilities(),
                std::string("edge probabilities; ") + kEdgeConvention);
    save_graph(dir / "map_graph.txt", model.map_graph());
    infer::save_history(dir / "history.csv", trainer.history());
    out << "trained " << trainer.epoch() << " epochs";
    if (!trainer.history().empty()) out << ", final elbo " << fmt(trainer.history().back().elbo);
    if (trainer.divergent_epochs() > 0) out << ", " << trainer.divergent_epochs() << " divergent epochs skipped";
    out << "\nwrote " << (dir / "edge_probs.txt").string() << '\n';
    return kOk;
}

// ---- evaluate ----------------------------------------------------------------------

void evaluate_settings(Settings& s) {
    s.add("probs", "", "edge-probability matrix");
    s.add("truth", "", "ground-truth graph file, or a dataset CSV carrying one");
    s.add("exclude_diagonal", "false", "leave self-loop cells out of every metric", true);
    s.add("threshold", "0.5", "edge threshold for F1/TPR/FDR");
    add_common(s);
}

int cmd_evaluate(KeyValues kv, std::ostream& out) {
    if (get(kv, "probs").empty() || get(kv, "truth").empty())
        throw ValidationError("evaluate needs --probs and --truth");
    const double threshold = number(kv, "threshold");
    const bool exclude = boolean(kv, "exclude_diagonal");
    const fs::path dir = prepare_output(kv, "evaluate");

    const Array probs = load_matrix(get(kv, "probs"));
    const fs::path truth_path = get(kv, "truth");
    Graph truth;
    if (truth_path.extension() == ".csv") {
        const data::Dataset ds = data::load_dataset(truth_path);
        if (!ds.truth) throw ValidationError(truth_path.string() + " carries no ground-truth graph");
        truth = *ds.truth;
    } else {
        truth = load_graph(truth_path);
    }
    if (probs.rows() != truth.dim() || probs.cols() != truth.dim())
        throw DimensionError("probability matrix is " + std::to_string(probs.rows()) + " x " +
                             std::to_string(probs.cols()) + ", truth has D=" + std::to_string(truth.dim()));

    const Array mask = eval::evaluation_mask(truth.dim(), exclude);
    eval::Report report;
    report["auroc"] = eval::auroc(probs, truth, mask);
    const eval::Confusion c = eval::confusion(probs, truth, mask, threshold);
    const eval::ThresholdMetrics m = eval::threshold_metrics(c);
    report["f1"] = m.f1;
    report["tpr"] = m.tpr;
    report["fdr"] = m.fdr;
    report["tp"] = static_cast<double>(c.tp);
    report["fp"] = static_cast<double>(c.fp);
    report["fn"] = static_cast<double>(c.fn);
    report["tn"] = static_cast<double>(c.tn);
    report["cells"] = static_cast<double>(eval::evaluable_cells(mask));
    report["threshold"] = threshold;
    eval::write_report(dir / "report.txt", report);
    persist(kv, "evaluate", dir);
    out << eval::format_report(report);
    return kOk;
}

// ---- simulate / intervene ----------------------------------------------------------

void simulate_settings(Settings& s, bool intervene) {
    s.add("checkpoint", "", "trained checkpoint; its MAP graph drives the prior SDE");
    s.add("generator", "", "lorenz96 | glycolysis | bimodal, instead of a checkpoint");
    s.add("graph", "", "graph file overriding the MAP graph of the checkpoint");
    s.add("sample_graphs", "false", "draw one graph per path from the edge posterior", true);
    s.add("paths", "50", "number of sample paths");
    s.add("step", "auto", "solver step (checkpoint step, or the generator sim_dt)");
    s.add("t_end", "auto", "horizon (checkpoint t_end, or the generator's default series span)");
    s.add("record_every", "auto", "time between written states (checkpoint step, or the generator obs interval)");
    s.add("z0", "", "initial state, one value or D values; zeros when empty");
    s.add("z0_std", "0", "Gaussian jitter added to z0 per path");
    s.add("data", "", "dataset whose first observations seed the paths (path i uses series i mod N)");
    s.add("sigma", "auto", "generator diffusion scale");
    s.add("dim", "10", "lorenz96 dimension");
    s.add("forcing", "10", "lorenz96 forcing F");
    s.add("seed", "0", "root seed");
    if (intervene) s.add("intervention", "", "intervention spec file");
    add_common(s);
}

struct Source {
    std::optional<infer::ScotchModel> model;
    std::optional<data::Normalization> norm;
    sde::SdeSpec base;
    double default_record = 0.0;
};

Source load_source(const KeyValues& kv, double& step, double& t_end) {
    Source src;
    const std::string& ckpt = get(kv, "checkpoint");
    const std::string& gen = get(kv, "generator");
    if (ckpt.empty() == gen.empty()) throw ValidationError("give exactly one of --checkpoint and --generator");
    if (!ckpt.empty()) {
        src.model.emplace(infer::load_model(ckpt));
        const fs::path norm_path = fs::path(ckpt).parent_path() / "normalization.txt";
        if (src.model->config.normalize && fs::exists(norm_path)) src.norm = load_normalization(norm_path);
        step = is_auto(kv, "step") ? src.model->config.step : number(kv, "step");
        t_end = is_auto(kv, "t_end") ? src.model->config.t_end : number(kv, "t_end");
        src.default_record = step;
        return src;
    }
    const double dt = is_auto(kv, "step") ? 0.005 : number(kv, "step");
    auto sigma = [&](double def) { return is_auto(kv, "sigma") ? def : number(kv, "sigma"); };
    step = dt;
    if (gen == "lorenz96") {
        t_end = is_auto(kv, "t_end") ? 99.0 : number(kv, "t_end");
        src.base = data::lorenz96_spec(count(kv, "dim"), number(kv, "forcing"), sigma(0.5), dt, t_end);
        src.default_record = 1.0;
    } else if (gen == "glycolysis") {
        t_end = is_auto(kv, "t_end") ? 99.0 : number(kv, "t_end");
        src.base = data::glycolysis_spec(sigma(0.01), dt, t_end);
        src.default_record = 1.0;
    } else if (gen == "bimodal") {
        t_end = is_auto(kv, "t_end") ? 4.9 : number(kv, "t_end");
        src.base = data::bimodal_spec(sigma(0.01), dt, t_end);
        src.default_record = 0.1;
    } else {
        throw ValidationError("unknown generator '" + gen + "'");
    }
    return src;
}

int cmd_simulate(KeyValues kv, bool intervene, std::ostream& out) {
    const std::string command = intervene ? "intervene" : "simulate";
    const std::size_t paths = count(kv, "paths");
    if (paths == 0) throw ValidationError("--paths must be positive");
    const std::uint64_t sd = seed(kv, "seed");
    const double z0_std = number(kv, "z0_std");
    if (!(z0_std >= 0.0)) throw ValidationError("--z0-std must be non-negative");
    if (intervene && get(kv, "intervention").empty()) throw ValidationError("intervene needs --intervention");
    const fs::path dir = prepare_output(kv, command);

    double step = 0.0, t_end = 0.0;
    Source src = load_source(kv, step, t_end);
    const std::size_t D = src.model ? src.model->dim : src.base.dim;
    kv["step"] = fmt(step);
    kv["t_end"] = fmt(t_end);
    const double record = is_auto(kv, "record_every") ? src.default_record : number(kv, "record_every");
    kv["record_every"] = fmt(record);
    const double ratio = record / step;
    const auto stride = static_cast<std::size_t>(std::llround(ratio));
    if (stride == 0 || std::abs(ratio - static_cast<double>(stride)) > 1e-9 * std::max(1.0, ratio))
        throw ValidationError("record_every " + fmt(record) + " is not a positive multiple of the step " + fmt(step));

    std::vector<double> z0(D, 0.0);
    const std::vector<double> given = numbers(get(kv, "z0"), "z0");
    if (given.size() == 1) z0.assign(D, given[0]);
    else if (given.size() == D) z0 = given;
    else if (!given.empty()) throw ValidationError("--z0 needs 1 or " + std::to_string(D) + " values");
    std::optional<data::Dataset> seeds;
    if (!get(kv, "data").empty()) {
        seeds = data::load_dataset(get(kv, "data"));
        if (seeds->dim != D) throw DimensionError("--data has D=" + std::to_string(seeds->dim) + ", model has " +
                                                  std::to_string(D));
    }
    auto to_model = [&](std::vector<double> z) {
        if (src.norm)
            for (std::size_t d = 0; d < D; ++d) z[d] = (z[d] - src.norm->mean[d]) / src.norm->stddev[d];
        return z;
    };

    std::optional<intervene::Intervention> iv;
    if (intervene) iv.emplace(intervene::load_intervention(get(kv, "intervention"), D));

    std::optional<Graph> fixed;
    Array probs;
    const bool sample = boolean(kv, "sample_graphs");
    if (src.model) {
        probs = src.model->edge_probabilities();
        if (!get(kv, "graph").empty()) {
            fixed = load_graph(get(kv, "graph"));
            if (fixed->dim() != D) throw DimensionError("--graph dimension does not match the checkpoint");
        } else if (!sample) {
            fixed = src.model->map_graph();
        }
    }
    persist(kv, command, dir);

    std::ofstream csv(dir / "trajectories.csv");
    if (!csv) throw Error("cannot write " + (dir / "trajectories.csv").string());
    csv << "path,time";
    for (std::size_t d = 0; d < D; ++d) csv << ",z_" << d;
    csv << '\n';
    char buf[32];
    for (std::size_t i = 0; i < paths; ++i) {
        std::vector<double> start = z0;
        if (seeds && !seeds->series.empty()) {
            const data::TimeSeries& s = seeds->series[i % seeds->series.size()];
            if (s.times.empty()) throw ValidationError("--data series " + std::to_string(i % seeds->series.size()) +
                                                       " has no observations");
            start.assign(s.values.data().begin(), s.values.data().begin() + static_cast<std::ptrdiff_t>(D));
        }
        start = to_model(start);
        if (z0_std > 0.0) {
            Rng init = make_rng(sd, "simulate.init", i);
            for (double& v : start) v += z0_std * standard_normal(init);
        }
        sde::SdeSpec spec = src.base;
        if (src.model) {
            Graph g;
            if (fixed) {
                g = *fixed;
            } else {
                Rng grng = make_rng(sd, "simulate.graph", i);
                g = model::sample_graph_exact(probs, src.model->config.allow_self_loops, grng);
            }
            spec = src.model->prior_spec(g, step, t_end);
        }
        Rng rng = make_rng(sd, "simulate.path", i);
        const sde::Trajectory tr = iv ? intervene::simulate_intervened(spec, *iv, start, rng)
                                      : sde::em_solve(spec, start, rng);
        for (std::size_t k = 0; k <= tr.steps(); k += stride) {
            csv << i;
            std::snprintf(buf, sizeof buf, "%.17g", tr.times[k]);
            csv << ',' << buf;
            const auto z = tr.state(k);
            for (std::size_t d = 0; d < D; ++d) {
                const double v = src.norm ? z[d] * src.norm->stddev[d] + src.norm->mean[d] : z[d];
                std::snprintf(buf, sizeof buf, "%.17g", v);
                csv << ',' << buf;
            }
            csv << '\n';
        }
    }
    out << "wrote " << paths << " paths to " << (dir / "trajectories.csv").string() << '\n';
    return kOk;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ParseError*>(&e)) return kParse;
    if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const DimensionError*>(&e) ||
        dynamic_cast<const DomainError*>(&e))
        return kValidation;
    if (dynamic_cast<const DivergenceError*>(&e) || dynamic_cast<const TrainingError*>(&e)) return kDivergence;
    if (dynamic_cast<const MetricError*>(&e)) return kMetric;
    return kFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Bayesian structure learning for continuous-time stochastic systems", "scotch"};
    app.require_subcommand(1);

    Settings gen_s, train_s, eval_s, sim_s, int_s;
    generate_settings(gen_s);
    train_settings(train_s);
    evaluate_settings(eval_s);
    simulate_settings(sim_s, false);
    simulate_settings(int_s, true);

    std::string generator;
    CLI::App* gen = app.add_subcommand("generate", "simulate a synthetic dataset with its ground-truth graph");
    gen->add_option("generator", generator, "lorenz96 | glycolysis | bimodal")
        ->required()
        ->check(CLI::IsMember({"lorenz96", "glycolysis", "bimodal"}));
    gen_s.attach(*gen);
    CLI::App* train = app.add_subcommand("train", "fit the latent SDE model and its edge posterior");
    train_s.attach(*train);
    CLI::App* evaluate = app.add_subcommand("evaluate", "score an edge-probability matrix against a graph");
    eval_s.attach(*evaluate);
    CLI::App* simulate = app.add_subcommand("simulate", "sample paths from a trained model or a generator");
    sim_s.attach(*simulate);
    CLI::App* intervene = app.add_subcommand("intervene", "sample paths under a state-space intervention");
    int_s.attach(*intervene);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kParse;
    }

    try {
        if (*gen) return cmd_generate(generator, gen_s.resolve(), out);
        if (*train) return cmd_train(train_s.resolve(), out, err);
        if (*evaluate) return cmd_evaluate(eval_s.resolve(), out);
        if (*simulate) return cmd_simulate(sim_s.resolve(), false, out);
        if (*intervene) return cmd_simulate(int_s.resolve(), true, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return kFailure;
}

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace scotch::cli
