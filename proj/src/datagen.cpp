#include "scotch/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "scotch/error.hpp"

namespace scotch::data {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::size_t steps_per(double interval, double dt) {
    const double r = interval / dt;
    if (!(dt > 0.0) || std::abs(r - std::round(r)) > 1e-9 * std::max(1.0, r) || std::round(r) < 1.0)
        throw ValidationError("observation interval " + fmt(interval) + " is not a multiple of sim_dt " + fmt(dt));
    return static_cast<std::size_t>(std::llround(r));
}

void put_params(Dataset& ds, const std::string& gen, std::uint64_t seed) {
    ds.meta["generator"] = gen;
    ds.meta["seed"] = std::to_string(seed);
}

}  // namespace

void Dataset::validate() const {
    if (dim == 0) throw ValidationError("dataset dimension must be positive");
    for (std::size_t n = 0; n < series.size(); ++n) {
        const TimeSeries& s = series[n];
        if (s.times.size() != s.values.rows() || (!s.times.empty() && s.values.cols() != dim))
            throw ValidationError("series " + std::to_string(n) + " has inconsistent shape");
        for (std::size_t i = 1; i < s.times.size(); ++i)
            if (!(s.times[i] > s.times[i - 1]))
                throw ValidationError("series " + std::to_string(n) + " times are not strictly increasing");
    }
    if (truth && truth->dim() != dim) throw ValidationError("ground-truth graph does not match dataset dimension");
}

std::size_t Dataset::observation_count() const {
    std::size_t n = 0;
    for (const auto& s : series) n += s.size();
    return n;
}

double Dataset::last_time() const {
    double t = 0.0;
    for (const auto& s : series)
        if (!s.times.empty()) t = std::max(t, s.times.back());
    return t;
}

sde::SdeSpec lorenz96_spec(std::size_t dim, double forcing, double sigma, double sim_dt, double t_end) {
    if (dim < 4) throw ValidationError("Lorenz-96 needs at least 4 dimensions");
    sde::SdeSpec spec;
    spec.dim = dim;
    spec.step = sim_dt;
    spec.t_end = t_end;
    spec.drift = [dim, forcing](std::span<const double> x, double) {
        sde::Vec f(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            const double xp1 = x[(d + 1) % dim], xm1 = x[(d + dim - 1) % dim], xm2 = x[(d + dim - 2) % dim];
            f[d] = (xp1 - xm2) * xm1 - x[d] + forcing;
        }
        return f;
    };
    spec.diffusion = [dim, sigma](std::span<const double>, double) { return sde::Vec(dim, sigma); };
    return spec;
}

Graph lorenz96_truth(std::size_t dim) {
    if (dim < 4) throw ValidationError("Lorenz-96 needs at least 4 dimensions");
    Graph g(dim, true);
    for (std::size_t d = 0; d < dim; ++d)
        for (std::size_t off : {dim - 2, dim - 1, std::size_t{0}, std::size_t{1}}) g.set_edge((d + off) % dim, d);
    return g;
}

sde::SdeSpec glycolysis_spec(double sigma, double sim_dt, double t_end) {
    sde::SdeSpec spec;
    spec.dim = 7;
    spec.step = sim_dt;
    spec.t_end = t_end;
    spec.drift = [](std::span<const double> x, double) {
        const double x1 = x[0], x2 = x[1], x3 = x[2], x4 = x[3], x5 = x[4], x6 = x[5], x7 = x[6];
        const double q = x6 / 0.52;
        const double hill = x1 * x6 / (1.0 + q * q * q * q);
        return sde::Vec{
            2.5 - 100.0 * hill,
            200.0 * hill - 6.0 * x2 * (1.0 - x5) - 12.0 * x2 * x5,
            6.0 * x2 * (1.0 - x5) - 16.0 * x3 * (4.0 - x6),
            16.0 * x3 * (4.0 - x6) - 100.0 * x4 * x5 - 13.0 * (x4 - x7),
            6.0 * x2 * (1.0 - x5) - 100.0 * x4 * x5 - 12.0 * x2 * x5,
            -200.0 * hill + 32.0 * x3 * (4.0 - x6) - 1.28 * x6,
            1.3 * (x4 - x7) - 1.8 * x7,
        };
    };
    spec.diffusion = [sigma](std::span<const double>, double) { return sde::Vec(7, sigma); };
    return spec;
}

Graph glycolysis_truth() {
    // parents per target node, 0-indexed
    const std::vector<std::vector<std::size_t>> parents = {
        {0, 5}, {0, 1, 4, 5}, {1, 2, 4, 5}, {2, 3, 4, 5, 6}, {1, 3, 4}, {0, 2, 5}, {3, 6},
    };
    Graph g(7, true);
    for (std::size_t d = 0; d < 7; ++d)
        for (std::size_t p : parents[d]) g.set_edge(p, d);
    return g;
}

sde::SdeSpec bimodal_spec(double sigma, double sim_dt, double t_end) {
    sde::SdeSpec spec;
    spec.dim = 1;
    spec.step = sim_dt;
    spec.t_end = t_end;
    spec.drift = [](std::span<const double> x, double) { return sde::Vec{x[0]}; };
    spec.diffusion = [sigma](std::span<const double>, double) { return sde::Vec{sigma}; };
    return spec;
}

TimeSeries simulate_series(const sde::SdeSpec& spec, const std::vector<double>& z0, std::size_t length,
                           double obs_interval, Rng& rng) {
    const std::size_t every = steps_per(obs_interval, spec.step);
    const std::size_t D = spec.dim;
    TimeSeries s;
    s.times.resize(length);
    s.values = Array({length, D});
    std::vector<double> z = z0, eta(D);
    const double sq = std::sqrt(spec.step);
    std::size_t k = 0;
    for (std::size_t i = 0; i < length; ++i) {
        if (i > 0)
            for (std::size_t j = 0; j < every; ++j, ++k) {
                for (double& e : eta) e = sq * standard_normal(rng);
                z = sde::em_step(spec, z, spec.time(k), eta);
                for (double v : z)
                    if (!std::isfinite(v))
                        throw DivergenceError("generator diverged at step " + std::to_string(k + 1),
                                              static_cast<long>(k + 1));
            }
        s.times[i] = static_cast<double>(i) * obs_interval;
        std::copy(z.begin(), z.end(), s.values.data().begin() + static_cast<std::ptrdiff_t>(i * D));
    }
    return s;
}

Dataset gen_lorenz96(const Lorenz96Params& p) {
    const double t_end = static_cast<double>(p.length ? p.length - 1 : 0) * p.obs_interval;
    const sde::SdeSpec spec = lorenz96_spec(p.dim, p.forcing, p.sigma, p.sim_dt, t_end);
    Dataset ds;
    ds.dim = p.dim;
    ds.truth = lorenz96_truth(p.dim);
    for (std::size_t n = 0; n < p.series; ++n) {
        Rng init = make_rng(p.seed, "data.init", n);
        std::vector<double> z0(p.dim);
        for (double& v : z0) v = standard_normal(init);
        Rng path = make_rng(p.seed, "data.path", n);
        ds.series.push_back(simulate_series(spec, z0, p.length, p.obs_interval, path));
    }
    put_params(ds, "lorenz96", p.seed);
    ds.meta["forcing"] = fmt(p.forcing);
    ds.meta["sigma"] = fmt(p.sigma);
    ds.meta["sim_dt"] = fmt(p.sim_dt);
    ds.meta["obs_interval"] = fmt(p.obs_interval);
    return ds;
}

Dataset gen_glycolysis(const GlycolysisParams& p) {
    static const double lo[7] = {0.15, 0.19, 0.04, 0.10, 0.08, 0.14, 0.05};
    static const double hi[7] = {1.60, 2.16, 0.20, 0.35, 0.30, 2.67, 0.10};
    const double t_end = static_cast<double>(p.length ? p.length - 1 : 0) * p.obs_interval;
    const sde::SdeSpec spec = glycolysis_spec(p.sigma, p.sim_dt, t_end);
    Dataset ds;
    ds.dim = 7;
    ds.truth = glycolysis_truth();
    for (std::size_t n = 0; n < p.series; ++n) {
        Rng init = make_rng(p.seed, "data.init", n);
        std::vector<double> z0(7);
        for (std::size_t d = 0; d < 7; ++d) z0[d] = uniform(init, lo[d], hi[d]);
        Rng path = make_rng(p.seed, "data.path", n);
        ds.series.push_back(simulate_series(spec, z0, p.length, p.obs_interval, path));
    }
    put_params(ds, "glycolysis", p.seed);
    ds.meta["sigma"] = fmt(p.sigma);
    ds.meta["sim_dt"] = fmt(p.sim_dt);
    ds.meta["obs_interval"] = fmt(p.obs_interval);
    return ds;
}

Dataset gen_bimodal(const BimodalParams& p) {
    const double t_end = static_cast<double>(p.length ? p.length - 1 : 0) * p.obs_interval;
    const sde::SdeSpec spec = bimodal_spec(p.sigma, p.sim_dt, t_end);
    Dataset ds;
    ds.dim = 1;
    Graph g(1, true);
    g.set_edge(0, 0);
    ds.truth = g;
    for (std::size_t n = 0; n < p.series; ++n) {
        Rng path = make_rng(p.seed, "data.path", n);
        ds.series.push_back(simulate_series(spec, {0.0}, p.length, p.obs_interval, path));
    }
    put_params(ds, "bimodal", p.seed);
    ds.meta["sigma"] = fmt(p.sigma);
    ds.meta["sim_dt"] = fmt(p.sim_dt);
    ds.meta["obs_interval"] = fmt(p.obs_interval);
    return ds;
}

Dataset drop_observations(const Dataset& dataset, double p, std::uint64_t seed) {
    if (!(p >= 0.0 && p < 1.0)) throw ValidationError("drop probability must lie in [0, 1)");
    Dataset out = dataset;
    const std::size_t D = dataset.dim;
    for (std::size_t n = 0; n < dataset.series.size(); ++n) {
        const TimeSeries& s = dataset.series[n];
        Rng rng = make_rng(seed, "data.drop", n);
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (uniform(rng, 0.0, 1.0) >= p) keep.push_back(i);
        TimeSeries r;
        r.values = Array({keep.size(), D});
        for (std::size_t k = 0; k < keep.size(); ++k) {
            r.times.push_back(s.times[keep[k]]);
            for (std::size_t d = 0; d < D; ++d) r.values.at(k, d) = s.values.at(keep[k], d);
        }
        out.series[n] = std::move(r);
    }
    out.meta["drop_probability"] = fmt(p);
    out.meta["drop_seed"] = std::to_string(seed);
    return out;
}

std::size_t empty_series_count(const Dataset& dataset) {
    return static_cast<std::size_t>(
        std::count_if(dataset.series.begin(), dataset.series.end(), [](const TimeSeries& s) { return s.size() == 0; }));
}

Normalization fit_normalization(const Dataset& dataset) {
    const std::size_t D = dataset.dim;
    Normalization nm{std::vector<double>(D, 0.0), std::vector<double>(D, 0.0)};
    const std::size_t n = dataset.observation_count();
    if (n < 2) throw ValidationError("normalization needs at least two observations");
    for (const auto& s : dataset.series)
        for (std::size_t i = 0; i < s.size(); ++i)
            for (std::size_t d = 0; d < D; ++d) nm.mean[d] += s.values.at(i, d);
    for (double& m : nm.mean) m /= static_cast<double>(n);
    for (const auto& s : dataset.series)
        for (std::size_t i = 0; i < s.size(); ++i)
            for (std::size_t d = 0; d < D; ++d) {
                const double c = s.values.at(i, d) - nm.mean[d];
                nm.stddev[d] += c * c;
            }
    for (std::size_t d = 0; d < D; ++d) {
        nm.stddev[d] = std::sqrt(nm.stddev[d] / static_cast<double>(n));
        if (!(nm.stddev[d] > 0.0))
            throw ValidationError("dimension " + std::to_string(d) + " is constant and cannot be standardized");
    }
    return nm;
}

Dataset normalize(const Dataset& dataset, const Normalization& norm) {
    Dataset out = dataset;
    for (auto& s : out.series)
        for (std::size_t i = 0; i < s.size(); ++i)
            for (std::size_t d = 0; d < out.dim; ++d)
                s.values.at(i, d) = (s.values.at(i, d) - norm.mean[d]) / norm.stddev[d];
    out.meta["normalized"] = "1";
    return out;
}

Dataset denormalize(const Dataset& dataset, const Normalization& norm) {
    Dataset out = dataset;
    for (auto& s : out.series)
        for (std::size_t i = 0; i < s.size(); ++i)
            for (std::size_t d = 0; d < out.dim; ++d)
                s.values.at(i, d) = s.values.at(i, d) * norm.stddev[d] + norm.mean[d];
    out.meta.erase("normalized");
    return out;
}

std::filesystem::path sidecar(const std::filesystem::path& path, const std::string& ext) {
    std::filesystem::path p = path;
    p.replace_extension(ext);
    return p;
}

void save_key_values(const std::filesystem::path& path, const KeyValues& kv) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

KeyValues load_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return kv;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    dataset.validate();
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "series_id,time";
    for (std::size_t d = 0; d < dataset.dim; ++d) out << ",x_" << d;
    out << '\n';
    for (std::size_t n = 0; n < dataset.series.size(); ++n) {
        const TimeSeries& s = dataset.series[n];
        for (std::size_t i = 0; i < s.size(); ++i) {
            out << n << ',' << fmt(s.times[i]);
            for (std::size_t d = 0; d < dataset.dim; ++d) out << ',' << fmt(s.values.at(i, d));
            out << '\n';
        }
    }
    KeyValues meta = dataset.meta;
    meta["dim"] = std::to_string(dataset.dim);
    meta["series"] = std::to_string(dataset.series.size());
    save_key_values(sidecar(path, ".meta"), meta);
    const auto gpath = sidecar(path, ".graph");
    if (dataset.truth)
        save_graph(gpath, *dataset.truth);
    else
        std::filesystem::remove(gpath);
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset " + path.string());
    const std::string where = path.string() + ":";
    std::string line;
    if (!std::getline(in, line)) throw ParseError(where + "1: missing header");
    std::size_t D = 0;
    {
        std::istringstream hs(trim(line));
        std::string tok;
        std::vector<std::string> cols;
        while (std::getline(hs, tok, ',')) cols.push_back(trim(tok));
        if (cols.size() < 3 || cols[0] != "series_id" || cols[1] != "time")
            throw ParseError(where + "1: header must be series_id,time,x_0,...");
        D = cols.size() - 2;
    }
    std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty()) continue;
        std::istringstream ls(t);
        std::string tok;
        std::vector<double> vals;
        while (std::getline(ls, tok, ',')) {
            tok = trim(tok);
            char* end = nullptr;
            const double v = std::strtod(tok.c_str(), &end);
            if (tok.empty() || end != tok.c_str() + tok.size() || !std::isfinite(v))
                throw ParseError(where + std::to_string(lineno) + ": bad number '" + tok + "'");
            vals.push_back(v);
        }
        if (vals.size() != D + 2)
            throw ParseError(where + std::to_string(lineno) + ": expected " + std::to_string(D + 2) + " fields, found " +
                             std::to_string(vals.size()));
        if (vals[0] < 0 || vals[0] != std::floor(vals[0]))
            throw ParseError(where + std::to_string(lineno) + ": series_id must be a non-negative integer");
        auto& [times, values] = rows[static_cast<std::size_t>(vals[0])];
        if (!times.empty() && !(vals[1] > times.back()))
            throw ParseError(where + std::to_string(lineno) + ": times must be strictly increasing within a series");
        times.push_back(vals[1]);
        values.insert(values.end(), vals.begin() + 2, vals.end());
    }
    Dataset ds;
    ds.dim = D;
    const auto mpath = sidecar(path, ".meta");
    std::size_t count = rows.empty() ? 0 : rows.rbegin()->first + 1;
    if (std::filesystem::exists(mpath)) {
        ds.meta = load_key_values(mpath);
        if (auto it = ds.meta.find("series"); it != ds.meta.end()) count = std::max(count, std::stoul(it->second));
        ds.meta.erase("series");
        ds.meta.erase("dim");
    }
    ds.series.resize(count);
    for (auto& [n, tv] : rows) {
        TimeSeries& s = ds.series[n];
        s.times = std::move(tv.first);
        s.values = Array::matrix(s.times.size(), D, std::move(tv.second));
    }
    for (auto& s : ds.series)
        if (s.times.empty()) s.values = Array({0, D});
    const auto gpath = sidecar(path, ".graph");
    if (std::filesystem::exists(gpath)) {
        ds.truth = load_graph(gpath);
        if (ds.truth->dim() != D) throw ParseError(gpath.string() + ": graph dimension does not match dataset");
    }
    return ds;
}

}  // namespace scotch::data
