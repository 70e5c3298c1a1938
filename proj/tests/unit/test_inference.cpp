#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <memory>
#include <numeric>

#include "../support/oracles.hpp"
#include "scotch/error.hpp"
#include "scotch/inference.hpp"

using namespace scotch;
using ad::Array;
using ad::Tape;
using infer::ScotchModel;
using infer::TrainConfig;

namespace {

std::vector<std::size_t> all_series(const data::Dataset& ds) {
    std::vector<std::size_t> idx(ds.series.size());
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

// Terms stay valid while their tape lives.
struct Evaluation {
    std::unique_ptr<Tape> tape = std::make_unique<Tape>();
    infer::ElboTerms terms;
};

Evaluation evaluate(const ScotchModel& m, const infer::GridBatch& batch, const infer::ElboNoise& noise,
                    const infer::ElboOptions& opts) {
    Evaluation e;
    const auto p = m.params.bind_constants(*e.tape);
    e.terms = infer::elbo(*e.tape, p, m, batch, noise, opts);
    return e;
}

double elbo_value(const ScotchModel& m, const infer::GridBatch& batch, const infer::ElboNoise& noise,
                  const infer::ElboOptions& opts) {
    return evaluate(m, batch, noise, opts).terms.elbo.value().item();
}

void set_param(ScotchModel& m, const std::string& name, double v) {
    const auto id = m.params.find(name);
    REQUIRE(id.has_value());
    for (double& x : m.params.value(*id).data()) x = v;
}

data::Dataset single_series(std::vector<double> times, std::vector<double> values, std::size_t dim = 1) {
    data::Dataset ds;
    ds.dim = dim;
    data::TimeSeries s;
    s.times = std::move(times);
    s.values = Array({s.times.size(), dim}, std::move(values));
    ds.series.push_back(std::move(s));
    return ds;
}

// Trapezoid rule over [lo, hi] with n intervals.
template <class F>
double trapezoid(F f, double lo, double hi, int n) {
    const double h = (hi - lo) / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) acc += (i == 0 || i == n ? 0.5 : 1.0) * f(lo + i * h);
    return acc * h;
}

double normal_pdf(double x, double mean, double sd) {
    const double u = (x - mean) / sd;
    return std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * M_PI));
}

double laplace_pdf(double x, double z, double b) { return std::exp(-std::abs(x - z) / b) / (2.0 * b); }

}  // namespace

TEST_CASE("u term") {
    Tape t;
    const auto u = infer::u_term(t.constant(Array::scalar(5.0)), t.constant(Array::scalar(1.0)),
                                 t.constant(Array::scalar(2.0)));
    CHECK(u.value().item() == 2.0);
}

TEST_CASE("grid batch places observations, gaps and masks") {
    const auto ds = single_series({0.0, 2.0, 3.0}, {0.5, -1.0, 2.0});
    const std::vector<std::size_t> idx{0};
    const auto b = infer::make_grid_batch(ds, idx, 1.0, 3.0);
    CHECK(b.steps == 3);
    const double observed[4] = {1, 0, 1, 1}, gaps[4] = {2, 0, 1, 0}, values[4] = {0.5, 0, -1.0, 2.0};
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(b.observed[k][0] == observed[k]);
        CHECK(b.gaps[k][0] == gaps[k]);
        CHECK(b.values[k][0] == values[k]);
        CHECK(b.any_observed[k] == (observed[k] == 1.0));
    }
    CHECK_THROWS_AS(infer::make_grid_batch(ds, idx, 0.7, 3.0), ValidationError);
}

TEST_CASE("config validation and temperature schedule") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.grid_steps() == 100);
    CHECK(c.temperature(0) == doctest::Approx(c.tau_start));
    CHECK(c.temperature(c.epochs - 1) == doctest::Approx(c.tau_end));
    CHECK(c.temperature(700) < c.temperature(600));
    auto bad = c;
    bad.step = 0.3;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = c;
    bad.lr = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = c;
    bad.laplace_scale = -1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = c;
    bad.sparsity = -1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("ELBO decomposes into likelihood, path KL and graph KL") {
    const auto ds = oracle::tiny_dataset(1);
    ScotchModel m(2, oracle::tiny_config());
    const auto idx = all_series(ds);
    const auto batch = infer::make_grid_batch(ds, idx, 1.0, 3.0);
    const auto noise = infer::draw_elbo_noise(batch, 0, 0);
    infer::ElboOptions opts;
    opts.scale = 3.0;
    const auto ev = evaluate(m, batch, noise, opts);
    const auto& terms = ev.terms;
    const double e = terms.elbo.value().item();
    double want = 0.0;
    for (std::size_t s = 0; s < 2; ++s) {
        CHECK(terms.path_kl.value()[s] >= 0.0);
        want += terms.likelihood.value()[s] - terms.path_kl.value()[s];
    }
    CHECK(e == doctest::Approx(3.0 * want - terms.graph_kl.value().item()).epsilon(1e-13));
    // Hard graph samples are binary.
    for (double v : terms.graphs.value().data()) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("series without observations contribute only their path KL") {
    auto ds = oracle::tiny_dataset(2);
    ds.series[1].times.clear();
    ds.series[1].values = Array({0, 2});
    ScotchModel m(2, oracle::tiny_config());
    const auto idx = all_series(ds);
    const auto batch = infer::make_grid_batch(ds, idx, 1.0, 3.0);
    const auto ev = evaluate(m, batch, infer::draw_elbo_noise(batch, 0, 0), {});
    CHECK(ev.terms.likelihood.value()[1] == 0.0);
    CHECK(ev.terms.likelihood.value()[0] != 0.0);

    const std::vector<std::size_t> only_empty{1};
    const auto eb = infer::make_grid_batch(ds, only_empty, 1.0, 3.0);
    const auto single = evaluate(m, eb, infer::draw_elbo_noise(eb, 0, 0), {});
    const auto& terms = single.terms;
    CHECK(terms.elbo.value().item() ==
          doctest::Approx(-terms.path_kl.value().item() - terms.graph_kl.value().item()).epsilon(1e-14));
}

TEST_CASE("ELBO gradient matches finite differences") {
    for (std::uint64_t seed : {0u, 1u}) {
        const auto r = oracle::elbo_grad_check(seed);
        CHECK(r.max_rel_error < 1e-3);
    }
}

TEST_CASE("ELBO is invariant to the order of series in the batch") {
    const auto ds = oracle::tiny_dataset(3);
    ScotchModel m(2, oracle::tiny_config());
    const std::vector<std::size_t> fwd{0, 1}, rev{1, 0};
    const auto bf = infer::make_grid_batch(ds, fwd, 1.0, 3.0), br = infer::make_grid_batch(ds, rev, 1.0, 3.0);
    for (long epoch = 0; epoch < 5; ++epoch) {
        const double a = elbo_value(m, bf, infer::draw_elbo_noise(bf, 4, epoch), {});
        const double b = elbo_value(m, br, infer::draw_elbo_noise(br, 4, epoch), {});
        CHECK(std::abs(a - b) < 1e-10);
    }
}

TEST_CASE("ELBO lower-bounds the brute-force evidence") {
    // D = 1, two Euler steps, a deterministic initial state; the evidence sums
    // the two graphs and integrates z1, z2 numerically.
    TrainConfig cfg = oracle::tiny_config();
    cfg.t_end = 2.0;
    cfg.laplace_scale = 0.5;
    cfg.sparsity = 1.5;
    cfg.seed = 3;
    ScotchModel m(1, cfg);
    const double z0 = 0.25, b = cfg.laplace_scale;
    set_param(m, "posterior.init_mean.weight", 0.0);
    set_param(m, "posterior.init_mean.bias", z0);
    set_param(m, "posterior.init_logvar.weight", 0.0);
    set_param(m, "posterior.init_logvar.bias", -60.0);
    set_param(m, "graph.logits", 0.4);
    const auto ds = single_series({0.0, 1.0, 2.0}, {0.3, -0.2, 0.6});
    const double x[3] = {0.3, -0.2, 0.6};

    double evidence = 0.0;
    for (const bool loop : {false, true}) {
        Graph g(1);
        if (loop) g.set_edge(0, 0);
        const double z0v[1] = {z0};
        const double m1 = z0 + m.drift_at(g, z0v)[0], s1 = m.diffusion_at(g, z0v)[0];
        const auto inner = [&](double z1) {
            const double zz[1] = {z1};
            const double m2 = z1 + m.drift_at(g, zz)[0], s2 = m.diffusion_at(g, zz)[0];
            const double last =
                trapezoid([&](double z2) { return normal_pdf(z2, m2, s2) * laplace_pdf(x[2], z2, b); }, m2 - 12 * s2,
                          m2 + 12 * s2, 2000);
            return normal_pdf(z1, m1, s1) * laplace_pdf(x[1], z1, b) * last;
        };
        const double p = laplace_pdf(x[0], z0, b) * trapezoid(inner, m1 - 12 * s1, m1 + 12 * s1, 3000);
        evidence += std::exp(-cfg.sparsity * (loop ? 1.0 : 0.0)) * p;
    }
    const double log_evidence = std::log(evidence);

    const std::vector<std::size_t> idx{0};
    const auto batch = infer::make_grid_batch(ds, idx, 1.0, 2.0);
    std::vector<double> draws;
    for (long e = 0; e < 10000; ++e) draws.push_back(elbo_value(m, batch, infer::draw_elbo_noise(batch, 7, e), {}));
    const auto mom = oracle::sample_moments(draws);
    MESSAGE("mean ELBO " << mom.mean << " +- " << mom.se_mean << ", log evidence " << log_evidence);
    CHECK(std::isfinite(log_evidence));
    CHECK(mom.mean <= log_evidence + 3 * mom.se_mean);
}

TEST_CASE("posterior context depends only on later observations") {
    ScotchModel m(2, oracle::tiny_config());
    const auto ds = oracle::tiny_dataset(5);
    const auto& s = ds.series[0];
    const Graph full = Graph::full(2), empty(2);
    const Array base = m.posterior.context_at(m.params, full, s, 1.5);

    auto earlier = s;
    earlier.values.at(0, 0) += 3.0;
    earlier.values.at(1, 1) -= 2.0;
    CHECK(m.posterior.context_at(m.params, full, earlier, 1.5) == base);
    auto later = s;
    later.values.at(3, 0) += 1.0;
    CHECK(m.posterior.context_at(m.params, full, later, 1.5) != base);

    data::TimeSeries none;
    none.values = Array({0, 2});
    CHECK(m.posterior.context_at(m.params, full, s, 3.0) == m.posterior.context_at(m.params, full, none, 0.0));
    CHECK(m.posterior.context_at(m.params, empty, s, 1.5) != base);
}

TEST_CASE("a huge sparsity coefficient drives every edge probability down") {
    auto cfg = oracle::tiny_config();
    cfg.sparsity = 1e6;
    cfg.lr = 0.1;
    cfg.warmup_epochs = 1;
    cfg.epochs = 40;
    const auto ds = oracle::tiny_dataset(6);
    ScotchModel m(2, cfg);
    infer::Trainer tr(m, ds);
    tr.run();
    for (double v : m.edge_probabilities().data()) CHECK(v < 0.1);
}

TEST_CASE("training is bitwise reproducible and history tracks AUROC only with a truth graph") {
    auto cfg = oracle::tiny_config();
    cfg.epochs = 6;
    cfg.warmup_epochs = 2;
    cfg.lr = 0.01;
    cfg.snapshot_every = 2;
    auto ds = oracle::tiny_dataset(7);
    ScotchModel a(2, cfg), b(2, cfg);
    infer::Trainer ta(a, ds), tb(b, ds);
    ta.run();
    tb.run();
    REQUIRE(ta.history().size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(ta.history()[i].elbo == tb.history()[i].elbo);
        CHECK(!ta.history()[i].auroc.has_value());
    }
    for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(a.params.value(i) == b.params.value(i));
    CHECK(ta.snapshots().size() == 3);

    Graph truth(2);
    truth.set_edge(0, 1);
    ds.truth = truth;
    ScotchModel c(2, cfg);
    infer::Trainer tc(c, ds);
    tc.run();
    for (const auto& row : tc.history()) CHECK(row.auroc.has_value());
}

TEST_CASE("trainer rejects mismatched data") {
    auto cfg = oracle::tiny_config();
    const auto ds = oracle::tiny_dataset(8);
    ScotchModel wrong_dim(3, cfg);
    CHECK_THROWS_AS(infer::Trainer(wrong_dim, ds), DimensionError);
    cfg.t_end = 2.0;
    ScotchModel short_range(2, cfg);
    CHECK_THROWS_AS(infer::Trainer(short_range, ds), ValidationError);
}

TEST_CASE("checkpoint resume reproduces the next epoch") {
    auto cfg = oracle::tiny_config();
    cfg.epochs = 5;
    cfg.warmup_epochs = 2;
    cfg.lr = 0.01;
    const auto ds = oracle::tiny_dataset(9);
    const auto path = std::filesystem::temp_directory_path() / "scotch_test_resume.txt";

    ScotchModel m(2, cfg);
    infer::Trainer tr(m, ds);
    for (int k = 0; k < 3; ++k) tr.step();
    tr.save_checkpoint(path);
    const double next = tr.step();
    const double after = tr.step();

    ScotchModel fresh(2, cfg);
    infer::Trainer resumed(fresh, ds);
    resumed.load_checkpoint(path);
    CHECK(resumed.epoch() == 3);
    CHECK(std::abs(resumed.step() - next) < 1e-10);
    CHECK(std::abs(resumed.step() - after) < 1e-10);

    const ScotchModel loaded = infer::load_model(path);
    CHECK(loaded.dim == 2);
    CHECK(loaded.config.laplace_scale == cfg.laplace_scale);
    CHECK(loaded.config.embed_dim == cfg.embed_dim);
    std::filesystem::remove(path);
}

TEST_CASE("ODE-mean baseline") {
    SUBCASE("bimodal data gives a near-zero drift") {
        infer::OdeConfig oc;
        oc.epochs = 400;
        const auto f = infer::ode_mean_fit(data::gen_bimodal({}), oc);
        const double zero[1] = {0.0}, one[1] = {1.0};
        CHECK(std::abs(f.drift_at(zero)[0]) < 0.1);
        CHECK(std::abs(f.drift_at(one)[0]) < 0.3);
    }
    SUBCASE("exponential decay gives a negative drift at one") {
        data::Dataset ds;
        ds.dim = 1;
        for (double x0 : {0.5, 1.0, 1.5, 2.0}) {
            data::TimeSeries s;
            for (int k = 0; k <= 20; ++k) s.times.push_back(0.1 * k);
            s.values = Array({21, 1});
            for (int k = 0; k <= 20; ++k) s.values[k] = x0 * std::exp(-0.1 * k);
            ds.series.push_back(std::move(s));
        }
        infer::OdeConfig oc;
        oc.epochs = 400;
        const auto f = infer::ode_mean_fit(ds, oc);
        const double one[1] = {1.0};
        CHECK(f.drift_at(one)[0] < 0.0);
        CHECK(f.drift_at(one)[0] == doctest::Approx(-1.0).epsilon(0.3));
    }
    SUBCASE("constant data gives a zero drift") {
        data::Dataset ds;
        ds.dim = 2;
        for (double c : {-1.0, 0.5, 1.0}) {
            data::TimeSeries s;
            for (int k = 0; k <= 10; ++k) s.times.push_back(0.1 * k);
            s.values = Array({11, 2}, c);
            ds.series.push_back(std::move(s));
        }
        infer::OdeConfig oc;
        oc.epochs = 400;
        const auto f = infer::ode_mean_fit(ds, oc);
        for (double c : {-1.0, 0.5, 1.0}) {
            const double z[2] = {c, c};
            for (double v : f.drift_at(z)) CHECK(std::abs(v) < 0.05);
        }
        CHECK(f.graph_scores().rows() == 2);
    }
}
