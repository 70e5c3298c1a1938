#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "scotch/error.hpp"
#include "scotch/model.hpp"

using namespace scotch;
using ad::Array;
using ad::Tape;
using ad::Var;

TEST_CASE("graph log prior") {
    CHECK(model::graph_log_prior(Graph(3), 500.0) == 0.0);
    Graph g(3);
    g.set_edge(0, 1);
    g.set_edge(1, 2);
    g.set_edge(2, 2);
    CHECK(model::graph_log_prior(g, 500.0) == -1500.0);
    CHECK(model::graph_log_prior(Graph::full(2), 1.0) == -4.0);
    CHECK_THROWS_AS(model::graph_log_prior(g, -1.0), ValidationError);
}

TEST_CASE("empty graph makes the prior independent of the state") {
    nn::ParamStore store;
    const auto prior = oracle::random_prior(store, 3, 1);
    const Graph empty(3);
    const auto a = prior.drift_at(store, empty, std::vector<double>{0.1, 2.0, -1.0});
    const auto b = prior.drift_at(store, empty, std::vector<double>{-3.0, 0.5, 4.0});
    const auto ga = prior.diffusion_at(store, empty, std::vector<double>{0.1, 2.0, -1.0});
    const auto gb = prior.diffusion_at(store, empty, std::vector<double>{-3.0, 0.5, 4.0});
    CHECK(a == b);
    CHECK(ga == gb);
}

TEST_CASE("non-edges have exactly zero sensitivity") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) CHECK(oracle::max_nonedge_sensitivity(4, seed, 30) == 0.0);
}

TEST_CASE("self-loop changes the 1-D output") {
    nn::ParamStore store;
    const auto prior = oracle::random_prior(store, 1, 2);
    Graph loop(1);
    loop.set_edge(0, 0);
    const std::vector<double> z{1.0};
    CHECK(prior.drift_at(store, loop, z)[0] != prior.drift_at(store, Graph(1), z)[0]);
}

TEST_CASE("distinct graphs give distinct Euler transitions") {
    nn::ParamStore store;
    const auto prior = oracle::random_prior(store, 3, 4);
    Rng rng = make_rng(4, "test.ident");
    for (int n = 0; n < 10; ++n) {
        const Graph a = oracle::random_graph(3, rng), b = oracle::random_graph(3, rng);
        if (a == b) continue;
        CHECK(oracle::transitions_differ(prior, store, a, b, rng));
    }
}

TEST_CASE("diffusion is positive and above the floor") {
    nn::ParamStore store;
    const auto prior = oracle::random_prior(store, 3, 5);
    Rng rng = make_rng(5, "test");
    for (int n = 0; n < 50; ++n) {
        std::vector<double> z{uniform(rng, -50, 50), uniform(rng, -50, 50), uniform(rng, -50, 50)};
        for (double g : prior.diffusion_at(store, Graph::full(3), z)) CHECK(g >= 1e-4);
    }
}

TEST_CASE("batched evaluation matches per-graph evaluation") {
    nn::ParamStore store;
    const auto prior = oracle::random_prior(store, 3, 6);
    Rng rng = make_rng(6, "test");
    const Graph g0 = oracle::random_graph(3, rng), g1 = oracle::random_graph(3, rng);
    const Array z = oracle::random_array({2, 3}, rng);
    Array graphs({2, 9});
    for (std::size_t k = 0; k < 9; ++k) {
        graphs.at(0, k) = model::graph_row(g0)[k];
        graphs.at(1, k) = model::graph_row(g1)[k];
    }
    Tape t;
    auto p = store.bind_constants(t);
    const auto terms = prior.evaluate(p, t.constant(graphs), t.constant(z));
    const auto f0 = prior.drift_at(store, g0, std::vector<double>{z.at(0, 0), z.at(0, 1), z.at(0, 2)});
    const auto f1 = prior.drift_at(store, g1, std::vector<double>{z.at(1, 0), z.at(1, 1), z.at(1, 2)});
    for (std::size_t d = 0; d < 3; ++d) {
        CHECK(terms.drift.value().at(0, d) == doctest::Approx(f0[d]).epsilon(1e-13));
        CHECK(terms.drift.value().at(1, d) == doctest::Approx(f1[d]).epsilon(1e-13));
    }
}

TEST_CASE("Laplace log likelihood") {
    const double x1[1] = {0.3}, z1[1] = {0.3};
    CHECK(model::obs_log_likelihood(x1, z1, 0.01) == doctest::Approx(-std::log(0.02)).epsilon(1e-14));
    CHECK(model::obs_log_likelihood(x1, z1, 0.01) == doctest::Approx(3.912).epsilon(1e-3));
    const double x2[2] = {0.0, 1.0}, z2[2] = {0.01, 0.99};
    CHECK(model::obs_log_likelihood(x2, z2, 0.01) == doctest::Approx(2 * (-std::log(0.02) - 1)).epsilon(1e-10));

    // Density integrates to one.
    const double b = 0.3, zc[1] = {0.2};
    double integral = 0.0;
    const double lo = -15.0, hi = 15.0;
    const int n = 600000;
    const double h = (hi - lo) / n;
    for (int i = 0; i <= n; ++i) {
        const double x[1] = {lo + i * h};
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        integral += w * std::exp(model::obs_log_likelihood(x, zc, b)) * h;
    }
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));

    // Joint translation invariance.
    const double xs[2] = {1.0 + 7.5, -2.0 + 7.5}, zs[2] = {0.4 + 7.5, -1.0 + 7.5};
    const double xo[2] = {1.0, -2.0}, zo[2] = {0.4, -1.0};
    CHECK(model::obs_log_likelihood(xs, zs, 0.1) == doctest::Approx(model::obs_log_likelihood(xo, zo, 0.1)));
}

TEST_CASE("tape likelihood honours the mask") {
    Tape t;
    Var x = t.constant(Array::matrix({{0.0, 1.0}, {2.0, 2.0}}));
    Var z = t.constant(Array::matrix({{0.0, 1.0}, {0.0, 0.0}}));
    Var ll = model::obs_log_likelihood(x, z, 0.5, Array::matrix({{1.0}, {0.0}}));
    CHECK(ll.value().at(0, 0) == doctest::Approx(-2 * std::log(1.0)));
    CHECK(ll.value().at(1, 0) == 0.0);
}

TEST_CASE("graph samples") {
    nn::ParamStore store;
    model::GraphPosterior post(store, 1, true, 0.0);
    SUBCASE("logit zero gives edge frequency one half") {
        Rng rng = make_rng(1, "test");
        const Array noise = model::logistic_noise(100000, rng);
        std::size_t edges = 0;
        for (double v : noise.data()) edges += v > 0.0;
        CHECK(static_cast<double>(edges) / 1e5 == doctest::Approx(0.5).epsilon(0.02));
    }
    SUBCASE("saturated logit always samples the edge") {
        store.value(post.param_id())[0] = 50.0;
        Rng rng = make_rng(2, "test");
        for (int n = 0; n < 1000; ++n) {
            Tape t;
            auto p = store.bind(t);
            CHECK(model::sample_graph(post.logits(p), post.mask(), 1.0, rng, true).value()[0] == 1.0);
        }
    }
    SUBCASE("low temperature concentrates relaxed samples at the endpoints") {
        Rng rng = make_rng(3, "test");
        std::size_t near = 0;
        const int draws = 20000;
        for (int n = 0; n < draws; ++n) {
            Tape t;
            auto p = store.bind(t);
            const double v = model::sample_graph(post.logits(p), post.mask(), 0.001, rng, false).value()[0];
            near += (v < 0.01 || v > 0.99);
        }
        CHECK(static_cast<double>(near) / draws > 0.99);
    }
    SUBCASE("disallowed self-loops are never sampled") {
        nn::ParamStore s2;
        model::GraphPosterior noloop(s2, 3, false, 10.0);
        Tape t;
        auto p = s2.bind(t);
        Rng rng = make_rng(4, "test");
        const Array g = model::sample_graph(noloop.logits(p), noloop.mask(), 0.5, rng, true).value();
        for (std::size_t i = 0; i < 3; ++i) CHECK(g[i * 3 + i] == 0.0);
        for (std::size_t i = 0; i < 3; ++i) CHECK(noloop.probabilities(s2).at(i, i) == 0.0);
    }
}

TEST_CASE("graph KL") {
    const Array mask = model::edge_mask(1, true);
    CHECK(model::graph_kl(Array::matrix({{0.5}}), mask, 0.0) == doctest::Approx(-std::log(2.0)));
    CHECK(model::graph_kl(Array::matrix({{1.0}}), mask, 1.0) == 1.0);
    CHECK(model::graph_kl(Array::matrix({{0.0}}), mask, 1.0) == 0.0);

    Rng rng = make_rng(5, "test");
    const auto [mc, se] = oracle::graph_kl_monte_carlo({0.7}, 2.0, 100000, rng);
    CHECK(std::abs(model::graph_kl(Array::matrix({{0.7}}), mask, 2.0) - mc) < 3 * se);

    // Tape form from logits agrees with the probability form.
    const Array logits = Array::matrix({{0.3, -2.0}, {4.0, 0.0}});
    Array probs(logits.shape());
    for (std::size_t k = 0; k < 4; ++k) probs[k] = 1.0 / (1.0 + std::exp(-logits[k]));
    const Array m2 = model::edge_mask(2, false);
    Tape t;
    Var kl = model::graph_kl(t.constant(logits), m2, 3.0);
    probs.at(0, 0) = 0.0;
    probs.at(1, 1) = 0.0;
    CHECK(kl.value().item() == doctest::Approx(model::graph_kl(probs, m2, 3.0)).epsilon(1e-12));
}

TEST_CASE("score-function log probability") {
    Tape t;
    const Array logits = Array::matrix({{0.5, -1.0}, {2.0, 0.0}});
    const Array graphs = Array::matrix({{1, 0, 1, 1}, {0, 0, 0, 0}});
    Var lp = model::graph_log_prob(t.constant(logits), graphs, model::edge_mask(2, true));
    double want = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        const double p = 1.0 / (1.0 + std::exp(-logits[k]));
        want += graphs.at(0, k) ? std::log(p) : std::log(1 - p);
    }
    CHECK(lp.value().at(0, 0) == doctest::Approx(want).epsilon(1e-12));
}
