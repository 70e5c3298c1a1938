#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "scotch/error.hpp"
#include "scotch/eval.hpp"

using namespace scotch;
using ad::Array;

namespace {

std::pair<std::vector<double>, std::vector<bool>> flatten(const Array& scores, const Graph& truth, const Array& mask) {
    std::vector<double> s;
    std::vector<bool> l;
    for (std::size_t i = 0; i < truth.dim(); ++i)
        for (std::size_t j = 0; j < truth.dim(); ++j)
            if (mask.at(i, j) != 0.0) {
                s.push_back(scores.at(i, j));
                l.push_back(truth.edge(i, j));
            }
    return {s, l};
}

}  // namespace

TEST_CASE("AUROC edge cases") {
    const Graph truth = [] {
        Graph g(3);
        g.set_edge(0, 1);
        g.set_edge(2, 0);
        return g;
    }();
    const Array mask = eval::evaluation_mask(3, false);
    CHECK(eval::auroc(truth.to_array(), truth, mask) == 1.0);
    CHECK(eval::auroc(Array({3, 3}, 0.4), truth, mask) == 0.5);
    CHECK_THROWS_AS(eval::auroc(Array({3, 3}, 0.4), Graph(3), mask), MetricError);
    CHECK_THROWS_AS(eval::auroc(Array({3, 3}, 0.4), Graph::full(3), mask), MetricError);
}

TEST_CASE("AUROC equals brute-force pair counting with ties") {
    Rng rng = make_rng(1, "test.auroc");
    int checked = 0;
    for (int n = 0; n < 100; ++n) {
        const Graph truth = oracle::random_graph(5, rng, 0.3);
        Array scores({5, 5});
        // Coarse scores force ties.
        for (double& v : scores.data()) v = std::floor(uniform(rng, 0.0, 1.0) * 6.0) / 5.0;
        const bool exclude = n % 2 == 0;
        const Array mask = eval::evaluation_mask(5, exclude);
        const auto [s, l] = flatten(scores, truth, mask);
        const bool both = std::count(l.begin(), l.end(), true) > 0 && std::count(l.begin(), l.end(), false) > 0;
        if (!both) continue;
        CHECK(std::abs(eval::auroc(scores, truth, mask) - oracle::brute_auroc(s, l)) < 1e-12);
        ++checked;
    }
    CHECK(checked > 90);
}

TEST_CASE("AUROC invariances") {
    Rng rng = make_rng(2, "test.auroc");
    const Graph truth = oracle::random_graph(4, rng, 0.4);
    const Array mask = eval::evaluation_mask(4, false);
    const Array scores = oracle::random_array({4, 4}, rng, 0.0, 1.0);
    Array transformed = scores, flipped = scores;
    for (double& v : transformed.data()) v = std::exp(3 * v) - 7;
    for (double& v : flipped.data()) v = 1 - v;
    const double a = eval::auroc(scores, truth, mask);
    CHECK(eval::auroc(transformed, truth, mask) == a);
    CHECK(eval::auroc(flipped, truth, mask) + a == doctest::Approx(1.0).epsilon(1e-14));

    // Masked cells do not matter.
    const Array m2 = eval::evaluation_mask(4, true);
    Array perturbed = scores;
    for (std::size_t i = 0; i < 4; ++i) perturbed.at(i, i) = 100.0 + i;
    CHECK(eval::auroc(perturbed, truth, m2) == eval::auroc(scores, truth, m2));
    const auto c1 = eval::confusion(perturbed, truth, m2), c2 = eval::confusion(scores, truth, m2);
    CHECK(c1.tp == c2.tp);
    CHECK(c1.fp == c2.fp);
}

TEST_CASE("threshold metrics") {
    Graph truth(3);
    truth.set_edge(0, 1);
    truth.set_edge(1, 2);
    const Array mask = eval::evaluation_mask(3, false);
    SUBCASE("perfect prediction") {
        const auto m = eval::f1_tpr_fdr(truth.to_array(), truth, mask);
        CHECK(m.f1 == 1.0);
        CHECK(m.tpr == 1.0);
        CHECK(m.fdr == 0.0);
    }
    SUBCASE("empty prediction") {
        const auto m = eval::f1_tpr_fdr(Array({3, 3}, 0.0), truth, mask);
        CHECK(m.f1 == 0.0);
        CHECK(m.tpr == 0.0);
        CHECK(m.fdr == 0.0);
    }
    SUBCASE("one TP, one FP, one FN") {
        Array s({3, 3}, 0.1);
        s.at(0, 1) = 0.9;
        s.at(2, 0) = 0.8;
        const auto c = eval::confusion(s, truth, mask);
        CHECK(c.tp == 1);
        CHECK(c.fp == 1);
        CHECK(c.fn == 1);
        CHECK(c.tn == 6);
        const auto m = eval::threshold_metrics(c);
        CHECK(m.f1 == 0.5);
        CHECK(m.tpr == 0.5);
        CHECK(m.fdr == 0.5);
    }
    SUBCASE("threshold is strict") {
        Array s({3, 3}, 0.0);
        s.at(0, 1) = 0.5;
        CHECK(eval::confusion(s, truth, mask, 0.5).tp == 0);
        CHECK(eval::confusion(s, truth, mask, 0.4).tp == 1);
    }
}

TEST_CASE("excluding the diagonal removes D cells") {
    for (std::size_t d : {1u, 3u, 10u})
        CHECK(eval::evaluable_cells(eval::evaluation_mask(d, false)) - eval::evaluable_cells(eval::evaluation_mask(d, true)) == d);
}

TEST_CASE("report format round trips") {
    eval::Report r{{"auroc", 0.72790000000000001}, {"f1", 1.0 / 3.0}, {"tp", 4.0}};
    const std::string text = eval::format_report(r);
    CHECK(text == "auroc = 0.72789999999999999\nf1 = 0.33333333333333331\ntp = 4\n");
    CHECK(eval::parse_report(text) == r);
    CHECK_THROWS_AS(eval::parse_report("auroc 0.5\n"), ParseError);
}
