#include "scotch/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "scotch/error.hpp"

namespace scotch::eval {

namespace {

void check_square(const Array& scores, const Graph& truth, const Array& mask) {
    const std::size_t d = truth.dim();
    if (scores.rows() != d || scores.cols() != d || mask.rows() != d || mask.cols() != d)
        throw DimensionError("scores, truth and mask must all be " + std::to_string(d) + " x " + std::to_string(d));
    if (!scores.all_finite()) throw DomainError("scores must be finite");
}

}  // namespace

Array evaluation_mask(std::size_t dim, bool exclude_diagonal) {
    Array m({dim, dim}, 1.0);
    if (exclude_diagonal)
        for (std::size_t i = 0; i < dim; ++i) m.at(i, i) = 0.0;
    return m;
}

std::size_t evaluable_cells(const Array& mask) {
    return static_cast<std::size_t>(std::count_if(mask.data().begin(), mask.data().end(), [](double v) { return v != 0.0; }));
}

double auroc(std::span<const double> scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) throw DimensionError("auroc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // twice the average rank, kept integral
    std::vector<long long> rank2(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) rank2[order[k]] = static_cast<long long>(i + j + 1);
        i = j;
    }
    long long pos = 0, sum2 = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (labels[i]) {
            ++pos;
            sum2 += rank2[i];
        }
    const long long neg = static_cast<long long>(n) - pos;
    if (pos == 0 || neg == 0) throw MetricError("AUROC is undefined without both edges and non-edges");
    const long long u2 = sum2 - pos * (pos + 1);
    return static_cast<double>(u2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double auroc(const Array& scores, const Graph& truth, const Array& mask) {
    check_square(scores, truth, mask);
    std::vector<double> s;
    std::vector<bool> lab;
    for (std::size_t i = 0; i < truth.dim(); ++i)
        for (std::size_t j = 0; j < truth.dim(); ++j)
            if (mask.at(i, j) != 0.0) {
                s.push_back(scores.at(i, j));
                lab.push_back(truth.edge(i, j));
            }
    return auroc(s, lab);
}

Confusion confusion(const Array& scores, const Graph& truth, const Array& mask, double threshold) {
    check_square(scores, truth, mask);
    Confusion c;
    for (std::size_t i = 0; i < truth.dim(); ++i)
        for (std::size_t j = 0; j < truth.dim(); ++j) {
            if (mask.at(i, j) == 0.0) continue;
            const bool pred = scores.at(i, j) > threshold;
            const bool real = truth.edge(i, j);
            if (pred && real) ++c.tp;
            else if (pred) ++c.fp;
            else if (real) ++c.fn;
            else ++c.tn;
        }
    return c;
}

ThresholdMetrics threshold_metrics(const Confusion& c) {
    auto ratio = [](double a, double b) { return b > 0.0 ? a / b : 0.0; };
    const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
    return {ratio(2 * tp, 2 * tp + fp + fn), ratio(tp, tp + fn), ratio(fp, fp + tp)};
}

ThresholdMetrics f1_tpr_fdr(const Array& scores, const Graph& truth, const Array& mask, double threshold) {
    return threshold_metrics(confusion(scores, truth, mask, threshold));
}

std::string format_report(const Report& report) {
    std::string out;
    char buf[64];
    for (const auto& [k, v] : report) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out += k + " = " + buf + "\n";
    }
    return out;
}

void write_report(const std::filesystem::path& path, const Report& report) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << format_report(report);
}

Report parse_report(const std::string& text) {
    Report r;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) throw ParseError("report line " + std::to_string(lineno) + ": expected key = value");
        const std::string val = line.substr(eq + 3);
        char* end = nullptr;
        const double v = std::strtod(val.c_str(), &end);
        if (end == val.c_str()) throw ParseError("report line " + std::to_string(lineno) + ": bad value");
        r[line.substr(0, eq)] = v;
    }
    return r;
}

}  // namespace scotch::eval
