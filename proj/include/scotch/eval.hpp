#pragma once

// Structure-recovery metrics on D x D score matrices.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "scotch/diffcore.hpp"
#include "scotch/graph.hpp"

namespace scotch::eval {

using ad::Array;

// Evaluable cells; all cells, or all but the diagonal.
Array evaluation_mask(std::size_t dim, bool exclude_diagonal);
std::size_t evaluable_cells(const Array& mask);

// Mann-Whitney AUROC: probability that a random true edge outscores a random
// non-edge, ties counted one half. Throws MetricError without both classes.
double auroc(const Array& scores, const Graph& truth, const Array& mask);
double auroc(std::span<const double> scores, const std::vector<bool>& labels);

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct ThresholdMetrics {
    double f1 = 0.0;
    double tpr = 0.0;
    double fdr = 0.0;
};

// Predicted edge iff score > threshold.
Confusion confusion(const Array& scores, const Graph& truth, const Array& mask, double threshold = 0.5);
// F1 = 2TP / (2TP + FP + FN), TPR = TP / (TP + FN), FDR = FP / (FP + TP);
// each is 0 when its denominator is.
ThresholdMetrics threshold_metrics(const Confusion& c);
ThresholdMetrics f1_tpr_fdr(const Array& scores, const Graph& truth, const Array& mask, double threshold = 0.5);

using Report = std::map<std::string, double>;

// "key = value" lines, values at full precision.
void write_report(const std::filesystem::path& path, const Report& report);
std::string format_report(const Report& report);
Report parse_report(const std::string& text);

}  // namespace scotch::eval
