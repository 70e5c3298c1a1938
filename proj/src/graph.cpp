#include "scotch/graph.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "scotch/error.hpp"

namespace scotch {

Graph::Graph(std::size_t dim, bool allow_self_loops)
    : dim_(dim), allow_self_loops_(allow_self_loops), adj_(dim * dim, 0) {}

Graph Graph::full(std::size_t dim, bool allow_self_loops) {
    Graph g(dim, allow_self_loops);
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j)
            if (allow_self_loops || i != j) g.set_edge(i, j);
    return g;
}

Graph Graph::from_scores(const ad::Array& scores, double threshold, bool allow_self_loops) {
    const std::size_t d = scores.rows();
    if (scores.cols() != d) throw DimensionError("graph scores must be square");
    Graph g(d, allow_self_loops);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            if ((allow_self_loops || i != j) && scores.at(i, j) > threshold) g.set_edge(i, j);
    return g;
}

void Graph::set_edge(std::size_t from, std::size_t to, bool on) {
    if (from >= dim_ || to >= dim_) throw DimensionError("edge index out of range");
    if (on && from == to && !allow_self_loops_) throw ValidationError("self-loops are disabled for this graph");
    adj_[from * dim_ + to] = on ? 1 : 0;
}

std::size_t Graph::edge_count() const {
    std::size_t n = 0;
    for (auto v : adj_) n += v;
    return n;
}

std::vector<std::size_t> Graph::parents(std::size_t node) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < dim_; ++i)
        if (edge(i, node)) out.push_back(i);
    return out;
}

ad::Array Graph::to_array() const {
    ad::Array a({dim_, dim_});
    for (std::size_t k = 0; k < adj_.size(); ++k) a[k] = adj_[k];
    return a;
}

void save_matrix(const std::filesystem::path& path, const ad::Array& m, const std::string& header) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "# " << header << '\n';
    out << std::setprecision(17);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m.at(i, j);
        out << '\n';
    }
}

ad::Array load_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open matrix file " + path.string());
    std::vector<double> data;
    std::size_t cols = 0, rows = 0, lineno = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        std::string tok;
        std::size_t n = 0;
        while (ls >> tok) {
            char* end = nullptr;
            const double v = std::strtod(tok.c_str(), &end);
            if (end != tok.c_str() + tok.size())
                throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
            data.push_back(v);
            ++n;
        }
        if (rows == 0) cols = n;
        if (n != cols)
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                             " columns, found " + std::to_string(n));
        ++rows;
    }
    if (rows == 0) throw ParseError(path.string() + ": empty matrix");
    return ad::Array::matrix(rows, cols, std::move(data));
}

void save_graph(const std::filesystem::path& path, const Graph& g) {
    save_matrix(path, g.to_array(), std::string("adjacency; ") + kEdgeConvention);
}

Graph load_graph(const std::filesystem::path& path) {
    const ad::Array m = load_matrix(path);
    if (m.rows() != m.cols()) throw ParseError(path.string() + ": adjacency must be square");
    Graph g(m.rows(), true);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const double v = m.at(i, j);
            if (v != 0.0 && v != 1.0) throw ParseError(path.string() + ": adjacency entries must be 0 or 1");
            if (v == 1.0) g.set_edge(i, j);
        }
    return g;
}

}  // namespace scotch
