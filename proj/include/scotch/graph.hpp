#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scotch/diffcore.hpp"

namespace scotch {

// Directed dependency graph over D nodes. Entry (i, j) set means i -> j:
// the drift or diffusion of coordinate j reads coordinate i. Cycles and
// self-loops are allowed unless allow_self_loops is off.
class Graph {
public:
    Graph() = default;
    explicit Graph(std::size_t dim, bool allow_self_loops = true);

    static Graph empty(std::size_t dim, bool allow_self_loops = true) { return Graph(dim, allow_self_loops); }
    static Graph full(std::size_t dim, bool allow_self_loops = true);
    // Threshold a D x D score matrix (entries > threshold become edges).
    static Graph from_scores(const ad::Array& scores, double threshold = 0.5, bool allow_self_loops = true);

    std::size_t dim() const noexcept { return dim_; }
    bool allow_self_loops() const noexcept { return allow_self_loops_; }
    bool edge(std::size_t from, std::size_t to) const { return adj_.at(from * dim_ + to) != 0; }
    void set_edge(std::size_t from, std::size_t to, bool on = true);
    std::size_t edge_count() const;
    std::vector<std::size_t> parents(std::size_t node) const;

    // D x D array of 0/1 entries, row = source.
    ad::Array to_array() const;

    friend bool operator==(const Graph&, const Graph&) = default;

private:
    std::size_t dim_ = 0;
    bool allow_self_loops_ = true;
    std::vector<std::uint8_t> adj_;
};

// Plain-text D x D matrix with a comment header naming the convention.
void save_matrix(const std::filesystem::path& path, const ad::Array& m, const std::string& header);
ad::Array load_matrix(const std::filesystem::path& path);

void save_graph(const std::filesystem::path& path, const Graph& g);
Graph load_graph(const std::filesystem::path& path);

inline constexpr const char* kEdgeConvention = "row = source node i, column = target node j, entry for edge i -> j";

}  // namespace scotch
