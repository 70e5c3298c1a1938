#pragma once

// Synthetic SDE datasets with known signature graphs, missing-data
// corruption, standardization and the on-disk dataset format.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scotch/diffcore.hpp"
#include "scotch/graph.hpp"
#include "scotch/sde.hpp"

namespace scotch::data {

using ad::Array;

struct TimeSeries {
    std::vector<double> times;  // strictly increasing
    Array values;               // len(times) x D

    std::size_t size() const noexcept { return times.size(); }
};

struct Dataset {
    std::size_t dim = 0;
    std::vector<TimeSeries> series;
    std::optional<Graph> truth;
    std::map<std::string, std::string> meta;

    // Throws ValidationError on inconsistent D, unsorted times or a non-square
    // ground truth.
    void validate() const;
    std::size_t observation_count() const;
    double last_time() const;
};

struct Lorenz96Params {
    std::size_t series = 100;
    std::size_t dim = 10;
    std::size_t length = 100;
    double forcing = 10.0;
    double sigma = 0.5;
    double sim_dt = 0.005;
    double obs_interval = 1.0;
    std::uint64_t seed = 0;
};

struct GlycolysisParams {
    std::size_t series = 100;
    std::size_t length = 100;
    double sigma = 0.01;
    double sim_dt = 0.005;
    double obs_interval = 1.0;
    std::uint64_t seed = 0;
};

struct BimodalParams {
    std::size_t series = 50;
    std::size_t length = 50;
    double obs_interval = 0.1;
    double sigma = 0.01;
    double sim_dt = 0.005;
    std::uint64_t seed = 0;
};

// Each generator's SDE on [0, t_end] at step sim_dt.
sde::SdeSpec lorenz96_spec(std::size_t dim, double forcing, double sigma, double sim_dt, double t_end);
sde::SdeSpec glycolysis_spec(double sigma, double sim_dt, double t_end);
sde::SdeSpec bimodal_spec(double sigma, double sim_dt, double t_end);

// Parents of d are {d-2, d-1, d, d+1} mod D.
Graph lorenz96_truth(std::size_t dim);
Graph glycolysis_truth();

Dataset gen_lorenz96(const Lorenz96Params& params);
Dataset gen_glycolysis(const GlycolysisParams& params);
Dataset gen_bimodal(const BimodalParams& params);

// Simulates spec from z0 and records every round(obs_interval / sim_dt)
// steps, length samples in total starting at t = 0.
TimeSeries simulate_series(const sde::SdeSpec& spec, const std::vector<double>& z0, std::size_t length,
                           double obs_interval, Rng& rng);

// Removes each observation independently with probability p.
Dataset drop_observations(const Dataset& dataset, double p, std::uint64_t seed);
std::size_t empty_series_count(const Dataset& dataset);

struct Normalization {
    std::vector<double> mean;
    std::vector<double> stddev;
};

// Pooled per-dimension z-score (population standard deviation).
Normalization fit_normalization(const Dataset& dataset);
Dataset normalize(const Dataset& dataset, const Normalization& norm);
Dataset denormalize(const Dataset& dataset, const Normalization& norm);

// <path> holds rows "series_id,time,x_0,...,x_{D-1}" after a header line;
// <stem>.graph holds the ground truth (when known) and <stem>.meta the
// key = value metadata including the series count, so empty series survive.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

std::filesystem::path sidecar(const std::filesystem::path& path, const std::string& ext);

using KeyValues = std::map<std::string, std::string>;
void save_key_values(const std::filesystem::path& path, const KeyValues& kv);
KeyValues load_key_values(const std::filesystem::path& path);

}  // namespace scotch::data
