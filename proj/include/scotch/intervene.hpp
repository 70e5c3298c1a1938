#pragma once

// State-space interventions: an idempotent map applied to the state after
// every solver step inside an active window.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scotch/rng.hpp"
#include "scotch/sde.hpp"

namespace scotch::intervene {

using sde::Vec;

enum class Kind { identity, ordered, projection, custom };

const char* kind_name(Kind k);

// z_target <- coef * z_source + offset, or offset alone without a source.
struct Assignment {
    std::size_t target = 0;
    std::optional<std::size_t> source;
    double coef = 1.0;
    double offset = 0.0;
};

struct Window {
    double begin = -std::numeric_limits<double>::infinity();
    double end = std::numeric_limits<double>::infinity();

    bool contains(double t) const { return t >= begin && t <= end; }
};

class Intervention {
public:
    using Map = std::function<Vec(double t, std::span<const double> z)>;

    // Checks idempotence, |i(t, i(t, z)) - i(t, z)| < 1e-9, on 1000 random
    // probes inside the window; throws InterventionError otherwise.
    Intervention(Kind kind, std::size_t dim, Map map, Window window = {});

    static Intervention identity(std::size_t dim, Window window = {});
    // Assignments run in the given order, each reading the already updated state.
    static Intervention ordered(std::size_t dim, std::vector<Assignment> assignments, Window window = {});
    static Intervention pin(std::size_t dim, const std::vector<std::size_t>& dims, const std::vector<double>& values,
                            Window window = {});
    // Radial projection onto the closed ball |z - center| <= radius.
    static Intervention projection(std::size_t dim, double radius, std::vector<double> center = {},
                                   Window window = {});

    // this first, then next, each inside its own window.
    Intervention then(const Intervention& next) const;

    Vec apply(double t, std::span<const double> z) const;
    bool active(double t) const { return window_.contains(t); }
    Kind kind() const noexcept { return kind_; }
    std::size_t dim() const noexcept { return dim_; }
    const Window& window() const noexcept { return window_; }

    static constexpr std::size_t kProbes = 1000;
    static constexpr double kTolerance = 1e-9;

private:
    Vec raw(double t, std::span<const double> z) const;

    Kind kind_;
    std::size_t dim_;
    Map map_;
    Window window_;
};

// Euler-Maruyama with z <- i(t, z) after every step that lands inside the
// window. The Brownian increments are drawn exactly as em_solve draws them,
// so the identity intervention reproduces em_solve bitwise for the same rng.
sde::Trajectory simulate_intervened(const sde::SdeSpec& spec, const Intervention& iv, std::span<const double> z0,
                                    Rng& rng);
sde::Trajectory replay_intervened(const sde::SdeSpec& spec, const Intervention& iv, std::span<const double> z0,
                                  const sde::Array& increments);

// Drift replaced by replacement on dims while t is inside the window.
sde::SdeSpec drift_intervention(const sde::SdeSpec& spec, const std::vector<std::size_t>& dims,
                                sde::VecFn replacement, Window window = {});

// Key-value file:
//   kind = identity | pin | ordered | projection
//   window = <begin> <end>           (optional)
//   dims = 0 2 / values = 0 1.5      (pin)
//   order = 2 0 / assign.<d> = ...   (ordered; "1.5", "z3", "z3 + 1", "0.5*z3 - 2")
//   radius = 1 / center = 0 0        (projection)
Intervention load_intervention(const std::filesystem::path& path, std::size_t dim);
Assignment parse_assignment(std::size_t target, const std::string& expr, std::size_t dim);

}  // namespace scotch::intervene
