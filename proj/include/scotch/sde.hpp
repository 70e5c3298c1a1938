#pragma once

// Euler-Maruyama integration for diagonal-diffusion SDEs
//
//   z[k+1] = z[k] + f(z[k], t[k]) * dt + g(z[k], t[k]) * eta[k],  eta[k] ~ N(0, dt I)
//
// Two flavours share the recursion: a plain double version used by the data
// generators, oracles and intervention simulator, and a tape version whose
// states are differentiable with respect to everything the drift and diffusion
// read (the pathwise estimator: the noise is drawn up front and held fixed).

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "scotch/diffcore.hpp"
#include "scotch/rng.hpp"

namespace scotch::sde {

using ad::Array;
using Vec = std::vector<double>;
using VecFn = std::function<Vec(std::span<const double> z, double t)>;

struct SdeSpec {
    std::size_t dim = 0;
    VecFn drift;
    // Diagonal of the diffusion matrix. Values are clamped from below by
    // diffusion_floor; negative outputs are an error.
    VecFn diffusion;
    double step = 0.0;
    double t0 = 0.0;
    double t_end = 0.0;
    double diffusion_floor = 0.0;

    // Throws ValidationError unless dim > 0, both functions are set, step > 0
    // and (t_end - t0) / step is a whole number.
    void validate() const;
    std::size_t steps() const;
    double time(std::size_t k) const { return t0 + static_cast<double>(k) * step; }
};

struct Trajectory {
    Vec times;
    Array states;     // (K+1) x D
    Array increments; // K x D Brownian increments eta[k], each N(0, dt)

    std::size_t steps() const noexcept { return times.empty() ? 0 : times.size() - 1; }
    std::span<const double> state(std::size_t k) const;
};

// Draws K x D Brownian increments with variance dt.
Array draw_increments(std::size_t steps, std::size_t dim, double dt, Rng& rng);

Trajectory em_solve(const SdeSpec& spec, std::span<const double> z0, Rng& rng);
// Same recursion driven by caller-supplied increments (K x D).
Trajectory em_replay(const SdeSpec& spec, std::span<const double> z0, const Array& increments);

struct AugmentedTrajectory {
    Trajectory path;
    // L = sum_k 1/2 |u(z[k], t[k])|^2 dt, a zero-diffusion passenger.
    double kl = 0.0;
};

AugmentedTrajectory em_solve_augmented(const SdeSpec& spec, const VecFn& u, std::span<const double> z0, Rng& rng);
AugmentedTrajectory em_replay_augmented(const SdeSpec& spec, const VecFn& u, std::span<const double> z0,
                                        const Array& increments);

// One EM step, exposed for the intervention simulator.
Vec em_step(const SdeSpec& spec, std::span<const double> z, double t, std::span<const double> increment);

// Nearest grid index round(t / step) per observation time. Times outside
// [0, t_end] are a ValidationError; two times sharing an index raise a
// ResolutionError asking for a smaller step.
std::vector<std::size_t> snap_to_grid(std::span<const double> times, double step, double t_end);

// ---- differentiable path ---------------------------------------------------------

using ad::Tape;
using ad::Var;

struct StepTerms {
    Var drift;      // S x D
    Var diffusion;  // S x D, positive
    Var u;          // S x D, or invalid for no KL accumulation
};

using StepFn = std::function<StepTerms(Var z, std::size_t k, double t)>;

struct DiffPath {
    std::vector<Var> states;  // K+1 entries of S x D
    Var kl;                   // S x 1, per-row L; invalid when no step produced u
};

// Batched EM on a tape. normals[k] holds S x D standard normal draws; the
// increment is sqrt(dt) * normals[k]. Rows are independent paths.
DiffPath em_solve_augmented(Tape& tape, Var z0, std::span<const Array> normals, double dt, double t0,
                            const StepFn& step_fn);

}  // namespace scotch::sde
