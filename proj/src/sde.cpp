#include "scotch/sde.hpp"

#include <cmath>
#include <string>

#include "scotch/error.hpp"

namespace scotch::sde {

namespace {

void check_finite(std::span<const double> z, std::size_t step) {
    for (double v : z)
        if (!std::isfinite(v))
            throw DivergenceError("state became non-finite at step " + std::to_string(step),
                                  static_cast<long>(step));
}

Vec checked(const Vec& v, std::size_t dim, const char* what) {
    if (v.size() != dim)
        throw DimensionError(std::string(what) + " returned " + std::to_string(v.size()) + " values, expected " +
                             std::to_string(dim));
    return v;
}

}  // namespace

void SdeSpec::validate() const {
    if (dim == 0) throw ValidationError("sde: dimension must be positive");
    if (!drift || !diffusion) throw ValidationError("sde: drift and diffusion must be set");
    if (!(step > 0.0)) throw ValidationError("sde: step must be positive");
    if (!(t_end >= t0)) throw ValidationError("sde: empty time range");
    const double n = (t_end - t0) / step;
    if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n))
        throw ValidationError("sde: step " + std::to_string(step) + " does not divide [" + std::to_string(t0) +
                              ", " + std::to_string(t_end) + "]");
}

std::size_t SdeSpec::steps() const { return static_cast<std::size_t>(std::llround((t_end - t0) / step)); }

std::span<const double> Trajectory::state(std::size_t k) const {
    const std::size_t d = states.cols();
    return states.data().subspan(k * d, d);
}

Array draw_increments(std::size_t steps, std::size_t dim, double dt, Rng& rng) {
    Array eta({steps, dim});
    const double s = std::sqrt(dt);
    for (double& v : eta.data()) v = s * standard_normal(rng);
    return eta;
}

Vec em_step(const SdeSpec& spec, std::span<const double> z, double t, std::span<const double> increment) {
    const Vec f = checked(spec.drift(z, t), spec.dim, "drift");
    const Vec g = checked(spec.diffusion(z, t), spec.dim, "diffusion");
    Vec next(spec.dim);
    for (std::size_t d = 0; d < spec.dim; ++d) {
        if (g[d] < 0.0) throw DomainError("sde: negative diffusion output");
        const double gd = std::max(g[d], spec.diffusion_floor);
        next[d] = z[d] + f[d] * spec.step + gd * increment[d];
    }
    return next;
}

Trajectory em_replay(const SdeSpec& spec, std::span<const double> z0, const Array& increments) {
    return em_replay_augmented(spec, VecFn{}, z0, increments).path;
}

Trajectory em_solve(const SdeSpec& spec, std::span<const double> z0, Rng& rng) {
    spec.validate();
    return em_replay(spec, z0, draw_increments(spec.steps(), spec.dim, spec.step, rng));
}

AugmentedTrajectory em_replay_augmented(const SdeSpec& spec, const VecFn& u, std::span<const double> z0,
                                        const Array& increments) {
    spec.validate();
    const std::size_t K = spec.steps();
    const std::size_t D = spec.dim;
    if (z0.size() != D) throw DimensionError("sde: initial state has wrong dimension");
    if (increments.rows() != K || increments.cols() != D)
        throw DimensionError("sde: increments must be " + std::to_string(K) + " x " + std::to_string(D));
    check_finite(z0, 0);

    AugmentedTrajectory out;
    Trajectory& tr = out.path;
    tr.times.resize(K + 1);
    tr.states = Array({K + 1, D});
    tr.increments = increments;
    std::copy(z0.begin(), z0.end(), tr.states.data().begin());
    tr.times[0] = spec.t0;
    for (std::size_t k = 0; k < K; ++k) {
        const double t = spec.time(k);
        const std::span<const double> z = tr.state(k);
        if (u) {
            const Vec uk = checked(u(z, t), D, "u");
            double sq = 0.0;
            for (double v : uk) sq += v * v;
            out.kl += 0.5 * sq * spec.step;
        }
        const Vec next = em_step(spec, z, t, increments.data().subspan(k * D, D));
        check_finite(next, k + 1);
        std::copy(next.begin(), next.end(), tr.states.data().begin() + static_cast<std::ptrdiff_t>((k + 1) * D));
        tr.times[k + 1] = spec.time(k + 1);
    }
    return out;
}

AugmentedTrajectory em_solve_augmented(const SdeSpec& spec, const VecFn& u, std::span<const double> z0, Rng& rng) {
    spec.validate();
    return em_replay_augmented(spec, u, z0, draw_increments(spec.steps(), spec.dim, spec.step, rng));
}

std::vector<std::size_t> snap_to_grid(std::span<const double> times, double step, double t_end) {
    if (!(step > 0.0)) throw ValidationError("snap_to_grid: step must be positive");
    std::vector<std::size_t> idx;
    idx.reserve(times.size());
    for (double t : times) {
        if (!(t >= -1e-12 && t <= t_end + 1e-12))
            throw ValidationError("observation time " + std::to_string(t) + " outside [0, " + std::to_string(t_end) +
                                  "]");
        const auto k = static_cast<std::size_t>(std::llround(t / step));
        for (std::size_t prev : idx)
            if (prev == k)
                throw ResolutionError("two observations snap to grid point " + std::to_string(k) + " (t=" +
                                      std::to_string(t) + "); decrease the step size below " +
                                      std::to_string(step));
        idx.push_back(k);
    }
    return idx;
}

DiffPath em_solve_augmented(Tape& tape, Var z0, std::span<const Array> normals, double dt, double t0,
                            const StepFn& step_fn) {
    if (!(dt > 0.0)) throw ValidationError("sde: step must be positive");
    const double sqrt_dt = std::sqrt(dt);
    DiffPath out;
    out.states.reserve(normals.size() + 1);
    out.states.push_back(z0);
    Var z = z0;
    for (std::size_t k = 0; k < normals.size(); ++k) {
        const double t = t0 + static_cast<double>(k) * dt;
        StepTerms terms = step_fn(z, k, t);
        if (normals[k].size() != z.value().size()) throw DimensionError("sde: noise shape does not match state");
        if (terms.u.valid()) {
            Var sq = ad::scale(ad::sum_cols(ad::square(terms.u)), 0.5 * dt);
            out.kl = out.kl.valid() ? ad::add(out.kl, sq) : sq;
        }
        Array eta = normals[k].reshaped(z.shape());
        for (double& v : eta.data()) v *= sqrt_dt;
        Var noise = tape.constant(std::move(eta));
        Var next = ad::add(z, ad::add(ad::scale(terms.drift, dt), ad::mul(terms.diffusion, noise)));
        for (std::size_t i = 0; i < next.value().size(); ++i)
            if (!std::isfinite(next.value()[i]))
                throw DivergenceError("path row " + std::to_string(i / next.cols()) +
                                          " became non-finite at step " + std::to_string(k + 1),
                                      static_cast<long>(k + 1));
        out.states.push_back(next);
        z = next;
    }
    return out;
}

}  // namespace scotch::sde
