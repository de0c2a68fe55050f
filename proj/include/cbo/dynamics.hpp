#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbo/errors.hpp"
#include "cbo/measure.hpp"
#include "cbo/objective.hpp"
#include "cbo/parallel.hpp"
#include "cbo/rng.hpp"

namespace cbo {

// Diffusion coefficient S as a map u -> S(u)·xi, with a certified Lipschitz
// constant in the Frobenius norm.
struct DiffusionModel {
    enum class Kind { isotropic, anisotropic, custom };

    Kind kind = Kind::isotropic;
    double theta = 0.0;
    double L_S = 0.0;
    std::function<void(std::span<const double> u, std::span<const double> xi,
                       std::span<double> out)>
        map;  // only for Kind::custom
};

// S(u) = sqrt(2 theta) |u| I_d. The certified Frobenius Lipschitz bound
// carries a sqrt(d) factor.
inline DiffusionModel isotropic_diffusion(double theta, std::size_t dim) {
    if (!(theta > 0.0)) throw UsageError("isotropic_diffusion: theta > 0");
    if (dim < 1) throw UsageError("isotropic_diffusion: dim >= 1");
    DiffusionModel m;
    m.kind = DiffusionModel::Kind::isotropic;
    m.theta = theta;
    m.L_S = std::sqrt(2.0 * theta * static_cast<double>(dim));
    return m;
}

// S(u) = sqrt(2 theta) diag(u).
inline DiffusionModel anisotropic_diffusion(double theta) {
    if (!(theta > 0.0)) throw UsageError("anisotropic_diffusion: theta > 0");
    DiffusionModel m;
    m.kind = DiffusionModel::Kind::anisotropic;
    m.theta = theta;
    m.L_S = std::sqrt(2.0 * theta);
    return m;
}

inline DiffusionModel custom_diffusion(
    std::function<void(std::span<const double>, std::span<const double>,
                       std::span<double>)>
        map,
    double L_S) {
    if (!map) throw UsageError("custom_diffusion: map required");
    if (!(L_S >= 0.0)) throw UsageError("custom_diffusion: L_S >= 0");
    DiffusionModel m;
    m.kind = DiffusionModel::Kind::custom;
    m.L_S = L_S;
    m.map = std::move(map);
    return m;
}

struct CboParams {
    double lambda = 1.0;
    double beta = 1.0;
    double T = 1.0;
    double dt = 0.01;
    std::size_t n = 100;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(lambda > 0.0)) throw UsageError("cbo params: lambda > 0");
        if (!(beta > 0.0)) throw UsageError("cbo params: beta > 0");
        if (!(T > 0.0)) throw UsageError("cbo params: T > 0");
        if (!(dt > 0.0) || dt > T) throw UsageError("cbo params: 0 < dt <= T");
        if (n < 1) throw UsageError("cbo params: n >= 1");
        const double ratio = T / dt;
        if (std::abs(ratio - std::round(ratio)) >
            1e-6 * std::max(1.0, ratio))
            throw UsageError("cbo params: T/dt must land on the step grid");
    }

    std::size_t steps() const {
        validate();
        return static_cast<std::size_t>(std::llround(T / dt));
    }
};

// The full simulator state; a pure function of (params, initial ensemble,
// t_index) because every noise draw is addressed by (noise_key, particle,
// step) rather than consumed from a shared generator.
struct SimulationState {
    std::size_t t_index = 0;
    Ensemble ensemble;
    std::uint64_t noise_key = 0;
};

inline SimulationState make_state(const CboParams& params,
                                  const Ensemble& init) {
    params.validate();
    init.validate();
    if (init.n != params.n)
        throw UsageError("make_state: ensemble size does not match params.n");
    return {0, init, derive_key(params.seed, rng_tag::noise)};
}

// Softmax-weighted mean with weights exp(-beta f(X_i)), stabilized by
// subtracting the max exponent. The result is clamped to the coordinatewise
// bounding box, a no-op in exact arithmetic, so hull membership is exact.
inline std::vector<double> consensus_point(const Ensemble& ens,
                                           const ObjectiveFunction& obj,
                                           double beta) {
    if (!(beta > 0.0)) throw UsageError("consensus_point: beta > 0");
    ens.validate();
    if (ens.dim != obj.dim)
        throw UsageError("consensus_point: ensemble/objective dim mismatch");

    std::vector<double> vals(ens.n);
    parallel_for(ens.n,
                 [&](std::size_t i) { vals[i] = obj.eval(ens.point(i)); });
    double a_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ens.n; ++i) {
        if (!std::isfinite(vals[i]))
            throw DataError("consensus_point: objective not finite at particle " +
                            std::to_string(i));
        a_max = std::max(a_max, -beta * vals[i]);
    }

    std::vector<double> m(ens.dim, 0.0);
    double w_sum = 0.0;
    for (std::size_t i = 0; i < ens.n; ++i) {
        const double w = std::exp(-beta * vals[i] - a_max);
        w_sum += w;
        const auto x = ens.point(i);
        for (std::size_t j = 0; j < ens.dim; ++j) m[j] += w * x[j];
    }
    for (double& v : m) v /= w_sum;

    for (std::size_t j = 0; j < ens.dim; ++j) {
        double lo = ens.points[j], hi = ens.points[j];
        for (std::size_t i = 1; i < ens.n; ++i) {
            lo = std::min(lo, ens.points[i * ens.dim + j]);
            hi = std::max(hi, ens.points[i * ens.dim + j]);
        }
        m[j] = std::clamp(m[j], lo, hi);
    }
    return m;
}

inline std::vector<double> drift_field(std::span<const double> x,
                                       std::span<const double> m,
                                       double lambda) {
    if (x.size() != m.size())
        throw UsageError("drift_field: dimension mismatch");
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j)
        out[j] = -lambda * (x[j] - m[j]);
    return out;
}

inline std::vector<double> diffusion_apply(const DiffusionModel& model,
                                           std::span<const double> u,
                                           std::span<const double> xi) {
    if (u.size() != xi.size())
        throw UsageError("diffusion_apply: dimension mismatch");
    std::vector<double> out(u.size());
    switch (model.kind) {
        case DiffusionModel::Kind::isotropic: {
            double sq = 0.0;
            for (double v : u) sq += v * v;
            const double scale = std::sqrt(2.0 * model.theta) * std::sqrt(sq);
            for (std::size_t j = 0; j < u.size(); ++j) out[j] = scale * xi[j];
            break;
        }
        case DiffusionModel::Kind::anisotropic: {
            const double scale = std::sqrt(2.0 * model.theta);
            for (std::size_t j = 0; j < u.size(); ++j)
                out[j] = scale * u[j] * xi[j];
            break;
        }
        case DiffusionModel::Kind::custom:
            model.map(u, xi, out);
            break;
    }
    return out;
}

// phi_R(mu) * M_beta(mu); scaling by the cutoff pulls the effective consensus
// toward the origin, and on the zero branch the fields become v = -lambda x,
// sigma = S(x).
inline std::vector<double> truncated_consensus(const Ensemble& ens,
                                               const ObjectiveFunction& obj,
                                               double beta,
                                               const TruncationConfig& cfg) {
    const double phi = truncation_phi(ens, cfg);
    std::vector<double> m = consensus_point(ens, obj, beta);
    for (double& v : m) v *= phi;
    return m;
}

namespace detail {

// One Euler-Maruyama update of every particle against a fixed consensus
// point. Disjoint row writes; noise addressed by (particle, step).
inline void advance_particles(Ensemble& ens, std::span<const double> m,
                              const CboParams& params,
                              const DiffusionModel& model,
                              std::uint64_t noise_key, std::size_t step) {
    const double dt = params.dt;
    const double root_dt = std::sqrt(dt);
    const double lambda = params.lambda;
    const std::size_t dim = ens.dim;
    const auto step32 = static_cast<std::uint32_t>(step);

    parallel_for(ens.n, [&](std::size_t i) {
        auto x = ens.point(i);
        std::vector<double> xi(dim);
        fill_normals(xi.data(), dim, noise_key, i, step32);

        if (model.kind == DiffusionModel::Kind::custom) {
            std::vector<double> u(dim), su(dim);
            for (std::size_t j = 0; j < dim; ++j) u[j] = x[j] - m[j];
            model.map(u, xi, su);
            for (std::size_t j = 0; j < dim; ++j)
                x[j] += -lambda * u[j] * dt + su[j] * root_dt;
        } else if (model.kind == DiffusionModel::Kind::isotropic) {
            double sq = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double u = x[j] - m[j];
                sq += u * u;
            }
            const double scale = std::sqrt(2.0 * model.theta) * std::sqrt(sq);
            for (std::size_t j = 0; j < dim; ++j) {
                const double u = x[j] - m[j];
                x[j] += -lambda * u * dt + scale * xi[j] * root_dt;
            }
        } else {
            const double scale = std::sqrt(2.0 * model.theta);
            for (std::size_t j = 0; j < dim; ++j) {
                const double u = x[j] - m[j];
                x[j] += -lambda * u * dt + scale * u * xi[j] * root_dt;
            }
        }

        for (std::size_t j = 0; j < dim; ++j)
            if (!std::isfinite(x[j]))
                throw NumericError("em_step: non-finite position for particle " +
                                   std::to_string(i) + " at step " +
                                   std::to_string(step));
    });
}

inline std::vector<double> field_consensus(
    const Ensemble& ens, const ObjectiveFunction& obj, double beta,
    const std::optional<TruncationConfig>& trunc) {
    return trunc ? truncated_consensus(ens, obj, beta, *trunc)
                 : consensus_point(ens, obj, beta);
}

} // namespace detail

inline SimulationState em_step(const SimulationState& state,
                               const CboParams& params,
                               const DiffusionModel& model,
                               const ObjectiveFunction& obj,
                               const std::optional<TruncationConfig>& trunc =
                                   std::nullopt) {
    params.validate();
    if (state.t_index >= params.steps())
        throw UsageError("em_step: past the end of the time grid");
    SimulationState next = state;
    const auto m =
        detail::field_consensus(next.ensemble, obj, params.beta, trunc);
    detail::advance_particles(next.ensemble, m, params, model, next.noise_key,
                              next.t_index);
    ++next.t_index;
    return next;
}

// Per-grid-point records of one particle run; consensus is the value that
// drove the step (truncated when truncation is active).
struct Trajectory {
    double dt = 0.0;
    double moment_order = 2.0;
    std::size_t dim = 0;
    std::vector<double> times;
    std::vector<double> consensus;  // (steps+1) x dim, row-major
    std::vector<double> best_f;
    std::vector<double> moment;
    Ensemble final_ensemble;
};

inline Trajectory run_particle_cbo(const CboParams& params,
                                   const DiffusionModel& model,
                                   const ObjectiveFunction& obj,
                                   const Ensemble& init,
                                   const std::optional<TruncationConfig>&
                                       trunc = std::nullopt) {
    SimulationState state = make_state(params, init);
    if (init.dim != obj.dim)
        throw UsageError("run_particle_cbo: ensemble/objective dim mismatch");
    if (trunc) trunc->validate();
    const std::size_t steps = params.steps();
    const double p = trunc ? trunc->p : 2.0;

    Trajectory traj;
    traj.dt = params.dt;
    traj.moment_order = p;
    traj.dim = init.dim;
    traj.times.reserve(steps + 1);
    traj.consensus.reserve((steps + 1) * init.dim);
    traj.best_f.reserve(steps + 1);
    traj.moment.reserve(steps + 1);

    auto record = [&](std::size_t k) {
        const auto m =
            detail::field_consensus(state.ensemble, obj, params.beta, trunc);
        traj.times.push_back(static_cast<double>(k) * params.dt);
        traj.consensus.insert(traj.consensus.end(), m.begin(), m.end());
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < state.ensemble.n; ++i)
            best = std::min(best, evaluate(obj, state.ensemble.point(i)));
        traj.best_f.push_back(best);
        traj.moment.push_back(moment_p(state.ensemble, p));
        return m;
    };

    for (std::size_t k = 0; k < steps; ++k) {
        const auto m = record(k);
        detail::advance_particles(state.ensemble, m, params, model,
                                  state.noise_key, k);
        ++state.t_index;
    }
    record(steps);
    traj.final_ensemble = std::move(state.ensemble);
    return traj;
}

struct SublinearityReport {
    double consensus_norm = 0.0;
    double max_particle_norm = 0.0;
    double moment = 0.0;
    bool hull_bound_ok = false;    // |M| <= max_i |X_i|
    bool moment_bound_ok = false;  // |M| <= C_M m_p
};

inline SublinearityReport sublinearity_check(const Ensemble& ens,
                                             const ObjectiveFunction& obj,
                                             double beta, double p,
                                             double C_M) {
    if (!(C_M > 0.0)) throw UsageError("sublinearity_check: C_M > 0");
    const auto m = consensus_point(ens, obj, beta);
    SublinearityReport rep;
    double sq = 0.0;
    for (double v : m) sq += v * v;
    rep.consensus_norm = std::sqrt(sq);
    for (std::size_t i = 0; i < ens.n; ++i) {
        double s = 0.0;
        for (double v : ens.point(i)) s += v * v;
        rep.max_particle_norm = std::max(rep.max_particle_norm, std::sqrt(s));
    }
    rep.moment = moment_p(ens, p);
    rep.hull_bound_ok =
        rep.consensus_norm <= rep.max_particle_norm * (1.0 + 1e-12);
    rep.moment_bound_ok = rep.consensus_norm <= C_M * rep.moment;
    return rep;
}

} // namespace cbo
