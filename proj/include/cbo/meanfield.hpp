#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cbo/dynamics.hpp"
#include "cbo/errors.hpp"
#include "cbo/measure.hpp"
#include "cbo/objective.hpp"
#include "cbo/rng.hpp"

namespace cbo {

struct PicardConfig {
    std::size_t m_samples = 1000;
    std::size_t max_iters = 30;
    double tol = 1e-2;
    double p = 2.0;

    void validate() const {
        if (m_samples < 2) throw UsageError("picard config: m_samples >= 2");
        if (max_iters < 1) throw UsageError("picard config: max_iters >= 1");
        if (!(tol > 0.0)) throw UsageError("picard config: tol > 0");
        if (!(p >= 1.0)) throw UsageError("picard config: p >= 1");
    }
};

// Monte-Carlo mean-field law: sample paths plus the consensus data read off
// each marginal. exit_index is the first grid index whose p-th moment
// exceeds the truncation threshold, if any.
struct MeanFieldSolution {
    MeasureCurve curve;
    std::size_t dim = 0;
    double moment_order = 2.0;
    std::vector<double> consensus_curve;  // (steps+1) x dim, truncated values
    std::vector<double> phi;              // cutoff factor per frame
    std::vector<double> moment;           // m_p per frame
    std::optional<std::size_t> exit_index;
};

// Integrates dX = -lambda (X - gamma_t) dt + S(X - gamma_t) dB per sample,
// with the consensus curve gamma frozen. frozen is (steps+1) x dim row-major;
// the last row is the endpoint value and does not drive any step.
inline MeasureCurve solve_auxiliary(const std::vector<double>& frozen,
                                    const Ensemble& init,
                                    const CboParams& params,
                                    const DiffusionModel& model,
                                    std::optional<std::uint64_t> noise_seed =
                                        std::nullopt) {
    params.validate();
    init.validate();
    const std::size_t steps = params.steps();
    if (frozen.size() != (steps + 1) * init.dim)
        throw UsageError("solve_auxiliary: frozen curve must have one vector "
                         "per grid point");
    const std::uint64_t key =
        derive_key(noise_seed.value_or(params.seed), rng_tag::noise);

    MeasureCurve curve;
    curve.times.reserve(steps + 1);
    curve.frames.reserve(steps + 1);
    curve.times.push_back(0.0);
    curve.frames.push_back(init);
    Ensemble ens = init;
    for (std::size_t k = 0; k < steps; ++k) {
        const std::span<const double> gamma{frozen.data() + k * init.dim,
                                            init.dim};
        detail::advance_particles(ens, gamma, params, model, key, k);
        curve.times.push_back(static_cast<double>(k + 1) * params.dt);
        curve.frames.push_back(ens);
    }
    return curve;
}

namespace detail {

inline std::vector<double> frozen_consensus_curve(
    const MeasureCurve& curve, const ObjectiveFunction& obj, double beta,
    const std::optional<TruncationConfig>& trunc) {
    std::vector<double> frozen;
    frozen.reserve(curve.frames.size() * curve.frames[0].dim);
    for (const auto& frame : curve.frames) {
        const auto m = field_consensus(frame, obj, beta, trunc);
        frozen.insert(frozen.end(), m.begin(), m.end());
    }
    return frozen;
}

} // namespace detail

// One Sznitman iteration: read the (truncated) consensus curve off the input
// law, then resolve the frozen-curve SDE with the SAME noise (synchronous
// coupling), restarting from the input's initial frame.
inline MeasureCurve picard_map(const MeasureCurve& curve,
                               const CboParams& params,
                               const DiffusionModel& model,
                               const ObjectiveFunction& obj,
                               const std::optional<TruncationConfig>& trunc,
                               std::uint64_t noise_seed) {
    curve.validate();
    const auto frozen =
        detail::frozen_consensus_curve(curve, obj, params.beta, trunc);
    return solve_auxiliary(frozen, curve.frames[0], params, model, noise_seed);
}

namespace detail {

inline MeanFieldSolution make_solution(
    MeasureCurve curve, const ObjectiveFunction& obj, double beta,
    const std::optional<TruncationConfig>& trunc) {
    MeanFieldSolution sol;
    sol.dim = curve.frames[0].dim;
    sol.moment_order = trunc ? trunc->p : 2.0;
    const std::size_t frames = curve.frames.size();
    sol.consensus_curve.reserve(frames * sol.dim);
    sol.phi.reserve(frames);
    sol.moment.reserve(frames);
    for (std::size_t k = 0; k < frames; ++k) {
        const auto& frame = curve.frames[k];
        const double mp = moment_p(frame, sol.moment_order);
        const double phi = trunc ? cutoff_eta(mp, trunc->R) : 1.0;
        auto m = consensus_point(frame, obj, beta);
        for (double& v : m) v *= phi;
        sol.consensus_curve.insert(sol.consensus_curve.end(), m.begin(),
                                   m.end());
        sol.phi.push_back(phi);
        sol.moment.push_back(mp);
        if (trunc && !sol.exit_index && mp > trunc->R) sol.exit_index = k;
    }
    sol.curve = std::move(curve);
    return sol;
}

} // namespace detail

struct PicardResult {
    MeanFieldSolution solution;
    std::vector<double> history;  // path distance per iteration
    bool converged = false;
    std::size_t iterations = 0;
};

// Fixed-point iteration of the Sznitman map. The initial samples are drawn
// once and reused; iteration 0 transports them with the consensus frozen at
// zero. Non-convergence is reported, never silently accepted.
inline PicardResult picard_fixed_point(
    const PicardConfig& cfg, const CboParams& params,
    const DiffusionModel& model, const ObjectiveFunction& obj,
    const std::optional<TruncationConfig>& trunc,
    const InitSampler& init_sampler,
    std::optional<MeasureCurve> initial_guess = std::nullopt) {
    cfg.validate();
    params.validate();
    if (trunc) trunc->validate();

    const std::uint64_t noise_seed = params.seed;
    MeasureCurve cur;
    if (initial_guess) {
        initial_guess->validate();
        if (initial_guess->frames[0].n != cfg.m_samples ||
            initial_guess->frames[0].dim != obj.dim ||
            initial_guess->frames.size() != params.steps() + 1)
            throw UsageError("picard_fixed_point: initial guess shape "
                             "mismatch");
        cur = std::move(*initial_guess);
    } else {
        const Ensemble init =
            sample_ensemble(cfg.m_samples, obj.dim, init_sampler, params.seed);
        const std::vector<double> zero((params.steps() + 1) * obj.dim, 0.0);
        cur = solve_auxiliary(zero, init, params, model, noise_seed);
    }

    PicardResult out;
    const std::size_t last = cur.frames.size() - 1;
    for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
        MeasureCurve next =
            picard_map(cur, params, model, obj, trunc, noise_seed);
        const double dist = path_distance_upper(cur, next, cfg.p, last);
        out.history.push_back(dist);
        out.iterations = it;
        cur = std::move(next);
        if (dist < cfg.tol) {
            out.converged = true;
            break;
        }
    }
    out.solution =
        detail::make_solution(std::move(cur), obj, params.beta, trunc);
    return out;
}

// Picard solve of the R-truncated problem; the solution records where (if
// ever) the moment trajectory leaves the R-ball.
inline PicardResult truncated_meanfield_solve(double R,
                                              const PicardConfig& cfg,
                                              const CboParams& params,
                                              const DiffusionModel& model,
                                              const ObjectiveFunction& obj,
                                              const InitSampler& init_sampler) {
    if (!(R > 0.0)) throw UsageError("truncated_meanfield_solve: R > 0");
    const TruncationConfig trunc{R, cfg.p};
    return picard_fixed_point(cfg, params, model, obj, trunc, init_sampler);
}

struct MomentBoundReport {
    double initial_moment = 0.0;
    double sup_moment = 0.0;
    double bound = 0.0;   // C_0 * initial moment
    double ratio = 0.0;   // sup / bound
    double margin = 0.0;  // bound - sup
    bool pass = false;
};

// Checks sup_t m_p(rho_t) <= C_0 m_p(rho_0) on the computed marginals.
inline MomentBoundReport verify_moment_bound(const MeanFieldSolution& sol,
                                             double C_0, double p) {
    if (!(C_0 > 0.0)) throw UsageError("verify_moment_bound: C_0 > 0");
    sol.curve.validate();
    MomentBoundReport rep;
    rep.initial_moment = moment_p(sol.curve.frames[0], p);
    for (const auto& frame : sol.curve.frames)
        rep.sup_moment = std::max(rep.sup_moment, moment_p(frame, p));
    rep.bound = C_0 * rep.initial_moment;
    rep.ratio = rep.bound > 0.0
                    ? rep.sup_moment / rep.bound
                    : (rep.sup_moment > 0.0
                           ? std::numeric_limits<double>::infinity()
                           : 0.0);
    rep.margin = rep.bound - rep.sup_moment;
    rep.pass = rep.sup_moment <= rep.bound;
    return rep;
}

struct ChaosRow {
    std::size_t n = 0;
    std::vector<double> distances;  // one per repetition
    double median = 0.0;
};

using ChaosTable = std::vector<ChaosRow>;

namespace detail {

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// Distinct-index subsample via partial Fisher-Yates keyed off the seed.
inline Ensemble subsample(const Ensemble& ens, std::size_t k,
                          std::uint64_t seed) {
    if (k > ens.n) throw UsageError("subsample: k <= n required");
    std::vector<std::size_t> idx(ens.n);
    for (std::size_t i = 0; i < ens.n; ++i) idx[i] = i;
    const std::uint64_t key = derive_key(seed, rng_tag::subsample);
    for (std::size_t i = 0; i < k; ++i) {
        const double u =
            uniform01(key, i, 0, 0);
        const auto j =
            i + static_cast<std::size_t>(u * static_cast<double>(ens.n - i));
        std::swap(idx[i], idx[std::min(j, ens.n - 1)]);
    }
    Ensemble out;
    out.n = k;
    out.dim = ens.dim;
    out.points.resize(k * ens.dim);
    for (std::size_t i = 0; i < k; ++i) {
        const auto src = ens.point(idx[i]);
        std::copy(src.begin(), src.end(), out.points.begin() + i * ens.dim);
    }
    return out;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b) {
    return splitmix64(seed ^ splitmix64((a << 32) ^ b));
}

} // namespace detail

// For each particle count, reruns the interacting system and measures the
// exact W_p between its final empirical law and an equal-size subsample of
// the mean-field final marginal.
inline ChaosTable propagation_of_chaos(const std::vector<std::size_t>& n_list,
                                       std::size_t reps,
                                       const CboParams& params,
                                       const DiffusionModel& model,
                                       const ObjectiveFunction& obj,
                                       const MeanFieldSolution& meanfield_ref,
                                       const InitSampler& init_sampler) {
    if (n_list.empty() || reps < 1)
        throw UsageError("propagation_of_chaos: need counts and reps >= 1");
    if (!std::is_sorted(n_list.begin(), n_list.end()))
        throw UsageError("propagation_of_chaos: n_list must be ascending");
    meanfield_ref.curve.validate();
    const Ensemble& ref_final = meanfield_ref.curve.frames.back();
    const double p = meanfield_ref.moment_order;
    for (std::size_t n : n_list) {
        if (n > wasserstein_max_n)
            throw UsageError("propagation_of_chaos: counts must stay <= " +
                             std::to_string(wasserstein_max_n) +
                             " for the exact distance");
        if (n > ref_final.n)
            throw UsageError("propagation_of_chaos: counts must not exceed "
                             "the mean-field sample count");
    }

    ChaosTable table;
    for (std::size_t n : n_list) {
        ChaosRow row;
        row.n = n;
        for (std::size_t rep = 0; rep < reps; ++rep) {
            CboParams run = params;
            run.n = n;
            run.seed = detail::mix_seed(params.seed, n, rep);
            const Ensemble init =
                sample_ensemble(n, obj.dim, init_sampler, run.seed);
            const auto traj = run_particle_cbo(run, model, obj, init);
            const Ensemble ref =
                detail::subsample(ref_final, n, run.seed);
            row.distances.push_back(
                wasserstein_assignment(traj.final_ensemble, ref, p));
        }
        row.median = detail::median_of(row.distances);
        table.push_back(std::move(row));
    }
    return table;
}

struct UniquenessReport {
    double guess_distance = 0.0;  // path distance between the two fixed points
    double tol = 0.0;
    bool within_two_tol = false;
    bool both_converged = false;
    bool bitwise_identical = false;  // identical rerun reproduces exactly
};

// (a) two different Picard initial guesses under the same noise must land on
// the same fixed point (within 2 tol); (b) re-running identically must
// reproduce the law bit for bit.
inline UniquenessReport uniqueness_probe(const CboParams& params,
                                         const DiffusionModel& model,
                                         const ObjectiveFunction& obj,
                                         const std::optional<TruncationConfig>&
                                             trunc,
                                         const PicardConfig& cfg,
                                         const InitSampler& init_sampler,
                                         std::pair<std::uint64_t,
                                                   std::uint64_t> guess_seeds) {
    cfg.validate();
    params.validate();

    const Ensemble init =
        sample_ensemble(cfg.m_samples, obj.dim, init_sampler, params.seed);

    // Different transports of the same samples: guess curves driven by
    // throwaway noise seeds, frozen consensus at zero.
    auto make_guess = [&](std::uint64_t s) {
        const std::vector<double> zero((params.steps() + 1) * obj.dim, 0.0);
        return solve_auxiliary(zero, init, params, model, s);
    };
    auto run_a = picard_fixed_point(cfg, params, model, obj, trunc,
                                    init_sampler,
                                    make_guess(guess_seeds.first));
    auto run_b = picard_fixed_point(cfg, params, model, obj, trunc,
                                    init_sampler,
                                    make_guess(guess_seeds.second));

    UniquenessReport rep;
    rep.tol = cfg.tol;
    rep.both_converged = run_a.converged && run_b.converged;
    rep.guess_distance =
        path_distance_upper(run_a.solution.curve, run_b.solution.curve, cfg.p);
    rep.within_two_tol = rep.guess_distance <= 2.0 * cfg.tol;

    auto rerun = picard_fixed_point(cfg, params, model, obj, trunc,
                                    init_sampler,
                                    make_guess(guess_seeds.first));
    rep.bitwise_identical = true;
    const auto& fa = run_a.solution.curve.frames;
    const auto& fb = rerun.solution.curve.frames;
    if (fa.size() != fb.size()) rep.bitwise_identical = false;
    for (std::size_t k = 0; rep.bitwise_identical && k < fa.size(); ++k)
        if (fa[k].points != fb[k].points) rep.bitwise_identical = false;
    return rep;
}

} // namespace cbo
