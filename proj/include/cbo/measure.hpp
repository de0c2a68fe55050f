#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cbo/errors.hpp"
#include "cbo/parallel.hpp"
#include "cbo/rng.hpp"

namespace cbo {

// Empirical measure: n points in R^d, row-major n x d.
struct Ensemble {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<double> points;  // points[i*dim + j]

    std::span<double> point(std::size_t i) {
        return {points.data() + i * dim, dim};
    }
    std::span<const double> point(std::size_t i) const {
        return {points.data() + i * dim, dim};
    }

    void validate() const {
        if (n == 0 || dim == 0)
            throw UsageError("ensemble: need n >= 1 and dim >= 1");
        if (points.size() != n * dim)
            throw DataError("ensemble: storage is " +
                            std::to_string(points.size()) + " doubles, want " +
                            std::to_string(n * dim));
        for (double v : points)
            if (!std::isfinite(v))
                throw DataError("ensemble: non-finite coordinate");
    }
};

// Discrete-time flow of empirical measures: one frame per grid time,
// t_0 = 0 < t_1 < ... < t_K.
struct MeasureCurve {
    std::vector<double> times;
    std::vector<Ensemble> frames;

    std::size_t steps() const { return frames.empty() ? 0 : frames.size() - 1; }

    void validate() const {
        if (frames.empty()) throw UsageError("measure curve: no frames");
        if (times.size() != frames.size())
            throw DataError("measure curve: times/frames length mismatch");
        if (times[0] != 0.0)
            throw DataError("measure curve: grid must start at t = 0");
        for (std::size_t k = 1; k < times.size(); ++k)
            if (!(times[k] > times[k - 1]))
                throw DataError("measure curve: times must increase");
        for (const auto& e : frames) e.validate();
        for (const auto& e : frames)
            if (e.n != frames[0].n || e.dim != frames[0].dim)
                throw DataError("measure curve: frames disagree on shape");
    }
};

struct TruncationConfig {
    double R = 1.0;   // cutoff threshold on the p-th moment
    double p = 2.0;   // moment order fed to the cutoff

    void validate() const {
        if (!(R > 0.0)) throw UsageError("truncation: R > 0");
        if (!(p >= 1.0)) throw UsageError("truncation: p >= 1");
    }
};

inline double moment_p(const Ensemble& ens, double p) {
    if (!(p >= 1.0)) throw UsageError("moment_p: p >= 1");
    ens.validate();
    double acc = 0.0;
    for (std::size_t i = 0; i < ens.n; ++i) {
        double sq = 0.0;
        for (double v : ens.point(i)) sq += v * v;
        acc += std::pow(sq, p / 2.0);
    }
    return std::pow(acc / static_cast<double>(ens.n), 1.0 / p);
}

// W_p between two 1-d samples of equal size: sort both, pair in order.
inline double wasserstein_1d(std::span<const double> a,
                             std::span<const double> b, double p) {
    if (!(p >= 1.0)) throw UsageError("wasserstein_1d: p >= 1");
    if (a.size() != b.size() || a.empty())
        throw UsageError("wasserstein_1d: equal nonzero sample sizes");
    std::vector<double> sa(a.begin(), a.end());
    std::vector<double> sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i)
        acc += std::pow(std::abs(sa[i] - sb[i]), p);
    return std::pow(acc / static_cast<double>(sa.size()), 1.0 / p);
}

namespace detail {

// Exact assignment on a square cost matrix (potentials form of the Hungarian
// method, O(n^3)). Returns match[j] = row assigned to column j.
inline std::vector<std::size_t> hungarian(const std::vector<double>& cost,
                                          std::size_t n) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0);  // 1-based; 0 = unmatched marker
    std::vector<std::size_t> way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = match[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur =
                    cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> result(n);
    for (std::size_t j = 1; j <= n; ++j) result[j - 1] = match[j] - 1;
    return result;
}

} // namespace detail

inline constexpr std::size_t wasserstein_max_n = 512;

// Exact W_p between equal-size empirical measures via optimal assignment.
// Cubic in n, so capped; for wider gaps use path_distance_upper.
inline double wasserstein_assignment(const Ensemble& a, const Ensemble& b,
                                     double p) {
    if (!(p >= 1.0)) throw UsageError("wasserstein_assignment: p >= 1");
    a.validate();
    b.validate();
    if (a.n != b.n || a.dim != b.dim)
        throw UsageError("wasserstein_assignment: shape mismatch");
    if (a.n > wasserstein_max_n)
        throw UsageError(
            "wasserstein_assignment: n > " + std::to_string(wasserstein_max_n) +
            "; use path_distance_upper for large ensembles");

    const std::size_t n = a.n;
    std::vector<double> cost(n * n);
    parallel_for(n, [&](std::size_t i) {
        const auto xi = a.point(i);
        for (std::size_t j = 0; j < n; ++j) {
            const auto yj = b.point(j);
            double sq = 0.0;
            for (std::size_t k = 0; k < a.dim; ++k) {
                const double d = xi[k] - yj[k];
                sq += d * d;
            }
            cost[i * n + j] = std::pow(sq, p / 2.0);
        }
    });
    const auto match = detail::hungarian(cost, n);
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += cost[match[j] * n + j];
    return std::pow(acc / static_cast<double>(n), 1.0 / p);
}

// W_p(mu, delta_0): every point transports to the origin, so this equals the
// p-th moment. Kept as a direct sum so the identity is testable.
inline double wasserstein_to_dirac0(const Ensemble& ens, double p) {
    if (!(p >= 1.0)) throw UsageError("wasserstein_to_dirac0: p >= 1");
    ens.validate();
    double acc = 0.0;
    for (std::size_t i = 0; i < ens.n; ++i) {
        double sq = 0.0;
        for (double v : ens.point(i)) sq += v * v;
        acc += std::pow(sq, p / 2.0);
    }
    return std::pow(acc / static_cast<double>(ens.n), 1.0 / p);
}

// Largest slope of the quintic smoothstep 6u^5 - 15u^4 + 10u^3 (at u = 1/2).
inline constexpr double cutoff_lipschitz = 15.0 / 8.0;

// C^1 cutoff in the moment value z: 1 on [0, R], 0 on [R+1, inf), quintic
// smoothstep in between.
inline double cutoff_eta(double z, double R) {
    if (!(R > 0.0)) throw UsageError("cutoff_eta: R > 0");
    if (!(z >= 0.0)) throw UsageError("cutoff_eta: z >= 0");
    if (z <= R) return 1.0;
    if (z >= R + 1.0) return 0.0;
    const double u = z - R;
    const double s = u * u * u * (u * (6.0 * u - 15.0) + 10.0);
    return 1.0 - s;
}

inline double truncation_phi(const Ensemble& ens, const TruncationConfig& cfg) {
    cfg.validate();
    return cutoff_eta(moment_p(ens, cfg.p), cfg.R);
}

// Pathwise upper bound on sup_t W_p of two curves sharing particle labels:
// couple particle i with particle i, take the running max over time per
// particle, then the empirical L^p average. Valid whenever the curves were
// produced from coupled drivers; always an upper bound for the sup of the
// exact distances.
inline double path_distance_upper(const MeasureCurve& a, const MeasureCurve& b,
                                  double p, std::size_t up_to_frame) {
    if (!(p >= 1.0)) throw UsageError("path_distance_upper: p >= 1");
    a.validate();
    b.validate();
    if (a.times != b.times || a.frames[0].n != b.frames[0].n ||
        a.frames[0].dim != b.frames[0].dim)
        throw UsageError("path_distance_upper: curves must share the grid "
                         "and shape");
    if (up_to_frame >= a.frames.size())
        throw UsageError("path_distance_upper: frame index out of range");

    const std::size_t n = a.frames[0].n;
    const std::size_t dim = a.frames[0].dim;
    std::vector<double> worst(n, 0.0);
    for (std::size_t k = 0; k <= up_to_frame; ++k) {
        const auto& fa = a.frames[k];
        const auto& fb = b.frames[k];
        for (std::size_t i = 0; i < n; ++i) {
            double sq = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double d = fa.points[i * dim + j] - fb.points[i * dim + j];
                sq += d * d;
            }
            worst[i] = std::max(worst[i], sq);
        }
    }
    double acc = 0.0;
    for (double w : worst) acc += std::pow(w, p / 2.0);
    return std::pow(acc / static_cast<double>(n), 1.0 / p);
}

inline double path_distance_upper(const MeasureCurve& a,
                                  const MeasureCurve& b, double p) {
    a.validate();
    return path_distance_upper(a, b, p, a.frames.size() - 1);
}

// Initial-law sampler: fills one particle's coordinates from (stream, step=0)
// of the init key so ensembles are reproducible and extensible in n.
using InitSampler =
    std::function<void(std::span<double> x, std::uint64_t key,
                       std::uint64_t stream)>;

inline InitSampler uniform_box_sampler(double lo, double hi) {
    if (!(lo < hi)) throw UsageError("uniform_box_sampler: lo < hi");
    return [lo, hi](std::span<double> x, std::uint64_t key,
                    std::uint64_t stream) {
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double u =
                uniform01(key, stream, 0, static_cast<std::uint32_t>(j));
            x[j] = lo + (hi - lo) * u;
        }
    };
}

inline InitSampler gaussian_sampler(double mean, double stddev) {
    if (!(stddev > 0.0)) throw UsageError("gaussian_sampler: stddev > 0");
    return [mean, stddev](std::span<double> x, std::uint64_t key,
                          std::uint64_t stream) {
        fill_normals(x.data(), x.size(), key, stream, 0);
        for (double& v : x) v = mean + stddev * v;
    };
}

inline InitSampler point_sampler(std::vector<double> at) {
    return [at = std::move(at)](std::span<double> x, std::uint64_t,
                                std::uint64_t) {
        if (x.size() != at.size())
            throw UsageError("point_sampler: dimension mismatch");
        std::copy(at.begin(), at.end(), x.begin());
    };
}

inline Ensemble sample_ensemble(std::size_t n, std::size_t dim,
                                const InitSampler& sampler,
                                std::uint64_t seed) {
    if (n == 0 || dim == 0)
        throw UsageError("sample_ensemble: need n >= 1 and dim >= 1");
    Ensemble ens;
    ens.n = n;
    ens.dim = dim;
    ens.points.resize(n * dim);
    const std::uint64_t key = derive_key(seed, rng_tag::init);
    for (std::size_t i = 0; i < n; ++i) sampler(ens.point(i), key, i);
    ens.validate();
    return ens;
}

} // namespace cbo
