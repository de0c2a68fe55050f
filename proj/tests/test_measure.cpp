#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cbo/measure.hpp"
#include "cbo/rng.hpp"

namespace {

cbo::Ensemble make_ens(std::size_t dim, std::vector<double> pts) {
    cbo::Ensemble e;
    e.dim = dim;
    e.n = pts.size() / dim;
    e.points = std::move(pts);
    return e;
}

cbo::Ensemble random_ens(std::size_t n, std::size_t dim, std::uint64_t seed,
                         double lo = -3.0, double hi = 3.0) {
    const auto key = cbo::derive_key(seed, cbo::rng_tag::validation);
    cbo::Ensemble e;
    e.n = n;
    e.dim = dim;
    e.points.resize(n * dim);
    for (std::size_t i = 0; i < e.points.size(); ++i)
        e.points[i] =
            lo + (hi - lo) * cbo::uniform01(key, i, 0, 0);
    return e;
}

// Exhaustive assignment oracle, viable for n <= 8.
double brute_force_wp(const cbo::Ensemble& a, const cbo::Ensemble& b,
                      double p) {
    std::vector<std::size_t> perm(a.n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.n; ++i) {
            double sq = 0.0;
            for (std::size_t j = 0; j < a.dim; ++j) {
                const double d =
                    a.points[i * a.dim + j] - b.points[perm[i] * a.dim + j];
                sq += d * d;
            }
            acc += std::pow(sq, p / 2.0);
        }
        best = std::min(best, acc);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::pow(best / static_cast<double>(a.n), 1.0 / p);
}

} // namespace

TEST_CASE("moment examples") {
    CHECK(cbo::moment_p(make_ens(1, {3.0, 4.0}), 2.0) ==
          Catch::Approx(std::sqrt(12.5)).epsilon(1e-14));
    CHECK(cbo::moment_p(make_ens(2, {0.0, 0.0, 0.0, 0.0}), 3.0) == 0.0);
    CHECK(cbo::moment_p(make_ens(2, {3.0, 4.0}), 7.0) ==
          Catch::Approx(5.0).epsilon(1e-14));
    CHECK_THROWS_AS(cbo::moment_p(make_ens(1, {1.0}), 0.5), cbo::UsageError);
}

TEST_CASE("ensemble validation") {
    CHECK_THROWS_AS(make_ens(1, {}).validate(), cbo::UsageError);
    auto bad = make_ens(2, {1.0, 2.0, 3.0, 4.0});
    bad.points.pop_back();
    CHECK_THROWS_AS(bad.validate(), cbo::DataError);
    auto naned = make_ens(1, {1.0, std::nan("")});
    CHECK_THROWS_AS(naned.validate(), cbo::DataError);
}

TEST_CASE("1-d distance by monotone coupling") {
    CHECK(cbo::wasserstein_1d(std::vector{0.0, 1.0},
                              std::vector{0.5, 1.5}, 2.0) ==
          Catch::Approx(0.5).epsilon(1e-14));
    CHECK(cbo::wasserstein_1d(std::vector{2.0, -1.0},
                              std::vector{-1.0, 2.0}, 2.0) == 0.0);
    CHECK(cbo::wasserstein_1d(std::vector{0.0}, std::vector{7.0}, 1.0) == 7.0);
    CHECK_THROWS_AS(cbo::wasserstein_1d(std::vector{0.0},
                                        std::vector{1.0, 2.0}, 1.0),
                    cbo::UsageError);
}

TEST_CASE("assignment distance against the exhaustive oracle") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const std::size_t n = 2 + seed % 7;  // up to 8
        const auto a = random_ens(n, 2, 100 + seed);
        const auto b = random_ens(n, 2, 200 + seed);
        for (double p : {1.0, 2.0, 3.0}) {
            const double exact = cbo::wasserstein_assignment(a, b, p);
            const double brute = brute_force_wp(a, b, p);
            REQUIRE(exact == Catch::Approx(brute).margin(1e-12));
        }
    }
}

TEST_CASE("assignment distance basics") {
    const auto a = random_ens(6, 3, 42);
    cbo::Ensemble perm = a;
    for (std::size_t i = 0; i < a.n; ++i)
        for (std::size_t j = 0; j < a.dim; ++j)
            perm.points[i * a.dim + j] =
                a.points[(a.n - 1 - i) * a.dim + j];
    CHECK(cbo::wasserstein_assignment(a, perm, 2.0) <= 1e-15);

    const auto x = make_ens(2, {1.0, 2.0});
    const auto y = make_ens(2, {4.0, 6.0});
    CHECK(cbo::wasserstein_assignment(x, y, 2.0) ==
          Catch::Approx(5.0).epsilon(1e-14));

    // 1-d agreement with the monotone coupling
    const auto u = random_ens(16, 1, 7);
    const auto v = random_ens(16, 1, 8);
    CHECK(cbo::wasserstein_assignment(u, v, 2.0) ==
          Catch::Approx(cbo::wasserstein_1d(u.points, v.points, 2.0))
              .margin(1e-12));

    cbo::Ensemble big;
    big.n = 600;
    big.dim = 1;
    big.points.assign(600, 0.0);
    CHECK_THROWS_AS(cbo::wasserstein_assignment(big, big, 2.0),
                    cbo::UsageError);
    CHECK_THROWS_AS(cbo::wasserstein_assignment(x, make_ens(1, {1.0, 2.0}),
                                                2.0),
                    cbo::UsageError);
}

TEST_CASE("distance to the origin mass equals the moment") {
    CHECK(cbo::wasserstein_to_dirac0(make_ens(1, {3.0, 4.0}), 2.0) ==
          Catch::Approx(std::sqrt(12.5)).epsilon(1e-14));
    CHECK(cbo::wasserstein_to_dirac0(make_ens(2, {1.0, 0.0}), 5.0) ==
          Catch::Approx(1.0).epsilon(1e-14));
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto e = random_ens(1 + seed % 20, 1 + seed % 4, 300 + seed);
        for (double p : {1.0, 2.0, 4.0})
            REQUIRE(std::abs(cbo::moment_p(e, p) -
                             cbo::wasserstein_to_dirac0(e, p)) <= 1e-12);
    }
}

TEST_CASE("cutoff branches, midpoint, and slope") {
    const double R = 3.0;
    CHECK(cbo::cutoff_eta(R - 0.3, R) == 1.0);
    CHECK(cbo::cutoff_eta(R, R) == 1.0);
    CHECK(cbo::cutoff_eta(R + 1.0, R) == 0.0);
    CHECK(cbo::cutoff_eta(R + 1.7, R) == 0.0);
    CHECK(cbo::cutoff_eta(R + 0.5, R) == 0.5);
    CHECK_THROWS_AS(cbo::cutoff_eta(1.0, -2.0), cbo::UsageError);
    CHECK_THROWS_AS(cbo::cutoff_eta(-1.0, 2.0), cbo::UsageError);

    double prev = 2.0;
    double steepest = 0.0;
    for (int i = 0; i <= 5000; ++i) {
        const double z = (R + 2.0) * i / 5000.0;
        const double val = cbo::cutoff_eta(z, R);
        CHECK(val <= prev + 1e-15);
        if (i > 0)
            steepest = std::max(steepest,
                                (prev - val) / ((R + 2.0) / 5000.0));
        prev = val;
    }
    CHECK(steepest <= cbo::cutoff_lipschitz + 1e-9);
    // the bound is attained at the midpoint
    const double h = 1e-6;
    const double mid_slope =
        (cbo::cutoff_eta(R + 0.5 - h, R) - cbo::cutoff_eta(R + 0.5 + h, R)) /
        (2.0 * h);
    CHECK(mid_slope == Catch::Approx(cbo::cutoff_lipschitz).epsilon(1e-6));
}

TEST_CASE("truncation factor reads the moment") {
    const cbo::TruncationConfig cfg{2.0, 2.0};
    CHECK(cbo::truncation_phi(make_ens(1, {1.0, -1.0}), cfg) == 1.0);
    CHECK(cbo::truncation_phi(make_ens(1, {4.0, -4.0}), cfg) == 0.0);
    // moment exactly R + 0.5
    CHECK(cbo::truncation_phi(make_ens(1, {2.5, -2.5}), cfg) == 0.5);
    CHECK_THROWS_AS((cbo::TruncationConfig{-1.0, 2.0}).validate(),
                    cbo::UsageError);
    CHECK_THROWS_AS((cbo::TruncationConfig{1.0, 0.0}).validate(),
                    cbo::UsageError);
}

TEST_CASE("path distance: examples and properties") {
    const std::size_t n = 5, dim = 2, K = 4;
    cbo::MeasureCurve a;
    for (std::size_t k = 0; k <= K; ++k) {
        a.times.push_back(0.5 * static_cast<double>(k));
        a.frames.push_back(random_ens(n, dim, 500 + k));
    }
    CHECK(cbo::path_distance_upper(a, a, 2.0) == 0.0);

    // constant shift: every pathwise sup is the shift norm
    cbo::MeasureCurve b = a;
    for (auto& f : b.frames)
        for (std::size_t i = 0; i < f.n; ++i) {
            f.points[i * dim] += 3.0;
            f.points[i * dim + 1] += 4.0;
        }
    for (std::size_t k = 0; k <= K; ++k)
        CHECK(cbo::path_distance_upper(a, b, 2.0, k) ==
              Catch::Approx(5.0).epsilon(1e-14));

    // monotone in the frame index and dominating the exact frame distance
    cbo::MeasureCurve c;
    for (std::size_t k = 0; k <= K; ++k) {
        c.times.push_back(0.5 * static_cast<double>(k));
        c.frames.push_back(random_ens(n, dim, 900 + k));
    }
    double prev = 0.0;
    for (std::size_t k = 0; k <= K; ++k) {
        const double cur = cbo::path_distance_upper(a, c, 2.0, k);
        CHECK(cur >= prev);
        CHECK(cur >= cbo::wasserstein_assignment(a.frames[k], c.frames[k],
                                                 2.0) -
                         1e-12);
        prev = cur;
    }

    cbo::MeasureCurve shifted_grid = c;
    shifted_grid.times[1] += 1e-3;
    CHECK_THROWS_AS(cbo::path_distance_upper(a, shifted_grid, 2.0),
                    cbo::UsageError);
    CHECK_THROWS_AS(cbo::path_distance_upper(a, c, 2.0, K + 1),
                    cbo::UsageError);
}

TEST_CASE("initial samplers are reproducible and honor their law") {
    const auto box = cbo::uniform_box_sampler(-2.0, 2.0);
    const auto e1 = cbo::sample_ensemble(500, 2, box, 99);
    const auto e2 = cbo::sample_ensemble(500, 2, box, 99);
    CHECK(e1.points == e2.points);
    const auto e3 = cbo::sample_ensemble(500, 2, box, 100);
    CHECK(e1.points != e3.points);
    for (double v : e1.points) {
        REQUIRE(v >= -2.0);
        REQUIRE(v <= 2.0);
    }
    // prefix stability: a larger draw extends the smaller one
    const auto e4 = cbo::sample_ensemble(200, 2, box, 99);
    CHECK(std::equal(e4.points.begin(), e4.points.end(), e1.points.begin()));

    const auto gauss = cbo::gaussian_sampler(1.0, 0.5);
    const auto g = cbo::sample_ensemble(4000, 1, gauss, 3);
    const double mean =
        std::accumulate(g.points.begin(), g.points.end(), 0.0) / 4000.0;
    CHECK(std::abs(mean - 1.0) < 0.05);

    const auto pt = cbo::point_sampler({1.5, -0.5});
    const auto pe = cbo::sample_ensemble(3, 2, pt, 7);
    CHECK(pe.points == std::vector<double>{1.5, -0.5, 1.5, -0.5, 1.5, -0.5});

    CHECK_THROWS_AS(cbo::uniform_box_sampler(2.0, 2.0), cbo::UsageError);
    CHECK_THROWS_AS(cbo::gaussian_sampler(0.0, 0.0), cbo::UsageError);
}
