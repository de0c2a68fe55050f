#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cbo/constants.hpp"

TEST_CASE("bdg constant") {
    CHECK(cbo::bdg_constant(2.0) == 4.0);
    const double want = (512.0 / 27.0) * (512.0 / 27.0);
    CHECK(cbo::bdg_constant(4.0) == Catch::Approx(want).epsilon(1e-6));
    for (double p = 2.0; p < 6.0; p += 1.0)
        CHECK(cbo::bdg_constant(p + 1.0) > cbo::bdg_constant(p));
    CHECK_THROWS_AS(cbo::bdg_constant(1.5), cbo::UsageError);
}

TEST_CASE("moment growth constants by substitution") {
    const auto a = cbo::moment_bound_constants(1.0, 2.0, 2.0, 0.0, 1.0, 1.0);
    CHECK(a.C_1 == Catch::Approx(4.0).margin(1e-14));
    CHECK(a.C_0 == Catch::Approx(std::exp(2.0)).epsilon(1e-14));

    const auto b = cbo::moment_bound_constants(0.0, 2.0, 2.0, 1.0, 0.0, 1.0);
    CHECK(b.C_1 == Catch::Approx(4.0).margin(1e-14));
    CHECK(b.C_0 == Catch::Approx(std::exp(2.0)).epsilon(1e-14));

    // affine in lambda with slope p (1 + C_M)
    const double base =
        cbo::moment_bound_constants(0.0, 2.0, 3.0, 0.5, 2.0, 1.0).C_1;
    for (double lam : {0.5, 1.0, 4.0}) {
        const double c1 =
            cbo::moment_bound_constants(lam, 2.0, 3.0, 0.5, 2.0, 1.0).C_1;
        CHECK(c1 == Catch::Approx(base + lam * 2.0 * 3.0).margin(1e-12));
    }

    CHECK(cbo::moment_bound_constants(1.3, 4.0, 3.0, 0.9, 2.0, 0.0).C_0 ==
          1.0);
    CHECK_THROWS_AS(cbo::moment_bound_constants(1.0, 1.0, 2.0, 0.0, 1.0, 1.0),
                    cbo::UsageError);
}

TEST_CASE("contraction constants by substitution") {
    // L_S = 0 kills the diffusion Lipschitz constant
    const auto a =
        cbo::contraction_constants(2.0, 0.0, 1.0, 1.875, 1.0, 3.0, 2.0, 1.0);
    CHECK(a.L_sigma_tilde == 0.0);
    CHECK(a.L_v_tilde ==
          Catch::Approx(2.0 * (1.0 + 4.0 * 1.875)).margin(1e-12));

    // C_M = 0 and L_M <= 1 collapse the max to lambda
    const auto b =
        cbo::contraction_constants(1.5, 1.0, 0.5, 1.875, 0.0, 3.0, 2.0, 1.0);
    CHECK(b.L_v_tilde == Catch::Approx(1.5).margin(1e-14));

    // full formula, hand-evaluated at p = 2, T = 1
    const double lambda = 1.0, L_S = 1.0, L_M = 1.0, L_phi = 1.0, C_M = 1.0,
                 R = 1.0, T = 1.0;
    const auto c =
        cbo::contraction_constants(lambda, L_S, L_M, L_phi, C_M, R, 2.0, T);
    const double lv = 3.0;  // max(1 * (1 + 1*2*1), 1)
    const double ls = 3.0;  // 1/1 * 3
    const double k0 = 2.0 * (2.0 * lv * lv + 2.0 * 4.0 * ls * ls);
    CHECK(c.L_v_tilde == Catch::Approx(lv).margin(1e-12));
    CHECK(c.L_sigma_tilde == Catch::Approx(ls).margin(1e-12));
    CHECK(c.K_0 == Catch::Approx(k0).margin(1e-9));
    CHECK(c.log_K == Catch::Approx(k0 * T + std::log(k0)).epsilon(1e-12));

    CHECK_THROWS_AS(
        cbo::contraction_constants(0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 1.0),
        cbo::UsageError);
    CHECK_THROWS_AS(
        cbo::contraction_constants(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.5, 1.0),
        cbo::UsageError);
}

TEST_CASE("picard step count satisfies the contraction inequality") {
    auto value = [](double K, double T, double n, double p) {
        // ((K T)^n / n!)^{1/p} in log domain
        return (n * std::log(K * T) - std::lgamma(n + 1.0)) / p;
    };
    // small K: brute-force the smallest n and compare
    for (double KT : {0.5, 1.0, 2.0, 7.3, 40.0}) {
        const double got = cbo::detail::picard_contraction_steps(std::log(KT));
        double expect = 1.0;
        while (!(value(KT, 1.0, expect, 2.0) < 0.0)) expect += 1.0;
        CHECK(got == expect);
    }

    // the reported n is feasible and minimal for a modest constant set
    const auto c =
        cbo::contraction_constants(1.0, 0.0, 1.0, 0.0, 0.0, 0.1, 2.0, 0.5);
    REQUIRE(std::isfinite(c.picard_n));
    const double n = c.picard_n;
    CHECK(value(c.K, 0.5, n, 2.0) < 0.0);
    if (n > 1.0) CHECK(value(c.K, 0.5, n - 1.0, 2.0) >= 0.0);

    // gigantic constants overflow K but still report via logs
    const auto big =
        cbo::contraction_constants(1.0, 1.0, 1.0, 1.875, 1.0, 1e6, 2.0, 2.0);
    CHECK(std::isinf(big.K));
    CHECK(std::isfinite(big.log_K));
    CHECK(std::isinf(big.picard_n));
}

TEST_CASE("aggregate report") {
    cbo::ObjectiveParams op{.s = 1.0, .ell = 2.0, .L_f = 1.0};
    const auto rep = cbo::make_constants_report(op, 1.0, 1.0, 1.0, 1.0, 1.875,
                                                4.0, 2.0, 2.0, 2.0);
    CHECK(rep.p_M == 1.0);
    CHECK(rep.c_p == 4.0);
    const auto mb = cbo::moment_bound_constants(1.0, 2.0, 2.0, 1.0, 1.0, 2.0);
    CHECK(rep.C_1 == mb.C_1);
    CHECK(rep.C_0 == mb.C_0);
    const auto cc =
        cbo::contraction_constants(1.0, 1.0, 1.0, 1.875, 1.0, 4.0, 2.0, 2.0);
    CHECK(rep.K_0 == cc.K_0);
    CHECK(rep.log_K == cc.log_K);
    CHECK(rep.picard_n == cc.picard_n);

    cbo::ObjectiveParams bounded{.s = 0.5, .ell = 0.0, .L_f = 1.0};
    const auto rep2 = cbo::make_constants_report(bounded, 1.0, 0.5, 1.0, 1.0,
                                                 1.875, 4.0, 2.0, 2.0, 2.0);
    CHECK(rep2.p_M == 2.5);
}
