#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "cbo/errors.hpp"
#include "cbo/measure.hpp"
#include "cbo/objective.hpp"

namespace cbo {

// Burkholder-Davis-Gundy constant c_p = [p^{p+1} (p-1)^{1-p} / 2]^{p/2};
// the Ito argument behind it needs p >= 2.
inline double bdg_constant(double p) {
    if (!(p >= 2.0)) throw UsageError("bdg_constant: p >= 2");
    if (p == 2.0) return 4.0;
    return std::pow(0.5 * std::pow(p, p + 1.0) * std::pow(p - 1.0, 1.0 - p),
                    p / 2.0);
}

struct MomentBoundConstants {
    double C_1 = 0.0;
    double C_0 = 1.0;
};

// Growth constants of the p-th moment under the truncated dynamics:
// C_1 = lambda p (1 + C_M) + p (p - 2 + d) L_S^2 (1 + C_M^2),
// C_0 = exp(C_1 T / p).
inline MomentBoundConstants moment_bound_constants(double lambda, double p,
                                                   double d, double L_S,
                                                   double C_M, double T) {
    if (!(p >= 2.0)) throw UsageError("moment_bound_constants: p >= 2");
    if (lambda < 0.0 || d < 1.0 || L_S < 0.0 || C_M < 0.0 || T < 0.0)
        throw UsageError("moment_bound_constants: negative argument");
    MomentBoundConstants out;
    out.C_1 = lambda * p * (1.0 + C_M) +
              p * (p - 2.0 + d) * L_S * L_S * (1.0 + C_M * C_M);
    out.C_0 = std::exp(out.C_1 * T / p);
    return out;
}

struct ContractionConstants {
    double L_v_tilde = 0.0;
    double L_sigma_tilde = 0.0;
    double K_0 = 0.0;
    double K = 0.0;      // exp(K_0 T) K_0; +inf when it overflows
    double log_K = 0.0;  // K_0 T + log K_0, always finite unless K_0 = 0
    double picard_n = 1.0;  // smallest n with ((K T)^n / n!)^{1/p} < 1
};

namespace detail {

// Smallest integer n >= 1 with n log(KT) - lgamma(n+1) < 0, in log domain so
// huge K is handled; returns +inf when n itself is not representable.
inline double picard_contraction_steps(double log_KT) {
    if (log_KT < 0.0) return 1.0;
    auto negative = [log_KT](double n) {
        return n * log_KT - std::lgamma(n + 1.0) < 0.0;
    };
    // The crossing sits near exp(log_KT + 1); past double range, report inf.
    if (log_KT + 1.0 > 700.0)
        return std::numeric_limits<double>::infinity();
    double hi = 2.0;
    while (!negative(hi)) {
        hi *= 2.0;
        if (hi > 9e15) return std::exp(log_KT + 1.0);
    }
    double lo = hi / 2.0;  // f(lo) >= 0 > f(hi); f < 0 is monotone past the peak
    while (hi - lo > 1.0) {
        const double mid = std::floor((lo + hi) / 2.0);
        (negative(mid) ? hi : lo) = mid;
    }
    return hi;
}

} // namespace detail

// Lipschitz constants of the truncated fields and the Picard contraction
// constants built from them:
//   L_v = max(lambda (L_M_R1 + C_M (R+1) L_phi_R), lambda)
//   L_sigma = L_S L_v / lambda
//   K_0 = 2^{p-1} ((2T)^{p-1} L_v^p + 2^{p-1} c_p T^{(p-2)/2} L_sigma^p)
//   K = exp(K_0 T) K_0   (K_0 taken at t = T, the conservative choice)
// L_M_R1 is the consensus-map Lipschitz constant on the R+1 moment ball and
// C_M the sublinearity constant; both are caller-supplied estimates.
inline ContractionConstants contraction_constants(double lambda, double L_S,
                                                  double L_M_R1,
                                                  double L_phi_R, double C_M,
                                                  double R, double p,
                                                  double T) {
    if (!(lambda > 0.0))
        throw UsageError("contraction_constants: lambda > 0");
    if (!(p >= 2.0)) throw UsageError("contraction_constants: p >= 2");
    if (L_S < 0.0 || L_M_R1 < 0.0 || L_phi_R < 0.0 || C_M < 0.0 || R < 0.0 ||
        T < 0.0)
        throw UsageError("contraction_constants: negative argument");

    ContractionConstants out;
    out.L_v_tilde =
        std::max(lambda * (L_M_R1 + C_M * (R + 1.0) * L_phi_R), lambda);
    out.L_sigma_tilde = L_S / lambda * out.L_v_tilde;

    const double c_p = bdg_constant(p);
    out.K_0 = std::pow(2.0, p - 1.0) *
              (std::pow(2.0 * T, p - 1.0) * std::pow(out.L_v_tilde, p) +
               std::pow(2.0, p - 1.0) * c_p * std::pow(T, (p - 2.0) / 2.0) *
                   std::pow(out.L_sigma_tilde, p));
    if (out.K_0 > 0.0) {
        out.log_K = out.K_0 * T + std::log(out.K_0);
        out.K = std::exp(out.K_0 * T) * out.K_0;
        out.picard_n = T > 0.0
                           ? detail::picard_contraction_steps(out.log_K +
                                                              std::log(T))
                           : 1.0;
    } else {
        out.K = 0.0;
        out.log_K = -std::numeric_limits<double>::infinity();
        out.picard_n = 1.0;
    }
    return out;
}

// Everything the error estimates need, bundled for reporting.
struct ConstantsReport {
    double p_M = 0.0;
    double c_p = 0.0;
    double L_v_tilde = 0.0;
    double L_sigma_tilde = 0.0;
    double C_1 = 0.0;
    double C_0 = 1.0;
    double K_0 = 0.0;
    double K = 0.0;
    double log_K = 0.0;
    double picard_n = 1.0;
};

inline ConstantsReport make_constants_report(const ObjectiveParams& obj,
                                             double lambda, double L_S,
                                             double C_M, double L_M_R1,
                                             double L_phi_R, double R,
                                             double p, double d, double T) {
    ConstantsReport rep;
    rep.p_M = critical_exponent(obj.s, obj.ell);
    rep.c_p = bdg_constant(p);
    const auto mb = moment_bound_constants(lambda, p, d, L_S, C_M, T);
    rep.C_1 = mb.C_1;
    rep.C_0 = mb.C_0;
    const auto cc =
        contraction_constants(lambda, L_S, L_M_R1, L_phi_R, C_M, R, p, T);
    rep.L_v_tilde = cc.L_v_tilde;
    rep.L_sigma_tilde = cc.L_sigma_tilde;
    rep.K_0 = cc.K_0;
    rep.K = cc.K;
    rep.log_K = cc.log_K;
    rep.picard_n = cc.picard_n;
    return rep;
}

} // namespace cbo
