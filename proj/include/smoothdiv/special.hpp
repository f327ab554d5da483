#pragma once

#include <cmath>
#include <functional>
#include <numbers>

#include "smoothdiv/types.hpp"

namespace smoothdiv {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

inline double normal_survival(double x) { return 0.5 * std::erfc(x * std::numbers::sqrt2 / 2.0); }

// Survival function of the chi-squared law with `dof` degrees of freedom.
// Built from the two base cases and the two-step recursion
//   Q_{k+2}(x) = Q_k(x) + (x/2)^{k/2} e^{-x/2} / Gamma(k/2 + 1).
inline double chi_squared_survival(int dof, double x) {
    if (dof < 1) throw config_error("chi-squared degrees of freedom must be >= 1");
    if (!(x > 0.0)) return 1.0;
    double q = (dof % 2) ? std::erfc(std::sqrt(0.5 * x)) : std::exp(-0.5 * x);
    for (int k = (dof % 2) ? 1 : 2; k + 2 <= dof; k += 2)
        q += std::exp(0.5 * k * std::log(0.5 * x) - 0.5 * x - std::lgamma(0.5 * k + 1.0));
    return q < 1.0 ? q : 1.0;
}

// Inverse of the chi-squared survival function: smallest x with Q_dof(x) <= p.
inline double chi_squared_isf(int dof, double p) {
    if (!(p > 0.0) || !(p < 1.0))
        throw config_error("chi-squared inverse survival needs p in (0, 1)");
    double hi = 1.0;
    while (chi_squared_survival(dof, hi) > p) {
        hi *= 2.0;
        if (hi > 1e12) throw numeric_error("chi-squared inverse survival did not bracket");
    }
    double lo = 0.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (chi_squared_survival(dof, mid) > p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

namespace detail {

inline double simpson_panel(double fa, double fm, double fb, double h) {
    return h / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a,
                                   double b, double fa, double fm, double fb,
                                   double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = simpson_panel(fa, flm, fm, m - a);
    const double right = simpson_panel(fm, frm, fb, b - m);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

// Adaptive Simpson quadrature on [a, b] with absolute tolerance `tol`.
inline double adaptive_simpson(const std::function<double(double)>& f, double a,
                               double b, double tol, int max_depth = 28) {
    if (!(b > a)) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    return detail::adaptive_simpson_rec(f, a, b, fa, fm, fb,
                                        detail::simpson_panel(fa, fm, fb, b - a), tol,
                                        max_depth);
}

}  // namespace smoothdiv
