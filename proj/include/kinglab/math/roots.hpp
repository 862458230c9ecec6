#ifndef KINGLAB_MATH_ROOTS_HPP
#define KINGLAB_MATH_ROOTS_HPP

#include <cmath>
#include <limits>
#include <stdexcept>

#include "kinglab/errors.hpp"

namespace kinglab::math {

/// Brent's method on a bracketing interval [a,b] with f(a)*f(b) <= 0.
/// Terminates when the bracket width falls below xtol (absolute).
template <class F>
double brent(F&& f, double a, double b, double fa, double fb, double xtol,
             int max_iter = 200) {
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if (fa * fb > 0.0)
        throw BracketFailure("brent: endpoints do not bracket a root");

    double c = a, fc = fa;
    double d = b - a, e = d;
    for (int iter = 0; iter < max_iter; ++iter) {
        if (std::abs(fc) < std::abs(fb)) {
            a = b; b = c; c = a;
            fa = fb; fb = fc; fc = fa;
        }
        const double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * xtol;
        const double xm = 0.5 * (c - b);
        if (std::abs(xm) <= tol1 || fb == 0.0) return b;
        if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
            // inverse quadratic interpolation / secant
            const double s = fb / fa;
            double p, q;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                const double qq = fa / fc, rr = fb / fc;
                p = s * (2.0 * xm * qq * (qq - rr) - (b - a) * (rr - 1.0));
                q = (qq - 1.0) * (rr - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q;
            p = std::abs(p);
            if (2.0 * p < std::fmin(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
                e = d; d = p / q;
            } else {
                d = xm; e = d;
            }
        } else {
            d = xm; e = d;
        }
        a = b; fa = fb;
        b += (std::abs(d) > tol1) ? d : (xm > 0 ? tol1 : -tol1);
        fb = f(b);
        if ((fb > 0.0) == (fc > 0.0)) { c = a; fc = fa; d = b - a; e = d; }
    }
    return b;
}

template <class F>
double brent(F&& f, double a, double b, double xtol, int max_iter = 200) {
    return brent(f, a, b, f(a), f(b), xtol, max_iter);
}

/// Newton iteration safeguarded by a bracketing interval; falls back to
/// bisection whenever the Newton step leaves the bracket or stalls.
/// fdf must return the pair (f(x), f'(x)); `increasing` gives the sign
/// orientation of f across [lo, hi].
template <class FDF>
double newton_bracketed(FDF&& fdf, double lo, double hi, double x0, double xtol,
                        bool increasing, int max_iter = 100) {
    double x = std::fmin(std::fmax(x0, lo), hi);
    for (int i = 0; i < max_iter; ++i) {
        auto [fx, dfx] = fdf(x);
        if (fx == 0.0) return x;
        if ((fx > 0.0) == increasing) hi = x; else lo = x;
        double step = (dfx != 0.0) ? -fx / dfx : 0.0;
        double xn = x + step;
        if (!(xn > lo && xn < hi) || step == 0.0) xn = 0.5 * (lo + hi);
        if (std::abs(xn - x) <= xtol) return xn;
        x = xn;
    }
    return x;
}

} // namespace kinglab::math

#endif
