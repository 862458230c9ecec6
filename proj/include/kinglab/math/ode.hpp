#ifndef KINGLAB_MATH_ODE_HPP
#define KINGLAB_MATH_ODE_HPP

#include <array>
#include <cmath>
#include <vector>

namespace kinglab::math {

template <std::size_t N>
using State = std::array<double, N>;

namespace detail {
template <std::size_t N>
State<N> axpy(const State<N>& y, double a, const State<N>& d) {
    State<N> out;
    for (std::size_t i = 0; i < N; ++i) out[i] = y[i] + a * d[i];
    return out;
}
} // namespace detail

/// One accepted step of an adaptive integration, with derivatives at both
/// ends so that a cubic Hermite dense output is available on [t0, t1].
template <std::size_t N>
struct OdeStep {
    double t0, t1;
    State<N> y0, y1;
    State<N> f0, f1;

    /// cubic Hermite evaluation of component k at t in [t0, t1]
    double eval(std::size_t k, double t) const {
        const double h = t1 - t0;
        const double s = (t - t0) / h;
        const double s2 = s * s, s3 = s2 * s;
        const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
        const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
        return h00 * y0[k] + h10 * h * f0[k] + h01 * y1[k] + h11 * h * f1[k];
    }
};

/// Dormand-Prince 5(4) embedded Runge-Kutta with PI step control.
/// rhs(t, y) -> State<N>. Integrates from t0 to t_end (t_end > t0),
/// appending every accepted step to `steps`. The `stop` predicate is
/// probed after each accepted step; if it returns true integration halts
/// (the event is then located by the caller on the last stored step).
template <std::size_t N, class Rhs, class Stop>
bool integrate_dp45(Rhs&& rhs, double t0, State<N> y0, double t_end, double rtol,
                    double atol, double h_max, std::vector<OdeStep<N>>& steps,
                    Stop&& stop, std::size_t max_steps = 2000000) {
    using detail::axpy;
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                            a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    double t = t0;
    State<N> y = y0;
    State<N> k1 = rhs(t, y);
    double h = std::fmin(h_max, (t_end - t0) * 1e-3);
    if (h <= 0) h = (t_end - t0) * 1e-3;

    for (std::size_t n = 0; n < max_steps && t < t_end; ++n) {
        if (t + h > t_end) h = t_end - t;
        State<N> k2 = rhs(t + c2 * h, axpy(y, h * a21, k1));
        State<N> y3{};
        for (std::size_t i = 0; i < N; ++i) y3[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
        State<N> k3 = rhs(t + c3 * h, y3);
        State<N> y4{};
        for (std::size_t i = 0; i < N; ++i)
            y4[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        State<N> k4 = rhs(t + c4 * h, y4);
        State<N> y5{};
        for (std::size_t i = 0; i < N; ++i)
            y5[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        State<N> k5 = rhs(t + c5 * h, y5);
        State<N> y6{};
        for (std::size_t i = 0; i < N; ++i)
            y6[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        State<N> k6 = rhs(t + h, y6);
        State<N> ynew{};
        for (std::size_t i = 0; i < N; ++i)
            ynew[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        State<N> k7 = rhs(t + h, ynew);

        double err = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double ei = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                                   e6 * k6[i] + e7 * k7[i]);
            const double sc = atol + rtol * std::fmax(std::abs(y[i]), std::abs(ynew[i]));
            const double r = ei / sc;
            err += r * r;
        }
        err = std::sqrt(err / N);

        if (err <= 1.0) {
            steps.push_back(OdeStep<N>{t, t + h, y, ynew, k1, k7});
            t += h;
            y = ynew;
            k1 = k7;  // FSAL
            if (stop(t, y)) return true;
        }
        const double fac = std::fmin(5.0, std::fmax(0.2, 0.9 * std::pow(err > 0 ? err : 1e-10, -0.2)));
        h = std::fmin(h * fac, h_max);
        if (!(h > 0) || t + h == t) break;
    }
    return false;
}

/// classical fixed-step RK4 for a 2d Hamiltonian-style system
/// rhs(x) -> State<2>
template <class Rhs>
State<2> rk4_march(Rhs&& rhs, State<2> y, double total, int nsteps) {
    const double h = total / nsteps;
    for (int i = 0; i < nsteps; ++i) {
        const State<2> k1 = rhs(y);
        const State<2> k2 = rhs({y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]});
        const State<2> k3 = rhs({y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]});
        const State<2> k4 = rhs({y[0] + h * k3[0], y[1] + h * k3[1]});
        y[0] += h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
        y[1] += h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
    }
    return y;
}

} // namespace kinglab::math

#endif
