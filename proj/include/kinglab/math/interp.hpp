#ifndef KINGLAB_MATH_INTERP_HPP
#define KINGLAB_MATH_INTERP_HPP

#include <cmath>
#include <cstddef>
#include <vector>

namespace kinglab::math {

/// C1 cubic Hermite interpolant on a uniform grid, with the Fritsch-Carlson
/// slope limiter applied so that monotone data yield a monotone interpolant.
class MonotoneCubic {
public:
    MonotoneCubic() = default;

    MonotoneCubic(double x0, double dx, std::vector<double> y, std::vector<double> dy)
        : x0_(x0), dx_(dx), y_(std::move(y)), dy_(std::move(dy)) {
        limit_slopes();
    }

    double x_front() const { return x0_; }
    double x_back() const { return x0_ + dx_ * (y_.size() - 1); }
    std::size_t size() const { return y_.size(); }

    double operator()(double x) const {
        const auto [i, s] = locate(x);
        const double s2 = s * s, s3 = s2 * s;
        return (2 * s3 - 3 * s2 + 1) * y_[i] + (s3 - 2 * s2 + s) * dx_ * dy_[i] +
               (-2 * s3 + 3 * s2) * y_[i + 1] + (s3 - s2) * dx_ * dy_[i + 1];
    }

    double derivative(double x) const {
        const auto [i, s] = locate(x);
        const double s2 = s * s;
        return ((6 * s2 - 6 * s) * y_[i] + (3 * s2 - 4 * s + 1) * dx_ * dy_[i] +
                (-6 * s2 + 6 * s) * y_[i + 1] + (3 * s2 - 2 * s) * dx_ * dy_[i + 1]) / dx_;
    }

private:
    std::pair<std::size_t, double> locate(double x) const {
        double u = (x - x0_) / dx_;
        if (u < 0) u = 0;
        const double last = static_cast<double>(y_.size() - 1);
        if (u > last) u = last;
        std::size_t i = static_cast<std::size_t>(u);
        if (i >= y_.size() - 1) i = y_.size() - 2;
        return {i, u - static_cast<double>(i)};
    }

    void limit_slopes() {
        // Fritsch-Carlson: keep (alpha, beta) inside the circle of radius 3
        for (std::size_t i = 0; i + 1 < y_.size(); ++i) {
            const double sec = (y_[i + 1] - y_[i]) / dx_;
            if (sec == 0.0) continue;
            const double a = dy_[i] / sec, b = dy_[i + 1] / sec;
            if (a < 0) dy_[i] = 0;
            if (b < 0) dy_[i + 1] = 0;
            const double s = a * a + b * b;
            if (s > 9.0) {
                const double t = 3.0 / std::sqrt(s);
                dy_[i] = t * a * sec;
                dy_[i + 1] = t * b * sec;
            }
        }
    }

    double x0_ = 0, dx_ = 1;
    std::vector<double> y_, dy_;
};

} // namespace kinglab::math

#endif
