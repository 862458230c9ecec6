#ifndef KINGLAB_PERTURBATION_HPP
#define KINGLAB_PERTURBATION_HPP

#include <array>
#include <atomic>
#include <cmath>
#include <utility>
#include <vector>

#include "kinglab/ensemble.hpp"
#include "kinglab/errors.hpp"
#include "kinglab/functionals.hpp"
#include "kinglab/king_model.hpp"
#include "kinglab/math/parallel.hpp"
#include "kinglab/math/rng.hpp"

namespace kinglab {

/// 4th-order central difference of a 1d slice
template <class F>
double diff4(F&& f, double x, double h) {
    return (8.0 * (f(x + h) - f(x - h)) - (f(x + 2 * h) - f(x - 2 * h))) / (12.0 * h);
}

/// Wraps a plain callable with 4th-order finite-difference partials so it can
/// enter brackets and reconstructions next to closed-form generators.
template <class F>
struct WithNumericPartials {
    F f;
    double hr, hw;

    double operator()(double r, double w, double L) const { return f(r, w, L); }
    void partials(double r, double w, double L, double& dr, double& dw) const {
        dr = diff4([&](double x) { return f(x, w, L); }, r, hr);
        dw = diff4([&](double x) { return f(r, x, L); }, w, hw);
    }
};

template <class F>
WithNumericPartials<F> with_numeric_partials(F f, double hr, double hw) {
    return WithNumericPartials<F>{std::move(f), hr, hw};
}

/// Reduced Lie-Poisson bracket of two spherically symmetric functions,
/// {a,b} = da/dr db/dw - da/dw db/dr, with L a passive parameter.
/// Numeric route: 4th-order central differences.
template <class A, class B>
double reduced_bracket(A&& a, B&& b, double r, double w, double L,
                       double hr, double hw) {
    const double ar = diff4([&](double x) { return a(x, w, L); }, r, hr);
    const double aw = diff4([&](double x) { return a(r, x, L); }, w, hw);
    const double br = diff4([&](double x) { return b(x, w, L); }, r, hr);
    const double bw = diff4([&](double x) { return b(r, x, L); }, w, hw);
    return ar * bw - aw * br;
}

/// Generator Hamiltonian family
///
///   H(r,w,L) = a * chi(E) * w * p(r,L),    p = (r/R) (c0 + c1 r/R + c2 (r/R)^2 + c3 L/Lref)
///
/// with chi a C^2 smootherstep bump in the particle energy that vanishes for
/// E >= E0 - eps. The explicit factors give H odd in w, support strictly
/// inside the steady-state interior, and closed-form derivatives; the r
/// factor in p keeps mu = H/(rw) smooth through the axis.
class Generator {
public:
    Generator(const KingModel& model, double amplitude, std::array<double, 4> coeffs,
              double eps_fraction = 0.05, double ramp_fraction = 0.4)
        : model_(&model), amp_(amplitude), c_(coeffs) {
        eps_ = eps_fraction * model.W0;
        E_edge_ = model.E0 - eps_;
        ramp_ = ramp_fraction * (model.W0 - eps_);
        Lref_ = characteristic_L(model);
    }

    static double characteristic_L(const KingModel& model) { return model.M * model.R; }

    const KingModel& model() const { return *model_; }
    double amplitude() const { return amp_; }
    double eps_margin() const { return eps_; }
    const std::array<double, 4>& coeffs() const { return c_; }

    double energy(double r, double w, double L) const {
        const double r2 = r > 0 ? r * r : 1e-300;
        return 0.5 * (w * w + L / r2) + model_->potential_at(r);
    }

    double value(double r, double w, double L) const {
        const double E = energy(r, w, L);
        if (E >= E_edge_) return 0.0;
        return amp_ * chi(E) * w * p(r, L);
    }

    double operator()(double r, double w, double L) const { return value(r, w, L); }

    /// dH/dr and dH/dw (closed form)
    void partials(double r, double w, double L, double& Hr, double& Hw) const {
        const double E = energy(r, w, L);
        if (E >= E_edge_) { Hr = 0.0; Hw = 0.0; return; }
        const double x = chi(E), dx = dchi(E);
        const double Er = model_->dpotential_value_at(r) - L / (r * r * r);
        const double pv = p(r, L), pr = dp_dr(r, L);
        Hr = amp_ * (dx * Er * w * pv + x * w * pr);
        Hw = amp_ * (dx * w * w * pv + x * pv);
    }

    /// mu = H/(rw): smooth by construction of the family
    double mu(double r, double w, double L) const {
        const double E = energy(r, w, L);
        if (E >= E_edge_) return 0.0;
        return amp_ * chi(E) * p_tilde(r, L);
    }

    void mu_partials(double r, double w, double L, double& mr, double& mw) const {
        const double E = energy(r, w, L);
        if (E >= E_edge_) { mr = 0.0; mw = 0.0; return; }
        const double x = chi(E), dx = dchi(E);
        const double Er = model_->dpotential_value_at(r) - L / (r * r * r);
        mr = amp_ * (dx * Er * p_tilde(r, L) + x * dp_tilde_dr(r));
        mw = amp_ * dx * w * p_tilde(r, L);
    }

private:
    // the tail below t = 1e-4 (chi ~ 1e-11) is clamped to exact zero so that
    // fields derived from the bump vanish identically outside the support
    // instead of leaving rounding dust along edge orbits
    double chi(double E) const {
        const double t = (E_edge_ - E) / ramp_;
        if (t <= 1e-4) return 0.0;
        if (t >= 1) return 1.0;
        return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
    }
    double dchi(double E) const {
        const double t = (E_edge_ - E) / ramp_;
        if (t <= 1e-4 || t >= 1) return 0.0;
        const double s = t * (1.0 - t);
        return -30.0 * s * s / ramp_;
    }
    double p(double r, double L) const {
        const double x = r / model_->R;
        return x * (c_[0] + c_[1] * x + c_[2] * x * x + c_[3] * L / Lref_);
    }
    double dp_dr(double r, double L) const {
        const double x = r / model_->R;
        return (c_[0] + 2.0 * c_[1] * x + 3.0 * c_[2] * x * x + c_[3] * L / Lref_) / model_->R;
    }
    double p_tilde(double r, double L) const {
        const double x = r / model_->R;
        return (c_[0] + c_[1] * x + c_[2] * x * x + c_[3] * L / Lref_) / model_->R;
    }
    double dp_tilde_dr(double r) const {
        const double x = r / model_->R;
        return (c_[1] + 2.0 * c_[2] * x) / (model_->R * model_->R);
    }

    const KingModel* model_;
    double amp_;
    std::array<double, 4> c_;
    double eps_, E_edge_, ramp_, Lref_;
};

inline Generator make_random_generator(const KingModel& model, math::Rng& rng,
                                       double amplitude = 1.0, double eps_fraction = 0.05) {
    std::array<double, 4> c;
    for (auto& v : c) v = rng.uniform(-1.0, 1.0);
    // keep the family away from accidental near-zero generators
    if (std::abs(c[0]) + std::abs(c[1]) + std::abs(c[2]) < 0.3) c[0] += 1.0;
    return Generator(model, amplitude, c, eps_fraction);
}

/// Bracket with the steady state: g = {f0, h} = -phi0'(E) [w dh/dr + (L/r^3 - U0') dh/dw].
/// The returned field has support inside supp f0 and is even in w when h is odd.
template <class H>
class BracketWithF0 {
public:
    BracketWithF0(const KingModel& model, const H& h) : model_(&model), h_(&h) {}

    double operator()(double r, double w, double L) const {
        if (r <= 0.0) return 0.0;
        const double r2 = r * r;
        const double E = 0.5 * (w * w + L / r2) + model_->potential_at(r);
        if (E >= model_->E0) return 0.0;
        double hr, hw;
        h_->partials(r, w, L, hr, hw);
        const double adv = w * hr + (L / (r2 * r) - model_->dpotential_value_at(r)) * hw;
        return std::exp(model_->E0 - E) * adv;  // -phi0'(E) = e^{E0-E}
    }

private:
    const KingModel* model_;
    const H* h_;
};

template <class H>
BracketWithF0<H> bracket_with_f0(const KingModel& model, const H& h) {
    return BracketWithF0<H>(model, h);
}

/// single-point advection along the generator flow (RK4, fixed steps)
template <class Gen>
std::array<double, 2> flow_point(const Gen& gen, double r, double w, double L, double s,
                                 int nsteps = 256) {
    auto rhs = [&](math::State<2> y) -> math::State<2> {
        double Hr, Hw;
        gen.partials(y[0], y[1], L, Hr, Hw);
        return {Hw, -Hr};
    };
    const auto out = math::rk4_march(rhs, {r, w}, s, nsteps);
    return {out[0], out[1]};
}

/// Pointwise evaluator of the dynamically accessible state f_s: the exact
/// method of characteristics, f_s(z) = f0(Phi_{-s}(z)). Grid-quadrature food
/// for the energy-Casimir functionals without any sampling noise.
template <class Gen>
auto flowed_state_evaluator(const KingModel& model, const Gen& gen, double s,
                            int nsteps = 256) {
    return [&model, &gen, s, nsteps](double r, double w, double L) {
        if (r <= 0.0)
            return model.f0_of_energy(particle_energy(model, r, w, L));
        const auto z = flow_point(gen, r, w, L, -s, nsteps);
        return model.f0_of_energy(particle_energy(model, z[0], z[1], L));
    };
}

struct FlowResult {
    ParticleEnsemble ensemble;
    double h_drift = 0;   ///< max relative drift of the generator Hamiltonian
    int steps = 0;        ///< RK4 steps actually used
};

/// Advects an ensemble along the Hamiltonian flow of the generator for
/// pseudo-time s: dr/ds = dH/dw, dw/ds = -dH/dr, L and the carried f-value
/// frozen. Classical RK4 with at least 64 steps, halved until the
/// a-posteriori conservation of H itself meets `h_tol` (relative).
template <class Gen>
FlowResult flow(const ParticleEnsemble& ens0, const Gen& gen, double s,
                double h_tol = 1e-8, int max_steps = 16384) {
    const KingModel& model = gen.model();
    const double r_box = 4.0 * model.R;
    const double w_box = 6.0 * std::sqrt(2.0 * model.W0);

    double h_scale = 0.0;
    for (std::size_t i = 0; i < ens0.size(); ++i)
        h_scale = std::fmax(h_scale, std::abs(gen.value(ens0.r[i], ens0.w[i], ens0.L[i])));
    if (h_scale == 0.0) h_scale = 1.0;

    FlowResult res;
    for (int nsteps = 64; nsteps <= max_steps; nsteps *= 2) {
        res.ensemble = ens0;
        res.steps = nsteps;
        std::vector<double>& r = res.ensemble.r;
        std::vector<double>& w = res.ensemble.w;
        const std::vector<double>& L = res.ensemble.L;
        std::vector<double> drift(ens0.size(), 0.0);
        std::atomic<bool> blowup{false};
        math::parallel_for(ens0.size(), [&](std::size_t b, std::size_t e) {
            const double h = s / nsteps;
            for (std::size_t i = b; i < e; ++i) {
                double ri = r[i], wi = w[i];
                const double Li = L[i];
                const double H0 = gen.value(ri, wi, Li);
                auto rhs = [&](double rr, double ww, double& dr, double& dw) {
                    double Hr, Hw;
                    gen.partials(rr, ww, Li, Hr, Hw);
                    dr = Hw;
                    dw = -Hr;
                };
                for (int n = 0; n < nsteps; ++n) {
                    double k1r, k1w, k2r, k2w, k3r, k3w, k4r, k4w;
                    rhs(ri, wi, k1r, k1w);
                    rhs(ri + 0.5 * h * k1r, wi + 0.5 * h * k1w, k2r, k2w);
                    rhs(ri + 0.5 * h * k2r, wi + 0.5 * h * k2w, k3r, k3w);
                    rhs(ri + h * k3r, wi + h * k3w, k4r, k4w);
                    ri += h / 6.0 * (k1r + 2 * k2r + 2 * k3r + k4r);
                    wi += h / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w);
                }
                if (!std::isfinite(ri) || !std::isfinite(wi) || ri <= 0.0 || ri > r_box ||
                    std::abs(wi) > w_box)
                    blowup = true;
                r[i] = ri;
                w[i] = wi;
                drift[i] = std::abs(gen.value(ri, wi, Li) - H0);
            }
        });
        if (blowup)
            throw FlowBlowup("flow: a trajectory left the phase-space box (amplitude too large?)");
        res.h_drift = 0.0;
        for (double d : drift) res.h_drift = std::fmax(res.h_drift, d);
        res.h_drift /= h_scale;
        if (res.h_drift <= h_tol) return res;
    }
    return res;
}

/// Membership report for the constraint class: Casimir battery of the flowed
/// ensemble against the unflowed one (both through the carried-value rule,
/// under which exact flows conserve every entry identically), plus the sup of
/// the carried values against the steady-state sup.
struct MembershipReport {
    std::array<double, CasimirBattery::size> battery_initial{};
    std::array<double, CasimirBattery::size> battery_flowed{};
    std::array<double, CasimirBattery::size> rel_deviation{};
    double sup_f = 0;
    double f0_sup = 0;
    double max_rel_deviation = 0;
};

inline MembershipReport verify_S_membership(const ParticleEnsemble& flowed,
                                            const ParticleEnsemble& initial,
                                            const KingModel& model) {
    MembershipReport rep;
    rep.battery_initial = casimir_battery(initial);
    rep.battery_flowed = casimir_battery(flowed);
    for (int b = 0; b < CasimirBattery::size; ++b) {
        const double scale = std::fmax(std::abs(rep.battery_initial[b]), 1e-300);
        rep.rel_deviation[b] = std::abs(rep.battery_flowed[b] - rep.battery_initial[b]) / scale;
        rep.max_rel_deviation = std::fmax(rep.max_rel_deviation, rep.rel_deviation[b]);
    }
    for (double v : flowed.f) rep.sup_f = std::fmax(rep.sup_f, v);
    rep.f0_sup = model.f0_sup;
    return rep;
}

} // namespace kinglab

#endif
