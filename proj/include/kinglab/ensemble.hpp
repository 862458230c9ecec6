#ifndef KINGLAB_ENSEMBLE_HPP
#define KINGLAB_ENSEMBLE_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "kinglab/errors.hpp"

namespace kinglab {

/// Weighted markers (r, w, L, f-value, weight) representing a spherically
/// symmetric distribution. The carried f-value and weight are invariants of
/// every dynamics applied to the ensemble; only (r, w) move and L never does.
struct ParticleEnsemble {
    std::vector<double> r, w, L, f, weight;
    double total_mass = 0.0;

    std::size_t size() const { return r.size(); }

    void reserve(std::size_t n) {
        r.reserve(n); w.reserve(n); L.reserve(n); f.reserve(n); weight.reserve(n);
    }

    void push_back(double ri, double wi, double Li, double fi, double wgt) {
        r.push_back(ri); w.push_back(wi); L.push_back(Li);
        f.push_back(fi); weight.push_back(wgt);
        total_mass += wgt;
    }
};

/// Radial field of an ensemble: particles sorted by radius with the exclusive
/// cumulative mass below each of them. The shell theorem makes this the exact
/// spherically symmetric gravitational field of the marker set.
struct SortedField {
    std::vector<double> r;        ///< radii in increasing order
    std::vector<double> wgt;      ///< weights in the same order
    std::vector<double> m_below;  ///< exclusive cumulative mass at each radius
    double total_mass = 0.0;

    /// mass strictly inside radius x
    double mass_interior(double x) const {
        const auto it = std::lower_bound(r.begin(), r.end(), x);
        const std::size_t i = static_cast<std::size_t>(it - r.begin());
        if (i == r.size()) return total_mass;
        return m_below[i];
    }
};

inline SortedField field_from_particles(const ParticleEnsemble& ens) {
    if (ens.size() == 0) throw DomainError("field_from_particles: empty ensemble");
    const std::size_t n = ens.size();
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return ens.r[a] < ens.r[b]; });
    SortedField out;
    out.r.resize(n);
    out.wgt.resize(n);
    out.m_below.resize(n);
    double cum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t p = order[i];
        out.r[i] = ens.r[p];
        out.wgt[i] = ens.weight[p];
        out.m_below[i] = cum;
        cum += ens.weight[p];
    }
    out.total_mass = cum;
    return out;
}

} // namespace kinglab

#endif
