#pragma once

#include <vector>

#include "sobex/dyadic.hpp"
#include "sobex/geometry.hpp"
#include "sobex/taylor.hpp"

namespace sobex {

// Coefficients of the degree 2m+1 smoothstep S with S(0) = 0, S(1) = 1 and
// vanishing derivatives of order 1..m at both ends; coeff[k] multiplies t^k.
inline std::vector<double> smoothstep_coeffs(int m) {
    auto binom = [](int a, int b) {
        double r = 1.0;
        for (int i = 0; i < b; ++i) r = r * (a - i) / (i + 1);
        return r;
    };
    std::vector<double> coeff(2 * m + 2, 0.0);
    for (int k = 0; k <= m; ++k)
        coeff[m + 1 + k] = binom(m + k, k) * binom(2 * m + 1, m - k) * ((k % 2) ? -1.0 : 1.0);
    return coeff;
}

// One-dimensional C^m profile: 0 outside [lo, hi], 1 on [rise_hi, fall_lo],
// smoothstep ramps in between.
struct BumpProfile {
    double lo = 0.0, rise_hi = 0.0, fall_lo = 0.0, hi = 0.0;

    bool supports(double x) const { return x > lo && x < hi; }

    // evaluate at x as a truncated Taylor jet in the given axis variable
    TaylorJet eval(const TaylorSpace& ts, int axis, double x,
                   const std::vector<double>& ss) const {
        if (x <= lo || x >= hi) return TaylorJet::constant(ts, 0.0);
        if (x >= rise_hi && x <= fall_lo) return TaylorJet::constant(ts, 1.0);
        double a, w;
        if (x < rise_hi) {
            a = lo;
            w = rise_hi - lo;
        } else {
            a = hi;
            w = fall_lo - hi;
        }
        TaylorJet t = TaylorJet::variable(ts, axis, (x - a) / w);
        MultiIndex e(ts.n, 0);
        e[axis] = 1;
        t.c[ts.index_of.at(e)] = 1.0 / w;
        TaylorJet r = TaylorJet::constant(ts, ss.back());
        for (int k = static_cast<int>(ss.size()) - 2; k >= 0; --k) r = r * t + ss[k];
        return r;
    }
};

// Product of per-axis profiles: 1 on the plateau box, 0 outside the support
// box, C^m in between.
struct TensorBump {
    std::vector<BumpProfile> axes;

    bool supports(const std::vector<double>& x) const {
        for (std::size_t i = 0; i < axes.size(); ++i)
            if (!axes[i].supports(x[i])) return false;
        return true;
    }

    TaylorJet eval(const TaylorSpace& ts, const std::vector<double>& x,
                   const std::vector<double>& ss) const {
        TaylorJet r = TaylorJet::constant(ts, 1.0);
        for (std::size_t i = 0; i < axes.size(); ++i) {
            if (!axes[i].supports(x[i])) return TaylorJet::constant(ts, 0.0);
            r = r * axes[i].eval(ts, static_cast<int>(i), x[i], ss);
        }
        return r;
    }

    void breakpoints(int axis, std::vector<double>& out) const {
        out.push_back(axes[axis].lo);
        out.push_back(axes[axis].rise_hi);
        out.push_back(axes[axis].fall_lo);
        out.push_back(axes[axis].hi);
    }
};

inline TensorBump box_bump(const std::vector<double>& plat_lo, const std::vector<double>& plat_hi,
                           const std::vector<double>& sup_lo, const std::vector<double>& sup_hi) {
    TensorBump b;
    b.axes.resize(plat_lo.size());
    for (std::size_t i = 0; i < plat_lo.size(); ++i)
        b.axes[i] = {sup_lo[i], plat_lo[i], plat_hi[i], sup_hi[i]};
    return b;
}

// Bump with plateau B(c, r/2) and support B(c, r) in the sup metric.
inline TensorBump ball_bump(const std::vector<double>& c, double r) {
    std::vector<double> plo(c.size()), phi(c.size()), slo(c.size()), shi(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        plo[i] = c[i] - 0.5 * r;
        phi[i] = c[i] + 0.5 * r;
        slo[i] = c[i] - r;
        shi[i] = c[i] + r;
    }
    return box_bump(plo, phi, slo, shi);
}

// Per-leaf bumps covering Q°: raw bump s_nu with plateau Q_nu and support
// 1.1 Q_nu, corrected near z so that exactly one bump is active on a
// neighborhood of every representative, including z itself:
//   b_nu = s_nu * (1 - h)  for nu != z_leaf,   b_z = s_z + h,
// with h a small bump at z.  The normalized family theta_nu = b_nu / sum b
// then satisfies the plateau, support, and summation properties.
struct PartitionOfUnity {
    int m = 1;
    std::vector<double> smoothstep;      // profile coefficients
    std::vector<TensorBump> leaf_bumps;  // s_nu
    TensorBump z_bump;                   // h
    int z_leaf = -1;

    // raw corrected bump b_nu at x
    TaylorJet bump(const TaylorSpace& ts, int nu, const std::vector<double>& x) const {
        TaylorJet s = leaf_bumps[nu].eval(ts, x, smoothstep);
        if (nu == z_leaf) return s + z_bump.eval(ts, x, smoothstep);
        return s - s * z_bump.eval(ts, x, smoothstep);
    }
};

inline PartitionOfUnity build_pou(const CZDecomposition& cz, const Representatives& reps,
                                  int m) {
    PartitionOfUnity pou;
    pou.m = m;
    pou.smoothstep = smoothstep_coeffs(m);
    pou.z_leaf = reps.z_index;
    pou.leaf_bumps.reserve(cz.leaf_count());
    for (int li = 0; li < cz.leaf_count(); ++li) {
        const DyadicCube& q = cz.leaf(li);
        double s = q.side(), margin = 0.05 * s;
        std::vector<double> plo(cz.n), phi(cz.n), slo(cz.n), shi(cz.n);
        for (int i = 0; i < cz.n; ++i) {
            plo[i] = q.corner[i] * s;
            phi[i] = (q.corner[i] + 1) * s;
            slo[i] = plo[i] - margin;
            shi[i] = phi[i] + margin;
        }
        pou.leaf_bumps.push_back(box_bump(plo, phi, slo, shi));
    }
    pou.z_bump = ball_bump(reps.z, 0.05 * cz.leaf(reps.z_index).side());
    return pou;
}

}  // namespace sobex
