#pragma once

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sobex/dyadic.hpp"
#include "sobex/wspd.hpp"

namespace sobex {

struct GeometryConfig {
    double A = 16.0;
    double c_G = 1e-2;
    double sigma_w = 1e-2;
    int rep_grid = 16;

    GeometryConfig(double A_ = 16.0, double c_G_ = 1e-2, double sigma_w_ = 1e-2,
                   int rep_grid_ = 16)
        : A(A_), c_G(c_G_), sigma_w(sigma_w_), rep_grid(rep_grid_) {
        if (!(A >= 2.0)) throw std::invalid_argument("GeometryConfig: A >= 2 required");
        if (!(sigma_w > 0.0 && sigma_w < 1.0))
            throw std::invalid_argument("GeometryConfig: sigma_w in (0,1)");
        if (!(c_G > 0.0 && c_G < 0.1))
            throw std::invalid_argument("GeometryConfig: c_G in (0, 0.1)");
        if (rep_grid < 4) throw std::invalid_argument("GeometryConfig: rep_grid >= 4");
        // halo lemma preconditions: ball radius 10(1+sigma) must fit inside the
        // complement gap, and cluster separation must dominate the halo bands
        if (!(A * A * A - sigma_w > A * (1.0 + sigma_w)))
            throw std::invalid_argument("GeometryConfig: A^3 - sigma_w > A(1+sigma_w) required");
        if (!(A * A * A > 10.0 * (1.0 + sigma_w) + 1.0))
            throw std::invalid_argument("GeometryConfig: cluster ball must exclude complement");
    }
};

// Deterministic similarity y = scale * x + shift applied coordinatewise.
struct AffineMap {
    double scale = 1.0;
    std::vector<double> shift;

    std::vector<double> apply(const std::vector<double>& x) const {
        std::vector<double> y(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = scale * x[i] + shift[i];
        return y;
    }
    std::vector<double> invert(const std::vector<double>& y) const {
        std::vector<double> x(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) x[i] = (y[i] - shift[i]) / scale;
        return x;
    }
};

// Choose the similarity making 10 * diam_inf(points) = 1 and centering the
// bounding box at the center of (0,1]^n, so all points land in (1/8)Q°.
inline AffineMap normalize_map(const std::vector<std::vector<double>>& pts) {
    if (pts.size() < 2) throw std::invalid_argument("normalize: need at least 2 points");
    const std::size_t n = pts[0].size();
    std::vector<double> lo = pts[0], hi = pts[0];
    for (const auto& x : pts)
        for (std::size_t i = 0; i < n; ++i) {
            lo[i] = std::min(lo[i], x[i]);
            hi[i] = std::max(hi[i], x[i]);
        }
    double diam = 0.0;
    for (std::size_t i = 0; i < n; ++i) diam = std::max(diam, hi[i] - lo[i]);
    if (!(diam > 0.0)) throw std::invalid_argument("normalize: zero diameter");
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
            if (linf_dist(pts[i], pts[j]) == 0.0)
                throw std::invalid_argument("normalize: duplicate points");
    AffineMap map;
    map.scale = 0.1 / diam;
    map.shift.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        map.shift[i] = 0.5 - map.scale * 0.5 * (lo[i] + hi[i]);
    return map;
}

// Lattice search over rep_grid^n subcell centers of (1/2)Q for the point
// farthest from E in the ell-infinity distance; ties break lexicographically.
inline std::vector<double> find_representative(const DyadicCube& q,
                                               const std::vector<std::vector<double>>& E,
                                               const GeometryConfig& cfg) {
    const int n = static_cast<int>(q.corner.size());
    const double s = q.side();
    auto c = q.center();
    double h = 0.5 * s / 2.0;  // halfwidth of (1/2)Q
    double cell = 2.0 * h / cfg.rep_grid;
    // points beyond the center's nearest distance plus the cube size cannot
    // realize the minimum for any grid sample, so restrict to candidates
    double center_d = std::numeric_limits<double>::infinity();
    for (const auto& e : E) center_d = std::min(center_d, linf_dist(c, e));
    std::vector<const std::vector<double>*> cand;
    for (const auto& e : E)
        if (linf_dist(c, e) <= center_d + s) cand.push_back(&e);
    std::vector<int> idx(n, 0);
    std::vector<double> best;
    double best_d = -1.0;
    bool done = false;
    while (!done) {
        std::vector<double> x(n);
        for (int i = 0; i < n; ++i) x[i] = c[i] - h + (idx[i] + 0.5) * cell;
        double d = std::numeric_limits<double>::infinity();
        for (const auto* e : cand) d = std::min(d, linf_dist(x, *e));
        if (d > best_d) {
            best_d = d;
            best = x;
        }
        int axis = n - 1;
        while (axis >= 0 && ++idx[axis] == cfg.rep_grid) idx[axis--] = 0;
        done = axis < 0;
    }
    if (!(best_d >= s / 32.0))
        throw std::runtime_error("find_representative: distance floor delta/32 violated");
    return best;
}

struct Representatives {
    std::vector<std::vector<double>> points;  // x_nu per leaf
    std::vector<double> z;                    // the auxiliary point
    int z_index = -1;                         // leaf containing z
};

inline Representatives make_representatives(const CZDecomposition& cz,
                                            const std::vector<double>& z,
                                            const GeometryConfig& cfg) {
    Representatives reps;
    reps.z = z;
    reps.z_index = cz.locate(z);
    if (reps.z_index < 0) throw std::runtime_error("make_representatives: z outside Q°");
    reps.points.resize(cz.leaf_count());
    for (int li = 0; li < cz.leaf_count(); ++li)
        reps.points[li] = (li == reps.z_index) ? z : find_representative(cz.leaf(li), cz.points, cfg);
    return reps;
}

}  // namespace sobex
