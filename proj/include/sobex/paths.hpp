#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "sobex/dyadic.hpp"
#include "sobex/geometry.hpp"
#include "sobex/wspd.hpp"

namespace sobex {

struct KeystoneAssignment {
    std::vector<int> keystones;            // leaf indices, sorted
    std::vector<int> keystone_rank;        // leaf -> position in keystones, or -1
    std::vector<int> kappa;                // leaf -> keystone leaf index
    std::vector<std::vector<int>> paths;   // leaf -> chain of leaf indices
};

// Chain of leaves crossed by the straight segment between the centers of two
// leaves; consecutive entries are neighbors.
inline std::vector<int> leaf_walk(const CZDecomposition& cz, int from, int to) {
    std::vector<int> chain = {from};
    if (from == to) return chain;
    auto a = cz.leaf(from).center();
    auto b = cz.leaf(to).center();
    const int n = static_cast<int>(a.size());
    double t = 0.0;
    int cur = from;
    for (int guard = 0; guard < 1 << 20; ++guard) {
        // parameter at which the segment exits the closure of the current leaf
        const DyadicCube& q = cz.leaf(cur);
        double s = q.side();
        double t_exit = 1.0;
        for (int i = 0; i < n; ++i) {
            double lo = static_cast<double>(q.corner[i]) * s, hi = lo + s;
            double d = b[i] - a[i];
            if (d > 0)
                t_exit = std::min(t_exit, (hi - a[i]) / d);
            else if (d < 0)
                t_exit = std::min(t_exit, (lo - a[i]) / d);
        }
        if (t_exit >= 1.0) break;  // target center inside current closure
        double eps = 1e-12;
        int next = -1;
        for (; eps < 1e-3; eps *= 10.0) {
            double tn = std::min(1.0, t_exit + eps);
            if (tn <= t) continue;
            std::vector<double> x(n);
            for (int i = 0; i < n; ++i) x[i] = a[i] + tn * (b[i] - a[i]);
            int li = cz.locate(x);
            if (li >= 0 && li != cur) {
                next = li;
                t = tn;
                break;
            }
        }
        if (next < 0) throw std::runtime_error("leaf_walk: failed to advance");
        if (!cz.leaf(cur).touches(cz.leaf(next)))
            throw std::runtime_error("leaf_walk: non-neighbor step (decomposition corrupt)");
        chain.push_back(next);
        cur = next;
        if (cur == to) return chain;
    }
    if (cur != to) {
        // the segment ended inside a leaf whose closure contains the target
        // center; they must be neighbors
        if (!cz.leaf(cur).touches(cz.leaf(to)))
            throw std::runtime_error("leaf_walk: terminal cubes not adjacent");
        chain.push_back(to);
    }
    return chain;
}

inline void append_walk(std::vector<int>& path, const std::vector<int>& walk) {
    for (std::size_t i = (path.empty() ? 0 : 1); i < walk.size(); ++i) path.push_back(walk[i]);
}

// For each leaf: the junior-partner descent to its keystone, each hop expanded
// into a neighbor chain along the connecting segment.  A canonicalization pass
// reroutes leaves sitting deep inside a cluster halo through a shared gateway
// cube so their paths share termini.
inline KeystoneAssignment assign_paths(const CZDecomposition& cz,
                                       const std::vector<int>& keys,
                                       const std::vector<Cluster>& cls,
                                       const GeometryConfig& cfg) {
    const int L = cz.leaf_count();
    KeystoneAssignment out;
    out.keystones = keys;
    out.keystone_rank.assign(L, -1);
    for (int r = 0; r < static_cast<int>(keys.size()); ++r) out.keystone_rank[keys[r]] = r;
    out.kappa.assign(L, -1);
    out.paths.resize(L);

    // macro chain of junior partners, memoized leaf -> next hop
    std::vector<int> jp(L, -2);
    auto junior = [&](int li) {
        if (jp[li] == -2) jp[li] = junior_partner(cz, li);
        return jp[li];
    };

    // halo gateway per cluster: among leaves meeting the halo whose probe
    // point is farther than delta of the leaf containing x(S), the one with
    // the minimal radial distance (ties by cube order)
    struct HaloPlan {
        std::vector<char> reroute;  // per leaf
        int gateway = -1;
    };
    std::vector<HaloPlan> plans;
    for (const auto& S : cls) {
        if (!(S.halo_outer > S.halo_inner)) continue;
        HaloPlan plan;
        plan.reroute.assign(L, 0);
        int home = cz.locate(S.rep);
        double home_delta = (home >= 0) ? cz.leaf(home).side() : 0.0;
        double best_r = std::numeric_limits<double>::infinity();
        for (int li = 0; li < L; ++li) {
            const DyadicCube& q = cz.leaf(li);
            Box qb = q.dilated(1.0);
            if (!S.halo_meets_box(qb)) continue;
            auto [rmin, rmax] = S.box_radial_range(qb);
            bool privileged = rmin <= home_delta;
            if (!privileged && rmin < best_r) {
                best_r = rmin;
                plan.gateway = li;
            } else if (!privileged && rmin == best_r && plan.gateway >= 0 &&
                       q < cz.leaf(plan.gateway)) {
                plan.gateway = li;
            }
            if (!privileged && S.halo_contains_box(q.dilated(1.0 + cfg.c_G)))
                plan.reroute[li] = 1;
        }
        if (plan.gateway >= 0) plans.push_back(std::move(plan));
    }

    std::function<const std::vector<int>&(int)> path_of = [&](int li) -> const std::vector<int>& {
        if (!out.paths[li].empty()) return out.paths[li];
        std::vector<int> path;
        if (out.keystone_rank[li] >= 0) {
            path = {li};
        } else {
            int reroute_via = -1;
            for (const auto& plan : plans)
                if (plan.reroute[li] && plan.gateway != li) {
                    reroute_via = plan.gateway;
                    break;
                }
            int next = (reroute_via >= 0) ? reroute_via : junior(li);
            if (next < 0) throw std::runtime_error("assign_paths: non-keystone without partner");
            append_walk(path, leaf_walk(cz, li, next));
            const std::vector<int>& rest = path_of(next);
            append_walk(path, rest);
        }
        out.paths[li] = std::move(path);
        out.kappa[li] = out.paths[li].back();
        return out.paths[li];
    };
    for (int li = 0; li < L; ++li) path_of(li);
    for (int li = 0; li < L; ++li)
        if (out.keystone_rank[out.kappa[li]] < 0)
            throw std::runtime_error("assign_paths: path terminus is not keystone");
    return out;
}

// Largest c such that side(k) <= C (1-c)^{k-l} side(l) along every path.
inline std::pair<double, double> fit_path_decay(const CZDecomposition& cz,
                                                const KeystoneAssignment& ka) {
    double max_ratio = 1.0;
    for (const auto& path : ka.paths)
        for (std::size_t l = 0; l < path.size(); ++l)
            for (std::size_t k = l + 1; k < path.size(); ++k)
                max_ratio = std::max(max_ratio, cz.leaf(path[k]).side() / cz.leaf(path[l]).side());
    double C = 2.0 * max_ratio;
    double worst = 0.0;
    for (const auto& path : ka.paths)
        for (std::size_t l = 0; l < path.size(); ++l)
            for (std::size_t k = l + 1; k < path.size(); ++k) {
                double r = cz.leaf(path[k]).side() / (C * cz.leaf(path[l]).side());
                worst = std::max(worst, std::pow(r, 1.0 / static_cast<double>(k - l)));
            }
    return {C, 1.0 - worst};
}

}  // namespace sobex
