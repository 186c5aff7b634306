#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "sobex/dyadic.hpp"

namespace sobex {

// Well-separated pair decomposition under the ell-infinity metric via a
// fair-split tree: every ordered pair of distinct points lies in exactly one
// product left x right (or its mirror).
struct WspdPair {
    std::vector<int> left, right;   // index lists into E, sorted
    int rep_left = -1, rep_right = -1;
};

namespace detail {

struct SplitNode {
    std::vector<int> pts;   // sorted indices
    Box bbox;
    int left = -1, right = -1;
    double diam = 0.0;
};

inline Box bbox_of(const std::vector<std::vector<double>>& E, const std::vector<int>& idx) {
    Box b;
    const int n = static_cast<int>(E[idx[0]].size());
    b.lo.assign(n, std::numeric_limits<double>::infinity());
    b.hi.assign(n, -std::numeric_limits<double>::infinity());
    for (int i : idx)
        for (int a = 0; a < n; ++a) {
            b.lo[a] = std::min(b.lo[a], E[i][a]);
            b.hi[a] = std::max(b.hi[a], E[i][a]);
        }
    return b;
}

inline double box_diam(const Box& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < b.lo.size(); ++i) d = std::max(d, b.hi[i] - b.lo[i]);
    return d;
}

inline double box_dist(const Box& a, const Box& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.lo.size(); ++i) {
        double gap = std::max({0.0, a.lo[i] - b.hi[i], b.lo[i] - a.hi[i]});
        d = std::max(d, gap);
    }
    return d;
}

}  // namespace detail

struct FairSplitTree {
    const std::vector<std::vector<double>>* E = nullptr;
    std::vector<detail::SplitNode> nodes;

    int build(std::vector<int> idx) {
        detail::SplitNode nd;
        nd.pts = std::move(idx);
        std::sort(nd.pts.begin(), nd.pts.end());
        nd.bbox = detail::bbox_of(*E, nd.pts);
        nd.diam = detail::box_diam(nd.bbox);
        int my = static_cast<int>(nodes.size());
        nodes.push_back(nd);
        if (nodes[my].pts.size() >= 2) {
            // split the longest box side at its midpoint
            const Box& b = nodes[my].bbox;
            int axis = 0;
            for (std::size_t a = 1; a < b.lo.size(); ++a)
                if (b.hi[a] - b.lo[a] > b.hi[axis] - b.lo[axis]) axis = static_cast<int>(a);
            double mid = 0.5 * (b.lo[axis] + b.hi[axis]);
            std::vector<int> lo, hi;
            for (int i : nodes[my].pts)
                ((*E)[i][axis] <= mid ? lo : hi).push_back(i);
            if (lo.empty() || hi.empty())
                throw std::runtime_error("FairSplitTree: degenerate split (duplicate points?)");
            int l = build(std::move(lo));
            int r = build(std::move(hi));
            nodes[my].left = l;
            nodes[my].right = r;
        }
        return my;
    }
};

inline std::vector<WspdPair> wspd(const std::vector<std::vector<double>>& E, double sigma_w) {
    if (E.size() < 2) throw std::invalid_argument("wspd: need #E >= 2");
    if (!(sigma_w > 0.0 && sigma_w < 1.0)) throw std::invalid_argument("wspd: sigma_w in (0,1)");
    FairSplitTree t;
    t.E = &E;
    std::vector<int> all(E.size());
    for (std::size_t i = 0; i < E.size(); ++i) all[i] = static_cast<int>(i);
    int root = t.build(std::move(all));

    std::vector<WspdPair> out;
    std::function<void(int, int)> find_pairs = [&](int a, int b) {
        const auto& na = t.nodes[a];
        const auto& nb = t.nodes[b];
        double sep = detail::box_dist(na.bbox, nb.bbox);
        if (na.diam + nb.diam <= sigma_w * sep) {
            WspdPair pr;
            pr.left = na.pts;
            pr.right = nb.pts;
            pr.rep_left = na.pts.front();
            pr.rep_right = nb.pts.front();
            out.push_back(std::move(pr));
            return;
        }
        // recurse into the node with the larger diameter
        if (na.diam >= nb.diam) {
            find_pairs(t.nodes[a].left, b);
            find_pairs(t.nodes[a].right, b);
        } else {
            find_pairs(a, t.nodes[b].left);
            find_pairs(a, t.nodes[b].right);
        }
    };
    std::function<void(int)> self_pairs = [&](int v) {
        const auto& nd = t.nodes[v];
        if (nd.pts.size() < 2) return;
        self_pairs(nd.left);
        self_pairs(nd.right);
        find_pairs(nd.left, nd.right);
    };
    self_pairs(root);
    return out;
}

inline double set_diam(const std::vector<std::vector<double>>& E, const std::vector<int>& s) {
    double d = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = i + 1; j < s.size(); ++j)
            d = std::max(d, linf_dist(E[s[i]], E[s[j]]));
    return d;
}

// A cluster is a subset S of E with at least two points whose distance to the
// rest of E is at least A^3 times its diameter (infinite when S = E).
struct Cluster {
    std::vector<int> points;            // sorted indices into E
    std::vector<double> rep;            // x(S): lexicographically least point
    double diam = 0.0;
    double dist_complement = 0.0;       // dist(S, E minus S), inf when S = E
    double halo_inner = 0.0;            // A * diam(S)
    double halo_outer = 0.0;            // dist(S, E minus S) / A

    bool halo_contains(const std::vector<double>& x) const {
        double d = linf_dist(x, rep);
        return d > halo_inner && d < halo_outer;
    }
    // min/max of |x - x(S)|_inf over the closed box
    std::pair<double, double> box_radial_range(const Box& b) const {
        double box_min = 0.0, box_max = 0.0;
        for (std::size_t i = 0; i < b.lo.size(); ++i) {
            double lo = b.lo[i] - rep[i], hi = b.hi[i] - rep[i];
            box_min = std::max(box_min, (lo > 0 || hi < 0)
                                            ? std::min(std::abs(lo), std::abs(hi))
                                            : 0.0);
            box_max = std::max(box_max, std::max(std::abs(lo), std::abs(hi)));
        }
        return {box_min, box_max};
    }
    // the whole closed box sits inside the open halo annulus
    bool halo_contains_box(const Box& b) const {
        auto [box_min, box_max] = box_radial_range(b);
        return box_min > halo_inner && box_max < halo_outer;
    }
    bool halo_meets_box(const Box& b) const {
        auto [box_min, box_max] = box_radial_range(b);
        return box_min < halo_outer && box_max > halo_inner;
    }
};

inline std::vector<Cluster> clusters(const std::vector<std::vector<double>>& E,
                                     const std::vector<WspdPair>& pairs, double A) {
    const int N = static_cast<int>(E.size());
    const double A3 = A * A * A;
    std::set<std::vector<int>> seen;
    std::vector<Cluster> out;
    auto consider = [&](std::vector<int> s) {
        if (s.size() < 2) return;
        std::sort(s.begin(), s.end());
        if (seen.count(s)) return;
        seen.insert(s);
        Cluster c;
        c.points = s;
        c.diam = set_diam(E, s);
        c.dist_complement = std::numeric_limits<double>::infinity();
        std::vector<char> in_s(E.size(), 0);
        for (int i : s) in_s[i] = 1;
        for (int i = 0; i < N; ++i) {
            if (in_s[i]) continue;
            for (int j : s) c.dist_complement = std::min(c.dist_complement, linf_dist(E[i], E[j]));
        }
        if (!(c.dist_complement >= A3 * c.diam)) return;
        c.rep = E[s.front()];
        for (int j : s)
            if (E[j] < c.rep) c.rep = E[j];
        c.halo_inner = A * c.diam;
        c.halo_outer = c.dist_complement / A;
        out.push_back(std::move(c));
    };

    // Every cluster arises as E intersected with a ball around a WSPD
    // representative of radius 10 times the representative separation.
    // Per representative, sort distances once; a candidate ball is a prefix.
    // Cheap necessary condition before the full check: the first distance
    // beyond the ball must be at least A^3 times the largest inside it.
    std::map<int, std::vector<std::pair<double, int>>> dist_cache;
    auto sorted_dists = [&](int rep) -> const std::vector<std::pair<double, int>>& {
        auto it = dist_cache.find(rep);
        if (it != dist_cache.end()) return it->second;
        std::vector<std::pair<double, int>> d(N);
        for (int i = 0; i < N; ++i) d[i] = {linf_dist(E[i], E[rep]), i};
        std::sort(d.begin(), d.end());
        return dist_cache.emplace(rep, std::move(d)).first->second;
    };
    for (const auto& pr : pairs) {
        double r = 10.0 * linf_dist(E[pr.rep_left], E[pr.rep_right]);
        const auto& d = sorted_dists(pr.rep_left);
        auto up = std::upper_bound(d.begin(), d.end(), std::make_pair(r, N));
        std::size_t k = static_cast<std::size_t>(up - d.begin());
        if (k < 2) continue;
        double inner = d[k - 1].first;
        double next = (k < d.size()) ? d[k].first : std::numeric_limits<double>::infinity();
        if (!(next >= A3 * inner)) continue;
        std::vector<int> s(k);
        for (std::size_t i = 0; i < k; ++i) s[i] = d[i].second;
        consider(std::move(s));
    }
    // E itself when it qualifies (complement empty, distance infinite)
    {
        std::vector<int> s(N);
        for (int i = 0; i < N; ++i) s[i] = i;
        consider(std::move(s));
    }
    std::sort(out.begin(), out.end(),
              [](const Cluster& a, const Cluster& b) { return a.points < b.points; });
    return out;
}

}  // namespace sobex
