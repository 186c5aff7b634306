#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace sobex {

// Axis-aligned box with closed bounds, used for dilation and range queries.
struct Box {
    std::vector<double> lo, hi;

    bool intersects(const Box& o) const {
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (lo[i] > o.hi[i] || o.lo[i] > hi[i]) return false;
        return true;
    }
    bool contains_box(const Box& o) const {
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (o.lo[i] < lo[i] || o.hi[i] > hi[i]) return false;
        return true;
    }
    bool contains_point(const std::vector<double>& x) const {
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (x[i] < lo[i] || x[i] > hi[i]) return false;
        return true;
    }
};

inline double linf_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

// Dyadic cube prod_i (j_i 2^k, (j_i+1) 2^k] with level k <= 0 inside (0,1]^n.
struct DyadicCube {
    int level = 0;
    std::vector<std::int64_t> corner;

    double side() const { return std::ldexp(1.0, level); }

    std::vector<double> center() const {
        std::vector<double> c(corner.size());
        for (std::size_t i = 0; i < corner.size(); ++i)
            c[i] = (static_cast<double>(corner[i]) + 0.5) * side();
        return c;
    }

    // closed bounding box of the dilation factor*Q about the center
    Box dilated(double factor) const {
        Box b;
        double h = 0.5 * factor * side();
        auto c = center();
        b.lo.resize(c.size());
        b.hi.resize(c.size());
        for (std::size_t i = 0; i < c.size(); ++i) {
            b.lo[i] = c[i] - h;
            b.hi[i] = c[i] + h;
        }
        return b;
    }

    // half-open membership matching the product-of-intervals definition
    bool contains(const std::vector<double>& x) const {
        double s = side();
        for (std::size_t i = 0; i < corner.size(); ++i) {
            double lo = static_cast<double>(corner[i]) * s;
            if (!(x[i] > lo && x[i] <= lo + s)) return false;
        }
        return true;
    }

    DyadicCube child(int combo) const {
        DyadicCube c;
        c.level = level - 1;
        c.corner.resize(corner.size());
        for (std::size_t i = 0; i < corner.size(); ++i)
            c.corner[i] = 2 * corner[i] + (combo >> i & 1);
        return c;
    }

    // closures intersect, by integer arithmetic at the finer level
    bool touches(const DyadicCube& o) const {
        const DyadicCube& coarse = (level >= o.level) ? *this : o;
        const DyadicCube& fine = (level >= o.level) ? o : *this;
        std::int64_t f = std::int64_t{1} << (coarse.level - fine.level);
        for (std::size_t i = 0; i < corner.size(); ++i) {
            std::int64_t a = coarse.corner[i] * f, b = (coarse.corner[i] + 1) * f;
            if (a > fine.corner[i] + 1 || fine.corner[i] > b) return false;
        }
        return true;
    }

    // ordering used everywhere ties must break deterministically
    friend bool operator<(const DyadicCube& a, const DyadicCube& b) {
        if (a.level != b.level) return a.level < b.level;
        return a.corner < b.corner;
    }
    friend bool operator==(const DyadicCube& a, const DyadicCube& b) {
        return a.level == b.level && a.corner == b.corner;
    }
};

// ell-infinity distance between the closures of two cubes
inline double cube_dist(const DyadicCube& a, const DyadicCube& b) {
    double sa = a.side(), sb = b.side(), d = 0.0;
    for (std::size_t i = 0; i < a.corner.size(); ++i) {
        double alo = static_cast<double>(a.corner[i]) * sa, ahi = alo + sa;
        double blo = static_cast<double>(b.corner[i]) * sb, bhi = blo + sb;
        double gap = std::max({0.0, blo - ahi, alo - bhi});
        d = std::max(d, gap);
    }
    return d;
}

using OkPredicate = std::function<bool(const DyadicCube&, const std::vector<int>&)>;

// Stopping-time decomposition of (0,1]^n: bisect until every cube satisfies
// the OK predicate; leaves are the maximal OK cubes.
struct CZDecomposition {
    int n = 1;
    std::vector<std::vector<double>> points;  // the normalized point set E

    struct Node {
        DyadicCube cube;
        std::vector<int> children;  // empty for leaves
        int leaf_index = -1;
    };
    std::vector<Node> nodes;  // nodes[0] is the root Q°
    std::vector<int> leaf_nodes;                 // node index per leaf, ordered
    std::vector<DyadicCube> leaves;              // deterministic (level, corner) order
    std::vector<std::vector<int>> neighbor_graph;  // leaf adjacency, self excluded
    std::vector<int> point_leaf;                 // containing leaf per point of E
    std::vector<int> leaf_point;                 // the point inside each leaf, or -1

    const DyadicCube& leaf(int i) const { return leaves[i]; }
    int leaf_count() const { return static_cast<int>(leaves.size()); }

    // All leaves whose closure intersects the closed box.
    void leaves_in_box(const Box& b, std::vector<int>& out) const {
        out.clear();
        std::vector<int> stack = {0};
        while (!stack.empty()) {
            int ni = stack.back();
            stack.pop_back();
            const Node& nd = nodes[ni];
            if (!nd.cube.dilated(1.0).intersects(b)) continue;
            if (nd.children.empty())
                out.push_back(nd.leaf_index);
            else
                for (int c : nd.children) stack.push_back(c);
        }
    }

    // Leaf containing a point of (0,1]^n under half-open membership.
    int locate(const std::vector<double>& x) const {
        int ni = 0;
        if (!nodes[0].cube.contains(x)) return -1;
        while (!nodes[ni].children.empty()) {
            int next = -1;
            for (int c : nodes[ni].children)
                if (nodes[c].cube.contains(x)) {
                    next = c;
                    break;
                }
            if (next < 0) return -1;
            ni = next;
        }
        return nodes[ni].leaf_index;
    }

    // Points of E inside the closed box (via the leaf partition).
    void points_in_box(const Box& b, std::vector<int>& out) const {
        out.clear();
        std::vector<int> ls;
        leaves_in_box(b, ls);
        for (int l : ls) {
            int pi = leaf_point[l];
            if (pi >= 0 && b.contains_point(points[pi])) out.push_back(pi);
        }
        std::sort(out.begin(), out.end());
    }
};

// Simple-mode OK predicate: at most one point of E in 3Q.
inline OkPredicate simple_ok_predicate() {
    return [](const DyadicCube&, const std::vector<int>& pts_in_3q) {
        return pts_in_3q.size() <= 1;
    };
}

inline CZDecomposition cz_decompose(const std::vector<std::vector<double>>& E,
                                    const OkPredicate& ok) {
    if (E.size() < 2) throw std::invalid_argument("cz_decompose: need #E >= 2");
    const int n = static_cast<int>(E[0].size());
    CZDecomposition cz;
    cz.n = n;
    cz.points = E;

    DyadicCube root;
    root.level = 0;
    root.corner.assign(n, 0);
    for (const auto& x : E)
        if (!root.contains(x)) throw std::invalid_argument("cz_decompose: E not inside Q°");

    std::vector<int> all(E.size());
    for (std::size_t i = 0; i < E.size(); ++i) all[i] = static_cast<int>(i);

    auto pts_in_3q = [&](const DyadicCube& q, const std::vector<int>& candidates) {
        Box b = q.dilated(3.0);
        std::vector<int> out;
        for (int i : candidates)
            if (b.contains_point(E[i])) out.push_back(i);
        return out;
    };

    std::vector<int> root_pts = pts_in_3q(root, all);
    if (ok(root, root_pts)) throw std::runtime_error("cz_decompose: Q° itself is OK");

    cz.nodes.push_back({root, {}, -1});
    // Recursive bisection.  Candidate points for a child's 3Q are always among
    // the parent's 3Q points since 3Q_child is contained in 3Q_parent.
    std::function<void(int, const std::vector<int>&)> rec = [&](int ni,
                                                                const std::vector<int>& cand) {
        DyadicCube q = cz.nodes[ni].cube;
        if (q.level < -52) throw std::runtime_error("cz_decompose: recursion below level -52");
        for (int combo = 0; combo < (1 << n); ++combo) {
            DyadicCube c = q.child(combo);
            std::vector<int> cpts = pts_in_3q(c, cand);
            int ci = static_cast<int>(cz.nodes.size());
            cz.nodes.push_back({c, {}, -1});
            cz.nodes[ni].children.push_back(ci);
            if (!ok(c, cpts)) rec(ci, cpts);
        }
    };
    rec(0, root_pts);

    // collect leaves in deterministic order
    std::vector<std::pair<DyadicCube, int>> lv;
    for (int i = 0; i < static_cast<int>(cz.nodes.size()); ++i)
        if (cz.nodes[i].children.empty() && i != 0) lv.push_back({cz.nodes[i].cube, i});
    if (lv.empty()) throw std::runtime_error("cz_decompose: empty decomposition");
    std::sort(lv.begin(), lv.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (int li = 0; li < static_cast<int>(lv.size()); ++li) {
        cz.leaves.push_back(lv[li].first);
        cz.leaf_nodes.push_back(lv[li].second);
        cz.nodes[lv[li].second].leaf_index = li;
    }

    // neighbor graph via pruned tree descent per leaf
    cz.neighbor_graph.assign(cz.leaves.size(), {});
    for (int li = 0; li < cz.leaf_count(); ++li) {
        const DyadicCube& q = cz.leaves[li];
        std::vector<int> stack = {0};
        while (!stack.empty()) {
            int ni = stack.back();
            stack.pop_back();
            const auto& nd = cz.nodes[ni];
            if (!nd.cube.touches(q)) continue;
            if (nd.children.empty()) {
                if (nd.leaf_index >= 0 && nd.leaf_index != li)
                    cz.neighbor_graph[li].push_back(nd.leaf_index);
            } else {
                for (int c : nd.children) stack.push_back(c);
            }
        }
        std::sort(cz.neighbor_graph[li].begin(), cz.neighbor_graph[li].end());
    }

    // point -> leaf index
    cz.point_leaf.assign(E.size(), -1);
    cz.leaf_point.assign(cz.leaves.size(), -1);
    for (int i = 0; i < static_cast<int>(E.size()); ++i) {
        int li = cz.locate(E[i]);
        if (li < 0) throw std::runtime_error("cz_decompose: point outside decomposition");
        cz.point_leaf[i] = li;
        if (cz.leaf_point[li] >= 0)
            throw std::runtime_error("cz_decompose: two points share a leaf");
        cz.leaf_point[li] = i;
    }
    return cz;
}

// Junior partner of a leaf: among leaves meeting 100Q with sidelength at most
// half of Q's, the one at minimal cube distance (ties by (level, corner)).
// Returns -1 iff Q is keystone.
inline int junior_partner(const CZDecomposition& cz, int li) {
    const DyadicCube& q = cz.leaves[li];
    Box big = q.dilated(100.0);
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    std::vector<int> stack = {0};
    std::vector<std::pair<double, int>> order;
    while (!stack.empty()) {
        int ni = stack.back();
        stack.pop_back();
        const auto& nd = cz.nodes[ni];
        if (!nd.cube.dilated(1.0).intersects(big)) continue;
        if (cube_dist(nd.cube, q) > best_d) continue;
        if (nd.children.empty()) {
            int cand = nd.leaf_index;
            if (cand < 0 || nd.cube.level > q.level - 1) continue;
            double d = cube_dist(nd.cube, q);
            if (d < best_d ||
                (d == best_d && best >= 0 && nd.cube < cz.leaves[best])) {
                best = cand;
                best_d = d;
            }
        } else {
            // nearest subtree last so it is explored first and tightens the
            // pruning distance early; subtrees at or above Q's level may
            // still hold smaller leaves
            order.clear();
            for (int c : nd.children) order.emplace_back(cube_dist(cz.nodes[c].cube, q), c);
            std::sort(order.begin(), order.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
            for (auto& [d, c] : order) stack.push_back(c);
        }
    }
    return best;
}

inline bool is_keystone(const CZDecomposition& cz, int li) {
    return junior_partner(cz, li) < 0;
}

inline std::vector<int> keystones(const CZDecomposition& cz) {
    std::vector<int> out;
    for (int li = 0; li < cz.leaf_count(); ++li)
        if (is_keystone(cz, li)) out.push_back(li);
    return out;
}

}  // namespace sobex
