#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace sobex {

// A multi-index is a vector of n nonnegative integers.
using MultiIndex = std::vector<int>;

inline int mi_order(const MultiIndex& a) {
    return std::accumulate(a.begin(), a.end(), 0);
}

inline double mi_factorial(const MultiIndex& a) {
    double r = 1.0;
    for (int ai : a)
        for (int k = 2; k <= ai; ++k) r *= k;
    return r;
}

inline double mi_power(const std::vector<double>& x, const MultiIndex& a) {
    double r = 1.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (int k = 0; k < a[i]; ++k) r *= x[i];
    return r;
}

inline bool mi_leq(const MultiIndex& a, const MultiIndex& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] > b[i]) return false;
    return true;
}

inline MultiIndex mi_add(const MultiIndex& a, const MultiIndex& b) {
    MultiIndex r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

inline MultiIndex mi_sub(const MultiIndex& a, const MultiIndex& b) {
    MultiIndex r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

inline double mi_binomial(const MultiIndex& a, const MultiIndex& b) {
    // product over axes of binomial(a_i, b_i)
    double r = 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double c = 1.0;
        for (int k = 1; k <= b[i]; ++k) c = c * (a[i] - k + 1) / k;
        r *= c;
    }
    return r;
}

// Strict order on multi-indices of equal dimension: for distinct a, b let
// k in {0..n} be maximal with partial sums sum_{i<=k} differing; a < b iff
// that partial sum of a is smaller.  Refines comparison by total order.
inline bool mi_less(const MultiIndex& a, const MultiIndex& b) {
    if (a.size() != b.size()) throw std::invalid_argument("mi_less: dimension mismatch");
    if (a == b) throw std::invalid_argument("mi_less: strict order requires distinct arguments");
    int sa = 0, sb = 0;
    int cmp = 0;  // comparison at the maximal differing partial sum
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
        if (sa != sb) cmp = (sa < sb) ? -1 : 1;
    }
    return cmp < 0;
}

struct MiLess {
    bool operator()(const MultiIndex& a, const MultiIndex& b) const {
        return a != b && mi_less(a, b);
    }
};

// A label is a set of multi-indices of order <= m-1.
using Label = std::set<MultiIndex, MiLess>;

// Order on labels: A < B iff the mi_less-minimal element of the symmetric
// difference lies in A.  The empty label is maximal; the full set of
// multi-indices of order <= m-1 is minimal.
inline bool label_less(const Label& a, const Label& b) {
    std::vector<MultiIndex> sym;
    std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(),
                                  std::back_inserter(sym), MiLess{});
    if (sym.empty()) throw std::invalid_argument("label_less: strict order requires distinct labels");
    const MultiIndex& low = sym.front();
    return a.count(low) > 0;
}

// A label is monotonic if with each alpha it contains every alpha + gamma of
// order <= m-1, gamma >= 0.  Checking closure under single increments of one
// coordinate is equivalent.
inline bool is_monotonic(const Label& a, int m) {
    for (const MultiIndex& alpha : a) {
        if (mi_order(alpha) >= m) return false;
        for (std::size_t i = 0; i < alpha.size(); ++i) {
            MultiIndex beta = alpha;
            beta[i] += 1;
            if (mi_order(beta) <= m - 1 && a.count(beta) == 0) return false;
        }
    }
    return true;
}

// Enumeration of the multi-index set M = { alpha : |alpha| <= deg } in a fixed
// canonical order: graded by |alpha|, ties broken by mi_less.
inline std::vector<MultiIndex> enumerate_multiindices(int n, int deg) {
    std::vector<MultiIndex> out;
    MultiIndex cur(n, 0);
    // enumerate all alpha with entries summing to <= deg via odometer
    std::function<void(int, int)> rec = [&](int axis, int remaining) {
        if (axis == n) {
            out.push_back(cur);
            return;
        }
        for (int v = 0; v <= remaining; ++v) {
            cur[axis] = v;
            rec(axis + 1, remaining - v);
        }
        cur[axis] = 0;
    };
    rec(0, deg);
    std::sort(out.begin(), out.end(), [](const MultiIndex& a, const MultiIndex& b) {
        int oa = mi_order(a), ob = mi_order(b);
        if (oa != ob) return oa < ob;
        return mi_less(a, b);
    });
    return out;
}

// Shared problem parameters.  Jets are polynomials of degree <= m-1 stored as
// derivative values over the canonical multi-index list of degree m-1.
struct JetSpace {
    int n = 1;
    int m = 1;
    double p = 2.0;
    std::vector<MultiIndex> indices;          // canonical order, degree <= m-1
    std::map<MultiIndex, int, MiLess> index_of;

    JetSpace() = default;
    JetSpace(int n_, int m_, double p_) : n(n_), m(m_), p(p_) {
        if (n < 1 || m < 1) throw std::invalid_argument("JetSpace: need n >= 1, m >= 1");
        if (!(p > n)) throw std::invalid_argument("JetSpace: need p > n");
        indices = enumerate_multiindices(n, m - 1);
        for (int i = 0; i < static_cast<int>(indices.size()); ++i) index_of[indices[i]] = i;
    }

    int dim() const { return static_cast<int>(indices.size()); }  // D
};

}  // namespace sobex
