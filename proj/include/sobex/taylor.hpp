#pragma once

#include "sobex/multiindex.hpp"

#include <Eigen/Dense>

namespace sobex {

// Truncated Taylor expansion of a smooth function about a fixed point,
// kept to total degree <= deg.  Coefficients are monomial coefficients in
// (x - base), so c[alpha] = d^alpha F(base) / alpha!.  Supports the ring
// operations plus division, which is enough to evaluate all derivatives of
// rational combinations of bumps and polynomials at a point.
struct TaylorSpace {
    int n = 1;
    int deg = 1;
    std::vector<MultiIndex> indices;  // graded canonical order; indices[0] = 0
    std::map<MultiIndex, int, MiLess> index_of;
    // mul_table[k] lists (i, j) with indices[i] + indices[j] = indices[k]
    std::vector<std::vector<std::pair<int, int>>> mul_table;

    TaylorSpace(int n_, int deg_) : n(n_), deg(deg_) {
        indices = enumerate_multiindices(n, deg);
        for (int i = 0; i < static_cast<int>(indices.size()); ++i) index_of[indices[i]] = i;
        mul_table.resize(indices.size());
        for (int i = 0; i < static_cast<int>(indices.size()); ++i)
            for (int j = 0; j < static_cast<int>(indices.size()); ++j) {
                MultiIndex sum = mi_add(indices[i], indices[j]);
                if (mi_order(sum) > deg) continue;
                mul_table[index_of.at(sum)].push_back({i, j});
            }
    }

    int dim() const { return static_cast<int>(indices.size()); }
};

struct TaylorJet {
    const TaylorSpace* space = nullptr;
    Eigen::VectorXd c;

    TaylorJet() = default;
    explicit TaylorJet(const TaylorSpace& s) : space(&s), c(Eigen::VectorXd::Zero(s.dim())) {}

    static TaylorJet constant(const TaylorSpace& s, double v) {
        TaylorJet t(s);
        t.c[0] = v;
        return t;
    }

    // The affine coordinate (x_axis - center_axis) as a jet.
    static TaylorJet variable(const TaylorSpace& s, int axis, double value_minus_center = 0.0) {
        TaylorJet t(s);
        t.c[0] = value_minus_center;
        if (s.deg >= 1) {
            MultiIndex e(s.n, 0);
            e[axis] = 1;
            t.c[s.index_of.at(e)] = 1.0;
        }
        return t;
    }

    double value() const { return c[0]; }

    // d^alpha F(base) recovered from the monomial coefficient.
    double deriv(const MultiIndex& alpha) const {
        auto it = space->index_of.find(alpha);
        if (it == space->index_of.end()) return 0.0;
        return c[it->second] * mi_factorial(alpha);
    }

    TaylorJet operator+(const TaylorJet& o) const {
        TaylorJet r(*space);
        r.c = c + o.c;
        return r;
    }
    TaylorJet operator-(const TaylorJet& o) const {
        TaylorJet r(*space);
        r.c = c - o.c;
        return r;
    }
    TaylorJet operator*(double s) const {
        TaylorJet r(*space);
        r.c = c * s;
        return r;
    }
    TaylorJet operator+(double s) const {
        TaylorJet r = *this;
        r.c[0] += s;
        return r;
    }

    TaylorJet operator*(const TaylorJet& o) const {
        TaylorJet r(*space);
        for (int k = 0; k < space->dim(); ++k) {
            double acc = 0.0;
            for (auto [i, j] : space->mul_table[k]) acc += c[i] * o.c[j];
            r.c[k] = acc;
        }
        return r;
    }

    // Truncated series division; requires o.c[0] != 0.
    TaylorJet operator/(const TaylorJet& o) const {
        if (o.c[0] == 0.0) throw std::domain_error("TaylorJet: division by jet with zero value");
        // Solve o * r = this coefficient by coefficient in graded order.  For
        // each k the only unknown term is o.c[0] * r.c[k]; every other pair
        // (i, j) in the table has j < k with r.c[j] already computed.
        TaylorJet r(*space);
        for (int k = 0; k < space->dim(); ++k) {
            double acc = c[k];
            for (auto [i, j] : space->mul_table[k]) {
                if (i == 0 && j == k) continue;
                acc -= o.c[i] * r.c[j];
            }
            r.c[k] = acc / o.c[0];
        }
        return r;
    }
};

inline TaylorJet operator*(double s, const TaylorJet& t) { return t * s; }

}  // namespace sobex
