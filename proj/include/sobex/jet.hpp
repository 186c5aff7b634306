#pragma once

#include <Eigen/Dense>

#include "sobex/multiindex.hpp"

namespace sobex {

using Vec = Eigen::VectorXd;

// Polynomial of degree <= m-1 stored as derivative values at a basepoint:
// coeffs[i] = d^alpha P (base) for alpha = space.indices[i].
struct Jet {
    const JetSpace* space = nullptr;
    std::vector<double> base;
    Vec coeffs;

    Jet() = default;
    Jet(const JetSpace& s, std::vector<double> base_)
        : space(&s), base(std::move(base_)), coeffs(Vec::Zero(s.dim())) {}
    Jet(const JetSpace& s, std::vector<double> base_, Vec c)
        : space(&s), base(std::move(base_)), coeffs(std::move(c)) {}

    double deriv(const MultiIndex& alpha) const {
        auto it = space->index_of.find(alpha);
        if (it == space->index_of.end()) throw std::out_of_range("Jet::deriv: index outside space");
        return coeffs[it->second];
    }

    double& deriv(const MultiIndex& alpha) {
        return coeffs[space->index_of.at(alpha)];
    }

    // P(x) = sum_alpha d^alpha P(base) (x-base)^alpha / alpha!
    double eval(const std::vector<double>& x) const {
        std::vector<double> d(base.size());
        for (std::size_t i = 0; i < base.size(); ++i) d[i] = x[i] - base[i];
        double s = 0.0;
        for (int i = 0; i < space->dim(); ++i)
            s += coeffs[i] * mi_power(d, space->indices[i]) / mi_factorial(space->indices[i]);
        return s;
    }

    // d^alpha P evaluated at an arbitrary point, alpha of any order.
    double eval_deriv(const std::vector<double>& x, const MultiIndex& alpha) const {
        if (mi_order(alpha) > space->m - 1) return 0.0;
        std::vector<double> d(base.size());
        for (std::size_t i = 0; i < base.size(); ++i) d[i] = x[i] - base[i];
        double s = 0.0;
        for (int i = 0; i < space->dim(); ++i) {
            const MultiIndex& beta = space->indices[i];
            if (!mi_leq(alpha, beta)) continue;
            MultiIndex gamma = mi_sub(beta, alpha);
            s += coeffs[i] * mi_power(d, gamma) / mi_factorial(gamma);
        }
        return s;
    }
};

inline Jet jet_add(const Jet& a, const Jet& b, double sa = 1.0, double sb = 1.0) {
    Jet r(*a.space, a.base);
    r.coeffs = sa * a.coeffs + sb * b.coeffs;
    return r;
}

// Re-express the same polynomial as a jet at a new basepoint.  Exact for
// degree <= m-1 polynomials.
inline Jet jet_shift(const Jet& P, const std::vector<double>& y) {
    const JetSpace& s = *P.space;
    Jet r(s, y);
    for (int i = 0; i < s.dim(); ++i) r.coeffs[i] = P.eval_deriv(y, s.indices[i]);
    return r;
}

// Jet of the pointwise product: J_base(P * Q), truncating at degree m-1.
// Leibniz rule on derivative values at the common basepoint.
inline Jet jet_product(const Jet& P, const Jet& Q) {
    const JetSpace& s = *P.space;
    Jet Qs = (Q.base == P.base) ? Q : jet_shift(Q, P.base);
    Jet r(s, P.base);
    for (int i = 0; i < s.dim(); ++i) {
        const MultiIndex& alpha = s.indices[i];
        double acc = 0.0;
        for (int j = 0; j < s.dim(); ++j) {
            const MultiIndex& beta = s.indices[j];
            if (!mi_leq(beta, alpha)) continue;
            acc += mi_binomial(alpha, beta) * P.coeffs[j] * Qs.deriv(mi_sub(alpha, beta));
        }
        r.coeffs[i] = acc;
    }
    return r;
}

// Scaled jet norm at basepoint x and lengthscale delta:
// |P|_{x,delta} = ( sum_{|alpha|<=m-1} |d^alpha P(x)|^p delta^{n+(|alpha|-m)p} )^{1/p}
inline double scaled_norm(const Jet& P, double delta) {
    const JetSpace& s = *P.space;
    double acc = 0.0;
    for (int i = 0; i < s.dim(); ++i) {
        double w = std::pow(delta, (s.n + (mi_order(s.indices[i]) - s.m) * s.p) / s.p);
        acc += std::pow(std::abs(P.coeffs[i]) * w, s.p);
    }
    return std::pow(acc, 1.0 / s.p);
}

// Per-coordinate weight used by scaled_norm, exposed for functional assembly.
inline double scaled_norm_weight(const JetSpace& s, const MultiIndex& alpha, double delta) {
    return std::pow(delta, (s.n + (mi_order(alpha) - s.m) * s.p) / s.p);
}

}  // namespace sobex
