#pragma once

#include "sobex/jet.hpp"

namespace sobex {

// Result of re-normalizing a near-triangular family of jets indexed by a
// label A: the combination matrix B applied to the input family and the new
// family with d^beta Phat_alpha(x) = delta_{alpha beta} exactly for
// alpha, beta in A.
struct NearTriangularBasis {
    std::vector<MultiIndex> label;        // sorted by mi_less
    Eigen::MatrixXd combination;          // B with Phat = B * P
    std::vector<Jet> jets;                // the normalized family
    double norm_bound = 0.0;              // max abs entry of B
};

// Given candidate jets (P_alpha)_{alpha in A} at common basepoint x with
// d^beta P_alpha(x) approximately delta_{alpha beta} on A (within eps in the
// delta-scaled sense), solve for exact unit diagonal on the A coordinates.
// Throws if the A x A coefficient matrix has a pivot below pivot_tol.
inline NearTriangularBasis near_triangular_normalize(const JetSpace& space,
                                                     const std::vector<double>& x,
                                                     double delta,
                                                     const Label& label,
                                                     const std::vector<Jet>& candidates,
                                                     double pivot_tol = 1e-6) {
    (void)delta;
    const int k = static_cast<int>(label.size());
    if (static_cast<int>(candidates.size()) != k)
        throw std::invalid_argument("near_triangular_normalize: candidate count mismatch");
    NearTriangularBasis out;
    out.label.assign(label.begin(), label.end());
    Eigen::MatrixXd D(k, k);
    for (int a = 0; a < k; ++a) {
        Jet Pa = (candidates[a].base == x) ? candidates[a] : jet_shift(candidates[a], x);
        for (int b = 0; b < k; ++b) D(a, b) = Pa.deriv(out.label[b]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(D);
    if (!lu.isInvertible() ||
        lu.matrixLU().diagonal().cwiseAbs().minCoeff() < pivot_tol)
        throw std::runtime_error("near_triangular_normalize: family is numerically singular");
    out.combination = lu.inverse();
    out.norm_bound = out.combination.cwiseAbs().maxCoeff();
    for (int a = 0; a < k; ++a) {
        Jet acc(space, x);
        for (int b = 0; b < k; ++b) {
            Jet Pb = (candidates[b].base == x) ? candidates[b] : jet_shift(candidates[b], x);
            acc.coeffs += out.combination(a, b) * Pb.coeffs;
        }
        // pin the label coordinates to an exact Kronecker delta
        for (int b = 0; b < k; ++b) acc.deriv(out.label[b]) = (a == b) ? 1.0 : 0.0;
        out.jets.push_back(std::move(acc));
    }
    return out;
}

}  // namespace sobex
