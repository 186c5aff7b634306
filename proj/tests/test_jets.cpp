#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "sobex/basis.hpp"
#include "sobex/jet.hpp"
#include "sobex/multiindex.hpp"
#include "sobex/taylor.hpp"

using namespace sobex;

namespace {

std::vector<Label> all_labels(int n, int m) {
    auto mi = enumerate_multiindices(n, m - 1);
    std::vector<Label> out;
    for (std::uint64_t mask = 0; mask < (1ull << mi.size()); ++mask) {
        Label L;
        for (std::size_t i = 0; i < mi.size(); ++i)
            if (mask >> i & 1) L.insert(mi[i]);
        out.push_back(L);
    }
    return out;
}

}  // namespace

TEST_CASE("mi_less pinned examples") {
    CHECK(mi_less({0, 0}, {0, 1}));
    CHECK(mi_less({0, 1}, {1, 0}));
    CHECK(mi_less({0, 0, 1}, {1, 0, 0}));
    CHECK_FALSE(mi_less({1, 0}, {0, 1}));
    CHECK_THROWS(mi_less({1, 0}, {1, 0}));
}

TEST_CASE("mi_less is a strict total order refining degree, n <= 3, m <= 4") {
    for (int n = 1; n <= 3; ++n)
        for (int m = 1; m <= 4; ++m) {
            auto mi = enumerate_multiindices(n, m - 1);
            for (const auto& a : mi)
                for (const auto& b : mi) {
                    if (a == b) continue;
                    bool ab = mi_less(a, b), ba = mi_less(b, a);
                    CHECK(ab != ba);  // antisymmetry + totality
                    if (mi_order(a) < mi_order(b)) CHECK(ab);
                    for (const auto& c : mi) {
                        if (c == a || c == b) continue;
                        if (ab && mi_less(b, c)) CHECK(mi_less(a, c));
                    }
                }
        }
}

TEST_CASE("label_less pinned examples and extremes") {
    JetSpace s12(1, 2, 2.0);
    Label full, empty, a, b;
    for (const auto& mi : s12.indices) full.insert(mi);
    CHECK(label_less(full, empty));
    a = {{MultiIndex{0, 0}}};
    b = {{MultiIndex{0, 0}}, {MultiIndex{0, 1}}};
    CHECK(label_less(b, a));
    Label a1 = {{MultiIndex{1}}}, b1 = {{MultiIndex{0}}};
    CHECK(label_less(b1, a1));
    CHECK_THROWS(label_less(a, a));
}

TEST_CASE("label_less strict total order on power set, empty max, full min") {
    for (int n = 1; n <= 2; ++n)
        for (int m = 1; m <= 3; ++m) {
            auto labels = all_labels(n, m);
            Label empty;
            Label full;
            for (const auto& mi : enumerate_multiindices(n, m - 1)) full.insert(mi);
            for (const auto& A : labels)
                for (const auto& B : labels) {
                    if (A == B) continue;
                    bool ab = label_less(A, B), ba = label_less(B, A);
                    CHECK(ab != ba);
                    if (B == empty) CHECK(ab);
                    if (A == full) CHECK(ab);
                    // subset labels come earlier in the order
                    if (std::includes(B.begin(), B.end(), A.begin(), A.end(), MiLess{}) && A != B)
                        CHECK(ba);
                }
            // transitivity on a sample to keep runtime in check
            for (std::size_t i = 0; i + 2 < labels.size(); i += 3) {
                const auto &A = labels[i], &B = labels[i + 1], &C = labels[i + 2];
                if (A != B && B != C && A != C && label_less(A, B) && label_less(B, C))
                    CHECK(label_less(A, C));
            }
        }
}

TEST_CASE("is_monotonic") {
    CHECK(is_monotonic({}, 3));
    Label full;
    for (const auto& mi : enumerate_multiindices(2, 2)) full.insert(mi);
    CHECK(is_monotonic(full, 3));
    CHECK_FALSE(is_monotonic({{MultiIndex{1}}}, 3));
    CHECK(is_monotonic({{MultiIndex{2}}}, 3));
}

TEST_CASE("scaled_norm pinned examples") {
    {
        JetSpace s(1, 2, 2.0);
        Jet P(s, {0.25});
        CHECK(scaled_norm(P, 0.5) == 0.0);
        P.deriv({1}) = 1.0;  // P(t) = t - x
        CHECK_THAT(scaled_norm(P, 0.5), Catch::Matchers::WithinRel(std::sqrt(2.0), 1e-12));
    }
    {
        JetSpace s(1, 1, 2.0);
        Jet P(s, {0.0});
        P.deriv({0}) = 1.0;
        CHECK_THAT(scaled_norm(P, 1.0), Catch::Matchers::WithinRel(1.0, 1e-12));
    }
}

TEST_CASE("jet_shift pinned example and round trip") {
    JetSpace s(1, 2, 2.0);
    Jet P(s, {0.0});
    P.deriv({0}) = 1.0;
    P.deriv({1}) = 2.0;
    Jet Q = jet_shift(P, {1.0});
    CHECK_THAT(Q.deriv({0}), Catch::Matchers::WithinAbs(3.0, 1e-14));
    CHECK_THAT(Q.deriv({1}), Catch::Matchers::WithinAbs(2.0, 1e-14));

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int n = 1; n <= 3; ++n)
        for (int m = 1; m <= 3; ++m) {
            JetSpace sp(n, m, 2.5 + n);
            for (int trial = 0; trial < 20; ++trial) {
                std::vector<double> x(n), y(n);
                for (auto& v : x) v = U(rng);
                for (auto& v : y) v = U(rng);
                Jet A(sp, x);
                for (int i = 0; i < sp.dim(); ++i) A.coeffs[i] = U(rng);
                Jet B = jet_shift(jet_shift(A, y), x);
                CHECK((B.coeffs - A.coeffs).norm() <= 1e-12 * (1.0 + A.coeffs.norm()));
            }
        }
}

TEST_CASE("jet_product pinned examples") {
    JetSpace s2(1, 2, 2.0);
    std::vector<double> x0 = {0.0};
    Jet one(s2, x0), t(s2, x0), p(s2, x0);
    one.deriv({0}) = 1.0;
    t.deriv({1}) = 1.0;
    p.deriv({0}) = 0.7;
    p.deriv({1}) = -2.0;
    Jet idp = jet_product(p, one);
    CHECK((idp.coeffs - p.coeffs).norm() == 0.0);
    Jet tt = jet_product(t, t);
    CHECK(tt.coeffs.norm() == 0.0);  // t^2 truncated at degree <= 1

    JetSpace s3(1, 3, 2.0);
    Jet a(s3, x0), b(s3, x0);
    a.deriv({0}) = 1.0;
    a.deriv({1}) = 1.0;  // 1 + t
    b.deriv({1}) = 1.0;  // t
    Jet ab = jet_product(a, b);  // t + t^2
    CHECK_THAT(ab.deriv({0}), Catch::Matchers::WithinAbs(0.0, 1e-14));
    CHECK_THAT(ab.deriv({1}), Catch::Matchers::WithinAbs(1.0, 1e-14));
    CHECK_THAT(ab.deriv({2}), Catch::Matchers::WithinAbs(2.0, 1e-14));
}

TEST_CASE("scaled_norm shift comparability (eq ti0 style)") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    JetSpace s(2, 2, 3.0);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        double delta = std::pow(2.0, -(trial % 8));
        std::vector<double> x = {U(rng), U(rng)};
        std::vector<double> xp = {x[0] + delta * U(rng), x[1] + delta * U(rng)};
        Jet P(s, x);
        for (int i = 0; i < s.dim(); ++i) P.coeffs[i] = U(rng);
        double a = scaled_norm(P, delta);
        double b = scaled_norm(jet_shift(P, xp), delta);
        if (b > 0) worst = std::max(worst, a / b);
    }
    INFO("measured shift-comparability constant " << worst);
    CHECK(worst < 16.0);  // C' for |x-x'| <= delta, n=2, m=2
}

TEST_CASE("near_triangular_normalize") {
    JetSpace s(2, 2, 3.0);
    std::vector<double> x = {0.3, -0.1};

    SECTION("exact candidate gives identity") {
        Label L;
        L.insert({0, 0});
        L.insert({1, 0});
        std::vector<Jet> cand;
        for (const auto& alpha : L) {
            Jet P(s, x);
            P.deriv(alpha) = 1.0;
            cand.push_back(P);
        }
        auto out = near_triangular_normalize(s, x, 0.5, L, cand);
        CHECK((out.combination - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
    }

    SECTION("1x1 inversion") {
        Label L;
        L.insert({0, 1});
        Jet P(s, x);
        P.deriv({0, 1}) = 1.04;
        auto out = near_triangular_normalize(s, x, 0.5, L, {P});
        CHECK_THAT(out.combination(0, 0), Catch::Matchers::WithinRel(1.0 / 1.04, 1e-12));
        CHECK_THAT(out.jets[0].deriv({0, 1}), Catch::Matchers::WithinAbs(1.0, 0.0));
    }

    SECTION("random near-identity 3x3 perturbation restores exact unit diagonal") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> U(-0.05, 0.05);
        Label L;
        L.insert({0, 0});
        L.insert({0, 1});
        L.insert({1, 0});
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<Jet> cand;
            for (const auto& alpha : L) {
                Jet P(s, x);
                for (int i = 0; i < s.dim(); ++i) P.coeffs[i] = U(rng);
                P.deriv(alpha) += 1.0;
                cand.push_back(P);
            }
            auto out = near_triangular_normalize(s, x, 0.5, L, cand);
            int a = 0;
            for (const auto& alpha : L) {
                int b = 0;
                for (const auto& beta : L) {
                    double want = (a == b) ? 1.0 : 0.0;
                    CHECK_THAT(out.jets[a].deriv(beta), Catch::Matchers::WithinAbs(want, 1e-10));
                    ++b;
                }
                ++a;
            }
        }
    }

    SECTION("singular family is rejected") {
        Label L;
        L.insert({0, 0});
        L.insert({1, 0});
        Jet P(s, x);
        P.deriv({0, 0}) = 1.0;
        CHECK_THROWS(near_triangular_normalize(s, x, 0.5, L, {P, P}));
    }
}

TEST_CASE("taylor jet arithmetic matches closed forms") {
    TaylorSpace ts(2, 3);
    // F(x, y) = (1 + x + y^2) / (2 - x) about (0.5, -0.25), derivatives checked
    // against the analytically expanded quotient.
    double cx = 0.5, cy = -0.25;
    TaylorJet X = TaylorJet::variable(ts, 0, 0.0);  // x - cx
    TaylorJet Y = TaylorJet::variable(ts, 1, 0.0);  // y - cy
    TaylorJet x = X + cx, y = Y + cy;
    TaylorJet F = (TaylorJet::constant(ts, 1.0) + x + y * y) / (TaylorJet::constant(ts, 2.0) - x);
    auto f = [](double a, double b) { return (1 + a + b * b) / (2 - a); };
    double h = 1e-5;
    CHECK_THAT(F.value(), Catch::Matchers::WithinRel(f(cx, cy), 1e-12));
    double fx = (f(cx + h, cy) - f(cx - h, cy)) / (2 * h);
    double fy = (f(cx, cy + h) - f(cx, cy - h)) / (2 * h);
    CHECK_THAT(F.deriv({1, 0}), Catch::Matchers::WithinRel(fx, 1e-7));
    CHECK_THAT(F.deriv({0, 1}), Catch::Matchers::WithinRel(fy, 1e-7));
    double fxy = (f(cx + h, cy + h) - f(cx + h, cy - h) - f(cx - h, cy + h) + f(cx - h, cy - h)) /
                 (4 * h * h);
    CHECK_THAT(F.deriv({1, 1}), Catch::Matchers::WithinRel(fxy, 1e-5));
}
