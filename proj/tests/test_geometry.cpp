#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

#include "sobex/dyadic.hpp"
#include "sobex/geometry.hpp"
#include "sobex/paths.hpp"
#include "sobex/wspd.hpp"
#include "test_util.hpp"

using namespace sobex;
using sobex_test::random_normalized_points;

namespace {

CZDecomposition decompose(const std::vector<std::vector<double>>& E) {
    return cz_decompose(E, simple_ok_predicate());
}

void check_lemma_suite(const CZDecomposition& cz) {
    const int n = cz.n;
    // exact partition by integer volume bookkeeping at the finest level
    int finest = 0;
    for (const auto& q : cz.leaves) finest = std::min(finest, q.level);
    long double vol = 0.0L;
    for (const auto& q : cz.leaves) vol += std::pow(2.0L, static_cast<long double>(n) * (q.level - finest));
    CHECK(vol == std::pow(2.0L, static_cast<long double>(-n) * finest));
    // Lemma gg: neighbor sidelength ratios in {1/2, 1, 2}
    for (int li = 0; li < cz.leaf_count(); ++li)
        for (int nj : cz.neighbor_graph[li]) {
            int d = cz.leaf(li).level - cz.leaf(nj).level;
            CHECK(std::abs(d) <= 1);
        }
    // each leaf sees at least two points in 9Q
    std::vector<int> pts;
    for (int li = 0; li < cz.leaf_count(); ++li) {
        cz.points_in_box(cz.leaf(li).dilated(9.0), pts);
        CHECK(pts.size() >= 2);
    }
    // boundary leaves are no smaller than 1/20 of Q°
    for (const auto& q : cz.leaves) {
        bool boundary = false;
        std::int64_t cells = std::int64_t{1} << (-q.level);
        for (std::size_t i = 0; i < q.corner.size(); ++i)
            if (q.corner[i] == 0 || q.corner[i] == cells - 1) boundary = true;
        if (boundary) CHECK(q.side() >= 1.0 / 20.0);
    }
}

}  // namespace

TEST_CASE("normalize examples") {
    SECTION("1-D two points") {
        std::vector<std::vector<double>> pts = {{0.0}, {10.0}};
        AffineMap map = normalize_map(pts);
        CHECK_THAT(map.scale, Catch::Matchers::WithinRel(0.01, 1e-14));
        auto a = map.apply(pts[0]), b = map.apply(pts[1]);
        CHECK_THAT(linf_dist(a, b), Catch::Matchers::WithinAbs(0.1, 1e-14));
    }
    SECTION("normalized diameter is exactly 0.1 and inside (1/8)Q°") {
        std::mt19937_64 rng(5);
        for (int trial = 0; trial < 20; ++trial) {
            auto pts = sobex_test::random_raw_points(rng, 2, 12);
            AffineMap map = normalize_map(pts);
            double diam = 0.0;
            DyadicCube root;
            root.level = 0;
            root.corner = {0, 0};
            Box eighth = root.dilated(1.0 / 8.0);
            std::vector<std::vector<double>> mapped;
            for (const auto& x : pts) mapped.push_back(map.apply(x));
            for (std::size_t i = 0; i < mapped.size(); ++i)
                for (std::size_t j = i + 1; j < mapped.size(); ++j)
                    diam = std::max(diam, linf_dist(mapped[i], mapped[j]));
            CHECK_THAT(diam, Catch::Matchers::WithinAbs(0.1, 1e-12));
            for (const auto& x : mapped) CHECK(eighth.contains_point(x));
        }
    }
    SECTION("errors") {
        CHECK_THROWS(normalize_map({{0.0}, {0.0}}));
        CHECK_THROWS(normalize_map({{1.0}}));
    }
}

TEST_CASE("cz_decompose 1-D hand instances") {
    // {17/64, 47/64}: both middle quarter-cells see both points in their 3Q
    // (47/64 < 3/4 and 17/64 > 1/4), so they split once more
    {
        std::vector<std::vector<double>> E = {{17.0 / 64.0}, {47.0 / 64.0}};
        auto cz = decompose(E);
        REQUIRE(cz.leaf_count() == 6);
        std::vector<std::pair<int, std::int64_t>> want = {{-3, 2}, {-3, 3}, {-3, 4},
                                                          {-3, 5}, {-2, 0}, {-2, 3}};
        for (int i = 0; i < 6; ++i) {
            CHECK(cz.leaf(i).level == want[i].first);
            CHECK(cz.leaf(i).corner[0] == want[i].second);
        }
    }
    // moving the points one cell outward yields the clean four-quarter split
    std::vector<std::vector<double>> E = {{15.0 / 64.0}, {49.0 / 64.0}};
    auto cz = decompose(E);
    REQUIRE(cz.leaf_count() == 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(cz.leaf(i).level == -2);
        CHECK(cz.leaf(i).corner[0] == i);
    }
    auto keys = keystones(cz);
    CHECK(keys == std::vector<int>{0, 1, 2, 3});
    GeometryConfig cfg;
    auto ka = assign_paths(cz, keys, {}, cfg);
    for (int li = 0; li < 4; ++li) {
        CHECK(ka.paths[li] == std::vector<int>{li});
        CHECK(ka.kappa[li] == li);
    }
    // representative of (1/4, 1/2] stays at least 1/32 from E, near 7/16
    auto x = find_representative(cz.leaf(1), E, cfg);
    double d = std::min(std::abs(x[0] - 15.0 / 64.0), std::abs(x[0] - 49.0 / 64.0));
    CHECK(d >= 1.0 / 32.0);
    CHECK(std::abs(x[0] - 7.0 / 16.0) < 0.07);
}

TEST_CASE("cz_decompose rejects bad input") {
    CHECK_THROWS(decompose({{0.5}}));
    CHECK_THROWS(decompose({{0.5}, {1.5}}));  // outside Q°
}

TEST_CASE("geometry lemma suite on random instances") {
    std::mt19937_64 rng(17);
    for (int n = 1; n <= 2; ++n)
        for (int trial = 0; trial < 12; ++trial) {
            auto E = random_normalized_points(rng, n, 6 + static_cast<int>(rng() % 40),
                                             trial % 2 == 1);
            auto cz = decompose(E);
            check_lemma_suite(cz);

            // keystone minimality: no smaller leaf meets 100Q of a keystone,
            // and every non-keystone has one
            auto keys = keystones(cz);
            CHECK(!keys.empty());
            std::vector<char> is_key(cz.leaf_count(), 0);
            for (int k : keys) is_key[k] = 1;
            std::vector<int> in_box;
            for (int li = 0; li < cz.leaf_count(); ++li) {
                bool smaller_exists = false;
                cz.leaves_in_box(cz.leaf(li).dilated(100.0), in_box);
                for (int o : in_box)
                    if (cz.leaf(o).level < cz.leaf(li).level) smaller_exists = true;
                CHECK(smaller_exists == !is_key[li]);
            }
            // Lemma moregeom: keystones with intersecting 10Q dilations have
            // equal sidelength
            for (int a : keys)
                for (int b : keys)
                    if (a < b && cz.leaf(a).dilated(10.0).intersects(cz.leaf(b).dilated(10.0)))
                        CHECK(cz.leaf(a).level == cz.leaf(b).level);

            // overlap budget: points covered by few 1.3Q dilations
            std::uniform_real_distribution<double> U(0.0, 1.0);
            int budget = (n == 1) ? 4 : 16;
            for (int s = 0; s < 2000; ++s) {
                std::vector<double> x(n);
                for (auto& v : x) v = U(rng);
                int count = 0;
                for (const auto& q : cz.leaves)
                    if (q.dilated(1.3).contains_point(x)) ++count;
                CHECK(count <= budget);
                CHECK(count >= 1);
            }
        }
}

TEST_CASE("junior partner properties") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 8; ++trial) {
        auto E = random_normalized_points(rng, 2, 20, true);
        auto cz = decompose(E);
        for (int li = 0; li < cz.leaf_count(); ++li) {
            int j = junior_partner(cz, li);
            if (j < 0) continue;
            CHECK(cz.leaf(j).level <= cz.leaf(li).level - 1);
            CHECK(cz.leaf(j).dilated(1.0).intersects(cz.leaf(li).dilated(100.0)));
            // iterating junior partners terminates
            int cur = li, steps = 0;
            while (cur >= 0 && steps < 200) {
                int nxt = junior_partner(cz, cur);
                if (nxt < 0) break;
                cur = nxt;
                ++steps;
            }
            CHECK(steps < 200);
        }
    }
}

TEST_CASE("paths: K1 decay, K3 identity, neighbor chains") {
    std::mt19937_64 rng(29);
    GeometryConfig cfg;
    for (int n = 1; n <= 2; ++n)
        for (int trial = 0; trial < 10; ++trial) {
            auto E = random_normalized_points(rng, n, 5 + static_cast<int>(rng() % 30),
                                             trial % 2 == 1);
            auto cz = decompose(E);
            auto keys = keystones(cz);
            auto prs = wspd(E, cfg.sigma_w);
            auto cls = clusters(E, prs, cfg.A);
            auto ka = assign_paths(cz, keys, cls, cfg);
            for (int li = 0; li < cz.leaf_count(); ++li) {
                const auto& path = ka.paths[li];
                REQUIRE(!path.empty());
                CHECK(path.front() == li);
                CHECK(path.back() == ka.kappa[li]);
                CHECK(ka.keystone_rank[ka.kappa[li]] >= 0);
                for (std::size_t i = 0; i + 1 < path.size(); ++i)
                    CHECK(cz.leaf(path[i]).touches(cz.leaf(path[i + 1])));
                if (ka.keystone_rank[li] >= 0) {
                    CHECK(path.size() == 1);
                    CHECK(ka.kappa[li] == li);
                }
            }
            auto [C, c] = fit_path_decay(cz, ka);
            INFO("fitted K1 constants C=" << C << " c=" << c);
            CHECK(c > 0.0);
        }
}

TEST_CASE("wspd pinned examples") {
    std::vector<std::vector<double>> E = {{0.0}, {1.0}, {10.0}};
    auto prs = wspd(E, 0.2);
    CHECK(prs.size() == 2);
    std::set<std::pair<std::vector<int>, std::vector<int>>> got;
    for (auto& p : prs) {
        auto l = p.left, r = p.right;
        if (l > r) std::swap(l, r);
        got.insert({l, r});
    }
    CHECK(got.count({{0}, {1}}) == 1);
    CHECK(got.count({{0, 1}, {2}}) == 1);

    auto prs2 = wspd(E, 0.01);
    CHECK(prs2.size() == 3);  // all singleton products

    std::vector<std::vector<double>> two = {{0.3}, {0.7}};
    auto prs3 = wspd(two, 0.5);
    REQUIRE(prs3.size() == 1);
    CHECK(prs3[0].left.size() == 1);
    CHECK(prs3[0].right.size() == 1);
}

TEST_CASE("wspd exact pair cover (default separation) and linear size") {
    std::mt19937_64 rng(31);
    for (int N : {10, 100, 500}) {
        auto E = random_normalized_points(rng, 2, N);
        auto prs = wspd(E, 1e-2);
        // exhaustive: every unordered pair covered exactly once
        std::map<std::pair<int, int>, int> cover;
        for (const auto& p : prs) {
            CHECK(sobex::set_diam(E, p.left) + sobex::set_diam(E, p.right) <=
                  1e-2 * linf_dist(E[p.rep_left], E[p.rep_right]) + 1e-15);
            for (int a : p.left)
                for (int b : p.right) cover[{std::min(a, b), std::max(a, b)}] += 1;
        }
        CHECK(static_cast<int>(cover.size()) == N * (N - 1) / 2);
        for (auto& [k, v] : cover) CHECK(v == 1);
    }
    // pairs/N stabilizes only once N exceeds sigma^{-n}; measure the linear
    // regime at a coarser separation where desk-scale N reaches it
    std::vector<double> ratios;
    for (int N : {100, 250, 500}) {
        auto E = random_normalized_points(rng, 2, N);
        auto prs = wspd(E, 0.5);
        ratios.push_back(static_cast<double>(prs.size()) / N);
    }
    double lo = *std::min_element(ratios.begin(), ratios.end());
    double hi = *std::max_element(ratios.begin(), ratios.end());
    INFO("pairs/N range [" << lo << ", " << hi << "]");
    CHECK(hi <= 2.0 * lo);
}

TEST_CASE("wspd separation uses representative distance correctly") {
    // separation criterion must hold against set distance, checked directly
    std::mt19937_64 rng(37);
    auto E = random_normalized_points(rng, 1, 40, true);
    auto prs = wspd(E, 1e-2);
    for (const auto& p : prs) {
        double dmin = std::numeric_limits<double>::infinity();
        for (int a : p.left)
            for (int b : p.right) dmin = std::min(dmin, linf_dist(E[a], E[b]));
        CHECK(sobex::set_diam(E, p.left) + sobex::set_diam(E, p.right) <= 1e-2 * dmin + 1e-15);
    }
}

TEST_CASE("clusters pinned examples") {
    SECTION("two points form a cluster with infinite complement distance") {
        std::vector<std::vector<double>> E = {{0.2}, {0.8}};
        auto cls = clusters(E, wspd(E, 0.01), 16.0);
        REQUIRE(cls.size() == 1);
        CHECK(cls[0].points == std::vector<int>{0, 1});
        CHECK(std::isinf(cls[0].dist_complement));
    }
    SECTION("tight pair near a far point, threshold depends on A") {
        std::vector<std::vector<double>> E = {{0.0}, {0.001}, {1.0}};
        auto prs = wspd(E, 0.01);
        auto cls2 = clusters(E, prs, 2.0);
        bool found = false;
        for (const auto& c : cls2)
            if (c.points == std::vector<int>{0, 1}) found = true;
        CHECK(found);  // 0.999 >= 8 * 0.001
        auto cls16 = clusters(E, prs, 16.0);
        for (const auto& c : cls16) CHECK(c.points != std::vector<int>{0, 1});
    }
}

TEST_CASE("halo disjointness") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        auto E = random_normalized_points(rng, 2, 25, true);
        auto cls = clusters(E, wspd(E, 1e-2), 16.0);
        for (std::size_t i = 0; i < cls.size(); ++i)
            for (std::size_t j = i + 1; j < cls.size(); ++j) {
                // sample the annuli densely for overlap
                std::uniform_real_distribution<double> U(0.0, 1.0);
                for (int s = 0; s < 3000; ++s) {
                    std::vector<double> x = {U(rng), U(rng)};
                    CHECK_FALSE((cls[i].halo_contains(x) && cls[j].halo_contains(x)));
                }
            }
    }
}

TEST_CASE("representatives: separation, interior, distance floor") {
    std::mt19937_64 rng(43);
    GeometryConfig cfg;
    for (int n = 1; n <= 2; ++n)
        for (int trial = 0; trial < 6; ++trial) {
            auto E = random_normalized_points(rng, n, 10 + static_cast<int>(rng() % 20));
            auto cz = decompose(E);
            std::vector<double> z = E[0];
            z[0] -= 1e-4;  // a nearby off-set auxiliary point
            auto reps = make_representatives(cz, z, cfg);
            DyadicCube root;
            root.level = 0;
            root.corner.assign(n, 0);
            Box inner = root.dilated(0.99);
            for (int li = 0; li < cz.leaf_count(); ++li) {
                CHECK(inner.contains_point(reps.points[li]));
                if (li != reps.z_index) {
                    // inside half the leaf and far from E
                    CHECK(cz.leaf(li).dilated(0.5).contains_point(reps.points[li]));
                    double d = std::numeric_limits<double>::infinity();
                    for (const auto& e : E) d = std::min(d, linf_dist(reps.points[li], e));
                    CHECK(d >= cz.leaf(li).side() / 32.0);
                }
                for (int lj : cz.neighbor_graph[li])
                    CHECK(linf_dist(reps.points[li], reps.points[lj]) >=
                          cz.leaf(li).side() / 8.0);
            }
            CHECK(reps.points[reps.z_index] == z);
        }
}

TEST_CASE("determinism of decomposition and paths") {
    std::mt19937_64 rng(47);
    auto E = random_normalized_points(rng, 2, 30, true);
    GeometryConfig cfg;
    auto run = [&] {
        auto cz = decompose(E);
        auto keys = keystones(cz);
        auto cls = clusters(E, wspd(E, cfg.sigma_w), cfg.A);
        auto ka = assign_paths(cz, keys, cls, cfg);
        auto reps = make_representatives(cz, E[0], cfg);
        return std::tuple(cz.leaves, keys, ka.kappa, ka.paths, reps.points);
    };
    auto a = run();
    // z must lie strictly inside a cube, E[0] qualifies only via locate; use
    // a point near the first data point instead
    CHECK(run() == a);
}

TEST_CASE("GeometryConfig validation") {
    CHECK_THROWS(GeometryConfig(1.0));
    CHECK_THROWS(GeometryConfig(16.0, 1e-2, 0.0));
    CHECK_THROWS(GeometryConfig(16.0, 0.5));
    CHECK_NOTHROW(GeometryConfig());
}
