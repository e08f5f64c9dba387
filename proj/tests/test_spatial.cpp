#include <gtest/gtest.h>

#include <algorithm>

#include "drape/rng.hpp"
#include "drape/spatial.hpp"

using namespace drape;

namespace {

// Reference answer: full sort by (squared distance, index).
std::vector<int> knn_brute(const std::vector<Vec3>& pts, const Vec3& q, int k) {
    std::vector<std::pair<double, int>> all;
    for (int i = 0; i < static_cast<int>(pts.size()); ++i) all.push_back({dist2(pts[i], q), i});
    std::sort(all.begin(), all.end());
    std::vector<int> out;
    for (int i = 0; i < k; ++i) out.push_back(all[i].second);
    return out;
}

} // namespace

TEST(SpatialIndexTest, RejectsBadK) {
    SpatialIndex idx({{0, 0, 0}, {1, 0, 0}});
    EXPECT_THROW(idx.knn({0, 0, 0}, 0), Error);
    EXPECT_THROW(idx.knn({0, 0, 0}, 3), Error);
}

TEST(SpatialIndexTest, NearestOnTinySet) {
    SpatialIndex idx({{0, 0, 0}, {1, 0, 0}, {0.4, 0, 0}});
    EXPECT_EQ(idx.nearest({0.9, 0, 0}), 1);
    EXPECT_EQ(idx.nearest({0.45, 0, 0}), 2);
}

TEST(SpatialIndexTest, TieBreaksByLowerIndex) {
    // three coincident points plus one farther away
    SpatialIndex idx({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}, {5, 5, 5}});
    auto got = idx.knn({0, 0, 0}, 3);
    EXPECT_EQ(got, (std::vector<int>{0, 1, 2}));
}

TEST(SpatialIndexTest, MatchesBruteForceRandom) {
    Rng rng(20240817);
    for (int trial = 0; trial < 100; ++trial) {
        int n = 1 + rng.index(200);
        std::vector<Vec3> pts(n);
        for (auto& p : pts)
            p = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        // sprinkle duplicates to exercise tie-breaking
        for (int d = 0; d < n / 10; ++d) pts[rng.index(n)] = pts[rng.index(n)];
        SpatialIndex idx(pts);
        int k = 1 + rng.index(n);
        // query inside the cloud, far outside, and at an existing point
        Vec3 queries[3] = {{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)},
                           {rng.uniform(5, 9), rng.uniform(-9, -5), rng.uniform(5, 9)},
                           pts[rng.index(n)]};
        for (const Vec3& q : queries)
            ASSERT_EQ(idx.knn(q, k), knn_brute(pts, q, k))
                << "trial " << trial << " n=" << n << " k=" << k;
    }
}

TEST(SpatialIndexTest, DegenerateExtents) {
    Rng rng(7);
    // all points on a line (two axes have zero extent), then all coincident
    std::vector<Vec3> line(50);
    for (int i = 0; i < 50; ++i) line[i] = {rng.uniform(-1, 1), 0.5, -0.25};
    SpatialIndex idx(line);
    for (int t = 0; t < 20; ++t) {
        Vec3 q{rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        ASSERT_EQ(idx.knn(q, 5), knn_brute(line, q, 5));
    }
    std::vector<Vec3> same(8, Vec3{3, 3, 3});
    SpatialIndex idx2(same);
    EXPECT_EQ(idx2.knn({0, 0, 0}, 8), (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7}));
}

TEST(SpatialIndexTest, FullSortWhenKEqualsN) {
    Rng rng(99);
    std::vector<Vec3> pts(64);
    for (auto& p : pts) p = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
    SpatialIndex idx(pts);
    Vec3 q{0.5, 0.5, 0.5};
    EXPECT_EQ(idx.knn(q, 64), knn_brute(pts, q, 64));
}
