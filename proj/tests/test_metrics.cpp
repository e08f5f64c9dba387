#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "drape/convert.hpp"
#include "drape/loss.hpp"
#include "drape/metrics.hpp"
#include "drape/rng.hpp"
#include "test_util.hpp"

using namespace drape;

namespace {

std::vector<Vec3> jittered(const std::vector<Vec3>& base, Rng& rng, double amp) {
    std::vector<Vec3> out = base;
    for (auto& v : out)
        v += Vec3{rng.uniform(-amp, amp), rng.uniform(-amp, amp), rng.uniform(-amp, amp)};
    return out;
}

} // namespace

TEST(EDistTest, ZeroWhenEqual) {
    std::vector<Vec3> pts = {{0, 1, 2}, {3, -1, 0.5}};
    EXPECT_EQ(e_dist(pts, pts), 0.0);
}

TEST(EDistTest, SingleOffsetIsItsLength) {
    EXPECT_DOUBLE_EQ(e_dist({{3, 4, 0}}, {{0, 0, 0}}), 5.0);
}

TEST(EDistTest, AveragesUnsquaredDistances) {
    std::vector<Vec3> gt = {{0, 0, 0}, {5, 5, 5}};
    std::vector<Vec3> pred = {{1, 0, 0}, {5, 5, 8}};  // distances 1 and 3
    EXPECT_DOUBLE_EQ(e_dist(pred, gt), 2.0);
}

TEST(EDistTest, RejectsCountMismatch) {
    EXPECT_THROW(e_dist({{0, 0, 0}}, {{0, 0, 0}, {1, 1, 1}}), Error);
    EXPECT_THROW(e_dist({}, {}), Error);
}

TEST(ENormTest, ZeroWhenEqual) {
    TriMesh g = testutil::grid_mesh(3, 3, 0.5);
    EXPECT_EQ(e_norm_deg(g, g), 0.0);
}

TEST(ENormTest, FlippedNormalsGive180) {
    TriMesh gt;
    gt.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    gt.faces = {{0, 1, 2}};
    TriMesh pred = gt;
    std::swap(pred.vertices[1], pred.vertices[2]);  // reverses the winding
    EXPECT_DOUBLE_EQ(e_norm_deg(pred, gt), 180.0);
}

TEST(ENormTest, OrthogonalNormalsGive90) {
    TriMesh gt;
    gt.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};  // normal +z
    gt.faces = {{0, 1, 2}};
    TriMesh pred = gt;
    pred.vertices[2] = {0, 0, 1};  // normal −y
    EXPECT_DOUBLE_EQ(e_norm_deg(pred, gt), 90.0);
}

TEST(ENormTest, DegenerateFacesSkipped) {
    TriMesh gt;
    gt.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {0, 1, 1}};
    gt.faces = {{0, 1, 2}, {3, 4, 5}};
    TriMesh pred = gt;
    pred.vertices[2] = {0, 0, 1};           // face 0 → 90°
    pred.vertices[4] = pred.vertices[3];    // face 1 collapses
    pred.vertices[5] = pred.vertices[3];
    EXPECT_DOUBLE_EQ(e_norm_deg(pred, gt), 90.0);  // mean over the one kept face
}

TEST(ENormTest, AllDegenerateGivesZero) {
    TriMesh gt;
    gt.vertices = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    gt.faces = {{0, 1, 2}};
    TriMesh pred;
    pred.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    pred.faces = {{0, 1, 2}};
    EXPECT_EQ(e_norm_deg(pred, gt), 0.0);
}

TEST(ENormTest, RejectsDifferentFaceLists) {
    TriMesh a;
    a.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    a.faces = {{0, 1, 2}};
    TriMesh b = a;
    b.faces = {{0, 2, 1}};
    EXPECT_THROW(e_norm_deg(a, b), Error);
}

TEST(ENormTest, SymmetricAndRotationInvariant) {
    Rng rng(50);
    TriMesh gt = testutil::grid_mesh(4, 3, 0.3);
    TriMesh pred = gt;
    pred.vertices = jittered(gt.vertices, rng, 0.05);
    EXPECT_DOUBLE_EQ(e_norm_deg(pred, gt), e_norm_deg(gt, pred));

    Quat q = Quat::from_axis_angle({1, -0.5, 2}, 0.7);
    TriMesh pred_r = pred, gt_r = gt;
    for (auto& v : pred_r.vertices) v = q.rotate(v);
    for (auto& v : gt_r.vertices) v = q.rotate(v);
    EXPECT_NEAR(e_norm_deg(pred_r, gt_r), e_norm_deg(pred, gt), 1e-9);
}

TEST(NormalizedL2Test, ZeroWhenEqual) {
    std::vector<Vec3> gt = {{0, 0, 0}, {1, 2, 3}, {-1, 0.5, 2}};
    EXPECT_EQ(normalized_l2_percent(gt, gt), 0.0);
}

TEST(NormalizedL2Test, ScalingNormalizedCoordsBy1p01GivesOnePercent) {
    Rng rng(51);
    std::vector<Vec3> gt(40);
    for (auto& v : gt) v = {rng.uniform(-2, 3), rng.uniform(0, 5), rng.uniform(-1, 1)};
    Vec3 lo = gt[0];
    for (const auto& v : gt) lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
    // pred = lo + 1.01·(gt − lo): scales the normalized coordinates by 1.01
    std::vector<Vec3> pred(gt.size());
    for (size_t i = 0; i < gt.size(); ++i) pred[i] = lo + 1.01 * (gt[i] - lo);
    EXPECT_NEAR(normalized_l2_percent(pred, gt), 1.0, 1e-9);
}

TEST(NormalizedL2Test, MatchesHandComputedTwoVertexCase) {
    std::vector<Vec3> gt = {{0, 0, 0}, {1, 2, 4}};      // box scale (1,2,4)
    std::vector<Vec3> pred = {{0.5, 0, 0}, {1, 1, 4}};  // normalized: (0.5,0,0),(1,0.5,1)
    // diff² = 0.25 + 0.25, ref² = 0 + 3
    EXPECT_NEAR(normalized_l2_percent(pred, gt), 100.0 * std::sqrt(0.5 / 3.0), 1e-12);
}

TEST(NormalizedL2Test, FlatAxisFallsBackToUnitScale) {
    std::vector<Vec3> gt = {{0, 0, 5}, {1, 1, 5}};  // zero extent in z
    EXPECT_EQ(normalized_l2_percent(gt, gt), 0.0);
    std::vector<Vec3> pred = {{0, 0, 5.1}, {1, 1, 5}};
    EXPECT_NEAR(normalized_l2_percent(pred, gt), 100.0 * std::sqrt(0.01 / 2.0), 1e-12);
}

TEST(NormalizedL2Test, RejectsZeroNormGroundTruth) {
    std::vector<Vec3> gt = {{0, 0, 0}, {0, 0, 0}};
    std::vector<Vec3> pred = {{1, 0, 0}, {0, 1, 0}};
    EXPECT_THROW(normalized_l2_percent(pred, gt), Error);
}

TEST(PrecisionCurveTest, AllZeroErrorsPassAnyPositiveThreshold) {
    auto out = precision_curve({0, 0, 0}, {0.1});
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0], 1.0);
}

TEST(PrecisionCurveTest, CountsStrictlyBelow) {
    auto out = precision_curve({1, 2, 3}, {0.5, 2.0, 2.5, 100.0});
    ASSERT_EQ(out.size(), 4u);
    EXPECT_EQ(out[0], 0.0);             // below the minimum error
    EXPECT_DOUBLE_EQ(out[1], 1.0 / 3);  // 2 itself is not < 2
    EXPECT_DOUBLE_EQ(out[2], 2.0 / 3);
    EXPECT_EQ(out[3], 1.0);
}

TEST(PrecisionCurveTest, InfiniteThresholdReachesOne) {
    auto out = precision_curve({0.01, 5.0, 123.0}, {std::numeric_limits<double>::infinity()});
    EXPECT_EQ(out[0], 1.0);
}

TEST(PrecisionCurveTest, MonotoneOnRandomData) {
    Rng rng(52);
    std::vector<double> errors(200);
    for (auto& e : errors) e = rng.uniform(0, 2);
    std::vector<double> thresholds;
    for (int i = 0; i <= 20; ++i) thresholds.push_back(0.1 * i);
    auto out = precision_curve(errors, thresholds);
    for (size_t i = 1; i < out.size(); ++i) EXPECT_GE(out[i], out[i - 1]);
    for (double f : out) {
        EXPECT_GE(f, 0.0);
        EXPECT_LE(f, 1.0);
    }
}

TEST(PrecisionCurveTest, RejectsDescendingThresholds) {
    EXPECT_THROW(precision_curve({1.0}, {0.5, 0.4}), Error);
}

TEST(MetricLossConsistencyTest, MeanDistanceBoundedByRootMeanSquare) {
    // Jensen: E[d] ≤ sqrt(E[d²]), i.e. e_dist ≤ √vertex_loss on any instance
    Rng rng(53);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<Vec3> gt(30), pred(30);
        for (auto& v : gt) v = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        pred = jittered(gt, rng, 0.3);
        nn::Tape t;
        double vl = vertex_loss(t, t.constant(points_to_tensor(pred)), points_to_tensor(gt))
                        .val()
                        .v[0];
        EXPECT_LE(e_dist(pred, gt), std::sqrt(vl) + 1e-12);
    }
}
