#pragma once

#include <utility>
#include <vector>

#include "drape/mesh.hpp"

namespace drape {

struct EvalReport {
    double e_dist = 0.0;                // meters
    double e_norm_deg = 0.0;            // degrees
    double normalized_l2_percent = 0.0;
    std::vector<std::pair<double, double>> precision_dist;  // (threshold m, fraction)
    std::vector<std::pair<double, double>> precision_norm;  // (threshold deg, fraction)
};

/// Per-vertex prediction distances ‖pred_i − gt_i‖.
inline std::vector<double> vertex_distances(const std::vector<Vec3>& pred,
                                            const std::vector<Vec3>& gt) {
    check(pred.size() == gt.size() && !gt.empty(),
          "e_dist: vertex counts " + std::to_string(pred.size()) + " vs " +
              std::to_string(gt.size()));
    std::vector<double> out(gt.size());
    for (size_t i = 0; i < gt.size(); ++i) out[i] = dist(pred[i], gt[i]);
    return out;
}

/// Mean (unsquared) vertex-to-vertex distance.
inline double e_dist(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
    std::vector<double> d = vertex_distances(pred, gt);
    double sum = 0.0;
    for (double x : d) sum += x;
    return sum / static_cast<double>(d.size());
}

/// Angular deviation of each facet normal, in degrees. Faces degenerate in
/// either mesh are left out.
inline std::vector<double> face_angle_errors_deg(const TriMesh& pred, const TriMesh& gt) {
    check(pred.faces == gt.faces, "e_norm: meshes must share a face list");
    FaceNormals pn = face_normals(pred);
    FaceNormals gn = face_normals(gt);
    std::vector<double> out;
    out.reserve(gt.faces.size());
    for (int f = 0; f < gt.face_count(); ++f) {
        if (pn.degenerate[f] || gn.degenerate[f]) continue;
        double d = std::clamp(pn.normals[f].dot(gn.normals[f]), -1.0, 1.0);
        out.push_back(rad_to_deg(std::acos(d)));
    }
    return out;
}

/// Mean angular deviation of facet normals, in degrees. Faces degenerate in
/// either mesh are skipped; if every face is degenerate the result is 0.
inline double e_norm_deg(const TriMesh& pred, const TriMesh& gt) {
    std::vector<double> a = face_angle_errors_deg(pred, gt);
    if (a.empty()) return 0.0;
    double sum = 0.0;
    for (double x : a) sum += x;
    return sum / static_cast<double>(a.size());
}

/// 100·‖vec(gt)−vec(pred)‖/‖vec(gt)‖ after normalizing both meshes per axis
/// into [0,1] by the ground-truth bounding box (zero-extent axes only shift).
inline double normalized_l2_percent(const std::vector<Vec3>& pred,
                                    const std::vector<Vec3>& gt) {
    check(pred.size() == gt.size() && !gt.empty(), "normalized_l2: vertex count mismatch");
    Vec3 lo = gt[0], hi = gt[0];
    for (const Vec3& v : gt) {
        lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
        hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
    }
    Vec3 scale = hi - lo;
    if (scale.x <= 0) scale.x = 1;
    if (scale.y <= 0) scale.y = 1;
    if (scale.z <= 0) scale.z = 1;
    auto norm_pt = [&](const Vec3& v) {
        return Vec3{(v.x - lo.x) / scale.x, (v.y - lo.y) / scale.y, (v.z - lo.z) / scale.z};
    };
    double diff2 = 0.0, ref2 = 0.0;
    for (size_t i = 0; i < gt.size(); ++i) {
        Vec3 a = norm_pt(gt[i]), b = norm_pt(pred[i]);
        diff2 += dist2(a, b);
        ref2 += a.norm2();
    }
    check(ref2 > 0.0, "normalized_l2: ground truth has zero norm after normalization");
    return 100.0 * std::sqrt(diff2) / std::sqrt(ref2);
}

/// Fraction of errors strictly below each threshold. Thresholds must ascend;
/// the result is monotone non-decreasing.
inline std::vector<double> precision_curve(const std::vector<double>& errors,
                                           const std::vector<double>& thresholds) {
    for (size_t i = 1; i < thresholds.size(); ++i)
        check(thresholds[i] >= thresholds[i - 1], "precision_curve: thresholds must ascend");
    std::vector<double> out;
    out.reserve(thresholds.size());
    for (double thr : thresholds) {
        size_t below = 0;
        for (double e : errors)
            if (e < thr) ++below;
        out.push_back(errors.empty() ? 0.0 : static_cast<double>(below) / errors.size());
    }
    return out;
}

} // namespace drape
