#pragma once

#include <iostream>
#include <utility>
#include <vector>

#include "drape/convert.hpp"
#include "drape/mesh.hpp"
#include "drape/spatial.hpp"
#include "drape/tensor.hpp"

namespace drape {

struct LossWeights {
    double lambda_pen = 1.0;
    double lambda_norm = 0.3;
    double lambda_bend = 0.5;
    double d_tol = 0.05;                  // meters; gates the penetration term
    double normal_extension_frac = 0.2;   // body offset as a fraction of avg edge length

    void validate() const {
        check(lambda_pen >= 0 && lambda_norm >= 0 && lambda_bend >= 0,
              "loss weights must be nonnegative");
        check(d_tol >= 0 && normal_extension_frac >= 0,
              "d_tol and normal_extension_frac must be nonnegative");
    }
};

struct LossBreakdown {
    double vertex = 0.0;
    double penetration = 0.0;
    double normal = 0.0;
    double bending = 0.0;
    double total = 0.0;
};

/// Mean squared vertex distance: (1/N)·Σ ‖gt_i − pred_i‖².
inline nn::Value vertex_loss(nn::Tape& t, nn::Value pred, const nn::Tensor& gt) {
    check(pred.rows() == gt.rows && gt.cols == 3,
          "vertex_loss: shapes " + pred.val().shape_str() + " vs " + gt.shape_str());
    nn::Value d = t.sub(pred, t.constant(gt));
    return t.scale(t.sum_all(t.rowwise_dot(d, d)), 1.0 / gt.rows);
}

/// Cumulative count of correspondence recomputations. Instrumentation only:
/// training asserts exactly one recomputation per optimization step.
inline long& correspondence_count() {
    static long count = 0;
    return count;
}

/// Nearest body vertex for every predicted garment vertex, ties to the lower
/// body index. Recomputed from current values each call; carries no gradient.
inline std::vector<int> correspondences(const std::vector<Vec3>& body_vertices,
                                        const nn::Tensor& pred) {
    ++correspondence_count();
    SpatialIndex index(body_vertices);
    std::vector<int> pairs(pred.rows);
    for (int j = 0; j < pred.rows; ++j)
        pairs[j] = index.nearest({pred.at(j, 0), pred.at(j, 1), pred.at(j, 2)});
    return pairs;
}

/// Penetration term: garment vertices that lie behind the matched body
/// vertex's tangent plane — the plane shifted outward along the body normal
/// by normal_extension_frac of the body's average edge length — are penalized
/// linearly. Only vertices whose current prediction error is below d_tol are
/// gated in; the gate and the pairing are evaluated on current values and
/// block gradient.
inline nn::Value penetration_loss(nn::Tape& t, nn::Value pred, const TriMesh& body,
                                  const nn::Tensor& gt, const LossWeights& w) {
    check(pred.rows() == gt.rows, "penetration_loss: vertex count mismatch");
    const nn::Tensor& cur = pred.val();
    std::vector<int> pair = correspondences(body.vertices, cur);
    std::vector<Vec3> body_normals = vertex_normals(body);
    double offset = w.normal_extension_frac * avg_edge_length(body);

    std::vector<int> gated;
    for (int j = 0; j < gt.rows; ++j) {
        double err2 = 0.0;
        for (int c = 0; c < 3; ++c) {
            double d = cur.at(j, c) - gt.at(j, c);
            err2 += d * d;
        }
        if (err2 < w.d_tol * w.d_tol) gated.push_back(j);
    }
    if (gated.empty()) return t.constant(nn::Tensor(1, 1));

    nn::Tensor normals(static_cast<int>(gated.size()), 3);
    nn::Tensor planes(static_cast<int>(gated.size()), 3);  // extended body points B′
    for (size_t r = 0; r < gated.size(); ++r) {
        const Vec3& n = body_normals[pair[gated[r]]];
        Vec3 b = body.vertices[pair[gated[r]]] + offset * n;
        planes.at(static_cast<int>(r), 0) = b.x;
        planes.at(static_cast<int>(r), 1) = b.y;
        planes.at(static_cast<int>(r), 2) = b.z;
        normals.at(static_cast<int>(r), 0) = n.x;
        normals.at(static_cast<int>(r), 1) = n.y;
        normals.at(static_cast<int>(r), 2) = n.z;
    }
    nn::Value g = t.gather_rows(pred, gated);
    nn::Value signed_dist = t.rowwise_dot(t.sub(g, t.constant(std::move(planes))),
                                          t.constant(std::move(normals)));
    nn::Value depth = t.relu(t.scale(signed_dist, -1.0));
    return t.scale(t.sum_all(depth), 1.0 / gt.rows);
}

/// Facet-normal term: (1/N_F)·Σ (1 − gtNᵀ·predN)². Predicted normals are
/// differentiable (ε-guarded normalization); faces degenerate in either mesh
/// are left out of both the sum and the count.
inline nn::Value normal_loss(nn::Tape& t, nn::Value pred,
                             const std::vector<std::array<int, 3>>& faces,
                             const nn::Tensor& gt) {
    constexpr double kEps = 1e-12;
    const nn::Tensor& cur = pred.val();

    TriMesh gt_mesh;
    gt_mesh.vertices = tensor_to_points(gt);
    gt_mesh.faces = faces;
    FaceNormals gt_n = face_normals(gt_mesh);

    std::vector<int> i0, i1, i2;
    std::vector<int> kept;
    for (size_t f = 0; f < faces.size(); ++f) {
        if (gt_n.degenerate[f]) continue;
        Vec3 a{cur.at(faces[f][0], 0), cur.at(faces[f][0], 1), cur.at(faces[f][0], 2)};
        Vec3 b{cur.at(faces[f][1], 0), cur.at(faces[f][1], 1), cur.at(faces[f][1], 2)};
        Vec3 c{cur.at(faces[f][2], 0), cur.at(faces[f][2], 1), cur.at(faces[f][2], 2)};
        if ((b - a).cross(c - a).norm() < kDegenerateFaceThreshold) continue;
        kept.push_back(static_cast<int>(f));
        i0.push_back(faces[f][0]);
        i1.push_back(faces[f][1]);
        i2.push_back(faces[f][2]);
    }
    if (kept.empty()) return t.constant(nn::Tensor(1, 1));

    nn::Tensor gt_rows(static_cast<int>(kept.size()), 3);
    for (size_t r = 0; r < kept.size(); ++r) {
        gt_rows.at(static_cast<int>(r), 0) = gt_n.normals[kept[r]].x;
        gt_rows.at(static_cast<int>(r), 1) = gt_n.normals[kept[r]].y;
        gt_rows.at(static_cast<int>(r), 2) = gt_n.normals[kept[r]].z;
    }
    nn::Value v0 = t.gather_rows(pred, i0);
    nn::Value e1 = t.sub(t.gather_rows(pred, i1), v0);
    nn::Value e2 = t.sub(t.gather_rows(pred, i2), v0);
    nn::Value n = t.normalize_rows(t.cross_rows(e1, e2), kEps);
    nn::Value r = t.sub(t.constant(nn::Tensor::full(static_cast<int>(kept.size()), 1, 1.0)),
                        t.rowwise_dot(n, t.constant(std::move(gt_rows))));
    return t.scale(t.sum_all(t.mul(r, r)), 1.0 / static_cast<double>(kept.size()));
}

/// Bending term over two-ring vertex pairs: mean absolute difference between
/// predicted and ground-truth pair distances.
inline nn::Value bending_loss(nn::Tape& t, nn::Value pred, const nn::Tensor& gt,
                              const std::vector<std::pair<int, int>>& pairs) {
    if (pairs.empty()) {
        std::cerr << "bending_loss: empty two-ring pair set, term is 0\n";
        return t.constant(nn::Tensor(1, 1));
    }
    std::vector<int> pi, pk;
    nn::Tensor gt_d(static_cast<int>(pairs.size()), 1);
    for (size_t r = 0; r < pairs.size(); ++r) {
        auto [i, k] = pairs[r];
        pi.push_back(i);
        pk.push_back(k);
        Vec3 a{gt.at(i, 0), gt.at(i, 1), gt.at(i, 2)};
        Vec3 b{gt.at(k, 0), gt.at(k, 1), gt.at(k, 2)};
        gt_d.v[r] = dist(a, b);
    }
    nn::Value d = t.rowwise_norm(t.sub(t.gather_rows(pred, pi), t.gather_rows(pred, pk)));
    nn::Value diff = t.abs_val(t.sub(d, t.constant(std::move(gt_d))));
    return t.scale(t.sum_all(diff), 1.0 / static_cast<double>(pairs.size()));
}

/// Weighted sum of the four terms. The breakdown, when requested, reports the
/// unweighted per-term values plus the weighted total.
inline nn::Value total_loss(nn::Tape& t, nn::Value pred, const nn::Tensor& gt,
                            const std::vector<std::array<int, 3>>& faces,
                            const std::vector<std::pair<int, int>>& two_ring,
                            const TriMesh& body, const LossWeights& w,
                            LossBreakdown* breakdown = nullptr) {
    w.validate();
    nn::Value lv = vertex_loss(t, pred, gt);
    nn::Value lp = penetration_loss(t, pred, body, gt, w);
    nn::Value ln = normal_loss(t, pred, faces, gt);
    nn::Value lb = bending_loss(t, pred, gt, two_ring);
    nn::Value total = t.add(t.add(lv, t.scale(lp, w.lambda_pen)),
                            t.add(t.scale(ln, w.lambda_norm), t.scale(lb, w.lambda_bend)));
    if (breakdown) {
        breakdown->vertex = lv.val().v[0];
        breakdown->penetration = lp.val().v[0];
        breakdown->normal = ln.val().v[0];
        breakdown->bending = lb.val().v[0];
        breakdown->total = total.val().v[0];
    }
    return total;
}

} // namespace drape
