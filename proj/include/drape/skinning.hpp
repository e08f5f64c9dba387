#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "drape/common.hpp"
#include "drape/vec3.hpp"

namespace drape {

struct Joint {
    std::string name;
    int parent = -1;  // -1 marks the root
    Vec3 rest_pos;    // world space
};

struct Skeleton {
    std::vector<Joint> joints;

    int joint_count() const { return static_cast<int>(joints.size()); }

    int find(const std::string& name) const {
        for (int i = 0; i < joint_count(); ++i)
            if (joints[i].name == name) return i;
        fail("skeleton has no joint named '" + name + "'");
    }

    /// Exactly one root; every parent precedes its children; names unique.
    void validate() const {
        check(!joints.empty(), "skeleton has no joints");
        int roots = 0;
        for (int i = 0; i < joint_count(); ++i) {
            const Joint& j = joints[i];
            if (j.parent < 0)
                ++roots;
            else
                check(j.parent < i, "joint '" + j.name + "': parent must precede child");
            check(j.rest_pos.finite(), "joint '" + j.name + "': non-finite rest position");
            for (int k = 0; k < i; ++k)
                check(joints[k].name != j.name, "duplicate joint name '" + j.name + "'");
        }
        check(roots == 1, "skeleton must have exactly one root, found " +
                              std::to_string(roots));
    }

    /// Bone segments: one per non-root joint, owned by the joint at the
    /// proximal (parent) end so that rotating a joint swings the segment
    /// that hangs from it.
    struct Bone {
        int joint;  // owner
        Vec3 a, b;  // rest-space endpoints, a = owner position
    };
    std::vector<Bone> bones() const {
        std::vector<Bone> out;
        for (const Joint& j : joints)
            if (j.parent >= 0)
                out.push_back({j.parent, joints[j.parent].rest_pos, j.rest_pos});
        return out;
    }
};

/// Local joint rotations about each joint's rest position, plus a root
/// translation. The identity pose leaves geometry untouched.
struct Pose {
    std::vector<Quat> rotations;
    Vec3 root_translation;

    static Pose identity(int joint_count) {
        Pose p;
        p.rotations.assign(static_cast<size_t>(joint_count), Quat{});
        return p;
    }
};

/// World transforms mapping rest space to posed space, one per joint:
///   M_root = T(root_translation) ∘ R(q_root @ rest_root)
///   M_j    = M_parent ∘ R(q_j @ rest_j)
inline std::vector<Transform> pose_transforms(const Skeleton& skel, const Pose& pose) {
    skel.validate();
    check(static_cast<int>(pose.rotations.size()) == skel.joint_count(),
          "pose has " + std::to_string(pose.rotations.size()) + " rotations for " +
              std::to_string(skel.joint_count()) + " joints");
    auto pivot_rotation = [](const Quat& q, const Vec3& p) {
        // Translate(p) ∘ Rotate(q) ∘ Translate(-p)
        return Transform{q, p - q.rotate(p)};
    };
    std::vector<Transform> out(skel.joints.size());
    for (int i = 0; i < skel.joint_count(); ++i) {
        const Joint& j = skel.joints[i];
        Transform local = pivot_rotation(pose.rotations[i].normalized(), j.rest_pos);
        if (j.parent < 0) {
            Transform root_shift{Quat{}, pose.root_translation};
            out[i] = root_shift.compose(local);
        } else {
            out[i] = out[j.parent].compose(local);
        }
    }
    return out;
}

/// Sparse per-vertex joint influences; each row's weights sum to 1.
struct SkinWeights {
    int joint_count = 0;
    std::vector<std::vector<std::pair<int, double>>> rows;  // (joint, weight)

    int vertex_count() const { return static_cast<int>(rows.size()); }

    void validate() const {
        for (size_t i = 0; i < rows.size(); ++i) {
            check(!rows[i].empty(), "vertex " + std::to_string(i) + " has no influences");
            double sum = 0.0;
            for (auto [j, w] : rows[i]) {
                check(j >= 0 && j < joint_count,
                      "vertex " + std::to_string(i) + ": joint index out of range");
                check(w >= 0.0 && is_finite(w),
                      "vertex " + std::to_string(i) + ": bad weight");
                sum += w;
            }
            check(std::fabs(sum - 1.0) < 1e-9,
                  "vertex " + std::to_string(i) + ": weights sum to " + std::to_string(sum));
        }
    }
};

/// Weights fall off as exp(-d²/falloff²) with d the distance to the nearest
/// bone segment owned by each joint; only the strongest `max_influences`
/// joints are kept and renormalized. A vertex far from every bone falls back
/// to its single nearest joint.
inline SkinWeights distance_skin_weights(const std::vector<Vec3>& verts,
                                         const Skeleton& skel, double falloff,
                                         int max_influences = 4) {
    check(falloff > 0.0, "falloff must be positive");
    check(max_influences >= 1, "need at least one influence");
    auto bones = skel.bones();
    check(!bones.empty(), "skeleton has no bones");

    auto seg_dist2 = [](const Vec3& p, const Vec3& a, const Vec3& b) {
        Vec3 ab = b - a;
        double len2 = ab.norm2();
        double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        return dist2(p, a + ab * t);
    };

    SkinWeights out;
    out.joint_count = skel.joint_count();
    out.rows.resize(verts.size());
    double inv_f2 = 1.0 / (falloff * falloff);
    std::vector<double> best_d2(static_cast<size_t>(skel.joint_count()));
    for (size_t vi = 0; vi < verts.size(); ++vi) {
        std::fill(best_d2.begin(), best_d2.end(), -1.0);
        for (const auto& bone : bones) {
            double d2 = seg_dist2(verts[vi], bone.a, bone.b);
            if (best_d2[bone.joint] < 0.0 || d2 < best_d2[bone.joint])
                best_d2[bone.joint] = d2;
        }
        std::vector<std::pair<int, double>> cand;
        for (int j = 0; j < skel.joint_count(); ++j)
            if (best_d2[j] >= 0.0) cand.push_back({j, std::exp(-best_d2[j] * inv_f2)});
        std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        if (static_cast<int>(cand.size()) > max_influences) cand.resize(max_influences);
        double sum = 0.0;
        for (auto& [j, w] : cand) sum += w;
        if (sum <= 0.0) {
            // all weights underflowed; snap to the nearest joint
            int nearest = 0;
            double nd = -1.0;
            for (int j = 0; j < skel.joint_count(); ++j)
                if (best_d2[j] >= 0.0 && (nd < 0.0 || best_d2[j] < nd)) {
                    nd = best_d2[j];
                    nearest = j;
                }
            out.rows[vi] = {{nearest, 1.0}};
        } else {
            for (auto& [j, w] : cand) w /= sum;
            out.rows[vi] = std::move(cand);
        }
    }
    return out;
}

/// Dual-quaternion skinning. Each vertex blends the dual quaternions of its
/// influencing joints; quaternions are sign-aligned with the vertex's
/// largest-weight joint before blending so antipodal pairs don't cancel.
inline std::vector<Vec3> dual_quaternion_skin(const std::vector<Vec3>& rest,
                                              const SkinWeights& weights,
                                              const std::vector<Transform>& joint_xf) {
    check(weights.vertex_count() == static_cast<int>(rest.size()),
          "weight rows (" + std::to_string(weights.vertex_count()) +
              ") != vertex count (" + std::to_string(rest.size()) + ")");
    check(static_cast<int>(joint_xf.size()) == weights.joint_count,
          "transform count != joint count");

    std::vector<DualQuat> dq(joint_xf.size());
    for (size_t j = 0; j < joint_xf.size(); ++j) dq[j] = DualQuat::from_transform(joint_xf[j]);

    std::vector<Vec3> out(rest.size());
    for (size_t vi = 0; vi < rest.size(); ++vi) {
        const auto& row = weights.rows[vi];
        check(!row.empty(), "vertex " + std::to_string(vi) + " has no influences");
        // largest-weight influence is the sign reference
        int pivot = row[0].first;
        double wmax = row[0].second;
        for (const auto& [j, w] : row)
            if (w > wmax) {
                wmax = w;
                pivot = j;
            }
        const Quat& ref = dq[pivot].real;
        DualQuat blend;
        blend.real = Quat{0, 0, 0, 0};
        blend.dual = Quat{0, 0, 0, 0};
        for (const auto& [j, w] : row) {
            double sign = ref.dot(dq[j].real) < 0.0 ? -w : w;
            blend = blend + dq[j] * sign;
        }
        check(blend.real_norm() > 1e-12,
              "vertex " + std::to_string(vi) + ": degenerate dual quaternion blend");
        out[vi] = blend.transform(rest[vi]);
    }
    return out;
}

} // namespace drape
