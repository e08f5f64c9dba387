#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "drape/mesh.hpp"
#include "drape/skinning.hpp"

namespace drape {

// ---- capsule body ----------------------------------------------------------

/// Sphere-swept segment with linearly varying radius (round cone).
struct Capsule {
    Vec3 a, b;
    double ra = 0.0, rb = 0.0;
};

namespace detail {
inline double sgn(double x) { return (x > 0) - (x < 0); }
} // namespace detail

/// Exact signed distance to the convex hull of the two end spheres.
/// Negative inside, zero on the surface.
inline double capsule_sdf(const Vec3& p, const Capsule& c) {
    Vec3 ba = c.b - c.a;
    double l2 = ba.dot(ba);
    if (l2 < 1e-18) return dist(p, c.a) - std::max(c.ra, c.rb);

    double rr = c.ra - c.rb;
    double a2 = l2 - rr * rr;
    if (a2 <= 0.0) {
        // one end sphere swallows the other
        return std::min(dist(p, c.a) - c.ra, dist(p, c.b) - c.rb);
    }
    double il2 = 1.0 / l2;
    Vec3 pa = p - c.a;
    double y = pa.dot(ba);
    double z = y - l2;
    Vec3 w = pa * l2 - ba * y;
    double x2 = w.dot(w);
    double y2 = y * y * l2;
    double z2 = z * z * l2;
    double k = detail::sgn(rr) * rr * rr * x2;
    if (detail::sgn(z) * a2 * z2 > k) return std::sqrt(x2 + z2) * il2 - c.rb;
    if (detail::sgn(y) * a2 * y2 < k) return std::sqrt(x2 + y2) * il2 - c.ra;
    return (std::sqrt(x2 * a2 * il2) + y * rr) * il2 - c.ra;
}

// ---- body generation -------------------------------------------------------

/// Humanoid proportions. Radii are meters at scale 1; the length fields are
/// multipliers on the reference limb lengths.
struct BodyShape {
    double scale = 1.0;
    double torso_radius = 0.13;
    double arm_radius = 0.045;
    double leg_radius = 0.07;
    double arm_length = 1.0;
    double leg_length = 1.0;
    double shoulder_width = 1.0;

    void validate() const {
        auto in = [](double v, double lo, double hi, const char* what) {
            check(v >= lo && v <= hi,
                  std::string(what) + " = " + std::to_string(v) + " outside [" +
                      std::to_string(lo) + ", " + std::to_string(hi) + "]");
        };
        in(scale, 0.5, 2.0, "scale");
        in(torso_radius, 0.08, 0.22, "torso_radius");
        in(arm_radius, 0.02, 0.09, "arm_radius");
        in(leg_radius, 0.04, 0.12, "leg_radius");
        in(arm_length, 0.6, 1.4, "arm_length");
        in(leg_length, 0.6, 1.4, "leg_length");
        in(shoulder_width, 0.6, 1.4, "shoulder_width");
    }
};

/// 17-joint standing figure, T-pose, feet near y=0, head top ≈ 1.65·scale.
/// +x is the figure's left, +y up.
inline Skeleton humanoid_skeleton(const BodyShape& s) {
    s.validate();
    double sc = s.scale;
    double sh = 0.18 * s.shoulder_width;
    double ua = 0.28 * s.arm_length;   // upper arm
    double fa = 0.26 * s.arm_length;   // forearm
    double th = 0.40 * s.leg_length;   // thigh
    double sn = 0.42 * s.leg_length;   // shin

    Skeleton k;
    auto add = [&](const std::string& name, int parent, Vec3 p) {
        k.joints.push_back({name, parent, p * sc});
        return static_cast<int>(k.joints.size()) - 1;
    };
    int pelvis = add("pelvis", -1, {0, 0.95, 0});
    int spine = add("spine", pelvis, {0, 1.08, 0});
    int chest = add("chest", spine, {0, 1.22, 0});
    int neck = add("neck", chest, {0, 1.40, 0});
    add("head", neck, {0, 1.52, 0});
    for (int side = 0; side < 2; ++side) {
        double sx = side == 0 ? 1.0 : -1.0;
        std::string pre = side == 0 ? "l_" : "r_";
        int shoulder = add(pre + "shoulder", chest, {sx * sh, 1.36, 0});
        int elbow = add(pre + "elbow", shoulder, {sx * (sh + ua), 1.36, 0});
        add(pre + "wrist", elbow, {sx * (sh + ua + fa), 1.36, 0});
        int hip = add(pre + "hip", pelvis, {sx * 0.10, 0.90, 0});
        int knee = add(pre + "knee", hip, {sx * 0.10, 0.90 - th, 0});
        add(pre + "ankle", knee, {sx * 0.10, 0.90 - th - sn, 0});
    }
    k.validate();
    return k;
}

/// Tessellation density for the capsule surfaces.
struct BodyTess {
    int segments = 10;     // vertices per ring
    int side_stacks = 3;   // bands along the shaft
    int cap_stacks = 2;    // bands per hemispherical cap

    void validate() const {
        check(segments >= 3 && side_stacks >= 1 && cap_stacks >= 1,
              "body tessellation: segments >= 3, stacks >= 1");
    }
};

/// Posed capsule body: exact signed-distance queries against the capsule
/// union plus a watertight-per-capsule triangle tessellation of it.
struct BodyProxy {
    Skeleton skeleton;  // rest skeleton the capsules were built from
    Pose pose;
    std::vector<Capsule> capsules;
    TriMesh mesh;

    double signed_distance(const Vec3& p) const {
        double d = std::numeric_limits<double>::infinity();
        for (const Capsule& c : capsules) d = std::min(d, capsule_sdf(p, c));
        return d;
    }

    /// Central-difference gradient of the signed distance (unit length away
    /// from the medial axis).
    Vec3 sdf_gradient(const Vec3& p) const {
        const double h = 1e-6;
        return {(signed_distance({p.x + h, p.y, p.z}) - signed_distance({p.x - h, p.y, p.z})) /
                    (2 * h),
                (signed_distance({p.x, p.y + h, p.z}) - signed_distance({p.x, p.y - h, p.z})) /
                    (2 * h),
                (signed_distance({p.x, p.y, p.z + h}) - signed_distance({p.x, p.y, p.z - h})) /
                    (2 * h)};
    }
};

namespace detail {

/// Any unit vector orthogonal to w.
inline Vec3 orthogonal_to(const Vec3& w) {
    Vec3 t = std::fabs(w.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    return w.cross(t).normalized();
}

/// Appends a watertight tapered capsule: pole, bottom cap bands, shaft bands,
/// top cap bands, pole.
inline void append_capsule_mesh(TriMesh& m, const Capsule& c, const BodyTess& t) {
    Vec3 w = (c.b - c.a).normalized();
    Vec3 u = orthogonal_to(w);
    Vec3 v = w.cross(u);
    int base = m.vertex_count();
    int n = t.segments;

    std::vector<std::pair<Vec3, double>> rings;  // (center, radius)
    for (int s = t.cap_stacks - 1; s >= 1; --s) {
        double ang = kPi / 2 * s / t.cap_stacks;
        rings.push_back({c.a - w * (c.ra * std::cos(ang)), c.ra * std::sin(ang)});
    }
    for (int s = 0; s <= t.side_stacks; ++s) {
        double f = static_cast<double>(s) / t.side_stacks;
        rings.push_back({c.a + (c.b - c.a) * f, c.ra + (c.rb - c.ra) * f});
    }
    for (int s = 1; s < t.cap_stacks; ++s) {
        double ang = kPi / 2 * s / t.cap_stacks;
        rings.push_back({c.b + w * (c.rb * std::sin(ang)), c.rb * std::cos(ang)});
    }

    m.vertices.push_back(c.a - w * c.ra);  // bottom pole
    for (const auto& [center, r] : rings)
        for (int i = 0; i < n; ++i) {
            double ang = 2 * kPi * i / n;
            m.vertices.push_back(center + (u * std::cos(ang) + v * std::sin(ang)) * r);
        }
    m.vertices.push_back(c.b + w * c.rb);  // top pole

    auto ring_vertex = [&](int ring, int i) { return base + 1 + ring * n + i % n; };
    int ring_count = static_cast<int>(rings.size());
    for (int i = 0; i < n; ++i)  // bottom fan
        m.faces.push_back({base, ring_vertex(0, i + 1), ring_vertex(0, i)});
    for (int r = 0; r + 1 < ring_count; ++r)
        for (int i = 0; i < n; ++i) {
            m.faces.push_back({ring_vertex(r, i), ring_vertex(r, i + 1), ring_vertex(r + 1, i)});
            m.faces.push_back(
                {ring_vertex(r, i + 1), ring_vertex(r + 1, i + 1), ring_vertex(r + 1, i)});
        }
    int top = base + 1 + ring_count * n;
    for (int i = 0; i < n; ++i)  // top fan
        m.faces.push_back({top, ring_vertex(ring_count - 1, i), ring_vertex(ring_count - 1, i + 1)});
}

} // namespace detail

/// Builds the posed capsule body. Capsule endpoints are the posed joint
/// positions; radii depend on the body part and scale with the shape.
inline BodyProxy generate_body(const BodyShape& shape, const Pose& pose,
                               const BodyTess& tess = {}) {
    shape.validate();
    tess.validate();
    BodyProxy body;
    body.skeleton = humanoid_skeleton(shape);
    body.pose = pose;
    auto xf = pose_transforms(body.skeleton, pose);

    double sc = shape.scale;
    double t = shape.torso_radius * sc;
    double a = shape.arm_radius * sc;
    double l = shape.leg_radius * sc;
    double head = 0.10 * sc;
    // radii at the (proximal, distal) ends of the bone ending at each joint
    auto radii = [&](const std::string& child) -> std::pair<double, double> {
        std::string part = child.size() > 2 && child[1] == '_' ? child.substr(2) : child;
        if (part == "spine") return {1.08 * t, 1.00 * t};
        if (part == "chest") return {1.00 * t, 0.92 * t};
        if (part == "neck") return {0.92 * t, 0.38 * t};
        if (part == "head") return {0.38 * t, head};
        if (part == "shoulder") return {1.5 * a, 1.2 * a};
        if (part == "elbow") return {1.1 * a, 0.9 * a};
        if (part == "wrist") return {0.9 * a, 0.7 * a};
        if (part == "hip") return {1.2 * l, 1.05 * l};
        if (part == "knee") return {1.0 * l, 0.8 * l};
        if (part == "ankle") return {0.8 * l, 0.6 * l};
        fail("no capsule radii for joint '" + child + "'");
    };

    // one capsule per bone, moved rigidly by the proximal (parent) joint
    for (const Joint& child : body.skeleton.joints) {
        if (child.parent < 0) continue;
        auto [ra, rb] = radii(child.name);
        const Vec3& a = body.skeleton.joints[child.parent].rest_pos;
        Capsule c{xf[child.parent].apply(a), xf[child.parent].apply(child.rest_pos), ra, rb};
        check(std::fabs(c.ra - c.rb) < 0.95 * dist(c.a, c.b),
              "capsule for '" + child.name + "' tapers faster than its length");
        body.capsules.push_back(c);
        detail::append_capsule_mesh(body.mesh, c, tess);
    }

    // one transverse hip-to-hip capsule: the pelvis mass must be a single
    // convex lobe, or a hanging waistband can warp through the notches
    // between the leg capsules and slide off
    {
        const Skeleton& skel = body.skeleton;
        double rp = std::max(1.5 * l, 0.9 * t);
        const Transform& root = xf[skel.find("pelvis")];
        Capsule c{root.apply(skel.joints[skel.find("l_hip")].rest_pos),
                  root.apply(skel.joints[skel.find("r_hip")].rest_pos), rp, rp};
        body.capsules.push_back(c);
        detail::append_capsule_mesh(body.mesh, c, tess);
    }
    body.mesh.validate();
    return body;
}

// ---- garment templates -----------------------------------------------------

enum class TemplateKind { kGrid, kTube, kTshirt };

inline std::string to_string(TemplateKind k) {
    switch (k) {
        case TemplateKind::kGrid: return "grid";
        case TemplateKind::kTube: return "tube";
        case TemplateKind::kTshirt: return "tshirt";
    }
    fail("bad template kind value");
}

inline TemplateKind template_kind_from_string(const std::string& s) {
    if (s == "grid") return TemplateKind::kGrid;
    if (s == "tube") return TemplateKind::kTube;
    if (s == "tshirt") return TemplateKind::kTshirt;
    fail("unknown template kind '" + s + "' (expected grid, tube, or tshirt)");
}

/// Sizes are relative to the body shape so templates fit any validated body:
/// radii are multipliers on the matching body radius, spans are fractions of
/// skeleton segments.
struct TemplateParams {
    int grid_w = 20, grid_h = 20;
    double grid_spacing = 0.04;     // meters at scale 1
    double grid_clearance = 0.05;   // gap above the head

    int tube_around = 16, tube_along = 10;
    double tube_radius_factor = 1.35;  // × torso radius
    double tube_length = 0.50;         // meters at scale 1, hanging from the waist

    int shirt_around = 16, shirt_along = 8;
    double shirt_radius_factor = 1.25;
    int sleeve_around = 8, sleeve_along = 5;
    double sleeve_radius_factor = 1.45;  // × arm radius
    double sleeve_start = 0.06, sleeve_end = 0.40;  // along the arm, meters at scale 1

    double weight_falloff = 0.15;  // skinning falloff, meters at scale 1
    int max_influences = 4;

    void validate() const {
        check(grid_w >= 2 && grid_h >= 2 && grid_spacing > 0, "grid params must be positive");
        check(tube_around >= 3 && tube_along >= 2, "tube needs >= 3 around, >= 2 along");
        check(shirt_around >= 3 && shirt_along >= 2 && sleeve_around >= 3 && sleeve_along >= 2,
              "shirt resolution too small");
        check(tube_radius_factor > 1.0 && shirt_radius_factor > 1.0 &&
                  sleeve_radius_factor > 1.0,
              "garment radii must exceed the body radius");
        check(tube_length > 0 && sleeve_end > sleeve_start && sleeve_start >= 0,
              "bad garment spans");
        check(weight_falloff > 0 && max_influences >= 1, "bad skinning params");
    }
};

struct GarmentTemplate {
    TriMesh mesh;
    SkinWeights weights;
};

namespace detail {

/// Open cylinder: `along` rings of `around` vertices from c0 to c1, radius
/// lerped between r0 and r1.
inline void append_open_tube(TriMesh& m, const Vec3& c0, const Vec3& c1, double r0, double r1,
                             int around, int along) {
    Vec3 w = (c1 - c0).normalized();
    Vec3 u = orthogonal_to(w);
    Vec3 v = w.cross(u);
    int base = m.vertex_count();
    for (int s = 0; s < along; ++s) {
        double f = static_cast<double>(s) / (along - 1);
        Vec3 center = c0 + (c1 - c0) * f;
        double r = r0 + (r1 - r0) * f;
        for (int i = 0; i < around; ++i) {
            double ang = 2 * kPi * i / around;
            m.vertices.push_back(center + (u * std::cos(ang) + v * std::sin(ang)) * r);
        }
    }
    auto at = [&](int s, int i) { return base + s * around + i % around; };
    for (int s = 0; s + 1 < along; ++s)
        for (int i = 0; i < around; ++i) {
            m.faces.push_back({at(s, i), at(s, i + 1), at(s + 1, i)});
            m.faces.push_back({at(s, i + 1), at(s + 1, i + 1), at(s + 1, i)});
        }
}

} // namespace detail

/// Rest-pose garment template plus distance-based skin weights against the
/// body's rest skeleton.
inline GarmentTemplate generate_garment_template(TemplateKind kind, const TemplateParams& p,
                                                 const BodyShape& shape) {
    p.validate();
    shape.validate();
    Skeleton skel = humanoid_skeleton(shape);
    double sc = shape.scale;

    GarmentTemplate out;
    TriMesh& m = out.mesh;
    if (kind == TemplateKind::kGrid) {
        // horizontal sheet hovering over the head; it drapes down onto the figure
        double y = skel.joints[skel.find("head")].rest_pos.y + (0.10 + p.grid_clearance) * sc;
        double spacing = p.grid_spacing * sc;
        for (int j = 0; j < p.grid_h; ++j)
            for (int i = 0; i < p.grid_w; ++i)
                m.vertices.push_back({(i - (p.grid_w - 1) / 2.0) * spacing, y,
                                      (j - (p.grid_h - 1) / 2.0) * spacing});
        for (int j = 0; j + 1 < p.grid_h; ++j)
            for (int i = 0; i + 1 < p.grid_w; ++i) {
                int a = j * p.grid_w + i;
                int b = a + 1;
                int c = a + p.grid_w;
                int d = c + 1;
                m.faces.push_back({a, b, c});
                m.faces.push_back({b, d, c});
            }
    } else if (kind == TemplateKind::kTube) {
        // skirt: hangs from the waist, caught by the hip capsules
        double top = skel.joints[skel.find("spine")].rest_pos.y;
        double r = p.tube_radius_factor * shape.torso_radius * sc;
        detail::append_open_tube(m, {0, top, 0}, {0, top - p.tube_length * sc, 0}, r, r,
                                 p.tube_around, p.tube_along);
    } else {
        // t-shirt: torso tube whose top ring rests on the shoulders, plus two
        // disconnected sleeve tubes around the upper arms
        double top = skel.joints[skel.find("neck")].rest_pos.y + 0.04 * sc;
        double bottom = skel.joints[skel.find("spine")].rest_pos.y - 0.06 * sc;
        double r = p.shirt_radius_factor * shape.torso_radius * sc;
        detail::append_open_tube(m, {0, top, 0}, {0, bottom, 0}, r, r, p.shirt_around,
                                 p.shirt_along);
        double sleeve_r = p.sleeve_radius_factor * shape.arm_radius * sc;
        for (const char* side : {"l_", "r_"}) {
            Vec3 s = skel.joints[skel.find(std::string(side) + "shoulder")].rest_pos;
            Vec3 e = skel.joints[skel.find(std::string(side) + "elbow")].rest_pos;
            Vec3 dir = (e - s).normalized();
            detail::append_open_tube(m, s + dir * (p.sleeve_start * sc),
                                     s + dir * (p.sleeve_end * sc), sleeve_r, sleeve_r,
                                     p.sleeve_around, p.sleeve_along);
        }
    }
    m.validate();
    out.weights = distance_skin_weights(m.vertices, skel, p.weight_falloff * sc,
                                        p.max_influences);
    return out;
}

// ---- quasi-static drape ----------------------------------------------------

struct SimConfig {
    int max_outer_steps = 600;
    int constraint_iterations = 10;
    double step_dt = 0.016;           // pseudo-time step scaling the gravity kick
    Vec3 gravity = {0, -9.81, 0};
    double stretch_stiffness = 1.0;
    double bend_stiffness = 0.1;  // cloth folds easily; stiff values fight the contacts
    double strain_limit = 1.03;   // hard cap on edge elongation (× rest length)
    double friction = 1.0;        // static friction: fraction of tangential slide
                                  // cancelled at contacts (1 = fully sticking)
    double collision_margin = -1.0;   // < 0: use 0.2 × body mesh avg edge length
    double tolerance = 2e-4;          // max vertex displacement per outer step

    void validate() const {
        check(max_outer_steps > 0 && constraint_iterations > 0, "iteration counts must be > 0");
        check(step_dt > 0 && tolerance > 0, "step_dt and tolerance must be > 0");
        check(stretch_stiffness >= 0 && stretch_stiffness <= 1 && bend_stiffness >= 0 &&
                  bend_stiffness <= 1,
              "stiffnesses must lie in [0, 1]");
        check(strain_limit >= 1.0, "strain_limit must be at least 1");
        check(friction >= 0 && friction <= 1, "friction must lie in [0, 1]");
        check(gravity.finite(), "gravity must be finite");
    }

    double effective_margin(const BodyProxy& body) const {
        return collision_margin >= 0 ? collision_margin : 0.2 * avg_edge_length(body.mesh);
    }
};

struct DrapeResult {
    TriMesh mesh;
    bool converged = false;
    int steps = 0;
    double residual = 0.0;  // max vertex displacement in the final outer step
};

/// Gauss-Seidel position-based drape to quasi-static equilibrium: per outer
/// step a gravity kick, then `constraint_iterations` sweeps of edge and
/// two-ring distance constraints (rest lengths from `rest`, which defaults to
/// the start mesh), each followed by projection of penetrating vertices to
/// the collision margin. Stops when no vertex moved more than the tolerance
/// in a full outer step. Deterministic: fixed iteration order, no randomness.
inline DrapeResult drape(const TriMesh& start, const BodyProxy& body, const SimConfig& cfg,
                         const TriMesh* rest = nullptr) {
    cfg.validate();
    start.validate();
    const TriMesh& ref = rest ? *rest : start;
    check(ref.vertex_count() == start.vertex_count() && ref.faces == start.faces,
          "drape: rest template does not match the start mesh");

    auto edges = unique_edges(ref);
    auto bend_pairs = two_ring_pairs(ref);
    std::vector<double> edge_rest(edges.size()), bend_rest(bend_pairs.size());
    for (size_t e = 0; e < edges.size(); ++e)
        edge_rest[e] = dist(ref.vertices[edges[e].first], ref.vertices[edges[e].second]);
    for (size_t e = 0; e < bend_pairs.size(); ++e)
        bend_rest[e] = dist(ref.vertices[bend_pairs[e].first], ref.vertices[bend_pairs[e].second]);

    double margin = cfg.effective_margin(body);
    Vec3 kick = cfg.gravity * (cfg.step_dt * cfg.step_dt);

    auto project_pair = [](Vec3& pi, Vec3& pj, double rest_len, double k) {
        Vec3 d = pi - pj;
        double len = d.norm();
        if (len < 1e-12) return;  // coincident: no defined direction
        Vec3 corr = d * (0.5 * k * (len - rest_len) / len);
        pi -= corr;
        pj += corr;
    };
    auto push_out = [&](Vec3& p, const Vec3* ref) {
        double sd = body.signed_distance(p);
        if (sd >= margin) return false;
        Vec3 g = body.sdf_gradient(p);
        double gn = g.norm();
        // medial-axis fallback: any fixed direction escapes the body
        Vec3 dir = gn > 1e-9 ? g / gn : Vec3{0, 1, 0};
        p += dir * (margin - sd);
        if (ref && cfg.friction > 0) {
            // static friction: cancel the tangential slide accumulated since
            // the start of the step; frictionless contact cycling otherwise
            // ratchets garments around geometry that should hold them
            Vec3 slide = p - *ref;
            slide -= dir * slide.dot(dir);
            p -= slide * cfg.friction;
        }
        return true;
    };

    DrapeResult out;
    out.mesh = start;
    std::vector<Vec3>& pos = out.mesh.vertices;
    for (int step = 0; step < cfg.max_outer_steps; ++step) {
        std::vector<Vec3> before = pos;
        for (Vec3& p : pos) p += kick;
        for (int it = 0; it < cfg.constraint_iterations; ++it) {
            for (size_t e = 0; e < edges.size(); ++e)
                project_pair(pos[edges[e].first], pos[edges[e].second], edge_rest[e],
                             cfg.stretch_stiffness);
            for (size_t e = 0; e < bend_pairs.size(); ++e)
                project_pair(pos[bend_pairs[e].first], pos[bend_pairs[e].second], bend_rest[e],
                             cfg.bend_stiffness);
            // collisions are projected inside the loop so stretch and contact
            // co-converge; deferring them lets contact pushes accumulate as
            // unrecovered strain
            for (size_t i = 0; i < pos.size(); ++i) push_out(pos[i], &before[i]);
            // hard strain limit, applied after the pushes so it has the last
            // word: contact projections otherwise supply unlimited stretch,
            // letting a garment yawn open and creep through geometry that
            // should block it (any penetration this reintroduces is small and
            // healed by the next iteration or the final projection pass)
            for (size_t e = 0; e < edges.size(); ++e) {
                double cap = cfg.strain_limit * edge_rest[e];
                Vec3 d = pos[edges[e].first] - pos[edges[e].second];
                double len = d.norm();
                if (len > cap) {
                    Vec3 corr = d * (0.5 * (len - cap) / len);
                    pos[edges[e].first] -= corr;
                    pos[edges[e].second] += corr;
                }
            }
        }

        // heal any penetration the strain cap reintroduced *before* measuring
        // the step, so the convergence test covers the exact state we return;
        // measuring first would certify a state the healing then perturbs,
        // and re-draping that perturbed state needs many steps to re-settle
        for (int round = 0; round < 64; ++round) {
            bool moved = false;
            for (size_t i = 0; i < pos.size(); ++i) moved |= push_out(pos[i], &before[i]);
            if (!moved) break;
        }

        out.residual = 0.0;
        for (size_t i = 0; i < pos.size(); ++i)
            out.residual = std::max(out.residual, dist(pos[i], before[i]));
        out.steps = step + 1;
        if (out.residual < cfg.tolerance) {
            out.converged = true;
            break;
        }
    }

    // the no-penetration guarantee is unconditional, converged or not
    for (int round = 0; round < 64; ++round) {
        bool moved = false;
        for (Vec3& p : pos) moved |= push_out(p, nullptr);
        if (!moved) break;
    }
    for (const Vec3& p : pos)
        check(body.signed_distance(p) >= margin - 1e-6, "drape: projection failed to clear body");
    return out;
}

} // namespace drape
