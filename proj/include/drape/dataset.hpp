#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "drape/common.hpp"
#include "drape/rng.hpp"
#include "drape/sim.hpp"
#include "drape/skinning.hpp"

namespace drape {

using Json = nlohmann::json;

struct Range {
    double lo = 0.0, hi = 0.0;

    double sample(Rng& rng) const { return rng.uniform(lo, hi); }
    double midpoint() const { return 0.5 * (lo + hi); }
    /// Position of v inside the range, 0.5 when the range is a point.
    double normalize(double v) const { return hi > lo ? (v - lo) / (hi - lo) : 0.5; }
};

/// Body-shape sampling ranges. Defaults are deliberately narrower than the
/// validation bounds in BodyShape: extreme proportions make poor drape
/// targets (garments slide past degenerate limbs).
struct ShapeRanges {
    Range scale = {0.9, 1.1};
    Range torso_radius = {0.11, 0.15};
    Range arm_radius = {0.035, 0.055};
    Range leg_radius = {0.06, 0.08};
    Range arm_length = {0.9, 1.1};
    Range leg_length = {0.9, 1.1};
    Range shoulder_width = {0.9, 1.1};

    void validate() const {
        for (const Range* r : {&scale, &torso_radius, &arm_radius, &leg_radius, &arm_length,
                               &leg_length, &shoulder_width})
            check(r->lo <= r->hi, "shape range: lo > hi");
        // the extremes must themselves be valid bodies
        corner(false).validate();
        corner(true).validate();
    }

    BodyShape sample(Rng& rng) const {
        BodyShape s;
        s.scale = scale.sample(rng);
        s.torso_radius = torso_radius.sample(rng);
        s.arm_radius = arm_radius.sample(rng);
        s.leg_radius = leg_radius.sample(rng);
        s.arm_length = arm_length.sample(rng);
        s.leg_length = leg_length.sample(rng);
        s.shoulder_width = shoulder_width.sample(rng);
        return s;
    }

    /// Shape parameters normalized into [0,1] by these ranges; used as the
    /// per-sample condition vector.
    std::vector<double> normalize(const BodyShape& s) const {
        return {scale.normalize(s.scale),
                torso_radius.normalize(s.torso_radius),
                arm_radius.normalize(s.arm_radius),
                leg_radius.normalize(s.leg_radius),
                arm_length.normalize(s.arm_length),
                leg_length.normalize(s.leg_length),
                shoulder_width.normalize(s.shoulder_width)};
    }

private:
    BodyShape corner(bool high) const {
        auto pick = [&](const Range& r) { return high ? r.hi : r.lo; };
        return {pick(scale), pick(torso_radius), pick(arm_radius), pick(leg_radius),
                pick(arm_length), pick(leg_length), pick(shoulder_width)};
    }
};

// ---- pose bank ---------------------------------------------------------------

/// One randomized joint rotation: an angle drawn uniformly from [deg_lo,
/// deg_hi] about a fixed axis.
struct PoseDelta {
    std::string joint;
    Vec3 axis;
    double deg_lo = 0.0, deg_hi = 0.0;
};

/// A named family of poses; sampling draws every delta independently.
struct PoseArchetype {
    std::string name;
    std::vector<PoseDelta> deltas;
};

/// Drape-safe pose families per garment. The grid sheet needs near-horizontal
/// arms to tent on (it slides off the bare skull), skirts want leg and torso
/// variety, shirts tolerate large arm swings.
inline std::vector<PoseArchetype> default_pose_bank(TemplateKind kind) {
    const Vec3 x{1, 0, 0}, y{0, 1, 0}, z{0, 0, 1};
    switch (kind) {
        case TemplateKind::kGrid:
            return {{"still",
                     {{"spine", x, -3, 3}, {"l_shoulder", z, -5, 5}, {"r_shoulder", z, -5, 5}}},
                    {"arm-sway",
                     {{"l_shoulder", y, -12, 12},
                      {"r_shoulder", y, -12, 12},
                      {"spine", x, -4, 4}}}};
        case TemplateKind::kTube:
            return {{"still",
                     {{"l_hip", x, -3, 3}, {"r_hip", x, -3, 3}, {"spine", x, -3, 3}}},
                    {"stride",
                     {{"l_hip", x, -18, -6},
                      {"r_hip", x, 6, 18},
                      {"l_knee", x, 0, 10},
                      {"spine", x, -4, 4}}},
                    {"wide-stance",
                     {{"l_hip", z, 4, 14}, {"r_hip", z, -14, -4}, {"spine", z, -4, 4}}},
                    {"lean",
                     {{"spine", x, -8, 8}, {"chest", x, -6, 6}, {"l_hip", z, 0, 6},
                      {"r_hip", z, -6, 0}}}};
        case TemplateKind::kTshirt:
            return {{"still",
                     {{"l_shoulder", z, -6, 6}, {"r_shoulder", z, -6, 6},
                      {"spine", x, -3, 3}}},
                    {"arms-down",
                     {{"l_shoulder", z, -35, -10},
                      {"r_shoulder", z, 10, 35},
                      {"l_elbow", z, -10, 0},
                      {"r_elbow", z, 0, 10}}},
                    {"arms-forward",
                     {{"l_shoulder", y, 8, 25},
                      {"r_shoulder", y, -25, -8},
                      {"spine", x, -4, 4}}},
                    {"lean", {{"spine", x, -8, 8}, {"chest", x, -6, 6}}}};
    }
    fail("bad template kind value");
}

/// Picks one archetype, then draws each of its deltas. Deltas for the same
/// joint compose in listed order.
inline Pose sample_pose(const Skeleton& skel, const std::vector<PoseArchetype>& bank,
                        Rng& rng) {
    Pose p = Pose::identity(skel.joint_count());
    if (bank.empty()) return p;
    const PoseArchetype& a = bank[rng.index(static_cast<int>(bank.size()))];
    for (const PoseDelta& d : a.deltas) {
        check(d.deg_lo <= d.deg_hi, "pose delta '" + d.joint + "': deg_lo > deg_hi");
        int j = skel.find(d.joint);
        double ang = deg_to_rad(rng.uniform(d.deg_lo, d.deg_hi));
        p.rotations[j] = p.rotations[j] * Quat::from_axis_angle(d.axis, ang);
    }
    return p;
}

// ---- samples -----------------------------------------------------------------

/// One training/evaluation record: a posed body, the garment skinned onto it,
/// and the simulated drape. `rest` is the undeformed template whose edge
/// lengths define the cloth; `skinned` is both the network input and the
/// skinning baseline; `gt` is the quasi-static equilibrium.
struct DrapeSample {
    std::string template_id;
    BodyShape shape;
    Pose pose;
    TriMesh body;
    TriMesh rest;
    TriMesh skinned;
    TriMesh gt;
    std::vector<double> condition;

    void validate() const {
        check(!template_id.empty(), "sample: empty template_id");
        shape.validate();
        body.validate();
        rest.validate();
        check(skinned.faces == rest.faces && gt.faces == rest.faces,
              "sample: garment meshes must share the template's faces");
        check(skinned.vertex_count() == rest.vertex_count() &&
                  gt.vertex_count() == rest.vertex_count(),
              "sample: garment vertex counts differ");
        check(static_cast<int>(pose.rotations.size()) ==
                  humanoid_skeleton(shape).joint_count(),
              "sample: pose joint count does not match the body");
        for (double c : condition) check(is_finite(c), "sample: non-finite condition value");
        for (const TriMesh* m : {&skinned, &gt})
            for (const Vec3& v : m->vertices)
                check(v.finite(), "sample: non-finite garment vertex");
    }
};

namespace detail {

// Sample records are a tensor directory: magic, version, the template id,
// then (name, dtype, rows, cols, payload) entries. dtype 0 = f64, 1 = i32.

inline void write_u32(std::ofstream& f, uint32_t x) {
    f.write(reinterpret_cast<const char*>(&x), sizeof x);
}

inline uint32_t read_u32(std::ifstream& f, const std::string& path) {
    uint32_t x = 0;
    f.read(reinterpret_cast<char*>(&x), sizeof x);
    check(f.good(), "truncated sample file: " + path);
    return x;
}

inline void write_string(std::ofstream& f, const std::string& s) {
    write_u32(f, static_cast<uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::ifstream& f, const std::string& path) {
    uint32_t len = read_u32(f, path);
    check(len <= 4096, path + ": implausible string length");
    std::string s(len, '\0');
    f.read(s.data(), len);
    check(f.good(), "truncated sample file: " + path);
    return s;
}

inline void write_f64_entry(std::ofstream& f, const std::string& name,
                            const std::vector<double>& xs, int rows, int cols) {
    check(static_cast<size_t>(rows) * cols == xs.size(), "sample entry shape mismatch");
    write_string(f, name);
    write_u32(f, 0);
    write_u32(f, static_cast<uint32_t>(rows));
    write_u32(f, static_cast<uint32_t>(cols));
    f.write(reinterpret_cast<const char*>(xs.data()),
            static_cast<std::streamsize>(xs.size() * sizeof(double)));
}

inline void write_i32_entry(std::ofstream& f, const std::string& name,
                            const std::vector<int32_t>& xs, int rows, int cols) {
    check(static_cast<size_t>(rows) * cols == xs.size(), "sample entry shape mismatch");
    write_string(f, name);
    write_u32(f, 1);
    write_u32(f, static_cast<uint32_t>(rows));
    write_u32(f, static_cast<uint32_t>(cols));
    f.write(reinterpret_cast<const char*>(xs.data()),
            static_cast<std::streamsize>(xs.size() * sizeof(int32_t)));
}

inline std::vector<double> points_to_flat(const std::vector<Vec3>& pts) {
    std::vector<double> out;
    out.reserve(pts.size() * 3);
    for (const Vec3& p : pts) {
        out.push_back(p.x);
        out.push_back(p.y);
        out.push_back(p.z);
    }
    return out;
}

inline std::vector<int32_t> faces_to_flat(const std::vector<std::array<int, 3>>& faces) {
    std::vector<int32_t> out;
    out.reserve(faces.size() * 3);
    for (const auto& f : faces)
        for (int c : f) out.push_back(static_cast<int32_t>(c));
    return out;
}

struct SampleEntry {
    uint32_t dtype = 0;
    int rows = 0, cols = 0;
    std::vector<double> f64;
    std::vector<int32_t> i32;
};

constexpr const char kSampleMagic[5] = "DRSP";
constexpr uint32_t kSampleVersion = 1;

} // namespace detail

inline void save_sample(const DrapeSample& s, const std::string& path) {
    s.validate();
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "cannot open sample for writing: " + path);
    f.write(detail::kSampleMagic, 4);
    detail::write_u32(f, detail::kSampleVersion);
    detail::write_string(f, s.template_id);

    std::vector<double> shape = {s.shape.scale,      s.shape.torso_radius,
                                 s.shape.arm_radius, s.shape.leg_radius,
                                 s.shape.arm_length, s.shape.leg_length,
                                 s.shape.shoulder_width};
    std::vector<double> rot;
    for (const Quat& q : s.pose.rotations) {
        rot.push_back(q.w);
        rot.push_back(q.x);
        rot.push_back(q.y);
        rot.push_back(q.z);
    }
    std::vector<double> root = {s.pose.root_translation.x, s.pose.root_translation.y,
                                s.pose.root_translation.z};

    detail::write_u32(f, 10);  // entry count
    detail::write_f64_entry(f, "shape", shape, 1, 7);
    detail::write_f64_entry(f, "pose_rotations", rot,
                            static_cast<int>(s.pose.rotations.size()), 4);
    detail::write_f64_entry(f, "pose_root", root, 1, 3);
    detail::write_f64_entry(f, "body_vertices", detail::points_to_flat(s.body.vertices),
                            s.body.vertex_count(), 3);
    detail::write_i32_entry(f, "body_faces", detail::faces_to_flat(s.body.faces),
                            s.body.face_count(), 3);
    detail::write_i32_entry(f, "garment_faces", detail::faces_to_flat(s.rest.faces),
                            s.rest.face_count(), 3);
    detail::write_f64_entry(f, "rest_vertices", detail::points_to_flat(s.rest.vertices),
                            s.rest.vertex_count(), 3);
    detail::write_f64_entry(f, "skinned_vertices", detail::points_to_flat(s.skinned.vertices),
                            s.skinned.vertex_count(), 3);
    detail::write_f64_entry(f, "gt_vertices", detail::points_to_flat(s.gt.vertices),
                            s.gt.vertex_count(), 3);
    detail::write_f64_entry(f, "condition", s.condition, 1,
                            static_cast<int>(s.condition.size()));
    check(f.good(), "sample write failed: " + path);
}

inline DrapeSample load_sample(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "cannot open sample: " + path);
    char magic[4] = {};
    f.read(magic, 4);
    check(f.good() && std::memcmp(magic, detail::kSampleMagic, 4) == 0,
          "not a sample file (bad magic): " + path);
    uint32_t version = detail::read_u32(f, path);
    check(version == detail::kSampleVersion,
          path + ": unsupported sample version " + std::to_string(version));

    DrapeSample s;
    s.template_id = detail::read_string(f, path);
    uint32_t count = detail::read_u32(f, path);
    check(count <= 64, path + ": implausible entry count");

    std::map<std::string, detail::SampleEntry> entries;
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = detail::read_string(f, path);
        detail::SampleEntry e;
        e.dtype = detail::read_u32(f, path);
        e.rows = static_cast<int>(detail::read_u32(f, path));
        e.cols = static_cast<int>(detail::read_u32(f, path));
        check(e.dtype <= 1, path + ": unknown entry dtype");
        check(e.rows >= 0 && e.cols >= 0 && static_cast<int64_t>(e.rows) * e.cols < (1 << 28),
              path + ": implausible entry shape");
        size_t n = static_cast<size_t>(e.rows) * e.cols;
        if (e.dtype == 0) {
            e.f64.resize(n);
            f.read(reinterpret_cast<char*>(e.f64.data()),
                   static_cast<std::streamsize>(n * sizeof(double)));
        } else {
            e.i32.resize(n);
            f.read(reinterpret_cast<char*>(e.i32.data()),
                   static_cast<std::streamsize>(n * sizeof(int32_t)));
        }
        check(f.good(), "truncated sample file: " + path);
        check(!entries.count(name), path + ": duplicate entry '" + name + "'");
        entries.emplace(std::move(name), std::move(e));
    }

    auto take = [&](const char* name, uint32_t dtype, int cols) -> detail::SampleEntry& {
        auto it = entries.find(name);
        check(it != entries.end(), path + ": missing entry '" + std::string(name) + "'");
        check(it->second.dtype == dtype && it->second.cols == cols,
              path + ": entry '" + std::string(name) + "' has unexpected layout");
        return it->second;
    };
    auto take_points = [&](const char* name) {
        detail::SampleEntry& e = take(name, 0, 3);
        std::vector<Vec3> pts(e.rows);
        for (int i = 0; i < e.rows; ++i)
            pts[i] = {e.f64[i * 3 + 0], e.f64[i * 3 + 1], e.f64[i * 3 + 2]};
        return pts;
    };
    auto take_faces = [&](const char* name) {
        detail::SampleEntry& e = take(name, 1, 3);
        std::vector<std::array<int, 3>> faces(e.rows);
        for (int i = 0; i < e.rows; ++i)
            faces[i] = {e.i32[i * 3 + 0], e.i32[i * 3 + 1], e.i32[i * 3 + 2]};
        return faces;
    };

    const auto& sh = take("shape", 0, 7);
    check(sh.rows == 1, path + ": bad shape entry");
    s.shape = {sh.f64[0], sh.f64[1], sh.f64[2], sh.f64[3], sh.f64[4], sh.f64[5], sh.f64[6]};

    const auto& rot = take("pose_rotations", 0, 4);
    s.pose.rotations.resize(rot.rows);
    for (int i = 0; i < rot.rows; ++i)
        s.pose.rotations[i] = {rot.f64[i * 4 + 0], rot.f64[i * 4 + 1], rot.f64[i * 4 + 2],
                               rot.f64[i * 4 + 3]};
    const auto& root = take("pose_root", 0, 3);
    check(root.rows == 1, path + ": bad pose_root entry");
    s.pose.root_translation = {root.f64[0], root.f64[1], root.f64[2]};

    s.body.vertices = take_points("body_vertices");
    s.body.faces = take_faces("body_faces");
    s.rest.faces = take_faces("garment_faces");
    s.skinned.faces = s.rest.faces;
    s.gt.faces = s.rest.faces;
    s.rest.vertices = take_points("rest_vertices");
    s.skinned.vertices = take_points("skinned_vertices");
    s.gt.vertices = take_points("gt_vertices");
    auto cond = entries.find("condition");
    check(cond != entries.end() && cond->second.dtype == 0,
          path + ": missing or malformed 'condition' entry");
    s.condition = cond->second.f64;

    s.validate();
    return s;
}

// ---- generation config -------------------------------------------------------

struct GenConfig {
    TemplateKind kind = TemplateKind::kTube;
    TemplateParams template_params;
    BodyTess tess;
    ShapeRanges shape_ranges;
    std::vector<PoseArchetype> pose_bank;  // empty: default bank for `kind`
    int count = 50;
    uint64_t seed = 1;
    double train_frac = 0.6, val_frac = 0.2;  // test split takes the rest
    std::string condition = "none";           // or "body-shape" (7 normalized params)
    SimConfig sim;
    int threads = 1;

    void validate() const {
        template_params.validate();
        tess.validate();
        shape_ranges.validate();
        sim.validate();
        check(count > 0, "gen: count must be positive");
        check(train_frac >= 0 && val_frac >= 0 && train_frac + val_frac <= 1.0,
              "gen: split fractions must be nonnegative and sum to at most 1");
        check(condition == "none" || condition == "body-shape",
              "gen: condition must be 'none' or 'body-shape'");
        check(threads >= 1, "gen: threads must be >= 1");
    }

    std::vector<PoseArchetype> effective_bank() const {
        return pose_bank.empty() ? default_pose_bank(kind) : pose_bank;
    }
};

// ---- manifest ----------------------------------------------------------------

enum class Split { kTrain, kVal, kTest };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::kTrain: return "train";
        case Split::kVal: return "val";
        case Split::kTest: return "test";
    }
    fail("bad split value");
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::kTrain;
    if (s == "val") return Split::kVal;
    if (s == "test") return Split::kTest;
    fail("unknown split '" + s + "' (expected train, val, or test)");
}

struct ManifestEntry {
    std::string file;  // relative to the manifest's directory
    Split split = Split::kTrain;
};

// JSON converters (nlohmann ADL). Readers reject unknown keys and leave
// absent keys at their defaults, so config files may be partial.
namespace detail {

inline void expect_keys(const Json& j, const std::string& where,
                        std::initializer_list<const char*> keys) {
    check(j.is_object(), where + ": expected a JSON object");
    for (const auto& [k, v] : j.items()) {
        bool known = false;
        for (const char* q : keys)
            if (k == q) known = true;
        check(known, where + ": unknown key '" + k + "'");
    }
}

template <typename T>
void get_if(const Json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

} // namespace detail

inline void to_json(Json& j, const Vec3& v) { j = Json::array({v.x, v.y, v.z}); }
inline void from_json(const Json& j, Vec3& v) {
    check(j.is_array() && j.size() == 3, "expected a [x, y, z] array");
    j.at(0).get_to(v.x);
    j.at(1).get_to(v.y);
    j.at(2).get_to(v.z);
}

inline void to_json(Json& j, const Range& r) { j = Json::array({r.lo, r.hi}); }
inline void from_json(const Json& j, Range& r) {
    check(j.is_array() && j.size() == 2, "expected a [lo, hi] array");
    j.at(0).get_to(r.lo);
    j.at(1).get_to(r.hi);
}

inline void to_json(Json& j, const BodyShape& s) {
    j = Json{{"scale", s.scale},
             {"torso_radius", s.torso_radius},
             {"arm_radius", s.arm_radius},
             {"leg_radius", s.leg_radius},
             {"arm_length", s.arm_length},
             {"leg_length", s.leg_length},
             {"shoulder_width", s.shoulder_width}};
}
inline void from_json(const Json& j, BodyShape& s) {
    detail::expect_keys(j, "body shape",
                        {"scale", "torso_radius", "arm_radius", "leg_radius", "arm_length",
                         "leg_length", "shoulder_width"});
    detail::get_if(j, "scale", s.scale);
    detail::get_if(j, "torso_radius", s.torso_radius);
    detail::get_if(j, "arm_radius", s.arm_radius);
    detail::get_if(j, "leg_radius", s.leg_radius);
    detail::get_if(j, "arm_length", s.arm_length);
    detail::get_if(j, "leg_length", s.leg_length);
    detail::get_if(j, "shoulder_width", s.shoulder_width);
}

inline void to_json(Json& j, const ShapeRanges& r) {
    j = Json{{"scale", r.scale},
             {"torso_radius", r.torso_radius},
             {"arm_radius", r.arm_radius},
             {"leg_radius", r.leg_radius},
             {"arm_length", r.arm_length},
             {"leg_length", r.leg_length},
             {"shoulder_width", r.shoulder_width}};
}
inline void from_json(const Json& j, ShapeRanges& r) {
    detail::expect_keys(j, "shape ranges",
                        {"scale", "torso_radius", "arm_radius", "leg_radius", "arm_length",
                         "leg_length", "shoulder_width"});
    detail::get_if(j, "scale", r.scale);
    detail::get_if(j, "torso_radius", r.torso_radius);
    detail::get_if(j, "arm_radius", r.arm_radius);
    detail::get_if(j, "leg_radius", r.leg_radius);
    detail::get_if(j, "arm_length", r.arm_length);
    detail::get_if(j, "leg_length", r.leg_length);
    detail::get_if(j, "shoulder_width", r.shoulder_width);
}

inline void to_json(Json& j, const PoseDelta& d) {
    j = Json{{"joint", d.joint}, {"axis", d.axis}, {"deg", Json::array({d.deg_lo, d.deg_hi})}};
}
inline void from_json(const Json& j, PoseDelta& d) {
    detail::expect_keys(j, "pose delta", {"joint", "axis", "deg"});
    check(j.contains("joint") && j.contains("axis") && j.contains("deg"),
          "pose delta: joint, axis, and deg are required");
    j.at("joint").get_to(d.joint);
    j.at("axis").get_to(d.axis);
    const Json& deg = j.at("deg");
    check(deg.is_array() && deg.size() == 2, "pose delta: deg must be [lo, hi]");
    deg.at(0).get_to(d.deg_lo);
    deg.at(1).get_to(d.deg_hi);
}

inline void to_json(Json& j, const PoseArchetype& a) {
    j = Json{{"name", a.name}, {"deltas", a.deltas}};
}
inline void from_json(const Json& j, PoseArchetype& a) {
    detail::expect_keys(j, "pose archetype", {"name", "deltas"});
    detail::get_if(j, "name", a.name);
    detail::get_if(j, "deltas", a.deltas);
}

inline void to_json(Json& j, const BodyTess& t) {
    j = Json{{"segments", t.segments},
             {"side_stacks", t.side_stacks},
             {"cap_stacks", t.cap_stacks}};
}
inline void from_json(const Json& j, BodyTess& t) {
    detail::expect_keys(j, "body tessellation", {"segments", "side_stacks", "cap_stacks"});
    detail::get_if(j, "segments", t.segments);
    detail::get_if(j, "side_stacks", t.side_stacks);
    detail::get_if(j, "cap_stacks", t.cap_stacks);
}

inline void to_json(Json& j, const TemplateParams& p) {
    j = Json{{"grid_w", p.grid_w},
             {"grid_h", p.grid_h},
             {"grid_spacing", p.grid_spacing},
             {"grid_clearance", p.grid_clearance},
             {"tube_around", p.tube_around},
             {"tube_along", p.tube_along},
             {"tube_radius_factor", p.tube_radius_factor},
             {"tube_length", p.tube_length},
             {"shirt_around", p.shirt_around},
             {"shirt_along", p.shirt_along},
             {"shirt_radius_factor", p.shirt_radius_factor},
             {"sleeve_around", p.sleeve_around},
             {"sleeve_along", p.sleeve_along},
             {"sleeve_radius_factor", p.sleeve_radius_factor},
             {"sleeve_start", p.sleeve_start},
             {"sleeve_end", p.sleeve_end},
             {"weight_falloff", p.weight_falloff},
             {"max_influences", p.max_influences}};
}
inline void from_json(const Json& j, TemplateParams& p) {
    detail::expect_keys(j, "template params",
                        {"grid_w", "grid_h", "grid_spacing", "grid_clearance", "tube_around",
                         "tube_along", "tube_radius_factor", "tube_length", "shirt_around",
                         "shirt_along", "shirt_radius_factor", "sleeve_around", "sleeve_along",
                         "sleeve_radius_factor", "sleeve_start", "sleeve_end", "weight_falloff",
                         "max_influences"});
    detail::get_if(j, "grid_w", p.grid_w);
    detail::get_if(j, "grid_h", p.grid_h);
    detail::get_if(j, "grid_spacing", p.grid_spacing);
    detail::get_if(j, "grid_clearance", p.grid_clearance);
    detail::get_if(j, "tube_around", p.tube_around);
    detail::get_if(j, "tube_along", p.tube_along);
    detail::get_if(j, "tube_radius_factor", p.tube_radius_factor);
    detail::get_if(j, "tube_length", p.tube_length);
    detail::get_if(j, "shirt_around", p.shirt_around);
    detail::get_if(j, "shirt_along", p.shirt_along);
    detail::get_if(j, "shirt_radius_factor", p.shirt_radius_factor);
    detail::get_if(j, "sleeve_around", p.sleeve_around);
    detail::get_if(j, "sleeve_along", p.sleeve_along);
    detail::get_if(j, "sleeve_radius_factor", p.sleeve_radius_factor);
    detail::get_if(j, "sleeve_start", p.sleeve_start);
    detail::get_if(j, "sleeve_end", p.sleeve_end);
    detail::get_if(j, "weight_falloff", p.weight_falloff);
    detail::get_if(j, "max_influences", p.max_influences);
}

inline void to_json(Json& j, const SimConfig& c) {
    j = Json{{"max_outer_steps", c.max_outer_steps},
             {"constraint_iterations", c.constraint_iterations},
             {"step_dt", c.step_dt},
             {"gravity", c.gravity},
             {"stretch_stiffness", c.stretch_stiffness},
             {"bend_stiffness", c.bend_stiffness},
             {"strain_limit", c.strain_limit},
             {"friction", c.friction},
             {"collision_margin", c.collision_margin},
             {"tolerance", c.tolerance}};
}
inline void from_json(const Json& j, SimConfig& c) {
    detail::expect_keys(j, "sim config",
                        {"max_outer_steps", "constraint_iterations", "step_dt", "gravity",
                         "stretch_stiffness", "bend_stiffness", "strain_limit", "friction",
                         "collision_margin", "tolerance"});
    detail::get_if(j, "max_outer_steps", c.max_outer_steps);
    detail::get_if(j, "constraint_iterations", c.constraint_iterations);
    detail::get_if(j, "step_dt", c.step_dt);
    detail::get_if(j, "gravity", c.gravity);
    detail::get_if(j, "stretch_stiffness", c.stretch_stiffness);
    detail::get_if(j, "bend_stiffness", c.bend_stiffness);
    detail::get_if(j, "strain_limit", c.strain_limit);
    detail::get_if(j, "friction", c.friction);
    detail::get_if(j, "collision_margin", c.collision_margin);
    detail::get_if(j, "tolerance", c.tolerance);
}

inline void to_json(Json& j, const GenConfig& c) {
    j = Json{{"template", to_string(c.kind)},
             {"template_params", c.template_params},
             {"tess", c.tess},
             {"shape_ranges", c.shape_ranges},
             {"pose_bank", c.pose_bank},
             {"count", c.count},
             {"seed", c.seed},
             {"train_frac", c.train_frac},
             {"val_frac", c.val_frac},
             {"condition", c.condition},
             {"sim", c.sim},
             {"threads", c.threads}};
}
inline void from_json(const Json& j, GenConfig& c) {
    detail::expect_keys(j, "dataset config",
                        {"template", "template_params", "tess", "shape_ranges", "pose_bank",
                         "count", "seed", "train_frac", "val_frac", "condition", "sim",
                         "threads"});
    if (j.contains("template")) c.kind = template_kind_from_string(j.at("template"));
    detail::get_if(j, "template_params", c.template_params);
    detail::get_if(j, "tess", c.tess);
    detail::get_if(j, "shape_ranges", c.shape_ranges);
    detail::get_if(j, "pose_bank", c.pose_bank);
    detail::get_if(j, "count", c.count);
    detail::get_if(j, "seed", c.seed);
    detail::get_if(j, "train_frac", c.train_frac);
    detail::get_if(j, "val_frac", c.val_frac);
    detail::get_if(j, "condition", c.condition);
    detail::get_if(j, "sim", c.sim);
    detail::get_if(j, "threads", c.threads);
}

inline void to_json(Json& j, const ManifestEntry& e) {
    j = Json{{"file", e.file}, {"split", to_string(e.split)}};
}
inline void from_json(const Json& j, ManifestEntry& e) {
    detail::expect_keys(j, "manifest entry", {"file", "split"});
    check(j.contains("file") && j.contains("split"), "manifest entry: file and split required");
    j.at("file").get_to(e.file);
    e.split = split_from_string(j.at("split"));
}

/// Index over the generated sample files. Saved as JSON next to the samples;
/// `load` additionally checks that every referenced file exists.
struct DatasetManifest {
    uint64_t seed = 0;
    GenConfig generation;
    std::vector<ManifestEntry> entries;

    std::vector<std::string> files(Split s) const {
        std::vector<std::string> out;
        for (const ManifestEntry& e : entries)
            if (e.split == s) out.push_back(e.file);
        return out;
    }

    void validate() const {
        for (size_t i = 0; i < entries.size(); ++i) {
            check(!entries[i].file.empty(), "manifest: empty file name");
            for (size_t k = 0; k < i; ++k)
                check(entries[k].file != entries[i].file,
                      "manifest: duplicate file '" + entries[i].file + "'");
        }
    }

    void save(const std::string& path) const {
        validate();
        Json j{{"seed", seed}, {"generation", generation}, {"samples", entries}};
        std::ofstream f(path);
        check(f.good(), "cannot open manifest for writing: " + path);
        f << j.dump(2) << "\n";
        check(f.good(), "manifest write failed: " + path);
    }

    static DatasetManifest load(const std::string& path) {
        std::ifstream f(path);
        check(f.good(), "cannot open manifest: " + path);
        Json j;
        try {
            f >> j;
        } catch (const Json::exception& e) {
            fail("manifest " + path + ": " + e.what());
        }
        detail::expect_keys(j, "manifest", {"seed", "generation", "samples"});
        DatasetManifest m;
        detail::get_if(j, "seed", m.seed);
        detail::get_if(j, "generation", m.generation);
        detail::get_if(j, "samples", m.entries);
        m.validate();
        auto dir = std::filesystem::path(path).parent_path();
        for (const ManifestEntry& e : m.entries)
            check(std::filesystem::exists(dir / e.file),
                  "manifest " + path + ": missing sample file '" + e.file + "'");
        return m;
    }
};

/// Loads every sample of a split, in manifest order.
inline std::vector<DrapeSample> load_split(const DatasetManifest& m,
                                           const std::string& manifest_path, Split split) {
    auto dir = std::filesystem::path(manifest_path).parent_path();
    std::vector<DrapeSample> out;
    for (const std::string& f : m.files(split)) out.push_back(load_sample((dir / f).string()));
    return out;
}

// ---- generation --------------------------------------------------------------

/// Outcome of one generation attempt; non-converged attempts store no file.
struct GenRecord {
    int index = 0;
    uint64_t seed = 0;
    bool converged = false;
    int steps = 0;
    double residual = 0.0;
    std::string archetype;
    std::string file;
};

namespace detail {

struct GenAttempt {
    GenRecord record;
    DrapeSample sample;  // valid only when record.converged
};

inline GenAttempt generate_one(const GenConfig& cfg, int index,
                               const std::vector<PoseArchetype>& bank) {
    GenAttempt out;
    out.record.index = index;
    out.record.seed = derive_seed(cfg.seed, static_cast<uint64_t>(index));
    Rng rng(out.record.seed);

    BodyShape shape = cfg.shape_ranges.sample(rng);
    Skeleton skel = humanoid_skeleton(shape);
    if (!bank.empty()) {
        // peek the archetype pick on a stream copy so it can be logged
        Rng peek = rng;
        out.record.archetype = bank[peek.index(static_cast<int>(bank.size()))].name;
    }
    Pose pose = sample_pose(skel, bank, rng);

    BodyProxy body = generate_body(shape, pose, cfg.tess);
    GarmentTemplate tmpl = generate_garment_template(cfg.kind, cfg.template_params, shape);
    auto xf = pose_transforms(skel, pose);

    TriMesh start;
    start.vertices = dual_quaternion_skin(tmpl.mesh.vertices, tmpl.weights, xf);
    start.faces = tmpl.mesh.faces;

    DrapeResult res = drape(start, body, cfg.sim, &tmpl.mesh);
    out.record.converged = res.converged;
    out.record.steps = res.steps;
    out.record.residual = res.residual;
    if (!res.converged) return out;

    DrapeSample& s = out.sample;
    s.template_id = to_string(cfg.kind);
    s.shape = shape;
    s.pose = pose;
    s.body = body.mesh;
    s.rest = tmpl.mesh;
    s.skinned = start;
    s.gt = res.mesh;
    if (cfg.condition == "body-shape") s.condition = cfg.shape_ranges.normalize(shape);
    return out;
}

} // namespace detail

/// Generates `cfg.count` scenes, drapes each, and stores the converged ones as
/// sample files plus a manifest and a line-delimited generation log in
/// `out_dir`. Fully reproducible: every artifact is a function of the config
/// alone, regardless of `threads`. Returns the manifest.
inline DatasetManifest generate_dataset(const GenConfig& cfg, const std::string& out_dir,
                                        std::vector<GenRecord>* records_out = nullptr) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    const std::vector<PoseArchetype> bank = cfg.effective_bank();

    std::vector<detail::GenAttempt> attempts(static_cast<size_t>(cfg.count));
    std::atomic<int> next{0};
    std::vector<std::string> worker_errors(static_cast<size_t>(cfg.threads));
    auto worker = [&](int w) {
        for (int i = next.fetch_add(1); i < cfg.count; i = next.fetch_add(1)) {
            try {
                attempts[static_cast<size_t>(i)] = detail::generate_one(cfg, i, bank);
            } catch (const std::exception& e) {
                worker_errors[static_cast<size_t>(w)] =
                    "sample " + std::to_string(i) + ": " + e.what();
                return;
            }
        }
    };
    if (cfg.threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < cfg.threads; ++w) pool.emplace_back(worker, w);
        for (auto& t : pool) t.join();
    }
    for (const std::string& e : worker_errors)
        if (!e.empty()) fail("dataset generation failed: " + e);

    // store the survivors and assign splits by a seeded shuffle
    std::vector<int> kept;
    for (int i = 0; i < cfg.count; ++i) {
        if (!attempts[static_cast<size_t>(i)].record.converged) continue;
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%05d.drs", i);
        attempts[static_cast<size_t>(i)].record.file = name;
        save_sample(attempts[static_cast<size_t>(i)].sample,
                    (std::filesystem::path(out_dir) / name).string());
        kept.push_back(i);
    }
    std::vector<int> order = kept;
    Rng(derive_seed(cfg.seed, 0x73706c6974ull)).shuffle(order);  // split assignment stream
    size_t n = order.size();
    size_t n_train = static_cast<size_t>(std::ceil(n * cfg.train_frac));
    size_t n_val = static_cast<size_t>(std::ceil(n * (cfg.train_frac + cfg.val_frac)));
    std::map<int, Split> split_of;
    for (size_t r = 0; r < n; ++r)
        split_of[order[r]] = r < n_train ? Split::kTrain
                             : r < n_val ? Split::kVal
                                         : Split::kTest;

    DatasetManifest manifest;
    manifest.seed = cfg.seed;
    manifest.generation = cfg;
    // the manifest records the semantic recipe; the worker count is an
    // execution detail that never changes the bytes produced
    manifest.generation.threads = 1;
    for (int i : kept)
        manifest.entries.push_back(
            {attempts[static_cast<size_t>(i)].record.file, split_of.at(i)});
    manifest.save((std::filesystem::path(out_dir) / "manifest.json").string());

    std::ofstream log((std::filesystem::path(out_dir) / "generation_log.jsonl").string());
    check(log.good(), "cannot open generation log in " + out_dir);
    for (const auto& a : attempts) {
        const GenRecord& r = a.record;
        Json j{{"index", r.index},       {"seed", r.seed},     {"converged", r.converged},
               {"steps", r.steps},       {"residual", r.residual},
               {"archetype", r.archetype}};
        if (r.converged)
            j["file"] = r.file;
        else
            j["dropped"] = true;
        log << j.dump() << "\n";
        if (records_out) records_out->push_back(r);
    }
    check(log.good(), "generation log write failed in " + out_dir);
    return manifest;
}

} // namespace drape
