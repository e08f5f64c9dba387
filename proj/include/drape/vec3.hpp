#pragma once

#include <cmath>

#include "drape/common.hpp"

namespace drape {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(norm2()); }

    /// Unit vector; zero input stays zero.
    Vec3 normalized() const {
        double n = norm();
        return n > 0.0 ? *this / n : Vec3{};
    }

    bool finite() const { return is_finite(x) && is_finite(y) && is_finite(z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double dist(const Vec3& a, const Vec3& b) { return (a - b).norm(); }
inline double dist2(const Vec3& a, const Vec3& b) { return (a - b).norm2(); }

/// Unit quaternion, scalar-first (w, x, y, z).
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    Quat() = default;
    Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

    static Quat from_axis_angle(const Vec3& axis, double angle_rad) {
        Vec3 a = axis.normalized();
        double h = 0.5 * angle_rad;
        double s = std::sin(h);
        return {std::cos(h), a.x * s, a.y * s, a.z * s};
    }

    Quat operator+(const Quat& o) const { return {w + o.w, x + o.x, y + o.y, z + o.z}; }
    Quat operator*(double s) const { return {w * s, x * s, y * s, z * s}; }

    Quat operator*(const Quat& o) const {
        return {w * o.w - x * o.x - y * o.y - z * o.z,
                w * o.x + x * o.w + y * o.z - z * o.y,
                w * o.y - x * o.z + y * o.w + z * o.x,
                w * o.z + x * o.y - y * o.x + z * o.w};
    }

    Quat conjugate() const { return {w, -x, -y, -z}; }
    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
    double dot(const Quat& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }

    Quat normalized() const {
        double n = norm();
        check(n > 0.0, "Quat::normalized: zero quaternion");
        return {w / n, x / n, y / n, z / n};
    }

    Vec3 rotate(const Vec3& v) const {
        // q v q*, expanded.
        Vec3 u{x, y, z};
        Vec3 t = 2.0 * u.cross(v);
        return v + w * t + u.cross(t);
    }
};

/// Rigid transform: rotation then translation.
struct Transform {
    Quat rotation;
    Vec3 translation;

    static Transform identity() { return {}; }

    Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }

    Transform compose(const Transform& inner) const {
        // (*this) ∘ inner
        return {rotation * inner.rotation, rotation.rotate(inner.translation) + translation};
    }

    Transform inverse() const {
        Quat r = rotation.conjugate();
        return {r, -r.rotate(translation)};
    }
};

/// Dual quaternion for rigid-motion blending.
struct DualQuat {
    Quat real;  // rotation part
    Quat dual;  // encodes translation

    static DualQuat identity() { return {Quat{}, Quat{0, 0, 0, 0}}; }

    static DualQuat from_transform(const Transform& t) {
        const Quat& q = t.rotation;
        const Vec3& tr = t.translation;
        Quat d{-0.5 * (tr.x * q.x + tr.y * q.y + tr.z * q.z),
               0.5 * (tr.x * q.w + tr.y * q.z - tr.z * q.y),
               0.5 * (-tr.x * q.z + tr.y * q.w + tr.z * q.x),
               0.5 * (tr.x * q.y - tr.y * q.x + tr.z * q.w)};
        return {q, d};
    }

    DualQuat operator+(const DualQuat& o) const { return {real + o.real, dual + o.dual}; }
    DualQuat operator*(double s) const { return {real * s, dual * s}; }

    double real_norm() const { return real.norm(); }

    /// Transform a point by the (possibly unnormalized) blend.
    Vec3 transform(const Vec3& p) const {
        double n = real.norm();
        Quat q0{real.w / n, real.x / n, real.y / n, real.z / n};
        Quat qe{dual.w / n, dual.x / n, dual.y / n, dual.z / n};
        Vec3 v0{q0.x, q0.y, q0.z};
        Vec3 ve{qe.x, qe.y, qe.z};
        Vec3 trans = 2.0 * (ve * q0.w - v0 * qe.w + v0.cross(ve));
        return q0.rotate(p) + trans;
    }
};

} // namespace drape
