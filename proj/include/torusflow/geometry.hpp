// Points, vectors and 2x2 matrices on the flat 2-torus [0,2pi)^2.
#pragma once

#include <cmath>
#include <numbers>

namespace torusflow {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Reduce an angle into [0, 2pi).
inline double wrap_angle(double a) {
    double r = std::fmod(a, kTwoPi);
    return r < 0.0 ? r + kTwoPi : r;
}

/// Signed distance between two angles, in (-pi, pi].
inline double angle_diff(double a, double b) {
    double d = std::fmod(a - b, kTwoPi);
    if (d > std::numbers::pi) d -= kTwoPi;
    if (d <= -std::numbers::pi) d += kTwoPi;
    return d;
}

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }
    Vec2& operator*=(double s) { x *= s; y *= s; return *this; }
};

inline Vec2 operator+(Vec2 a, const Vec2& b) { return a += b; }
inline Vec2 operator-(Vec2 a, const Vec2& b) { return a -= b; }
inline Vec2 operator*(double s, Vec2 v) { return v *= s; }
inline Vec2 operator*(Vec2 v, double s) { return v *= s; }
inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double norm(const Vec2& v) { return std::sqrt(dot(v, v)); }

/// Point on the torus; coordinates always kept in [0, 2pi).
struct TorusPoint {
    double theta1 = 0.0;
    double theta2 = 0.0;

    TorusPoint() = default;
    TorusPoint(double t1, double t2) : theta1(wrap_angle(t1)), theta2(wrap_angle(t2)) {}

    TorusPoint shifted(const Vec2& d) const {
        return TorusPoint(theta1 + d.x, theta2 + d.y);
    }
};

/// Geodesic distance on the flat torus.
inline double torus_distance(const TorusPoint& a, const TorusPoint& b) {
    double d1 = angle_diff(a.theta1, b.theta1);
    double d2 = angle_diff(a.theta2, b.theta2);
    return std::sqrt(d1 * d1 + d2 * d2);
}

/// Row-major 2x2 matrix.
struct Mat2 {
    double a11 = 0.0, a12 = 0.0;
    double a21 = 0.0, a22 = 0.0;

    static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }

    double det() const { return a11 * a22 - a12 * a21; }

    Mat2 inverse() const {
        double d = det();
        return {a22 / d, -a12 / d, -a21 / d, a11 / d};
    }

    Vec2 apply(const Vec2& v) const {
        return {a11 * v.x + a12 * v.y, a21 * v.x + a22 * v.y};
    }

    Mat2& operator+=(const Mat2& o) {
        a11 += o.a11; a12 += o.a12; a21 += o.a21; a22 += o.a22;
        return *this;
    }
};

inline Mat2 operator+(Mat2 a, const Mat2& b) { return a += b; }
inline Mat2 operator*(double s, Mat2 m) {
    m.a11 *= s; m.a12 *= s; m.a21 *= s; m.a22 *= s;
    return m;
}
inline Mat2 operator*(const Mat2& a, const Mat2& b) {
    return {a.a11 * b.a11 + a.a12 * b.a21, a.a11 * b.a12 + a.a12 * b.a22,
            a.a21 * b.a11 + a.a22 * b.a21, a.a21 * b.a12 + a.a22 * b.a22};
}

/// Outer product v w^T.
inline Mat2 outer(const Vec2& v, const Vec2& w) {
    return {v.x * w.x, v.x * w.y, v.y * w.x, v.y * w.y};
}

}  // namespace torusflow
