#pragma once

#include <cmath>

namespace pcm {

/// Plain 2D double vector. All simulation state is built from these.
struct Vec2 {
    double x{0.0};
    double y{0.0};

    constexpr Vec2() = default;
    constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

    constexpr Vec2 operator+(const Vec2& r) const { return {x + r.x, y + r.y}; }
    constexpr Vec2 operator-(const Vec2& r) const { return {x - r.x, y - r.y}; }
    constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
    constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
    constexpr Vec2 operator-() const { return {-x, -y}; }
    friend constexpr Vec2 operator*(double s, const Vec2& v) { return {v.x * s, v.y * s}; }

    Vec2& operator+=(const Vec2& r) { x += r.x; y += r.y; return *this; }
    Vec2& operator-=(const Vec2& r) { x -= r.x; y -= r.y; return *this; }
    Vec2& operator*=(double s) { x *= s; y *= s; return *this; }

    constexpr double dot(const Vec2& r) const { return x * r.x + y * r.y; }
    /// z-component of the 2D cross product.
    constexpr double cross(const Vec2& r) const { return x * r.y - y * r.x; }
    constexpr double norm2() const { return x * x + y * y; }
    double norm() const { return std::sqrt(norm2()); }

    constexpr bool operator==(const Vec2&) const = default;
};

inline double dist(const Vec2& a, const Vec2& b) { return (a - b).norm(); }
inline double dist2(const Vec2& a, const Vec2& b) { return (a - b).norm2(); }

/// v - 2(v.n)n for a unit normal n. Preserves |v| exactly up to roundoff.
inline Vec2 reflect_across_unit_normal(const Vec2& v, const Vec2& n) {
    return v - (2.0 * v.dot(n)) * n;
}

} // namespace pcm
