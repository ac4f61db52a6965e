#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "pcm/common.hpp"
#include "pcm/vec2.hpp"

namespace pcm {

/* Smooth bounded strictly convex planar domains.
 *
 * Every shape is carried by its support function h(mu) >= 0, with mu the
 * outward-normal angle:
 *
 *   boundary point   x(mu) = h(mu) u(mu) + h'(mu) u_perp(mu),
 *   outward normal   n(mu) = u(mu) = (cos mu, sin mu),
 *   unit tangent     t(mu) = u_perp(mu) = (-sin mu, cos mu),
 *   curvature radius rho(mu) = h(mu) + h''(mu) = |dx/dmu| > 0.
 *
 * This makes normals and curvature analytic for the disk, axis-aligned
 * ellipses (h = sqrt(a^2 cos^2 + b^2 sin^2)) and truncated Fourier shapes,
 * and it turns the interior signed distance into
 *
 *   d(x) = min_mu [ h(mu) - x . u(mu) ],
 *
 * exact for convex bodies (distance to the nearest supporting line), with the
 * minimizer mu* giving the nearest boundary point and local frame directly.
 */

enum class ShapeKind { UnitDisk, Ellipse, FourierSupport };

/// Boundary-collar coordinates of a phase point: x = x(mu) - x_perp n(mu),
/// v_perp = -v.n (positive = moving inward), v_tan = v.t.
struct LocalFrame {
    double mu;
    double x_perp;
    double v_perp;
    double v_tan;
};

struct BoundaryHit {
    double t_hit;
    Vec2 x_hit;
    double mu;
};

namespace detail {
struct SupportEval {
    double h, dh, ddh;
};
} // namespace detail

class ConvexDomain {
public:
    static ConvexDomain unit_disk(int quad_nodes = 256) {
        return ConvexDomain(ShapeKind::UnitDisk, 1.0, 1.0, {}, quad_nodes);
    }

    static ConvexDomain ellipse(double a, double b, int quad_nodes = 256) {
        require(a > 0 && b > 0, "ellipse semi-axes must be positive");
        return ConvexDomain(ShapeKind::Ellipse, a, b, {}, quad_nodes);
    }

    /// coeffs = {c0, a1, b1, a2, b2, ...} for h(mu) = c0 + sum a_k cos(k mu) + b_k sin(k mu).
    static ConvexDomain fourier(std::vector<double> coeffs, int quad_nodes = 256) {
        require(!coeffs.empty(), "fourier shape needs at least the constant term");
        return ConvexDomain(ShapeKind::FourierSupport, 0, 0, std::move(coeffs), quad_nodes);
    }

    ShapeKind kind() const { return kind_; }
    double ellipse_a() const { return a_; }
    double ellipse_b() const { return b_; }
    const std::vector<double>& fourier_coeffs() const { return coeffs_; }

    detail::SupportEval support(double mu) const {
        switch (kind_) {
        case ShapeKind::UnitDisk:
            return {1.0, 0.0, 0.0};
        case ShapeKind::Ellipse: {
            const double c = std::cos(mu), s = std::sin(mu);
            const double u = a_ * a_ * c * c + b_ * b_ * s * s;
            const double du = (b_ * b_ - a_ * a_) * std::sin(2.0 * mu);
            const double ddu = 2.0 * (b_ * b_ - a_ * a_) * std::cos(2.0 * mu);
            const double h = std::sqrt(u);
            const double dh = du / (2.0 * h);
            const double ddh = ddu / (2.0 * h) - du * du / (4.0 * h * u);
            return {h, dh, ddh};
        }
        case ShapeKind::FourierSupport: {
            double h = coeffs_[0], dh = 0.0, ddh = 0.0;
            for (std::size_t k = 1; 2 * k - 1 < coeffs_.size(); ++k) {
                const double ak = coeffs_[2 * k - 1];
                const double bk = (2 * k < coeffs_.size()) ? coeffs_[2 * k] : 0.0;
                const double c = std::cos(k * mu), s = std::sin(k * mu);
                h += ak * c + bk * s;
                dh += k * (-ak * s + bk * c);
                ddh += -double(k) * k * (ak * c + bk * s);
            }
            return {h, dh, ddh};
        }
        }
        fail("unreachable shape kind");
    }

    Vec2 boundary_point(double mu) const {
        const auto se = support(mu);
        const Vec2 u{std::cos(mu), std::sin(mu)}, up{-u.y, u.x};
        return se.h * u + se.dh * up;
    }

    Vec2 outward_normal(double mu) const { return {std::cos(mu), std::sin(mu)}; }
    Vec2 unit_tangent(double mu) const { return {-std::sin(mu), std::cos(mu)}; }

    double curvature_radius(double mu) const {
        const auto se = support(mu);
        return se.h + se.ddh;
    }
    double curvature(double mu) const { return 1.0 / curvature_radius(mu); }

    double area() const { return area_; }
    double perimeter() const { return perimeter_; }
    double inradius() const { return inradius_; }
    double diameter() const { return diameter_; }
    double max_curvature() const { return max_kappa_; }
    /// Collar half-width: nearest-point projection is unique within it.
    double delta0() const { return delta0_; }

    int quad_size() const { return quad_n_; }
    double quad_mu(int j) const { return quad_mu_[j]; }
    const Vec2& quad_point(int j) const { return quad_x_[j]; }
    const Vec2& quad_normal(int j) const { return quad_nrm_[j]; }
    double quad_weight(int j) const { return quad_w_[j]; }
    double quad_curvature(int j) const { return quad_kappa_[j]; }

    /// Signed distance to the boundary (positive inside) and the minimizing
    /// normal angle. Exact for convex bodies; Newton-refined off a scan grid.
    std::pair<double, double> signed_distance_mu(const Vec2& x) const {
        if (kind_ == ShapeKind::UnitDisk) {
            const double r = x.norm();
            return {1.0 - r, std::atan2(x.y, x.x)};
        }
        // coarse scan over the precomputed grid
        std::size_t best = 0;
        double gbest = grid_h_[0] - x.dot(grid_u_[0]);
        for (std::size_t j = 1; j < grid_u_.size(); ++j) {
            const double g = grid_h_[j] - x.dot(grid_u_[j]);
            if (g < gbest) { gbest = g; best = j; }
        }
        double mu = grid_mu_[best];
        // Newton on g'(mu) = h' - x.u_perp; g'' = h'' + x.u
        for (int it = 0; it < 50; ++it) {
            const auto se = support(mu);
            const Vec2 u{std::cos(mu), std::sin(mu)}, up{-u.y, u.x};
            const double g1 = se.dh - x.dot(up);
            const double g2 = se.ddh + x.dot(u);
            if (g2 <= 0) break; // stationary point not a local min; keep scan value
            const double step = g1 / g2;
            mu -= step;
            if (std::abs(step) < 1e-15) break;
        }
        const auto se = support(mu);
        const double d = se.h - x.dot(Vec2{std::cos(mu), std::sin(mu)});
        return (d <= gbest) ? std::make_pair(d, mu) : std::make_pair(gbest, grid_mu_[best]);
    }

    bool inside(const Vec2& x) const {
        if (kind_ == ShapeKind::UnitDisk) return x.norm2() < 1.0;
        if (kind_ == ShapeKind::Ellipse) {
            const double ex = x.x / a_, ey = x.y / b_;
            return ex * ex + ey * ey < 1.0;
        }
        return signed_distance_mu(x).first > 0.0;
    }

    /// inf over the boundary of |x - y|; 0 iff x lies on the boundary.
    double distance_to_boundary(const Vec2& x) const {
        const auto [d, mu] = signed_distance_mu(x);
        require(d >= -1e-12 * scale_, "exterior point: x lies outside the closed domain");
        return std::max(d, 0.0);
    }

    /// Normal angle of the nearest boundary point.
    double nearest_mu(const Vec2& x) const { return signed_distance_mu(x).second; }

    /// Specular reflection at a boundary point (checked to lie on the
    /// boundary within 1e-10).
    Vec2 reflect(const Vec2& x_boundary, const Vec2& v) const {
        const auto [d, mu] = signed_distance_mu(x_boundary);
        require(std::abs(d) <= 1e-10 * std::max(1.0, scale_),
                "reflect: point is not on the boundary");
        return reflect_across_unit_normal(v, outward_normal(mu));
    }

    /// Earliest boundary crossing of the segment x + t v, t in (0, dt].
    /// Sign-change bracketing at 64 samples, then bisection to 1e-12 in t.
    std::optional<BoundaryHit> boundary_hit(const Vec2& x, const Vec2& v, double dt) const {
        if (v.x == 0.0 && v.y == 0.0) return std::nullopt;
        constexpr int kSamples = 64;
        // cheap precheck: segment endpoint still interior => no exit (convexity)
        if (inside(x + dt * v)) return std::nullopt;
        double lo = 0.0, hi = dt;
        for (int k = 1; k <= kSamples; ++k) {
            const double t = dt * double(k) / kSamples;
            if (!inside(x + t * v)) { hi = t; break; }
            lo = t;
        }
        while (hi - lo > 1e-12) {
            const double mid = 0.5 * (lo + hi);
            if (inside(x + mid * v)) lo = mid; else hi = mid;
        }
        const double t_hit = 0.5 * (lo + hi);
        const double mu = nearest_mu(x + t_hit * v);
        return BoundaryHit{t_hit, boundary_point(mu), mu};
    }

    /// Collar coordinates; only defined for d(x) <= delta0.
    LocalFrame local_frame(const Vec2& x, const Vec2& v) const {
        const auto [d, mu] = signed_distance_mu(x);
        require(d >= -1e-12 * scale_, "exterior point: x lies outside the closed domain");
        require(d <= delta0_ + 1e-14, "outside boundary collar");
        const Vec2 n = outward_normal(mu);
        return LocalFrame{mu, std::max(d, 0.0), -v.dot(n), v.dot(unit_tangent(mu))};
    }

private:
    ConvexDomain(ShapeKind kind, double a, double b, std::vector<double> coeffs, int quad_nodes)
        : kind_(kind), a_(a), b_(b), coeffs_(std::move(coeffs)) {
        require(quad_nodes >= 4, "too few quadrature nodes");
        validate_convexity();
        build_scan_grid();
        build_quadrature(quad_nodes);
        compute_bulk_constants();
    }

    void validate_convexity() {
        constexpr int kScan = 4096;
        double min_rho = 1e300, min_h = 1e300;
        for (int j = 0; j < kScan; ++j) {
            const double mu = kTwoPi * j / kScan;
            const auto se = support(mu);
            min_rho = std::min(min_rho, se.h + se.ddh);
            min_h = std::min(min_h, se.h);
        }
        require(min_rho > 0.0, "domain rejected: curvature must be strictly positive");
        require(min_h > 0.0, "domain rejected: support origin must lie inside");
    }

    void build_scan_grid() {
        constexpr int kGrid = 1024;
        grid_mu_.resize(kGrid);
        grid_h_.resize(kGrid);
        grid_u_.resize(kGrid);
        for (int j = 0; j < kGrid; ++j) {
            const double mu = kTwoPi * j / kGrid;
            grid_mu_[j] = mu;
            grid_h_[j] = support(mu).h;
            grid_u_[j] = {std::cos(mu), std::sin(mu)};
        }
    }

    void build_quadrature(int n) {
        quad_n_ = n;
        quad_mu_.resize(n);
        quad_w_.resize(n);
        quad_x_.resize(n);
        quad_nrm_.resize(n);
        quad_kappa_.resize(n);
        for (int j = 0; j < n; ++j) {
            const double mu = kTwoPi * j / n;
            quad_mu_[j] = mu;
            quad_x_[j] = boundary_point(mu);
            quad_nrm_[j] = outward_normal(mu);
            const double rho = curvature_radius(mu);
            quad_w_[j] = rho * kTwoPi / n; // trapezoid in mu, arc-length weight
            quad_kappa_[j] = 1.0 / rho;
        }
    }

    void compute_bulk_constants() {
        constexpr int kScan = 4096;
        double per = 0.0, area2 = 0.0, min_h = 1e300, max_width = 0.0, max_k = 0.0;
        for (int j = 0; j < kScan; ++j) {
            const double mu = kTwoPi * j / kScan;
            const auto se = support(mu);
            per += se.h;
            area2 += se.h * se.h - se.dh * se.dh;
            min_h = std::min(min_h, se.h);
            max_k = std::max(max_k, 1.0 / (se.h + se.ddh));
            max_width = std::max(max_width, se.h + support(mu + kPi).h);
        }
        perimeter_ = per * kTwoPi / kScan;
        area_ = 0.5 * area2 * kTwoPi / kScan;
        inradius_ = min_h;
        diameter_ = max_width;
        max_kappa_ = max_k;
        scale_ = diameter_;
        delta0_ = std::min(0.2 * inradius_, 1.0 / (2.0 + 2.0 * max_kappa_));
    }

    ShapeKind kind_;
    double a_{1.0}, b_{1.0};
    std::vector<double> coeffs_;

    int quad_n_{0};
    std::vector<double> quad_mu_, quad_w_, quad_kappa_;
    std::vector<Vec2> quad_x_, quad_nrm_;

    std::vector<double> grid_mu_, grid_h_;
    std::vector<Vec2> grid_u_;

    double area_{0}, perimeter_{0}, inradius_{0}, diameter_{0};
    double max_kappa_{0}, delta0_{0}, scale_{1};
};

} // namespace pcm
