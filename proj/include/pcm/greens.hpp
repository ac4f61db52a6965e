#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "pcm/common.hpp"
#include "pcm/geometry.hpp"
#include "pcm/vec2.hpp"

namespace pcm {

/* Kernel engine for the Laplacian in bounded convex planar domains.
 *
 * Conventions (all potentials solve Delta phi = rho, forces are +grad phi,
 * so same-sign sources repel):
 *
 *   G(x,y)   = ln|x-y| / (2 pi)            free-space kernel, d = 2
 *            = -1 / (4 pi |x-y|)           d = 3 (test anchors only)
 *   G_D      = G + gbar_D,  G_D = 0 on the boundary
 *   G_N      = G + gbar_N,  dG_N/dn_x = 0 on the boundary,
 *              Delta_x (G_N - G) = -1/|domain|
 *   R_#(x)   = gbar_#(x,x)                 Robin function
 *   H_#(x)   = R_#(x)/2 - int_bdry G_#(x,y) h_cha(y) dS_y
 *
 * Unit disk closed forms, with q2(x,y) = |x|^2|y|^2 - 2 x.y + 1 (the squared
 * image-point factor, smooth and positive for interior points):
 *
 *   gbar_D = -ln(q2)/(4 pi)
 *   gbar_N = +ln(q2)/(4 pi) - (|x|^2+|y|^2)/(4 pi)
 *   R_D    = -ln(1-|x|^2)/(2 pi)
 *   R_N    = +ln(1-|x|^2)/(2 pi) - |x|^2/(2 pi)
 *
 * The sign of the (|x|^2+|y|^2)/(4 pi) term is fixed by dG_N/dn = 0 and
 * Delta(G_N - G) = -1/|domain|; the boundary-element backend reproduces these
 * forms to discretization accuracy, which the tests pin down.
 */

enum class BoundaryFlavor { Dirichlet, Neumann };

inline const char* flavor_name(BoundaryFlavor f) {
    return f == BoundaryFlavor::Dirichlet ? "dirichlet" : "neumann";
}

struct Vec3 {
    double x{0}, y{0}, z{0};
    Vec3 operator-(const Vec3& r) const { return {x - r.x, y - r.y, z - r.z}; }
    double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

/// Free-space kernel as a function of separation r > 0.
inline double fundamental_solution_r(double r, int d) {
    require(d == 2 || d == 3, "dimension must be 2 or 3");
    require(r > 0.0, "diagonal singularity: x == y");
    if (d == 2) return std::log(r) / kTwoPi;
    return -1.0 / (4.0 * kPi * r);
}

inline double fundamental_solution(const Vec2& x, const Vec2& y) {
    return fundamental_solution_r(dist(x, y), 2);
}

inline double fundamental_solution(const Vec3& x, const Vec3& y) {
    return fundamental_solution_r((x - y).norm(), 3);
}

/// grad_x G(x,y) in the plane.
inline Vec2 fundamental_gradient(const Vec2& x, const Vec2& y) {
    const double r2 = dist2(x, y);
    require(r2 > 0.0, "diagonal singularity: x == y");
    return (x - y) / (kTwoPi * r2);
}

// ---------------------------------------------------------------------------
// unit disk closed forms

namespace disk {

inline double q2(const Vec2& x, const Vec2& y) {
    return x.norm2() * y.norm2() - 2.0 * x.dot(y) + 1.0;
}

inline void check_in_closed_disk(const Vec2& p) {
    require(p.norm2() <= 1.0 + 1e-12, "point outside the closed unit disk");
}

inline double harmonic(BoundaryFlavor f, const Vec2& x, const Vec2& y) {
    check_in_closed_disk(x);
    check_in_closed_disk(y);
    const double lq = std::log(q2(x, y)) / (4.0 * kPi);
    if (f == BoundaryFlavor::Dirichlet) return -lq;
    return lq - (x.norm2() + y.norm2()) / (4.0 * kPi);
}

inline Vec2 grad_harmonic(BoundaryFlavor f, const Vec2& x, const Vec2& y) {
    const Vec2 num = x * y.norm2() - y;
    const Vec2 g = num / (kTwoPi * q2(x, y));
    if (f == BoundaryFlavor::Dirichlet) return -g;
    return g - x / kTwoPi;
}

inline double green(BoundaryFlavor f, const Vec2& x, const Vec2& y) {
    return fundamental_solution(x, y) + harmonic(f, x, y);
}

inline Vec2 grad_green(BoundaryFlavor f, const Vec2& x, const Vec2& y) {
    return fundamental_gradient(x, y) + grad_harmonic(f, x, y);
}

inline double robin(BoundaryFlavor f, const Vec2& x) {
    const double r2 = x.norm2();
    require(r2 < 1.0, "point outside the open unit disk");
    const double l = std::log(1.0 - r2) / kTwoPi;
    if (f == BoundaryFlavor::Dirichlet) return -l;
    return l - r2 / kTwoPi;
}

inline Vec2 grad_robin(BoundaryFlavor f, const Vec2& x) {
    const double r2 = x.norm2();
    require(r2 < 1.0, "point outside the open unit disk");
    const Vec2 g = x / (kPi * (1.0 - r2));
    if (f == BoundaryFlavor::Dirichlet) return g;
    return -g - x / kPi;
}

} // namespace disk

// ---------------------------------------------------------------------------
// half-space closed forms (test anchors; x1 is the distance coordinate)

inline double flavor_sign(BoundaryFlavor f) {
    return f == BoundaryFlavor::Dirichlet ? -1.0 : 1.0;
}

inline double halfspace_green(BoundaryFlavor f, const Vec2& x, const Vec2& y) {
    require(x.x >= 0.0 && y.x >= 0.0, "point outside the half-space");
    const Vec2 ymirror{-y.x, y.y};
    return fundamental_solution(x, y) + flavor_sign(f) * fundamental_solution(x, ymirror);
}

inline double halfspace_green(BoundaryFlavor f, const Vec3& x, const Vec3& y) {
    require(x.x >= 0.0 && y.x >= 0.0, "point outside the half-space");
    const Vec3 ymirror{-y.x, y.y, y.z};
    return fundamental_solution(x, y) + flavor_sign(f) * fundamental_solution(x, ymirror);
}

inline double halfspace_robin(BoundaryFlavor f, double x1, int d) {
    require(x1 > 0.0, "half-space Robin requires x1 > 0");
    return flavor_sign(f) * fundamental_solution_r(2.0 * x1, d);
}

// ---------------------------------------------------------------------------
// cutoff profile

/// chi: smooth descent from 1 to 0 over [1,2] (quintic smoothstep), so
/// chi = 1 on [0,1], chi = 0 on [2,inf), -2 <= chi' <= 0 (min slope -15/8).
/// chi_tilde_sigma(r) = 1 - chi(r/sigma) opens up the kernel outside 2*sigma.
struct CutoffProfile {
    double sigma;

    explicit CutoffProfile(double sigma_) : sigma(sigma_) {
        require(sigma > 0.0, "cutoff scale must be positive");
    }

    static double chi(double t) {
        if (t <= 1.0) return 1.0;
        if (t >= 2.0) return 0.0;
        const double u = t - 1.0;
        return 1.0 - u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
    }

    static double chi_prime(double t) {
        if (t <= 1.0 || t >= 2.0) return 0.0;
        const double u = t - 1.0;
        return -30.0 * u * u * (1.0 - u) * (1.0 - u);
    }

    double chi_tilde(double r) const { return 1.0 - chi(r / sigma); }
    double chi_tilde_prime(double r) const { return -chi_prime(r / sigma) / sigma; }
};

// ---------------------------------------------------------------------------
// evaluator

/// Nodal values of a boundary density on the domain quadrature.
struct BoundaryDensity {
    std::vector<double> values;

    static BoundaryDensity zero(const ConvexDomain& dom) {
        return {std::vector<double>(dom.quad_size(), 0.0)};
    }
    /// Constant density integrating to `total` over the boundary.
    static BoundaryDensity uniform(const ConvexDomain& dom, double total) {
        return {std::vector<double>(dom.quad_size(), total / dom.perimeter())};
    }

    double integral(const ConvexDomain& dom) const {
        double s = 0.0;
        for (int j = 0; j < dom.quad_size(); ++j) s += values[j] * dom.quad_weight(j);
        return s;
    }
    bool is_zero() const {
        for (double v : values)
            if (v != 0.0) return false;
        return true;
    }
};

/// Harmonic part gbar_#(x,y) of the domain Green function and its
/// derivatives; implemented by the exact disk formulas or the BEM module.
class HarmonicBackend {
public:
    virtual ~HarmonicBackend() = default;
    virtual const char* name() const = 0;
    virtual double harmonic(const Vec2& x, const Vec2& y) const = 0;
    virtual Vec2 grad_harmonic(const Vec2& x, const Vec2& y) const = 0;
    virtual double robin(const Vec2& x) const = 0;
    virtual Vec2 grad_robin(const Vec2& x) const = 0;
};

class ExactDiskBackend final : public HarmonicBackend {
public:
    explicit ExactDiskBackend(BoundaryFlavor f) : flavor_(f) {}
    const char* name() const override { return "exact_disk"; }
    double harmonic(const Vec2& x, const Vec2& y) const override {
        return disk::harmonic(flavor_, x, y);
    }
    Vec2 grad_harmonic(const Vec2& x, const Vec2& y) const override {
        return disk::grad_harmonic(flavor_, x, y);
    }
    double robin(const Vec2& x) const override { return disk::robin(flavor_, x); }
    Vec2 grad_robin(const Vec2& x) const override { return disk::grad_robin(flavor_, x); }

private:
    BoundaryFlavor flavor_;
};

/// Domain Green function G_# = G + gbar_# with gradients, Robin function,
/// the charge-boundary potential H_#, boundary-density integrals, and the
/// cutoff kernel. Immutable after construction; evaluations are pure.
class GreenEvaluator {
public:
    GreenEvaluator(std::shared_ptr<const ConvexDomain> dom, BoundaryFlavor flavor,
                   std::shared_ptr<const HarmonicBackend> backend)
        : dom_(std::move(dom)), flavor_(flavor), backend_(std::move(backend)) {
        require(dom_ != nullptr && backend_ != nullptr, "evaluator needs domain and backend");
    }

    BoundaryFlavor flavor() const { return flavor_; }
    const ConvexDomain& domain() const { return *dom_; }
    std::shared_ptr<const ConvexDomain> domain_ptr() const { return dom_; }
    const char* backend_name() const { return backend_->name(); }

    double green(const Vec2& x, const Vec2& y) const {
        return fundamental_solution(x, y) + backend_->harmonic(x, y);
    }
    Vec2 grad_green(const Vec2& x, const Vec2& y) const {
        return fundamental_gradient(x, y) + backend_->grad_harmonic(x, y);
    }
    double harmonic(const Vec2& x, const Vec2& y) const { return backend_->harmonic(x, y); }
    Vec2 grad_harmonic(const Vec2& x, const Vec2& y) const {
        return backend_->grad_harmonic(x, y);
    }
    double robin(const Vec2& x) const { return backend_->robin(x); }
    Vec2 grad_robin(const Vec2& x) const { return backend_->grad_robin(x); }

    /// int_bdry G_#(x,y) h(y) dS_y by trapezoid over the domain quadrature.
    double boundary_integral_green(const Vec2& x, const BoundaryDensity& h) const {
        double s = 0.0;
        for (int j = 0; j < dom_->quad_size(); ++j) {
            if (h.values[j] == 0.0) continue;
            s += green(x, dom_->quad_point(j)) * h.values[j] * dom_->quad_weight(j);
        }
        return s;
    }

    /// int_bdry grad_x G_#(x,y) h(y) dS_y.
    Vec2 boundary_integral_grad_green(const Vec2& x, const BoundaryDensity& h) const {
        Vec2 s{0, 0};
        for (int j = 0; j < dom_->quad_size(); ++j) {
            if (h.values[j] == 0.0) continue;
            s += grad_green(x, dom_->quad_point(j)) * (h.values[j] * dom_->quad_weight(j));
        }
        return s;
    }

    void check_charge_compatibility(const BoundaryDensity& h_cha, double charge_count) const {
        if (flavor_ == BoundaryFlavor::Dirichlet) {
            require(h_cha.is_zero(), "charge compatibility violated: h_D^cha must vanish");
            return;
        }
        require(std::abs(h_cha.integral(*dom_) - charge_count) <= 1e-8,
                "charge compatibility violated: boundary density must integrate to the "
                "charge count");
    }

    /// H_#(x) = R_#(x)/2 - int G_#(x,y) h_cha(y) dS_y.
    double charge_boundary_potential(const Vec2& x, const BoundaryDensity& h_cha,
                                     double charge_count) const {
        check_charge_compatibility(h_cha, charge_count);
        return 0.5 * robin(x) - boundary_integral_green(x, h_cha);
    }

    /// grad H_#(x), the charge-boundary force.
    Vec2 grad_charge_boundary_potential(const Vec2& x, const BoundaryDensity& h_cha,
                                        double charge_count) const {
        check_charge_compatibility(h_cha, charge_count);
        return 0.5 * grad_robin(x) - boundary_integral_grad_green(x, h_cha);
    }

    /// G^sigma_#(x,y) = G(x,y) chi_tilde(|x-y|) + gbar_#(x,y); finite on the
    /// diagonal (value gbar_#(x,x)) and C^2 in x.
    double cutoff_green(const CutoffProfile& p, const Vec2& x, const Vec2& y) const {
        const double r = dist(x, y);
        if (r >= 2.0 * p.sigma) return green(x, y); // cutoff inactive, exact agreement
        const double ct = p.chi_tilde(r);
        const double core = (ct == 0.0) ? 0.0 : fundamental_solution_r(r, 2) * ct;
        const double gb = (r == 0.0) ? backend_->robin(x) : backend_->harmonic(x, y);
        return core + gb;
    }

    Vec2 grad_cutoff_green(const CutoffProfile& p, const Vec2& x, const Vec2& y) const {
        const double r = dist(x, y);
        if (r >= 2.0 * p.sigma) return grad_green(x, y);
        Vec2 core{0, 0};
        if (r > p.sigma) {
            const Vec2 dir = (x - y) / r;
            core = p.chi_tilde(r) / (kTwoPi * r) * dir +
                   fundamental_solution_r(r, 2) * p.chi_tilde_prime(r) * dir;
        }
        const Vec2 gb = (r == 0.0) ? 0.5 * backend_->grad_robin(x)
                                   : backend_->grad_harmonic(x, y);
        return core + gb;
    }

private:
    std::shared_ptr<const ConvexDomain> dom_;
    BoundaryFlavor flavor_;
    std::shared_ptr<const HarmonicBackend> backend_;
};

/// Exact-disk evaluator; general domains are wired up by the BEM module.
inline GreenEvaluator make_disk_evaluator(std::shared_ptr<const ConvexDomain> dom,
                                          BoundaryFlavor flavor) {
    require(dom->kind() == ShapeKind::UnitDisk, "exact backend only covers the unit disk");
    return GreenEvaluator(std::move(dom), flavor, std::make_shared<ExactDiskBackend>(flavor));
}

} // namespace pcm
