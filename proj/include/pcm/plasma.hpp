#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "pcm/charges.hpp"
#include "pcm/common.hpp"
#include "pcm/geometry.hpp"
#include "pcm/greens.hpp"
#include "pcm/parallel.hpp"

namespace pcm {

/* Weighted macro-particle transport through the domain Green kernel.
 *
 * f is carried by N weighted particles; the self-consistent field at a
 * particle is the regularization-free N-body sum
 *
 *   E(x_i) = sum_{j != i} w_j grad G_#(x_i, x_j)
 *          + sum_a grad G_#(x_i, xi_a)
 *          - int_bdry grad G_#(x_i, y) h_pla(y) dS_y
 *          + w_i grad R_#(x_i) / 2,
 *
 * the last term being the particle's own image force (the harmonic part of
 * its self-interaction, finite in the domain). With it, the continuous-time
 * particle+charge ODEs conserve the discrete energy exactly, including the
 * -1/2 sum_i w_i^2 gbar(x_i, x_i) bookkeeping term.
 *
 * The pusher is kick-drift-kick; boundary crossings during the drift are
 * resolved event-by-event (specular reflection or absorption), capped at 32
 * bounces per particle per step.
 */

enum class BoundaryRule { Reflection, Absorption };

struct ParticleEnsemble {
    std::vector<Vec2> x;
    std::vector<Vec2> v;
    std::vector<double> w;
    std::vector<std::uint8_t> alive;
    std::vector<int> blob; // desingularization tag; -1 when unused

    std::size_t size() const { return x.size(); }

    void push_back(const Vec2& pos, const Vec2& vel, double weight, int tag = -1) {
        x.push_back(pos);
        v.push_back(vel);
        w.push_back(weight);
        alive.push_back(1);
        blob.push_back(tag);
    }

    int alive_count() const {
        int n = 0;
        for (auto a : alive) n += a;
        return n;
    }

    /// sum of alive weights = ||f||_1
    double total_weight() const {
        double s = 0.0;
        for (std::size_t i = 0; i < size(); ++i)
            if (alive[i]) s += w[i];
        return s;
    }
};

/// Spec query: field at a point from alive particles (optionally excluding
/// one), the charges, and the boundary-data term. Does not include the
/// excluded particle's own image term.
inline Vec2 field_at(const ParticleEnsemble& ens, const ChargeState* charges,
                     const GreenEvaluator& ev, const Vec2& x,
                     std::optional<std::size_t> self, const BoundaryDensity& h_pla) {
    Vec2 f{0, 0};
    for (std::size_t j = 0; j < ens.size(); ++j) {
        if (!ens.alive[j] || (self && *self == j)) continue;
        require(dist2(x, ens.x[j]) > 0.0, "field singularity: x coincides with a source");
        f += ens.w[j] * ev.grad_green(x, ens.x[j]);
    }
    if (charges) {
        for (const auto& xi : charges->xi) {
            require(dist2(x, xi) > 0.0, "field singularity: x coincides with a source");
            f += ev.grad_green(x, xi);
        }
    }
    if (!h_pla.is_zero()) f -= ev.boundary_integral_grad_green(x, h_pla);
    return f;
}

/// dt stability bound enforced by the driver: 0.1 * min(1, d_min^2) with
/// d_min the closest alive-particle-to-charge distance.
inline double stable_dt_bound(const ParticleEnsemble& ens, const ChargeState* charges) {
    double dmin2 = 1.0;
    if (charges) {
        for (std::size_t i = 0; i < ens.size(); ++i) {
            if (!ens.alive[i]) continue;
            for (const auto& xi : charges->xi) dmin2 = std::min(dmin2, dist2(ens.x[i], xi));
        }
    }
    return 0.1 * std::min(1.0, dmin2);
}

struct Forces {
    std::vector<Vec2> particle;
    std::vector<Vec2> charge;
};

struct PushOptions {
    bool include_self_image = true;
    /// charges act as fixed sources: no forces on them, no motion
    bool freeze_charges = false;
    /// cutoff kernel for the modified system; empty = unmodified
    std::optional<CutoffProfile> cutoff;
};

namespace detail {

/* Pair-force kernels for the hot O(N^2) loop. A kernel provides
 *   pair(a, a2, b, b2)  grad_x of the pair Green function at target a,
 *                       with |a|^2, |b|^2 precomputed,
 *   tail_scale()        the coefficient of the deferred per-source term
 *                       (-x/(2 pi) per unit weight for the Neumann disk),
 *   self_grad(a)        grad R / 2, the image force on a unit self-weight.
 * The disk kernels are fused into a single division per pair; the deferred
 * tail turns the constant Neumann term into one multiply per target.
 *
 * grad R diverges at the wall, and a particle can land arbitrarily close to
 * it right after a bounce (leftover drift time ~ U[0, dt]), which would feed
 * the integrator kicks that grow as dt shrinks. The self term is therefore
 * evaluated no closer to the wall than kSelfImageCap * inradius; the energy
 * mismatch this introduces is O(w^2) per particle inside that shell.
 */

inline constexpr double kSelfImageCap = 0.05;

inline Vec2 disk_clamped_self(BoundaryFlavor flavor, const Vec2& a) {
    const double rcap = 1.0 - kSelfImageCap;
    const double r2 = a.norm2();
    if (r2 <= rcap * rcap) return 0.5 * disk::grad_robin(flavor, a);
    return 0.5 * disk::grad_robin(flavor, a * (rcap / std::sqrt(r2)));
}

inline Vec2 disk_pair_fused(BoundaryFlavor flavor, const Vec2& a, double a2, const Vec2& b,
                            double b2) {
    const Vec2 d = a - b;
    const double r2 = d.norm2();
    const double q2 = a2 * b2 - 2.0 * a.dot(b) + 1.0;
    const double inv = 1.0 / (kTwoPi * r2 * q2);
    const Vec2 image = (a * b2 - b) * r2;
    if (flavor == BoundaryFlavor::Dirichlet) return (d * q2 - image) * inv;
    return (d * q2 + image) * inv;
}

struct DiskPairKernel {
    BoundaryFlavor flavor;

    Vec2 pair(const Vec2& a, double a2, const Vec2& b, double b2) const {
        return disk_pair_fused(flavor, a, a2, b, b2);
    }
    Vec2 pair_uncut(const Vec2& a, double a2, const Vec2& b, double b2) const {
        return disk_pair_fused(flavor, a, a2, b, b2);
    }
    double tail_scale() const {
        return flavor == BoundaryFlavor::Neumann ? -1.0 / kTwoPi : 0.0;
    }
    Vec2 self_grad(const Vec2& a) const { return 0.5 * disk::grad_robin(flavor, a); }
};

struct DiskCutoffKernel {
    BoundaryFlavor flavor;
    CutoffProfile profile;

    Vec2 pair(const Vec2& a, double a2, const Vec2& b, double b2) const {
        const Vec2 d = a - b;
        const double r2 = d.norm2();
        const double sig2 = profile.sigma * profile.sigma;
        if (r2 >= 4.0 * sig2) return disk_pair_fused(flavor, a, a2, b, b2);
        // harmonic part only below sigma; ramp in between
        const double q2 = a2 * b2 - 2.0 * a.dot(b) + 1.0;
        const Vec2 image = (a * b2 - b) / (kTwoPi * q2);
        Vec2 f = (flavor == BoundaryFlavor::Dirichlet) ? -image : image;
        if (r2 > sig2) {
            const double r = std::sqrt(r2);
            const Vec2 dir = d / r;
            f += profile.chi_tilde(r) / (kTwoPi * r) * dir +
                 std::log(r) / kTwoPi * profile.chi_tilde_prime(r) * dir;
        }
        return f;
    }
    Vec2 pair_uncut(const Vec2& a, double a2, const Vec2& b, double b2) const {
        return disk_pair_fused(flavor, a, a2, b, b2);
    }
    double tail_scale() const {
        return flavor == BoundaryFlavor::Neumann ? -1.0 / kTwoPi : 0.0;
    }
    Vec2 self_grad(const Vec2& a) const { return 0.5 * disk::grad_robin(flavor, a); }
};

struct GenericPairKernel {
    const GreenEvaluator& ev;
    const std::optional<CutoffProfile>& cutoff;

    Vec2 pair(const Vec2& a, double, const Vec2& b, double) const {
        return cutoff ? ev.grad_cutoff_green(*cutoff, a, b) : ev.grad_green(a, b);
    }
    Vec2 pair_uncut(const Vec2& a, double, const Vec2& b, double) const {
        return ev.grad_green(a, b);
    }
    double tail_scale() const { return 0.0; }
    Vec2 self_grad(const Vec2& a) const { return 0.5 * ev.grad_robin(a); }
};

template <typename Kernel>
Forces forces_impl(const ParticleEnsemble& ens, const ChargeState* charges,
                   const GreenEvaluator& ev, const BoundaryDensity& h_pla,
                   const BoundaryDensity& h_cha, const PushOptions& opt,
                   const Kernel& kernel) {
    const std::size_t n = ens.size();
    const auto& dom = ev.domain();
    const double r_min = 1e-4 * dom.inradius();
    const double r_min2 = r_min * r_min;
    const double tail = kernel.tail_scale();

    // precomputed squared norms of all source points
    std::vector<double> nrm2(n);
    for (std::size_t j = 0; j < n; ++j) nrm2[j] = ens.x[j].norm2();
    const int nq = dom.quad_size();
    std::vector<Vec2> bnode(nq);
    std::vector<double> bweight(nq), bnrm2(nq);
    double bweight_total = 0.0;
    const bool with_boundary = !h_pla.is_zero();
    if (with_boundary) {
        for (int j = 0; j < nq; ++j) {
            bnode[j] = dom.quad_point(j);
            bnrm2[j] = bnode[j].norm2();
            bweight[j] = h_pla.values[j] * dom.quad_weight(j);
            bweight_total += bweight[j];
        }
    }

    Forces out;
    out.particle.assign(n, Vec2{0, 0});
    std::atomic<bool> collision{false};

    parallel_chunks(n, [&](std::size_t i0, std::size_t i1, std::size_t) {
        for (std::size_t i = i0; i < i1; ++i) {
            if (!ens.alive[i]) continue;
            const Vec2 a = ens.x[i];
            const double a2 = nrm2[i];
            Vec2 f{0, 0};
            double wsum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i || !ens.alive[j]) continue;
                f += ens.w[j] * kernel.pair(a, a2, ens.x[j], nrm2[j]);
                wsum += ens.w[j];
            }
            if (charges) {
                for (const auto& xq : charges->xi) {
                    if (dist2(a, xq) < r_min2) collision.store(true);
                    f += ev.grad_green(a, xq);
                }
            }
            if (with_boundary) {
                // boundary data couple through the unmodified kernel
                Vec2 bf{0, 0};
                for (int j = 0; j < nq; ++j)
                    bf += bweight[j] * kernel.pair_uncut(a, a2, bnode[j], bnrm2[j]);
                f -= bf;
                wsum -= bweight_total;
            }
            f += (tail * wsum) * a; // deferred constant-per-source term
            if (opt.include_self_image) f += ens.w[i] * kernel.self_grad(a);
            out.particle[i] = f;
        }
    });
    require(!collision.load(),
            "plasma-charge collision: particle inside the exclusion radius of a charge");

    if (charges && !opt.freeze_charges) {
        const int m = charges->count();
        out.charge.assign(m, Vec2{0, 0});
        for (int a = 0; a < m; ++a) {
            const Vec2 xa = charges->xi[a];
            const double xa2 = xa.norm2();
            Vec2 f{0, 0};
            // deterministic chunked sum of the plasma pull on the charge
            std::vector<Vec2> partial((n + kChunk - 1) / kChunk, Vec2{0, 0});
            std::vector<double> wpart((n + kChunk - 1) / kChunk, 0.0);
            parallel_chunks(n, [&](std::size_t i0, std::size_t i1, std::size_t c) {
                Vec2 s{0, 0};
                double ws = 0.0;
                for (std::size_t i = i0; i < i1; ++i) {
                    if (!ens.alive[i]) continue;
                    s += ens.w[i] * kernel.pair_uncut(xa, xa2, ens.x[i], nrm2[i]);
                    ws += ens.w[i];
                }
                partial[c] = s;
                wpart[c] = ws;
            });
            double wsum = 0.0;
            for (std::size_t c = 0; c < partial.size(); ++c) {
                f += partial[c];
                wsum += wpart[c];
            }
            f += (tail * wsum) * xa;
            for (int b = 0; b < m; ++b)
                if (b != a) f += ev.grad_green(xa, charges->xi[b]);
            f += ev.grad_charge_boundary_potential(xa, h_cha, m);
            out.charge[a] = f;
        }
    }
    return out;
}

} // namespace detail

/// One force pass over particles and charges; deterministic for any worker
/// count. Throws on plasma-charge collision (continuation criterion).
inline Forces compute_forces(const ParticleEnsemble& ens, const ChargeState* charges,
                             const GreenEvaluator& ev, const BoundaryDensity& h_pla,
                             const BoundaryDensity& h_cha, const PushOptions& opt = {}) {
    const bool exact_disk = std::string_view(ev.backend_name()) == "exact_disk";
    if (exact_disk && opt.cutoff) {
        return detail::forces_impl(ens, charges, ev, h_pla, h_cha, opt,
                                   detail::DiskCutoffKernel{ev.flavor(), *opt.cutoff});
    }
    if (exact_disk) {
        return detail::forces_impl(ens, charges, ev, h_pla, h_cha, opt,
                                   detail::DiskPairKernel{ev.flavor()});
    }
    return detail::forces_impl(ens, charges, ev, h_pla, h_cha, opt,
                               detail::GenericPairKernel{ev, opt.cutoff});
}

struct StepReport {
    int absorbed_count = 0;
    double absorbed_weight = 0.0;
    double absorbed_energy = 0.0; // sum of w |v|^2 / 2 at the wall
    int bounce_count = 0;
    int charge_exit = -1; // index of a charge that left the domain, -1 if none
};

/// Drift of one particle with boundary events; x, v updated in place.
/// Returns false if the particle was absorbed.
inline bool drift_particle(const ConvexDomain& dom, Vec2& x, Vec2& v, double dt,
                           BoundaryRule rule, StepReport& report, double weight) {
    double remaining = dt;
    for (int bounce = 0; bounce < 32; ++bounce) {
        auto hit = dom.boundary_hit(x, v, remaining);
        if (!hit) {
            x += remaining * v;
            return true;
        }
        x = hit->x_hit;
        remaining -= hit->t_hit;
        if (rule == BoundaryRule::Absorption) {
            ++report.absorbed_count;
            report.absorbed_weight += weight;
            report.absorbed_energy += 0.5 * weight * v.norm2();
            return false;
        }
        v = reflect_across_unit_normal(v, dom.outward_normal(hit->mu));
        ++report.bounce_count;
    }
    fail("grazing trap: particle exceeded 32 boundary events in one step");
}

/// Coupled kick-drift-kick step of particles and charges. `forces` must hold
/// the forces at the current positions and is replaced by the forces at the
/// new positions (reuse it across steps: one force pass per step).
inline StepReport push_coupled(ParticleEnsemble& ens, ChargeState* charges,
                               const GreenEvaluator& ev, BoundaryRule rule, double dt,
                               const BoundaryDensity& h_pla, const BoundaryDensity& h_cha,
                               Forces& forces, const PushOptions& opt = {}) {
    require(dt > 0.0, "dt must be positive");
    const auto& dom = ev.domain();
    StepReport report;

    const bool move_charges = charges && !opt.freeze_charges;
    for (std::size_t i = 0; i < ens.size(); ++i)
        if (ens.alive[i]) ens.v[i] += 0.5 * dt * forces.particle[i];
    if (move_charges)
        for (int a = 0; a < charges->count(); ++a)
            charges->eta[a] += 0.5 * dt * forces.charge[a];

    for (std::size_t i = 0; i < ens.size(); ++i) {
        if (!ens.alive[i]) continue;
        if (!drift_particle(dom, ens.x[i], ens.v[i], dt, rule, report, ens.w[i]))
            ens.alive[i] = 0;
    }
    if (move_charges) {
        for (int a = 0; a < charges->count(); ++a) {
            charges->xi[a] += dt * charges->eta[a];
            if (!dom.inside(charges->xi[a])) {
                report.charge_exit = a;
                return report; // caller decides; forces are stale now
            }
        }
    }

    forces = compute_forces(ens, charges, ev, h_pla, h_cha, opt);
    for (std::size_t i = 0; i < ens.size(); ++i)
        if (ens.alive[i]) ens.v[i] += 0.5 * dt * forces.particle[i];
    if (move_charges)
        for (int a = 0; a < charges->count(); ++a)
            charges->eta[a] += 0.5 * dt * forces.charge[a];
    return report;
}

/// Spec op: particles-only step; any charges act as frozen sources.
inline StepReport push(ParticleEnsemble& ens, const ChargeState* charges,
                       const GreenEvaluator& ev, BoundaryRule rule, double dt,
                       const BoundaryDensity& h_pla, PushOptions opt = {}) {
    opt.freeze_charges = true;
    ChargeState frozen = charges ? *charges : ChargeState{};
    const auto h_cha = BoundaryDensity::zero(ev.domain());
    Forces forces =
        compute_forces(ens, charges ? &frozen : nullptr, ev, h_pla, h_cha, opt);
    return push_coupled(ens, charges ? &frozen : nullptr, ev, rule, dt, h_pla, h_cha, forces,
                        opt);
}

// ---------------------------------------------------------------------------
// moments and sampling

/// p = 1 norm: total alive weight.
inline double l1_norm(const ParticleEnsemble& ens) { return ens.total_weight(); }

struct PhaseBox {
    double x0, x1, y0, y1, vx0, vx1, vy0, vy1;
};

/// Discrete stand-in for ||f||_inf: max cell-averaged phase-space density on
/// a fixed 32^4 grid over the given box.
inline double linf_proxy(const ParticleEnsemble& ens, const PhaseBox& box) {
    constexpr int nb = 32;
    const double dx = (box.x1 - box.x0) / nb, dy = (box.y1 - box.y0) / nb;
    const double dvx = (box.vx1 - box.vx0) / nb, dvy = (box.vy1 - box.vy0) / nb;
    require(dx > 0 && dy > 0 && dvx > 0 && dvy > 0, "degenerate phase box");
    std::vector<double> bins(static_cast<std::size_t>(nb) * nb * nb * nb, 0.0);
    auto clampi = [](int k) { return std::min(std::max(k, 0), nb - 1); };
    for (std::size_t i = 0; i < ens.size(); ++i) {
        if (!ens.alive[i]) continue;
        const int ix = clampi(int((ens.x[i].x - box.x0) / dx));
        const int iy = clampi(int((ens.x[i].y - box.y0) / dy));
        const int ivx = clampi(int((ens.v[i].x - box.vx0) / dvx));
        const int ivy = clampi(int((ens.v[i].y - box.vy0) / dvy));
        bins[((std::size_t(ix) * nb + iy) * nb + ivx) * nb + ivy] += ens.w[i];
    }
    double peak = 0.0;
    for (double b : bins) peak = std::max(peak, b);
    return peak / (dx * dy * dvx * dvy);
}

struct PlasmaBoxSpec {
    PhaseBox box;
    double weight;
    int count;
};

/// Deterministic low-discrepancy fill of phase-space boxes (Halton bases
/// 2,3,5,7), equal weights; the seed only permutes particle order.
inline ParticleEnsemble sample_boxes(const std::vector<PlasmaBoxSpec>& specs,
                                     std::uint64_t seed) {
    struct Slot {
        Vec2 x, v;
        double w;
    };
    std::vector<Slot> slots;
    for (const auto& s : specs) {
        require(s.count > 0 && s.weight > 0, "plasma box needs positive weight and count");
        for (int i = 0; i < s.count; ++i) {
            const std::uint64_t k = i + 1;
            slots.push_back({{s.box.x0 + (s.box.x1 - s.box.x0) * radical_inverse(k, 2),
                              s.box.y0 + (s.box.y1 - s.box.y0) * radical_inverse(k, 3)},
                             {s.box.vx0 + (s.box.vx1 - s.box.vx0) * radical_inverse(k, 5),
                              s.box.vy0 + (s.box.vy1 - s.box.vy0) * radical_inverse(k, 7)},
                             s.weight / s.count});
        }
    }
    seed_permute(slots, seed);
    ParticleEnsemble ens;
    for (const auto& s : slots) ens.push_back(s.x, s.v, s.w);
    return ens;
}

} // namespace pcm
