#pragma once

#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "pcm/charges.hpp"
#include "pcm/common.hpp"
#include "pcm/geometry.hpp"
#include "pcm/greens.hpp"
#include "pcm/parallel.hpp"
#include "pcm/plasma.hpp"

namespace pcm {

/* Conserved and monitored quantities.
 *
 * Total energy of the discrete system (gamma = 1 for absorption, 0 for
 * reflection; flux = accumulated kinetic energy carried through the wall):
 *
 *   E = sum_i w_i |v_i|^2 / 2 + sum_a |eta_a|^2 / 2
 *     - sum_{i<j} w_i w_j G_#(x_i, x_j) - 1/2 sum_i w_i^2 R_#(x_i)
 *     - sum_{i,a} w_i G_#(x_i, xi_a)
 *     - sum_{a<b} G_#(xi_a, xi_b) - sum_a H_#(xi_a)
 *     + sum_i w_i int G_#(x_i, y) h_pla(y) dS_y
 *     + gamma * flux.
 *
 * The continuous-time particle+charge ODEs (with the self-image force)
 * conserve this exactly; velocity-Verlet keeps the discrete drift at O(dt^2).
 *
 * Monitors: pointwise energy h = |v|^2/2 + sum_a 1/(4 pi |x - xi_a|) + K1
 * with moments H_k (running sup of sum w h^(k/2)) and accumulated singular
 * moments L_k; per-charge energy h_a = |v - eta_a|^2/2 + 1/|x - xi_a| + K1
 * with Q the windowed sup of sqrt(h_a); and the grazing-set monitor
 * beta = v_perp^2/2 + (h_N + v_tan^2 kappa) x_perp inside the boundary
 * collar.
 */

struct EnergyBreakdown {
    double kinetic = 0.0;
    double interaction = 0.0;
    double flux = 0.0;  // gamma-weighted boundary flux term
    double total() const { return kinetic + interaction + flux; }
};

/// Pair/self potential split of the energy; `cutoff` switches the particle
/// pair kernel to the modified G^sigma (the charge terms keep G_#).
inline EnergyBreakdown energy_breakdown(const ParticleEnsemble& ens, const ChargeState* charges,
                                        const GreenEvaluator& ev, const BoundaryDensity& h_pla,
                                        const BoundaryDensity& h_cha, double gamma,
                                        double flux_accumulated,
                                        const std::optional<CutoffProfile>& cutoff = {}) {
    EnergyBreakdown out;
    const std::size_t n = ens.size();

    out.kinetic = parallel_sum(n, [&](std::size_t i) {
        return ens.alive[i] ? 0.5 * ens.w[i] * ens.v[i].norm2() : 0.0;
    });

    auto pair_green = [&](const Vec2& a, const Vec2& b) {
        return cutoff ? ev.cutoff_green(*cutoff, a, b) : ev.green(a, b);
    };

    // - sum_{i<j} w_i w_j G(x_i,x_j), lower-triangle chunks in index order
    double inter = -parallel_sum(n, [&](std::size_t i) {
        if (!ens.alive[i]) return 0.0;
        double s = 0.0;
        for (std::size_t j = 0; j < i; ++j)
            if (ens.alive[j]) s += ens.w[j] * pair_green(ens.x[i], ens.x[j]);
        return ens.w[i] * s;
    });
    // - 1/2 sum_i w_i^2 R(x_i): the finite harmonic self-energy
    inter -= 0.5 * parallel_sum(n, [&](std::size_t i) {
        return ens.alive[i] ? ens.w[i] * ens.w[i] * ev.robin(ens.x[i]) : 0.0;
    });
    // + sum_i w_i int G h_pla dS
    if (!h_pla.is_zero()) {
        inter += parallel_sum(n, [&](std::size_t i) {
            return ens.alive[i] ? ens.w[i] * ev.boundary_integral_green(ens.x[i], h_pla) : 0.0;
        });
    }

    if (charges) {
        const int m = charges->count();
        out.kinetic += parallel_sum(m, [&](std::size_t a) {
            return 0.5 * charges->eta[a].norm2();
        });
        for (int a = 0; a < m; ++a) {
            inter -= parallel_sum(n, [&](std::size_t i) {
                return ens.alive[i] ? ens.w[i] * ev.green(ens.x[i], charges->xi[a]) : 0.0;
            });
            for (int b = 0; b < a; ++b) inter -= ev.green(charges->xi[a], charges->xi[b]);
            inter -= ev.charge_boundary_potential(charges->xi[a], h_cha, m);
        }
    }
    out.interaction = inter;
    out.flux = gamma * flux_accumulated;
    return out;
}

/// Independent single-pass total (different accumulation order than the
/// breakdown); the record invariant compares the two.
inline double total_energy_direct(const ParticleEnsemble& ens, const ChargeState* charges,
                                  const GreenEvaluator& ev, const BoundaryDensity& h_pla,
                                  const BoundaryDensity& h_cha, double gamma,
                                  double flux_accumulated,
                                  const std::optional<CutoffProfile>& cutoff = {}) {
    auto pair_green = [&](const Vec2& a, const Vec2& b) {
        return cutoff ? ev.cutoff_green(*cutoff, a, b) : ev.green(a, b);
    };
    const std::size_t n = ens.size();
    double e = gamma * flux_accumulated;
    for (std::size_t i = 0; i < n; ++i) {
        if (!ens.alive[i]) continue;
        double per = 0.5 * ens.v[i].norm2() - 0.5 * ens.w[i] * ev.robin(ens.x[i]);
        for (std::size_t j = 0; j < i; ++j)
            if (ens.alive[j]) per -= ens.w[j] * pair_green(ens.x[i], ens.x[j]);
        if (charges)
            for (const auto& xi : charges->xi) per -= ev.green(ens.x[i], xi);
        if (!h_pla.is_zero()) per += ev.boundary_integral_green(ens.x[i], h_pla);
        e += ens.w[i] * per;
    }
    if (charges) {
        for (int a = 0; a < charges->count(); ++a) {
            e += 0.5 * charges->eta[a].norm2();
            for (int b = 0; b < a; ++b) e -= ev.green(charges->xi[a], charges->xi[b]);
            e -= ev.charge_boundary_potential(charges->xi[a], h_cha, charges->count());
        }
    }
    return e;
}

// ---------------------------------------------------------------------------
// pointwise energy and moments

/// h(x, v) = |v|^2/2 + sum_a 1/(4 pi |x - xi_a|) + K1.
inline double pointwise_h(const Vec2& x, const Vec2& v, const ChargeState* charges, double k1) {
    double h = 0.5 * v.norm2() + k1;
    if (charges) {
        for (const auto& xi : charges->xi) {
            const double r = dist(x, xi);
            require(r > 0.0, "pointwise energy undefined on a charge");
            h += 1.0 / (4.0 * kPi * r);
        }
    }
    return h;
}

/// H~_k = sum_i w_i h^(k/2).
inline double moment_hk(const ParticleEnsemble& ens, const ChargeState* charges, double k,
                        double k1) {
    require(k >= 0.0, "moment order must be nonnegative");
    return parallel_sum(ens.size(), [&](std::size_t i) {
        if (!ens.alive[i]) return 0.0;
        return ens.w[i] * std::pow(pointwise_h(ens.x[i], ens.v[i], charges, k1), 0.5 * k);
    });
}

/// dt * sum_a sum_i w_i h^(k/2) / |x_i - xi_a|^2, one time-slab of L_k.
inline double singular_moment_lk_increment(const ParticleEnsemble& ens,
                                           const ChargeState* charges, double k, double dt,
                                           double k1) {
    if (!charges || charges->count() == 0) return 0.0;
    const double slab = parallel_sum(ens.size(), [&](std::size_t i) {
        if (!ens.alive[i]) return 0.0;
        const double hk = std::pow(pointwise_h(ens.x[i], ens.v[i], charges, k1), 0.5 * k);
        double s = 0.0;
        for (const auto& xi : charges->xi) s += 1.0 / dist2(ens.x[i], xi);
        return ens.w[i] * hk * s;
    });
    return dt * slab;
}

/// max over alive particles and charges of sqrt(h_a); with no charges, the
/// degenerate max of sqrt(|v|^2/2 + K1).
inline double pointwise_q_now(const ParticleEnsemble& ens, const ChargeState* charges,
                              double k1) {
    double worst = 0.0;
    for (std::size_t i = 0; i < ens.size(); ++i) {
        if (!ens.alive[i]) continue;
        if (!charges || charges->count() == 0) {
            worst = std::max(worst, 0.5 * ens.v[i].norm2() + k1);
            continue;
        }
        for (int a = 0; a < charges->count(); ++a) {
            const double ha = 0.5 * dist2(ens.v[i], charges->eta[a]) +
                              1.0 / dist(ens.x[i], charges->xi[a]) + k1;
            worst = std::max(worst, ha);
        }
    }
    return std::sqrt(worst);
}

/// Running sup of sqrt(h_a) over a sliding time window (Q_{t,delta}); a
/// monotone deque keeps the per-step cost O(1) amortized.
class WindowedMax {
public:
    explicit WindowedMax(double window) : window_(window) {}

    void push(double t, double value) {
        while (!deque_.empty() && deque_.back().second <= value) deque_.pop_back();
        deque_.emplace_back(t, value);
        while (!deque_.empty() && deque_.front().first < t - window_) deque_.pop_front();
    }

    double max() const { return deque_.empty() ? 0.0 : deque_.front().second; }

private:
    double window_;
    std::deque<std::pair<double, double>> deque_;
};

// ---------------------------------------------------------------------------
// velocity-lemma monitor

/// Grazing-set distance function inside the boundary collar:
///   beta = v_perp^2/2 - Ebar_perp0 * x_perp,
///   Ebar_perp0 = -h_N(mu) - v_tan^2 kappa(mu)
/// (the curvature term is the planar single-curvature b = -kappa <= 0).
inline double beta_value(const ConvexDomain& dom, const BoundaryDensity& h_n, const Vec2& x,
                         const Vec2& v) {
    const LocalFrame fr = dom.local_frame(x, v);
    // nodal density interpolated linearly in the boundary parameter
    const int nq = dom.quad_size();
    const double s = fr.mu / kTwoPi * nq;
    const int j0 = ((int(std::floor(s)) % nq) + nq) % nq;
    const int j1 = (j0 + 1) % nq;
    const double frac = s - std::floor(s);
    const double hn = (1 - frac) * h_n.values[j0] + frac * h_n.values[j1];
    const double ebar0 = -hn - fr.v_tan * fr.v_tan * dom.curvature(fr.mu);
    return 0.5 * fr.v_perp * fr.v_perp - ebar0 * fr.x_perp;
}

struct BetaRatios {
    double max_ratio = 1.0;
    double min_ratio = 1.0;
    int flagged_entries = 0; // beta <= 0 at collar entry
    int episodes = 0;
};

/// Tracks beta(s)/beta(entry) per particle across collar episodes.
class VelocityLemmaMonitor {
public:
    void update(const ParticleEnsemble& ens, const ConvexDomain& dom,
                const BoundaryDensity& h_n) {
        entry_beta_.resize(ens.size(), 0.0);
        in_collar_.resize(ens.size(), 0);
        const double d0 = dom.delta0();
        for (std::size_t i = 0; i < ens.size(); ++i) {
            if (!ens.alive[i]) {
                in_collar_[i] = 0;
                continue;
            }
            const double d = dom.distance_to_boundary(ens.x[i]);
            if (d > d0) {
                in_collar_[i] = 0;
                continue;
            }
            const double b = beta_value(dom, h_n, ens.x[i], ens.v[i]);
            if (!in_collar_[i]) {
                in_collar_[i] = 1;
                entry_beta_[i] = b;
                ++ratios_.episodes;
                if (b <= 0.0) ++ratios_.flagged_entries;
                continue;
            }
            if (entry_beta_[i] > 0.0) {
                const double r = b / entry_beta_[i];
                ratios_.max_ratio = std::max(ratios_.max_ratio, r);
                ratios_.min_ratio = std::min(ratios_.min_ratio, r);
            }
        }
    }

    const BetaRatios& ratios() const { return ratios_; }

private:
    std::vector<double> entry_beta_;
    std::vector<std::uint8_t> in_collar_;
    BetaRatios ratios_;
};

// ---------------------------------------------------------------------------
// per-step record

struct DiagnosticsRecord {
    double t = 0.0;
    double energy = 0.0;
    double kinetic = 0.0;
    double interaction = 0.0;
    double flux_energy = 0.0;
    double l1 = 0.0;
    std::map<int, double> hk;  // running sup H_k
    std::map<int, double> lk;  // accumulated L_k
    double q = 0.0;
    double beta_max_ratio = 1.0;
    double beta_min_ratio = 1.0;
    double min_dist_charge = -1.0;
    double min_dist_boundary = -1.0;
};

/// Owns the running sups/accumulators across a run; `accumulate` is called
/// every step, `record` at output strides (the heavy pair sums live there).
class DiagnosticsTracker {
public:
    DiagnosticsTracker(double k1, double gamma, std::vector<int> hk_orders,
                       std::vector<int> lk_orders, double q_window)
        : k1_(k1), gamma_(gamma), hk_orders_(std::move(hk_orders)),
          lk_orders_(std::move(lk_orders)), q_(q_window) {
        for (int k : hk_orders_) hk_sup_[k] = 0.0;
        for (int k : lk_orders_) lk_acc_[k] = 0.0;
    }

    void accumulate(double t, double dt, const ParticleEnsemble& ens,
                    const ChargeState* charges, const ConvexDomain& dom,
                    const BoundaryDensity& h_n, BoundaryFlavor flavor, double absorbed_energy) {
        for (int k : hk_orders_)
            hk_sup_[k] = std::max(hk_sup_[k], moment_hk(ens, charges, k, k1_));
        for (int k : lk_orders_)
            lk_acc_[k] += singular_moment_lk_increment(ens, charges, k, dt, k1_);
        q_.push(t, pointwise_q_now(ens, charges, k1_));
        if (flavor == BoundaryFlavor::Neumann) beta_.update(ens, dom, h_n);
        flux_acc_ += absorbed_energy;
    }

    double flux_accumulated() const { return flux_acc_; }
    const BetaRatios& beta_ratios() const { return beta_.ratios(); }
    const std::map<int, double>& hk_sup() const { return hk_sup_; }
    const std::map<int, double>& lk_acc() const { return lk_acc_; }
    double q_windowed() const { return q_.max(); }

    DiagnosticsRecord record(double t, const ParticleEnsemble& ens, const ChargeState* charges,
                             const GreenEvaluator& ev, const BoundaryDensity& h_pla,
                             const BoundaryDensity& h_cha,
                             const std::optional<CutoffProfile>& cutoff = {}) const {
        DiagnosticsRecord r;
        r.t = t;
        const auto eb =
            energy_breakdown(ens, charges, ev, h_pla, h_cha, gamma_, flux_acc_, cutoff);
        r.energy = eb.total();
        r.kinetic = eb.kinetic;
        r.interaction = eb.interaction;
        r.flux_energy = flux_acc_;
        r.l1 = ens.total_weight();
        r.hk = hk_sup_;
        r.lk = lk_acc_;
        r.q = q_.max();
        r.beta_max_ratio = beta_.ratios().max_ratio;
        r.beta_min_ratio = beta_.ratios().min_ratio;
        if (charges && charges->count() > 0) {
            double dc = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < ens.size(); ++i) {
                if (!ens.alive[i]) continue;
                for (const auto& xi : charges->xi) dc = std::min(dc, dist(ens.x[i], xi));
            }
            r.min_dist_charge = std::isfinite(dc) ? dc : -1.0;
            double db = std::numeric_limits<double>::infinity();
            for (const auto& xi : charges->xi)
                db = std::min(db, ev.domain().distance_to_boundary(xi));
            r.min_dist_boundary = db;
        }
        return r;
    }

private:
    double k1_;
    double gamma_;
    std::vector<int> hk_orders_, lk_orders_;
    std::map<int, double> hk_sup_, lk_acc_;
    WindowedMax q_;
    VelocityLemmaMonitor beta_;
    double flux_acc_ = 0.0;
};

} // namespace pcm
