#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "pcm/charges.hpp"
#include "pcm/common.hpp"
#include "pcm/diagnostics.hpp"
#include "pcm/geometry.hpp"
#include "pcm/greens.hpp"
#include "pcm/plasma.hpp"

namespace pcm {

/* Recovering the point-charge dynamics from blob plasma.
 *
 * Each charge alpha is replaced by a unit-mass blob of plasma supported on
 * B(xi_a, eps) x B(eta_a, eps); the blobs evolve under the cutoff kernel
 * G^sigma (reflection boundary rule) with the charge boundary density term
 *
 *   phi(t,x) = int G^sigma_#(x,y) rho(y) dy - int_bdry G_#(x,y) h_cha(y) dS_y,
 *
 * the reference point-charge model is integrated separately
 *
 *   deta_a/dt = sum_{b != a} grad G_#(xi_a, xi_b) + grad H_#(xi_a),
 *
 * and the deviation p_eps(t) = sum_a [ |xi_blob - xi| + |eta_blob - eta| ]
 * between blob barycenters and reference charges is swept over decreasing
 * eps with the schedule sigma = (C T / |ln eps|)^(1/3), clamped below
 * delta2/8 where delta2 is the reference run's smallest wall/pairwise
 * separation. sup_t p_eps shrinking along the sweep is the desk-scale form
 * of the vanishing-deviation limit.
 */

struct BlobSpec {
    double epsilon;
    std::vector<std::pair<Vec2, Vec2>> centers; // (position, velocity) per blob
    int particles_per_blob = 2048;
    double cutoff_constant = 1.0;               // C in the sigma schedule
    std::optional<double> cutoff_scale;         // explicit sigma override
};

/// sigma = (C T / |ln eps|)^(1/3).
inline double cutoff_schedule(double c_cut, double horizon, double eps) {
    require(eps > 0.0 && eps < 1.0, "epsilon must lie in (0, 1)");
    return std::cbrt(c_cut * horizon / std::abs(std::log(eps)));
}

/// Low-discrepancy uniform fill of the phase-space ball products; one unit of
/// mass per blob, particles tagged by blob index. Samples come in antithetic
/// pairs (point and antipode), pinning each blob's barycenter to its center
/// exactly. The seed only permutes particle order.
inline ParticleEnsemble make_blobs(const BlobSpec& spec, const ConvexDomain& dom,
                                   std::uint64_t seed) {
    const double eps = spec.epsilon;
    require(eps > 0.0, "blob radius must be positive");
    require(spec.particles_per_blob > 0 && spec.particles_per_blob % 2 == 0,
            "particles_per_blob must be positive and even");
    const int m = static_cast<int>(spec.centers.size());
    for (int a = 0; a < m; ++a) {
        require(dom.distance_to_boundary(spec.centers[a].first) >= 2.0 * eps,
                "blobs overlapping or touching the boundary: wall separation below 2 eps");
        for (int b = a + 1; b < m; ++b)
            require(dist(spec.centers[a].first, spec.centers[b].first) > 2.0 * eps,
                    "blobs overlapping or touching the boundary: supports intersect");
    }

    struct Slot {
        Vec2 x, v;
        double w;
        int tag;
    };
    std::vector<Slot> slots;
    const double w = 1.0 / spec.particles_per_blob;
    const int half = spec.particles_per_blob / 2;
    std::vector<Vec2> dx(half), dv(half);
    for (int a = 0; a < m; ++a) {
        for (int i = 0; i < half; ++i) {
            const std::uint64_t k = i + 1;
            // polar maps give exactly uniform fills of both balls
            const double rx = eps * std::sqrt(radical_inverse(k, 2));
            const double tx = kTwoPi * radical_inverse(k, 3);
            const double rv = eps * std::sqrt(radical_inverse(k, 5));
            const double tv = kTwoPi * radical_inverse(k, 7);
            dx[i] = rx * Vec2{std::cos(tx), std::sin(tx)};
            dv[i] = rv * Vec2{std::cos(tv), std::sin(tv)};
        }
        // Whiten the cloud: map the sampled 4D covariance onto the exact
        // isotropic ball value. The residual anisotropy and x-v cross moments
        // of the raw lattice are what couple to the field curvature (the
        // isotropic part does not: the kernel is harmonic), so removing them
        // removes the dominant sampling bias of the barycenter dynamics.
        if (half >= 8) {
            Eigen::Matrix4d cov = Eigen::Matrix4d::Zero();
            for (int i = 0; i < half; ++i) {
                Eigen::Vector4d u(dx[i].x, dx[i].y, dv[i].x, dv[i].y);
                cov += u * u.transpose();
            }
            cov /= half;
            const double target = eps * eps / 4.0; // second moment of the uniform ball
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(cov);
            require(es.info() == Eigen::Success && es.eigenvalues().minCoeff() > 0,
                    "degenerate blob sample covariance");
            const Eigen::Matrix4d map = es.operatorInverseSqrt() * std::sqrt(target);
            double stretch = 0.0;
            for (int i = 0; i < half; ++i) {
                Eigen::Vector4d u(dx[i].x, dx[i].y, dv[i].x, dv[i].y);
                u = map * u;
                dx[i] = {u[0], u[1]};
                dv[i] = {u[2], u[3]};
                stretch = std::max({stretch, dx[i].norm() / eps, dv[i].norm() / eps});
            }
            if (stretch > 1.0) { // keep the support strictly inside the eps-balls
                const double shrink = (1.0 - 1e-12) / stretch;
                for (int i = 0; i < half; ++i) {
                    dx[i] *= shrink;
                    dv[i] *= shrink;
                }
            }
        }
        for (int i = 0; i < half; ++i) {
            slots.push_back(
                {spec.centers[a].first + dx[i], spec.centers[a].second + dv[i], w, a});
            slots.push_back(
                {spec.centers[a].first - dx[i], spec.centers[a].second - dv[i], w, a});
        }
    }
    seed_permute(slots, seed);
    ParticleEnsemble ens;
    for (const auto& s : slots) ens.push_back(s.x, s.v, s.w, s.tag);
    return ens;
}

/// Positions/velocities of charges (or blob barycenters) on a time grid.
struct Trajectory {
    std::vector<double> times;
    std::vector<std::vector<Vec2>> xi;  // [time][charge]
    std::vector<std::vector<Vec2>> eta;
    int charge_count() const { return times.empty() ? 0 : static_cast<int>(xi[0].size()); }
};

struct ReferenceRun {
    Trajectory traj;
    double delta2 = 0.0;   // inf_t min(wall distance, pairwise separation)
    double energy_drift = 0.0;
    bool boundary_exit = false;
};

/// Integrates the point-charge model; with a cutoff profile the charge-charge
/// kernel is G^sigma (the modified point-charge model; identical while all
/// pairs stay 2 sigma apart).
inline ReferenceRun run_reference(const GreenEvaluator& ev, const BoundaryDensity& h_cha,
                                  ChargeState state, double horizon, double dt,
                                  int output_stride = 1,
                                  const std::optional<CutoffProfile>& cutoff = {}) {
    require(dt > 0.0 && horizon > 0.0, "time grid must be positive");
    state.validate(ev.domain());
    const int m = state.count();

    auto forces = [&](const ChargeState& s) {
        std::vector<Vec2> f(m);
        for (int a = 0; a < m; ++a) {
            Vec2 acc{0, 0};
            for (int b = 0; b < m; ++b) {
                if (b == a) continue;
                acc += cutoff ? ev.grad_cutoff_green(*cutoff, s.xi[a], s.xi[b])
                              : ev.grad_green(s.xi[a], s.xi[b]);
            }
            acc += ev.grad_charge_boundary_potential(s.xi[a], h_cha, m);
            f[a] = acc;
        }
        return f;
    };

    ReferenceRun out;
    out.delta2 = std::numeric_limits<double>::infinity();
    auto min_separation = [&](const ChargeState& s) {
        double d = std::numeric_limits<double>::infinity();
        for (int a = 0; a < m; ++a) {
            d = std::min(d, ev.domain().distance_to_boundary(s.xi[a]));
            for (int b = a + 1; b < m; ++b) d = std::min(d, dist(s.xi[a], s.xi[b]));
        }
        return d;
    };
    auto record = [&](double t) {
        out.traj.times.push_back(t);
        out.traj.xi.push_back(state.xi);
        out.traj.eta.push_back(state.eta);
    };

    const double e0 = charge_energy(state, ev, h_cha);
    std::vector<Vec2> f = forces(state);
    const int steps = static_cast<int>(std::llround(horizon / dt));
    record(0.0);
    out.delta2 = std::min(out.delta2, min_separation(state));
    for (int s = 1; s <= steps; ++s) {
        for (int a = 0; a < m; ++a) state.eta[a] += 0.5 * dt * f[a];
        for (int a = 0; a < m; ++a) state.xi[a] += dt * state.eta[a];
        for (int a = 0; a < m; ++a) {
            if (!ev.domain().inside(state.xi[a])) {
                out.boundary_exit = true;
                return out;
            }
        }
        f = forces(state);
        for (int a = 0; a < m; ++a) state.eta[a] += 0.5 * dt * f[a];
        out.delta2 = std::min(out.delta2, min_separation(state));
        if (s % output_stride == 0 || s == steps) record(s * dt);
        if (std::abs(e0) > 1e-12)
            out.energy_drift = std::max(
                out.energy_drift, std::abs(charge_energy(state, ev, h_cha) - e0) / std::abs(e0));
    }
    return out;
}

struct ModifiedRun {
    Trajectory barycenters;
    double t_eps = -1.0;      // first time a blob particle entered the delta2/2 shell
    double energy_drift = 0.0;
};

/// Advances the blob ensemble under the cutoff kernel (reflection rule) and
/// records per-blob barycenters. Entering the delta2/2 boundary shell is the
/// stopping-time event: recorded, not fatal.
inline ModifiedRun run_modified(const BlobSpec& spec, const GreenEvaluator& ev,
                                const BoundaryDensity& h_cha, double sigma, double delta2,
                                double horizon, double dt, std::uint64_t seed,
                                int output_stride = 1) {
    require(sigma < delta2 / 8.0, "cutoff scale must stay below delta2 / 8");
    const CutoffProfile profile(sigma);
    ParticleEnsemble ens = make_blobs(spec, ev.domain(), seed);
    const int m = static_cast<int>(spec.centers.size());

    PushOptions opt;
    opt.cutoff = profile;

    ModifiedRun out;
    auto record = [&](double t) {
        std::vector<Vec2> xi(m, Vec2{0, 0}), eta(m, Vec2{0, 0});
        std::vector<double> mass(m, 0.0);
        for (std::size_t i = 0; i < ens.size(); ++i) {
            if (!ens.alive[i]) continue;
            const int a = ens.blob[i];
            xi[a] += ens.w[i] * ens.x[i];
            eta[a] += ens.w[i] * ens.v[i];
            mass[a] += ens.w[i];
        }
        for (int a = 0; a < m; ++a) {
            xi[a] = xi[a] / mass[a];
            eta[a] = eta[a] / mass[a];
        }
        out.barycenters.times.push_back(t);
        out.barycenters.xi.push_back(std::move(xi));
        out.barycenters.eta.push_back(std::move(eta));
    };
    auto shell_check = [&](double t) {
        if (out.t_eps >= 0.0) return;
        for (std::size_t i = 0; i < ens.size(); ++i) {
            if (!ens.alive[i]) continue;
            if (ev.domain().distance_to_boundary(ens.x[i]) < 0.5 * delta2) {
                out.t_eps = t;
                return;
            }
        }
    };

    const auto h_zero = BoundaryDensity::zero(ev.domain());
    Forces forces = compute_forces(ens, nullptr, ev, h_cha, h_zero, opt);
    const double e0 =
        total_energy_direct(ens, nullptr, ev, h_cha, h_zero, 0.0, 0.0, profile);
    const int steps = static_cast<int>(std::llround(horizon / dt));
    record(0.0);
    shell_check(0.0);
    for (int s = 1; s <= steps; ++s) {
        push_coupled(ens, nullptr, ev, BoundaryRule::Reflection, dt, h_cha, h_zero, forces,
                     opt);
        shell_check(s * dt);
        if (s % output_stride == 0 || s == steps) {
            record(s * dt);
            const double e =
                total_energy_direct(ens, nullptr, ev, h_cha, h_zero, 0.0, 0.0, profile);
            if (std::abs(e0) > 1e-12)
                out.energy_drift = std::max(out.energy_drift, std::abs(e - e0) / std::abs(e0));
        }
    }
    return out;
}

struct DeviationSeries {
    std::vector<double> times;
    std::vector<double> p;                      // sum over charges of |dxi| + |deta|
    std::vector<std::vector<double>> per_charge; // [time][charge]
    double sup_p = 0.0;
};

namespace detail {
// Catmull-Rom interpolation of a trajectory component onto time t
inline Vec2 cubic_sample(const Trajectory& tr, const std::vector<std::vector<Vec2>>& comp,
                         int charge, double t) {
    const auto& ts = tr.times;
    const int n = static_cast<int>(ts.size());
    if (t <= ts.front()) return comp.front()[charge];
    if (t >= ts.back()) return comp.back()[charge];
    int k = int(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin()) - 1;
    k = std::max(1, std::min(k, n - 3));
    const double h = ts[k + 1] - ts[k];
    const double u = (t - ts[k]) / h;
    const Vec2 p0 = comp[k - 1][charge], p1 = comp[k][charge], p2 = comp[k + 1][charge],
               p3 = comp[k + 2][charge];
    const Vec2 m1 = 0.5 * (p2 - p0), m2 = 0.5 * (p3 - p1);
    const double u2 = u * u, u3 = u2 * u;
    return (2 * u3 - 3 * u2 + 1) * p1 + (u3 - 2 * u2 + u) * m1 + (-2 * u3 + 3 * u2) * p2 +
           (u3 - u2) * m2;
}
} // namespace detail

/// p_eps(t) on the modified run's grid; the reference is sampled cubically
/// when the grids differ.
inline DeviationSeries deviation(const Trajectory& modified, const Trajectory& reference) {
    require(modified.charge_count() == reference.charge_count(),
            "deviation: trajectories carry different charge counts");
    require(reference.times.size() >= 4, "deviation: reference grid too short");
    const int m = modified.charge_count();
    DeviationSeries out;
    out.times = modified.times;
    for (std::size_t k = 0; k < modified.times.size(); ++k) {
        const double t = modified.times[k];
        double p = 0.0;
        std::vector<double> per(m);
        for (int a = 0; a < m; ++a) {
            const Vec2 xr = detail::cubic_sample(reference, reference.xi, a, t);
            const Vec2 er = detail::cubic_sample(reference, reference.eta, a, t);
            per[a] = dist(modified.xi[k][a], xr) + dist(modified.eta[k][a], er);
            p += per[a];
        }
        out.p.push_back(p);
        out.per_charge.push_back(std::move(per));
        out.sup_p = std::max(out.sup_p, p);
    }
    return out;
}

struct SweepRow {
    double epsilon = 0.0;
    double sigma = 0.0;
    double sup_p = 0.0;
    double t_eps_hit = -1.0;
    double wall_seconds = 0.0;
};

/// Runs the reference once, then one modified run per epsilon with the
/// clamped cutoff schedule. eps_list must be strictly decreasing.
inline std::vector<SweepRow> sweep(const BlobSpec& spec_template, const GreenEvaluator& ev,
                                   const BoundaryDensity& h_cha,
                                   const std::vector<double>& eps_list, double horizon,
                                   double dt, std::uint64_t seed, int output_stride = 1) {
    for (std::size_t i = 1; i < eps_list.size(); ++i)
        require(eps_list[i] < eps_list[i - 1], "epsilon list must be strictly decreasing");
    std::vector<SweepRow> rows;
    if (eps_list.empty()) return rows;

    ChargeState centers;
    for (const auto& [x, v] : spec_template.centers) {
        centers.xi.push_back(x);
        centers.eta.push_back(v);
    }
    const auto ref = run_reference(ev, h_cha, centers, horizon, dt, output_stride);
    require(!ref.boundary_exit, "reference charge reached the boundary inside the horizon");

    for (double eps : eps_list) {
        SweepRow row;
        row.epsilon = eps;
        BlobSpec spec = spec_template;
        spec.epsilon = eps;
        row.sigma = spec.cutoff_scale
                        ? *spec.cutoff_scale
                        : cutoff_schedule(spec.cutoff_constant, horizon, eps);
        row.sigma = std::min(row.sigma, 0.125 * ref.delta2 * (1.0 - 1e-9));
        const auto t0 = std::chrono::steady_clock::now();
        const auto mod = run_modified(spec, ev, h_cha, row.sigma, ref.delta2, horizon, dt,
                                      seed, output_stride);
        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        row.sup_p = deviation(mod.barycenters, ref.traj).sup_p;
        row.t_eps_hit = mod.t_eps;
        rows.push_back(row);
    }
    return rows;
}

} // namespace pcm
