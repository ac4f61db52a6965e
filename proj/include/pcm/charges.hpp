#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "pcm/common.hpp"
#include "pcm/geometry.hpp"
#include "pcm/greens.hpp"

namespace pcm {

/* Point-charge state and dynamics.
 *
 * Newton's equations for charge alpha:
 *
 *   dxi/dt  = eta
 *   deta/dt = E_pla(xi) + sum_{beta != alpha} grad G_#(xi, xi_beta) + grad H_#(xi)
 *
 * with H_# = R_#/2 - int G_# h_cha dS. Charge and mass are normalized to 1.
 * The plasma-free system conserves
 *
 *   E = sum_a [ |eta_a|^2/2 - H_#(xi_a) ] - 1/2 sum_{a != b} G_#(xi_a, xi_b)
 *
 * exactly along the ODE flow; velocity-Verlet keeps the discrete drift at
 * O(dt^2) without secular growth, which is the main evidence the diagnostics
 * collect.
 */

struct ChargeState {
    std::vector<Vec2> xi;
    std::vector<Vec2> eta;

    int count() const { return static_cast<int>(xi.size()); }

    void validate(const ConvexDomain& dom) const {
        require(xi.size() == eta.size(), "charge position/velocity count mismatch");
        for (const auto& p : xi)
            require(dom.inside(p), "charge position must be strictly interior");
        for (std::size_t a = 0; a < xi.size(); ++a)
            for (std::size_t b = a + 1; b < xi.size(); ++b)
                require(dist(xi[a], xi[b]) > 0.0, "charges must be pairwise distinct");
    }
};

/// Optional plasma field sampled at a point (empty for the plasma-free system).
using PlasmaField = std::function<Vec2(const Vec2&)>;

/// Acceleration of charge alpha. Throws "continuation criterion violated" if
/// the charge sits within 1e-6 * inradius of the boundary or another charge.
inline Vec2 charge_force(const ChargeState& state, int alpha, const GreenEvaluator& ev,
                         const BoundaryDensity& h_cha, const PlasmaField& plasma = {}) {
    const double guard = 1e-6 * ev.domain().inradius();
    const Vec2& x = state.xi[alpha];
    require(ev.domain().distance_to_boundary(x) > guard,
            "continuation criterion violated: charge too close to the boundary");
    Vec2 f = plasma ? plasma(x) : Vec2{0, 0};
    for (int b = 0; b < state.count(); ++b) {
        if (b == alpha) continue;
        require(dist(x, state.xi[b]) > guard,
                "continuation criterion violated: charges too close");
        f += ev.grad_green(x, state.xi[b]);
    }
    f += ev.grad_charge_boundary_potential(x, h_cha, state.count());
    return f;
}

/// E = sum_a [ |eta|^2 / 2 - H_#(xi_a) ] - 1/2 sum_{a != b} G_#; the conserved
/// quantity of the plasma-free system.
inline double charge_energy(const ChargeState& state, const GreenEvaluator& ev,
                            const BoundaryDensity& h_cha) {
    double e = 0.0;
    for (int a = 0; a < state.count(); ++a) {
        e += 0.5 * state.eta[a].norm2();
        e -= ev.charge_boundary_potential(state.xi[a], h_cha, state.count());
    }
    for (int a = 0; a < state.count(); ++a)
        for (int b = 0; b < state.count(); ++b) {
            if (b == a) continue;
            e -= 0.5 * ev.green(state.xi[a], state.xi[b]);
        }
    return e;
}

/// Velocity-Verlet integrator for the plasma-free charge system. Forces are
/// evaluated once per step (the closing kick is reused as the next opening
/// kick). step() reports a boundary exit instead of throwing: Dirichlet runs
/// may legitimately end that way.
class ChargeIntegrator {
public:
    ChargeIntegrator(ChargeState state, const GreenEvaluator& ev, BoundaryDensity h_cha)
        : state_(std::move(state)), ev_(ev), h_cha_(std::move(h_cha)) {
        state_.validate(ev_.domain());
        forces_ = all_forces();
    }

    const ChargeState& state() const { return state_; }
    double energy() const { return charge_energy(state_, ev_, h_cha_); }

    struct StepResult {
        bool boundary_exit = false;
        int exited_charge = -1;
    };

    /// One kick-drift-kick step; dt may be negative (time reversal).
    StepResult step(double dt) {
        const int m = state_.count();
        for (int a = 0; a < m; ++a) state_.eta[a] += 0.5 * dt * forces_[a];
        for (int a = 0; a < m; ++a) state_.xi[a] += dt * state_.eta[a];
        for (int a = 0; a < m; ++a) {
            if (!ev_.domain().inside(state_.xi[a])) return {true, a};
        }
        forces_ = all_forces();
        for (int a = 0; a < m; ++a) state_.eta[a] += 0.5 * dt * forces_[a];
        return {};
    }

private:
    std::vector<Vec2> all_forces() const {
        std::vector<Vec2> f(state_.count());
        for (int a = 0; a < state_.count(); ++a) f[a] = charge_force(state_, a, ev_, h_cha_);
        return f;
    }

    ChargeState state_;
    const GreenEvaluator& ev_;
    BoundaryDensity h_cha_;
    std::vector<Vec2> forces_;
};

} // namespace pcm
