#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pcm/common.hpp"
#include "pcm/diagnostics.hpp"
#include "pcm/geometry.hpp"
#include "pcm/greens.hpp"
#include "pcm/plasma.hpp"

using namespace pcm;
using Catch::Matchers::WithinAbs;

namespace {

auto disk_dom() { return std::make_shared<const ConvexDomain>(ConvexDomain::unit_disk()); }

// test-only oracle: classic RK4 on the coupled particle+charge ODEs,
// independent of the velocity-Verlet path used by the simulator
struct CoupledRk4 {
    ParticleEnsemble ens;
    ChargeState charges;
    const GreenEvaluator& ev;
    BoundaryDensity h_pla, h_cha;
    bool with_charges;

    struct Deriv {
        std::vector<Vec2> dx, dv, dxi, deta;
    };

    Deriv deriv(const ParticleEnsemble& e, const ChargeState& c) const {
        Forces f = compute_forces(e, with_charges ? &c : nullptr, ev, h_pla, h_cha, {});
        Deriv d;
        d.dx = e.v;
        d.dv = f.particle;
        if (with_charges) {
            d.dxi = c.eta;
            d.deta = f.charge;
        }
        return d;
    }

    void step(double dt) {
        auto advance = [&](const Deriv& d, double a) {
            ParticleEnsemble e2 = ens;
            ChargeState c2 = charges;
            for (std::size_t i = 0; i < e2.size(); ++i) {
                e2.x[i] += a * dt * d.dx[i];
                e2.v[i] += a * dt * d.dv[i];
            }
            for (int q = 0; q < c2.count(); ++q) {
                if (!with_charges) break;
                c2.xi[q] += a * dt * d.dxi[q];
                c2.eta[q] += a * dt * d.deta[q];
            }
            return std::pair{e2, c2};
        };
        const Deriv k1 = deriv(ens, charges);
        auto [e2, c2] = advance(k1, 0.5);
        const Deriv k2 = deriv(e2, c2);
        auto [e3, c3] = advance(k2, 0.5);
        const Deriv k3 = deriv(e3, c3);
        auto [e4, c4] = advance(k3, 1.0);
        const Deriv k4 = deriv(e4, c4);
        for (std::size_t i = 0; i < ens.size(); ++i) {
            ens.x[i] += dt / 6.0 * (k1.dx[i] + 2 * k2.dx[i] + 2 * k3.dx[i] + k4.dx[i]);
            ens.v[i] += dt / 6.0 * (k1.dv[i] + 2 * k2.dv[i] + 2 * k3.dv[i] + k4.dv[i]);
        }
        for (int q = 0; q < charges.count() && with_charges; ++q) {
            charges.xi[q] += dt / 6.0 * (k1.dxi[q] + 2 * k2.dxi[q] + 2 * k3.dxi[q] + k4.dxi[q]);
            charges.eta[q] +=
                dt / 6.0 * (k1.deta[q] + 2 * k2.deta[q] + 2 * k3.deta[q] + k4.deta[q]);
        }
    }

    double energy() const {
        return total_energy_direct(ens, with_charges ? &charges : nullptr, ev, h_pla, h_cha,
                                   0.0, 0.0);
    }
};

} // namespace

TEST_CASE("degenerate energies vanish") {
    auto dom = disk_dom();
    auto ev = make_disk_evaluator(dom, BoundaryFlavor::Dirichlet);
    const auto h0 = BoundaryDensity::zero(*dom);

    ChargeState center{{{0, 0}}, {{0, 0}}};
    ParticleEnsemble none;
    const auto eb = energy_breakdown(none, &center, ev, h0, h0, 0.0, 0.0);
    CHECK_THAT(eb.total(), WithinAbs(0.0, 1e-14));

    ParticleEnsemble one;
    one.push_back({0, 0}, {0, 0}, 1.0);
    const auto eb2 = energy_breakdown(one, nullptr, ev, h0, h0, 0.0, 0.0);
    CHECK_THAT(eb2.total(), WithinAbs(0.0, 1e-14)); // R_D(0) = 0
}

TEST_CASE("conservation oracle: two heavy particles in the Dirichlet disk") {
    auto dom = disk_dom();
    auto ev = make_disk_evaluator(dom, BoundaryFlavor::Dirichlet);
    CoupledRk4 sys{ParticleEnsemble{}, ChargeState{}, ev, BoundaryDensity::zero(*dom),
                   BoundaryDensity::zero(*dom), false};
    sys.ens.push_back({0.3, 0}, {0, 0}, 1.0);
    sys.ens.push_back({-0.3, 0}, {0, 0}, 1.0);

    // the free-space pair contribution to the interaction energy
    const double pair_g = -fundamental_solution(Vec2{0.3, 0}, Vec2{-0.3, 0});
    CHECK_THAT(pair_g, WithinAbs(-std::log(0.6) / kTwoPi, 1e-13));
    CHECK(pair_g > 0.0);

    const double e0 = sys.energy();
    for (int s = 0; s < 200; ++s) sys.step(1e-4);
    CHECK_THAT(sys.energy(), WithinAbs(e0, 1e-8 * std::abs(e0)));
    // the pair actually moved (repulsion + image forces)
    CHECK(sys.ens.x[0].x != 0.3);
}

TEST_CASE("conservation oracle: full coupled system on the Neumann disk") {
    auto dom = disk_dom();
    auto ev = make_disk_evaluator(dom, BoundaryFlavor::Neumann);
    const double plasma_weight = 0.6;
    CoupledRk4 sys{ParticleEnsemble{}, ChargeState{}, ev,
                   BoundaryDensity::uniform(*dom, plasma_weight),
                   BoundaryDensity::uniform(*dom, 1.0), true};
    sys.ens.push_back({0.3, 0.2}, {0.1, 0}, 0.2);
    sys.ens.push_back({-0.4, 0.1}, {0, -0.2}, 0.3);
    sys.ens.push_back({0.0, -0.35}, {-0.1, 0.1}, 0.1);
    sys.charges = ChargeState{{{0.1, 0.5}}, {{0, 0}}};

    const double e0 = sys.energy();
    REQUIRE(std::abs(e0) > 1e-3);
    for (int s = 0; s < 200; ++s) sys.step(1e-4);
    CHECK_THAT(sys.energy(), WithinAbs(e0, 1e-8 * std::abs(e0)));
}

TEST_CASE("energy decomposition re-adds to the direct total") {
    auto dom = disk_dom();
    auto ev = make_disk_evaluator(dom, BoundaryFlavor::Neumann);
    auto ens = sample_boxes({{{-0.3, 0.3, -0.3, 0.3, -1, 1, -1, 1}, 0.8, 300}}, 7);
    ChargeState charges{{{0.1, 0.5}, {-0.5, -0.1}}, {{0.1, 0}, {0, 0.2}}};
    const auto h_pla = BoundaryDensity::uniform(*dom, 0.8);
    const auto h_cha = BoundaryDensity::uniform(*dom, 2.0);

    const auto eb = energy_breakdown(ens, &charges, ev, h_pla, h_cha, 1.0, 0.123);
    const double direct =
        total_energy_direct(ens, &charges, ev, h_pla, h_cha, 1.0, 0.123);
    CHECK_THAT(eb.kinetic + eb.interaction + eb.flux, WithinAbs(direct, 1e-12));
}

TEST_CASE("moment examples") {
    auto dom = disk_dom();
    ParticleEnsemble ens;
    ens.push_back({0.2, 0}, {0, 0}, 0.4);
    ens.push_back({-0.1, 0.3}, {0, 0}, 0.6);

    // k = 0: the total weight, regardless of charges
    CHECK_THAT(moment_hk(ens, nullptr, 0, 1.0), WithinAbs(1.0, 1e-14));

    // no charges, all at rest, K1 = 1: h == 1
    CHECK_THAT(moment_hk(ens, nullptr, 4, 1.0), WithinAbs(1.0, 1e-14));

    // single particle at distance 1/(4 pi) from a resting charge: h = 2
    ParticleEnsemble single;
    single.push_back({1.0 / (4 * kPi), 0}, {0, 0}, 1.0);
    ChargeState charge{{{0, 0}}, {{0, 0}}};
    CHECK_THAT(moment_hk(single, &charge, 2, 1.0), WithinAbs(2.0, 1e-12));
}

TEST_CASE("singular moment increment examples") {
    ParticleEnsemble single;
    single.push_back({0.5, 0}, {0, 0}, 1.0);
    CHECK(singular_moment_lk_increment(single, nullptr, 0, 0.1, 1.0) == 0.0);

    ChargeState charge{{{0, 0}}, {{0, 0}}};
    CHECK_THAT(singular_moment_lk_increment(single, &charge, 0, 0.1, 1.0),
               WithinAbs(0.4, 1e-13));

    auto scaled = single;
    scaled.w[0] *= 3.0;
    CHECK_THAT(singular_moment_lk_increment(scaled, &charge, 0, 0.1, 1.0),
               WithinAbs(1.2, 1e-12));
}

TEST_CASE("pointwise Q") {
    ParticleEnsemble ens;
    ens.push_back({0.5, 0}, {1, 0}, 1.0);

    // no charges: sqrt(|v|^2/2 + K1)
    CHECK_THAT(pointwise_q_now(ens, nullptr, 1.0), WithinAbs(std::sqrt(1.5), 1e-13));

    // resting charge at distance 1, particle at rest: sqrt(2)
    ParticleEnsemble rest;
    rest.push_back(Vec2{0.7, 0}, {0, 0}, 1.0); // distance 1 from (-0.3, 0)
    ChargeState charge{{{-0.3, 0}}, {{0, 0}}};
    CHECK_THAT(pointwise_q_now(rest, &charge, 1.0), WithinAbs(std::sqrt(2.0), 1e-13));

    // windowed sup is nondecreasing while values grow
    WindowedMax q(10.0);
    q.push(0.0, 1.0);
    CHECK(q.max() == 1.0);
    q.push(1.0, 3.0);
    CHECK(q.max() == 3.0);
    q.push(2.0, 2.0);
    CHECK(q.max() == 3.0);
    // everything before t - window expires
    q.push(11.5, 0.5);
    CHECK(q.max() == 2.0); // the t=2 value is still inside [1.5, 11.5]
    q.push(12.5, 0.5);
    CHECK(q.max() == 0.5);
}

TEST_CASE("beta monitor examples") {
    auto dom = disk_dom();
    const auto h1 = BoundaryDensity::uniform(*dom, kTwoPi); // h_N == 1

    // on-wall particle with normal speed v0: beta = v0^2/2 (x_perp = 0)
    {
        const double v0 = 0.7;
        const double b = beta_value(*dom, h1, {1.0, 0}, {-v0, 0});
        CHECK_THAT(b, WithinAbs(0.5 * v0 * v0, 1e-12));
    }
    // h_N = 1, no tangential motion, x_perp = 0.1, v_perp = 0: beta = 0.1
    {
        const double b = beta_value(*dom, h1, {0.9, 0}, {0, 0});
        CHECK_THAT(b, WithinAbs(0.1, 1e-12));
    }
    // frozen particle keeps ratio 1
    {
        ParticleEnsemble ens;
        ens.push_back({0.9, 0}, {0, 0}, 1.0);
        VelocityLemmaMonitor mon;
        for (int s = 0; s < 5; ++s) mon.update(ens, *dom, h1);
        CHECK_THAT(mon.ratios().max_ratio, WithinAbs(1.0, 1e-12));
        CHECK_THAT(mon.ratios().min_ratio, WithinAbs(1.0, 1e-12));
        CHECK(mon.ratios().episodes == 1);
        CHECK(mon.ratios().flagged_entries == 0);
    }
}

TEST_CASE("tracker keeps H_k monotone and L_k nondecreasing over a run") {
    auto dom = disk_dom();
    auto ev = make_disk_evaluator(dom, BoundaryFlavor::Neumann);
    auto ens = sample_boxes({{{-0.25, 0.25, -0.25, 0.25, -1, 1, -1, 1}, 1.0, 200}}, 5);
    ChargeState charges{{{0.6, 0}}, {{0, 0}}};
    const auto h_pla = BoundaryDensity::uniform(*dom, 1.0);
    const auto h_cha = BoundaryDensity::uniform(*dom, 1.0);

    DiagnosticsTracker tracker(1.0, 0.0, {2, 4}, {0, 2}, 1e30);
    Forces forces = compute_forces(ens, &charges, ev, h_pla, h_cha, {});
    double h2_prev = 0.0, l2_prev = 0.0, q_prev = 0.0;
    double t = 0.0;
    for (int s = 0; s < 100; ++s) {
        const double dt = 1e-3;
        push_coupled(ens, &charges, ev, BoundaryRule::Reflection, dt, h_pla, h_cha, forces);
        t += dt;
        tracker.accumulate(t, dt, ens, &charges, *dom, h_pla, BoundaryFlavor::Neumann, 0.0);
        CHECK(tracker.hk_sup().at(2) >= h2_prev);
        CHECK(tracker.lk_acc().at(2) >= l2_prev);
        CHECK(tracker.q_windowed() >= q_prev);
        h2_prev = tracker.hk_sup().at(2);
        l2_prev = tracker.lk_acc().at(2);
        q_prev = tracker.q_windowed();
    }
    CHECK(l2_prev > 0.0);

    const auto rec = tracker.record(t, ens, &charges, ev, h_pla, h_cha);
    CHECK_THAT(rec.kinetic + rec.interaction + 0.0 * rec.flux_energy,
               WithinAbs(rec.energy, 1e-12));
    CHECK(rec.min_dist_charge > 0.0);
    CHECK(rec.min_dist_boundary > 0.0);
    CHECK_THAT(rec.l1, WithinAbs(1.0, 1e-12));
}
