#pragma once

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pcm/bem.hpp"
#include "pcm/charges.hpp"
#include "pcm/common.hpp"
#include "pcm/desingularization.hpp"
#include "pcm/simulation.hpp"

namespace pcm {

/* Verification batteries behind `sim verify <suite>` and the acceptance
 * suite: analytic kernel identities (greens), Nystrom-vs-exact equivalence
 * and Robin bound behavior (bem), conservation / specular / monitor checks
 * on the standard benchmarks (conserve), and the blob-limit sweep (desing).
 * Each check carries a one-line quantitative detail string.
 */

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {
inline std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof buf, f, args);
    va_end(args);
    return buf;
}
} // namespace detail

// ---------------------------------------------------------------------------
// greens suite

inline std::vector<CheckResult> verify_greens() {
    std::vector<CheckResult> out;
    auto dom = std::make_shared<const ConvexDomain>(ConvexDomain::unit_disk());
    auto evD = make_disk_evaluator(dom, BoundaryFlavor::Dirichlet);

    {
        SplitMix64 rng(2024);
        double worst = 0.0;
        for (int b = 0; b < 256; ++b) {
            const double mu = kTwoPi * b / 256;
            const Vec2 xb{std::cos(mu), std::sin(mu)};
            for (int s = 0; s < 4; ++s) {
                Vec2 y{2 * rng.uniform() - 1, 2 * rng.uniform() - 1};
                if (y.norm() > 0.97) continue;
                worst = std::max(worst, std::abs(evD.green(xb, y)));
            }
        }
        out.push_back({"disk Dirichlet boundary trace <= 1e-12", worst <= 1e-12,
                       detail::fmt("max |G_D(x_b, y)| = %.3e", worst)});
    }
    {
        SplitMix64 rng(2025);
        double worst = 0.0;
        for (int k = 0; k < 1000; ++k) {
            Vec2 x{2 * rng.uniform() - 1, 2 * rng.uniform() - 1};
            Vec2 y{2 * rng.uniform() - 1, 2 * rng.uniform() - 1};
            if (x.norm() > 0.95 || y.norm() > 0.95 || dist(x, y) < 1e-6) continue;
            worst = std::max(worst, std::abs(evD.green(x, y) - evD.green(y, x)));
        }
        out.push_back({"Green symmetry <= 1e-13", worst <= 1e-13,
                       detail::fmt("max |G(x,y) - G(y,x)| = %.3e", worst)});
    }
    {
        const double r1 = halfspace_robin(BoundaryFlavor::Dirichlet, 0.5, 2);
        const double r2 = halfspace_robin(BoundaryFlavor::Dirichlet, 0.25, 3);
        const double r3 = halfspace_robin(BoundaryFlavor::Neumann, 0.1, 2);
        const bool ok = std::abs(r1) <= 1e-12 && std::abs(r2 - 1.0 / kTwoPi) <= 1e-12 &&
                        std::abs(r3 - std::log(0.2) / kTwoPi) <= 1e-12;
        out.push_back({"half-space Robin closed forms", ok,
                       detail::fmt("R_D(0.5,d2)=%.2e R_D(0.25,d3)-1/2pi=%.2e", r1,
                                   r2 - 1.0 / kTwoPi)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// bem suite

inline std::vector<CheckResult> verify_bem() {
    std::vector<CheckResult> out;

    // Nystrom Robin vs exact disk Robin at n_b = 256 over 50 probes
    {
        auto dom = std::make_shared<const ConvexDomain>(ConvexDomain::unit_disk(256));
        double worst = 0.0;
        for (auto flavor : {BoundaryFlavor::Dirichlet, BoundaryFlavor::Neumann}) {
            NystromSystem sys(dom, flavor, 256);
            SplitMix64 rng(7);
            int probes = 0;
            while (probes < 25) {
                Vec2 x{2 * rng.uniform() - 1, 2 * rng.uniform() - 1};
                if (x.norm() > 0.9) continue;
                ++probes;
                worst = std::max(worst,
                                 std::abs(sys.robin_numeric(x) - disk::robin(flavor, x)));
            }
        }
        out.push_back({"BEM Robin matches exact disk Robin <= 1e-5 at n_b=256", worst <= 1e-5,
                       detail::fmt("max error %.3e over 50 probes", worst)});
    }
    // observed convergence order across n_b in {64, 128, 256}
    {
        std::vector<double> errs;
        for (int nb : {64, 128, 256}) {
            auto dom = std::make_shared<const ConvexDomain>(ConvexDomain::unit_disk(nb));
            NystromSystem sys(dom, BoundaryFlavor::Dirichlet, nb);
            SplitMix64 rng(11);
            double worst = 0.0;
            int probes = 0;
            while (probes < 20) {
                Vec2 x{2 * rng.uniform() - 1, 2 * rng.uniform() - 1};
                if (x.norm() > 0.88) continue;
                ++probes;
                worst = std::max(worst,
                                 std::abs(sys.robin_numeric(x) -
                                          disk::robin(BoundaryFlavor::Dirichlet, x)));
            }
            errs.push_back(std::max(worst, 1e-16));
        }
        const double order1 = std::log2(errs[0] / errs[1]);
        const double order2 = std::log2(errs[1] / errs[2]);
        const double order = std::min(order1, order2);
        out.push_back({"BEM convergence order >= 2", order >= 2.0,
                       detail::fmt("errors %.2e -> %.2e -> %.2e, observed order %.1f",
                                   errs[0], errs[1], errs[2], order)});
    }
    // Robin bound behavior on disk and ellipse
    {
        bool mono = true, bounded = true;
        std::ostringstream ss;
        // disk: exact formulas at r in {0.5, 0.9, 0.99, 0.999}
        {
            double prevD = -1e300, prevN = 1e300;
            for (double r : {0.5, 0.9, 0.99, 0.999}) {
                const Vec2 x{r, 0};
                const double d = 1.0 - r;
                const double RD = disk::robin(BoundaryFlavor::Dirichlet, x);
                const double RN = disk::robin(BoundaryFlavor::Neumann, x);
                mono = mono && RD > prevD && RN < prevN;
                prevD = RD;
                prevN = RN;
                bounded = bounded && std::abs(RD + std::log(d) / kTwoPi) <= 1.0 &&
                          std::abs(RN - std::log(d) / kTwoPi) <= 1.0;
            }
        }
        // ellipse: Nystrom probes along the inward normal
        {
            auto ell = std::make_shared<const ConvexDomain>(ConvexDomain::ellipse(1.5, 1.0, 256));
            NystromSystem sysD(ell, BoundaryFlavor::Dirichlet, 256);
            NystromSystem sysN(ell, BoundaryFlavor::Neumann, 256);
            const double mu = 0.9;
            const Vec2 xb = ell->boundary_point(mu), n = ell->outward_normal(mu);
            double prevD = -1e300, prevN = 1e300;
            for (double depth : {0.30, 0.20, 0.10, 0.05}) {
                const Vec2 x = xb - depth * n;
                const double RD = sysD.robin_numeric(x), RN = sysN.robin_numeric(x);
                mono = mono && RD > prevD && RN < prevN;
                prevD = RD;
                prevN = RN;
                const double d = ell->distance_to_boundary(x);
                bounded = bounded && std::abs(RD + std::log(d) / kTwoPi) <= 1.0 &&
                          std::abs(RN - std::log(d) / kTwoPi) <= 1.0;
                ss << detail::fmt(" d=%.2f RD=%.3f RN=%.3f", d, RD, RN);
            }
        }
        out.push_back({"Robin monotone blowup with bounded log compensation", mono && bounded,
                       "ellipse probes:" + ss.str()});
    }
    return out;
}

// ---------------------------------------------------------------------------
// conserve suite

inline RunConfig neumann_benchmark_config(double dt = 5e-4) {
    json j;
    j["domain"] = {{"shape", "disk"}};
    j["flavor"] = "neumann";
    j["boundary_rule"] = "reflection";
    j["h_n"] = "uniform";
    j["h_n_cha"] = "uniform";
    j["charges"] = json::array({{{"xi", {0.5, 0.0}}, {"eta", {0.0, 0.0}}}});
    j["plasma"] = json::array(
        {{{"x_box", {-0.35, 0.25, -0.3, 0.3}}, {"v_box", {-1.0, 1.0, -1.0, 1.0}},
          {"weight", 1.0}, {"count", 2000}}});
    j["dt"] = dt;
    j["t_end"] = 1.0;
    j["output_stride"] = 50;
    j["seed"] = 1;
    j["delta1"] = 0.05;
    return parse_config(j);
}

inline RunConfig absorption_benchmark_config(double dt = 5e-4) {
    json j;
    j["domain"] = {{"shape", "disk"}};
    j["flavor"] = "dirichlet";
    j["boundary_rule"] = "absorption";
    j["plasma"] = json::array(
        {{{"x_box", {-0.35, 0.35, -0.3, 0.3}}, {"v_box", {-1.2, 1.2, -1.2, 1.2}},
          {"weight", 1.0}, {"count", 2000}}});
    j["dt"] = dt;
    j["t_end"] = 1.0;
    j["output_stride"] = 50;
    j["seed"] = 1;
    j["delta1"] = 0.05;
    return parse_config(j);
}

inline std::vector<CheckResult> verify_conserve() {
    std::vector<CheckResult> out;
    auto dom = std::make_shared<const ConvexDomain>(ConvexDomain::unit_disk());

    // charge-boundary force signs (single-charge runs)
    {
        auto evD = make_disk_evaluator(dom, BoundaryFlavor::Dirichlet);
        ChargeIntegrator fallin({{{0.3, 0}}, {{0, 0}}}, evD, BoundaryDensity::zero(*dom));
        double r = 0.3;
        bool monotone = true;
        for (int s = 0; s < 40000; ++s) {
            if (fallin.step(1e-3).boundary_exit) break;
            const double rn = fallin.state().xi[0].norm();
            monotone = monotone && rn >= r - 1e-12;
            r = rn;
            if (1.0 - r < 0.01) break;
        }
        out.push_back({"Dirichlet wall approach is monotone", monotone && r > 0.9,
                       detail::fmt("final radius %.3f", r)});

        auto evN = make_disk_evaluator(dom, BoundaryFlavor::Neumann);
        ChargeIntegrator turn({{{0.5, 0}}, {{0, 0}}}, evN, BoundaryDensity::uniform(*dom, 1.0));
        double min_d = 1e300;
        for (int s = 0; s < 10000; ++s) {
            turn.step(1e-3);
            min_d = std::min(min_d, dom->distance_to_boundary(turn.state().xi[0]));
        }
        out.push_back({"Neumann turn-around with positive wall floor", min_d >= 0.25,
                       detail::fmt("min wall distance %.4f over T=10", min_d)});
    }

    // specular invariants
    {
        SplitMix64 rng(3);
        double worst_inv = 0.0, worst_speed = 0.0;
        for (int k = 0; k < 300; ++k) {
            const double mu = kTwoPi * rng.uniform();
            const Vec2 xb = dom->boundary_point(mu);
            const Vec2 v{4 * rng.uniform() - 2, 4 * rng.uniform() - 2};
            const Vec2 r = dom->reflect(xb, v);
            worst_inv = std::max(worst_inv, dist(dom->reflect(xb, r), v));
            worst_speed = std::max(worst_speed, std::abs(r.norm() - v.norm()) / (v.norm() + 1e-30));
        }
        out.push_back({"reflection involution exact, |v| preserved <= 1e-13",
                       worst_inv <= 1e-12 && worst_speed <= 1e-13,
                       detail::fmt("involution %.2e, speed %.2e", worst_inv, worst_speed)});

        auto evN = make_disk_evaluator(dom, BoundaryFlavor::Neumann);
        ChargeState init{{{0.5, 0}, {-0.2, 0.3}}, {{0, 0.1}, {0.2, 0}}};
        ChargeIntegrator integ(init, evN, BoundaryDensity::uniform(*dom, 2.0));
        for (int s = 0; s < 1000; ++s) integ.step(1e-3);
        for (int s = 0; s < 1000; ++s) integ.step(-1e-3);
        double err = 0.0;
        for (int a = 0; a < 2; ++a)
            err = std::max({err, dist(integ.state().xi[a], init.xi[a]),
                            dist(integ.state().eta[a], init.eta[a])});
        out.push_back({"charge integrator time reversal <= 1e-10", err <= 1e-10,
                       detail::fmt("return error %.2e", err)});
    }

    // Neumann reflection benchmark: drift, exact l1, dt-halving, velocity monitor
    {
        const auto res = run_simulation(neumann_benchmark_config(5e-4));
        const bool l1_exact = res.l1_initial == res.l1_final;
        out.push_back({"Neumann benchmark energy drift <= 1e-3",
                       res.status == "completed" && res.energy_drift_rel <= 1e-3,
                       detail::fmt("drift %.3e, status %s", res.energy_drift_rel,
                                   res.status.c_str())});
        out.push_back({"Neumann benchmark ||f||_1 exactly constant", l1_exact,
                       detail::fmt("initial %.17g final %.17g", res.l1_initial, res.l1_final)});

        const auto res2 = run_simulation(neumann_benchmark_config(2.5e-4));
        const double ratio = res.energy_drift_rel / std::max(res2.energy_drift_rel, 1e-300);
        out.push_back({"halving dt reduces drift >= 3.5x", ratio >= 3.5,
                       detail::fmt("drift %.3e -> %.3e, ratio %.2f", res.energy_drift_rel,
                                   res2.energy_drift_rel, ratio)});

        const bool beta_ok = res.beta.max_ratio <= 50.0 && res.beta.min_ratio >= 1.0 / 50.0 &&
                             res.beta.flagged_entries == 0;
        out.push_back({"velocity-lemma beta ratios within [1/50, 50], no grazing traps",
                       beta_ok && res.events.empty(),
                       detail::fmt("beta ratio in [%.3f, %.3f] over %d episodes",
                                   res.beta.min_ratio, res.beta.max_ratio,
                                   res.beta.episodes)});
    }

    // absorption benchmark: mass bookkeeping and energy-with-flux
    {
        const auto res = run_simulation(absorption_benchmark_config(5e-4));
        const double absorbed = res.l1_initial - res.l1_final;
        out.push_back({"absorption benchmark conserves ||f||_1 + absorbed weight",
                       res.status == "completed" && absorbed >= 0 &&
                           std::abs(res.records.back().l1 - res.l1_final) == 0.0,
                       detail::fmt("initial %.6f final %.6f absorbed %.6f", res.l1_initial,
                                   res.l1_final, absorbed)});
        out.push_back({"absorption benchmark energy-with-flux drift <= 1e-3",
                       res.energy_drift_rel <= 1e-3,
                       detail::fmt("drift %.3e", res.energy_drift_rel)});
    }

    // determinism across worker counts
    {
        const auto tmp = std::filesystem::temp_directory_path();
        auto cfg = neumann_benchmark_config(1e-3);
        cfg.effective["t_end"] = 0.05;
        cfg.effective["plasma"][0]["count"] = 300;
        cfg = parse_config(cfg.effective);
        const int saved = thread_count();
        set_thread_count(1);
        run_simulation(cfg, tmp / "pcm_det_a");
        set_thread_count(2);
        run_simulation(cfg, tmp / "pcm_det_b");
        set_thread_count(saved);
        auto slurp = [](const std::filesystem::path& p) {
            std::ifstream in(p, std::ios::binary);
            std::stringstream ss;
            ss << in.rdbuf();
            return ss.str();
        };
        const bool same =
            slurp(tmp / "pcm_det_a" / "diagnostics.csv") ==
                slurp(tmp / "pcm_det_b" / "diagnostics.csv") &&
            slurp(tmp / "pcm_det_a" / "charges.csv") == slurp(tmp / "pcm_det_b" / "charges.csv");
        out.push_back({"bit-identical CSVs across worker counts", same,
                       same ? "1 vs 2 workers byte-equal" : "outputs differ"});
        std::filesystem::remove_all(tmp / "pcm_det_a");
        std::filesystem::remove_all(tmp / "pcm_det_b");
    }
    return out;
}

// ---------------------------------------------------------------------------
// desing suite

/// The charge is launched toward the wall and turned around by its image
/// barrier; the reference minimum separation sets the cutoff clamp well
/// below the blob scales. The two larger blobs lose coherence near the wall
/// (the finite-eps stopping event), the smallest tracks the point charge.
inline RunConfig desing_benchmark_config() {
    json j;
    j["domain"] = {{"shape", "disk"}};
    j["flavor"] = "neumann";
    j["boundary_rule"] = "reflection";
    j["h_n_cha"] = "uniform";
    j["charges"] = json::array({{{"xi", {0.72, 0.0}}, {"eta", {0.40, 0.0}}}});
    j["seed"] = 1;
    j["desing"] = {{"epsilon_list", {0.1, 0.05, 0.025}},
                   {"particles_per_blob", 2048},
                   {"cutoff_constant", 1.0},
                   {"t_end", 0.5},
                   {"dt", 1e-3},
                   {"output_stride", 10}};
    return parse_config(j);
}

inline std::vector<CheckResult> verify_desing() {
    std::vector<CheckResult> out;
    const auto rows = run_desing_sweep(desing_benchmark_config());
    std::ostringstream ss;
    for (const auto& r : rows)
        ss << detail::fmt(" (eps=%.3f sigma=%.4f sup_p=%.3e t_eps=%.2f)", r.epsilon, r.sigma,
                          r.sup_p, r.t_eps_hit);
    const bool monotone = rows.size() == 3 && rows[1].sup_p < rows[0].sup_p &&
                          rows[2].sup_p < rows[1].sup_p;
    const bool factor = rows.size() == 3 && rows[2].sup_p <= 0.2 * rows[0].sup_p;
    out.push_back({"sup p_eps strictly decreasing along the sweep", monotone, ss.str()});
    out.push_back({"sup p(0.025) <= 0.2 sup p(0.1)", factor,
                   rows.size() == 3
                       ? detail::fmt("ratio %.3f", rows[2].sup_p / rows[0].sup_p)
                       : "sweep incomplete"});
    return out;
}

// ---------------------------------------------------------------------------

inline std::vector<CheckResult> run_suite(const std::string& name) {
    if (name == "greens") return verify_greens();
    if (name == "bem") return verify_bem();
    if (name == "conserve") return verify_conserve();
    if (name == "desing") return verify_desing();
    fail("unknown verify suite: " + name + " (expected greens|bem|conserve|desing)");
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::string junit_report(const std::string& suite,
                                const std::vector<CheckResult>& checks, double seconds) {
    int failures = 0;
    for (const auto& c : checks)
        if (!c.pass) ++failures;
    std::ostringstream ss;
    ss << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    ss << "<testsuite name=\"" << xml_escape(suite) << "\" tests=\"" << checks.size()
       << "\" failures=\"" << failures << "\" time=\"" << seconds << "\">\n";
    for (const auto& c : checks) {
        ss << "  <testcase name=\"" << xml_escape(c.name) << "\">";
        if (!c.pass) ss << "\n    <failure message=\"" << xml_escape(c.detail) << "\"/>\n  ";
        ss << "</testcase>\n";
    }
    ss << "</testsuite>\n";
    return ss.str();
}

} // namespace pcm
