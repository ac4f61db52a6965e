#pragma once

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pcm/bem.hpp"
#include "pcm/charges.hpp"
#include "pcm/common.hpp"
#include "pcm/desingularization.hpp"
#include "pcm/diagnostics.hpp"
#include "pcm/geometry.hpp"
#include "pcm/greens.hpp"
#include "pcm/io.hpp"
#include "pcm/plasma.hpp"

namespace pcm {

using nlohmann::json;

/* Run orchestration: declarative JSON config -> validated state -> coupled
 * time loop -> diagnostics.csv / charges.csv / particles_*.csv / summary.json
 * / plot.gp. Validation failures name the violated condition; runtime events
 * (charge-boundary collision, plasma-charge collision, grazing trap) end the
 * run with a machine-readable reason.
 */

struct DomainSpec {
    std::string shape = "disk"; // disk | ellipse | fourier
    double a = 1.0, b = 1.0;
    std::vector<double> coeffs;

    ConvexDomain build(int quad_nodes) const {
        if (shape == "disk") return ConvexDomain::unit_disk(quad_nodes);
        if (shape == "ellipse") return ConvexDomain::ellipse(a, b, quad_nodes);
        if (shape == "fourier") return ConvexDomain::fourier(coeffs, quad_nodes);
        fail("config rejected: unknown domain shape '" + shape + "'");
    }
};

/// "uniform" or a Fourier coefficient list in the boundary parameter.
struct DensitySpec {
    bool uniform = true;
    std::vector<double> coeffs;

    BoundaryDensity build(const ConvexDomain& dom, double total_for_uniform) const {
        if (uniform) return BoundaryDensity::uniform(dom, total_for_uniform);
        BoundaryDensity d;
        d.values.resize(dom.quad_size());
        for (int j = 0; j < dom.quad_size(); ++j) {
            const double mu = dom.quad_mu(j);
            double v = coeffs.empty() ? 0.0 : coeffs[0];
            for (std::size_t k = 1; 2 * k - 1 < coeffs.size(); ++k) {
                v += coeffs[2 * k - 1] * std::cos(k * mu);
                if (2 * k < coeffs.size()) v += coeffs[2 * k] * std::sin(k * mu);
            }
            d.values[j] = v;
        }
        return d;
    }
};

struct DesingSpec {
    std::vector<double> epsilon_list{0.1, 0.05, 0.025};
    int particles_per_blob = 2048;
    double cutoff_constant = 1.0;
    std::optional<double> cutoff_scale;
    double t_end = 0.5;
    double dt = 1e-3;
    int output_stride = 10;
};

struct RunConfig {
    DomainSpec domain;
    BoundaryFlavor flavor = BoundaryFlavor::Neumann;
    BoundaryRule rule = BoundaryRule::Reflection;
    DensitySpec h_n;      // plasma boundary data
    DensitySpec h_n_cha;  // charge boundary density
    std::vector<std::pair<Vec2, Vec2>> charges;
    std::vector<PlasmaBoxSpec> plasma;
    double dt = 5e-4;
    double t_end = 1.0;
    int output_stride = 20;
    int snapshot_stride = 0;
    std::uint64_t seed = 1;
    double k1 = 1.0;
    double delta1 = 0.05;
    double q_window = 0.0; // 0 = whole-run sup
    int quad_nodes = 256;
    int bem_nodes = 256;
    DesingSpec desing;

    json effective; // canonical parsed form, hashed into outputs
};

// ---------------------------------------------------------------------------
// parsing

inline RunConfig parse_config(const json& j) {
    RunConfig c;
    if (j.contains("domain")) {
        const auto& d = j.at("domain");
        c.domain.shape = d.value("shape", "disk");
        c.domain.a = d.value("a", 1.0);
        c.domain.b = d.value("b", 1.0);
        if (d.contains("coeffs")) c.domain.coeffs = d.at("coeffs").get<std::vector<double>>();
    }
    const std::string flavor = j.value("flavor", "neumann");
    require(flavor == "neumann" || flavor == "dirichlet",
            "config rejected: flavor must be 'neumann' or 'dirichlet'");
    c.flavor = flavor == "neumann" ? BoundaryFlavor::Neumann : BoundaryFlavor::Dirichlet;
    const std::string rule = j.value("boundary_rule", "reflection");
    require(rule == "reflection" || rule == "absorption",
            "config rejected: boundary_rule must be 'reflection' or 'absorption'");
    c.rule = rule == "reflection" ? BoundaryRule::Reflection : BoundaryRule::Absorption;

    auto parse_density = [](const json& v) {
        DensitySpec d;
        if (v.is_string()) {
            require(v.get<std::string>() == "uniform",
                    "config rejected: density preset must be 'uniform'");
        } else {
            d.uniform = false;
            d.coeffs = v.at("fourier").get<std::vector<double>>();
        }
        return d;
    };
    if (j.contains("h_n")) c.h_n = parse_density(j.at("h_n"));
    if (j.contains("h_n_cha")) c.h_n_cha = parse_density(j.at("h_n_cha"));

    for (const auto& q : j.value("charges", json::array())) {
        const auto xi = q.at("xi").get<std::vector<double>>();
        const auto eta = q.value("eta", std::vector<double>{0.0, 0.0});
        require(xi.size() == 2 && eta.size() == 2, "config rejected: charge entries need 2D xi/eta");
        c.charges.push_back({{xi[0], xi[1]}, {eta[0], eta[1]}});
    }
    for (const auto& p : j.value("plasma", json::array())) {
        const auto xb = p.at("x_box").get<std::vector<double>>();
        const auto vb = p.at("v_box").get<std::vector<double>>();
        require(xb.size() == 4 && vb.size() == 4, "config rejected: boxes need 4 entries");
        PlasmaBoxSpec s{{xb[0], xb[1], xb[2], xb[3], vb[0], vb[1], vb[2], vb[3]},
                        p.at("weight").get<double>(), p.at("count").get<int>()};
        c.plasma.push_back(s);
    }

    c.dt = j.value("dt", c.dt);
    c.t_end = j.value("t_end", c.t_end);
    c.output_stride = j.value("output_stride", c.output_stride);
    c.snapshot_stride = j.value("snapshot_stride", c.snapshot_stride);
    c.seed = j.value("seed", c.seed);
    c.k1 = j.value("k1", c.k1);
    c.delta1 = j.value("delta1", c.delta1);
    c.q_window = j.value("q_window", c.q_window);
    c.quad_nodes = j.value("quad_nodes", c.quad_nodes);
    c.bem_nodes = j.value("bem_nodes", c.bem_nodes);

    if (j.contains("desing")) {
        const auto& d = j.at("desing");
        if (d.contains("epsilon_list"))
            c.desing.epsilon_list = d.at("epsilon_list").get<std::vector<double>>();
        c.desing.particles_per_blob = d.value("particles_per_blob", c.desing.particles_per_blob);
        c.desing.cutoff_constant = d.value("cutoff_constant", c.desing.cutoff_constant);
        if (d.contains("cutoff_scale")) c.desing.cutoff_scale = d.at("cutoff_scale").get<double>();
        c.desing.t_end = d.value("t_end", c.desing.t_end);
        c.desing.dt = d.value("dt", c.desing.dt);
        c.desing.output_stride = d.value("output_stride", c.desing.output_stride);
    }

    c.effective = j;
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open config file: " + path.string());
    json j = json::parse(in);
    return parse_config(j);
}

inline std::string config_hash(const RunConfig& c) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(c.effective.dump())));
    return buf;
}

// ---------------------------------------------------------------------------
// validation

/// Nearest distance from a point to an axis-aligned rectangle.
inline double box_distance(const PhaseBox& b, const Vec2& p) {
    const double dx = std::max({b.x0 - p.x, 0.0, p.x - b.x1});
    const double dy = std::max({b.y0 - p.y, 0.0, p.y - b.y1});
    return std::hypot(dx, dy);
}

inline void validate_config(const RunConfig& c, const ConvexDomain& dom) {
    require(c.dt > 0 && c.t_end > 0, "config rejected: dt and t_end must be positive");
    require(c.output_stride >= 1, "config rejected: output_stride must be >= 1");
    require(c.delta1 > 0, "config rejected (eq-initial-singular-sets): delta1 must be positive");

    const int m = static_cast<int>(c.charges.size());
    double plasma_weight = 0.0;
    for (const auto& p : c.plasma) plasma_weight += p.weight;

    // separation data: charges vs boundary, charges pairwise
    for (int a = 0; a < m; ++a) {
        require(dom.inside(c.charges[a].first),
                "config rejected (eq-initial-singular-sets): charge outside the domain");
        require(dom.distance_to_boundary(c.charges[a].first) > c.delta1,
                "config rejected (eq-initial-singular-sets): charge within delta1 of the boundary");
        for (int b = a + 1; b < m; ++b)
            require(dist(c.charges[a].first, c.charges[b].first) > c.delta1,
                    "config rejected (eq-initial-singular-sets): charges within delta1 of each other");
    }
    // plasma support vs boundary and vs charges
    for (const auto& p : c.plasma) {
        require(p.box.x1 > p.box.x0 && p.box.y1 > p.box.y0 && p.box.vx1 > p.box.vx0 &&
                    p.box.vy1 > p.box.vy0,
                "config rejected: degenerate plasma box");
        const Vec2 corners[4] = {{p.box.x0, p.box.y0},
                                 {p.box.x0, p.box.y1},
                                 {p.box.x1, p.box.y0},
                                 {p.box.x1, p.box.y1}};
        for (const auto& corner : corners) {
            require(dom.inside(corner) && dom.distance_to_boundary(corner) > c.delta1,
                    "config rejected (eq-initial-singular-sets): plasma support within delta1 "
                    "of the boundary");
        }
        for (int a = 0; a < m; ++a)
            require(box_distance(p.box, c.charges[a].first) > c.delta1,
                    "config rejected (eq-initial-singular-sets): plasma support within delta1 "
                    "of a charge");
    }

    if (c.flavor == BoundaryFlavor::Neumann) {
        const auto hn = c.h_n.build(dom, plasma_weight);
        require(std::abs(hn.integral(dom) - plasma_weight) <= 1e-8,
                "config rejected (eq-Neumann-compatibility): plasma weight must equal the "
                "boundary integral of h_N");
        const auto hcha = c.h_n_cha.build(dom, static_cast<double>(m));
        require(std::abs(hcha.integral(dom) - m) <= 1e-8,
                "config rejected (charge compatibility): h_N^cha must integrate to the charge "
                "count");
    }
}

// ---------------------------------------------------------------------------
// run artifacts

struct RunResult {
    std::string status = "completed"; // completed | event
    std::string reason;
    double energy_drift_rel = 0.0;
    double l1_initial = 0.0;
    double l1_final = 0.0;
    double q_final = 0.0;
    double min_dist_boundary_charges = -1.0;
    BetaRatios beta;
    int grazing_traps = 0;
    std::vector<std::string> events;
    std::vector<DiagnosticsRecord> records;
};

/// Coupled time loop; writes artifacts under out_dir when it is nonempty.
inline RunResult run_simulation(const RunConfig& cfg,
                                const std::filesystem::path& out_dir = {}) {
    auto dom = std::make_shared<const ConvexDomain>(cfg.domain.build(cfg.quad_nodes));
    validate_config(cfg, *dom);
    const GreenEvaluator ev = (dom->kind() == ShapeKind::UnitDisk)
                                  ? make_disk_evaluator(dom, cfg.flavor)
                                  : make_bem_evaluator(dom, cfg.flavor, cfg.bem_nodes);

    ParticleEnsemble ens = sample_boxes(cfg.plasma, cfg.seed);
    ChargeState charges;
    for (const auto& [x, v] : cfg.charges) {
        charges.xi.push_back(x);
        charges.eta.push_back(v);
    }
    const int m = charges.count();
    const bool with_charges = m > 0;

    double plasma_weight = 0.0;
    for (const auto& p : cfg.plasma) plasma_weight += p.weight;
    // h_D = 0 and h_D^cha = 0 regardless of input
    const BoundaryDensity h_pla = (cfg.flavor == BoundaryFlavor::Neumann)
                                      ? cfg.h_n.build(*dom, plasma_weight)
                                      : BoundaryDensity::zero(*dom);
    const BoundaryDensity h_cha = (cfg.flavor == BoundaryFlavor::Neumann)
                                      ? cfg.h_n_cha.build(*dom, double(m))
                                      : BoundaryDensity::zero(*dom);

    const double gamma = (cfg.rule == BoundaryRule::Absorption) ? 1.0 : 0.0;
    const double q_window = cfg.q_window > 0 ? cfg.q_window : 2.0 * cfg.t_end + 1.0;
    DiagnosticsTracker tracker(cfg.k1, gamma, {2, 4}, {0, 2}, q_window);

    const std::string hash = config_hash(cfg);
    const bool writing = !out_dir.empty();
    std::optional<CsvWriter> diag_csv, charges_csv;
    if (writing) {
        std::filesystem::create_directories(out_dir);
        diag_csv.emplace(out_dir / "diagnostics.csv", "config_hash=" + hash,
                         "t,energy,kinetic,interaction,flux_energy,l1,H2,H4,L0,L2,Q,"
                         "beta_max_ratio,min_dist_charge,min_dist_boundary");
        if (with_charges)
            charges_csv.emplace(out_dir / "charges.csv", "config_hash=" + hash,
                                "t,alpha,xi_x,xi_y,eta_x,eta_y");
    }

    RunResult res;
    res.l1_initial = ens.total_weight();

    double e0 = 0.0;
    bool have_e0 = false;
    auto emit_record = [&](double t) {
        const auto rec = tracker.record(t, ens, with_charges ? &charges : nullptr, ev, h_pla,
                                        h_cha);
        if (!have_e0) {
            e0 = rec.energy;
            have_e0 = true;
        } else if (std::abs(e0) > 1e-12) {
            res.energy_drift_rel =
                std::max(res.energy_drift_rel, std::abs(rec.energy - e0) / std::abs(e0));
        }
        res.records.push_back(rec);
        if (diag_csv) {
            diag_csv->row({fmt17(rec.t), fmt17(rec.energy), fmt17(rec.kinetic),
                           fmt17(rec.interaction), fmt17(rec.flux_energy), fmt17(rec.l1),
                           fmt17(rec.hk.at(2)), fmt17(rec.hk.at(4)), fmt17(rec.lk.at(0)),
                           fmt17(rec.lk.at(2)), fmt17(rec.q), fmt17(rec.beta_max_ratio),
                           fmt17(rec.min_dist_charge), fmt17(rec.min_dist_boundary)});
        }
        if (charges_csv) {
            for (int a = 0; a < m; ++a)
                charges_csv->row({fmt17(t), std::to_string(a), fmt17(charges.xi[a].x),
                                  fmt17(charges.xi[a].y), fmt17(charges.eta[a].x),
                                  fmt17(charges.eta[a].y)});
        }
    };
    auto emit_snapshot = [&](int step, double t) {
        if (!writing || cfg.snapshot_stride <= 0 || step % cfg.snapshot_stride != 0) return;
        CsvWriter snap(out_dir / ("particles_" + std::to_string(step) + ".csv"),
                       "config_hash=" + hash, "t,id,x,y,vx,vy,w,alive");
        for (std::size_t i = 0; i < ens.size(); ++i)
            snap.row({fmt17(t), std::to_string(i), fmt17(ens.x[i].x), fmt17(ens.x[i].y),
                      fmt17(ens.v[i].x), fmt17(ens.v[i].y), fmt17(ens.w[i]),
                      std::to_string(int(ens.alive[i]))});
    };

    PushOptions opt;
    Forces forces;
    const int steps = static_cast<int>(std::llround(cfg.t_end / cfg.dt));
    std::string event;
    try {
        forces = compute_forces(ens, with_charges ? &charges : nullptr, ev, h_pla, h_cha, opt);
        emit_record(0.0);
        emit_snapshot(0, 0.0);
        for (int s = 1; s <= steps && event.empty(); ++s) {
            // stability bound: subdivide the step near charges
            const double bound = stable_dt_bound(ens, with_charges ? &charges : nullptr);
            const int nsub = std::max(1, static_cast<int>(std::ceil(cfg.dt / bound)));
            for (int sub = 0; sub < nsub && event.empty(); ++sub) {
                const double dt = cfg.dt / nsub;
                const auto rep =
                    push_coupled(ens, with_charges ? &charges : nullptr, ev, cfg.rule, dt,
                                 h_pla, h_cha, forces, opt);
                tracker.accumulate(((s - 1) + double(sub + 1) / nsub) * cfg.dt, dt, ens,
                                   with_charges ? &charges : nullptr, *dom, h_pla, cfg.flavor,
                                   rep.absorbed_energy);
                if (rep.charge_exit >= 0)
                    event = "charge reached boundary (charge " +
                            std::to_string(rep.charge_exit) + ")";
            }
            // Dirichlet stopping rule: terminate before the image force blows up
            if (event.empty() && cfg.flavor == BoundaryFlavor::Dirichlet) {
                for (int a = 0; a < m; ++a) {
                    if (dom->distance_to_boundary(charges.xi[a]) < 0.01 * dom->inradius()) {
                        event = "boundary collision (charge " + std::to_string(a) + ")";
                        break;
                    }
                }
            }
            if (s % cfg.output_stride == 0 || s == steps || !event.empty()) {
                emit_record(s * cfg.dt);
                emit_snapshot(s, s * cfg.dt);
            }
        }
    } catch (const Error& e) {
        event = e.what(); // plasma-charge collision, grazing trap, ...
    }

    if (!event.empty()) {
        res.status = "event";
        res.reason = event;
        res.events.push_back(event);
    }
    res.l1_final = ens.total_weight();
    res.q_final = tracker.q_windowed();
    res.beta = tracker.beta_ratios();
    if (!res.records.empty()) res.min_dist_boundary_charges = res.records.back().min_dist_boundary;

    if (writing) {
        json summary;
        summary["status"] = res.status;
        summary["reason"] = res.reason;
        summary["energy_drift_rel"] = res.energy_drift_rel;
        summary["l1_initial"] = res.l1_initial;
        summary["l1_final"] = res.l1_final;
        summary["q_final"] = res.q_final;
        summary["events"] = res.events;
        summary["config_hash"] = hash;
        summary["beta_max_ratio"] = res.beta.max_ratio;
        summary["beta_min_ratio"] = res.beta.min_ratio;
        write_text_file(out_dir / "summary.json", summary.dump(2) + "\n");
        write_text_file(out_dir / "plot.gp",
                        "# gnuplot script: energy and charge trajectories\n"
                        "set datafile separator ','\n"
                        "set key autotitle columnhead\n"
                        "set term push\n"
                        "plot 'diagnostics.csv' using 1:2 with lines title 'energy'\n"
                        "pause -1\n"
                        "plot 'charges.csv' using 3:4 with lines title 'charge path'\n"
                        "pause -1\n");
    }
    return res;
}

// ---------------------------------------------------------------------------
// desingularization sweep entry point

inline std::vector<SweepRow> run_desing_sweep(const RunConfig& cfg,
                                              const std::filesystem::path& out_dir = {}) {
    auto dom = std::make_shared<const ConvexDomain>(cfg.domain.build(cfg.quad_nodes));
    require(!cfg.charges.empty(), "config rejected: desingularization needs charges");
    for (const auto& [x, v] : cfg.charges)
        require(dom->distance_to_boundary(x) > cfg.delta1,
                "config rejected (eq-initial-singular-sets): charge within delta1 of the "
                "boundary");
    const GreenEvaluator ev = (dom->kind() == ShapeKind::UnitDisk)
                                  ? make_disk_evaluator(dom, cfg.flavor)
                                  : make_bem_evaluator(dom, cfg.flavor, cfg.bem_nodes);
    const auto h_cha = (cfg.flavor == BoundaryFlavor::Neumann)
                           ? cfg.h_n_cha.build(*dom, double(cfg.charges.size()))
                           : BoundaryDensity::zero(*dom);

    BlobSpec spec;
    spec.centers = cfg.charges;
    spec.particles_per_blob = cfg.desing.particles_per_blob;
    spec.cutoff_constant = cfg.desing.cutoff_constant;
    spec.cutoff_scale = cfg.desing.cutoff_scale;
    spec.epsilon = cfg.desing.epsilon_list.empty() ? 0.1 : cfg.desing.epsilon_list.front();

    const auto rows = sweep(spec, ev, h_cha, cfg.desing.epsilon_list, cfg.desing.t_end,
                            cfg.desing.dt, cfg.seed, cfg.desing.output_stride);

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        CsvWriter csv(out_dir / "desing_sweep.csv", "config_hash=" + config_hash(cfg),
                      "epsilon,sigma,sup_p,t_eps_hit,wall_seconds");
        for (const auto& r : rows)
            csv.row({fmt17(r.epsilon), fmt17(r.sigma), fmt17(r.sup_p), fmt17(r.t_eps_hit),
                     fmt17(r.wall_seconds)});
        write_text_file(out_dir / "plot_sweep.gp",
                        "# gnuplot script: log eps vs log sup_p\n"
                        "set datafile separator ','\n"
                        "set key autotitle columnhead\n"
                        "set logscale xy\n"
                        "plot 'desing_sweep.csv' using 1:3 with linespoints title 'sup p'\n"
                        "pause -1\n");
    }
    return rows;
}

} // namespace pcm
