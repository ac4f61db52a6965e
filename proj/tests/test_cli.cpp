#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pcm/common.hpp"
#include "pcm/parallel.hpp"
#include "pcm/simulation.hpp"

using namespace pcm;
namespace fs = std::filesystem;

namespace {

json small_run_json() {
    json j;
    j["domain"] = {{"shape", "disk"}};
    j["flavor"] = "neumann";
    j["boundary_rule"] = "reflection";
    j["h_n"] = "uniform";
    j["h_n_cha"] = "uniform";
    j["charges"] = json::array({{{"xi", {0.5, 0.0}}, {"eta", {0.0, 0.0}}}});
    j["plasma"] = json::array(
        {{{"x_box", {-0.3, 0.2, -0.25, 0.25}}, {"v_box", {-1.0, 1.0, -1.0, 1.0}},
          {"weight", 1.0}, {"count", 200}}});
    j["dt"] = 1e-3;
    j["t_end"] = 0.05;
    j["output_stride"] = 10;
    j["seed"] = 3;
    j["delta1"] = 0.05;
    return j;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("config parse and round trip") {
    const json j = small_run_json();
    const auto cfg = parse_config(j);
    CHECK(cfg.flavor == BoundaryFlavor::Neumann);
    CHECK(cfg.rule == BoundaryRule::Reflection);
    CHECK(cfg.charges.size() == 1);
    CHECK(cfg.plasma.size() == 1);

    // parse -> serialize -> parse is idempotent
    const auto cfg2 = parse_config(cfg.effective);
    CHECK(cfg2.effective.dump() == cfg.effective.dump());
    CHECK(config_hash(cfg2) == config_hash(cfg));

    // hash moves with content
    json j2 = j;
    j2["seed"] = 4;
    CHECK(config_hash(parse_config(j2)) != config_hash(cfg));
}

TEST_CASE("validation names the violated condition") {
    auto dom = ConvexDomain::unit_disk();

    // plasma weight vs h_N integral
    {
        json j = small_run_json();
        j["h_n"] = {{"fourier", {0.5}}}; // integrates to pi, plasma weight is 1
        CHECK_THROWS_WITH(validate_config(parse_config(j), dom),
                          Catch::Matchers::ContainsSubstring("eq-Neumann-compatibility"));
    }
    // charge density must integrate to M
    {
        json j = small_run_json();
        j["h_n_cha"] = {{"fourier", {10.0}}};
        CHECK_THROWS_WITH(validate_config(parse_config(j), dom),
                          Catch::Matchers::ContainsSubstring("charge compatibility"));
    }
    // delta1 separation: charge too close to the boundary
    {
        json j = small_run_json();
        j["charges"] = json::array({{{"xi", {0.97, 0.0}}, {"eta", {0.0, 0.0}}}});
        CHECK_THROWS_WITH(validate_config(parse_config(j), dom),
                          Catch::Matchers::ContainsSubstring("eq-initial-singular-sets"));
    }
    // delta1 separation: plasma box touching a charge
    {
        json j = small_run_json();
        j["charges"] = json::array({{{"xi", {0.1, 0.0}}, {"eta", {0.0, 0.0}}}});
        CHECK_THROWS_WITH(validate_config(parse_config(j), dom),
                          Catch::Matchers::ContainsSubstring("eq-initial-singular-sets"));
    }
}

TEST_CASE("run produces the declared artifacts") {
    const auto out = fs::temp_directory_path() / "pcm_cli_run";
    fs::remove_all(out);
    auto cfg = parse_config(small_run_json());
    cfg.effective["snapshot_stride"] = 25;
    cfg = parse_config(cfg.effective);
    const auto res = run_simulation(cfg, out);
    CHECK(res.status == "completed");

    REQUIRE(fs::exists(out / "diagnostics.csv"));
    REQUIRE(fs::exists(out / "charges.csv"));
    REQUIRE(fs::exists(out / "summary.json"));
    REQUIRE(fs::exists(out / "plot.gp"));
    REQUIRE(fs::exists(out / "particles_0.csv"));
    REQUIRE(fs::exists(out / "particles_50.csv"));

    const std::string diag = slurp(out / "diagnostics.csv");
    CHECK(diag.find("# config_hash=" + config_hash(cfg)) != std::string::npos);
    CHECK(diag.find("t,energy,kinetic,interaction,flux_energy,l1,H2,H4,L0,L2,Q,"
                    "beta_max_ratio,min_dist_charge,min_dist_boundary") != std::string::npos);

    const json summary = json::parse(slurp(out / "summary.json"));
    CHECK(summary.at("status") == "completed");
    CHECK(summary.contains("energy_drift_rel"));
    CHECK(summary.contains("l1_initial"));
    CHECK(summary.contains("l1_final"));
    CHECK(summary.contains("q_final"));
    CHECK(summary.contains("events"));
    fs::remove_all(out);
}

TEST_CASE("identical config and seed reproduce bit-identical CSVs across threads") {
    const auto outa = fs::temp_directory_path() / "pcm_cli_det_a";
    const auto outb = fs::temp_directory_path() / "pcm_cli_det_b";
    fs::remove_all(outa);
    fs::remove_all(outb);
    const auto cfg = parse_config(small_run_json());

    const int saved = thread_count();
    set_thread_count(1);
    run_simulation(cfg, outa);
    set_thread_count(3);
    run_simulation(cfg, outb);
    set_thread_count(saved);

    CHECK(slurp(outa / "diagnostics.csv") == slurp(outb / "diagnostics.csv"));
    CHECK(slurp(outa / "charges.csv") == slurp(outb / "charges.csv"));
    fs::remove_all(outa);
    fs::remove_all(outb);
}

TEST_CASE("Dirichlet forces the boundary data to zero") {
    json j = small_run_json();
    j["flavor"] = "dirichlet";
    j["h_n"] = {{"fourier", {3.0, 1.0}}}; // ignored under Dirichlet
    const auto cfg = parse_config(j);
    const auto res = run_simulation(cfg); // would throw on compatibility otherwise
    CHECK((res.status == "completed" || res.status == "event"));
}

TEST_CASE("Dirichlet charge fall-in terminates with a boundary event") {
    json j = small_run_json();
    j["flavor"] = "dirichlet";
    j["plasma"] = json::array();
    j["charges"] = json::array({{{"xi", {0.6, 0.0}}, {"eta", {0.8, 0.0}}}});
    j["t_end"] = 3.0;
    j["dt"] = 1e-3;
    const auto res = run_simulation(parse_config(j));
    CHECK(res.status == "event");
    CHECK(res.reason.find("boundary") != std::string::npos);
}

TEST_CASE("desing sweep artifacts") {
    const auto out = fs::temp_directory_path() / "pcm_cli_sweep";
    fs::remove_all(out);
    json j;
    j["domain"] = {{"shape", "disk"}};
    j["flavor"] = "neumann";
    j["h_n_cha"] = "uniform";
    j["charges"] = json::array({{{"xi", {0.5, 0.0}}, {"eta", {0.0, 0.0}}}});
    j["seed"] = 9;
    j["desing"] = {{"epsilon_list", {0.1, 0.05}}, {"particles_per_blob", 64},
                   {"t_end", 0.1},  {"dt", 2e-3}, {"output_stride", 5}};
    const auto rows = run_desing_sweep(parse_config(j), out);
    REQUIRE(rows.size() == 2);
    REQUIRE(fs::exists(out / "desing_sweep.csv"));
    REQUIRE(fs::exists(out / "plot_sweep.gp"));
    const std::string csv = slurp(out / "desing_sweep.csv");
    CHECK(csv.find("epsilon,sigma,sup_p,t_eps_hit,wall_seconds") != std::string::npos);
    fs::remove_all(out);
}
