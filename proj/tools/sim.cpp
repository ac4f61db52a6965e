// Batch driver for the plasma-charge simulator.
//
//   sim run <config.json>          full coupled run, artifacts under --out
//   sim verify <suite>             greens | bem | conserve | desing
//   sim desing-sweep <config.json> blob-limit sweep, desing_sweep.csv
//
// Flags: --out DIR, --seed N, --threads N, --snapshot-every K.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>

#include "pcm/parallel.hpp"
#include "pcm/simulation.hpp"
#include "pcm/verify.hpp"

namespace {

pcm::RunConfig load_with_overrides(const std::string& config_path, long long seed_override,
                                   int snapshot_override) {
    auto cfg = pcm::load_config(config_path);
    if (seed_override >= 0) cfg.effective["seed"] = static_cast<std::uint64_t>(seed_override);
    if (snapshot_override >= 0) cfg.effective["snapshot_stride"] = snapshot_override;
    return pcm::parse_config(cfg.effective);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"plasma-charge kinetic simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "run_out";
    long long seed_override = -1;
    int threads = 0;
    int snapshot_every = -1;

    auto add_common = [&](CLI::App* sub, bool with_config) {
        if (with_config)
            sub->add_option("config", config_path, "run config (JSON)")->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed_override, "seed override");
        sub->add_option("--threads", threads, "worker count (results are identical)");
        sub->add_option("--snapshot-every", snapshot_every, "particle snapshot stride");
    };

    auto* run_cmd = app.add_subcommand("run", "integrate a configured system");
    add_common(run_cmd, true);

    auto* verify_cmd = app.add_subcommand("verify", "run a verification battery");
    std::string suite;
    verify_cmd->add_option("suite", suite, "greens|bem|conserve|desing")->required();
    add_common(verify_cmd, false);

    auto* sweep_cmd = app.add_subcommand("desing-sweep", "blob-limit epsilon sweep");
    add_common(sweep_cmd, true);

    CLI11_PARSE(app, argc, argv);
    if (threads > 0) pcm::set_thread_count(threads);

    try {
        if (run_cmd->parsed()) {
            const auto cfg = load_with_overrides(config_path, seed_override, snapshot_every);
            const auto res = pcm::run_simulation(cfg, out_dir);
            std::printf("status: %s\n", res.status.c_str());
            if (!res.reason.empty()) std::printf("reason: %s\n", res.reason.c_str());
            std::printf("energy_drift_rel: %.6e\n", res.energy_drift_rel);
            std::printf("l1: %.9f -> %.9f\n", res.l1_initial, res.l1_final);
            std::printf("artifacts: %s\n", out_dir.c_str());
            return res.status == "completed" ? 0 : 2;
        }
        if (verify_cmd->parsed()) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto checks = pcm::run_suite(suite);
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            int failures = 0;
            for (const auto& c : checks) {
                std::printf("[%s] %s -- %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                            c.detail.c_str());
                if (!c.pass) ++failures;
            }
            std::filesystem::create_directories(out_dir);
            pcm::write_text_file(std::filesystem::path(out_dir) / ("verify_" + suite + ".xml"),
                                 pcm::junit_report(suite, checks, secs));
            std::printf("%zu checks, %d failures, %.1fs\n", checks.size(), failures, secs);
            return failures == 0 ? 0 : 1;
        }
        if (sweep_cmd->parsed()) {
            const auto cfg = load_with_overrides(config_path, seed_override, snapshot_every);
            const auto rows = pcm::run_desing_sweep(cfg, out_dir);
            for (const auto& r : rows)
                std::printf("eps=%g sigma=%g sup_p=%g t_eps=%g wall=%.1fs\n", r.epsilon,
                            r.sigma, r.sup_p, r.t_eps_hit, r.wall_seconds);
            std::printf("artifacts: %s\n", out_dir.c_str());
            return 0;
        }
    } catch (const pcm::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
