// Acceptance suite: one case per criterion, each printing PASS/FAIL.
// The heavy benchmark batteries run once and are shared across cases.

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "pcm/parallel.hpp"
#include "pcm/verify.hpp"

using namespace pcm;

namespace {

const std::vector<CheckResult>& greens_checks() {
    static const auto v = verify_greens();
    return v;
}
const std::vector<CheckResult>& bem_checks() {
    static const auto v = verify_bem();
    return v;
}
const std::vector<CheckResult>& conserve_checks() {
    static const auto v = verify_conserve();
    return v;
}
const std::vector<CheckResult>& desing_checks() {
    static const auto v = verify_desing();
    return v;
}

void report(const std::string& criterion, const std::vector<CheckResult>& checks,
            std::initializer_list<const char*> prefixes) {
    bool all = true;
    for (const char* prefix : prefixes) {
        bool found = false;
        for (const auto& c : checks) {
            if (c.name.rfind(prefix, 0) != 0) continue;
            found = true;
            all = all && c.pass;
            INFO(c.name << ": " << c.detail);
            CHECK(c.pass);
        }
        if (!found) {
            all = false;
            FAIL_CHECK("missing check with prefix: " << prefix);
        }
    }
    std::printf("[%s] %s\n", all ? "PASS" : "FAIL", criterion.c_str());
}

} // namespace

TEST_CASE("criterion 1: analytic kernel identities") {
    report("criterion 1: analytic kernel identities", greens_checks(),
           {"disk Dirichlet boundary trace", "Green symmetry", "half-space Robin"});
}

TEST_CASE("criterion 2: BEM oracle equivalence") {
    report("criterion 2: BEM oracle equivalence", bem_checks(),
           {"BEM Robin matches exact disk Robin", "BEM convergence order"});
}

TEST_CASE("criterion 3: Robin bound behavior") {
    report("criterion 3: Robin bound behavior", bem_checks(),
           {"Robin monotone blowup"});
}

TEST_CASE("criterion 4: charge-boundary force signs") {
    report("criterion 4: charge-boundary force signs", conserve_checks(),
           {"Dirichlet wall approach", "Neumann turn-around"});
}

TEST_CASE("criterion 5: conservation benchmarks") {
    report("criterion 5: conservation benchmarks", conserve_checks(),
           {"Neumann benchmark energy drift", "Neumann benchmark ||f||_1",
            "halving dt reduces drift", "absorption benchmark conserves",
            "absorption benchmark energy-with-flux"});
}

TEST_CASE("criterion 6: specular invariants") {
    report("criterion 6: specular invariants", conserve_checks(),
           {"reflection involution exact", "charge integrator time reversal"});
}

TEST_CASE("criterion 7: velocity-lemma monitor") {
    report("criterion 7: velocity-lemma monitor", conserve_checks(),
           {"velocity-lemma beta ratios"});
}

TEST_CASE("criterion 8: desingularization sweep") {
    report("criterion 8: desingularization sweep", desing_checks(),
           {"sup p_eps strictly decreasing", "sup p(0.025)"});
}

TEST_CASE("criterion 9: determinism") {
    report("criterion 9: determinism", conserve_checks(),
           {"bit-identical CSVs"});
}
