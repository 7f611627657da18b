#include <catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

#include "asep/harness.hpp"

using namespace asep;

namespace {
KeyValue plan_text(const std::string& text) {
    std::istringstream is(text);
    return KeyValue::parse(is);
}

ExperimentPlan binary_plan(std::vector<std::size_t> Ns, std::size_t E, double mu, const std::string& rho0,
                           std::vector<double> times, std::size_t M) {
    ExperimentPlan p;
    p.N_list = std::move(Ns);
    p.ensemble_size = E;
    p.lambda = 1.0;
    p.mu = mu;
    p.profile = parse_binary_profile(rho0);
    p.profile_desc = rho0;
    p.compare_times = std::move(times);
    p.M = M;
    p.seed_base = 1234;
    p.threads = 1;
    return p;
}
} // namespace

TEST_CASE("plan parsing", "[harness]") {
    auto kv = plan_text(R"(# pilot
model = binary
N_list = 64,128
ensemble = 10
lambda = 1
mu = 1
rho0 = sin:0.25,1,0.5
compare_times = 0.05,0.1
M = 32
seed_base = 7
)");
    auto p = ExperimentPlan::from_config(kv);
    CHECK(p.N_list == std::vector<std::size_t>{64, 128});
    CHECK(p.ensemble_size == 10);
    CHECK(p.mu == 1.0);
    CHECK(p.M == 32);
    CHECK(p.compare_times == std::vector<double>{0.05, 0.1});
    CHECK(p.table(64).lambda_ab() == Catch::Approx(64.0 * 64 + 32));
    const auto meta = p.describe();
    CHECK(meta.require("seed_base") == "7");
    CHECK(meta.require("version") == kVersion);

    auto abc = ExperimentPlan::from_config(plan_text("model=abc-preset\nN_list=30\nensemble=2\nseed_base=1\nasym=2\n"));
    CHECK(abc.n_species() == 3);
    CHECK(abc.alpha(0, 1) == 2.0);
    CHECK(abc.alpha(1, 0) == -2.0);

    auto ns = ExperimentPlan::from_config(
        plan_text("model=nspecies\nn=2\nalpha=0,-1,1,0\nN_list=30\nensemble=2\nseed_base=1\nrho0_0=const:0.4\n"));
    CHECK(ns.profile.evaluate(0.3)[1] == Catch::Approx(0.6));
}

TEST_CASE("plan errors name the problem", "[harness]") {
    CHECK_THROWS_WITH(ExperimentPlan::from_config(plan_text("model=binary\nN_list=64\nensemble=3\nrho0=const:0.5\n")),
                      Catch::Matchers::ContainsSubstring("missing config key: seed_base"));
    CHECK_THROWS_WITH(ExperimentPlan::from_config(plan_text("N_list=64\nensemble=3\nseed_base=1\n")),
                      Catch::Matchers::ContainsSubstring("missing config key: model"));
    CHECK_THROWS_AS(ExperimentPlan::from_config(plan_text("model=binary\nN_list=64\nensemble=1\nseed_base=1\nrho0=const:0.5\n")),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentPlan::from_config(plan_text("model=binary\nN_list=128,64\nensemble=3\nseed_base=1\nrho0=const:0.5\n")),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentPlan::from_config(plan_text("model=potts\nN_list=64\nensemble=3\nseed_base=1\n")),
                    ConfigError);
    auto p = binary_plan({100}, 2, 0.0, "const:0.5", {0.01}, 16);
    CHECK_THROWS_WITH(run_convergence(p), Catch::Matchers::ContainsSubstring("nearest admissible M is 20"));
}

TEST_CASE("all-particle plan gives zero distances", "[harness]") {
    auto p = binary_plan({32, 64}, 3, 1.0, "const:1", {0.01, 0.02}, 8);
    const auto rep = run_convergence(p);
    for (const auto& r : rep.rows) {
        CHECK(r.l1 == 0.0);
        CHECK(r.l2 == 0.0);
        CHECK(r.run_l1_mean == 0.0);
        CHECK(r.mean_events == 0.0);
    }
    CHECK(rep.degenerate);
    for (const auto& [t, fit] : rep.slopes) CHECK_FALSE(fit.valid);
    CHECK(rep.all_passed());
}

TEST_CASE("equilibrium noise floor scales like (N E)^-1/2", "[harness][statistical]") {
    // mu = 0 and rho = 1/2: the Bernoulli product law is invariant, so each bin
    // mean is an average of (N/M) E fair coins and E|error| = sqrt(2/pi) sigma.
    const std::size_t M = 16;
    for (auto [N, E] : {std::pair<std::size_t, std::size_t>{128, 10}, {512, 10}, {128, 40}}) {
        auto p = binary_plan({N}, E, 0.0, "const:0.5", {0.05}, M);
        const auto rep = run_convergence(p);
        const double floor = std::sqrt(2.0 / std::numbers::pi) * 0.5 * std::sqrt(double(M) / double(N * E));
        INFO("N=" << N << " E=" << E << " l1=" << rep.rows[0].l1 << " floor=" << floor);
        CHECK(rep.rows[0].l1 > floor / 2);
        CHECK(rep.rows[0].l1 < floor * 2);
        const double run_floor = std::sqrt(2.0 / std::numbers::pi) * 0.5 * std::sqrt(double(M) / double(N));
        CHECK(rep.rows[0].run_l1_mean == Catch::Approx(run_floor).epsilon(0.25));
    }
}

TEST_CASE("convergence report is reproducible", "[harness]") {
    auto p = binary_plan({64, 128}, 4, 1.0, "sin:0.25,1,0.5", {0.01, 0.02}, 16);
    const auto a = run_convergence(p);
    p.threads = 3;
    const auto b = run_convergence(p);
    REQUIRE(a.rows.size() == 4);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].l1 == b.rows[i].l1);
        CHECK(a.rows[i].l1_se == b.rows[i].l1_se);
        CHECK(a.rows[i].run_l1_sd == b.rows[i].run_l1_sd);
        CHECK(a.rows[i].mean_events == b.rows[i].mean_events);
        CHECK(a.rows[i].l1 >= 0.0);
        CHECK(a.rows[i].l2 >= a.rows[i].l1 * 0.0);
    }
    p.seed_base = 99;
    CHECK(run_convergence(p).rows[0].l1 != a.rows[0].l1);
}

TEST_CASE("report files", "[harness][io]") {
    auto p = binary_plan({32, 64}, 3, 1.0, "sin:0.25,1,0.5", {0.01}, 8);
    p.l1_threshold = 1.0;
    const auto rep = run_convergence(p);
    const auto dir = std::filesystem::temp_directory_path() / "asep_report_test";
    std::filesystem::remove_all(dir);
    write_convergence_report(dir, rep, p);
    for (const char* f : {"convergence.csv", "profiles.csv", "convergence_summary.txt", "convergence.meta"})
        CHECK(std::filesystem::exists(dir / f));
    const auto meta = KeyValue::parse_file((dir / "convergence.meta").string());
    CHECK(meta.require("N_list") == "32,64");
    const bool has_threshold_verdict =
        std::any_of(rep.verdicts.begin(), rep.verdicts.end(), [](const Verdict& v) { return v.name == "l1_below_threshold"; });
    CHECK(has_threshold_verdict);
    std::filesystem::remove_all(dir);
}

TEST_CASE("monotone check tolerates one small inversion", "[harness]") {
    CHECK(decreasing_with_one_inversion({3, 2, 1}, {0.1, 0.1, 0.1}));
    CHECK(decreasing_with_one_inversion({3, 2, 2.05, 1}, {0.1, 0.1, 0.1, 0.1}));
    CHECK_FALSE(decreasing_with_one_inversion({3, 2, 2.5, 1}, {0.1, 0.1, 0.1, 0.1}));
    CHECK_FALSE(decreasing_with_one_inversion({3, 3.01, 3.02, 1}, {0.1, 0.1, 0.1, 0.1}));
}

TEST_CASE("bin averaging", "[harness]") {
    auto f = DensityField::single({0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(bin_average(f, 4).values[0] == std::vector<double>{0.5, 2.5, 4.5, 6.5});
    CHECK(bin_average(f, 8).values[0] == f.values[0]);
    CHECK_THROWS_AS(bin_average(f, 3), ConfigError);
}

TEST_CASE("martingale scaling rejects and flags", "[harness]") {
    auto p = binary_plan({32, 64}, 4, 0.0, "const:0.5", {}, 8);
    CHECK_THROWS_WITH(run_martingale_scaling(p), Catch::Matchers::ContainsSubstring("at least 3"));
    p.N_list = {16, 32, 64};
    p.psi_spec = "const:2";
    const auto rep = run_martingale_scaling(p);
    CHECK(rep.degenerate);
    CHECK_FALSE(rep.passed);
    for (const auto& r : rep.rows) CHECK(r.var_u == 0.0);
}

TEST_CASE("martingale variance scales like 1/N", "[harness][statistical]") {
    for (bool tasep : {false, true}) {
        auto p = binary_plan({32, 64, 128}, 400, 0.0, "sin:0.25,1,0.5", {}, 8);
        p.totally_asymmetric = tasep;
        p.martingale_T = 0.02;
        const auto rep = run_martingale_scaling(p);
        INFO("tasep=" << tasep << " slope " << rep.variance_slope.slope);
        CHECK(rep.passed);
        CHECK(rep.variance_slope.slope == Catch::Approx(-1.0).margin(0.3));
        for (const auto& r : rep.rows) CHECK(std::abs(r.mean_u) < 4 * r.se_u);
    }
}

TEST_CASE("generator oracle", "[harness][oracle]") {
    const auto t = RateTable::binary(1.0, 0.0, 4);
    const auto init = exact_config({1, 1, 0, 0});
    const auto zero = run_generator_oracle(init, t, 0.0, 1000, 5);
    CHECK(zero.tv == 0.0);
    CHECK(zero.states == 6);
    // t = 10/N^2: ten unscaled time units, far past mixing.
    const auto eq = run_generator_oracle(init, t, 10.0 / 16.0, 10000, 6);
    for (double p : eq.exact) CHECK(p == Catch::Approx(1.0 / 6).margin(1e-9));
    CHECK(eq.tv < 0.02);
    CHECK_THROWS_AS(run_generator_oracle(exact_config(std::vector<Species>(17, 0)), t, 1.0, 10, 1), ConfigError);
}
