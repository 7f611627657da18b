#include <catch_amalgamated.hpp>

#include <numbers>
#include <sstream>

#include "asep/density.hpp"
#include "asep/generator.hpp"
#include "asep/observables.hpp"
#include "asep/profile.hpp"
#include "asep/stats.hpp"

using namespace asep;

namespace {
RateTable explicit_binary(double ab, double ba) {
    SquareMatrix r(2);
    r(1, 0) = ab;
    r(0, 1) = ba;
    return RateTable(r);
}

SmoothFunction linear(double a) {
    return {[a](double x) { return a * x; }, [a](double) { return a; }, [](double) { return 0.0; }, "linear"};
}

// Direct bond sum for L with its own exponentials, as a reference.
double direct_L(const std::vector<Species>& occ, const std::function<double(double)>& psi, double ab, double ba) {
    const std::size_t N = occ.size();
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const std::size_t j = (i + 1) % N;
        const double d = psi(double(j) / N) - psi(double(i) / N);
        if (occ[i] == 1 && occ[j] == 0) s += ab * (std::exp(d / N) - 1.0);
        if (occ[i] == 0 && occ[j] == 1) s += ba * (std::exp(-d / N) - 1.0);
    }
    return s;
}
} // namespace

TEST_CASE("empirical pairing examples", "[observables]") {
    auto one = [](double) { return 1.0; };
    CHECK(empirical_pairing(exact_config({1, 1, 1, 1}), one, 1) == 1.0);
    CHECK(empirical_pairing(exact_config({1, 0, 1, 0}), one, 1) == 0.5);
    CHECK(empirical_pairing(exact_config({1, 0, 0, 1}), [](double x) { return x; }, 1) == Catch::Approx(0.1875));
}

TEST_CASE("density profile examples", "[observables]") {
    auto f = density_profile(exact_config({1, 1, 1, 1, 1, 1}), 3);
    for (double v : f.values[1]) CHECK(v == 1.0);
    auto g = density_profile(exact_config({1, 1, 0, 0}), 2);
    CHECK(g.values[1] == std::vector<double>{1.0, 0.0});
    auto h = density_profile(exact_config({1, 0, 1, 0, 1, 0, 1, 0}), 4);
    CHECK(h.values[1] == std::vector<double>{0.5, 0.5, 0.5, 0.5});
    CHECK_THROWS_WITH(density_profile(exact_config({1, 0, 1, 0, 1, 0, 1, 0, 1, 0}), 4),
                      Catch::Matchers::ContainsSubstring("nearest admissible bin count is 5"));
}

TEST_CASE("density fields sum to one per bin", "[observables][property]") {
    Xoshiro256 rng(4);
    for (std::size_t n : {2u, 3u, 5u}) {
        auto c = new_config(120, InitialProfile::uniform(n), rng);
        for (std::size_t M : {1u, 4u, 30u, 120u}) {
            auto f = density_profile(c, M);
            for (std::size_t j = 0; j < M; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < n; ++k) s += f.values[k][j];
                CHECK(s == Catch::Approx(1.0).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("log_Z examples", "[observables]") {
    CHECK(log_Z(exact_config({1, 0, 1}), {constant_fn(0), constant_fn(0)}) == 0.0);
    CHECK(log_Z(exact_config({1, 1, 1}), {constant_fn(1), constant_fn(0)}) == Catch::Approx(1.0));
    CHECK(log_Z(exact_config({1, 0}), {linear(1), linear(2)}) == Catch::Approx(0.5));
    CHECK_THROWS_AS(log_Z(exact_config({0, 1, 2}, 3), {constant_fn(0), constant_fn(0)}), ConfigError);
}

TEST_CASE("generator functional examples", "[observables]") {
    const auto t = explicit_binary(1, 1);
    // psi constant: phi_a = phi_b + c.
    TestFunctionPair shifted{periodic_bump(0.3, 0.4), periodic_bump(0.3, 0.4)};
    shifted.phi_a.f = [b = shifted.phi_b](double x) { return b.f(x) + 2.0; };
    CHECK(generator_functional(exact_config({1, 0, 0, 1, 0}), shifted, t) == Catch::Approx(0.0).margin(1e-15));
    const auto sin_pair = TestFunctionPair::from_psi(sin_mode(1));
    CHECK(generator_functional(exact_config({1, 1, 1, 1}), sin_pair, t) == 0.0);

    const std::vector<Species> occ{1, 0, 1, 0};
    const double ref = direct_L(occ, [](double x) { return std::sin(2 * std::numbers::pi * x); }, 1, 1);
    CHECK(std::abs(generator_functional(exact_config(occ), sin_pair, t) - ref) < 1e-12);
    CHECK_THROWS_AS(generator_functional(exact_config({0, 1, 2}, 3), sin_pair, RateTable::abc(1, 1, 1, 1, 1, 1)),
                    ConfigError);
}

TEST_CASE("generator functional matches direct sums", "[observables][property]") {
    Xoshiro256 rng(21);
    const auto psi = TestFunctionPair{periodic_bump(0.2, 0.5), cos_mode(2)};
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t N = 3 + trial * 7;
        const auto t = RateTable::binary(0.5 + rng.uniform(), 4.0 * rng.uniform() - 2.0, N);
        auto c = new_config(N, parse_binary_profile("const:0.4"), rng);
        const double ref = direct_L({c.occupancy().begin(), c.occupancy().end()}, [&](double x) { return psi.psi(x); },
                                    t.lambda_ab(), t.lambda_ba());
        CHECK(generator_functional(c, psi, t) == Catch::Approx(ref).epsilon(1e-10).margin(1e-10));
    }
}

TEST_CASE("Omega Z equals L Z on the whole state space", "[observables][oracle]") {
    // Exact Dynkin identity: (Q exp(logZ))(eta) = L(eta) Z(eta).
    const auto tf = TestFunctionPair{sin_mode(1), periodic_bump(0.6, 0.3)};
    for (double mu : {0.0, 3.0, 14.0}) {
        const std::size_t N = 7;
        const auto t = RateTable::binary(1.0, mu, N);
        const StateSpace space(N, std::vector<std::int64_t>{4, 3});
        const Generator q(space, t);
        std::vector<double> z(space.size());
        for (std::size_t s = 0; s < space.size(); ++s) z[s] = std::exp(log_Z(space.config(s), tf));
        const auto qz = q.apply(z);
        for (std::size_t s = 0; s < space.size(); ++s) {
            const double lz = generator_functional(space.config(s), tf, t) * z[s];
            CHECK(qz[s] == Catch::Approx(lz).epsilon(1e-12).margin(1e-12));
        }
    }
}

TEST_CASE("R is the jump-size density of Z squared", "[observables][oracle]") {
    // sum over jumps of rate * (Z' - Z)^2 = Z^2 R.
    const auto tf = TestFunctionPair::from_psi(cos_mode(1));
    const std::size_t N = 6;
    const auto t = RateTable::binary(1.0, 2.0, N);
    const StateSpace space(N, std::vector<std::int64_t>{3, 3});
    for (std::size_t s = 0; s < space.size(); ++s) {
        auto c = space.config(s);
        const double z = std::exp(log_Z(c, tf));
        double sq = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double r = t(c[i], c[c.next(i)]);
            if (r == 0.0 || c[i] == c[c.next(i)]) continue;
            auto d = c;
            d.swap_bond(i);
            const double z2 = std::exp(log_Z(d, tf));
            sq += r * (z2 - z) * (z2 - z);
        }
        CHECK(sq == Catch::Approx(z * z * quadratic_variation_rate(c, tf, t)).epsilon(1e-12).margin(1e-15));
    }
}

TEST_CASE("quadratic variation edge cases", "[observables]") {
    const auto t = RateTable::binary(1.0, 1.0, 8);
    CHECK(quadratic_variation_rate(exact_config({1, 0, 1, 0, 0, 1, 1, 0}), TestFunctionPair::from_psi(constant_fn(3)),
                                   t) == 0.0);
    CHECK(quadratic_variation_rate(exact_config(std::vector<Species>(8, 1)), TestFunctionPair::from_psi(sin_mode(1)),
                                   t) == 0.0);
    // Totally asymmetric: zero-rate pattern contributes nothing.
    const auto tasep = RateTable::binary(1.0, 16.0, 8);
    REQUIRE(tasep.lambda_ba() == 0.0);
    const auto r = quadratic_variation_rate(exact_config({0, 1, 0, 1, 0, 1, 0, 1}),
                                            TestFunctionPair::from_psi(sin_mode(1)), tasep);
    CHECK(std::isfinite(r));
    CHECK(r > 0.0);
}

TEST_CASE("R scales like 1/N on random half-filled states", "[observables][property]") {
    const auto tf = TestFunctionPair::from_psi(sin_mode(1));
    std::vector<double> ns, rs;
    for (std::size_t N : {64u, 128u, 256u, 512u}) {
        const auto t = RateTable::binary(1.0, 1.0, N);
        double s = 0.0;
        const int samples = 200;
        for (int k = 0; k < samples; ++k) s += quadratic_variation_rate(new_config(N, parse_binary_profile("const:0.5"), derive_seed(3, N, k)), tf, t);
        ns.push_back(double(N));
        rs.push_back(s / samples);
    }
    const auto fit = fit_loglog(ns, rs);
    CHECK(fit.slope == Catch::Approx(-1.0).margin(0.15));
}

TEST_CASE("test function validation", "[observables]") {
    CHECK_NOTHROW(TestFunctionPair::from_psi(sin_mode(2)).validate());
    CHECK_NOTHROW(TestFunctionPair::from_psi(periodic_bump(0.1, 0.2)).validate());
    CHECK_THROWS_WITH(TestFunctionPair::from_psi(linear(1)).validate(), Catch::Matchers::ContainsSubstring("periodic"));
    auto wrong = sin_mode(1);
    wrong.d1 = [](double x) { return std::cos(x); };
    CHECK_THROWS_WITH(TestFunctionPair::from_psi(wrong).validate(), Catch::Matchers::ContainsSubstring("finite"));
}

TEST_CASE("catalog and spline test functions", "[observables]") {
    CHECK(parse_function("sin:3").f(0.1) == Catch::Approx(std::sin(0.6 * std::numbers::pi)));
    CHECK(parse_function("zero").d2(0.3) == 0.0);
    CHECK(parse_function("bump:0.5,0.3").f(0.5) == Catch::Approx(1.0));
    CHECK_THROWS_AS(parse_function("tan:1"), ConfigError);
    CHECK_THROWS_AS(parse_function("sin:x"), ConfigError);

    std::vector<double> samples(64);
    for (std::size_t j = 0; j < samples.size(); ++j) samples[j] = std::sin(2 * std::numbers::pi * j / 64.0);
    auto s = spline_fn(samples);
    auto exact = sin_mode(1);
    for (double x : {0.0, 0.123, 0.5, 0.77, 0.999}) {
        CHECK(s.f(x) == Catch::Approx(exact.f(x)).margin(1e-6));
        CHECK(s.d1(x) == Catch::Approx(exact.d1(x)).margin(1e-3));
        CHECK(s.d2(x) == Catch::Approx(exact.d2(x)).margin(0.05));
    }
    CHECK_NOTHROW(TestFunctionPair::from_psi(s).validate());
}

TEST_CASE("tracker matches a from-scratch evaluation", "[observables][property]") {
    const auto tf = TestFunctionPair{sin_mode(1), cos_mode(2)};
    for (std::size_t N : {2u, 3u, 50u}) {
        const auto t = RateTable::binary(1.0, 1.5, N);
        const BondKernel kernel(N, tf, t);
        Xoshiro256 rng(N);
        std::vector<Species> occ(N, 0);
        for (std::size_t i = 0; i < N; i += 2) occ[i] = 1;
        auto c = exact_config(occ);
        RateIndex idx(c, t);
        MartingaleTracker tr(kernel, c);
        SimClock clock;
        for (int k = 0; k < 3000; ++k) {
            auto ev = propose(idx, rng);
            if (!ev) break;
            tr.hold(ev->dt);
            apply(c, idx, t, clock, *ev);
            tr.jump(ev->bond, c);
        }
        CHECK(std::log(tr.z()) == Catch::Approx(log_Z(c, tf)).margin(1e-10));
        CHECK(tr.l() == Catch::Approx(generator_functional(c, tf, t)).margin(1e-8));
        CHECK(tr.r() == Catch::Approx(quadratic_variation_rate(c, tf, t)).margin(1e-10));
    }
}

TEST_CASE("martingale trace examples", "[observables]") {
    const auto t = RateTable::binary(1.0, 1.0, 16);
    auto c = new_config(16, parse_binary_profile("const:0.5"), 3);
    RateIndex idx(c, t);
    SimClock clock;
    Xoshiro256 rng(3);
    auto zero_len = run_until(c, idx, t, clock, rng, 0.0, {}, true);
    auto m0 = martingale_trace(zero_len, TestFunctionPair::from_psi(sin_mode(1)), t);
    for (double u : m0.U_values) CHECK(u == 0.0);

    auto rec = run_until(c, idx, t, clock, rng, 0.05, {}, true);
    auto flat = martingale_trace(rec, TestFunctionPair::from_psi(constant_fn(0.7)), t);
    for (std::size_t k = 0; k < flat.times.size(); ++k) {
        CHECK(flat.U_values[k] == Catch::Approx(0.0).margin(1e-14));
        CHECK(flat.L_values[k] == 0.0);
    }

    auto m = martingale_trace(rec, TestFunctionPair::from_psi(sin_mode(1)), t);
    REQUIRE(m.times.size() == rec.events.size() + 2);
    for (std::size_t k = 0; k < m.times.size(); ++k) {
        CHECK(m.U_values[k] == Catch::Approx(m.Z_values[k] - m.Z_values[0] - m.generator_integral[k]).margin(1e-13));
        CHECK(m.Z_values[k] > 0.0);
        if (k > 0) CHECK(m.times[k] >= m.times[k - 1]);
    }
    CHECK(m.times.back() == Catch::Approx(rec.t_end));

    TrajectoryRecord snaps_only = rec;
    snaps_only.event_resolved = false;
    CHECK_THROWS_WITH(martingale_trace(snaps_only, TestFunctionPair::from_psi(sin_mode(1)), t),
                      Catch::Matchers::ContainsSubstring("event-resolved trajectory required"));

    std::ostringstream os;
    write_martingale_csv(os, m);
    CHECK(os.str().rfind("t,Z,U,R,L,generator_integral\n", 0) == 0);
}

TEST_CASE("U has mean zero", "[observables][statistical]") {
    const std::size_t N = 128;
    const auto t = RateTable::binary(1.0, 1.0, N);
    const auto tf = TestFunctionPair::from_psi(sin_mode(1));
    const BondKernel kernel(N, tf, t);
    const auto prof = parse_binary_profile("sin:0.25,1,0.5");
    std::vector<double> u(1000);
    for (std::size_t r = 0; r < u.size(); ++r) {
        Xoshiro256 rng(derive_seed(44, N, r));
        auto c = new_config(N, prof, rng);
        RateIndex idx(c, t);
        SimClock clock;
        MartingaleTracker tr(kernel, c);
        struct Obs {
            MartingaleTracker& t;
            void hold(double dt) { t.hold(dt); }
            void jump(std::size_t b, const LatticeConfig& c) { t.jump(b, c); }
        } obs{tr};
        run_until(c, idx, t, clock, rng, 0.05, {}, false, obs);
        u[r] = tr.u();
    }
    const auto m = moments(u);
    INFO("mean " << m.mean << " se " << m.standard_error());
    CHECK(std::abs(m.mean) < 3 * m.standard_error());
}

TEST_CASE("L predicts the drift of E[Z] on a small system", "[observables][oracle]") {
    // d/dt E[Z_t] at t=0 equals L(eta_0) Z(eta_0); compare with a forward
    // difference of the exact transient law and with a simulation ensemble.
    const std::size_t N = 6;
    const auto t = RateTable::binary(1.0, 4.0, N);
    const auto tf = TestFunctionPair::from_psi(sin_mode(1));
    const auto init = exact_config({1, 1, 1, 0, 0, 0});
    const StateSpace space = StateSpace::of(init);
    const Generator q(space, t);
    std::vector<double> z(space.size());
    for (std::size_t s = 0; s < space.size(); ++s) z[s] = std::exp(log_Z(space.config(s), tf));
    const double h = 1e-4;
    const auto p = q.transient(q.point_mass(init), h);
    double ez = 0.0;
    for (std::size_t s = 0; s < space.size(); ++s) ez += p[s] * z[s];
    const double z0 = std::exp(log_Z(init, tf));
    const double lz = generator_functional(init, tf, t) * z0;
    CHECK((ez - z0) / h == Catch::Approx(lz).epsilon(1e-2));

    const double hs = 2e-3;
    std::vector<double> dz(100000);
    for (std::size_t r = 0; r < dz.size(); ++r) {
        Xoshiro256 rng(derive_seed(9, N, r));
        auto c = init;
        RateIndex idx(c, t);
        SimClock clock;
        run_until(c, idx, t, clock, rng, hs, {});
        dz[r] = (std::exp(log_Z(c, tf)) - z0) / hs;
    }
    double exact_fd = 0.0;
    const auto ph = q.transient(q.point_mass(init), hs);
    for (std::size_t s = 0; s < space.size(); ++s) exact_fd += ph[s] * (z[s] - z0) / hs;
    const auto m = moments(dz);
    CHECK(std::abs(m.mean - exact_fd) < 4 * m.standard_error());
    CHECK(std::abs(m.mean - lz) < 4 * m.standard_error() + std::abs(exact_fd - lz));
}
