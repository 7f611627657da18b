#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "asep/density.hpp"
#include "asep/engine.hpp"
#include "asep/error.hpp"
#include "asep/generator.hpp"
#include "asep/hydro.hpp"
#include "asep/keyvalue.hpp"
#include "asep/lattice.hpp"
#include "asep/observables.hpp"
#include "asep/parallel.hpp"
#include "asep/profile.hpp"
#include "asep/random.hpp"
#include "asep/rates.hpp"
#include "asep/stats.hpp"

namespace asep {

enum class ModelKind { binary, nspecies };

/// Ensemble experiment over a list of system sizes.
struct ExperimentPlan {
    std::vector<std::size_t> N_list;
    std::size_t ensemble_size = 2;

    ModelKind model = ModelKind::binary;
    double lambda = 1.0;
    double mu = 0.0;
    /// Binary only: mu = 2 lambda N at every N, so lambda_ba = 0.
    bool totally_asymmetric = false;
    double D = 1.0;
    SquareMatrix alpha;

    InitialProfile profile;
    std::string profile_desc;

    std::vector<double> compare_times;
    std::size_t M = 64;
    /// PDE grid used for the reference; 0 picks a multiple of M >= 512.
    std::size_t pde_grid = 0;
    std::uint64_t seed_base = 0;

    std::string psi_spec = "sin:1";
    double martingale_T = 0.02;

    /// Optional desk-scale bound on the ensemble-mean L1 error at the largest N.
    double l1_threshold = std::numeric_limits<double>::quiet_NaN();
    unsigned threads = 0;

    std::size_t n_species() const { return model == ModelKind::binary ? 2 : alpha.size(); }

    RateTable table(std::size_t N) const {
        if (model == ModelKind::nspecies) return RateTable::equidiffusive(D, alpha, N);
        return RateTable::binary(lambda, totally_asymmetric ? 2.0 * lambda * static_cast<double>(N) : mu, N);
    }

    PDEParams pde_params() const {
        PDEParams p;
        p.lambda = lambda;
        p.mu = mu;
        p.D = D;
        p.alpha = alpha;
        return p;
    }

    std::size_t reference_grid() const {
        if (pde_grid != 0) return pde_grid;
        return M * std::max<std::size_t>(1, (512 + M - 1) / M);
    }

    void validate() const {
        if (N_list.empty()) throw ConfigError("N_list is empty");
        if (ensemble_size < 2) throw ConfigError("ensemble size must be at least 2");
        for (std::size_t i = 0; i < N_list.size(); ++i) {
            if (N_list[i] < 2) throw ConfigError("system sizes must be at least 2");
            if (i > 0 && N_list[i] <= N_list[i - 1]) throw ConfigError("N_list must be increasing");
        }
        if (profile.n_species() != n_species())
            throw ConfigError("profile has " + std::to_string(profile.n_species()) + " species, model has " +
                              std::to_string(n_species()));
        if (model == ModelKind::nspecies && alpha.antisymmetry_defect() > 1e-12)
            throw ConfigError("alpha must be antisymmetric");
    }

    void validate_for_convergence() const {
        validate();
        if (totally_asymmetric) throw ConfigError("totally asymmetric rates have no hydrodynamic reference here");
        if (compare_times.empty()) throw ConfigError("compare_times is empty");
        for (std::size_t i = 0; i < compare_times.size(); ++i)
            if (compare_times[i] < 0.0 || (i > 0 && compare_times[i] <= compare_times[i - 1]))
                throw ConfigError("compare_times must be nonnegative and increasing");
        for (auto N : N_list)
            if (M == 0 || N % M != 0)
                throw ConfigError("M=" + std::to_string(M) + " does not divide N=" + std::to_string(N) +
                                  "; nearest admissible M is " + std::to_string(nearest_divisor(N, M)));
        if (reference_grid() % M != 0) throw ConfigError("pde_grid must be a multiple of M");
    }

    /// Parses a key=value plan. Required keys: model, N_list, ensemble, seed_base.
    static ExperimentPlan from_config(const KeyValue& kv) {
        ExperimentPlan p;
        const std::string model = kv.require("model");
        for (double v : kv.require_list("N_list")) {
            if (v < 2 || v != std::floor(v)) throw ConfigError("N_list entries must be integers >= 2");
            p.N_list.push_back(static_cast<std::size_t>(v));
        }
        const auto ens = kv.require_int("ensemble");
        if (ens < 2) throw ConfigError("ensemble must be at least 2");
        p.ensemble_size = static_cast<std::size_t>(ens);
        p.seed_base = static_cast<std::uint64_t>(kv.require_int("seed_base"));
        if (model == "binary") {
            p.model = ModelKind::binary;
            p.lambda = kv.get_double("lambda", 1.0);
            p.mu = kv.get_double("mu", 0.0);
            p.totally_asymmetric = kv.get_int("totally_asymmetric", 0) != 0;
            p.profile_desc = kv.require("rho0");
            p.profile = parse_binary_profile(p.profile_desc);
        } else if (model == "nspecies" || model == "abc-preset") {
            p.model = ModelKind::nspecies;
            p.D = kv.get_double("D", 1.0);
            if (model == "abc-preset") {
                p.alpha = RateTable::cyclic_alpha(kv.get_double("asym", 0.0));
            } else {
                const auto n = static_cast<std::size_t>(kv.require_int("n"));
                const auto a = kv.require_list("alpha");
                if (a.size() != n * n) throw ConfigError("alpha needs n*n entries (row-major)");
                p.alpha = SquareMatrix(n);
                for (std::size_t k = 0; k < n; ++k)
                    for (std::size_t l = 0; l < n; ++l) p.alpha(k, l) = a[k * n + l];
            }
            std::vector<std::string> specs;
            for (std::size_t k = 0; k < p.alpha.size(); ++k)
                if (kv.contains("rho0_" + std::to_string(k))) specs.push_back(kv.require("rho0_" + std::to_string(k)));
            p.profile = parse_species_profile(specs, p.alpha.size());
            std::ostringstream d;
            for (std::size_t k = 0; k < specs.size(); ++k) d << (k ? ";" : "") << specs[k];
            p.profile_desc = specs.empty() ? "uniform" : d.str();
        } else {
            throw ConfigError("unknown model '" + model + "' (binary, nspecies, abc-preset)");
        }
        if (kv.contains("compare_times")) p.compare_times = kv.require_list("compare_times");
        p.M = static_cast<std::size_t>(kv.get_int("M", 64));
        p.pde_grid = static_cast<std::size_t>(kv.get_int("pde_grid", 0));
        p.psi_spec = kv.get_or("psi", "sin:1");
        p.martingale_T = kv.get_double("martingale_T", 0.02);
        p.l1_threshold = kv.get_double("l1_threshold", std::numeric_limits<double>::quiet_NaN());
        p.threads = static_cast<unsigned>(kv.get_int("threads", 0));
        p.validate();
        return p;
    }

    KeyValue describe() const {
        KeyValue kv;
        kv.set("version", kVersion);
        kv.set("model", model == ModelKind::binary ? "binary" : "nspecies");
        std::ostringstream ns;
        for (std::size_t i = 0; i < N_list.size(); ++i) ns << (i ? "," : "") << N_list[i];
        kv.set("N_list", ns.str());
        kv.set("ensemble", ensemble_size);
        if (model == ModelKind::binary) {
            kv.set("lambda", lambda);
            if (totally_asymmetric)
                kv.set("totally_asymmetric", 1);
            else
                kv.set("mu", mu);
        } else {
            kv.set("D", D);
            std::ostringstream a;
            a << std::setprecision(17);
            for (std::size_t i = 0; i < alpha.data().size(); ++i) a << (i ? "," : "") << alpha.data()[i];
            kv.set("alpha", a.str());
            kv.set("n", alpha.size());
        }
        kv.set("rho0", profile_desc);
        std::ostringstream ts;
        ts << std::setprecision(17);
        for (std::size_t i = 0; i < compare_times.size(); ++i) ts << (i ? "," : "") << compare_times[i];
        kv.set("compare_times", ts.str());
        kv.set("M", M);
        kv.set("pde_grid", reference_grid());
        kv.set("seed_base", seed_base);
        kv.set("psi", psi_spec);
        kv.set("martingale_T", martingale_T);
        kv.set("drift_convention", "d_t rho = lambda rho_xx - mu d_x[rho(1-rho)]; mu>0 <=> rate(1,0)>rate(0,1)");
        kv.set("nspecies_flux", "d_t rho_k = D[rho_k'' + d_x sum_l alpha(l,k) rho_k rho_l]; alpha(k,l)=N log(rate(k,l)/rate(l,k))");
        return kv;
    }
};

struct Verdict {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct DistanceRow {
    std::size_t N = 0;
    double t = 0.0;
    double l1 = 0.0;            ///< ensemble-mean profile vs PDE, L1
    double l2 = 0.0;            ///< ensemble-mean profile vs PDE, L2
    double l1_se = 0.0;         ///< jackknife standard error of l1
    double run_l1_mean = 0.0;   ///< mean over runs of the per-run L1 distance
    double run_l1_sd = 0.0;
    double run_l2_mean = 0.0;
    double mean_events = 0.0;
};

struct ConvergenceReport {
    std::vector<DistanceRow> rows;
    /// Fit of log l1 against log N, one per compare time.
    std::vector<std::pair<double, LineFit>> slopes;
    bool degenerate = false;
    std::vector<Verdict> verdicts;
    /// Bin-averaged PDE reference per compare time.
    std::vector<DensityField> reference;
    /// Ensemble-mean profile per (N, t), same order as rows.
    std::vector<DensityField> mean_profiles;

    const DistanceRow& row(std::size_t N, double t) const {
        for (const auto& r : rows)
            if (r.N == N && r.t == t) return r;
        throw ConfigError("no row for N=" + std::to_string(N));
    }

    bool all_passed() const {
        return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.passed; });
    }
};

/// Average of a fine periodic grid over M bins; bin j collects the points
/// p with p/fine in [j/M, (j+1)/M).
inline DensityField bin_average(const DensityField& fine, std::size_t M) {
    const std::size_t G = fine.grid_size();
    if (M == 0 || G % M != 0) throw ConfigError("bin count must divide the grid size");
    const std::size_t w = G / M;
    DensityField out;
    out.t = fine.t;
    for (const auto& field : fine.values) {
        std::vector<double> b(M, 0.0);
        for (std::size_t p = 0; p < G; ++p) b[p / w] += field[p];
        for (double& v : b) v /= static_cast<double>(w);
        out.values.push_back(std::move(b));
    }
    return out;
}

/// L1 and L2 distances over bins, averaged over the compared fields.
inline std::pair<double, double> field_distance(const std::vector<std::vector<double>>& a,
                                                const std::vector<std::vector<double>>& b) {
    double l1 = 0.0, l2 = 0.0;
    const std::size_t M = a.front().size();
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t j = 0; j < M; ++j) {
            const double d = a[k][j] - b[k][j];
            l1 += std::abs(d);
            l2 += d * d;
        }
    const double norm = static_cast<double>(a.size() * M);
    return {l1 / norm, std::sqrt(l2 / norm)};
}

/// True when the sequence decreases strictly, except for at most one step
/// that fails by no more than one standard error.
inline bool decreasing_with_one_inversion(const std::vector<double>& v, const std::vector<double>& se) {
    int inversions = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] < v[i - 1]) continue;
        ++inversions;
        if (inversions > 1 || v[i] - v[i - 1] > std::max(se[i], se[i - 1])) return false;
    }
    return true;
}

/// Ensemble of runs at each N: block-averaged densities at the compare times
/// against the PDE started from the same initial density.
///
/// Runs use the thinned sampler (same law as the event-by-event engine).
/// The compared fields are the particle density for the binary model and all
/// species for the n-species model.
inline ConvergenceReport run_convergence(const ExperimentPlan& plan) {
    plan.validate_for_convergence();
    ConvergenceReport report;
    const std::size_t M = plan.M;
    const std::size_t G = plan.reference_grid();
    const bool binary = plan.model == ModelKind::binary;
    const std::size_t n_fields = binary ? 1 : plan.n_species();

    // PDE reference.
    const auto rho0 = DensityField::from_profile(plan.profile, G, binary);
    const auto pde = binary ? solve_burgers(rho0, plan.pde_params(), plan.compare_times.back(), plan.compare_times)
                            : solve_nspecies(rho0, plan.pde_params(), plan.compare_times.back(), plan.compare_times);
    for (const auto& f : pde) report.reference.push_back(bin_average(f, M));

    const std::size_t T = plan.compare_times.size();
    for (std::size_t N : plan.N_list) {
        const RateTable table = plan.table(N);
        const UniformizedSampler sampler(table, N);
        // profiles[r][time] -> fields x M
        std::vector<std::vector<std::vector<std::vector<double>>>> profiles(plan.ensemble_size);
        std::vector<double> events(plan.ensemble_size, 0.0);
        parallel_for(plan.ensemble_size, plan.threads, [&](std::size_t r) {
            Xoshiro256 rng(derive_seed(plan.seed_base, N, r));
            LatticeConfig config = new_config(N, plan.profile, rng);
            double t = 0.0;
            std::uint64_t ev = 0;
            for (double tc : plan.compare_times) {
                ev += sampler.advance(config, rng, tc - t);
                t = tc;
                auto prof = density_profile(config, M, t);
                if (binary) prof.values.erase(prof.values.begin());
                profiles[r].push_back(std::move(prof.values));
            }
            events[r] = static_cast<double>(ev);
        });

        for (std::size_t k = 0; k < T; ++k) {
            const auto& ref = report.reference[k].values;
            const double E = static_cast<double>(plan.ensemble_size);
            std::vector<std::vector<double>> sum(n_fields, std::vector<double>(M, 0.0));
            for (std::size_t r = 0; r < plan.ensemble_size; ++r)
                for (std::size_t f = 0; f < n_fields; ++f)
                    for (std::size_t j = 0; j < M; ++j) sum[f][j] += profiles[r][k][f][j];
            auto mean = sum;
            for (auto& f : mean)
                for (double& v : f) v /= E;

            DistanceRow row;
            row.N = N;
            row.t = plan.compare_times[k];
            std::tie(row.l1, row.l2) = field_distance(mean, ref);

            // Jackknife standard error of the mean-profile L1 distance.
            std::vector<double> jack(plan.ensemble_size);
            auto loo = mean;
            for (std::size_t r = 0; r < plan.ensemble_size; ++r) {
                for (std::size_t f = 0; f < n_fields; ++f)
                    for (std::size_t j = 0; j < M; ++j) loo[f][j] = (sum[f][j] - profiles[r][k][f][j]) / (E - 1.0);
                jack[r] = field_distance(loo, ref).first;
            }
            const auto jm = moments(jack);
            row.l1_se = std::sqrt((E - 1.0) / E * jm.variance * (E - 1.0));

            std::vector<double> run_l1(plan.ensemble_size), run_l2(plan.ensemble_size);
            for (std::size_t r = 0; r < plan.ensemble_size; ++r)
                std::tie(run_l1[r], run_l2[r]) = field_distance(profiles[r][k], ref);
            const auto m1 = moments(run_l1);
            row.run_l1_mean = m1.mean;
            row.run_l1_sd = m1.sd();
            row.run_l2_mean = moments(run_l2).mean;
            row.mean_events = moments(events).mean;
            report.rows.push_back(row);

            DensityField mp;
            mp.t = row.t;
            mp.values = std::move(mean);
            report.mean_profiles.push_back(std::move(mp));
        }
    }

    for (std::size_t k = 0; k < T; ++k) {
        const double t = plan.compare_times[k];
        std::vector<double> ns, err, se;
        for (const auto& r : report.rows)
            if (r.t == t) {
                ns.push_back(static_cast<double>(r.N));
                err.push_back(r.l1);
                se.push_back(r.l1_se);
            }
        const bool zero = std::any_of(err.begin(), err.end(), [](double e) { return !(e > 0.0); });
        if (zero) {
            report.degenerate = true;
            report.slopes.emplace_back(t, LineFit{});
            const bool all_zero = std::all_of(err.begin(), err.end(), [](double e) { return e == 0.0; });
            report.verdicts.push_back({"degenerate_t=" + std::to_string(t), all_zero,
                                       all_zero ? "all distances are zero; no slope fitted"
                                                : "zero distance at some N; no slope fitted"});
            continue;
        }
        report.slopes.emplace_back(t, fit_loglog(ns, err));
        if (ns.size() >= 2) {
            const bool mono = decreasing_with_one_inversion(err, se);
            std::ostringstream d;
            d << "mean-profile L1 by N:";
            for (std::size_t i = 0; i < err.size(); ++i) d << ' ' << err[i] << "(+-" << se[i] << ')';
            report.verdicts.push_back({"monotone_decrease_t=" + std::to_string(t), mono, d.str()});
        }
    }
    if (!std::isnan(plan.l1_threshold)) {
        const auto& last = report.row(plan.N_list.back(), plan.compare_times.back());
        std::ostringstream d;
        d << "L1=" << last.l1 << " at N=" << last.N << ", threshold " << plan.l1_threshold;
        report.verdicts.push_back({"l1_below_threshold", last.l1 < plan.l1_threshold, d.str()});
    }
    return report;
}

struct MartingaleRow {
    std::size_t N = 0;
    double mean_u = 0.0;
    double se_u = 0.0;
    double var_u = 0.0;
    double mean_compensator = 0.0;  ///< E int_0^T Z^2 R ds
    double mean_r = 0.0;            ///< E of the time average of R over [0,T]
    double mean_max_abs_l = 0.0;    ///< E of max_{t <= T} |L_t|
    double max_abs_l = 0.0;         ///< max over the whole ensemble
    double mean_events = 0.0;
};

struct MartingaleScalingReport {
    std::vector<MartingaleRow> rows;
    LineFit variance_slope;
    LineFit r_slope;
    bool degenerate = false;
    bool passed = false;
    std::vector<Verdict> verdicts;
};

namespace detail {
struct MartingaleObserver {
    MartingaleTracker& tracker;
    double r_integral = 0.0;
    double max_abs_l = 0.0;

    void hold(double dt) {
        tracker.hold(dt);
        r_integral += tracker.r() * dt;
    }
    void jump(std::size_t bond, const LatticeConfig& c) {
        tracker.jump(bond, c);
        max_abs_l = std::max(max_abs_l, std::abs(tracker.l()));
    }
};
} // namespace detail

/// Per N: ensemble of exact event-by-event runs to time martingale_T with
/// Z, L, R and U tracked along each path. Fits log Var[U_T] against log N;
/// PASS iff the slope lies in [-1.3, -0.7].
inline MartingaleScalingReport run_martingale_scaling(const ExperimentPlan& plan) {
    plan.validate();
    if (plan.model != ModelKind::binary) throw ConfigError("martingale diagnostics need the binary model");
    if (plan.N_list.size() < 3) throw ConfigError("martingale scaling needs at least 3 system sizes");
    if (!(plan.martingale_T > 0.0)) throw ConfigError("martingale_T must be positive");
    const auto tf = TestFunctionPair::from_psi(parse_function(plan.psi_spec));
    tf.validate();

    MartingaleScalingReport report;
    for (std::size_t N : plan.N_list) {
        const RateTable table = plan.table(N);
        const BondKernel kernel(N, tf, table);
        std::vector<double> u(plan.ensemble_size), comp(plan.ensemble_size), rbar(plan.ensemble_size),
            lmax(plan.ensemble_size), events(plan.ensemble_size);
        parallel_for(plan.ensemble_size, plan.threads, [&](std::size_t r) {
            Xoshiro256 rng(derive_seed(plan.seed_base, N, r));
            LatticeConfig config = new_config(N, plan.profile, rng);
            RateIndex index(config, table);
            SimClock clock;
            MartingaleTracker tracker(kernel, config);
            detail::MartingaleObserver obs{tracker, 0.0, std::abs(tracker.l())};
            auto rec = run_until(config, index, table, clock, rng, plan.martingale_T, {}, false, obs);
            u[r] = tracker.u();
            comp[r] = tracker.compensator();
            rbar[r] = obs.r_integral / plan.martingale_T;
            lmax[r] = obs.max_abs_l;
            events[r] = static_cast<double>(rec.event_count);
        });
        MartingaleRow row;
        row.N = N;
        const auto mu_ = moments(u);
        row.mean_u = mu_.mean;
        row.se_u = mu_.standard_error();
        row.var_u = mu_.variance;
        row.mean_compensator = moments(comp).mean;
        row.mean_r = moments(rbar).mean;
        row.mean_max_abs_l = moments(lmax).mean;
        row.max_abs_l = *std::max_element(lmax.begin(), lmax.end());
        row.mean_events = moments(events).mean;
        report.rows.push_back(row);
    }

    std::vector<double> ns, var, rr;
    for (const auto& r : report.rows) {
        ns.push_back(static_cast<double>(r.N));
        var.push_back(r.var_u);
        rr.push_back(r.mean_r);
    }
    report.degenerate = std::any_of(var.begin(), var.end(), [](double v) { return !(v > 0.0); });
    if (report.degenerate) {
        report.verdicts.push_back({"degenerate", false, "Var[U] vanishes (constant psi?); slope undefined"});
        return report;
    }
    report.variance_slope = fit_loglog(ns, var);
    if (std::all_of(rr.begin(), rr.end(), [](double v) { return v > 0.0; })) report.r_slope = fit_loglog(ns, rr);
    const double s = report.variance_slope.slope;
    report.passed = s >= -1.3 && s <= -0.7;
    std::ostringstream d;
    d << "slope " << s << " (95% CI " << report.variance_slope.ci_low << ", " << report.variance_slope.ci_high
      << "), accepted range [-1.3, -0.7]";
    report.verdicts.push_back({"variance_slope", report.passed, d.str()});
    for (const auto& r : report.rows) {
        std::ostringstream m;
        m << "N=" << r.N << " mean U " << r.mean_u << " +- " << r.se_u;
        report.verdicts.push_back(
            {"mean_zero_N=" + std::to_string(r.N), std::abs(r.mean_u) <= 3.0 * r.se_u, m.str()});
    }
    return report;
}

struct OracleResult {
    double tv = 0.0;
    std::size_t states = 0;
    std::size_t runs = 0;
    std::vector<double> exact;
    std::vector<double> empirical;
};

/// Law at time t from `runs` independent simulations against exp(tQ) applied
/// to the point mass at `initial`, Q assembled explicitly on the state space.
inline OracleResult run_generator_oracle(const LatticeConfig& initial, const RateTable& table, double t,
                                         std::size_t runs, std::uint64_t seed, unsigned threads = 1) {
    if (runs == 0) throw ConfigError("need at least one run");
    if (!(t >= 0.0)) throw ConfigError("t must be nonnegative");
    const StateSpace space = StateSpace::of(initial);
    const Generator q(space, table);
    OracleResult res;
    res.states = space.size();
    res.runs = runs;
    res.exact = q.transient(q.point_mass(initial), t);

    std::vector<std::size_t> final_state(runs);
    parallel_for(runs, threads, [&](std::size_t r) {
        Xoshiro256 rng(derive_seed(seed, initial.n_sites(), r));
        LatticeConfig c = initial;
        RateIndex index(c, table);
        SimClock clock;
        run_until(c, index, table, clock, rng, t, {});
        final_state[r] = space.index_of(c.occupancy());
    });
    res.empirical.assign(space.size(), 0.0);
    for (auto s : final_state) res.empirical[s] += 1.0;
    for (double& p : res.empirical) p /= static_cast<double>(runs);
    res.tv = total_variation(res.exact, res.empirical);
    return res;
}

inline void write_convergence_report(const std::filesystem::path& dir, const ConvergenceReport& rep,
                                     const ExperimentPlan& plan) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "convergence.csv");
        f << "N,t,l1,l2,l1_se,run_l1_mean,run_l1_sd,run_l2_mean,mean_events\n" << std::setprecision(10);
        for (const auto& r : rep.rows)
            f << r.N << ',' << r.t << ',' << r.l1 << ',' << r.l2 << ',' << r.l1_se << ',' << r.run_l1_mean << ','
              << r.run_l1_sd << ',' << r.run_l2_mean << ',' << r.mean_events << '\n';
    }
    {
        std::ofstream f(dir / "profiles.csv");
        f << "source,N,t,field,bin,value\n" << std::setprecision(10);
        for (const auto& ref : rep.reference)
            for (std::size_t k = 0; k < ref.n_fields(); ++k)
                for (std::size_t j = 0; j < ref.grid_size(); ++j)
                    f << "pde,0," << ref.t << ',' << k << ',' << j << ',' << ref.values[k][j] << '\n';
        for (std::size_t i = 0; i < rep.mean_profiles.size(); ++i) {
            const auto& mp = rep.mean_profiles[i];
            for (std::size_t k = 0; k < mp.n_fields(); ++k)
                for (std::size_t j = 0; j < mp.grid_size(); ++j)
                    f << "kmc," << rep.rows[i].N << ',' << mp.t << ',' << k << ',' << j << ',' << mp.values[k][j]
                      << '\n';
        }
    }
    {
        std::ofstream f(dir / "convergence_summary.txt");
        f << "hydrodynamic convergence (" << kVersion << ")\n";
        for (const auto& [t, fit] : rep.slopes) {
            f << "t=" << t << ": log-log slope of L1 vs N = " << fit.slope;
            if (fit.points > 2) f << " (95% CI " << fit.ci_low << ", " << fit.ci_high << ")";
            f << '\n';
        }
        if (rep.degenerate) f << "degenerate ensemble: no fit\n";
        for (const auto& v : rep.verdicts) f << (v.passed ? "PASS " : "FAIL ") << v.name << ": " << v.detail << '\n';
    }
    plan.describe().write_file((dir / "convergence.meta").string());
}

inline void write_martingale_report(const std::filesystem::path& dir, const MartingaleScalingReport& rep,
                                    const ExperimentPlan& plan) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "martingale.csv");
        f << "N,mean_u,se_u,var_u,mean_compensator,mean_r,mean_max_abs_l,max_abs_l,mean_events\n"
          << std::setprecision(10);
        for (const auto& r : rep.rows)
            f << r.N << ',' << r.mean_u << ',' << r.se_u << ',' << r.var_u << ',' << r.mean_compensator << ','
              << r.mean_r << ',' << r.mean_max_abs_l << ',' << r.max_abs_l << ',' << r.mean_events << '\n';
    }
    {
        std::ofstream f(dir / "martingale_summary.txt");
        f << "martingale diagnostics (" << kVersion << ")\n";
        if (rep.r_slope.valid) f << "log-log slope of mean R vs N = " << rep.r_slope.slope << '\n';
        for (const auto& v : rep.verdicts) f << (v.passed ? "PASS " : "FAIL ") << v.name << ": " << v.detail << '\n';
    }
    plan.describe().write_file((dir / "martingale.meta").string());
}

} // namespace asep
