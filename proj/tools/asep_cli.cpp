// asep: simulate / solve / converge / diagnose

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "asep/density.hpp"
#include "asep/engine.hpp"
#include "asep/error.hpp"
#include "asep/harness.hpp"
#include "asep/hydro.hpp"
#include "asep/keyvalue.hpp"
#include "asep/lattice.hpp"
#include "asep/observables.hpp"
#include "asep/profile.hpp"
#include "asep/rates.hpp"

namespace fs = std::filesystem;
using namespace asep;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitFrozen = 3;
constexpr int kExitInternal = 4;

/// Flags registered as strings; after parsing, the ones given on the command
/// line are merged with the config file (file wins).
struct FlagSet {
    CLI::App* app;
    std::map<std::string, std::string> values;
    std::vector<std::string> rho0;
    std::string config;

    void add(const std::string& name, const std::string& help) { app->add_option("--" + name, values[name], help); }

    KeyValue merged() const {
        KeyValue kv;
        for (const auto& [k, v] : values)
            if (app->count("--" + k) > 0) kv.set(k, v);
        if (!rho0.empty()) {
            std::string joined;
            for (std::size_t i = 0; i < rho0.size(); ++i) joined += (i ? ";" : "") + rho0[i];
            kv.set("rho0", joined);
        }
        if (!config.empty()) {
            const auto file = KeyValue::parse_file(config);
            for (const auto& [k, v] : file.entries()) kv.set(k, v);
        }
        return kv;
    }
};

void add_model_flags(FlagSet& f) {
    f.add("model", "binary | nspecies | abc-preset");
    f.add("lambda", "binary diffusion coefficient (> 0)");
    f.add("mu", "binary drift; mu > 0 moves particles right");
    f.add("D", "n-species diffusion coefficient (> 0)");
    f.add("n", "number of species (nspecies)");
    f.add("alpha", "n*n antisymmetric asymmetry matrix, row-major, comma separated");
    f.add("asym", "abc-preset cyclic asymmetry a = alpha(A,B) = alpha(B,C) = alpha(C,A)");
    f.add("abc_rates", "abc-preset explicit rates p+,p-,q+,q-,r+,r-");
    f.app->add_option("--rho0", f.rho0,
                      "initial density: const:c | sin:amplitude,k,mean[,shift] | file:path; repeat per species");
    f.add("t", "final time");
    f.add("times", "comma separated output times");
    f.add("snapshots", "number of equally spaced output times in [0, t]");
    f.add("out", "output directory (default: $ASEP_OUT_DIR or .)");
    f.app->add_option("--config", f.config, "key=value file; its entries override flags");
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, sep))
        if (!KeyValue::trim(tok).empty()) out.push_back(KeyValue::trim(tok));
    return out;
}

struct Model {
    std::string kind;
    std::size_t n_species = 2;
    double lambda = 1.0, mu = 0.0, D = 1.0;
    SquareMatrix alpha;
    bool explicit_rates = false;
    std::vector<double> abc_rates;
    InitialProfile profile;
    std::string profile_desc;

    RateTable table(std::size_t N) const {
        if (kind == "binary") return RateTable::binary(lambda, mu, N);
        if (explicit_rates) {
            const auto& r = abc_rates;
            return RateTable::abc(r[0], r[1], r[2], r[3], r[4], r[5]);
        }
        return RateTable::equidiffusive(D, alpha, N);
    }

    PDEParams pde() const {
        if (explicit_rates) throw ConfigError("explicit ABC rates have no macroscopic equation; use --asym");
        PDEParams p;
        p.lambda = lambda;
        p.mu = mu;
        p.D = D;
        p.alpha = alpha;
        return p;
    }

    void describe(KeyValue& meta) const {
        meta.set("model", kind);
        meta.set("rho0", profile_desc);
        if (kind == "binary") {
            meta.set("lambda", lambda);
            meta.set("mu", mu);
        } else if (explicit_rates) {
            std::ostringstream os;
            for (std::size_t i = 0; i < abc_rates.size(); ++i) os << (i ? "," : "") << abc_rates[i];
            meta.set("abc_rates", os.str());
        } else {
            meta.set("D", D);
            std::ostringstream os;
            os.precision(17);
            for (std::size_t i = 0; i < alpha.data().size(); ++i) os << (i ? "," : "") << alpha.data()[i];
            meta.set("alpha", os.str());
        }
    }
};

Model read_model(const KeyValue& kv) {
    Model m;
    m.kind = kv.get_or("model", "binary");
    const auto specs = split(kv.get_or("rho0", ""), ';');
    if (m.kind == "binary") {
        m.lambda = kv.get_double("lambda", 1.0);
        m.mu = kv.get_double("mu", 0.0);
        if (specs.size() > 1) throw ConfigError("binary model takes one --rho0 (particle density)");
        m.profile_desc = specs.empty() ? "const:0.5" : specs[0];
        m.profile = parse_binary_profile(m.profile_desc);
        return m;
    }
    if (m.kind == "nspecies") {
        const auto n = kv.require_int("n");
        if (n < 2 || n > 255) throw ConfigError("n must be in [2, 255]");
        m.n_species = static_cast<std::size_t>(n);
        m.D = kv.get_double("D", 1.0);
        const auto a = kv.require_list("alpha");
        if (a.size() != m.n_species * m.n_species) throw ConfigError("alpha needs n*n entries");
        m.alpha = SquareMatrix(m.n_species);
        for (std::size_t k = 0; k < m.n_species; ++k)
            for (std::size_t l = 0; l < m.n_species; ++l) m.alpha(k, l) = a[k * m.n_species + l];
        if (m.alpha.antisymmetry_defect() > 1e-12) throw ConfigError("alpha must be antisymmetric");
    } else if (m.kind == "abc-preset") {
        m.n_species = 3;
        m.D = kv.get_double("D", 1.0);
        m.alpha = RateTable::cyclic_alpha(kv.get_double("asym", 0.0));
        if (kv.contains("abc_rates")) {
            m.explicit_rates = true;
            m.abc_rates = kv.require_list("abc_rates");
            if (m.abc_rates.size() != 6) throw ConfigError("abc_rates needs 6 values p+,p-,q+,q-,r+,r-");
        }
    } else {
        throw ConfigError("unknown model '" + m.kind + "' (binary, nspecies, abc-preset)");
    }
    m.profile = parse_species_profile(specs, m.n_species);
    m.profile_desc = specs.empty() ? "uniform" : kv.require("rho0");
    return m;
}

std::vector<double> output_times(const KeyValue& kv, double t_end) {
    if (kv.contains("times")) {
        auto ts = kv.require_list("times");
        for (std::size_t i = 0; i < ts.size(); ++i)
            if (ts[i] < 0.0 || ts[i] > t_end || (i > 0 && ts[i] < ts[i - 1]))
                throw ConfigError("times must be sorted and lie in [0, t]");
        return ts;
    }
    const auto k = kv.get_int("snapshots", 11);
    if (k < 1) throw ConfigError("snapshots must be at least 1");
    if (k == 1) return {t_end};
    std::vector<double> ts;
    for (long long i = 0; i < k; ++i) ts.push_back(i == k - 1 ? t_end : t_end * double(i) / double(k - 1));
    return ts;
}

double require_time(const KeyValue& kv) {
    const double t = kv.get_double("t", 0.1);
    if (!(t >= 0.0)) throw ConfigError("t must be nonnegative");
    return t;
}

fs::path output_dir(const KeyValue& kv) {
    fs::path dir = kv.contains("out") ? fs::path(kv.require("out")) : fs::path(".");
    if (!kv.contains("out"))
        if (const char* env = std::getenv("ASEP_OUT_DIR"); env && *env) dir = env;
    std::error_code ec;
    fs::create_directories(dir, ec);
    const auto probe = dir / ".asep_write_probe";
    {
        std::ofstream f(probe);
        if (!f) throw ConfigError("output directory " + dir.string() + " is not writable");
    }
    fs::remove(probe, ec);
    return dir;
}

std::uint64_t read_seed(const KeyValue& kv) {
    const auto s = kv.get_int("seed", 0);
    if (s < 0) throw ConfigError("seed must be nonnegative");
    return static_cast<std::uint64_t>(s);
}

std::size_t read_size(const KeyValue& kv, const std::string& key) {
    const auto v = kv.require_int(key);
    if (v < 2) throw ConfigError(key + " must be at least 2");
    return static_cast<std::size_t>(v);
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream f(p);
    if (!f) throw ConfigError("cannot write " + p.string());
    f << s;
}

int cmd_simulate(const KeyValue& kv, bool verbose) {
    const Model model = read_model(kv);
    const auto N = read_size(kv, "N");
    const double t_end = require_time(kv);
    const auto times = output_times(kv, t_end);
    const auto seed = read_seed(kv);
    const auto dir = output_dir(kv);
    const RateTable table = model.table(N);

    Xoshiro256 rng(seed);
    LatticeConfig config = kv.contains("init") ? [&] {
        std::ifstream f(kv.require("init"));
        if (!f) throw ConfigError("cannot open " + kv.require("init"));
        return read_config_csv(f);
    }()
                                               : new_config(N, model.profile, rng);
    if (config.n_sites() != N || config.n_species() != table.n_species())
        throw ConfigError("initial configuration does not match N and the model");
    const auto counts0 = config.recount();
    RateIndex index(config, table);
    const bool frozen_at_start = !(index.total_rate() > 0.0);
    SimClock clock;
    const auto rec = run_until(config, index, table, clock, rng, t_end, times);
    if (config.recount() != counts0) throw std::logic_error("species counts changed during the run");

    std::ostringstream csv;
    write_trajectory_csv(csv, rec);
    write_text(dir / "trajectory.csv", csv.str());
    write_text(dir / "final.csv", config_to_csv(config));
    KeyValue meta;
    meta.set("version", kVersion);
    meta.set("command", "simulate");
    meta.set("N", N);
    model.describe(meta);
    describe_table(meta, table);
    meta.set("seed", seed);
    meta.set("t_end", t_end);
    if (kv.contains("init")) meta.set("init", kv.require("init"));
    meta.set("events", rec.event_count);
    meta.set("frozen", rec.frozen ? 1 : 0);
    std::ostringstream counts;
    for (std::size_t k = 0; k < counts0.size(); ++k) counts << (k ? "," : "") << counts0[k];
    meta.set("species_counts", counts.str());
    meta.write_file((dir / "trajectory.meta").string());
    if (verbose) std::cerr << rec.event_count << " events, output in " << dir << '\n';
    if (frozen_at_start) {
        std::cerr << "frozen: no exchange has positive rate in the initial configuration\n";
        return kExitFrozen;
    }
    return kExitOk;
}

int cmd_solve(const KeyValue& kv, bool verbose) {
    const Model model = read_model(kv);
    const auto M = static_cast<std::size_t>(kv.get_int("M", 256));
    const double t_end = require_time(kv);
    const auto times = output_times(kv, t_end);
    const auto dir = output_dir(kv);
    PDEParams params = model.pde();
    params.dt = kv.get_double("dt", 0.0);

    SolveStats stats;
    std::vector<DensityField> traj;
    if (model.kind == "binary") {
        traj = solve_burgers(DensityField::from_profile(model.profile, M, true), params, t_end, times, &stats);
    } else {
        traj = solve_nspecies(DensityField::from_profile(model.profile, M, false), params, t_end, times, &stats);
    }
    std::ostringstream csv;
    write_density_csv(csv, traj);
    write_text(dir / "density.csv", csv.str());
    KeyValue meta;
    meta.set("version", kVersion);
    meta.set("command", "solve");
    model.describe(meta);
    meta.set("M", M);
    meta.set("t_end", t_end);
    meta.set("dt", params.dt == 0.0 ? stats.dt_max : params.dt);
    meta.set("dt_max", stats.dt_max);
    meta.set("steps", stats.steps);
    meta.set("clipped", stats.clipped);
    meta.set("drift_convention", "d_t rho = lambda rho_xx - mu d_x[rho(1-rho)]");
    meta.set("nspecies_flux", "d_t rho_k = D[rho_k'' + d_x sum_l alpha(l,k) rho_k rho_l]");
    meta.write_file((dir / "density.meta").string());
    if (verbose) std::cerr << stats.steps << " steps, " << stats.clipped << " clipped values\n";
    return kExitOk;
}

int cmd_converge(const KeyValue& kv, unsigned threads, bool verbose) {
    auto plan = ExperimentPlan::from_config(kv);
    if (threads) plan.threads = threads;
    const auto dir = output_dir(kv);
    const auto report = run_convergence(plan);
    write_convergence_report(dir, report, plan);
    std::ifstream summary(dir / "convergence_summary.txt");
    std::cout << summary.rdbuf();
    if (verbose) std::cerr << "report in " << dir << '\n';
    return report.degenerate ? kExitFrozen : kExitOk;
}

int cmd_diagnose(const KeyValue& kv, unsigned threads, bool verbose) {
    if (kv.contains("N_list")) {
        auto plan = ExperimentPlan::from_config(kv);
        if (threads) plan.threads = threads;
        const auto dir = output_dir(kv);
        const auto report = run_martingale_scaling(plan);
        write_martingale_report(dir, report, plan);
        std::ifstream summary(dir / "martingale_summary.txt");
        std::cout << summary.rdbuf();
        return report.degenerate ? kExitFrozen : kExitOk;
    }
    // Single event-resolved run: Z, U, R, L along the path.
    const Model model = read_model(kv);
    if (model.kind != "binary") throw ConfigError("martingale diagnostics need the binary model");
    const auto N = read_size(kv, "N");
    const double t_end = require_time(kv);
    const auto seed = read_seed(kv);
    const auto dir = output_dir(kv);
    const RateTable table = model.table(N);
    const auto tf = TestFunctionPair::from_psi(parse_function(kv.get_or("psi", "sin:1")));
    tf.validate();
    Xoshiro256 rng(seed);
    LatticeConfig config = new_config(N, model.profile, rng);
    RateIndex index(config, table);
    const bool frozen_at_start = !(index.total_rate() > 0.0);
    SimClock clock;
    const auto rec = run_until(config, index, table, clock, rng, t_end, {}, true);
    const auto trace = martingale_trace(rec, tf, table);
    std::ostringstream csv;
    write_martingale_csv(csv, trace);
    write_text(dir / "martingale.csv", csv.str());
    KeyValue meta;
    meta.set("version", kVersion);
    meta.set("command", "diagnose");
    meta.set("N", N);
    model.describe(meta);
    meta.set("psi", kv.get_or("psi", "sin:1"));
    meta.set("seed", seed);
    meta.set("t_end", t_end);
    meta.set("events", rec.event_count);
    meta.write_file((dir / "martingale.meta").string());
    if (verbose) std::cerr << rec.event_count << " events, U_T = " << trace.U_values.back() << '\n';
    return frozen_at_start ? kExitFrozen : kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exclusion processes on the torus: simulation, hydrodynamic PDEs and convergence checks"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    bool verbose = false;
    unsigned threads = 0;
    app.add_flag("-v,--verbose", verbose, "progress on stderr");
    app.add_option("--threads", threads, "worker threads for ensembles (0: all cores)");

    auto* sim = app.add_subcommand("simulate", "kinetic Monte Carlo run; trajectory CSV + metadata");
    FlagSet sim_flags{sim, {}, {}, {}};
    add_model_flags(sim_flags);
    sim_flags.add("N", "number of sites");
    sim_flags.add("seed", "64-bit seed");
    sim_flags.add("init", "initial configuration CSV (N,n,labels...) instead of sampling rho0");

    auto* solve = app.add_subcommand("solve", "finite-difference solution of the limiting PDE");
    FlagSet solve_flags{solve, {}, {}, {}};
    add_model_flags(solve_flags);
    solve_flags.add("M", "grid points");
    solve_flags.add("dt", "time step (default: largest stable)");

    auto* conv = app.add_subcommand("converge", "ensemble convergence to the PDE, from a plan file");
    FlagSet conv_flags{conv, {}, {}, {}};
    conv->add_option("--config", conv_flags.config, "plan file (key=value)")->required();
    conv_flags.add("out", "output directory");

    auto* diag = app.add_subcommand("diagnose", "martingale diagnostics: plan file for scaling, or a single run");
    FlagSet diag_flags{diag, {}, {}, {}};
    add_model_flags(diag_flags);
    diag_flags.add("N", "number of sites");
    diag_flags.add("seed", "64-bit seed");
    diag_flags.add("psi", "test function: zero | const:c | sin:k | cos:k | bump:c,w | spline:path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (sim->parsed()) return cmd_simulate(sim_flags.merged(), verbose);
        if (solve->parsed()) return cmd_solve(solve_flags.merged(), verbose);
        if (conv->parsed()) return cmd_converge(conv_flags.merged(), threads, verbose);
        if (diag->parsed()) return cmd_diagnose(diag_flags.merged(), threads, verbose);
    } catch (const CflError& e) {
        std::cerr << "error: " << e.what() << "\nsuggested dt: " << std::setprecision(17) << e.max_dt() << '\n';
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitInternal;
}
