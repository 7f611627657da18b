#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "asep/density.hpp"
#include "asep/error.hpp"
#include "asep/functions.hpp"
#include "asep/rates.hpp"

namespace asep {

/// Drift sign convention, shared by both solvers and the weak residual:
///
///   binary:     d_t rho   = lambda d_xx rho - mu d_x[rho (1 - rho)]
///   n species:  d_t rho_k = D [d_xx rho_k + d_x sum_{l != k} alpha(l,k) rho_k rho_l]
///
/// where mu > 0 means lambda_ab > lambda_ba (particles hop right faster) and
/// alpha(k,l) = lim N log(rate(k,l) / rate(l,k)). Both follow from the bond
/// currents of the microscopic generator. With D = lambda and
/// alpha(1,0) = mu / lambda the two-species system is the binary equation
/// for rho = rho_1.
struct PDEParams {
    double lambda = 1.0;
    double mu = 0.0;
    double D = 1.0;
    SquareMatrix alpha;
    /// Time step; 0 selects the largest admissible one.
    double dt = 0.0;
};

inline constexpr double kCflSafety = 0.8;
inline constexpr double kClipEpsilon = 1e-8;

struct SolveStats {
    std::uint64_t steps = 0;
    std::uint64_t clipped = 0;
    double dt_max = 0.0;
};

namespace detail {

inline double max_admissible_dt(double dx, double diffusion, double wave_speed) {
    return kCflSafety / (2.0 * diffusion / (dx * dx) + wave_speed / dx);
}

inline void check_times(double t_end, std::span<const double> output_times) {
    if (!(t_end >= 0.0)) throw ConfigError("t_end must be nonnegative");
    for (std::size_t k = 0; k < output_times.size(); ++k) {
        if (output_times[k] < 0.0 || output_times[k] > t_end * (1.0 + 1e-14))
            throw ConfigError("output time " + std::to_string(output_times[k]) + " outside [0, t_end]");
        if (k > 0 && output_times[k] < output_times[k - 1]) throw ConfigError("output times must be sorted");
    }
}

inline double resolve_dt(double requested, double dt_max) {
    if (requested == 0.0) return dt_max;
    if (!(requested > 0.0)) throw ConfigError("dt must be positive");
    if (requested > dt_max * (1.0 + 1e-12)) {
        std::ostringstream os;
        os.precision(17);
        os << "time step " << requested << " violates the stability bound; maximal admissible dt is " << dt_max;
        throw CflError(os.str(), dt_max);
    }
    return requested;
}

/// Marches `advance(state, dt)` so that every output time is hit exactly.
template <class State, class Advance>
std::vector<DensityField> march(State state, double t_end, std::span<const double> output_times, double dt,
                                SolveStats& stats, Advance&& advance) {
    std::vector<double> stops(output_times.begin(), output_times.end());
    if (stops.empty()) stops.push_back(t_end);
    std::vector<DensityField> out;
    double t = 0.0;
    for (double stop : stops) {
        stop = std::min(stop, t_end);
        const double span = stop - t;
        if (span > 0.0) {
            const auto n = static_cast<std::uint64_t>(std::ceil(span / dt - 1e-9));
            const double h = span / static_cast<double>(std::max<std::uint64_t>(n, 1));
            for (std::uint64_t s = 0; s < std::max<std::uint64_t>(n, 1); ++s) advance(state, h);
            stats.steps += std::max<std::uint64_t>(n, 1);
            t = stop;
        }
        out.push_back(DensityField{stop, state});
    }
    return out;
}

inline std::uint64_t clip(std::vector<double>& v) {
    std::uint64_t n = 0;
    for (double& x : v) {
        if (x < -kClipEpsilon) {
            x = -kClipEpsilon;
            ++n;
        } else if (x > 1.0 + kClipEpsilon) {
            x = 1.0 + kClipEpsilon;
            ++n;
        }
    }
    return n;
}

} // namespace detail

/// Largest stable step for the binary scheme on an M-point grid.
inline double burgers_max_dt(std::size_t M, const PDEParams& p) {
    return detail::max_admissible_dt(1.0 / static_cast<double>(M), p.lambda, std::abs(p.mu));
}

inline double nspecies_wave_bound(const PDEParams& p) {
    double a = 0.0;
    for (std::size_t k = 0; k < p.alpha.size(); ++k) {
        double s = 0.0;
        for (std::size_t l = 0; l < p.alpha.size(); ++l) s += std::abs(p.alpha(k, l));
        a = std::max(a, s);
    }
    return p.D * a;
}

inline double nspecies_max_dt(std::size_t M, const PDEParams& p) {
    return detail::max_admissible_dt(1.0 / static_cast<double>(M), p.D, nspecies_wave_bound(p));
}

/// Binary viscous Burgers equation, explicit conservative scheme: central
/// second differences for diffusion, local Lax-Friedrichs for the flux
/// F(rho) = mu rho (1 - rho). The dissipation speed is the larger species
/// velocity max(|mu| rho, |mu| (1 - rho)), which bounds |F'| and keeps the
/// update monotone under the step bound.
inline std::vector<DensityField> solve_burgers(const DensityField& rho0, const PDEParams& params, double t_end,
                                               std::span<const double> output_times, SolveStats* stats_out = nullptr) {
    if (rho0.n_fields() != 1) throw ConfigError("solve_burgers expects a single density field");
    if (!(params.lambda > 0.0)) throw ConfigError("lambda must be positive");
    const std::size_t M = rho0.grid_size();
    if (M < 3) throw ConfigError("grid needs at least 3 points");
    for (double v : rho0.values[0])
        if (!(v >= -1e-12 && v <= 1.0 + 1e-12)) throw ConfigError("initial density outside [0,1]");
    detail::check_times(t_end, output_times);

    SolveStats stats;
    stats.dt_max = burgers_max_dt(M, params);
    const double dt = detail::resolve_dt(params.dt, stats.dt_max);
    const double dx = 1.0 / static_cast<double>(M);
    const double lambda = params.lambda;
    const double mu = params.mu;
    const double amu = std::abs(mu);

    std::vector<double> flux(M);
    std::vector<double> next(M);
    auto advance = [&](std::vector<std::vector<double>>& state, double h) {
        auto& rho = state[0];
        for (std::size_t j = 0; j < M; ++j) {
            const double l = rho[j];
            const double r = rho[j + 1 == M ? 0 : j + 1];
            const double a = amu * std::max(std::max(l, 1.0 - l), std::max(r, 1.0 - r));
            flux[j] = 0.5 * (mu * l * (1.0 - l) + mu * r * (1.0 - r)) - 0.5 * a * (r - l);
        }
        const double cf = h / dx;
        const double cd = lambda * h / (dx * dx);
        for (std::size_t j = 0; j < M; ++j) {
            const std::size_t jm = j == 0 ? M - 1 : j - 1;
            const std::size_t jp = j + 1 == M ? 0 : j + 1;
            next[j] = rho[j] - cf * (flux[j] - flux[jm]) + cd * (rho[jp] - 2.0 * rho[j] + rho[jm]);
        }
        rho.swap(next);
        stats.clipped += detail::clip(rho);
    };
    auto out = detail::march(rho0.values, t_end, output_times, dt, stats, advance);
    if (stats_out) *stats_out = stats;
    return out;
}

inline std::vector<DensityField> solve_burgers(const DensityField& rho0, const PDEParams& params, double t_end,
                                               std::initializer_list<double> output_times) {
    return solve_burgers(rho0, params, t_end, std::span<const double>(output_times.begin(), output_times.size()));
}

/// Equidiffusive n-species system with fluxes F_k = D rho_k sum_l alpha(k,l) rho_l,
/// same scheme family as solve_burgers. The fluxes sum to zero for
/// antisymmetric alpha, so sum_k rho_k = 1 is preserved up to rounding.
inline std::vector<DensityField> solve_nspecies(const DensityField& rho0, const PDEParams& params, double t_end,
                                                std::span<const double> output_times, SolveStats* stats_out = nullptr) {
    const std::size_t n = rho0.n_fields();
    if (n < 2) throw ConfigError("solve_nspecies needs at least 2 fields");
    if (params.alpha.size() != n) throw ConfigError("alpha must be n x n with n the number of fields");
    if (params.alpha.antisymmetry_defect() > 1e-12)
        throw ConfigError("alpha must be antisymmetric (otherwise sum_k rho_k = 1 is not preserved)");
    if (!(params.D > 0.0)) throw ConfigError("D must be positive");
    const std::size_t M = rho0.grid_size();
    if (M < 3) throw ConfigError("grid needs at least 3 points");
    for (std::size_t j = 0; j < M; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (rho0.values[k].size() != M) throw ConfigError("fields have different grid sizes");
            const double v = rho0.values[k][j];
            if (!(v >= -1e-12 && v <= 1.0 + 1e-12)) throw ConfigError("initial density outside [0,1]");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-10) throw ConfigError("initial densities do not sum to 1");
    }
    detail::check_times(t_end, output_times);

    SolveStats stats;
    stats.dt_max = nspecies_max_dt(M, params);
    const double dt = detail::resolve_dt(params.dt, stats.dt_max);
    const double dx = 1.0 / static_cast<double>(M);
    const double D = params.D;
    const SquareMatrix& alpha = params.alpha;

    std::vector<std::vector<double>> flux(n, std::vector<double>(M));
    std::vector<double> next(M), vel_l(n), vel_r(n);
    auto velocities = [&](const std::vector<std::vector<double>>& rho, std::size_t j, std::vector<double>& v) {
        double vmax = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            double s = 0.0;
            for (std::size_t l = 0; l < n; ++l)
                if (l != k) s += alpha(k, l) * rho[l][j];
            v[k] = D * s;
            vmax = std::max(vmax, std::abs(v[k]));
        }
        return vmax;
    };
    auto advance = [&](std::vector<std::vector<double>>& rho, double h) {
        for (std::size_t j = 0; j < M; ++j) {
            const std::size_t jp = j + 1 == M ? 0 : j + 1;
            const double a = std::max(velocities(rho, j, vel_l), velocities(rho, jp, vel_r));
            for (std::size_t k = 0; k < n; ++k) {
                const double l = rho[k][j];
                const double r = rho[k][jp];
                flux[k][j] = 0.5 * (l * vel_l[k] + r * vel_r[k]) - 0.5 * a * (r - l);
            }
        }
        const double cf = h / dx;
        const double cd = D * h / (dx * dx);
        for (std::size_t k = 0; k < n; ++k) {
            auto& rk = rho[k];
            const auto& fk = flux[k];
            for (std::size_t j = 0; j < M; ++j) {
                const std::size_t jm = j == 0 ? M - 1 : j - 1;
                const std::size_t jp = j + 1 == M ? 0 : j + 1;
                next[j] = rk[j] - cf * (fk[j] - fk[jm]) + cd * (rk[jp] - 2.0 * rk[j] + rk[jm]);
            }
            rk.swap(next);
            stats.clipped += detail::clip(rk);
        }
    };
    auto out = detail::march(rho0.values, t_end, output_times, dt, stats, advance);
    if (stats_out) *stats_out = stats;
    return out;
}

/// Space-time test function theta(x,t) with the derivatives the weak form needs.
struct SpaceTimeFunction {
    std::function<double(double, double)> f;
    std::function<double(double, double)> dt;
    std::function<double(double, double)> dx;
    std::function<double(double, double)> dxx;
};

/// Time factor g(t) with derivative.
struct TimeFactor {
    std::function<double(double)> g;
    std::function<double(double)> dg;

    /// t (T - t): vanishes at both ends of [0, T].
    static TimeFactor bump(double T) {
        return {[T](double t) { return t * (T - t); }, [T](double t) { return T - 2.0 * t; }};
    }
    /// a + b t
    static TimeFactor affine(double a, double b) {
        return {[a, b](double t) { return a + b * t; }, [b](double) { return b; }};
    }
};

/// theta(x,t) = space(x) g(t)
inline SpaceTimeFunction separable(SmoothFunction space, TimeFactor time) {
    auto s = std::make_shared<const SmoothFunction>(std::move(space));
    auto g = std::make_shared<const TimeFactor>(std::move(time));
    return {[s, g](double x, double t) { return s->f(x) * g->g(t); },
            [s, g](double x, double t) { return s->f(x) * g->dg(t); },
            [s, g](double x, double t) { return s->d1(x) * g->g(t); },
            [s, g](double x, double t) { return s->d2(x) * g->g(t); }};
}

/// Signed residual of the weak formulation
///   int_0^T int_0^1 [rho (theta_t + lambda theta_xx) + mu rho (1 - rho) theta_x] dx dt
///     - int_0^1 [rho(x,T) theta(x,T) - rho(x,0) theta(x,0)] dx
/// with the trapezoid rule in time over the stored slices and the periodic
/// trapezoid rule in space. Uses the particle field (field 1 of a
/// two-species field, else field 0).
inline double weak_residual(std::span<const DensityField> traj, const SpaceTimeFunction& theta, double lambda,
                            double mu) {
    if (traj.size() < 2) throw ConfigError("weak residual needs at least two time slices");
    const std::size_t field = traj.front().n_fields() == 2 ? 1 : 0;
    const std::size_t M = traj.front().grid_size();
    const double inv_m = 1.0 / static_cast<double>(M);

    auto bulk = [&](const DensityField& f) {
        double s = 0.0;
        const auto& rho = f.values[field];
        for (std::size_t j = 0; j < M; ++j) {
            const double x = static_cast<double>(j) * inv_m;
            const double r = rho[j];
            s += r * (theta.dt(x, f.t) + lambda * theta.dxx(x, f.t)) + mu * r * (1.0 - r) * theta.dx(x, f.t);
        }
        return s * inv_m;
    };
    auto boundary = [&](const DensityField& f) {
        double s = 0.0;
        const auto& rho = f.values[field];
        for (std::size_t j = 0; j < M; ++j) s += rho[j] * theta.f(static_cast<double>(j) * inv_m, f.t);
        return s * inv_m;
    };

    double integral = 0.0;
    double prev = bulk(traj[0]);
    for (std::size_t k = 1; k < traj.size(); ++k) {
        if (traj[k].grid_size() != M) throw ConfigError("time slices have different grid sizes");
        if (!(traj[k].t > traj[k - 1].t)) throw ConfigError("time slices must be strictly increasing");
        const double cur = bulk(traj[k]);
        integral += 0.5 * (prev + cur) * (traj[k].t - traj[k - 1].t);
        prev = cur;
    }
    return integral - (boundary(traj.back()) - boundary(traj.front()));
}

inline double weak_residual(const std::vector<DensityField>& traj, const SpaceTimeFunction& theta, double lambda,
                            double mu) {
    return weak_residual(std::span<const DensityField>(traj), theta, lambda, mu);
}

} // namespace asep
