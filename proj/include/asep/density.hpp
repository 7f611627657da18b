#pragma once

#include <cstddef>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "asep/error.hpp"
#include "asep/lattice.hpp"

namespace asep {

/// Density field(s) on the uniform grid x_j = j/M of the unit torus.
///
/// values[k][j] approximates rho_k(j/M). Binary PDE solutions carry a single
/// field (the particle density); block-averaged configurations carry one field
/// per species.
struct DensityField {
    double t = 0.0;
    std::vector<std::vector<double>> values;

    std::size_t grid_size() const noexcept { return values.empty() ? 0 : values.front().size(); }
    std::size_t n_fields() const noexcept { return values.size(); }

    static DensityField single(std::vector<double> rho, double t = 0.0) { return DensityField{t, {std::move(rho)}}; }

    /// Samples profile densities on an M-point grid. With `particle_only`
    /// and a binary profile, keeps just species 1.
    static DensityField from_profile(const InitialProfile& profile, std::size_t M, bool particle_only) {
        DensityField f;
        f.values.assign(profile.n_species(), std::vector<double>(M));
        for (std::size_t j = 0; j < M; ++j) {
            const auto v = profile.evaluate(static_cast<double>(j) / static_cast<double>(M));
            for (std::size_t k = 0; k < v.size(); ++k) f.values[k][j] = v[k];
        }
        if (particle_only) {
            if (profile.n_species() != 2) throw ConfigError("particle-only field needs a binary profile");
            f.values.erase(f.values.begin());
        }
        return f;
    }

    double mean(std::size_t field = 0) const {
        double s = 0.0;
        for (double v : values[field]) s += v;
        return s / static_cast<double>(values[field].size());
    }
};

/// Divisor of N closest to M (ties go to the smaller one).
inline std::size_t nearest_divisor(std::size_t N, std::size_t M) {
    std::size_t best = 1;
    for (std::size_t d = 1; d <= N; ++d) {
        if (N % d != 0) continue;
        const auto dist = d > M ? d - M : M - d;
        const auto best_dist = best > M ? best - M : M - best;
        if (dist < best_dist) best = d;
    }
    return best;
}

/// Block average of the configuration over M bins of N/M sites each:
/// rho_k(bin j) = (M/N) #{i in bin j : occupancy[i] = k}.
inline DensityField density_profile(const LatticeConfig& config, std::size_t M, double t = 0.0) {
    const std::size_t N = config.n_sites();
    if (M == 0 || N % M != 0)
        throw ConfigError("bin count " + std::to_string(M) + " does not divide N=" + std::to_string(N) +
                          "; nearest admissible bin count is " + std::to_string(nearest_divisor(N, M)));
    const std::size_t width = N / M;
    DensityField f;
    f.t = t;
    f.values.assign(config.n_species(), std::vector<double>(M, 0.0));
    const double inv = 1.0 / static_cast<double>(width);
    for (std::size_t i = 0; i < N; ++i) f.values[config[i]][i / width] += inv;
    return f;
}

/// One row per time: t, then M values of each field in turn.
inline void write_density_csv(std::ostream& os, const std::vector<DensityField>& traj) {
    if (traj.empty()) return;
    const std::size_t M = traj.front().grid_size();
    os << 't';
    for (std::size_t k = 0; k < traj.front().n_fields(); ++k)
        for (std::size_t j = 0; j < M; ++j) os << ",rho" << k << '_' << j;
    os << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& f : traj) {
        os << f.t;
        for (const auto& field : f.values)
            for (double v : field) os << ',' << v;
        os << '\n';
    }
}

} // namespace asep
