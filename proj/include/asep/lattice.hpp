#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "asep/error.hpp"
#include "asep/random.hpp"

namespace asep {

using Species = std::uint8_t;

/// Occupancy of the discrete torus Z/NZ by n species.
///
/// Site labels are in {0,...,n-1}. In the binary model label 1 is a particle
/// (A_i = 1) and label 0 a hole (B_i = 1). Indices wrap modulo N.
class LatticeConfig {
public:
    LatticeConfig() = default;

    LatticeConfig(std::vector<Species> occupancy, std::size_t n_species)
        : occupancy_(std::move(occupancy)), counts_(n_species, 0) {
        if (n_species < 2)
            throw ConfigError("n_species must be at least 2 (no exchange is possible with one species)");
        if (n_species > 255) throw ConfigError("n_species must be at most 255");
        if (occupancy_.size() < 2) throw ConfigError("lattice needs at least 2 sites");
        for (std::size_t i = 0; i < occupancy_.size(); ++i) {
            if (occupancy_[i] >= n_species)
                throw ConfigError("site " + std::to_string(i) + " has label " +
                                  std::to_string(int(occupancy_[i])) + " outside [0," +
                                  std::to_string(n_species) + ")");
            ++counts_[occupancy_[i]];
        }
    }

    std::size_t n_sites() const noexcept { return occupancy_.size(); }
    std::size_t n_species() const noexcept { return counts_.size(); }

    Species operator[](std::size_t i) const noexcept { return occupancy_[i]; }
    Species at_wrapped(std::ptrdiff_t i) const noexcept {
        const auto n = static_cast<std::ptrdiff_t>(occupancy_.size());
        return occupancy_[static_cast<std::size_t>(((i % n) + n) % n)];
    }

    std::size_t next(std::size_t i) const noexcept { return i + 1 == occupancy_.size() ? 0 : i + 1; }
    std::size_t prev(std::size_t i) const noexcept { return i == 0 ? occupancy_.size() - 1 : i - 1; }

    /// Exchanges the contents of sites i and i+1 (bond i).
    void swap_bond(std::size_t i) noexcept { std::swap(occupancy_[i], occupancy_[next(i)]); }

    std::span<const Species> occupancy() const noexcept { return occupancy_; }
    std::span<Species> mutable_occupancy() noexcept { return occupancy_; }
    std::span<const std::int64_t> species_counts() const noexcept { return counts_; }

    /// Recounts species from the occupancy array.
    std::vector<std::int64_t> recount() const {
        std::vector<std::int64_t> c(counts_.size(), 0);
        for (auto s : occupancy_) ++c[s];
        return c;
    }

    bool counts_consistent() const { return recount() == counts_; }

    friend bool operator==(const LatticeConfig&, const LatticeConfig&) = default;

private:
    std::vector<Species> occupancy_;
    std::vector<std::int64_t> counts_;
};

/// Macroscopic initial densities, one function per species, summing to 1.
struct InitialProfile {
    std::vector<std::function<double(double)>> density_fns;

    static InitialProfile binary(std::function<double(double)> rho) {
        auto r = rho;
        return InitialProfile{{[r](double x) { return 1.0 - r(x); }, std::move(rho)}};
    }

    static InitialProfile uniform(std::size_t n_species) {
        const double c = 1.0 / static_cast<double>(n_species);
        return InitialProfile{std::vector<std::function<double(double)>>(n_species, [c](double) { return c; })};
    }

    std::size_t n_species() const noexcept { return density_fns.size(); }

    /// Densities at x; throws if any lies outside [0,1] or they do not sum to 1.
    std::vector<double> evaluate(double x) const {
        constexpr double tol = 1e-12;
        std::vector<double> v(density_fns.size());
        double sum = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) {
            v[k] = density_fns[k](x);
            if (!(v[k] >= -tol && v[k] <= 1.0 + tol)) {
                std::ostringstream os;
                os << std::setprecision(17) << "invalid profile: species " << k << " density " << v[k]
                   << " at x=" << x << " is outside [0,1]";
                throw ConfigError(os.str());
            }
            sum += v[k];
        }
        if (std::abs(sum - 1.0) > tol) {
            std::ostringstream os;
            os << std::setprecision(17) << "invalid profile: densities sum to " << sum << " at x=" << x;
            throw ConfigError(os.str());
        }
        return v;
    }
};

/// Samples a configuration from the product measure with marginals
/// P(occupancy[i] = k) = density_fns[k](i/N).
template <class Rng>
LatticeConfig new_config(std::size_t n_sites, const InitialProfile& profile, Rng& rng) {
    if (n_sites < 2) throw ConfigError("N must be at least 2");
    const std::size_t n = profile.n_species();
    std::vector<Species> occ(n_sites);
    for (std::size_t i = 0; i < n_sites; ++i) {
        const auto p = profile.evaluate(static_cast<double>(i) / static_cast<double>(n_sites));
        const double u = rng.uniform();
        double cum = 0.0;
        Species k = 0;
        // The last species with positive mass absorbs the rounding remainder.
        std::size_t last = n - 1;
        while (last > 0 && p[last] <= 0.0) --last;
        for (; k < last; ++k) {
            cum += p[k];
            if (u < cum) break;
        }
        occ[i] = k;
    }
    return LatticeConfig(std::move(occ), n);
}

inline LatticeConfig new_config(std::size_t n_sites, const InitialProfile& profile, std::uint64_t seed) {
    Xoshiro256 rng(seed);
    return new_config(n_sites, profile, rng);
}

inline LatticeConfig exact_config(std::vector<Species> occupancy, std::size_t n_species) {
    return LatticeConfig(std::move(occupancy), n_species);
}

/// Binary configuration; n_species = 2.
inline LatticeConfig exact_config(std::vector<Species> occupancy) {
    return LatticeConfig(std::move(occupancy), 2);
}

/// Single-line CSV: N,n,label_0,...,label_{N-1}
inline void write_config_csv(std::ostream& os, const LatticeConfig& c) {
    os << c.n_sites() << ',' << c.n_species();
    for (auto s : c.occupancy()) os << ',' << int(s);
    os << '\n';
}

inline std::string config_to_csv(const LatticeConfig& c) {
    std::ostringstream os;
    write_config_csv(os, c);
    return os.str();
}

inline LatticeConfig read_config_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("empty configuration CSV");
    std::vector<long long> fields;
    std::istringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) {
        std::size_t pos = 0;
        long long v = 0;
        try {
            v = std::stoll(tok, &pos);
        } catch (const std::exception&) {
            throw ConfigError("configuration CSV: non-integer field '" + tok + "'");
        }
        if (pos != tok.size() && tok.find_first_not_of(" \r\t", pos) != std::string::npos)
            throw ConfigError("configuration CSV: trailing characters in '" + tok + "'");
        fields.push_back(v);
    }
    if (fields.size() < 2) throw ConfigError("configuration CSV: missing N,n header");
    const auto n_sites = fields[0];
    const auto n_species = fields[1];
    if (n_sites < 2 || static_cast<std::size_t>(n_sites) != fields.size() - 2)
        throw ConfigError("configuration CSV: N=" + std::to_string(n_sites) + " but " +
                          std::to_string(fields.size() - 2) + " labels");
    if (n_species < 2 || n_species > 255) throw ConfigError("configuration CSV: bad species count");
    std::vector<Species> occ;
    occ.reserve(static_cast<std::size_t>(n_sites));
    for (std::size_t i = 2; i < fields.size(); ++i) {
        if (fields[i] < 0 || fields[i] >= n_species)
            throw ConfigError("configuration CSV: label out of range at site " + std::to_string(i - 2));
        occ.push_back(static_cast<Species>(fields[i]));
    }
    return LatticeConfig(std::move(occ), static_cast<std::size_t>(n_species));
}

inline LatticeConfig config_from_csv(const std::string& s) {
    std::istringstream is(s);
    return read_config_csv(is);
}

} // namespace asep
