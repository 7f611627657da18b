#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "asep/error.hpp"
#include "asep/lattice.hpp"
#include "asep/rates.hpp"

namespace asep {

inline constexpr std::uint64_t kMaxOracleStates = 60000;

/// All configurations of N sites with prescribed species counts, i.e. the
/// communicating class the exchange dynamics lives in.
class StateSpace {
public:
    StateSpace(std::size_t n_sites, std::span<const std::int64_t> counts)
        : n_sites_(n_sites), n_species_(counts.size()), counts_(counts.begin(), counts.end()) {
        std::uint64_t total = 1;
        for (std::size_t i = 0; i < n_sites; ++i) {
            total *= n_species_;
            if (total > kMaxOracleStates)
                throw ConfigError("state space n^N exceeds " + std::to_string(kMaxOracleStates) + " configurations");
        }
        code_to_index_.assign(total, kAbsent);
        std::vector<Species> occ(n_sites);
        std::vector<std::int64_t> c(n_species_);
        for (std::uint64_t code = 0; code < total; ++code) {
            decode(code, occ);
            std::fill(c.begin(), c.end(), 0);
            for (auto s : occ) ++c[s];
            if (c == counts_) {
                code_to_index_[code] = static_cast<std::uint32_t>(codes_.size());
                codes_.push_back(code);
            }
        }
    }

    static StateSpace of(const LatticeConfig& c) { return StateSpace(c.n_sites(), c.species_counts()); }

    std::size_t size() const noexcept { return codes_.size(); }
    std::size_t n_sites() const noexcept { return n_sites_; }
    std::size_t n_species() const noexcept { return n_species_; }

    std::vector<Species> occupancy(std::size_t index) const {
        std::vector<Species> occ(n_sites_);
        decode(codes_[index], occ);
        return occ;
    }

    LatticeConfig config(std::size_t index) const { return LatticeConfig(occupancy(index), n_species_); }

    std::size_t index_of(std::span<const Species> occ) const {
        std::uint64_t code = 0;
        for (std::size_t i = n_sites_; i-- > 0;) code = code * n_species_ + occ[i];
        const auto idx = code < code_to_index_.size() ? code_to_index_[code] : kAbsent;
        if (idx == kAbsent) throw ConfigError("configuration is not in this state space");
        return idx;
    }

private:
    static constexpr std::uint32_t kAbsent = 0xffffffffu;

    void decode(std::uint64_t code, std::vector<Species>& occ) const {
        for (std::size_t i = 0; i < n_sites_; ++i) {
            occ[i] = static_cast<Species>(code % n_species_);
            code /= n_species_;
        }
    }

    std::size_t n_sites_;
    std::size_t n_species_;
    std::vector<std::int64_t> counts_;
    std::vector<std::uint64_t> codes_;
    std::vector<std::uint32_t> code_to_index_;
};

/// Sparse generator Q of the exchange dynamics on a StateSpace: from each
/// state, bond i with pattern (k,l), k != l, leads to the swapped state at
/// rate(k,l).
class Generator {
public:
    Generator(const StateSpace& space, const RateTable& table) : space_(&space) {
        if (table.n_species() != space.n_species()) throw ConfigError("rate table / state space species mismatch");
        const std::size_t n = space.n_sites();
        row_start_.reserve(space.size() + 1);
        exit_.assign(space.size(), 0.0);
        row_start_.push_back(0);
        for (std::size_t s = 0; s < space.size(); ++s) {
            auto occ = space.occupancy(s);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t j = i + 1 == n ? 0 : i + 1;
                const double r = table(occ[i], occ[j]);
                if (occ[i] == occ[j] || r <= 0.0) continue;
                std::swap(occ[i], occ[j]);
                target_.push_back(static_cast<std::uint32_t>(space.index_of(occ)));
                std::swap(occ[i], occ[j]);
                rate_.push_back(r);
                exit_[s] += r;
            }
            row_start_.push_back(target_.size());
        }
    }

    std::size_t size() const noexcept { return exit_.size(); }
    double exit_rate(std::size_t s) const noexcept { return exit_[s]; }

    /// (Q f)(s) = sum_{s'} q(s,s') (f(s') - f(s))
    std::vector<double> apply(std::span<const double> f) const {
        std::vector<double> out(size(), 0.0);
        for (std::size_t s = 0; s < size(); ++s)
            for (std::size_t e = row_start_[s]; e < row_start_[s + 1]; ++e) out[s] += rate_[e] * (f[target_[e]] - f[s]);
        return out;
    }

    /// p exp(tQ) by uniformization; the truncated Poisson tail is below tol.
    std::vector<double> transient(std::span<const double> p0, double t, double tol = 1e-10) const {
        std::vector<double> p(p0.begin(), p0.end());
        const double lambda = *std::max_element(exit_.begin(), exit_.end());
        if (t <= 0.0 || lambda <= 0.0) return p;
        // Chunks keep exp(-lambda*h) far from underflow.
        const auto chunks = static_cast<std::size_t>(std::ceil(lambda * t / 20.0));
        const double h = t / static_cast<double>(chunks);
        const double chunk_tol = tol / static_cast<double>(chunks);
        std::vector<double> v(size()), w(size()), acc(size());
        for (std::size_t c = 0; c < chunks; ++c) {
            const double m = lambda * h;
            double weight = std::exp(-m);
            double cum = weight;
            v = p;
            for (std::size_t s = 0; s < size(); ++s) acc[s] = weight * v[s];
            for (std::size_t k = 1; 1.0 - cum > chunk_tol && k < 100000; ++k) {
                std::fill(w.begin(), w.end(), 0.0);
                for (std::size_t s = 0; s < size(); ++s) {
                    if (v[s] == 0.0) continue;
                    w[s] += v[s] * (1.0 - exit_[s] / lambda);
                    for (std::size_t e = row_start_[s]; e < row_start_[s + 1]; ++e) w[target_[e]] += v[s] * rate_[e] / lambda;
                }
                v.swap(w);
                weight *= m / static_cast<double>(k);
                cum += weight;
                for (std::size_t s = 0; s < size(); ++s) acc[s] += weight * v[s];
            }
            p = acc;
        }
        return p;
    }

    /// Point mass at a configuration.
    std::vector<double> point_mass(const LatticeConfig& c) const {
        std::vector<double> p(size(), 0.0);
        p[space_->index_of(c.occupancy())] = 1.0;
        return p;
    }

private:
    const StateSpace* space_;
    std::vector<std::size_t> row_start_;
    std::vector<std::uint32_t> target_;
    std::vector<double> rate_;
    std::vector<double> exit_;
};

inline double total_variation(std::span<const double> p, std::span<const double> q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

} // namespace asep
