#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "asep/error.hpp"

namespace asep {

/// Dense n x n real matrix, row-major.
class SquareMatrix {
public:
    SquareMatrix() = default;
    explicit SquareMatrix(std::size_t n, double fill = 0.0) : n_(n), a_(n * n, fill) {}
    SquareMatrix(std::initializer_list<std::initializer_list<double>> rows) : n_(rows.size()) {
        for (const auto& r : rows) {
            if (r.size() != n_) throw ConfigError("matrix rows must all have length n");
            a_.insert(a_.end(), r.begin(), r.end());
        }
    }

    std::size_t size() const noexcept { return n_; }
    double& operator()(std::size_t k, std::size_t l) noexcept { return a_[k * n_ + l]; }
    double operator()(std::size_t k, std::size_t l) const noexcept { return a_[k * n_ + l]; }
    const std::vector<double>& data() const noexcept { return a_; }

    /// Largest |a(k,l) + a(l,k)|; zero for an exactly antisymmetric matrix.
    double antisymmetry_defect() const noexcept {
        double d = 0.0;
        for (std::size_t k = 0; k < n_; ++k)
            for (std::size_t l = 0; l < n_; ++l) d = std::max(d, std::abs(a_[k * n_ + l] + a_[l * n_ + k]));
        return d;
    }

    friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

private:
    std::size_t n_ = 0;
    std::vector<double> a_;
};

struct BinaryParams {
    double lambda;
    double mu;
    std::size_t n_sites;
};

struct NSpeciesParams {
    double D;
    SquareMatrix alpha;
    std::size_t n_sites;
};

/// Rates given directly, with no macroscopic scaling attached.
struct ExplicitParams {};

using MacroParams = std::variant<BinaryParams, NSpeciesParams, ExplicitParams>;

/// Pairwise exchange rates: rate(k,l) is the rate of X^k X^l -> X^l X^k at a
/// bond whose left site holds k and right site holds l.
class RateTable {
public:
    RateTable(SquareMatrix rates, MacroParams macro = ExplicitParams{})
        : rates_(std::move(rates)), macro_(std::move(macro)) {
        const std::size_t n = rates_.size();
        if (n < 2) throw ConfigError("rate table needs at least 2 species");
        for (std::size_t k = 0; k < n; ++k) {
            rates_(k, k) = 0.0;
            for (std::size_t l = 0; l < n; ++l) {
                if (!(rates_(k, l) >= 0.0) || !std::isfinite(rates_(k, l)))
                    throw ConfigError("rate(" + std::to_string(k) + "," + std::to_string(l) +
                                      ") must be finite and nonnegative");
            }
        }
    }

    /// ASEP on N sites: rate(1,0) = lambda N^2 + mu N / 2 (particle jumps
    /// right), rate(0,1) = lambda N^2 - mu N / 2. The o(N^2), o(N) slack is zero.
    static RateTable binary(double lambda, double mu, std::size_t n_sites) {
        if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
        if (n_sites < 2) throw ConfigError("N must be at least 2");
        const double n = static_cast<double>(n_sites);
        if (lambda * n < std::abs(mu) / 2.0 * (1.0 - 1e-15))
            throw ConfigError("need lambda*N >= |mu|/2 for nonnegative rates (lambda=" + std::to_string(lambda) +
                              ", mu=" + std::to_string(mu) + ", N=" + std::to_string(n_sites) + ")");
        SquareMatrix r(2);
        r(1, 0) = std::max(0.0, lambda * n * n + mu * n / 2.0);
        r(0, 1) = std::max(0.0, lambda * n * n - mu * n / 2.0);
        return RateTable(std::move(r), BinaryParams{lambda, mu, n_sites});
    }

    /// Equidiffusive n-species rates: rate(k,l) = D N^2 exp(alpha(k,l) / (2N)),
    /// so N log(rate(k,l)/rate(l,k)) = alpha(k,l) exactly at every N.
    static RateTable equidiffusive(double D, const SquareMatrix& alpha, std::size_t n_sites) {
        if (!(D > 0.0)) throw ConfigError("D must be positive");
        if (n_sites < 2) throw ConfigError("N must be at least 2");
        if (alpha.antisymmetry_defect() > 1e-12) throw ConfigError("alpha must be antisymmetric");
        const std::size_t ns = alpha.size();
        const double n = static_cast<double>(n_sites);
        SquareMatrix r(ns);
        for (std::size_t k = 0; k < ns; ++k)
            for (std::size_t l = 0; l < ns; ++l)
                if (k != l) r(k, l) = D * n * n * std::exp(alpha(k, l) / (2.0 * n));
        return RateTable(std::move(r), NSpeciesParams{D, alpha, n_sites});
    }

    /// ABC model with labels A=0, B=1, C=2:
    /// AB -> BA at p+, BA -> AB at p-, BC -> CB at q+, CB -> BC at q-,
    /// CA -> AC at r+, AC -> CA at r-.
    static RateTable abc(double p_plus, double p_minus, double q_plus, double q_minus, double r_plus,
                         double r_minus) {
        SquareMatrix r(3);
        r(0, 1) = p_plus;
        r(1, 0) = p_minus;
        r(1, 2) = q_plus;
        r(2, 1) = q_minus;
        r(2, 0) = r_plus;
        r(0, 2) = r_minus;
        return RateTable(std::move(r));
    }

    /// Cyclic asymmetry alpha(A,B) = alpha(B,C) = alpha(C,A) = a.
    static SquareMatrix cyclic_alpha(double a) {
        SquareMatrix al(3);
        al(0, 1) = a;
        al(1, 2) = a;
        al(2, 0) = a;
        al(1, 0) = -a;
        al(2, 1) = -a;
        al(0, 2) = -a;
        return al;
    }

    /// Equidiffusive ABC preset with cyclic asymmetry a.
    static RateTable abc_equidiffusive(double D, double a, std::size_t n_sites) {
        return equidiffusive(D, cyclic_alpha(a), n_sites);
    }

    std::size_t n_species() const noexcept { return rates_.size(); }
    double operator()(std::size_t k, std::size_t l) const noexcept { return rates_(k, l); }
    const SquareMatrix& rates() const noexcept { return rates_; }
    const MacroParams& macro() const noexcept { return macro_; }

    double max_rate() const noexcept {
        double m = 0.0;
        for (double v : rates_.data()) m = std::max(m, v);
        return m;
    }

    /// Binary shorthand: lambda_ab(N), the particle-right rate.
    double lambda_ab() const noexcept { return rates_(1, 0); }
    /// Binary shorthand: lambda_ba(N), the particle-left rate.
    double lambda_ba() const noexcept { return rates_(0, 1); }

private:
    SquareMatrix rates_;
    MacroParams macro_;
};

} // namespace asep
