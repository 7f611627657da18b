#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "asep/density.hpp"
#include "asep/engine.hpp"
#include "asep/error.hpp"
#include "asep/functions.hpp"
#include "asep/lattice.hpp"
#include "asep/rates.hpp"

namespace asep {

/// Pair (phi_a, phi_b) defining Z = exp[(1/N) sum phi_a(i/N) A_i + phi_b(i/N) B_i].
/// Only psi = phi_a - phi_b enters the dynamics.
struct TestFunctionPair {
    SmoothFunction phi_a;
    SmoothFunction phi_b;

    /// phi_a = psi, phi_b = 0.
    static TestFunctionPair from_psi(SmoothFunction psi) { return {std::move(psi), constant_fn(0.0)}; }

    double psi(double x) const { return phi_a.f(x) - phi_b.f(x); }
    double dpsi(double x) const { return phi_a.d1(x) - phi_b.d1(x); }
    double d2psi(double x) const { return phi_a.d2(x) - phi_b.d2(x); }

    /// Requires psi periodic and derivatives consistent with central
    /// differences at a few spot points.
    void validate() const {
        if (std::abs(psi(0.0) - psi(1.0)) >= 1e-10)
            throw ConfigError("test function psi = phi_a - phi_b is not periodic: |psi(0) - psi(1)| = " +
                              std::to_string(std::abs(psi(0.0) - psi(1.0))));
        for (const SmoothFunction* fn : {&phi_a, &phi_b}) {
            for (double x : {0.137, 0.5, 0.811}) {
                const double h1 = 1e-5;
                const double fd1 = (fn->f(x + h1) - fn->f(x - h1)) / (2.0 * h1);
                const double h2 = 1e-4;
                const double fd2 = (fn->f(x + h2) - 2.0 * fn->f(x) + fn->f(x - h2)) / (h2 * h2);
                if (std::abs(fd1 - fn->d1(x)) > 1e-4 * (1.0 + std::abs(fn->d1(x))) ||
                    std::abs(fd2 - fn->d2(x)) > 1e-3 * (1.0 + std::abs(fn->d2(x))))
                    throw ConfigError("derivatives of test function '" + fn->name +
                                      "' disagree with finite differences at x=" + std::to_string(x));
            }
        }
    }
};

/// (1/N) sum_i phi(i/N) 1{occupancy[i] = k}
template <class Fn>
double empirical_pairing(const LatticeConfig& config, const Fn& phi, Species k) {
    const std::size_t N = config.n_sites();
    const double inv = 1.0 / static_cast<double>(N);
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i)
        if (config[i] == k) s += phi(static_cast<double>(i) * inv);
    return s * inv;
}

/// Per-bond quantities of the binary generator for fixed (N, psi, rates):
/// lt_ab[i] = lambda_ab (exp(dpsi_i / N) - 1), lt_ba[i] = lambda_ba (exp(-dpsi_i / N) - 1)
/// with dpsi_i = psi((i+1)/N) - psi(i/N) taken periodically.
class BondKernel {
public:
    BondKernel(std::size_t n_sites, const TestFunctionPair& tf, const RateTable& table) : n_(n_sites) {
        if (table.n_species() != 2) throw ConfigError("Z, L and R are defined for the binary model only");
        lambda_ab_ = table.lambda_ab();
        lambda_ba_ = table.lambda_ba();
        const double inv = 1.0 / static_cast<double>(n_);
        phi_a_.resize(n_);
        phi_b_.resize(n_);
        psi_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            const double x = static_cast<double>(i) * inv;
            phi_a_[i] = tf.phi_a.f(x);
            phi_b_[i] = tf.phi_b.f(x);
            psi_[i] = phi_a_[i] - phi_b_[i];
        }
        dpsi_.resize(n_);
        lt_ab_.resize(n_);
        lt_ba_.resize(n_);
        r_ab_.resize(n_);
        r_ba_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            dpsi_[i] = psi_[i + 1 == n_ ? 0 : i + 1] - psi_[i];
            const double e_ab = std::expm1(dpsi_[i] * inv);
            const double e_ba = std::expm1(-dpsi_[i] * inv);
            lt_ab_[i] = lambda_ab_ * e_ab;
            lt_ba_[i] = lambda_ba_ * e_ba;
            // lt^2 / lambda = lambda (e^x - 1)^2, which vanishes with lambda.
            r_ab_[i] = lambda_ab_ * e_ab * e_ab;
            r_ba_[i] = lambda_ba_ * e_ba * e_ba;
        }
    }

    std::size_t n_sites() const noexcept { return n_; }
    double phi_a(std::size_t i) const noexcept { return phi_a_[i]; }
    double phi_b(std::size_t i) const noexcept { return phi_b_[i]; }
    double dpsi(std::size_t i) const noexcept { return dpsi_[i]; }

    /// Contribution of bond i with left label a and right label b to L.
    double l_term(std::size_t i, Species a, Species b) const noexcept {
        return (a == 1 && b == 0) ? lt_ab_[i] : (a == 0 && b == 1) ? lt_ba_[i] : 0.0;
    }

    /// Contribution of bond i to R.
    double r_term(std::size_t i, Species a, Species b) const noexcept {
        return (a == 1 && b == 0) ? r_ab_[i] : (a == 0 && b == 1) ? r_ba_[i] : 0.0;
    }

    double log_z(const LatticeConfig& c) const {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i) s += c[i] == 1 ? phi_a_[i] : phi_b_[i];
        return s / static_cast<double>(n_);
    }

    double generator(const LatticeConfig& c) const {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i) s += l_term(i, c[i], c[c.next(i)]);
        return s;
    }

    double quadratic_variation(const LatticeConfig& c) const {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i) s += r_term(i, c[i], c[c.next(i)]);
        return s;
    }

private:
    std::size_t n_;
    double lambda_ab_ = 0.0;
    double lambda_ba_ = 0.0;
    std::vector<double> phi_a_, phi_b_, psi_, dpsi_, lt_ab_, lt_ba_, r_ab_, r_ba_;
};

inline void require_binary(const LatticeConfig& config) {
    if (config.n_species() != 2) throw ConfigError("Z, L and R are defined for the binary model only");
}

/// log Z = (1/N) sum_i phi_a(i/N) A_i + phi_b(i/N) B_i
inline double log_Z(const LatticeConfig& config, const TestFunctionPair& tf) {
    require_binary(config);
    const std::size_t N = config.n_sites();
    const double inv = 1.0 / static_cast<double>(N);
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double x = static_cast<double>(i) * inv;
        s += config[i] == 1 ? tf.phi_a.f(x) : tf.phi_b.f(x);
    }
    return s * inv;
}

/// L such that Omega[Z] = L Z, summed exactly at finite N.
inline double generator_functional(const LatticeConfig& config, const TestFunctionPair& tf, const RateTable& table) {
    require_binary(config);
    return BondKernel(config.n_sites(), tf, table).generator(config);
}

/// R, the density of the increasing process of U^2 relative to Z^2.
inline double quadratic_variation_rate(const LatticeConfig& config, const TestFunctionPair& tf,
                                       const RateTable& table) {
    require_binary(config);
    return BondKernel(config.n_sites(), tf, table).quadratic_variation(config);
}

/// Tracks Z, L, R and U = Z - Z_0 - int L Z ds along a run, event by event.
/// Z and L are piecewise constant between events, so the time integrals are
/// exact sums over holding intervals.
class MartingaleTracker {
public:
    static constexpr std::uint64_t kResyncInterval = 1 << 14;

    MartingaleTracker(const BondKernel& kernel, const LatticeConfig& config) : kernel_(&kernel) {
        if (kernel.n_sites() != config.n_sites()) throw ConfigError("kernel/configuration size mismatch");
        require_binary(config);
        resync(config);
        z0_ = z_;
    }

    void hold(double dt) noexcept {
        integral_lz_ += l_ * z_ * dt;
        integral_z2r_ += z_ * z_ * r_ * dt;
        t_ += dt;
    }

    /// `config` is the state after the exchange at `bond`.
    void jump(std::size_t bond, const LatticeConfig& config) {
        const std::size_t n = config.n_sites();
        const std::size_t right = config.next(bond);
        // Before the exchange, sites bond and right held each other's labels.
        auto old_at = [&](std::size_t j) -> Species {
            return j == bond ? config[right] : j == right ? config[bond] : config[j];
        };
        const std::size_t left = config.prev(bond);
        const std::size_t cand[3] = {left, bond, right};
        for (std::size_t c = 0; c < 3; ++c) {
            const std::size_t b = cand[c];
            if ((c == 2 && b == left) || (c > 0 && b == cand[c - 1])) continue;
            const std::size_t b2 = config.next(b);
            l_ += kernel_->l_term(b, config[b], config[b2]) - kernel_->l_term(b, old_at(b), old_at(b2));
            r_ += kernel_->r_term(b, config[b], config[b2]) - kernel_->r_term(b, old_at(b), old_at(b2));
        }
        const double step = kernel_->dpsi(bond) / static_cast<double>(n);
        log_z_ += config[right] == 1 ? step : -step;
        z_ = std::exp(log_z_);
        if (++jumps_ % kResyncInterval == 0) resync(config);
    }

    /// Recomputes Z, L, R from scratch.
    void resync(const LatticeConfig& config) {
        log_z_ = kernel_->log_z(config);
        z_ = std::exp(log_z_);
        l_ = kernel_->generator(config);
        r_ = kernel_->quadratic_variation(config);
    }

    double t() const noexcept { return t_; }
    double z() const noexcept { return z_; }
    double z0() const noexcept { return z0_; }
    double l() const noexcept { return l_; }
    double r() const noexcept { return r_; }
    double generator_integral() const noexcept { return integral_lz_; }
    double compensator() const noexcept { return integral_z2r_; }
    double u() const noexcept { return z_ - z0_ - integral_lz_; }

private:
    const BondKernel* kernel_;
    double t_ = 0.0;
    double log_z_ = 0.0, z_ = 1.0, z0_ = 1.0, l_ = 0.0, r_ = 0.0;
    double integral_lz_ = 0.0, integral_z2r_ = 0.0;
    std::uint64_t jumps_ = 0;
};

struct MartingaleTrace {
    std::vector<double> times;
    std::vector<double> Z_values;
    std::vector<double> U_values;
    std::vector<double> R_values;
    std::vector<double> L_values;
    std::vector<double> generator_integral;
};

/// Replays an event-resolved trajectory and records Z, U, R, L and the
/// running generator integral at t_start, after every event, and at t_end.
inline MartingaleTrace martingale_trace(const TrajectoryRecord& traj, const TestFunctionPair& tf,
                                        const RateTable& table) {
    if (!traj.event_resolved) throw ConfigError("event-resolved trajectory required");
    tf.validate();
    LatticeConfig config(traj.initial, traj.n_species);
    const BondKernel kernel(traj.n_sites, tf, table);
    MartingaleTracker tracker(kernel, config);
    MartingaleTrace out;
    double t = traj.t_start;
    auto record = [&] {
        out.times.push_back(t);
        out.Z_values.push_back(tracker.z());
        out.U_values.push_back(tracker.u());
        out.R_values.push_back(tracker.r());
        out.L_values.push_back(tracker.l());
        out.generator_integral.push_back(tracker.generator_integral());
    };
    record();
    for (const auto& ev : traj.events) {
        tracker.hold(ev.dt);
        t += ev.dt;
        config.swap_bond(ev.bond);
        tracker.jump(ev.bond, config);
        record();
    }
    if (traj.t_end > t) {
        tracker.hold(traj.t_end - t);
        t = traj.t_end;
        record();
    }
    return out;
}

inline void write_martingale_csv(std::ostream& os, const MartingaleTrace& m) {
    os << "t,Z,U,R,L,generator_integral\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t k = 0; k < m.times.size(); ++k)
        os << m.times[k] << ',' << m.Z_values[k] << ',' << m.U_values[k] << ',' << m.R_values[k] << ','
           << m.L_values[k] << ',' << m.generator_integral[k] << '\n';
}

} // namespace asep
