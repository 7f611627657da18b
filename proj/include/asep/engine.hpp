#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "asep/error.hpp"
#include "asep/keyvalue.hpp"
#include "asep/lattice.hpp"
#include "asep/random.hpp"
#include "asep/rates.hpp"

namespace asep {

/// Binary-indexed tree over the N bond weights
/// weight(i) = rate(occupancy[i], occupancy[i+1]).
///
/// Sampling and single-bond updates are O(log N). Incremental updates add
/// deltas to the partial sums, so the cached total drifts by rounding; it is
/// rebuilt exactly every 2^20 updates.
class RateIndex {
public:
    static constexpr std::uint64_t kRebuildInterval = std::uint64_t{1} << 20;

    RateIndex() = default;

    RateIndex(const LatticeConfig& config, const RateTable& table) {
        if (table.n_species() != config.n_species())
            throw ConfigError("rate table has " + std::to_string(table.n_species()) +
                              " species but configuration has " + std::to_string(config.n_species()));
        const std::size_t n = config.n_sites();
        weights_.resize(n);
        for (std::size_t i = 0; i < n; ++i) weights_[i] = table(config[i], config[config.next(i)]);
        top_bit_ = std::bit_floor(n);
        rebuild();
    }

    std::size_t size() const noexcept { return weights_.size(); }
    double weight(std::size_t bond) const noexcept { return weights_[bond]; }
    std::span<const double> weights() const noexcept { return weights_; }
    double total_rate() const noexcept { return total_; }

    /// Recomputes every partial sum and the total from the stored weights.
    void rebuild() {
        const std::size_t n = weights_.size();
        tree_.assign(n + 1, 0.0);
        for (std::size_t i = 1; i <= n; ++i) {
            tree_[i] += weights_[i - 1];
            const std::size_t parent = i + (i & (~i + 1));
            if (parent <= n) tree_[parent] += tree_[i];
        }
        total_ = 0.0;
        for (double w : weights_) total_ += w;
        if (total_ < 0.0) total_ = 0.0;
        updates_since_rebuild_ = 0;
    }

    void set_weight(std::size_t bond, double w) {
        const double delta = w - weights_[bond];
        if (delta == 0.0) return;
        weights_[bond] = w;
        for (std::size_t i = bond + 1; i < tree_.size(); i += i & (~i + 1)) tree_[i] += delta;
        total_ += delta;
        if (++updates_since_rebuild_ >= kRebuildInterval) rebuild();
    }

    /// Bond i with prefix(i) <= target < prefix(i+1), for target in [0, total).
    /// Returns size() if rounding pushed target past the last partial sum.
    std::size_t find(double target) const noexcept {
        std::size_t pos = 0;
        for (std::size_t step = top_bit_; step != 0; step >>= 1) {
            const std::size_t nxt = pos + step;
            if (nxt < tree_.size() && tree_[nxt] <= target) {
                pos = nxt;
                target -= tree_[nxt];
            }
        }
        return pos;
    }

    /// Samples a bond with probability weight(i) / total_rate().
    template <class Rng>
    std::size_t sample(Rng& rng) const {
        for (;;) {
            const std::size_t i = find(rng.uniform() * total_);
            if (i < weights_.size() && weights_[i] > 0.0) return i;
        }
    }

private:
    std::vector<double> weights_;
    std::vector<double> tree_;
    double total_ = 0.0;
    std::size_t top_bit_ = 0;
    std::uint64_t updates_since_rebuild_ = 0;
};

struct SimClock {
    double t = 0.0;
    std::uint64_t event_count = 0;
};

struct EventRecord {
    std::size_t bond;
    double dt;  ///< holding time that preceded the event
};

/// Refreshes the (at most 3) bond weights touched by an exchange at `bond`.
inline void refresh_after_swap(const LatticeConfig& config, RateIndex& index, const RateTable& table,
                               std::size_t bond) {
    for (std::size_t b : {config.prev(bond), bond, config.next(bond)})
        index.set_weight(b, table(config[b], config[config.next(b)]));
}

/// Samples the next event of the jump chain without applying it.
/// nullopt when no exchange has positive rate (frozen).
template <class Rng>
std::optional<EventRecord> propose(const RateIndex& index, Rng& rng) {
    const double total = index.total_rate();
    if (!(total > 0.0)) return std::nullopt;
    const double dt = -std::log(rng.uniform_pos()) / total;
    return EventRecord{index.sample(rng), dt};
}

inline void apply(LatticeConfig& config, RateIndex& index, const RateTable& table, SimClock& clock,
                  const EventRecord& ev) {
    config.swap_bond(ev.bond);
    refresh_after_swap(config, index, table, ev.bond);
    clock.t += ev.dt;
    ++clock.event_count;
}

/// One exchange X^k X^l -> X^l X^k. Returns nullopt (and leaves the clock
/// untouched) when the configuration is frozen.
template <class Rng>
std::optional<EventRecord> step(LatticeConfig& config, RateIndex& index, const RateTable& table, SimClock& clock,
                                Rng& rng) {
    auto ev = propose(index, rng);
    if (ev) apply(config, index, table, clock, *ev);
    return ev;
}

/// Run outcome: snapshots at requested times, and optionally every event.
struct TrajectoryRecord {
    std::size_t n_sites = 0;
    std::size_t n_species = 0;
    double t_start = 0.0;
    double t_end = 0.0;
    bool frozen = false;
    std::uint64_t event_count = 0;

    std::vector<double> times;
    std::vector<std::vector<Species>> snapshots;

    bool event_resolved = false;
    std::vector<Species> initial;
    std::vector<EventRecord> events;
};

struct NullObserver {
    void hold(double) noexcept {}
    void jump(std::size_t, const LatticeConfig&) noexcept {}
};

/// Observers see every holding interval and every executed exchange.
template <class T>
concept RunObserver = requires(T& o, double dt, std::size_t bond, const LatticeConfig& c) {
    o.hold(dt);
    o.jump(bond, c);
};

/// Advances until clock.t reaches t_end or the chain freezes.
///
/// The state recorded for a snapshot time s is the one whose holding interval
/// [t_k, t_{k+1}) contains s. An event proposed beyond t_end is discarded and
/// the clock is set to t_end; by memorylessness the law at t_end is exact.
template <class Rng, RunObserver Observer = NullObserver>
TrajectoryRecord run_until(LatticeConfig& config, RateIndex& index, const RateTable& table, SimClock& clock,
                           Rng& rng, double t_end, std::span<const double> snapshot_times,
                           bool record_events = false, Observer&& observer = Observer{}) {
    if (t_end < clock.t) throw ConfigError("t_end precedes the current time");
    for (std::size_t k = 0; k < snapshot_times.size(); ++k) {
        if (snapshot_times[k] < clock.t || snapshot_times[k] > t_end)
            throw ConfigError("snapshot time " + std::to_string(snapshot_times[k]) + " outside [t, t_end]");
        if (k > 0 && snapshot_times[k] < snapshot_times[k - 1])
            throw ConfigError("snapshot times must be sorted");
    }

    TrajectoryRecord rec;
    rec.n_sites = config.n_sites();
    rec.n_species = config.n_species();
    rec.t_start = clock.t;
    rec.t_end = t_end;
    rec.event_resolved = record_events;
    if (record_events) rec.initial.assign(config.occupancy().begin(), config.occupancy().end());

    std::size_t next_snap = 0;
    auto record_until = [&](double t_limit, bool inclusive) {
        while (next_snap < snapshot_times.size() &&
               (snapshot_times[next_snap] < t_limit || (inclusive && snapshot_times[next_snap] <= t_limit))) {
            rec.times.push_back(snapshot_times[next_snap]);
            rec.snapshots.emplace_back(config.occupancy().begin(), config.occupancy().end());
            ++next_snap;
        }
    };

    const std::uint64_t events_before = clock.event_count;
    for (;;) {
        auto ev = propose(index, rng);
        if (!ev) {
            rec.frozen = true;
            break;
        }
        if (clock.t + ev->dt >= t_end) break;
        record_until(clock.t + ev->dt, false);
        observer.hold(ev->dt);
        apply(config, index, table, clock, *ev);
        observer.jump(ev->bond, config);
        if (record_events) rec.events.push_back(*ev);
    }
    observer.hold(t_end - clock.t);
    clock.t = t_end;
    record_until(t_end, true);
    rec.event_count = clock.event_count - events_before;
    return rec;
}

/// Writes one row per snapshot: t, then N occupancy labels.
inline void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& rec) {
    os << 't';
    for (std::size_t i = 0; i < rec.n_sites; ++i) os << ",s" << i;
    os << '\n';
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t k = 0; k < rec.times.size(); ++k) {
        os << rec.times[k];
        for (auto s : rec.snapshots[k]) os << ',' << int(s);
        os << '\n';
    }
}

/// Records N, n, model parameters and rates into a metadata sidecar.
inline void describe_table(KeyValue& meta, const RateTable& table) {
    meta.set("n", table.n_species());
    if (const auto* b = std::get_if<BinaryParams>(&table.macro())) {
        meta.set("model", "binary");
        meta.set("lambda", b->lambda);
        meta.set("mu", b->mu);
    } else if (const auto* s = std::get_if<NSpeciesParams>(&table.macro())) {
        meta.set("model", "nspecies");
        meta.set("D", s->D);
        for (std::size_t k = 0; k < s->alpha.size(); ++k)
            for (std::size_t l = 0; l < s->alpha.size(); ++l)
                if (k != l) meta.set("alpha_" + std::to_string(k) + "_" + std::to_string(l), s->alpha(k, l));
    } else {
        meta.set("model", "explicit");
    }
    for (std::size_t k = 0; k < table.n_species(); ++k)
        for (std::size_t l = 0; l < table.n_species(); ++l)
            if (k != l) meta.set("rate_" + std::to_string(k) + "_" + std::to_string(l), table(k, l));
}

/// Uniformized dynamics: attempts arrive as a Poisson process of rate
/// N * max_rate and each picks a uniform bond. Equal in law to the jump chain
/// driven by RateIndex, with O(1) work per attempt; used for large ensembles
/// where individual event times are not needed.
///
/// Each rate splits as rate(k,l) = s + (rate(k,l) - s) with s the smallest
/// exchange rate between distinct species. An attempt is a stirring move with
/// probability s / max_rate: the bond is swapped whatever it holds (a swap of
/// equal species changes nothing), so no acceptance test is needed. The other
/// attempts accept with probability (rate(k,l) - s) / (max_rate - s); their
/// positions in the attempt sequence are drawn as geometric gaps. When
/// stirring is a small share of the attempts, plain thinning with 32-bit
/// acceptance thresholds is cheaper and used instead.
///
/// Bond indices carry a relative bias below N / 2^32.
class UniformizedSampler {
public:
    /// Stirring is used when s / max_rate >= stir_threshold.
    UniformizedSampler(const RateTable& table, std::size_t n_sites, double stir_threshold = 0.9)
        : n_species_(table.n_species()), n_sites_(n_sites), max_rate_(table.max_rate()) {
        if (n_sites >= (std::size_t{1} << 32)) throw ConfigError("N too large for the uniformized sampler");
        thresholds_.resize(n_species_ * n_species_, 0);
        residual_.resize(n_species_ * n_species_, 0.0);
        if (!(max_rate_ > 0.0)) return;
        double s = max_rate_;
        for (std::size_t k = 0; k < n_species_; ++k)
            for (std::size_t l = 0; l < n_species_; ++l) {
                thresholds_[k * n_species_ + l] =
                    static_cast<std::uint64_t>(std::llround(table(k, l) / max_rate_ * 4294967296.0));
                if (k != l) s = std::min(s, table(k, l));
            }
        stir_fraction_ = s / max_rate_;
        use_stirring_ = stir_fraction_ >= stir_threshold;
        log_stir_fraction_ = std::log(stir_fraction_);
        if (max_rate_ > s)
            for (std::size_t k = 0; k < n_species_; ++k)
                for (std::size_t l = 0; l < n_species_; ++l)
                    if (k != l) residual_[k * n_species_ + l] = (table(k, l) - s) / (max_rate_ - s);
    }

    double attempt_rate() const noexcept { return static_cast<double>(n_sites_) * max_rate_; }
    double stir_fraction() const noexcept { return stir_fraction_; }
    bool uses_stirring() const noexcept { return use_stirring_; }

    /// Runs the attempts falling in an interval of the given length; returns
    /// the number of executed exchanges.
    template <class Rng>
    std::uint64_t advance(LatticeConfig& config, Rng& rng, double duration) const {
        if (config.n_sites() != n_sites_ || config.n_species() != n_species_)
            throw ConfigError("configuration does not match the sampler");
        const double mean = attempt_rate() * duration;
        if (!(mean > 0.0)) return 0;
        std::uint64_t accepted = 0;
        // Poisson additivity: split huge means so the sampler stays in its
        // well-conditioned range.
        constexpr double kChunk = 1e9;
        double remaining = mean;
        while (remaining > 0.0) {
            const double m = std::min(remaining, kChunk);
            remaining -= m;
            std::poisson_distribution<long long> poisson(m);
            accepted += run_attempts(config, rng, static_cast<std::uint64_t>(poisson(rng)));
        }
        return accepted;
    }

    template <class Rng>
    std::uint64_t run_attempts(LatticeConfig& config, Rng& rng, std::uint64_t attempts) const {
        if (use_stirring_) return stirred_attempts(config, rng, attempts);
        switch (n_species_) {
            case 2: return attempt_loop<2>(config, rng, attempts);
            case 3: return attempt_loop<3>(config, rng, attempts);
            default: return attempt_loop<0>(config, rng, attempts);
        }
    }

private:
    /// NS > 0 fixes the species count at compile time.
    template <unsigned NS, class Rng>
    std::uint64_t attempt_loop(LatticeConfig& config, Rng& rng, std::uint64_t attempts) const {
        Species* occ = config.mutable_occupancy().data();
        const std::uint32_t n = static_cast<std::uint32_t>(n_sites_);
        const std::uint64_t* thr = thresholds_.data();
        const unsigned ns = NS > 0 ? NS : static_cast<unsigned>(n_species_);
        // Local copy: stores through the byte-sized occupancy may alias the
        // generator state and would force it through memory every attempt.
        Rng g = rng;
        std::uint64_t accepted = 0;
        for (std::uint64_t k = 0; k < attempts; ++k) {
            const std::uint64_t r = g();
            const std::uint32_t i = Xoshiro256::bounded32(static_cast<std::uint32_t>(r >> 32), n);
            const std::uint32_t j = (i + 1 == n) ? 0u : i + 1;
            const unsigned a = occ[i];
            const unsigned b = occ[j];
            const unsigned fire = static_cast<std::uint64_t>(static_cast<std::uint32_t>(r)) < thr[a * ns + b];
            const unsigned mask = 0u - fire;
            const unsigned x = (a ^ b) & mask;
            occ[i] = static_cast<Species>(a ^ x);
            occ[j] = static_cast<Species>(b ^ x);
            accepted += fire;
        }
        rng = g;
        return accepted;
    }

    template <class Rng>
    std::uint64_t stirred_attempts(LatticeConfig& config, Rng& rng, std::uint64_t attempts) const {
        std::uint64_t changed = 0;
        while (attempts > 0) {
            // Stirring moves before the next residual attempt: P(gap >= g) = f^g.
            std::uint64_t run = attempts;
            if (stir_fraction_ < 1.0) {
                const double gap = std::floor(std::log(rng.uniform_pos()) / log_stir_fraction_);
                if (gap < static_cast<double>(attempts)) run = static_cast<std::uint64_t>(gap);
            }
            changed += stir(config, rng, run);
            attempts -= run;
            if (attempts == 0) break;
            --attempts;
            const std::uint32_t n = static_cast<std::uint32_t>(n_sites_);
            const std::uint32_t i = Xoshiro256::bounded32(static_cast<std::uint32_t>(rng() >> 32), n);
            const std::size_t j = config.next(i);
            if (rng.uniform() < residual_[config[i] * n_species_ + config[j]]) {
                config.swap_bond(i);
                ++changed;
            }
        }
        return changed;
    }

    /// Unconditional swaps at uniform bonds.
    template <class Rng>
    std::uint64_t stir(LatticeConfig& config, Rng& rng, std::uint64_t count) const {
        Species* occ = config.mutable_occupancy().data();
        const std::uint32_t n = static_cast<std::uint32_t>(n_sites_);
        Rng g = rng;
        std::uint64_t changed = 0;
        auto swap_at = [&](std::uint32_t bits) {
            const std::uint32_t i = Xoshiro256::bounded32(bits, n);
            const std::uint32_t j = (i + 1 == n) ? 0u : i + 1;
            const Species a = occ[i];
            const Species b = occ[j];
            occ[i] = b;
            occ[j] = a;
            changed += a != b;
        };
        std::uint64_t k = 0;
        if (std::has_single_bit(n) && n <= (1u << 16)) {
            // Masked 16-bit chunks are exactly uniform here: four bonds per draw.
            const std::uint32_t mask = n - 1;
            auto swap_masked = [&](std::uint32_t i) {
                const std::uint32_t j = (i + 1) & mask;
                const Species a = occ[i];
                const Species b = occ[j];
                occ[i] = b;
                occ[j] = a;
                changed += a != b;
            };
            for (; k + 3 < count; k += 4) {
                const std::uint64_t r = g();
                swap_masked(static_cast<std::uint32_t>(r) & mask);
                swap_masked(static_cast<std::uint32_t>(r >> 16) & mask);
                swap_masked(static_cast<std::uint32_t>(r >> 32) & mask);
                swap_masked(static_cast<std::uint32_t>(r >> 48) & mask);
            }
        }
        for (; k + 1 < count; k += 2) {
            const std::uint64_t r = g();
            swap_at(static_cast<std::uint32_t>(r >> 32));
            swap_at(static_cast<std::uint32_t>(r));
        }
        if (k < count) swap_at(static_cast<std::uint32_t>(g() >> 32));
        rng = g;
        return changed;
    }

    std::size_t n_species_;
    std::size_t n_sites_;
    double max_rate_;
    double stir_fraction_ = 0.0;
    double log_stir_fraction_ = 0.0;
    bool use_stirring_ = false;
    std::vector<std::uint64_t> thresholds_;
    std::vector<double> residual_;
};

} // namespace asep
