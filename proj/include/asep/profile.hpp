#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "asep/error.hpp"
#include "asep/functions.hpp"
#include "asep/lattice.hpp"

namespace asep {

namespace detail {
inline std::vector<double> split_numbers(const std::string& s, const std::string& what) {
    std::vector<double> v;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        try {
            std::size_t pos = 0;
            v.push_back(std::stod(tok, &pos));
        } catch (const std::exception&) {
            throw ConfigError("malformed " + what + ": '" + s + "'");
        }
    }
    return v;
}
} // namespace detail

/// Density function from a profile spec:
///   const:c                       rho = c
///   sin:amplitude,k,mean[,shift]  rho = mean + amplitude sin(2 pi k (x - shift))
///   file:path                     periodic linear interpolation of samples at j/M
inline std::function<double(double)> parse_density(const std::string& spec) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos)
        throw ConfigError("profile '" + spec + "' must be const:c, sin:amplitude,k,mean or file:path");
    const std::string kind = spec.substr(0, colon);
    const std::string arg = spec.substr(colon + 1);
    if (kind == "const") {
        const auto v = detail::split_numbers(arg, "const profile");
        if (v.size() != 1) throw ConfigError("const profile takes one value");
        const double c = v[0];
        return [c](double) { return c; };
    }
    if (kind == "sin") {
        const auto v = detail::split_numbers(arg, "sin profile");
        if (v.size() != 3 && v.size() != 4) throw ConfigError("sin profile takes amplitude,k,mean[,shift]");
        const double amp = v[0], mean = v[2], shift = v.size() == 4 ? v[3] : 0.0;
        const double w = 2.0 * std::numbers::pi * v[1];
        return [=](double x) { return mean + amp * std::sin(w * (x - shift)); };
    }
    if (kind == "file") {
        auto samples = std::make_shared<const std::vector<double>>(read_samples(arg));
        return [samples](double x) {
            const auto& s = *samples;
            const double u = (x - std::floor(x)) * static_cast<double>(s.size());
            auto j = static_cast<std::size_t>(u);
            if (j >= s.size()) j = s.size() - 1;
            const double f = u - static_cast<double>(j);
            return (1.0 - f) * s[j] + f * s[(j + 1) % s.size()];
        };
    }
    throw ConfigError("unknown profile kind '" + kind + "'");
}

/// Binary profile from the particle density spec.
inline InitialProfile parse_binary_profile(const std::string& spec) {
    return InitialProfile::binary(parse_density(spec));
}

/// n-species profile: specs for species 0..n-2; species n-1 takes the
/// remainder unless all n are given. An empty list gives the uniform profile.
inline InitialProfile parse_species_profile(const std::vector<std::string>& specs, std::size_t n_species) {
    if (specs.empty()) return InitialProfile::uniform(n_species);
    if (specs.size() != n_species - 1 && specs.size() != n_species)
        throw ConfigError("need " + std::to_string(n_species - 1) + " species profiles (the last is the remainder)");
    InitialProfile p;
    std::vector<std::function<double(double)>> fns;
    for (const auto& s : specs) fns.push_back(parse_density(s));
    if (specs.size() == n_species) return InitialProfile{std::move(fns)};
    auto shared = std::make_shared<const std::vector<std::function<double(double)>>>(fns);
    p.density_fns = fns;
    p.density_fns.push_back([shared](double x) {
        double s = 1.0;
        for (const auto& f : *shared) s -= f(x);
        return s;
    });
    return p;
}

} // namespace asep
