#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "asep/error.hpp"

namespace asep {

/// A C^2 function on the unit circle with its first two derivatives.
struct SmoothFunction {
    std::function<double(double)> f;
    std::function<double(double)> d1;
    std::function<double(double)> d2;
    std::string name;

    double operator()(double x) const { return f(x); }
};

inline SmoothFunction constant_fn(double c) {
    return {[c](double) { return c; }, [](double) { return 0.0; }, [](double) { return 0.0; },
            "const:" + std::to_string(c)};
}

/// sin(2 pi k x)
inline SmoothFunction sin_mode(int k) {
    const double w = 2.0 * std::numbers::pi * k;
    return {[w](double x) { return std::sin(w * x); }, [w](double x) { return w * std::cos(w * x); },
            [w](double x) { return -w * w * std::sin(w * x); }, "sin:" + std::to_string(k)};
}

/// cos(2 pi k x)
inline SmoothFunction cos_mode(int k) {
    const double w = 2.0 * std::numbers::pi * k;
    return {[w](double x) { return std::cos(w * x); }, [w](double x) { return -w * std::sin(w * x); },
            [w](double x) { return -w * w * std::cos(w * x); }, "cos:" + std::to_string(k)};
}

/// exp((cos(2 pi (x - center)) - 1) / width^2): a smooth periodic bump of
/// height 1 at `center`.
inline SmoothFunction periodic_bump(double center, double width) {
    if (!(width > 0.0)) throw ConfigError("bump width must be positive");
    constexpr double tau = 2.0 * std::numbers::pi;
    const double s = 1.0 / (width * width);
    auto f = [=](double x) { return std::exp((std::cos(tau * (x - center)) - 1.0) * s); };
    auto d1 = [=](double x) { return f(x) * (-tau * s * std::sin(tau * (x - center))); };
    auto d2 = [=](double x) {
        const double g = -tau * s * std::sin(tau * (x - center));
        return f(x) * (g * g - tau * tau * s * std::cos(tau * (x - center)));
    };
    return {f, d1, d2, "bump:" + std::to_string(center) + "," + std::to_string(width)};
}

/// Periodic cubic spline through samples y_j at x_j = j/M.
class PeriodicSpline {
public:
    explicit PeriodicSpline(std::vector<double> samples) : y_(std::move(samples)) {
        const std::size_t m = y_.size();
        if (m < 3) throw ConfigError("periodic spline needs at least 3 samples");
        h_ = 1.0 / static_cast<double>(m);
        // m_{j-1} + 4 m_j + m_{j+1} = 6 (y_{j+1} - 2 y_j + y_{j-1}) / h^2, cyclic.
        std::vector<double> rhs(m);
        for (std::size_t j = 0; j < m; ++j)
            rhs[j] = 6.0 * (y_[(j + 1) % m] - 2.0 * y_[j] + y_[(j + m - 1) % m]) / (h_ * h_);
        m_ = solve_cyclic(rhs);
    }

    double value(double x) const {
        auto [j, t] = locate(x);
        const double a = 1.0 - t;
        const std::size_t k = (j + 1) % y_.size();
        return a * y_[j] + t * y_[k] + h_ * h_ / 6.0 * ((a * a * a - a) * m_[j] + (t * t * t - t) * m_[k]);
    }

    double derivative(double x) const {
        auto [j, t] = locate(x);
        const double a = 1.0 - t;
        const std::size_t k = (j + 1) % y_.size();
        return (y_[k] - y_[j]) / h_ + h_ / 6.0 * (-(3.0 * a * a - 1.0) * m_[j] + (3.0 * t * t - 1.0) * m_[k]);
    }

    double second_derivative(double x) const {
        auto [j, t] = locate(x);
        return (1.0 - t) * m_[j] + t * m_[(j + 1) % y_.size()];
    }

private:
    std::pair<std::size_t, double> locate(double x) const {
        double u = x - std::floor(x);
        double pos = u / h_;
        auto j = static_cast<std::size_t>(pos);
        if (j >= y_.size()) j = y_.size() - 1;
        return {j, pos - static_cast<double>(j)};
    }

    // Cyclic system with diagonal 4 and off-diagonals 1 (Sherman-Morrison).
    static std::vector<double> solve_cyclic(const std::vector<double>& rhs) {
        const std::size_t n = rhs.size();
        const double gamma = -4.0;
        std::vector<double> diag(n, 4.0);
        diag[0] = 4.0 - gamma;
        diag[n - 1] = 4.0 - 1.0 / gamma;
        auto thomas = [&](std::vector<double> d) {
            std::vector<double> c(n, 1.0), b = diag;
            for (std::size_t i = 1; i < n; ++i) {
                const double w = 1.0 / b[i - 1];
                b[i] -= w * c[i - 1];
                d[i] -= w * d[i - 1];
            }
            std::vector<double> x(n);
            x[n - 1] = d[n - 1] / b[n - 1];
            for (std::size_t i = n - 1; i-- > 0;) x[i] = (d[i] - c[i] * x[i + 1]) / b[i];
            return x;
        };
        std::vector<double> u(n, 0.0);
        u[0] = gamma;
        u[n - 1] = 1.0;
        const auto x = thomas(rhs);
        const auto z = thomas(u);
        const double fact = (x[0] + x[n - 1] / gamma) / (1.0 + z[0] + z[n - 1] / gamma);
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - fact * z[i];
        return out;
    }

    std::vector<double> y_;
    std::vector<double> m_;
    double h_ = 0.0;
};

/// Reads real numbers separated by newlines, commas or whitespace.
inline std::vector<double> read_samples(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open sample file " + path);
    std::vector<double> v;
    std::string tok;
    std::stringstream all;
    all << f.rdbuf();
    std::string text = all.str();
    for (char& c : text)
        if (c == ',' || c == ';') c = ' ';
    std::istringstream is(text);
    while (is >> tok) {
        try {
            v.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ConfigError("sample file " + path + ": '" + tok + "' is not a number");
        }
    }
    if (v.empty()) throw ConfigError("sample file " + path + " is empty");
    return v;
}

inline SmoothFunction spline_fn(std::vector<double> samples, std::string name = "spline") {
    auto s = std::make_shared<const PeriodicSpline>(std::move(samples));
    return {[s](double x) { return s->value(x); }, [s](double x) { return s->derivative(x); },
            [s](double x) { return s->second_derivative(x); }, std::move(name)};
}

/// Catalog lookup: "zero", "const:c", "sin:k", "cos:k", "bump:center,width",
/// "spline:path".
inline SmoothFunction parse_function(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::string arg = colon == std::string::npos ? std::string{} : spec.substr(colon + 1);
    try {
        if (kind == "zero") return constant_fn(0.0);
        if (kind == "const") return constant_fn(std::stod(arg));
        if (kind == "sin") return sin_mode(std::stoi(arg));
        if (kind == "cos") return cos_mode(std::stoi(arg));
        if (kind == "bump") {
            const auto comma = arg.find(',');
            if (comma == std::string::npos) throw ConfigError("bump needs center,width");
            return periodic_bump(std::stod(arg.substr(0, comma)), std::stod(arg.substr(comma + 1)));
        }
        if (kind == "spline") return spline_fn(read_samples(arg), spec);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("malformed test function '" + spec + "'");
    }
    throw ConfigError("unknown test function '" + spec + "' (expected zero, const:c, sin:k, cos:k, bump:c,w, spline:path)");
}

} // namespace asep
