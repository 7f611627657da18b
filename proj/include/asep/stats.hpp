#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

namespace asep {

struct Moments {
    double mean = 0.0;
    double variance = 0.0;  ///< unbiased
    std::size_t count = 0;

    double sd() const { return std::sqrt(variance); }
    double standard_error() const { return count > 0 ? std::sqrt(variance / static_cast<double>(count)) : 0.0; }
};

inline Moments moments(std::span<const double> xs) {
    Moments m;
    m.count = xs.size();
    if (xs.empty()) return m;
    double s = 0.0;
    for (double x : xs) s += x;
    m.mean = s / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - m.mean) * (x - m.mean);
        m.variance = ss / static_cast<double>(xs.size() - 1);
    }
    return m;
}

/// Ordinary least squares y = intercept + slope x with a two-sided
/// confidence interval on the slope (Student t, n - 2 dof).
struct LineFit {
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    double slope_se = std::numeric_limits<double>::quiet_NaN();
    double ci_low = std::numeric_limits<double>::quiet_NaN();
    double ci_high = std::numeric_limits<double>::quiet_NaN();
    std::size_t points = 0;
    bool valid = false;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y, double confidence = 0.95) {
    LineFit f;
    f.points = x.size();
    if (x.size() < 2 || x.size() != y.size()) return f;
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0.0) return f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.valid = true;
    if (x.size() > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double e = y[i] - f.intercept - f.slope * x[i];
            rss += e * e;
        }
        f.slope_se = std::sqrt(rss / (n - 2.0) / sxx);
        const boost::math::students_t dist(n - 2.0);
        const double q = boost::math::quantile(dist, 0.5 + confidence / 2.0);
        f.ci_low = f.slope - q * f.slope_se;
        f.ci_high = f.slope + q * f.slope_se;
    }
    return f;
}

/// Slope of log y against log x.
inline LineFit fit_loglog(std::span<const double> x, std::span<const double> y) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    return fit_line(lx, ly);
}

} // namespace asep
