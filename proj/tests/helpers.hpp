#pragma once

#include "peq/expr.hpp"
#include "peq/jet.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace helpers {

// |a - b| measured against the larger magnitude, floored at 1 so values near
// zero are compared absolutely.
inline bool close(double a, double b, double tol) {
    const double scale = std::max({1.0, std::fabs(a), std::fabs(b)});
    return std::fabs(a - b) <= tol * scale;
}

// Central finite differences for a mixed partial derivative; differentiates
// one axis at a time, recursively.  Only trustworthy for low orders.
inline double fd_partial(const std::function<double(const std::vector<double>&)>& f,
                         std::vector<double> point, const std::vector<int>& alpha, double h) {
    int axis = -1;
    for (std::size_t i = 0; i < alpha.size(); ++i)
        if (alpha[i] > 0) { axis = static_cast<int>(i); break; }
    if (axis < 0) return f(point);
    std::vector<int> lower = alpha;
    --lower[static_cast<std::size_t>(axis)];
    std::vector<double> hi = point, lo = point;
    hi[static_cast<std::size_t>(axis)] += h;
    lo[static_cast<std::size_t>(axis)] -= h;
    return (fd_partial(f, hi, lower, h) - fd_partial(f, lo, lower, h)) / (2.0 * h);
}

// A polynomial held as an explicit exponent-tuple -> coefficient list; the
// ground truth against which jet extraction and parsing are checked.
struct Poly {
    int dim = 0;
    std::vector<std::pair<std::vector<int>, double>> terms;

    double eval(const std::vector<double>& x) const {
        double acc = 0.0;
        for (const auto& [e, c] : terms) {
            double t = c;
            for (int i = 0; i < dim; ++i)
                for (int p = 0; p < e[static_cast<std::size_t>(i)]; ++p) t *= x[static_cast<std::size_t>(i)];
            acc += t;
        }
        return acc;
    }

    Poly partial(int axis) const {
        Poly out;
        out.dim = dim;
        for (const auto& [e, c] : terms) {
            if (e[static_cast<std::size_t>(axis)] == 0) continue;
            std::vector<int> d = e;
            --d[static_cast<std::size_t>(axis)];
            out.terms.emplace_back(std::move(d), c * e[static_cast<std::size_t>(axis)]);
        }
        return out;
    }

    Poly partial(const std::vector<int>& alpha) const {
        Poly out = *this;
        for (int i = 0; i < dim; ++i)
            for (int p = 0; p < alpha[static_cast<std::size_t>(i)]; ++p) out = out.partial(i);
        return out;
    }

    // Source text that parses back to this polynomial; exercises ^, *, +.
    std::string to_source(const peq::Chart& chart) const {
        if (terms.empty()) return "0";
        std::string s;
        for (const auto& [e, c] : terms) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", c);
            std::string term = "(" + std::string(buf) + ")";
            for (int i = 0; i < dim; ++i) {
                const int p = e[static_cast<std::size_t>(i)];
                if (p == 0) continue;
                term += " * " + chart.coords[static_cast<std::size_t>(i)];
                if (p > 1) term += "^" + std::to_string(p);
            }
            s += s.empty() ? term : " + " + term;
        }
        return s;
    }
};

// Dense random polynomial of total degree <= deg with small-integer-over-2^k
// coefficients, so double arithmetic on it is exact.
inline Poly random_poly(std::mt19937& rng, int dim, int deg) {
    Poly p;
    p.dim = dim;
    std::uniform_int_distribution<int> num(-8, 8);
    std::vector<int> e(static_cast<std::size_t>(dim), 0);
    std::function<void(int, int)> walk = [&](int axis, int remaining) {
        if (axis == dim) {
            const int n = num(rng);
            if (n != 0) p.terms.emplace_back(e, n / 4.0);
            return;
        }
        for (int v = 0; v <= remaining; ++v) {
            e[static_cast<std::size_t>(axis)] = v;
            walk(axis + 1, remaining - v);
        }
        e[static_cast<std::size_t>(axis)] = 0;
    };
    walk(0, deg);
    return p;
}

inline std::vector<double> random_point(std::mt19937& rng, int dim, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> p(static_cast<std::size_t>(dim));
    for (auto& v : p) v = d(rng);
    return p;
}

} // namespace helpers
