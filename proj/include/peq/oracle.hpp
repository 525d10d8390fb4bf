#pragma once

#include "peq/quantization.hpp"
#include "peq/rational.hpp"

#include <map>
#include <string>
#include <vector>

namespace peq {

/// One monomial in the formal operator calculus used to audit the coefficient
/// recursion.  A term tracks
///   - n_{-1}: bare one-form factors created by the gauged connection,
///   - n_t (t >= 0): curvature-type factors that have been differentiated t times,
///   - q: derivatives that reached the operand.
/// exps[0] holds n_{-1} and exps[t+1] holds n_t, with trailing zeros trimmed so
/// equal monomials compare equal.  The operator degree of a term is
/// n_{-1} + sum_t (t+2) n_t + q.
struct TermKey {
    std::vector<int> exps;
    int q = 0;

    int n(int j) const {
        const std::size_t i = static_cast<std::size_t>(j + 1);
        return i < exps.size() ? exps[i] : 0;
    }

    TermKey with_n(int j, int delta) const {
        TermKey out = *this;
        const std::size_t i = static_cast<std::size_t>(j + 1);
        if (out.exps.size() <= i) out.exps.resize(i + 1, 0);
        out.exps[i] += delta;
        while (!out.exps.empty() && out.exps.back() == 0) out.exps.pop_back();
        return out;
    }

    TermKey with_q(int delta) const {
        TermKey out = *this;
        out.q += delta;
        return out;
    }

    int degree() const {
        int d = q;
        for (std::size_t i = 0; i < exps.size(); ++i)
            d += exps[i] * (i == 0 ? 1 : static_cast<int>(i) + 1);
        return d;
    }

    auto operator<=>(const TermKey&) const = default;
};

inline std::string to_string(const TermKey& key) {
    std::string s;
    if (key.n(-1) > 0) s += "t^" + std::to_string(key.n(-1)) + " ";
    for (std::size_t i = 1; i < key.exps.size(); ++i)
        if (key.exps[i] > 0) s += "r" + std::to_string(i - 1) + "^" + std::to_string(key.exps[i]) + " ";
    s += "D^" + std::to_string(key.q);
    return s;
}

using TermMap = std::map<TermKey, Rational>;

/// The two operator sides share one formal structure; they differ only in the
/// base constant entering every coefficient.
struct OracleParams {
    Rational base;

    /// Argument side: base = -lambda (m+1).
    static OracleParams argument_side(int m, const Rational& lambda) {
        return OracleParams{-lambda * Rational(m + 1)};
    }

    /// Symbol side: base = (m+1) gamma_{2k-1} = m + 2k - 1 - (m+1) delta.
    static OracleParams symbol_side(int m, int k, const Rational& delta) {
        return OracleParams{Rational(m + 2 * k - 1) - Rational(m + 1) * delta};
    }
};

namespace detail {
inline void add_term(TermMap& into, const TermKey& key, const Rational& c) {
    if (c == 0) return;
    auto [it, inserted] = into.emplace(key, c);
    if (!inserted) {
        it->second += c;
        if (it->second == 0) into.erase(it);
    }
}
} // namespace detail

/// One step of the gauged recursion from stage l to stage l+1.  Branches:
///   - create a bare factor with coefficient (base - 2l + n_{-1}),
///   - send a derivative to the operand with coefficient 1,
///   - differentiate a bare factor into an r0 factor with coefficient n_{-1},
///   - differentiate an r_t factor into r_{t+1} with coefficient n_t.
inline TermMap recursion_step(const TermMap& terms, const OracleParams& p, int l) {
    TermMap out;
    for (const auto& [key, c] : terms) {
        detail::add_term(out, key.with_n(-1, +1), c * (p.base - Rational(2 * l) + Rational(key.n(-1))));
        detail::add_term(out, key.with_q(+1), c);
        if (key.n(-1) > 0)
            detail::add_term(out, key.with_n(-1, -1).with_n(0, +1), c * Rational(key.n(-1)));
        for (std::size_t i = 1; i < key.exps.size(); ++i)
            if (key.exps[i] > 0) {
                const int t = static_cast<int>(i) - 1;
                detail::add_term(out, key.with_n(t, -1).with_n(t + 1, +1), c * Rational(key.exps[i]));
            }
    }
    return out;
}

/// The recursion after l steps, starting from the pure operand.
inline TermMap recursion_stage(const OracleParams& p, int l) {
    TermMap cur;
    cur.emplace(TermKey{}, Rational(1));
    for (int stage = 0; stage < l; ++stage) cur = recursion_step(cur, p, stage);
    return cur;
}

/// The degree-l component of the engine's graded sum over powers of
/// (derivation + order-two correction), in the same formal calculus: the
/// derivation raises q or differentiates r factors; the correction multiplies
/// a degree-j operand by an r0 factor with coefficient (base - j)(j + 1).
inline TermMap engine_stage(const OracleParams& p, int l) {
    TermMap cur;
    cur.emplace(TermKey{}, Rational(1));
    TermMap total = cur;
    for (int step = 0; step < l; ++step) {
        TermMap next;
        for (const auto& [key, c] : cur) {
            const int d = key.degree();
            if (d + 1 <= l) {
                detail::add_term(next, key.with_q(+1), c);
                for (std::size_t i = 1; i < key.exps.size(); ++i)
                    if (key.exps[i] > 0) {
                        const int t = static_cast<int>(i) - 1;
                        detail::add_term(next, key.with_n(t, -1).with_n(t + 1, +1), c * Rational(key.exps[i]));
                    }
            }
            if (d + 2 <= l)
                detail::add_term(next, key.with_n(0, +1),
                                 c * (p.base - Rational(d)) * Rational(d + 1));
        }
        cur = std::move(next);
        for (const auto& [key, c] : cur) detail::add_term(total, key, c);
    }
    TermMap out;
    for (const auto& [key, c] : total)
        if (key.degree() == l) out.emplace(key, c);
    return out;
}

/// Terms containing no bare one-form factor.
inline TermMap tau_free_part(const TermMap& terms) {
    TermMap out;
    for (const auto& [key, c] : terms)
        if (key.n(-1) == 0) out.emplace(key, c);
    return out;
}

/// Multiplies every term by t bare one-form factors.
inline TermMap tau_shift(const TermMap& terms, int t) {
    if (t == 0) return terms;
    TermMap out;
    for (const auto& [key, c] : terms) out.emplace(key.with_n(-1, t), c);
    return out;
}

/// Closed-form weight of the degree-t bare-factor block at stage l:
/// binom(l,t) prod_{j=1..t} (base - l + j); equal to 1 at t = 0.
inline Rational closed_form_tau_prefactor(const OracleParams& p, int l, int t) {
    Rational out = binomial(l, t);
    for (int j = 1; j <= t; ++j) out = out * (p.base - Rational(l) + Rational(j));
    return out;
}

/// Checks, in exact arithmetic, that the stage-l recursion agrees with the
/// engine expansion: the bare-factor-free parts must coincide, and the full
/// stage must equal sum_t prefactor(l,t) * (engine stage l-t shifted by t
/// bare factors).
struct OracleReport {
    int stage = 0;
    bool tau_free_matches = false;
    bool closed_form_matches = false;
    std::string detail;
};

inline OracleReport compare_with_engine(const OracleParams& p, int l) {
    OracleReport report;
    report.stage = l;

    const TermMap recursion = recursion_stage(p, l);
    const TermMap engine = engine_stage(p, l);

    auto first_difference = [](const TermMap& a, const TermMap& b) -> std::string {
        for (const auto& [key, c] : a) {
            auto it = b.find(key);
            if (it == b.end()) return to_string(key) + ": " + to_string(c) + " vs absent";
            if (it->second != c) return to_string(key) + ": " + to_string(c) + " vs " + to_string(it->second);
        }
        for (const auto& [key, c] : b)
            if (!a.count(key)) return to_string(key) + ": absent vs " + to_string(c);
        return "";
    };

    const std::string d1 = first_difference(tau_free_part(recursion), engine);
    report.tau_free_matches = d1.empty();

    TermMap reconstructed;
    for (int t = 0; t <= l; ++t) {
        const Rational w = closed_form_tau_prefactor(p, l, t);
        if (w == 0) continue;
        for (const auto& [key, c] : tau_shift(engine_stage(p, l - t), t))
            detail::add_term(reconstructed, key, c * w);
    }
    const std::string d2 = first_difference(recursion, reconstructed);
    report.closed_form_matches = d2.empty();

    if (!report.tau_free_matches)
        report.detail = "bare-free part differs at " + d1;
    else if (!report.closed_form_matches)
        report.detail = "closed form differs at " + d2;
    return report;
}

} // namespace peq
