#pragma once

#include "peq/geometry.hpp"
#include "peq/jet.hpp"
#include "peq/rational.hpp"
#include "peq/sym_tensor.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace peq {

/// Inputs fixing one quantization map: dimension m, operator order k, and the
/// density weights of the argument (lambda) and of the result (mu).
struct QuantizationParams {
    int m = 2;
    int k = 0;
    Rational lambda;
    Rational mu;

    Rational delta() const { return mu - lambda; }
};

/// gamma_s = (m + s - (m+1) delta) / (m+1); the denominators of the
/// coefficient recursion are the gamma_{2k-t}.
inline Rational gamma_coeff(int s, int m, const Rational& delta) {
    return (Rational(m + s) - Rational(m + 1) * delta) / Rational(m + 1);
}

/// The weight shift delta is critical when some denominator gamma_{2k'-l}
/// vanishes for some order k' and term 1 <= l <= k'; equivalently when
/// (m+1) delta - m is a positive integer.
struct CriticalInfo {
    bool critical = false;
    long resonance = 0;                     // (m+1) delta - m when critical
    std::vector<std::pair<int, int>> pairs; // offending (order k', term l)
};

inline CriticalInfo critical_info(int m, const Rational& delta) {
    CriticalInfo info;
    const Rational j = Rational(m + 1) * delta - Rational(m);
    if (!is_integer(j) || j < 1) return info;
    info.critical = true;
    info.resonance = static_cast<long>(numerator(j));
    const long r = info.resonance;
    for (long order = (r + 2) / 2; order <= r; ++order)
        info.pairs.emplace_back(static_cast<int>(order), static_cast<int>(2 * order - r));
    return info;
}

/// Raised when an evaluation is requested at a critical weight shift.
class CriticalDelta : public std::domain_error {
public:
    explicit CriticalDelta(const CriticalInfo& info)
        : std::domain_error(format(info)), info_(info) {}

    const CriticalInfo& info() const { return info_; }

private:
    static std::string format(const CriticalInfo& info) {
        std::string msg = "critical weight shift: (m+1)*delta - m = " + std::to_string(info.resonance) +
                          "; vanishing denominators gamma_{2k-l} at (order k, term l):";
        for (const auto& [order, term] : info.pairs)
            msg += " (" + std::to_string(order) + "," + std::to_string(term) + ")";
        return msg;
    }

    CriticalInfo info_;
};

inline void require_noncritical(int m, const Rational& delta) {
    CriticalInfo info = critical_info(m, delta);
    if (info.critical) throw CriticalDelta(info);
}

inline Rational binomial(int n, int r) {
    if (r < 0 || r > n) return Rational(0);
    Rational b(1);
    for (int i = 1; i <= r; ++i) b = b * Rational(n - r + i) / Rational(i);
    return b;
}

/// C_{k,0} = 1 and
/// C_{k,l} = binom(k,l) prod_{t=1..l} (lambda + (k-t)/(m+1)) / prod_{t=1..l} gamma_{2k-t}.
inline Rational quantization_coefficient(const QuantizationParams& p, int l) {
    if (l < 0 || l > p.k) throw std::invalid_argument("coefficient index out of range");
    Rational num = binomial(p.k, l);
    Rational den(1);
    const Rational delta = p.delta();
    for (int t = 1; t <= l; ++t) {
        num = num * (p.lambda + Rational(p.k - t) / Rational(p.m + 1));
        const Rational g = gamma_coeff(2 * p.k - t, p.m, delta);
        if (g == 0) throw CriticalDelta(critical_info(p.m, delta));
        den = den * g;
    }
    return num / den;
}

namespace detail {

// Adds a graded term into an accumulator slot, aligning jet truncation orders.
template <Variance V>
void acc_into(std::optional<SymTensor<V, Jet>>& slot, const SymTensor<V, Jet>& term) {
    if (!slot) {
        slot = term;
        return;
    }
    const int t = std::min(slot->zero_prototype().trunc(), term.zero_prototype().trunc());
    slot = truncated(*slot, t) + truncated(term, t);
}

} // namespace detail

/// The order-two correction on the argument side: on a covariant operand of
/// degree j it multiplies by r with coefficient (-lambda (m+1) - j)(j + 1).
inline SymTensor<Variance::Cov, Jet> t1_apply(const QuantizationParams& p,
                                              const SymTensor<Variance::Cov, Jet>& r,
                                              const SymTensor<Variance::Cov, Jet>& T) {
    const int j = T.degree();
    const double coeff = (-to_double(p.lambda) * (p.m + 1) - j) * (j + 1);
    const int t = std::min(r.zero_prototype().trunc(), T.zero_prototype().trunc());
    return sym_product(truncated(r, t), truncated(T, t)).scaled(coeff);
}

/// The order-two correction on the symbol side: on a symbol of degree j it
/// contracts with r with coefficient ((m+1) gamma_{2k-1} - k + j)(k - j + 1).
inline SymTensor<Variance::Contra, Jet> t2_apply(const QuantizationParams& p,
                                                 const SymTensor<Variance::Cov, Jet>& r,
                                                 const SymTensor<Variance::Contra, Jet>& S) {
    const int j = S.degree();
    if (j < 2) throw std::invalid_argument("symbol degree too low for the order-two correction");
    const Rational g = gamma_coeff(2 * p.k - 1, p.m, p.delta());
    const double coeff = (to_double(g) * (p.m + 1) - p.k + j) * (p.k - j + 1);
    const int t = std::min(r.zero_prototype().trunc(), S.zero_prototype().trunc());
    return contract(truncated(r, t), truncated(S, t)).scaled(coeff);
}

/// Argument-side operator: the covariant-degree-(k-l) component of
/// sum_{j=0}^{k-l} (grad_s + T1)^j applied to f.
inline SymTensor<Variance::Cov, Jet> f_side(const QuantizationParams& p, const PointContext& ctx,
                                            const SymTensor<Variance::Cov, Jet>& r, const Jet& f, int l) {
    if (l < 0 || l > p.k) throw std::invalid_argument("term index out of range");
    const int target = p.k - l;
    const int m = ctx.dim();
    using Tensor = SymTensor<Variance::Cov, Jet>;
    std::vector<std::optional<Tensor>> current(static_cast<std::size_t>(target) + 1);
    std::vector<std::optional<Tensor>> total(static_cast<std::size_t>(target) + 1);
    Tensor seed(m, 0, Jet(m, f.trunc()));
    seed.at({}) = f;
    current[0] = seed;
    total[0] = seed;
    for (int step = 0; step < target; ++step) {
        std::vector<std::optional<Tensor>> next(static_cast<std::size_t>(target) + 1);
        for (int d = 0; d <= target; ++d) {
            if (!current[static_cast<std::size_t>(d)]) continue;
            const Tensor& op = *current[static_cast<std::size_t>(d)];
            if (d + 1 <= target) detail::acc_into(next[static_cast<std::size_t>(d + 1)], nabla_s(ctx, op, p.lambda));
            if (d + 2 <= target) detail::acc_into(next[static_cast<std::size_t>(d + 2)], t1_apply(p, r, op));
        }
        current = std::move(next);
        for (int d = 1; d <= target; ++d)
            if (current[static_cast<std::size_t>(d)]) detail::acc_into(total[static_cast<std::size_t>(d)], *current[static_cast<std::size_t>(d)]);
    }
    if (!total[static_cast<std::size_t>(target)])
        return Tensor(m, target, Jet(m, std::max(0, f.trunc() - target)));
    return *total[static_cast<std::size_t>(target)];
}

inline SymTensor<Variance::Cov, Jet> f_side(const QuantizationParams& p, const PointContext& ctx,
                                            const Jet& f, int l) {
    return f_side(p, ctx, r_tensor(ctx), f, l);
}

/// Symbol-side operator: the component of sum_{j=0}^{l} (Div + T2)^j S whose
/// symbol degree has dropped by l.
inline SymTensor<Variance::Contra, Jet> s_side(const QuantizationParams& p, const PointContext& ctx,
                                               const SymTensor<Variance::Cov, Jet>& r,
                                               const SymTensor<Variance::Contra, Jet>& S, int l) {
    if (l < 0 || l > p.k) throw std::invalid_argument("term index out of range");
    if (S.degree() != p.k) throw std::invalid_argument("symbol degree must equal the operator order");
    const int target = l;
    const int m = ctx.dim();
    const Rational delta = p.delta();
    using Tensor = SymTensor<Variance::Contra, Jet>;
    std::vector<std::optional<Tensor>> current(static_cast<std::size_t>(target) + 1);
    std::vector<std::optional<Tensor>> total(static_cast<std::size_t>(target) + 1);
    current[0] = S;
    total[0] = S;
    for (int step = 0; step < target; ++step) {
        std::vector<std::optional<Tensor>> next(static_cast<std::size_t>(target) + 1);
        for (int d = 0; d <= target; ++d) {
            if (!current[static_cast<std::size_t>(d)]) continue;
            const Tensor& op = *current[static_cast<std::size_t>(d)];
            if (d + 1 <= target && op.degree() >= 1)
                detail::acc_into(next[static_cast<std::size_t>(d + 1)], divergence(ctx, op, delta));
            if (d + 2 <= target && op.degree() >= 2)
                detail::acc_into(next[static_cast<std::size_t>(d + 2)], t2_apply(p, r, op));
        }
        current = std::move(next);
        for (int d = 1; d <= target; ++d)
            if (current[static_cast<std::size_t>(d)]) detail::acc_into(total[static_cast<std::size_t>(d)], *current[static_cast<std::size_t>(d)]);
    }
    if (!total[static_cast<std::size_t>(target)])
        return Tensor(m, p.k - target, Jet(m, std::max(0, S.zero_prototype().trunc() - target)));
    return *total[static_cast<std::size_t>(target)];
}

inline SymTensor<Variance::Contra, Jet> s_side(const QuantizationParams& p, const PointContext& ctx,
                                               const SymTensor<Variance::Contra, Jet>& S, int l) {
    return s_side(p, ctx, r_tensor(ctx), S, l);
}

/// Full evaluation at the context point:
/// Q = sum_{l=0}^{k} C_{k,l} < s_side(l) S , f_side(l) f >.
/// Throws CriticalDelta when the weight shift is critical.
inline double quantize(const QuantizationParams& p, const PointContext& ctx,
                       const SymTensor<Variance::Contra, Jet>& S, const Jet& f) {
    if (ctx.dim() != p.m) throw std::invalid_argument("context dimension does not match parameters");
    if (S.degree() != p.k) throw std::invalid_argument("symbol degree must equal the operator order");
    require_noncritical(p.m, p.delta());
    const SymTensor<Variance::Cov, Jet> r = r_tensor(ctx);
    double out = 0.0;
    for (int l = 0; l <= p.k; ++l) {
        const double c = to_double(quantization_coefficient(p, l));
        SymTensor<Variance::Cov, Jet> a = f_side(p, ctx, r, f, l);
        SymTensor<Variance::Contra, Jet> b = s_side(p, ctx, r, S, l);
        const int t = std::min(a.zero_prototype().trunc(), b.zero_prototype().trunc());
        out += c * pairing(truncated(a, t), truncated(b, t)).value();
    }
    return out;
}

/// Convenience entry point from field data.
inline double quantize(const QuantizationParams& p, const PointContext& ctx, const SymbolField& S,
                       const DensityField& f) {
    if (S.weight() != p.delta()) throw std::invalid_argument("symbol weight must equal mu - lambda");
    if (f.weight != p.lambda) throw std::invalid_argument("density weight must equal lambda");
    return quantize(p, ctx, eval_symbol(S, ctx), eval_density(f, ctx));
}

/// Order-two map written out longhand, for cross-checking the engine:
/// Q = <S, (grad_s^2 - lambda(m+1) r) f> + C_{2,1} <Div S, grad_s f>
///     + C_{2,2} <(Div^2 + gamma_3 (m+1) i(r)) S, f>.
inline double quantize_order2(const QuantizationParams& p, const PointContext& ctx,
                              const SymTensor<Variance::Contra, Jet>& S, const Jet& f) {
    if (p.k != 2) throw std::invalid_argument("order-two formula needs k = 2");
    require_noncritical(p.m, p.delta());
    const int m = ctx.dim();
    const Rational delta = p.delta();
    const double lam = to_double(p.lambda);
    const SymTensor<Variance::Cov, Jet> r = r_tensor(ctx);

    auto mul = [](const SymTensor<Variance::Cov, Jet>& a, const SymTensor<Variance::Cov, Jet>& b) {
        const int t = std::min(a.zero_prototype().trunc(), b.zero_prototype().trunc());
        return sym_product(truncated(a, t), truncated(b, t));
    };
    auto sub = [](const SymTensor<Variance::Cov, Jet>& a, const SymTensor<Variance::Cov, Jet>& b) {
        const int t = std::min(a.zero_prototype().trunc(), b.zero_prototype().trunc());
        return truncated(a, t) - truncated(b, t);
    };
    auto ins = [](const SymTensor<Variance::Cov, Jet>& a, const SymTensor<Variance::Contra, Jet>& s) {
        const int t = std::min(a.zero_prototype().trunc(), s.zero_prototype().trunc());
        return contract(truncated(a, t), truncated(s, t));
    };
    auto add = [](const SymTensor<Variance::Contra, Jet>& a, const SymTensor<Variance::Contra, Jet>& b) {
        const int t = std::min(a.zero_prototype().trunc(), b.zero_prototype().trunc());
        return truncated(a, t) + truncated(b, t);
    };

    SymTensor<Variance::Cov, Jet> f0(m, 0, Jet(m, f.trunc()));
    f0.at({}) = f;
    auto df = nabla_s(ctx, f0, p.lambda);
    auto ddf = nabla_s(ctx, df, p.lambda);
    auto term0 = sub(ddf, mul(r, f0).scaled(lam * (m + 1)));

    auto divS = divergence(ctx, S, delta);
    auto divdivS = divergence(ctx, divS, delta);
    const double g3 = to_double(gamma_coeff(3, m, delta));
    auto term2 = add(divdivS, ins(r, S).scaled(g3 * (m + 1)));

    const double c1 = to_double(quantization_coefficient(p, 1));
    const double c2 = to_double(quantization_coefficient(p, 2));

    auto align_pair = [](const SymTensor<Variance::Cov, Jet>& a, const SymTensor<Variance::Contra, Jet>& b) {
        const int t = std::min(a.zero_prototype().trunc(), b.zero_prototype().trunc());
        return pairing(truncated(a, t), truncated(b, t)).value();
    };
    return align_pair(term0, S) + c1 * align_pair(df, divS) + c2 * align_pair(f0, term2);
}

/// Order-three map written out longhand:
/// Q = <S, (grad_s^3 - (3(m+1)lambda + 2) r v grad_s - lambda(m+1) (grad_s r) v) f>
///     + C_{3,1} <Div S, (grad_s^2 - lambda(m+1) r) f>
///     + C_{3,2} <(Div^2 + gamma_5 (m+1) i(r)) S, grad_s f>
///     + C_{3,3} <(Div^3 + (3 gamma_5 (m+1) - 2) i(r) Div + gamma_5 (m+1) i(grad_s r)) S, f>.
inline double quantize_order3(const QuantizationParams& p, const PointContext& ctx,
                              const SymTensor<Variance::Contra, Jet>& S, const Jet& f) {
    if (p.k != 3) throw std::invalid_argument("order-three formula needs k = 3");
    require_noncritical(p.m, p.delta());
    const int m = ctx.dim();
    const Rational delta = p.delta();
    const double lam = to_double(p.lambda);
    const double g5 = to_double(gamma_coeff(5, m, delta));
    const SymTensor<Variance::Cov, Jet> r = r_tensor(ctx);
    const SymTensor<Variance::Cov, Jet> dr = nabla_s(ctx, r, Rational(0));

    SymTensor<Variance::Cov, Jet> f0(m, 0, Jet(m, f.trunc()));
    f0.at({}) = f;
    auto df = nabla_s(ctx, f0, p.lambda);
    auto ddf = nabla_s(ctx, df, p.lambda);
    auto dddf = nabla_s(ctx, ddf, p.lambda);

    auto mul = [](const SymTensor<Variance::Cov, Jet>& a, const SymTensor<Variance::Cov, Jet>& b) {
        const int t = std::min(a.zero_prototype().trunc(), b.zero_prototype().trunc());
        return sym_product(truncated(a, t), truncated(b, t));
    };
    auto sub = [](const SymTensor<Variance::Cov, Jet>& a, const SymTensor<Variance::Cov, Jet>& b) {
        const int t = std::min(a.zero_prototype().trunc(), b.zero_prototype().trunc());
        return truncated(a, t) - truncated(b, t);
    };

    auto term0 = sub(sub(dddf, mul(r, df).scaled(3.0 * (m + 1) * lam + 2.0)), mul(dr, f0).scaled(lam * (m + 1)));
    auto term1 = sub(ddf, mul(r, f0).scaled(lam * (m + 1)));

    auto divS = divergence(ctx, S, delta);
    auto div2S = divergence(ctx, divS, delta);
    auto div3S = divergence(ctx, div2S, delta);

    auto ins = [](const SymTensor<Variance::Cov, Jet>& a, const SymTensor<Variance::Contra, Jet>& s) {
        const int t = std::min(a.zero_prototype().trunc(), s.zero_prototype().trunc());
        return contract(truncated(a, t), truncated(s, t));
    };
    auto add = [](const SymTensor<Variance::Contra, Jet>& a, const SymTensor<Variance::Contra, Jet>& b) {
        const int t = std::min(a.zero_prototype().trunc(), b.zero_prototype().trunc());
        return truncated(a, t) + truncated(b, t);
    };

    auto term2 = add(div2S, ins(r, S).scaled(g5 * (m + 1)));
    auto term3 = add(add(div3S, ins(r, divS).scaled(3.0 * g5 * (m + 1) - 2.0)), ins(dr, S).scaled(g5 * (m + 1)));

    const double c1 = to_double(quantization_coefficient(p, 1));
    const double c2 = to_double(quantization_coefficient(p, 2));
    const double c3 = to_double(quantization_coefficient(p, 3));

    auto align_pair = [](const SymTensor<Variance::Cov, Jet>& a, const SymTensor<Variance::Contra, Jet>& b) {
        const int t = std::min(a.zero_prototype().trunc(), b.zero_prototype().trunc());
        return pairing(truncated(a, t), truncated(b, t)).value();
    };
    return align_pair(term0, S) + c1 * align_pair(term1, divS) + c2 * align_pair(df, term2) +
           c3 * align_pair(f0, term3);
}

} // namespace peq
