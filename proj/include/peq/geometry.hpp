#pragma once

#include "peq/expr.hpp"
#include "peq/jet.hpp"
#include "peq/rational.hpp"
#include "peq/sym_tensor.hpp"

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace peq {

/// Torsion-free affine connection on one chart: coefficient functions
/// Gamma^k_{ij}, symmetric in the lower pair.  Unset components are zero.
class ChartConnection {
public:
    explicit ChartConnection(Chart chart) : chart_(std::move(chart)) {}

    const Chart& chart() const { return chart_; }
    int dim() const { return chart_.dim; }

    /// Stores Gamma^k_{ij} (and so Gamma^k_{ji}); rejects setting the same
    /// symmetric slot twice, since the two orderings must agree.
    void set(int k, int i, int j, Expression e) {
        const int slot = canonical_slot(k, i, j);
        if (coeff_.count(slot)) throw std::invalid_argument("connection coefficient set twice for one symmetric slot");
        coeff_.emplace(slot, std::move(e));
    }

    const Expression* get(int k, int i, int j) const {
        auto it = coeff_.find(canonical_slot(k, i, j));
        return it == coeff_.end() ? nullptr : &it->second;
    }

    bool empty() const { return coeff_.empty(); }

private:
    int canonical_slot(int k, int i, int j) const {
        const int m = chart_.dim;
        if (k < 0 || k >= m || i < 0 || i >= m || j < 0 || j >= m)
            throw std::out_of_range("connection index out of range");
        if (i > j) std::swap(i, j);
        return (k * m + i) * m + j;
    }

    Chart chart_;
    std::map<int, Expression> coeff_;
};

/// One scalar density: a weight and a coefficient function on the chart.
struct DensityField {
    Rational weight;
    Expression expr;
};

/// Contravariant symmetric tensor density: degree, weight, and component
/// functions keyed by canonical (sorted) index tuples.  Missing components
/// are zero.
class SymbolField {
public:
    SymbolField(int dim, int degree, Rational weight)
        : dim_(dim), degree_(degree), weight_(std::move(weight)) {
        if (degree < 0) throw std::invalid_argument("symbol degree must be non-negative");
    }

    int dim() const { return dim_; }
    int degree() const { return degree_; }
    const Rational& weight() const { return weight_; }
    const std::map<std::vector<int>, Expression>& components() const { return comp_; }

    void set_component(std::vector<int> idx, Expression e) {
        if (static_cast<int>(idx.size()) != degree_) throw std::invalid_argument("symbol component index length mismatch");
        for (int v : idx)
            if (v < 0 || v >= dim_) throw std::out_of_range("symbol component index out of range");
        std::sort(idx.begin(), idx.end());
        if (comp_.count(idx)) throw std::invalid_argument("symbol component set twice for one symmetric slot");
        comp_.emplace(std::move(idx), std::move(e));
    }

private:
    int dim_;
    int degree_;
    Rational weight_;
    std::map<std::vector<int>, Expression> comp_;
};

/// Everything the evaluators need at one point of one chart: the connection
/// coefficients and their trace as jets truncated at `trunc`.
class PointContext {
public:
    PointContext(const ChartConnection& conn, std::span<const double> point, int trunc)
        : chart_(conn.chart()), point_(point.begin(), point.end()), trunc_(trunc) {
        const int m = chart_.dim;
        if (static_cast<int>(point.size()) != m) throw std::invalid_argument("point dimension mismatch");
        if (trunc < 1) throw std::invalid_argument("context truncation order must be positive");
        const Jet zero(m, trunc);
        gamma_.assign(static_cast<std::size_t>(m * m * m), zero);
        for (int k = 0; k < m; ++k)
            for (int i = 0; i < m; ++i)
                for (int j = i; j < m; ++j)
                    if (const Expression* e = conn.get(k, i, j)) {
                        Jet g = eval_jet(*e, point_, trunc);
                        gamma_[idx(k, i, j)] = g;
                        if (i != j) gamma_[idx(k, j, i)] = g;
                    }
        trace_.assign(static_cast<std::size_t>(m), zero);
        for (int i = 0; i < m; ++i) {
            Jet t = zero;
            for (int a = 0; a < m; ++a) t = t + gamma(a, a, i);
            trace_[static_cast<std::size_t>(i)] = t;
        }
    }

    const Chart& chart() const { return chart_; }
    int dim() const { return chart_.dim; }
    int trunc() const { return trunc_; }
    std::span<const double> point() const { return point_; }

    /// Gamma^k_{ij} as a jet at the context point.
    const Jet& gamma(int k, int i, int j) const { return gamma_[idx(k, i, j)]; }
    /// Gamma^a_{ai} summed over a.
    const Jet& gamma_trace(int i) const { return trace_[static_cast<std::size_t>(i)]; }

private:
    std::size_t idx(int k, int i, int j) const {
        const int m = chart_.dim;
        return static_cast<std::size_t>((k * m + i) * m + j);
    }

    Chart chart_;
    std::vector<double> point_;
    int trunc_;
    std::vector<Jet> gamma_;
    std::vector<Jet> trace_;
};

namespace detail {
inline Jet mul_aligned(const Jet& a, const Jet& b) {
    const int t = std::min(a.trunc(), b.trunc());
    return a.truncated_to(t) * b.truncated_to(t);
}
} // namespace detail

/// Entry-wise truncation of a jet-valued tensor to order t.
template <Variance V>
SymTensor<V, Jet> truncated(const SymTensor<V, Jet>& T, int t) {
    SymTensor<V, Jet> out(T.dim(), T.degree(), T.zero_prototype().truncated_to(t));
    for (std::size_t r = 0; r < T.layout().size(); ++r) out.entry(r) = T.entry(r).truncated_to(t);
    return out;
}

/// Curvature R^l_{kij} = d_i Gamma^l_{jk} - d_j Gamma^l_{ik}
///                      + Gamma^l_{ia} Gamma^a_{jk} - Gamma^l_{ja} Gamma^a_{ik},
/// returned as a flat [l][k][i][j] array of jets one order below the context.
inline std::vector<Jet> curvature(const PointContext& ctx) {
    const int m = ctx.dim();
    const int t = ctx.trunc() - 1;
    std::vector<Jet> R(static_cast<std::size_t>(m * m * m * m), Jet(m, t));
    auto at = [m](int l, int k, int i, int j) {
        return static_cast<std::size_t>(((l * m + k) * m + i) * m + j);
    };
    for (int l = 0; l < m; ++l)
        for (int k = 0; k < m; ++k)
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < i; ++j) {
                    Jet val = ctx.gamma(l, j, k).derivative(i) - ctx.gamma(l, i, k).derivative(j);
                    for (int a = 0; a < m; ++a)
                        val = val + (ctx.gamma(l, i, a) * ctx.gamma(a, j, k)).truncated_to(t) -
                              (ctx.gamma(l, j, a) * ctx.gamma(a, i, k)).truncated_to(t);
                    R[at(l, k, i, j)] = val;
                    R[at(l, k, j, i)] = -val;
                }
    return R;
}

/// Ricci contraction Ric_{kj} = R^i_{kij}, flat [k][j]; not symmetric for a
/// general connection.
inline std::vector<Jet> ricci(const PointContext& ctx) {
    const int m = ctx.dim();
    std::vector<Jet> R = curvature(ctx);
    std::vector<Jet> out(static_cast<std::size_t>(m * m), Jet(m, ctx.trunc() - 1));
    for (int k = 0; k < m; ++k)
        for (int j = 0; j < m; ++j) {
            Jet acc(m, ctx.trunc() - 1);
            for (int i = 0; i < m; ++i)
                acc = acc + R[static_cast<std::size_t>(((i * m + k) * m + i) * m + j)];
            out[static_cast<std::size_t>(k * m + j)] = acc;
        }
    return out;
}

/// Trace over the upper index and the first lower slot: (tr R)_{jk} = R^i_{ijk},
/// flat [j][k]; antisymmetric, and zero for metric connections.
inline std::vector<Jet> trace_curvature(const PointContext& ctx) {
    const int m = ctx.dim();
    std::vector<Jet> R = curvature(ctx);
    std::vector<Jet> out(static_cast<std::size_t>(m * m), Jet(m, ctx.trunc() - 1));
    for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k) {
            Jet acc = Jet(m, ctx.trunc() - 1);
            for (int i = 0; i < m; ++i)
                acc = acc + R[static_cast<std::size_t>(((i * m + i) * m + j) * m + k)];
            out[static_cast<std::size_t>(j * m + k)] = acc;
        }
    return out;
}

/// Symmetrized, normalized Ricci tensor r_{jk} = (Ric_{jk} + Ric_{kj}) / (2(m-1)).
inline SymTensor<Variance::Cov, Jet> r_tensor(const PointContext& ctx) {
    const int m = ctx.dim();
    std::vector<Jet> ric = ricci(ctx);
    SymTensor<Variance::Cov, Jet> out(m, 2, Jet(m, ctx.trunc() - 1));
    for (int j = 0; j < m; ++j)
        for (int k = j; k < m; ++k) {
            const Jet& a = ric[static_cast<std::size_t>(j * m + k)];
            const Jet& b = ric[static_cast<std::size_t>(k * m + j)];
            out.at({j, k}) = (a + b) * (1.0 / (2.0 * (m - 1)));
        }
    return out;
}

/// Deformation tensor of the projective structure,
/// D_{jk} = Ric_{kj}/(m-1) + m (tr R)_{jk} / ((m+1)(m-1)), flat [j][k].
/// Its symmetric part is r_tensor; it satisfies
/// D_{jk} - m D_{kj} = -Ric_{kj} and (m+1)(D_{ji} - D_{ij}) = -(tr R)_{ij}.
inline std::vector<Jet> deformation_tensor(const PointContext& ctx) {
    const int m = ctx.dim();
    std::vector<Jet> ric = ricci(ctx);
    std::vector<Jet> tr = trace_curvature(ctx);
    std::vector<Jet> out(static_cast<std::size_t>(m * m), Jet(m, ctx.trunc() - 1));
    const double c1 = 1.0 / (m - 1.0);
    const double c2 = m / ((m + 1.0) * (m - 1.0));
    for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k)
            out[static_cast<std::size_t>(j * m + k)] =
                ric[static_cast<std::size_t>(k * m + j)] * c1 + tr[static_cast<std::size_t>(j * m + k)] * c2;
    return out;
}

/// Covariant derivative of a covariant symmetric tensor density of the given
/// weight; returns one slice per derivative direction a, each one truncation
/// order below the operand:
/// (grad T)_{a;kappa} = d_a T_kappa - sum_t Gamma^b_{a kappa_t} T_{kappa_t -> b}
///                      - w Gamma^c_{ca} T_kappa.
inline std::vector<SymTensor<Variance::Cov, Jet>> cov_deriv(const PointContext& ctx,
                                                            const SymTensor<Variance::Cov, Jet>& T,
                                                            const Rational& weight) {
    const int m = ctx.dim();
    if (T.dim() != m) throw std::invalid_argument("tensor dimension does not match context");
    const int t = T.zero_prototype().trunc() - 1;
    if (t < 0) throw std::invalid_argument("tensor entries cannot be differentiated further");
    const double w = to_double(weight);
    const Jet zero(m, t);
    std::vector<SymTensor<Variance::Cov, Jet>> out(static_cast<std::size_t>(m),
                                                   SymTensor<Variance::Cov, Jet>(m, T.degree(), zero));
    const SymLayout& layout = T.layout();
    std::vector<int> swapped;
    for (int a = 0; a < m; ++a) {
        const Jet trace = ctx.gamma_trace(a).truncated_to(t);
        for (std::size_t r = 0; r < layout.size(); ++r) {
            const std::vector<int>& kappa = layout.tuple(r);
            Jet acc = T.entry(r).derivative(a);
            for (std::size_t pos = 0; pos < kappa.size(); ++pos) {
                const int v = kappa[pos];
                for (int b = 0; b < m; ++b) {
                    swapped = kappa;
                    swapped[pos] = b;
                    acc = acc - ctx.gamma(b, a, v).truncated_to(t) * T.at(swapped).truncated_to(t);
                }
            }
            if (w != 0.0) acc = acc - trace * T.entry(r).truncated_to(t) * w;
            out[static_cast<std::size_t>(a)].entry(r) = acc;
        }
    }
    return out;
}

/// Covariant derivative of a contravariant symmetric tensor density:
/// (grad S)_a^kappa = d_a S^kappa + sum_t Gamma^{kappa_t}_{ab} S^{kappa_t -> b}
///                    - w Gamma^c_{ca} S^kappa.
inline std::vector<SymTensor<Variance::Contra, Jet>> cov_deriv(const PointContext& ctx,
                                                               const SymTensor<Variance::Contra, Jet>& S,
                                                               const Rational& weight) {
    const int m = ctx.dim();
    if (S.dim() != m) throw std::invalid_argument("tensor dimension does not match context");
    const int t = S.zero_prototype().trunc() - 1;
    if (t < 0) throw std::invalid_argument("tensor entries cannot be differentiated further");
    const double w = to_double(weight);
    const Jet zero(m, t);
    std::vector<SymTensor<Variance::Contra, Jet>> out(static_cast<std::size_t>(m),
                                                      SymTensor<Variance::Contra, Jet>(m, S.degree(), zero));
    const SymLayout& layout = S.layout();
    std::vector<int> swapped;
    for (int a = 0; a < m; ++a) {
        const Jet trace = ctx.gamma_trace(a).truncated_to(t);
        for (std::size_t r = 0; r < layout.size(); ++r) {
            const std::vector<int>& kappa = layout.tuple(r);
            Jet acc = S.entry(r).derivative(a);
            for (std::size_t pos = 0; pos < kappa.size(); ++pos) {
                const int v = kappa[pos];
                for (int b = 0; b < m; ++b) {
                    swapped = kappa;
                    swapped[pos] = b;
                    acc = acc + ctx.gamma(v, a, b).truncated_to(t) * S.at(swapped).truncated_to(t);
                }
            }
            if (w != 0.0) acc = acc - trace * S.entry(r).truncated_to(t) * w;
            out[static_cast<std::size_t>(a)].entry(r) = acc;
        }
    }
    return out;
}

/// Symmetrized covariant derivative: degree p -> p+1,
/// (grad_s T)_kappa = (1/(p+1)) sum over positions t of (grad T)_{kappa_t; kappa minus t}.
inline SymTensor<Variance::Cov, Jet> nabla_s(const PointContext& ctx, const SymTensor<Variance::Cov, Jet>& T,
                                             const Rational& weight) {
    const int m = ctx.dim();
    const int p = T.degree();
    std::vector<SymTensor<Variance::Cov, Jet>> slices = cov_deriv(ctx, T, weight);
    const Jet zero(m, T.zero_prototype().trunc() - 1);
    SymTensor<Variance::Cov, Jet> out(m, p + 1, zero);
    const SymLayout& layout = out.layout();
    std::vector<int> rest;
    for (std::size_t r = 0; r < layout.size(); ++r) {
        const std::vector<int>& kappa = layout.tuple(r);
        Jet acc = zero;
        for (std::size_t pos = 0; pos < kappa.size(); ++pos) {
            if (pos > 0 && kappa[pos] == kappa[pos - 1]) continue; // handled with its count below
            const int v = kappa[pos];
            int count = 0;
            for (int u : kappa) count += (u == v);
            rest = kappa;
            rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(pos));
            acc = acc + slices[static_cast<std::size_t>(v)].at(rest) * static_cast<double>(count);
        }
        out.entry(r) = acc * (1.0 / (p + 1));
    }
    return out;
}

/// Divergence: degree p -> p-1, (Div S)^kappa = (grad S)_a^{a kappa} summed over a.
inline SymTensor<Variance::Contra, Jet> divergence(const PointContext& ctx,
                                                   const SymTensor<Variance::Contra, Jet>& S,
                                                   const Rational& weight) {
    const int m = ctx.dim();
    const int p = S.degree();
    if (p < 1) throw std::invalid_argument("divergence needs a tensor of positive degree");
    std::vector<SymTensor<Variance::Contra, Jet>> slices = cov_deriv(ctx, S, weight);
    const Jet zero(m, S.zero_prototype().trunc() - 1);
    SymTensor<Variance::Contra, Jet> out(m, p - 1, zero);
    const SymLayout& layout = out.layout();
    std::vector<int> merged(static_cast<std::size_t>(p));
    for (std::size_t r = 0; r < layout.size(); ++r) {
        const std::vector<int>& mu = layout.tuple(r);
        Jet acc = zero;
        for (int a = 0; a < m; ++a) {
            merged.assign(mu.begin(), mu.end());
            merged.push_back(a);
            acc = acc + slices[static_cast<std::size_t>(a)].at(merged);
        }
        out.entry(r) = acc;
    }
    return out;
}

/// Evaluates a density's coefficient function into a jet at the context point.
inline Jet eval_density(const DensityField& f, const PointContext& ctx) {
    return eval_jet(f.expr, ctx.point(), ctx.trunc());
}

/// Evaluates all symbol components into a jet-valued contravariant tensor.
inline SymTensor<Variance::Contra, Jet> eval_symbol(const SymbolField& s, const PointContext& ctx) {
    if (s.dim() != ctx.dim()) throw std::invalid_argument("symbol dimension does not match context");
    SymTensor<Variance::Contra, Jet> out(ctx.dim(), s.degree(), Jet(ctx.dim(), ctx.trunc()));
    for (const auto& [idx, e] : s.components()) out.at(idx) = eval_jet(e, ctx.point(), ctx.trunc());
    return out;
}

} // namespace peq
