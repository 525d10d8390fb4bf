#pragma once

#include "peq/expr.hpp"
#include "peq/geometry.hpp"
#include "peq/jet.hpp"
#include "peq/quantization.hpp"

#include <algorithm>
#include <map>
#include <span>
#include <vector>

namespace peq {

namespace detail {

// Runs the body over every index tuple of the given length with entries in
// {0..dim-1}; `tuple` is reused between calls.
template <typename F>
void for_each_tuple(int dim, int length, F&& body) {
    std::vector<int> tuple(static_cast<std::size_t>(length), 0);
    for (;;) {
        body(tuple);
        int pos = length - 1;
        while (pos >= 0 && tuple[static_cast<std::size_t>(pos)] == dim - 1) {
            tuple[static_cast<std::size_t>(pos)] = 0;
            --pos;
        }
        if (pos < 0) return;
        ++tuple[static_cast<std::size_t>(pos)];
    }
}

} // namespace detail

/// Flat-space evaluation of the quantization map by raw partial derivatives:
/// Q = sum_l C_{k,l} sum over tuples a (length l) and b (length k-l) of
///     d_a S^{a b} d_b f  evaluated at the point.
/// Written against the jets directly, with no covariant machinery, as an
/// independent cross-check of the operator engine on a vanishing connection.
inline double flat_quantize(const QuantizationParams& p, const SymbolField& S, const DensityField& f,
                            std::span<const double> point) {
    if (S.dim() != p.m) throw std::invalid_argument("symbol dimension does not match parameters");
    if (S.degree() != p.k) throw std::invalid_argument("symbol degree must equal the operator order");
    if (static_cast<int>(point.size()) != p.m) throw std::invalid_argument("point dimension mismatch");
    require_noncritical(p.m, p.delta());

    const int m = p.m, k = p.k;
    const Jet fj = eval_jet(f.expr, point, k);
    std::map<std::vector<int>, Jet> comp;
    for (const auto& [idx, e] : S.components()) comp.emplace(idx, eval_jet(e, point, k));

    std::vector<int> key(static_cast<std::size_t>(k));
    std::vector<int> counts(static_cast<std::size_t>(m));
    auto partial_of_symbol = [&](const std::vector<int>& deriv, const std::vector<int>& slot_a,
                                 const std::vector<int>& slot_b) -> double {
        key.clear();
        key.insert(key.end(), slot_a.begin(), slot_a.end());
        key.insert(key.end(), slot_b.begin(), slot_b.end());
        std::sort(key.begin(), key.end());
        auto it = comp.find(key);
        if (it == comp.end()) return 0.0;
        counts.assign(static_cast<std::size_t>(m), 0);
        for (int a : deriv) ++counts[static_cast<std::size_t>(a)];
        return it->second.extract_partial(MultiIndex{counts});
    };
    auto partial_of_f = [&](const std::vector<int>& deriv) -> double {
        counts.assign(static_cast<std::size_t>(m), 0);
        for (int a : deriv) ++counts[static_cast<std::size_t>(a)];
        return fj.extract_partial(MultiIndex{counts});
    };

    double out = 0.0;
    for (int l = 0; l <= k; ++l) {
        const double c = to_double(quantization_coefficient(p, l));
        double acc = 0.0;
        detail::for_each_tuple(m, l, [&](const std::vector<int>& alpha) {
            detail::for_each_tuple(m, k - l, [&](const std::vector<int>& beta) {
                const double ds = partial_of_symbol(alpha, alpha, beta);
                if (ds == 0.0) return;
                acc += ds * partial_of_f(beta);
            });
        });
        out += c * acc;
    }
    return out;
}

} // namespace peq
