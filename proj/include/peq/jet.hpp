#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace peq {

/// Exponent vector of a monomial (equivalently, of a partial derivative) in
/// m chart variables.
struct MultiIndex {
    std::vector<int> e;

    MultiIndex() = default;
    explicit MultiIndex(std::vector<int> exps) : e(std::move(exps)) {
        for (int x : e)
            if (x < 0) throw std::invalid_argument("MultiIndex entries must be non-negative");
    }

    int dim() const { return static_cast<int>(e.size()); }
    int order() const { return std::accumulate(e.begin(), e.end(), 0); }

    bool operator==(const MultiIndex& o) const { return e == o.e; }
};

/// Product of the factorials of the entries; fits a double exactly for the
/// orders this library works at.
inline double factorial(const MultiIndex& mi) {
    double f = 1.0;
    for (int x : mi.e)
        for (int k = 2; k <= x; ++k) f *= k;
    return f;
}

namespace detail {

inline std::uint64_t pack_exponents(const std::vector<int>& e) {
    std::uint64_t key = 0;
    for (int x : e) key = (key << 8) | static_cast<std::uint64_t>(x & 0xff);
    return key;
}

} // namespace detail

/// Shared enumeration of all multi-indices of a given dimension up to a given
/// total order, in graded lexicographic order.  Grading means the indices of
/// order <= t always form a prefix, so truncating a jet is a prefix copy.
class JetLayout {
public:
    static std::shared_ptr<const JetLayout> get(int dim, int trunc) {
        if (dim < 2) throw std::invalid_argument("jet dimension must be at least 2");
        if (dim > 7) throw std::invalid_argument("jet dimension above 7 is not supported");
        if (trunc < 0) throw std::invalid_argument("jet truncation order must be non-negative");
        static std::mutex mu;
        static std::map<std::pair<int, int>, std::shared_ptr<const JetLayout>> cache;
        std::lock_guard<std::mutex> lock(mu);
        auto& slot = cache[{dim, trunc}];
        if (!slot) slot = std::shared_ptr<const JetLayout>(new JetLayout(dim, trunc));
        return slot;
    }

    int dim() const { return dim_; }
    int trunc() const { return trunc_; }
    int size() const { return static_cast<int>(indices_.size()); }
    const std::vector<MultiIndex>& indices() const { return indices_; }
    const MultiIndex& index(int rank) const { return indices_[static_cast<std::size_t>(rank)]; }

    /// Number of multi-indices of order <= t (a prefix length by grading).
    int count_up_to(int t) const { return prefix_[static_cast<std::size_t>(std::min(t, trunc_) + 1)]; }

    /// Rank of mi in this layout, or -1 when its order exceeds the truncation.
    int rank(const MultiIndex& mi) const {
        if (mi.dim() != dim_) throw std::invalid_argument("multi-index dimension mismatch");
        if (mi.order() > trunc_) return -1;
        return rank_.at(detail::pack_exponents(mi.e));
    }

    /// Rank of indices[i] + indices[j], or -1 when the sum's order exceeds
    /// the truncation.
    int product_rank(int i, int j) const {
        return prod_[static_cast<std::size_t>(i) * indices_.size() + static_cast<std::size_t>(j)];
    }

private:
    JetLayout(int dim, int trunc) : dim_(dim), trunc_(trunc) {
        prefix_.push_back(0);
        std::vector<int> mi(static_cast<std::size_t>(dim), 0);
        for (int order = 0; order <= trunc; ++order) {
            emit_of_order(mi, 0, order);
            prefix_.push_back(static_cast<int>(indices_.size()));
        }
        rank_.reserve(indices_.size() * 2);
        for (int r = 0; r < size(); ++r) rank_[detail::pack_exponents(indices_[static_cast<std::size_t>(r)].e)] = r;

        const std::size_t n = indices_.size();
        if (n * n > (1u << 24)) throw std::invalid_argument("jet layout too large");
        prod_.assign(n * n, -1);
        std::vector<int> sum(static_cast<std::size_t>(dim));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                int order = 0;
                for (int d = 0; d < dim; ++d) {
                    sum[static_cast<std::size_t>(d)] =
                        indices_[i].e[static_cast<std::size_t>(d)] + indices_[j].e[static_cast<std::size_t>(d)];
                    order += sum[static_cast<std::size_t>(d)];
                }
                if (order <= trunc) prod_[i * n + j] = rank_.at(detail::pack_exponents(sum));
            }
        }
    }

    void emit_of_order(std::vector<int>& mi, int pos, int remaining) {
        if (pos == dim_ - 1) {
            mi[static_cast<std::size_t>(pos)] = remaining;
            indices_.push_back(MultiIndex(mi));
            return;
        }
        // Lexicographic within a grade: highest exponent on the first
        // coordinate comes first.
        for (int v = remaining; v >= 0; --v) {
            mi[static_cast<std::size_t>(pos)] = v;
            emit_of_order(mi, pos + 1, remaining - v);
        }
    }

    int dim_, trunc_;
    std::vector<MultiIndex> indices_;
    std::vector<int> prefix_;
    std::unordered_map<std::uint64_t, int> rank_;
    std::vector<std::int32_t> prod_;
};

/// Truncated multivariate Taylor expansion of a scalar function at a point.
/// Coefficients are Taylor-normalized (divided by the multi-index factorial),
/// so multiplication is plain truncated convolution.  Values are immutable;
/// every operation returns a fresh jet.
class Jet {
public:
    Jet(int dim, int trunc) : layout_(JetLayout::get(dim, trunc)), c_(static_cast<std::size_t>(layout_->size()), 0.0) {}

    static Jet constant(double v, int dim, int trunc) {
        Jet j(dim, trunc);
        j.c_[0] = v;
        return j;
    }

    /// The coordinate function x_i as a jet based at x_i = base.
    static Jet variable(int i, double base, int dim, int trunc) {
        Jet j(dim, trunc);
        if (i < 0 || i >= dim) throw std::invalid_argument("jet variable index out of range");
        j.c_[0] = base;
        if (trunc >= 1) {
            MultiIndex mi(std::vector<int>(static_cast<std::size_t>(dim), 0));
            mi.e[static_cast<std::size_t>(i)] = 1;
            j.c_[static_cast<std::size_t>(j.layout_->rank(mi))] = 1.0;
        }
        return j;
    }

    int dim() const { return layout_->dim(); }
    int trunc() const { return layout_->trunc(); }
    const JetLayout& layout() const { return *layout_; }

    /// Value of the underlying function at the base point.
    double value() const { return c_[0]; }

    /// Taylor coefficient for mi; errors when mi's order exceeds the truncation.
    double coefficient(const MultiIndex& mi) const {
        const int r = layout_->rank(mi);
        if (r < 0) throw std::out_of_range("coefficient order exceeds jet truncation");
        return c_[static_cast<std::size_t>(r)];
    }

    /// The partial derivative (d/dx)^mi at the base point, i.e. the Taylor
    /// coefficient rescaled by factorial(mi).
    double extract_partial(const MultiIndex& mi) const { return coefficient(mi) * factorial(mi); }

    double& raw(int rank) { return c_[static_cast<std::size_t>(rank)]; }
    double raw(int rank) const { return c_[static_cast<std::size_t>(rank)]; }

    /// Formal partial derivative along axis; drops one truncation order.
    Jet derivative(int axis) const {
        if (axis < 0 || axis >= dim()) throw std::invalid_argument("derivative axis out of range");
        if (trunc() < 1) throw std::invalid_argument("cannot differentiate a jet of truncation order 0");
        Jet out(dim(), trunc() - 1);
        const auto& out_idx = out.layout_->indices();
        for (int r = 0; r < out.layout_->size(); ++r) {
            MultiIndex up = out_idx[static_cast<std::size_t>(r)];
            up.e[static_cast<std::size_t>(axis)] += 1;
            const int src = layout_->rank(up);
            out.c_[static_cast<std::size_t>(r)] = c_[static_cast<std::size_t>(src)] * up.e[static_cast<std::size_t>(axis)];
        }
        return out;
    }

    /// The same expansion cut down to a lower order.
    Jet truncated_to(int t) const {
        if (t > trunc()) throw std::invalid_argument("cannot extend a jet by truncation");
        if (t == trunc()) return *this;
        Jet out(dim(), t);
        std::copy_n(c_.begin(), out.c_.size(), out.c_.begin());
        return out;
    }

    Jet operator-() const {
        Jet out = *this;
        for (double& x : out.c_) x = -x;
        return out;
    }

    friend Jet operator+(const Jet& a, const Jet& b) {
        a.require_matching(b);
        Jet out = a;
        for (std::size_t i = 0; i < out.c_.size(); ++i) out.c_[i] += b.c_[i];
        return out;
    }

    friend Jet operator-(const Jet& a, const Jet& b) {
        a.require_matching(b);
        Jet out = a;
        for (std::size_t i = 0; i < out.c_.size(); ++i) out.c_[i] -= b.c_[i];
        return out;
    }

    friend Jet operator*(const Jet& a, const Jet& b) {
        a.require_matching(b);
        Jet out(a.dim(), a.trunc());
        const int n = a.layout_->size();
        for (int i = 0; i < n; ++i) {
            const double ai = a.c_[static_cast<std::size_t>(i)];
            if (ai == 0.0) continue;
            for (int j = 0; j < n; ++j) {
                const int t = a.layout_->product_rank(i, j);
                if (t >= 0) out.c_[static_cast<std::size_t>(t)] += ai * b.c_[static_cast<std::size_t>(j)];
            }
        }
        return out;
    }

    friend Jet operator*(const Jet& a, double s) {
        Jet out = a;
        for (double& x : out.c_) x *= s;
        return out;
    }
    friend Jet operator*(double s, const Jet& a) { return a * s; }

    friend Jet operator+(const Jet& a, double s) {
        Jet out = a;
        out.c_[0] += s;
        return out;
    }
    friend Jet operator+(double s, const Jet& a) { return a + s; }
    friend Jet operator-(const Jet& a, double s) { return a + (-s); }
    friend Jet operator-(double s, const Jet& a) { return -a + s; }

    friend Jet operator/(const Jet& a, const Jet& b);
    friend Jet operator/(const Jet& a, double s) { return a * (1.0 / s); }
    friend Jet operator/(double s, const Jet& b);

    /// Composes a univariate power series sum_k series[k] * (j - j.value())^k
    /// with this jet; series must hold trunc()+1 coefficients.
    Jet compose_series(std::span<const double> series) const {
        Jet h = *this;
        h.c_[0] = 0.0;
        Jet out = Jet::constant(series[static_cast<std::size_t>(trunc())], dim(), trunc());
        for (int k = trunc() - 1; k >= 0; --k) out = out * h + series[static_cast<std::size_t>(k)];
        return out;
    }

private:
    void require_matching(const Jet& o) const {
        if (layout_ != o.layout_)
            throw std::invalid_argument("jet dimension/truncation mismatch");
    }

    std::shared_ptr<const JetLayout> layout_;
    std::vector<double> c_;
};

inline Jet exp(const Jet& a) {
    const double a0 = a.value();
    std::vector<double> s(static_cast<std::size_t>(a.trunc()) + 1);
    double c = std::exp(a0);
    for (int k = 0; k <= a.trunc(); ++k) {
        s[static_cast<std::size_t>(k)] = c;
        c /= (k + 1);
    }
    return a.compose_series(s);
}

inline Jet ln(const Jet& a) {
    const double a0 = a.value();
    if (!(a0 > 0.0)) throw std::domain_error("ln of a jet with non-positive constant term");
    std::vector<double> s(static_cast<std::size_t>(a.trunc()) + 1);
    s[0] = std::log(a0);
    double p = 1.0;
    for (int k = 1; k <= a.trunc(); ++k) {
        p /= a0;
        s[static_cast<std::size_t>(k)] = (k % 2 == 1 ? p : -p) / k;
    }
    return a.compose_series(s);
}

inline Jet sin(const Jet& a) {
    const double a0 = a.value();
    const double table[4] = {std::sin(a0), std::cos(a0), -std::sin(a0), -std::cos(a0)};
    std::vector<double> s(static_cast<std::size_t>(a.trunc()) + 1);
    double fac = 1.0;
    for (int k = 0; k <= a.trunc(); ++k) {
        if (k > 0) fac *= k;
        s[static_cast<std::size_t>(k)] = table[k % 4] / fac;
    }
    return a.compose_series(s);
}

inline Jet cos(const Jet& a) {
    const double a0 = a.value();
    const double table[4] = {std::cos(a0), -std::sin(a0), -std::cos(a0), std::sin(a0)};
    std::vector<double> s(static_cast<std::size_t>(a.trunc()) + 1);
    double fac = 1.0;
    for (int k = 0; k <= a.trunc(); ++k) {
        if (k > 0) fac *= k;
        s[static_cast<std::size_t>(k)] = table[k % 4] / fac;
    }
    return a.compose_series(s);
}

/// Raises a jet to a real power.  Integer exponents reduce to repeated
/// multiplication (and inversion for negative powers); other exponents
/// require a positive constant term.
inline Jet pow(const Jet& a, double p) {
    const double pr = std::nearbyint(p);
    if (p == pr && std::abs(p) <= 1e9) {
        long n = static_cast<long>(pr);
        if (n < 0) {
            if (a.value() == 0.0) throw std::domain_error("negative power of a jet with zero constant term");
            return Jet::constant(1.0, a.dim(), a.trunc()) / pow(a, static_cast<double>(-n));
        }
        Jet out = Jet::constant(1.0, a.dim(), a.trunc());
        Jet base = a;
        while (n > 0) {
            if (n & 1) out = out * base;
            n >>= 1;
            if (n > 0) base = base * base;
        }
        return out;
    }
    const double a0 = a.value();
    if (!(a0 > 0.0)) throw std::domain_error("non-integer power of a jet with non-positive constant term");
    std::vector<double> s(static_cast<std::size_t>(a.trunc()) + 1);
    double binom = 1.0;       // generalized binomial coefficient C(p, k)
    double scale = std::pow(a0, p);
    for (int k = 0; k <= a.trunc(); ++k) {
        s[static_cast<std::size_t>(k)] = binom * scale;
        binom *= (p - k) / (k + 1);
        scale /= a0;
    }
    return a.compose_series(s);
}

inline Jet sqrt(const Jet& a) {
    if (!(a.value() > 0.0)) throw std::domain_error("sqrt of a jet with non-positive constant term");
    return pow(a, 0.5);
}

inline Jet operator/(const Jet& a, const Jet& b) {
    a.require_matching(b);
    const double b0 = b.value();
    if (b0 == 0.0) throw std::domain_error("division by a jet with zero constant term");
    // 1/(b0 + h) = sum_k (-1)^k h^k / b0^(k+1)
    std::vector<double> s(static_cast<std::size_t>(b.trunc()) + 1);
    double c = 1.0 / b0;
    for (int k = 0; k <= b.trunc(); ++k) {
        s[static_cast<std::size_t>(k)] = (k % 2 == 0) ? c : -c;
        c /= b0;
    }
    return a * b.compose_series(s);
}

inline Jet operator/(double s, const Jet& b) { return Jet::constant(s, b.dim(), b.trunc()) / b; }

} // namespace peq
