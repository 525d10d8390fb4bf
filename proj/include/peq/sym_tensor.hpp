#pragma once

#include "peq/jet.hpp"

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace peq {

enum class Variance { Cov, Contra };

/// Shared enumeration of the canonical index multisets of a symmetric tensor:
/// all non-decreasing tuples of the given degree over {0..dim-1}, in
/// lexicographic order, with their multiplicities degree!/prod(count_v!).
class SymLayout {
public:
    static std::shared_ptr<const SymLayout> get(int dim, int degree) {
        if (dim < 2 || dim > 7) throw std::invalid_argument("tensor dimension out of range");
        if (degree < 0 || degree > 12) throw std::invalid_argument("tensor degree out of range");
        static std::mutex mu;
        static std::unordered_map<int, std::shared_ptr<const SymLayout>> cache;
        std::lock_guard<std::mutex> lock(mu);
        const int key = dim * 64 + degree;
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        auto layout = std::shared_ptr<const SymLayout>(new SymLayout(dim, degree));
        cache.emplace(key, layout);
        return layout;
    }

    int dim() const { return dim_; }
    int degree() const { return degree_; }
    std::size_t size() const { return tuples_.size(); }
    const std::vector<int>& tuple(std::size_t r) const { return tuples_[r]; }
    double multiplicity(std::size_t r) const { return mult_[r]; }

    /// Rank of a sorted (non-decreasing) tuple.
    int rank_sorted(std::span<const int> idx) const {
        if (static_cast<int>(idx.size()) != degree_) throw std::invalid_argument("tensor index length mismatch");
        auto it = rank_.find(pack(idx));
        if (it == rank_.end()) throw std::out_of_range("tensor index entry out of range");
        return it->second;
    }

    /// Rank of an arbitrary tuple; sorts a copy.
    int rank(std::span<const int> idx) const {
        std::vector<int> s(idx.begin(), idx.end());
        std::sort(s.begin(), s.end());
        return rank_sorted(s);
    }

private:
    SymLayout(int dim, int degree) : dim_(dim), degree_(degree) {
        std::vector<int> t(static_cast<std::size_t>(degree), 0);
        emit(t, 0, 0);
    }

    void emit(std::vector<int>& t, int pos, int lo) {
        if (pos == degree_) {
            double m = 1.0;
            int run = 1;
            for (std::size_t i = 1; i <= t.size(); ++i) {
                if (i < t.size() && t[i] == t[i - 1]) {
                    ++run;
                    continue;
                }
                for (int q = 2; q <= run; ++q) m /= q;
                run = 1;
            }
            for (int q = 2; q <= degree_; ++q) m *= q;
            rank_.emplace(pack(t), static_cast<int>(tuples_.size()));
            tuples_.push_back(t);
            mult_.push_back(m);
            return;
        }
        for (int v = lo; v < dim_; ++v) {
            t[static_cast<std::size_t>(pos)] = v;
            emit(t, pos + 1, v);
        }
    }

    std::uint64_t pack(std::span<const int> idx) const {
        std::uint64_t key = 0;
        for (int v : idx) {
            if (v < 0 || v >= dim_) throw std::out_of_range("tensor index entry out of range");
            key = key * 8 + static_cast<std::uint64_t>(v) + 1;
        }
        return key;
    }

    int dim_;
    int degree_;
    std::vector<std::vector<int>> tuples_;
    std::vector<double> mult_;
    std::unordered_map<std::uint64_t, int> rank_;
};

/// Symmetric tensor of fixed variance and degree with entries of type T
/// (double, or Jet for field values).  Stores one entry per canonical index
/// multiset.  The zero prototype fixes the shape of T-valued entries.
template <Variance V, typename T>
class SymTensor {
public:
    SymTensor(int dim, int degree, T zero)
        : layout_(SymLayout::get(dim, degree)), zero_(std::move(zero)), c_(layout_->size(), zero_) {}

    SymTensor(int dim, int degree)
        requires std::default_initializable<T>
        : SymTensor(dim, degree, T{}) {}

    int dim() const { return layout_->dim(); }
    int degree() const { return layout_->degree(); }
    const SymLayout& layout() const { return *layout_; }
    const T& zero_prototype() const { return zero_; }

    T& entry(std::size_t r) { return c_[r]; }
    const T& entry(std::size_t r) const { return c_[r]; }

    T& at(std::span<const int> idx) { return c_[static_cast<std::size_t>(layout_->rank(idx))]; }
    const T& at(std::span<const int> idx) const { return c_[static_cast<std::size_t>(layout_->rank(idx))]; }
    T& at(std::initializer_list<int> idx) { return at(std::span<const int>(idx.begin(), idx.size())); }
    const T& at(std::initializer_list<int> idx) const { return at(std::span<const int>(idx.begin(), idx.size())); }

    SymTensor operator+(const SymTensor& o) const {
        require_same(o);
        SymTensor out = *this;
        for (std::size_t r = 0; r < c_.size(); ++r) out.c_[r] = out.c_[r] + o.c_[r];
        return out;
    }

    SymTensor operator-(const SymTensor& o) const {
        require_same(o);
        SymTensor out = *this;
        for (std::size_t r = 0; r < c_.size(); ++r) out.c_[r] = out.c_[r] - o.c_[r];
        return out;
    }

    SymTensor operator-() const {
        SymTensor out = *this;
        for (auto& v : out.c_) v = -v;
        return out;
    }

    /// Entry-wise product with a scalar factor (double, or a T).
    template <typename U>
    SymTensor scaled(const U& f) const {
        SymTensor out = *this;
        for (auto& v : out.c_) v = v * f;
        return out;
    }

private:
    void require_same(const SymTensor& o) const {
        if (layout_ != o.layout_) throw std::invalid_argument("tensor shape mismatch");
    }

    std::shared_ptr<const SymLayout> layout_;
    T zero_;
    std::vector<T> c_;
};

using SymCov = SymTensor<Variance::Cov, double>;
using SymContra = SymTensor<Variance::Contra, double>;
using SymCovJet = SymTensor<Variance::Cov, Jet>;
using SymContraJet = SymTensor<Variance::Contra, Jet>;

namespace detail {

// Visits every sub-multiset of `take` elements of the sorted tuple `kappa`,
// passing (alpha, beta, weight) with weight = prod_v C(count_v, taken_v); the
// number of position choices realizing that split.
template <typename F>
void for_each_split(const std::vector<int>& kappa, int take, F&& visit) {
    // run-length encode kappa
    std::vector<std::pair<int, int>> runs; // (value, count)
    for (int v : kappa) {
        if (!runs.empty() && runs.back().first == v)
            ++runs.back().second;
        else
            runs.emplace_back(v, 1);
    }
    std::vector<int> taken(runs.size(), 0);
    std::vector<int> alpha, beta;
    auto binom = [](int n, int k) {
        double b = 1.0;
        for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
        return b;
    };
    std::function<void(std::size_t, int, double)> rec = [&](std::size_t ri, int left, double w) {
        if (ri == runs.size()) {
            if (left != 0) return;
            alpha.clear();
            beta.clear();
            for (std::size_t i = 0; i < runs.size(); ++i) {
                for (int q = 0; q < taken[i]; ++q) alpha.push_back(runs[i].first);
                for (int q = 0; q < runs[i].second - taken[i]; ++q) beta.push_back(runs[i].first);
            }
            visit(alpha, beta, w);
            return;
        }
        const int cap = std::min(runs[ri].second, left);
        for (int q = 0; q <= cap; ++q) {
            taken[ri] = q;
            rec(ri + 1, left - q, w * binom(runs[ri].second, q));
        }
        taken[ri] = 0;
    };
    rec(0, take, 1.0);
}

} // namespace detail

/// Symmetric product: sym(a (x) b), normalized so that the product of
/// symmetric powers of covectors matches polynomial multiplication of the
/// associated polynomials up to the standard 1/C(p+q,p) factor.
template <Variance V, typename T>
SymTensor<V, T> sym_product(const SymTensor<V, T>& a, const SymTensor<V, T>& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("tensor dimension mismatch");
    const int p = a.degree(), q = b.degree();
    SymTensor<V, T> out(a.dim(), p + q, a.zero_prototype());
    double choose = 1.0;
    for (int i = 1; i <= p; ++i) choose = choose * (p + q - p + i) / i;
    const SymLayout& layout = out.layout();
    for (std::size_t r = 0; r < layout.size(); ++r) {
        T acc = a.zero_prototype();
        detail::for_each_split(layout.tuple(r), p, [&](const std::vector<int>& alpha, const std::vector<int>& beta, double w) {
            acc = acc + a.at(alpha) * b.at(beta) * w;
        });
        out.entry(r) = acc * (1.0 / choose);
    }
    return out;
}

/// Contraction of a covariant tensor into a contravariant one over all of the
/// covariant slots: (a . s)^mu = sum over index tuples alpha of
/// a_alpha s^{alpha mu}.  Degree of a must not exceed the degree of s.
template <typename T>
SymTensor<Variance::Contra, T> contract(const SymTensor<Variance::Cov, T>& a,
                                        const SymTensor<Variance::Contra, T>& s) {
    if (a.dim() != s.dim()) throw std::invalid_argument("tensor dimension mismatch");
    const int p = a.degree(), q = s.degree();
    if (p > q) throw std::invalid_argument("contraction degree exceeds symbol degree");
    SymTensor<Variance::Contra, T> out(s.dim(), q - p, s.zero_prototype());
    const SymLayout& alayout = a.layout();
    const SymLayout& olayout = out.layout();
    std::vector<int> merged(static_cast<std::size_t>(q));
    for (std::size_t ro = 0; ro < olayout.size(); ++ro) {
        const std::vector<int>& mu = olayout.tuple(ro);
        T acc = s.zero_prototype();
        for (std::size_t ra = 0; ra < alayout.size(); ++ra) {
            const std::vector<int>& alpha = alayout.tuple(ra);
            std::merge(alpha.begin(), alpha.end(), mu.begin(), mu.end(), merged.begin());
            acc = acc + a.entry(ra) * s.at(merged) * alayout.multiplicity(ra);
        }
        out.entry(ro) = acc;
    }
    return out;
}

/// Full pairing of equal-degree tensors: sum over all index tuples of
/// a_{i1..ip} s^{i1..ip}.
template <typename T>
T pairing(const SymTensor<Variance::Cov, T>& a, const SymTensor<Variance::Contra, T>& s) {
    if (a.dim() != s.dim() || a.degree() != s.degree())
        throw std::invalid_argument("pairing requires matching shape");
    const SymLayout& layout = a.layout();
    T acc = s.zero_prototype();
    for (std::size_t r = 0; r < layout.size(); ++r)
        acc = acc + a.entry(r) * s.entry(r) * layout.multiplicity(r);
    return acc;
}

/// Evaluates the tensor as a homogeneous polynomial on a (co)vector:
/// sum over all index tuples of s_{i1..ip} xi_{i1} ... xi_{ip}.
template <Variance V, typename T>
T evaluate(const SymTensor<V, T>& s, std::span<const double> xi) {
    if (static_cast<int>(xi.size()) != s.dim()) throw std::invalid_argument("vector dimension mismatch");
    const SymLayout& layout = s.layout();
    T acc = s.zero_prototype();
    for (std::size_t r = 0; r < layout.size(); ++r) {
        double monom = layout.multiplicity(r);
        for (int v : layout.tuple(r)) monom *= xi[static_cast<std::size_t>(v)];
        acc = acc + s.entry(r) * monom;
    }
    return acc;
}

} // namespace peq
