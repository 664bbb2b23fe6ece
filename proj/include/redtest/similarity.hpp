#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "redtest/errors.hpp"
#include "redtest/matrix.hpp"
#include "redtest/parallel.hpp"
#include "redtest/trace.hpp"

namespace redtest {

enum class Estimator { biased, unbiased };

inline const char *estimator_name(Estimator e) {
    return e == Estimator::biased ? "biased" : "unbiased";
}

inline Estimator estimator_from_name(const std::string &name) {
    if (name == "biased") return Estimator::biased;
    if (name == "unbiased") return Estimator::unbiased;
    throw std::invalid_argument("unknown estimator '" + name + "'");
}

// Pairwise sample inner products of one layer's activations: S = F·Fᵀ.
// Symmetric by mirroring, positive semidefinite by construction, and of
// order n regardless of the layer's width — which is what lets layers of
// different shape be compared at all.
class GramMatrix {
public:
    GramMatrix() = default;

    static GramMatrix from_matrix(Matrix s) {
        if (s.rows() != s.cols()) throw std::invalid_argument("gram matrix must be square");
        for (std::size_t a = 0; a < s.rows(); ++a)
            for (std::size_t b = a + 1; b < s.cols(); ++b)
                if (s(a, b) != s(b, a))
                    throw std::invalid_argument("gram matrix must be symmetric");
        GramMatrix g;
        g.values_ = std::move(s);
        return g;
    }

    std::size_t order() const { return values_.rows(); }
    const Matrix &values() const { return values_; }
    double operator()(std::size_t a, std::size_t b) const { return values_(a, b); }

    // Copy with the diagonal zeroed; the form the unbiased estimator consumes.
    Matrix hollow() const {
        Matrix h = values_;
        for (std::size_t i = 0; i < h.rows(); ++i) h(i, i) = 0.0;
        return h;
    }

    friend GramMatrix gram(const ActivationMatrix &);

private:
    Matrix values_;
};

// S[a][b] = dot(row a, row b). Feature columns are packed into L2-sized
// chunks so the O(n²p) accumulation streams from cache instead of memory;
// only the lower triangle is computed, then mirrored.
inline GramMatrix gram(const ActivationMatrix &f) {
    const std::size_t n = f.n();
    const std::size_t p = f.p();
    Matrix s(n, n, 0.0);
    constexpr std::size_t kChunk = 64;
    std::vector<double> packed(n * std::min(p, kChunk));
    for (std::size_t c0 = 0; c0 < p; c0 += kChunk) {
        const std::size_t width = std::min(kChunk, p - c0);
        for (std::size_t r = 0; r < n; ++r) {
            const double *src = f.data.row(r) + c0;
            double *dst = packed.data() + r * width;
            for (std::size_t k = 0; k < width; ++k) dst[k] = src[k];
        }
        for (std::size_t a = 0; a < n; ++a) {
            const double *x = packed.data() + a * width;
            for (std::size_t b = 0; b <= a; ++b) {
                const double *y = packed.data() + b * width;
                double acc = 0.0;
                for (std::size_t k = 0; k < width; ++k) acc += x[k] * y[k];
                s(a, b) += acc;
            }
        }
    }
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) s(a, b) = s(b, a);
    GramMatrix g;
    g.values_ = std::move(s);
    return g;
}

namespace detail {

inline void require_same_order(const GramMatrix &a, const GramMatrix &b) {
    if (a.order() != b.order())
        throw Error(ErrorCode::OrderMismatch, "gram matrices have orders " +
                                                  std::to_string(a.order()) + " and " +
                                                  std::to_string(b.order()));
}

// Double-centered copy HSH without materializing the centering matrix:
// C[a][b] = S[a][b] - rowmean[a] - rowmean[b] + grandmean. Mirrored so the
// result is bitwise symmetric.
inline Matrix double_center(const GramMatrix &g) {
    const std::size_t n = g.order();
    std::vector<double> row_mean(n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
        double sum = 0.0;
        for (std::size_t b = 0; b < n; ++b) sum += g(a, b);
        row_mean[a] = sum / static_cast<double>(n);
    }
    double grand = 0.0;
    for (double m : row_mean) grand += m;
    grand /= static_cast<double>(n);
    Matrix c(n, n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b <= a; ++b) {
            const double v = g(a, b) - row_mean[a] - row_mean[b] + grand;
            c(a, b) = v;
            c(b, a) = v;
        }
    return c;
}

inline double elementwise_dot(const Matrix &a, const Matrix &b) {
    const std::vector<double> &x = a.data();
    const std::vector<double> &y = b.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
    return acc;
}

}  // namespace detail

// Biased dependence estimate between two gram matrices:
// tr(S_i H S_j H) / (n-1)², evaluated as the elementwise product of the two
// double-centered grams. Symmetric in its arguments down to the last bit
// (products commute, the accumulation order is argument-independent).
inline double hsic_biased(const GramMatrix &si, const GramMatrix &sj) {
    detail::require_same_order(si, sj);
    const std::size_t n = si.order();
    if (n < 2) throw Error(ErrorCode::TooFewSamples, "biased HSIC needs n >= 2");
    const Matrix ci = detail::double_center(si);
    const Matrix cj = detail::double_center(sj);
    const double denom = static_cast<double>(n - 1) * static_cast<double>(n - 1);
    return detail::elementwise_dot(ci, cj) / denom;
}

// Unbiased dependence estimate; may be slightly negative, since an unbiased
// estimator of a nonnegative quantity can undershoot. With S̃ the gram with
// its diagonal zeroed:
//   (1/(n(n-3))) [ tr(S̃_i S̃_j) + (1ᵀS̃_i1)(1ᵀS̃_j1)/((n-1)(n-2))
//                  - (2/(n-2)) 1ᵀS̃_iS̃_j1 ]
// Both the trace and the last term reduce to O(n²) sums over the hollow
// grams and their row sums. Bitwise symmetric in its arguments.
inline double hsic_unbiased(const GramMatrix &si, const GramMatrix &sj) {
    detail::require_same_order(si, sj);
    const std::size_t n = si.order();
    if (n < 4) throw Error(ErrorCode::TooFewSamples, "unbiased HSIC needs n >= 4");

    const Matrix hi = si.hollow();
    const Matrix hj = sj.hollow();
    const double nn = static_cast<double>(n);

    const double trace_term = detail::elementwise_dot(hi, hj);

    std::vector<double> ri(n, 0.0), rj(n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
        double si_sum = 0.0, sj_sum = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            si_sum += hi(a, b);
            sj_sum += hj(a, b);
        }
        ri[a] = si_sum;
        rj[a] = sj_sum;
    }
    double total_i = 0.0, total_j = 0.0, cross = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        total_i += ri[a];
        total_j += rj[a];
        cross += ri[a] * rj[a];
    }

    const double bracket = trace_term + (total_i * total_j) / ((nn - 1.0) * (nn - 2.0)) -
                           (2.0 / (nn - 2.0)) * cross;
    return bracket / (nn * (nn - 3.0));
}

inline double hsic(const GramMatrix &a, const GramMatrix &b, Estimator est) {
    return est == Estimator::biased ? hsic_biased(a, b) : hsic_unbiased(a, b);
}

// Self-dependence below this is treated as a constant (degenerate)
// representation rather than rounding noise.
inline constexpr double kDegenerateHsicThreshold = 1e-12;

struct CkaValue {
    double raw = 0.0;      // unclamped ratio; can dip below 0 or above 1
    double clamped = 0.0;  // min(max(raw, 0), 1)
};

namespace detail {

inline CkaValue cka_from_hsic(double cross, double self_i, double self_j) {
    CkaValue v;
    v.raw = cross / (std::sqrt(self_i) * std::sqrt(self_j));
    v.clamped = std::min(std::max(v.raw, 0.0), 1.0);
    return v;
}

inline void require_nondegenerate(double self_hsic, const std::string &label) {
    if (!(self_hsic > kDegenerateHsicThreshold))
        throw Error(ErrorCode::DegenerateRepresentation,
                    label + " has vanishing self-HSIC (constant activations?)");
}

}  // namespace detail

// Normalized alignment of two layers' gram structure. Invariant to isotropic
// scaling and to orthogonal maps of either representation. A bitwise-equal
// pair short-circuits to exactly 1 instead of running the 0/0-prone ratio.
inline CkaValue cka(const ActivationMatrix &fi, const ActivationMatrix &fj, Estimator est) {
    if (fi.n() != fj.n())
        throw Error(ErrorCode::OrderMismatch, "layers '" + fi.layer_name + "' and '" +
                                                  fj.layer_name + "' differ in sample count");
    if (fi.data.same_bits(fj.data)) return CkaValue{1.0, 1.0};
    const GramMatrix si = gram(fi);
    const GramMatrix sj = gram(fj);
    const double self_i = hsic(si, si, est);
    const double self_j = hsic(sj, sj, est);
    detail::require_nondegenerate(self_i, "layer '" + fi.layer_name + "'");
    detail::require_nondegenerate(self_j, "layer '" + fj.layer_name + "'");
    return detail::cka_from_hsic(hsic(si, sj, est), self_i, self_j);
}

// All-pairs layer similarity. values is clamped to [0, 1] with a unit
// diagonal; raw_values keeps the unclamped ratios for reporting.
struct SimilarityMatrix {
    std::vector<std::string> layer_names;
    Matrix values;
    Matrix raw_values;

    std::size_t order() const { return values.rows(); }
};

// Each layer's gram and self-HSIC are computed once and shared by all pairs.
// Pairs are independent and write to fixed slots, so results are identical
// for any thread count.
inline SimilarityMatrix similarity_matrix(const ModelTrace &trace, Estimator est,
                                          unsigned threads = 0) {
    const std::size_t l = trace.layer_count();
    SimilarityMatrix sim;
    sim.layer_names.reserve(l);
    for (const auto &layer : trace.layers) sim.layer_names.push_back(layer.layer_name);
    sim.values = Matrix(l, l, 0.0);
    sim.raw_values = Matrix(l, l, 0.0);

    std::vector<GramMatrix> grams(l);
    std::vector<double> self_hsic(l, 0.0);
    parallel_for(l, threads, [&](std::size_t i) {
        grams[i] = gram(trace.layers[i]);
        self_hsic[i] = hsic(grams[i], grams[i], est);
    });
    for (std::size_t i = 0; i < l; ++i)
        detail::require_nondegenerate(self_hsic[i], "layer '" + trace.layers[i].layer_name + "'");

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(l * (l - 1) / 2);
    for (std::size_t a = 0; a < l; ++a)
        for (std::size_t b = a + 1; b < l; ++b) pairs.emplace_back(a, b);

    parallel_for(pairs.size(), threads, [&](std::size_t k) {
        const auto [a, b] = pairs[k];
        CkaValue v;
        if (trace.layers[a].data.same_bits(trace.layers[b].data)) {
            v = CkaValue{1.0, 1.0};
        } else {
            v = detail::cka_from_hsic(hsic(grams[a], grams[b], est), self_hsic[a], self_hsic[b]);
        }
        sim.raw_values(a, b) = v.raw;
        sim.raw_values(b, a) = v.raw;
        sim.values(a, b) = v.clamped;
        sim.values(b, a) = v.clamped;
    });
    for (std::size_t i = 0; i < l; ++i) {
        sim.values(i, i) = 1.0;
        sim.raw_values(i, i) = 1.0;
    }
    return sim;
}

}  // namespace redtest
