#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "redtest/errors.hpp"
#include "redtest/similarity.hpp"
#include "redtest/trace.hpp"

namespace redtest {

// Weighting and thresholding for the redundancy score. beta sharpens the
// cutoff, epsilon is the similarity level treated as "redundant" for the
// model family at hand. Defaults follow the usual calibration: beta = 100,
// epsilon = 0.8 for block-structured models, 0.7 for plain stacks. Note that
// beta = 50 is also common — the score is stable for beta >= 50 — so reports
// always echo the beta actually used.
struct MsrsConfig {
    double beta = 100.0;
    double epsilon = 0.8;
    Estimator estimator = Estimator::unbiased;

    static MsrsConfig for_family(StructureFamily family) {
        MsrsConfig cfg;
        cfg.epsilon = family == StructureFamily::block ? 0.8 : 0.7;
        return cfg;
    }

    void validate() const {
        if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
        if (!(epsilon > 0.0 && epsilon < 1.0))
            throw std::invalid_argument("epsilon must lie in (0, 1)");
    }
};

// tanh(beta * (x - epsilon)). Algebraically the same as the ratio of
// exponentials but immune to their overflow for large beta; odd around
// x = epsilon and strictly increasing in x.
inline double scaled_tanh(double x, double beta, double epsilon) {
    return std::tanh(beta * (x - epsilon));
}

struct PairScore {
    std::string layer_a;  // deeper layer of the pair
    std::string layer_b;
    double cka = 0.0;
    double score = 0.0;  // 0.5 * scaled_tanh(cka) + 0.5, in [0, 1]
};

struct MsrsResult {
    double msrs = 0.0;
    std::vector<PairScore> pair_scores;  // all pairs a > b, fixed order
    MsrsConfig config;
};

// Sums the normalized pair scores over every unordered layer pair. Pairs are
// visited in fixed lexicographic (a, b) order, a > b, so the total is
// bit-reproducible. Result lies in [0, l(l-1)/2].
inline MsrsResult msrs(const SimilarityMatrix &sim, const MsrsConfig &config) {
    config.validate();
    MsrsResult result;
    result.config = config;
    const std::size_t l = sim.order();
    result.pair_scores.reserve(l * (l - 1) / 2);
    double total = 0.0;
    for (std::size_t a = 1; a < l; ++a) {
        for (std::size_t b = 0; b < a; ++b) {
            const double x = sim.values(a, b);
            const double score = 0.5 * scaled_tanh(x, config.beta, config.epsilon) + 0.5;
            total += score;
            result.pair_scores.push_back(
                PairScore{sim.layer_names[a], sim.layer_names[b], x, score});
        }
    }
    result.msrs = total;
    return result;
}

inline MsrsResult msrs(const ModelTrace &trace, const MsrsConfig &config, unsigned threads = 0) {
    config.validate();
    return msrs(similarity_matrix(trace, config.estimator, threads), config);
}

// Depth-indexed target score used as the normalizer when ranking
// architectures: zero up to a threshold depth, then linear.
struct BudgetProfile {
    std::string tag;
    std::size_t threshold_depth = 0;  // l0
    double slope = 0.0;
    double intercept = 0.0;

    double operator()(std::size_t depth) const {
        if (depth <= threshold_depth) return 0.0;
        return slope * static_cast<double>(depth) + intercept;
    }
};

inline BudgetProfile budget_profile_c10() { return BudgetProfile{"c10", 14, 7.6, -106.4}; }
inline BudgetProfile budget_profile_c100() { return BudgetProfile{"c100", 3, 2.4, -8.27}; }

inline BudgetProfile budget_profile(const std::string &tag) {
    if (tag == "c10" || tag == "C10") return budget_profile_c10();
    if (tag == "c100" || tag == "C100") return budget_profile_c100();
    throw Error(ErrorCode::UnknownProfile, "no budget profile named '" + tag + "'");
}

inline double msrs_budget(std::size_t depth, const BudgetProfile &profile) {
    if (depth < 1) throw std::invalid_argument("depth must be >= 1");
    return profile(depth);
}

inline double msrs_budget(std::size_t depth, const std::string &profile_tag) {
    return msrs_budget(depth, budget_profile(profile_tag));
}

// Least-squares polynomial fit of msrs against depth via the normal
// equations; degree 1 or 2. Coefficients come back lowest power first.
inline std::vector<double> fit_polynomial(const std::vector<std::pair<double, double>> &points,
                                          int degree) {
    if (degree != 1 && degree != 2) throw std::invalid_argument("degree must be 1 or 2");
    std::vector<double> depths;
    for (const auto &[x, y] : points)
        if (std::find(depths.begin(), depths.end(), x) == depths.end()) depths.push_back(x);
    const std::size_t m = static_cast<std::size_t>(degree) + 1;
    if (depths.size() < m)
        throw Error(ErrorCode::RankDeficient,
                    "need at least " + std::to_string(m) + " distinct depths, got " +
                        std::to_string(depths.size()));

    // A[i][j] = sum x^(i+j), rhs[i] = sum y x^i
    std::vector<std::vector<double>> a(m, std::vector<double>(m, 0.0));
    std::vector<double> rhs(m, 0.0);
    for (const auto &[x, y] : points) {
        double xp = 1.0;
        std::vector<double> powers(2 * m - 1);
        for (std::size_t k = 0; k < powers.size(); ++k) {
            powers[k] = xp;
            xp *= x;
        }
        for (std::size_t i = 0; i < m; ++i) {
            rhs[i] += y * powers[i];
            for (std::size_t j = 0; j < m; ++j) a[i][j] += powers[i + j];
        }
    }

    // Gaussian elimination with partial pivoting on the (m x m) system.
    for (std::size_t col = 0; col < m; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < m; ++r)
            if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
        if (a[pivot][col] == 0.0)
            throw Error(ErrorCode::RankDeficient, "normal equations are singular");
        std::swap(a[col], a[pivot]);
        std::swap(rhs[col], rhs[pivot]);
        for (std::size_t r = col + 1; r < m; ++r) {
            const double factor = a[r][col] / a[col][col];
            for (std::size_t c = col; c < m; ++c) a[r][c] -= factor * a[col][c];
            rhs[r] -= factor * rhs[col];
        }
    }
    std::vector<double> coeffs(m, 0.0);
    for (std::size_t i = m; i-- > 0;) {
        double v = rhs[i];
        for (std::size_t j = i + 1; j < m; ++j) v -= a[i][j] * coeffs[j];
        coeffs[i] = v / a[i][i];
    }
    return coeffs;
}

}  // namespace redtest
