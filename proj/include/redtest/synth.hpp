#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "redtest/errors.hpp"
#include "redtest/matrix.hpp"
#include "redtest/rng.hpp"
#include "redtest/trace.hpp"

namespace redtest {

// Blueprint for one synthetic layer. rho controls how much of the previous
// layer's signal carries over: 0 gives an independent layer, 1 an exact
// orthonormal image of the previous one. rho of the first layer is ignored.
struct SynthLayerSpec {
    std::size_t p = 0;
    double rho = 0.0;
    // Use W = I instead of a random orthonormal map (needs p == previous p).
    // Lets tests build layers that are bit-identical up to the mixing step.
    bool identity_map = false;
};

namespace detail {

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, GaussianSource &g) {
    Matrix m(rows, cols);
    for (double &v : m.data()) v = g.next();
    return m;
}

// Random matrix with orthonormal columns: Gaussian fill + modified
// Gram-Schmidt. Gaussian matrices are well conditioned, one pass suffices.
inline Matrix orthonormal_columns(std::size_t rows, std::size_t cols, GaussianSource &g) {
    Matrix w = gaussian_matrix(rows, cols, g);
    for (std::size_t j = 0; j < cols; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double proj = 0.0;
            for (std::size_t r = 0; r < rows; ++r) proj += w(r, k) * w(r, j);
            for (std::size_t r = 0; r < rows; ++r) w(r, j) -= proj * w(r, k);
        }
        double norm = 0.0;
        for (std::size_t r = 0; r < rows; ++r) norm += w(r, j) * w(r, j);
        norm = std::sqrt(norm);
        for (std::size_t r = 0; r < rows; ++r) w(r, j) /= norm;
    }
    return w;
}

}  // namespace detail

// Deterministic synthetic trace generator. The draw order is fixed: layer 1
// consumes n*p1 normals; every later layer consumes its mixing matrix first
// (when rho > 0 and no identity map) and then n*p fresh normals. A call is a
// pure function of (n, specs, seed).
inline ModelTrace synth_trace(std::size_t n, const std::vector<SynthLayerSpec> &specs,
                              std::uint64_t seed,
                              StructureFamily family = StructureFamily::plain) {
    if (n < 4) throw Error(ErrorCode::BadSpec, "synthetic trace needs n >= 4");
    if (specs.empty()) throw Error(ErrorCode::BadSpec, "no layer specs given");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto &s = specs[i];
        if (s.p == 0) throw Error(ErrorCode::BadSpec, "layer width must be positive");
        if (!(s.rho >= 0.0 && s.rho <= 1.0))
            throw Error(ErrorCode::BadSpec, "rho must lie in [0, 1]");
        if (i > 0 && s.rho > 0.0 && !s.identity_map && s.p > specs[i - 1].p)
            throw Error(ErrorCode::BadSpec,
                        "rho > 0 requires p[i+1] <= p[i] (no orthonormal map exists otherwise)");
        if (i > 0 && s.identity_map && s.p != specs[i - 1].p)
            throw Error(ErrorCode::BadSpec, "identity_map requires equal widths");
        if (i == 0 && s.identity_map)
            throw Error(ErrorCode::BadSpec, "identity_map is meaningless for the first layer");
    }

    GaussianSource g(seed);
    std::vector<ActivationMatrix> layers;
    layers.reserve(specs.size());
    Matrix prev = detail::gaussian_matrix(n, specs[0].p, g);
    layers.emplace_back("layer_1", prev);
    for (std::size_t i = 1; i < specs.size(); ++i) {
        const auto &s = specs[i];
        Matrix mixed;
        if (s.rho > 0.0) {
            if (s.identity_map) {
                mixed = prev;
            } else {
                const Matrix w = detail::orthonormal_columns(specs[i - 1].p, s.p, g);
                mixed = matmul(prev, w);
            }
        }
        Matrix fresh = detail::gaussian_matrix(n, s.p, g);
        Matrix next(n, s.p);
        if (s.rho == 0.0) {
            next = std::move(fresh);
        } else {
            const double carry = s.rho;
            const double noise = std::sqrt(1.0 - s.rho * s.rho);
            for (std::size_t k = 0; k < next.data().size(); ++k)
                next.data()[k] = carry * mixed.data()[k] + noise * fresh.data()[k];
        }
        layers.emplace_back("layer_" + std::to_string(i + 1), next);
        prev = std::move(next);
    }
    return ModelTrace("synthetic", family, std::move(layers));
}

}  // namespace redtest
