#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "redtest/errors.hpp"
#include "redtest/similarity.hpp"
#include "redtest/trace.hpp"

namespace redtest {

// mu is the adjacent-similarity level above which the shallower layer of a
// pair is considered redundant. literal mode replays the greedy walk exactly
// as specified, which never emits the final layer; keep_last appends it,
// since a model cannot lose its output layer.
struct PruneConfig {
    enum class Mode { literal, keep_last };

    double mu = 0.8;
    Mode mode = Mode::keep_last;

    static PruneConfig for_family(StructureFamily family) {
        PruneConfig cfg;
        cfg.mu = family == StructureFamily::block ? 0.8 : 0.7;
        return cfg;
    }

    void validate() const {
        if (!(mu > 0.0 && mu < 1.0)) throw std::invalid_argument("mu must lie in (0, 1)");
    }
};

inline const char *prune_mode_name(PruneConfig::Mode m) {
    return m == PruneConfig::Mode::literal ? "literal" : "keep_last";
}

inline PruneConfig::Mode prune_mode_from_name(const std::string &name) {
    if (name == "literal") return PruneConfig::Mode::literal;
    if (name == "keep_last" || name == "keep-last") return PruneConfig::Mode::keep_last;
    throw std::invalid_argument("unknown prune mode '" + name + "'");
}

// Clamped unbiased CKA between layers (front, front+1); indices are 1-based.
struct AdjacentSimilarity {
    std::size_t front = 0;
    std::size_t back = 0;
    double cka = 0.0;
};

inline std::vector<AdjacentSimilarity> adjacent_similarities(const ModelTrace &trace,
                                                             unsigned threads = 0) {
    const std::size_t l = trace.layer_count();
    if (l < 2) throw Error(ErrorCode::TooFewLayers, "need at least 2 layers, got 1");
    std::vector<AdjacentSimilarity> result(l - 1);
    parallel_for(l - 1, threads, [&](std::size_t k) {
        const CkaValue v = cka(trace.layers[k], trace.layers[k + 1], Estimator::unbiased);
        result[k] = AdjacentSimilarity{k + 1, k + 2, v.clamped};
    });
    return result;
}

// Where the pruned model will need surgery: a consecutive retained pair
// whose widths no longer line up. expected_input_p is the width of the next
// retained layer's original predecessor — what that layer was built to
// consume.
struct DimensionMismatch {
    std::size_t front_layer = 0;
    std::size_t next_layer = 0;
    std::size_t front_p = 0;
    std::size_t expected_input_p = 0;
};

struct PrunePlan {
    std::vector<std::size_t> retained;  // 1-based, ascending
    std::vector<std::size_t> dropped;
    std::vector<AdjacentSimilarity> adjacent_cka;
    std::vector<DimensionMismatch> mismatches;
    PruneConfig config;
};

// The greedy walk over adjacent similarities: visit i = 2..l with cur
// starting at 1; a dissimilar pair (cka < mu) keeps cur, a similar one drops
// it; either way cur advances to i. The walk alone decides layers 1..l-1;
// the final layer's fate is the mode's call.
inline PrunePlan prune_plan_from_similarities(const std::vector<AdjacentSimilarity> &adjacent,
                                              const std::vector<std::size_t> &layer_widths,
                                              const PruneConfig &config) {
    config.validate();
    const std::size_t l = layer_widths.size();
    if (l < 2) throw Error(ErrorCode::TooFewLayers, "need at least 2 layers");
    if (adjacent.size() != l - 1)
        throw std::invalid_argument("expected one adjacent similarity per consecutive pair");

    PrunePlan plan;
    plan.config = config;
    plan.adjacent_cka = adjacent;
    std::size_t cur = 1;
    for (std::size_t i = 2; i <= l; ++i) {
        if (adjacent[i - 2].cka < config.mu)
            plan.retained.push_back(cur);
        else
            plan.dropped.push_back(cur);
        cur = i;
    }
    if (config.mode == PruneConfig::Mode::keep_last)
        plan.retained.push_back(l);
    else
        plan.dropped.push_back(l);

    for (std::size_t k = 0; k + 1 < plan.retained.size(); ++k) {
        const std::size_t front = plan.retained[k];
        const std::size_t next = plan.retained[k + 1];
        const std::size_t front_p = layer_widths[front - 1];
        const std::size_t expected = layer_widths[next - 2];
        if (front_p != expected)
            plan.mismatches.push_back(DimensionMismatch{front, next, front_p, expected});
    }
    return plan;
}

inline PrunePlan prune_plan(const ModelTrace &trace, const PruneConfig &config,
                            unsigned threads = 0) {
    std::vector<std::size_t> widths;
    widths.reserve(trace.layer_count());
    for (const auto &layer : trace.layers) widths.push_back(layer.p());
    return prune_plan_from_similarities(adjacent_similarities(trace, threads), widths, config);
}

struct LayerCost {
    double params = 0.0;
    double flops = 0.0;
    double latency = 0.0;
};

struct ReductionReport {
    double params_pct = 0.0;
    double flops_pct = 0.0;
    double latency_pct = 0.0;
};

// Share of each cost metric sitting in the dropped layers, as a percentage
// of the whole model. Post-surgery dimension changes are not modeled.
inline ReductionReport expected_reduction(const PrunePlan &plan,
                                          const std::vector<LayerCost> &costs) {
    const std::size_t l = plan.retained.size() + plan.dropped.size();
    if (costs.size() != l)
        throw Error(ErrorCode::MissingCost, "cost model covers " + std::to_string(costs.size()) +
                                                " layers, trace has " + std::to_string(l));
    LayerCost total{}, dropped{};
    for (const auto &c : costs) {
        total.params += c.params;
        total.flops += c.flops;
        total.latency += c.latency;
    }
    for (std::size_t idx : plan.dropped) {
        const LayerCost &c = costs[idx - 1];
        dropped.params += c.params;
        dropped.flops += c.flops;
        dropped.latency += c.latency;
    }
    auto pct = [](double part, double whole) { return whole == 0.0 ? 0.0 : 100.0 * part / whole; };
    return ReductionReport{pct(dropped.params, total.params), pct(dropped.flops, total.flops),
                           pct(dropped.latency, total.latency)};
}

}  // namespace redtest
