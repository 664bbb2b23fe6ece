#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "redtest/errors.hpp"

namespace redtest {

// One candidate architecture's statistics. accuracy is stored normalized to
// [0, 1]; resource fields and the redundancy score are optional on ingest
// and validated lazily against the scoring config.
struct CandidateRecord {
    std::string id;
    double accuracy = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> latency_s;  // seconds per image
    std::optional<double> params_m;   // millions of parameters
    std::optional<double> flops_m;    // millions of FLOPs
    std::optional<double> msrs;
};

enum class ResourceKind { latency, params, flops, none };

inline const char *resource_name(ResourceKind r) {
    switch (r) {
        case ResourceKind::latency: return "latency";
        case ResourceKind::params: return "params";
        case ResourceKind::flops: return "flops";
        case ResourceKind::none: return "none";
    }
    return "none";
}

inline ResourceKind resource_from_name(const std::string &name) {
    if (name == "latency") return ResourceKind::latency;
    if (name == "params") return ResourceKind::params;
    if (name == "flops") return ResourceKind::flops;
    if (name == "none") return ResourceKind::none;
    throw std::invalid_argument("unknown resource kind '" + name + "'");
}

// Scoring hyperparameters: score = ACC * [lambda * R/B + (1-lambda) * MSRS/M]^w
// where R/B is the chosen resource over its budget. lambda = 1 reduces to
// pure resource-aware scoring; resource = none forces lambda = 0.
struct RankingConfig {
    ResourceKind resource = ResourceKind::none;
    double expected_latency_s = 0.0;  // T
    double expected_params_m = 0.0;   // P
    double expected_flops_m = 0.0;    // F
    double expected_msrs = 0.0;       // M
    double w = 0.0;
    double lambda = 0.0;

    double resource_budget() const {
        switch (resource) {
            case ResourceKind::latency: return expected_latency_s;
            case ResourceKind::params: return expected_params_m;
            case ResourceKind::flops: return expected_flops_m;
            case ResourceKind::none: return 0.0;
        }
        return 0.0;
    }

    RankingConfig normalized() const {
        RankingConfig cfg = *this;
        if (cfg.resource == ResourceKind::none) cfg.lambda = 0.0;
        cfg.validate();
        return cfg;
    }

    void validate() const {
        if (!(lambda >= 0.0 && lambda <= 1.0))
            throw std::invalid_argument("lambda must lie in [0, 1]");
        if (resource != ResourceKind::none && lambda > 0.0 && !(resource_budget() > 0.0))
            throw std::invalid_argument(std::string("expected ") + resource_name(resource) +
                                        " budget must be positive");
        if (lambda < 1.0 && !(expected_msrs > 0.0))
            throw std::invalid_argument("expected MSRS (M) must be positive when lambda < 1");
    }
};

namespace detail {

inline double require_field(const std::optional<double> &field, const std::string &id,
                            const char *name) {
    if (!field)
        throw Error(ErrorCode::MissingField,
                    "candidate '" + id + "' is missing required field '" + name + "'");
    return *field;
}

}  // namespace detail

// The power is evaluated as exp(w * ln(base)); a non-positive base has no
// defined score and is reported rather than clamped (a zero-MSRS candidate
// under w < 0 would otherwise score infinite).
inline double score_candidate(const CandidateRecord &record, const RankingConfig &config) {
    if (std::isnan(record.accuracy))
        throw Error(ErrorCode::MissingField,
                    "candidate '" + record.id + "' is missing required field 'accuracy'");
    double base = 0.0;
    if (config.lambda > 0.0) {
        double resource = 0.0;
        switch (config.resource) {
            case ResourceKind::latency:
                resource = detail::require_field(record.latency_s, record.id, "latency_s");
                break;
            case ResourceKind::params:
                resource = detail::require_field(record.params_m, record.id, "params_m");
                break;
            case ResourceKind::flops:
                resource = detail::require_field(record.flops_m, record.id, "flops_m");
                break;
            case ResourceKind::none:
                throw std::invalid_argument("lambda > 0 requires a resource kind");
        }
        base += config.lambda * (resource / config.resource_budget());
    }
    if (config.lambda < 1.0) {
        const double m = detail::require_field(record.msrs, record.id, "msrs");
        base += (1.0 - config.lambda) * (m / config.expected_msrs);
    }
    if (!(base > 0.0))
        throw Error(ErrorCode::NonPositiveBase,
                    "candidate '" + record.id + "' has non-positive scoring base");
    return record.accuracy * std::exp(config.w * std::log(base));
}

struct RankedCandidate {
    CandidateRecord record;
    double score = 0.0;
    std::size_t rank = 0;
};

// Single pass with strict-inequality updates, so the earliest of any tied
// candidates wins.
inline RankedCandidate select_best(const std::vector<CandidateRecord> &candidates,
                                   const RankingConfig &config_in) {
    if (candidates.empty()) throw Error(ErrorCode::EmptyCandidateSet, "no candidates to rank");
    const RankingConfig config = config_in.normalized();
    std::size_t best_index = 0;
    double best_score = score_candidate(candidates[0], config);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double s = score_candidate(candidates[i], config);
        if (s > best_score) {
            best_score = s;
            best_index = i;
        }
    }
    return RankedCandidate{candidates[best_index], best_score, 1};
}

struct AggregateStats {
    double avg_accuracy = std::numeric_limits<double>::quiet_NaN();
    double avg_msrs = std::numeric_limits<double>::quiet_NaN();
    double avg_resource = std::numeric_limits<double>::quiet_NaN();
};

struct RankingResult {
    std::vector<RankedCandidate> top;
    AggregateStats aggregates;
};

// Keeps the ceil(N * permille / 1000) highest-scoring candidates, ties broken
// by ascending id for reproducible output, and averages their statistics.
inline RankingResult rank_top_fraction(const std::vector<CandidateRecord> &candidates,
                                       const RankingConfig &config_in, double permille) {
    if (candidates.empty()) throw Error(ErrorCode::EmptyCandidateSet, "no candidates to rank");
    if (!(permille > 0.0 && permille <= 1000.0))
        throw std::invalid_argument("permille must lie in (0, 1000]");
    const RankingConfig config = config_in.normalized();

    std::vector<std::pair<double, std::size_t>> scored(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i)
        scored[i] = {score_candidate(candidates[i], config), i};
    std::sort(scored.begin(), scored.end(), [&](const auto &a, const auto &b) {
        if (a.first != b.first) return a.first > b.first;
        return candidates[a.second].id < candidates[b.second].id;
    });

    const double n = static_cast<double>(candidates.size());
    std::size_t keep = static_cast<std::size_t>(std::ceil(n * permille / 1000.0));
    keep = std::min(std::max<std::size_t>(keep, 1), candidates.size());

    RankingResult result;
    result.top.reserve(keep);
    double acc_sum = 0.0, msrs_sum = 0.0, res_sum = 0.0;
    bool have_msrs = true, have_resource = config.resource != ResourceKind::none;
    for (std::size_t r = 0; r < keep; ++r) {
        const auto &[score, idx] = scored[r];
        const CandidateRecord &rec = candidates[idx];
        result.top.push_back(RankedCandidate{rec, score, r + 1});
        acc_sum += rec.accuracy;
        if (rec.msrs)
            msrs_sum += *rec.msrs;
        else
            have_msrs = false;
        if (have_resource) {
            const std::optional<double> &res = config.resource == ResourceKind::latency
                                                   ? rec.latency_s
                                                   : config.resource == ResourceKind::params
                                                         ? rec.params_m
                                                         : rec.flops_m;
            if (res)
                res_sum += *res;
            else
                have_resource = false;
        }
    }
    const double k = static_cast<double>(keep);
    result.aggregates.avg_accuracy = acc_sum / k;
    if (have_msrs) result.aggregates.avg_msrs = msrs_sum / k;
    if (have_resource) result.aggregates.avg_resource = res_sum / k;
    return result;
}

// Candidate CSV: header `id,accuracy,latency_s,params_m,flops_m,msrs`.
// Optional columns may be omitted entirely or left empty per row; unknown
// columns are ignored. `accuracy_pct` may stand in for `accuracy` and is
// divided by 100 on ingest.
inline std::vector<CandidateRecord> read_candidates_csv(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());

    auto split = [](const std::string &line) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) {
                cells.push_back(line.substr(start));
                break;
            }
            cells.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        for (auto &c : cells) {
            while (!c.empty() && (c.back() == '\r' || c.back() == ' ')) c.pop_back();
            while (!c.empty() && c.front() == ' ') c.erase(c.begin());
        }
        return cells;
    };
    auto parse_real = [&](const std::string &cell, std::size_t lineno) {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || ptr != cell.data() + cell.size())
            throw Error(ErrorCode::MissingField, path.string() + ":" + std::to_string(lineno) +
                                                     ": cannot parse number '" + cell + "'");
        if (!std::isfinite(v))
            throw Error(ErrorCode::NonFinite,
                        path.string() + ":" + std::to_string(lineno) + ": non-finite value");
        return v;
    };

    std::string line;
    if (!std::getline(in, line))
        throw Error(ErrorCode::EmptyCandidateSet, path.string() + ": empty file");
    const std::vector<std::string> header = split(line);
    auto column = [&](const std::string &name) -> std::ptrdiff_t {
        const auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : it - header.begin();
    };
    const std::ptrdiff_t id_col = column("id");
    const std::ptrdiff_t acc_col = column("accuracy");
    const std::ptrdiff_t acc_pct_col = column("accuracy_pct");
    if (id_col < 0)
        throw Error(ErrorCode::MissingField, path.string() + ": header lacks 'id' column");
    if (acc_col < 0 && acc_pct_col < 0)
        throw Error(ErrorCode::MissingField,
                    path.string() + ": header lacks an 'accuracy' or 'accuracy_pct' column");
    const std::ptrdiff_t lat_col = column("latency_s");
    const std::ptrdiff_t par_col = column("params_m");
    const std::ptrdiff_t flo_col = column("flops_m");
    const std::ptrdiff_t msrs_col = column("msrs");

    std::vector<CandidateRecord> records;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> cells = split(line);
        auto cell = [&](std::ptrdiff_t col) -> std::string {
            if (col < 0 || static_cast<std::size_t>(col) >= cells.size()) return "";
            return cells[static_cast<std::size_t>(col)];
        };
        CandidateRecord rec;
        rec.id = cell(id_col);
        if (rec.id.empty())
            throw Error(ErrorCode::MissingField,
                        path.string() + ":" + std::to_string(lineno) + ": empty id");
        if (!cell(acc_col).empty())
            rec.accuracy = parse_real(cell(acc_col), lineno);
        else if (!cell(acc_pct_col).empty())
            rec.accuracy = parse_real(cell(acc_pct_col), lineno) / 100.0;
        if (std::isnan(rec.accuracy))
            throw Error(ErrorCode::MissingField,
                        path.string() + ":" + std::to_string(lineno) + ": missing accuracy");
        if (!(rec.accuracy >= 0.0 && rec.accuracy <= 1.0))
            throw Error(ErrorCode::MissingField,
                        path.string() + ":" + std::to_string(lineno) +
                            ": accuracy must lie in [0, 1] after normalization");
        if (!cell(lat_col).empty()) rec.latency_s = parse_real(cell(lat_col), lineno);
        if (!cell(par_col).empty()) rec.params_m = parse_real(cell(par_col), lineno);
        if (!cell(flo_col).empty()) rec.flops_m = parse_real(cell(flo_col), lineno);
        if (!cell(msrs_col).empty()) rec.msrs = parse_real(cell(msrs_col), lineno);
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace redtest
