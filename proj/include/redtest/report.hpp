#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "redtest/errors.hpp"
#include "redtest/msrs.hpp"
#include "redtest/prune.hpp"
#include "redtest/rank.hpp"
#include "redtest/similarity.hpp"

namespace redtest {

inline constexpr const char *kToolVersion = "0.1.0";

using Json = nlohmann::ordered_json;

// All reals in reports are serialized at 12 significant digits: enough to
// round-trip every value range in play, short enough to diff by eye.
inline std::string format_real(double v) {
    char buf[64];
    const auto [ptr, ec] =
        std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 12);
    if (ec != std::errc()) throw std::runtime_error("number formatting failed");
    return std::string(buf, ptr);
}

// Round-trips v through its 12-digit decimal form so the JSON writer emits
// exactly that many digits.
inline double round12(double v) {
    const std::string s = format_real(v);
    double out = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), out);
    return out;
}

inline Json json_real(double v) {
    if (std::isnan(v)) return nullptr;
    return round12(v);
}

// Writes via a sibling temp file and renames into place, so a failed run
// never leaves a partial output behind.
inline void atomic_write_text(const std::filesystem::path &path, const std::string &content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorCode::IoFailure, "cannot move output into " + path.string());
    }
}

// Common report envelope. The timestamp is optional and omitted when empty:
// emitted files stay byte-identical across runs unless the caller opts in.
struct ReportHeader {
    std::string command;
    std::string timestamp;
};

inline Json report_envelope(const ReportHeader &header) {
    Json doc;
    doc["tool_version"] = kToolVersion;
    doc["command"] = header.command;
    if (!header.timestamp.empty()) doc["timestamp"] = header.timestamp;
    return doc;
}

// --- similarity ------------------------------------------------------------

inline std::string similarity_to_csv(const SimilarityMatrix &sim) {
    std::string out;
    for (std::size_t i = 0; i < sim.layer_names.size(); ++i) {
        if (i) out += ',';
        out += sim.layer_names[i];
    }
    out += '\n';
    const std::size_t l = sim.order();
    for (std::size_t a = 0; a < l; ++a) {
        for (std::size_t b = 0; b < l; ++b) {
            if (b) out += ',';
            out += format_real(sim.values(a, b));
        }
        out += '\n';
    }
    return out;
}

inline Json similarity_to_json(const SimilarityMatrix &sim) {
    Json payload;
    payload["layer_names"] = sim.layer_names;
    Json values = Json::array(), raw = Json::array();
    const std::size_t l = sim.order();
    for (std::size_t a = 0; a < l; ++a) {
        Json vrow = Json::array(), rrow = Json::array();
        for (std::size_t b = 0; b < l; ++b) {
            vrow.push_back(json_real(sim.values(a, b)));
            rrow.push_back(json_real(sim.raw_values(a, b)));
        }
        values.push_back(std::move(vrow));
        raw.push_back(std::move(rrow));
    }
    payload["values"] = std::move(values);
    payload["raw_values"] = std::move(raw);
    return payload;
}

// --- msrs -------------------------------------------------------------------

inline Json msrs_to_json(const MsrsResult &result) {
    Json payload;
    payload["config"] = {{"beta", json_real(result.config.beta)},
                         {"epsilon", json_real(result.config.epsilon)},
                         {"estimator", estimator_name(result.config.estimator)}};
    payload["msrs"] = json_real(result.msrs);
    Json pairs = Json::array();
    for (const auto &p : result.pair_scores)
        pairs.push_back({{"layer_a", p.layer_a},
                         {"layer_b", p.layer_b},
                         {"cka", json_real(p.cka)},
                         {"score", json_real(p.score)}});
    payload["pair_scores"] = std::move(pairs);
    return payload;
}

// --- prune -------------------------------------------------------------------

inline Json prune_plan_to_json(const PrunePlan &plan) {
    Json payload;
    payload["mu"] = json_real(plan.config.mu);
    payload["mode"] = prune_mode_name(plan.config.mode);
    payload["retained"] = plan.retained;
    payload["dropped"] = plan.dropped;
    Json adj = Json::array();
    for (const auto &a : plan.adjacent_cka)
        adj.push_back(Json::array({a.front, a.back, json_real(a.cka)}));
    payload["adjacent_cka"] = std::move(adj);
    Json mism = Json::array();
    for (const auto &m : plan.mismatches)
        mism.push_back(Json::array({m.front_layer, m.next_layer, m.front_p, m.expected_input_p}));
    payload["mismatches"] = std::move(mism);
    return payload;
}

inline Json reduction_to_json(const ReductionReport &r) {
    return Json{{"params_pct", json_real(r.params_pct)},
                {"flops_pct", json_real(r.flops_pct)},
                {"latency_pct", json_real(r.latency_pct)}};
}

// --- rank --------------------------------------------------------------------

inline Json ranking_config_to_json(const RankingConfig &cfg, double permille) {
    Json out;
    out["resource"] = resource_name(cfg.resource);
    switch (cfg.resource) {
        case ResourceKind::latency: out["T"] = json_real(cfg.expected_latency_s); break;
        case ResourceKind::params: out["P"] = json_real(cfg.expected_params_m); break;
        case ResourceKind::flops: out["F"] = json_real(cfg.expected_flops_m); break;
        case ResourceKind::none: break;
    }
    out["M"] = json_real(cfg.expected_msrs);
    out["w"] = json_real(cfg.w);
    out["lambda"] = json_real(cfg.lambda);
    out["top_permille"] = json_real(permille);
    return out;
}

inline Json ranking_to_json(const RankingResult &result) {
    Json top = Json::array();
    for (const auto &rc : result.top)
        top.push_back(
            {{"id", rc.record.id}, {"score", json_real(rc.score)}, {"rank", rc.rank}});
    Json aggregates;
    aggregates["avg_accuracy"] = json_real(result.aggregates.avg_accuracy);
    aggregates["avg_msrs"] = json_real(result.aggregates.avg_msrs);
    aggregates["avg_resource"] = json_real(result.aggregates.avg_resource);
    return Json{{"top", std::move(top)}, {"aggregates", std::move(aggregates)}};
}

// --- heatmap -----------------------------------------------------------------

namespace detail {

// Two-color linear ramp, light to dark as similarity rises.
inline std::string ramp_color(double v) {
    v = std::min(std::max(v, 0.0), 1.0);
    const int c0[3] = {247, 251, 255};
    const int c1[3] = {8, 48, 107};
    char buf[8];
    std::string out = "#";
    for (int ch = 0; ch < 3; ++ch) {
        const long x = std::lround(c0[ch] + v * (c1[ch] - c0[ch]));
        std::snprintf(buf, sizeof(buf), "%02lx", x);
        out += buf;
    }
    return out;
}

}  // namespace detail

// Deterministic SVG heatmap of a similarity matrix: one square per layer
// pair, darker means more similar, layer names along both axes. Plain
// integer geometry so output bytes depend only on the matrix.
inline std::string render_heatmap(const SimilarityMatrix &sim) {
    const std::size_t l = sim.order();
    constexpr int kCell = 24;
    constexpr int kPad = 8;
    std::size_t longest = 0;
    for (const auto &name : sim.layer_names) longest = std::max(longest, name.size());
    const int label_px = static_cast<int>(6 * longest) + kPad;
    const int width = label_px + static_cast<int>(l) * kCell + kPad;
    const int height = label_px + static_cast<int>(l) * kCell + kPad;

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
           "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) +
           " " + std::to_string(height) + "\">\n";
    svg += "<style>text{font-family:monospace;font-size:10px;fill:#000;}</style>\n";
    for (std::size_t a = 0; a < l; ++a) {
        for (std::size_t b = 0; b < l; ++b) {
            const int x = label_px + static_cast<int>(b) * kCell;
            const int y = label_px + static_cast<int>(a) * kCell;
            svg += "<rect class=\"cell\" x=\"" + std::to_string(x) + "\" y=\"" +
                   std::to_string(y) + "\" width=\"" + std::to_string(kCell) + "\" height=\"" +
                   std::to_string(kCell) + "\" fill=\"" + detail::ramp_color(sim.values(a, b)) +
                   "\"/>\n";
        }
    }
    for (std::size_t a = 0; a < l; ++a) {
        const int y = label_px + static_cast<int>(a) * kCell + kCell / 2 + 3;
        svg += "<text x=\"" + std::to_string(label_px - 4) + "\" y=\"" + std::to_string(y) +
               "\" text-anchor=\"end\">" + sim.layer_names[a] + "</text>\n";
        const int x = label_px + static_cast<int>(a) * kCell + kCell / 2 + 3;
        svg += "<text transform=\"translate(" + std::to_string(x) + "," +
               std::to_string(label_px - 4) + ") rotate(-90)\">" + sim.layer_names[a] +
               "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace redtest
