// redtest — structural-redundancy measurement for deep models, driven by
// per-layer activation dumps. Subcommands cover layer similarity, the MSRS
// redundancy score, layer-pruning plans, NAS candidate ranking, MSRS budget
// estimation, synthetic trace generation and polynomial fitting.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "redtest/redtest.hpp"

namespace fs = std::filesystem;
using redtest::Json;

namespace {

// Command echo for reports. --threads only caps workers and never changes a
// result, so it is dropped: the same logical invocation produces the same
// bytes regardless of parallelism.
std::string join_argv(int argc, char **argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--threads") {
            ++i;  // skip its value too
            continue;
        }
        if (!s.empty()) s += ' ';
        s += arg;
    }
    return s;
}

std::vector<redtest::SynthLayerSpec> parse_layer_specs(const std::string &text) {
    std::vector<redtest::SynthLayerSpec> specs;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        if (comma == std::string::npos) comma = text.size();
        const std::string token = text.substr(start, comma - start);
        const std::size_t colon = token.find(':');
        if (token.empty() || colon == std::string::npos)
            throw CLI::ValidationError("--layers", "expected p:rho pairs, e.g. 16:0,16:0.9");
        redtest::SynthLayerSpec spec;
        try {
            spec.p = std::stoull(token.substr(0, colon));
            spec.rho = std::stod(token.substr(colon + 1));
        } catch (const std::exception &) {
            throw CLI::ValidationError("--layers", "cannot parse '" + token + "'");
        }
        specs.push_back(spec);
        start = comma + 1;
    }
    return specs;
}

std::vector<redtest::LayerCost> parse_cost_model(const fs::path &path, std::size_t layer_count) {
    std::ifstream in(path);
    if (!in) throw redtest::Error(redtest::ErrorCode::IoFailure, "cannot open " + path.string());
    Json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception &e) {
        throw redtest::Error(redtest::ErrorCode::MissingCost,
                             path.string() + ": invalid JSON (" + e.what() + ")");
    }
    const Json &layers = doc.is_array() ? doc : doc.at("layers");
    if (!layers.is_array() || layers.size() != layer_count)
        throw redtest::Error(redtest::ErrorCode::MissingCost,
                             path.string() + ": cost model must list one entry per layer");
    std::vector<redtest::LayerCost> costs;
    costs.reserve(layers.size());
    for (const auto &entry : layers) {
        if (!entry.contains("params") || !entry.contains("flops") || !entry.contains("latency"))
            throw redtest::Error(redtest::ErrorCode::MissingCost,
                                 path.string() + ": each entry needs params, flops and latency");
        costs.push_back(redtest::LayerCost{entry.at("params").get<double>(),
                                           entry.at("flops").get<double>(),
                                           entry.at("latency").get<double>()});
    }
    return costs;
}

std::vector<std::pair<double, double>> parse_points_csv(const fs::path &path) {
    std::ifstream in(path);
    if (!in) throw redtest::Error(redtest::ErrorCode::IoFailure, "cannot open " + path.string());
    std::vector<std::pair<double, double>> points;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1 && line.find_first_not_of("0123456789+-.eE, \t") != std::string::npos)
            continue;  // header row
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw redtest::Error(redtest::ErrorCode::RankDeficient,
                                 path.string() + ":" + std::to_string(lineno) +
                                     ": expected 'depth,msrs'");
        try {
            points.emplace_back(std::stod(line.substr(0, comma)),
                                std::stod(line.substr(comma + 1)));
        } catch (const std::exception &) {
            throw redtest::Error(redtest::ErrorCode::RankDeficient,
                                 path.string() + ":" + std::to_string(lineno) +
                                     ": cannot parse '" + line + "'");
        }
    }
    return points;
}

struct CommonOpts {
    std::string command_echo;
    unsigned threads = 0;
};

int cmd_similarity(const CommonOpts &common, const fs::path &trace_path,
                   const std::string &estimator, const fs::path &out_csv, const fs::path &svg,
                   const fs::path &json_out) {
    const redtest::Estimator est = redtest::estimator_from_name(estimator);
    const redtest::ModelTrace trace = redtest::load_trace(trace_path, common.threads);
    const redtest::SimilarityMatrix sim = redtest::similarity_matrix(trace, est, common.threads);
    redtest::atomic_write_text(out_csv, redtest::similarity_to_csv(sim));
    if (!svg.empty()) redtest::atomic_write_text(svg, redtest::render_heatmap(sim));
    if (!json_out.empty()) {
        Json doc = redtest::report_envelope({common.command_echo, ""});
        doc["config"] = {{"estimator", redtest::estimator_name(est)},
                         {"trace", trace.model_name}};
        doc["payload"] = redtest::similarity_to_json(sim);
        redtest::atomic_write_text(json_out, doc.dump(2) + "\n");
    }
    return 0;
}

int cmd_msrs(const CommonOpts &common, const fs::path &trace_path, const double *beta,
             const double *epsilon, const std::string &estimator, const fs::path &out) {
    const redtest::ModelTrace trace = redtest::load_trace(trace_path, common.threads);
    redtest::MsrsConfig cfg = redtest::MsrsConfig::for_family(trace.structure_family);
    if (beta) cfg.beta = *beta;
    if (epsilon) cfg.epsilon = *epsilon;
    cfg.estimator = redtest::estimator_from_name(estimator);
    cfg.validate();
    const redtest::MsrsResult result = redtest::msrs(trace, cfg, common.threads);
    Json doc = redtest::report_envelope({common.command_echo, ""});
    doc["model"] = trace.model_name;
    doc.update(redtest::msrs_to_json(result));
    redtest::atomic_write_text(out, doc.dump(2) + "\n");
    return 0;
}

int cmd_prune(const CommonOpts &common, const fs::path &trace_path, const double *mu,
              const std::string &mode, const fs::path &costs_path, const fs::path &out) {
    const redtest::ModelTrace trace = redtest::load_trace(trace_path, common.threads);
    redtest::PruneConfig cfg = redtest::PruneConfig::for_family(trace.structure_family);
    if (mu) cfg.mu = *mu;
    cfg.mode = redtest::prune_mode_from_name(mode);
    cfg.validate();
    // parse the cost model before the heavy compute so a bad file fails fast
    std::vector<redtest::LayerCost> costs;
    if (!costs_path.empty()) costs = parse_cost_model(costs_path, trace.layer_count());
    const redtest::PrunePlan plan = redtest::prune_plan(trace, cfg, common.threads);
    Json doc = redtest::report_envelope({common.command_echo, ""});
    doc["model"] = trace.model_name;
    doc.update(redtest::prune_plan_to_json(plan));
    if (!costs_path.empty())
        doc["expected_reduction"] = redtest::reduction_to_json(redtest::expected_reduction(plan, costs));
    redtest::atomic_write_text(out, doc.dump(2) + "\n");
    return 0;
}

int cmd_rank(const CommonOpts &common, const fs::path &candidates_path,
             const redtest::RankingConfig &cfg, double permille, const fs::path &out) {
    const std::vector<redtest::CandidateRecord> candidates =
        redtest::read_candidates_csv(candidates_path);
    const redtest::RankingResult result = redtest::rank_top_fraction(candidates, cfg, permille);
    Json doc = redtest::report_envelope({common.command_echo, ""});
    doc["config"] = redtest::ranking_config_to_json(cfg.normalized(), permille);
    doc.update(redtest::ranking_to_json(result));
    redtest::atomic_write_text(out, doc.dump(2) + "\n");
    return 0;
}

int cmd_budget(const std::string &profile_tag, const fs::path &profile_file, int depth) {
    redtest::BudgetProfile profile;
    if (!profile_file.empty()) {
        std::ifstream in(profile_file);
        if (!in)
            throw redtest::Error(redtest::ErrorCode::IoFailure,
                                 "cannot open " + profile_file.string());
        Json doc;
        try {
            in >> doc;
            profile.tag = "custom";
            profile.threshold_depth = doc.at("l0").get<std::size_t>();
            profile.slope = doc.at("slope").get<double>();
            profile.intercept = doc.at("intercept").get<double>();
        } catch (const nlohmann::json::exception &e) {
            throw redtest::Error(redtest::ErrorCode::UnknownProfile,
                                 profile_file.string() + ": bad profile (" + e.what() + ")");
        }
    } else {
        profile = redtest::budget_profile(profile_tag);
    }
    const double budget = redtest::msrs_budget(static_cast<std::size_t>(depth), profile);
    Json doc{{"profile", profile.tag}, {"depth", depth}, {"budget", redtest::json_real(budget)}};
    std::cout << doc.dump() << "\n";
    return 0;
}

int cmd_synth(int n, const std::string &layers, std::uint64_t seed, const fs::path &out_dir) {
    const std::vector<redtest::SynthLayerSpec> specs = parse_layer_specs(layers);
    const redtest::ModelTrace trace =
        redtest::synth_trace(static_cast<std::size_t>(n), specs, seed);
    redtest::save_trace(out_dir, trace);
    return 0;
}

int cmd_fit(const fs::path &points_path, int degree) {
    const auto points = parse_points_csv(points_path);
    const std::vector<double> coeffs = redtest::fit_polynomial(points, degree);
    Json clist = Json::array();
    for (double c : coeffs) clist.push_back(redtest::json_real(c));
    Json doc{{"degree", degree}, {"coefficients", std::move(clist)}};
    std::cout << doc.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"structural-redundancy testing for deep models"};
    app.require_subcommand(1);

    CommonOpts common;
    common.command_echo = join_argv(argc, argv);

    // similarity
    auto *similarity = app.add_subcommand("similarity", "all-pairs layer similarity matrix");
    std::string sim_trace, sim_estimator = "unbiased", sim_out, sim_svg, sim_json;
    similarity->add_option("--trace", sim_trace, "trace manifest JSON")->required();
    similarity->add_option("--estimator", sim_estimator)
        ->check(CLI::IsMember({"unbiased", "biased"}));
    similarity->add_option("--out", sim_out, "output CSV")->required();
    similarity->add_option("--svg", sim_svg, "optional heatmap SVG");
    similarity->add_option("--json", sim_json, "optional JSON report");
    similarity->add_option("--threads", common.threads, "worker cap (0 = machine parallelism)");

    // msrs
    auto *msrs_cmd = app.add_subcommand("msrs", "model structural redundancy score");
    std::string msrs_trace, msrs_estimator = "unbiased", msrs_out;
    double msrs_beta = 0.0, msrs_epsilon = 0.0;  // 0 = use family default
    msrs_cmd->add_option("--trace", msrs_trace)->required();
    msrs_cmd->add_option("--beta", msrs_beta, "scaling factor (default 100)");
    msrs_cmd->add_option("--epsilon", msrs_epsilon,
                         "similarity threshold (default 0.8 block / 0.7 plain)");
    msrs_cmd->add_option("--estimator", msrs_estimator)
        ->check(CLI::IsMember({"unbiased", "biased"}));
    msrs_cmd->add_option("--out", msrs_out, "output JSON")->required();
    msrs_cmd->add_option("--threads", common.threads);

    // prune
    auto *prune = app.add_subcommand("prune", "redundancy-aware layer pruning plan");
    std::string prune_trace, prune_mode = "keep-last", prune_costs, prune_out;
    double prune_mu = 0.0;
    prune->add_option("--trace", prune_trace)->required();
    prune->add_option("--mu", prune_mu, "similarity threshold (default: family epsilon)");
    prune->add_option("--mode", prune_mode)->check(CLI::IsMember({"literal", "keep-last"}));
    prune->add_option("--costs", prune_costs, "per-layer cost model JSON");
    prune->add_option("--out", prune_out, "output JSON")->required();
    prune->add_option("--threads", common.threads);

    // rank
    auto *rank = app.add_subcommand("rank", "redundancy-aware NAS candidate ranking");
    std::string rank_candidates, rank_resource, rank_out;
    redtest::RankingConfig rank_cfg;
    double rank_permille = 1000.0;
    rank->add_option("--candidates", rank_candidates, "candidate CSV")->required();
    rank->add_option("--resource", rank_resource)
        ->required()
        ->check(CLI::IsMember({"latency", "params", "flops", "none"}));
    rank->add_option("--T", rank_cfg.expected_latency_s, "expected latency (s)");
    rank->add_option("--P", rank_cfg.expected_params_m, "expected params (M)");
    rank->add_option("--F", rank_cfg.expected_flops_m, "expected FLOPs (M)");
    rank->add_option("--M", rank_cfg.expected_msrs, "expected MSRS")->required();
    rank->add_option("--w", rank_cfg.w, "weight exponent")->required();
    rank->add_option("--lambda", rank_cfg.lambda)->required();
    rank->add_option("--top-permille", rank_permille, "fraction kept (default: all)");
    rank->add_option("--out", rank_out, "output JSON")->required();

    // budget
    auto *budget = app.add_subcommand("budget", "expected MSRS for a given depth");
    std::string budget_profile, budget_profile_file;
    int budget_depth = 0;
    auto *profile_opt = budget->add_option("--profile", budget_profile)
                            ->check(CLI::IsMember({"c10", "c100"}));
    auto *profile_file_opt = budget->add_option("--profile-file", budget_profile_file);
    profile_opt->excludes(profile_file_opt);
    budget->add_option("--depth", budget_depth)->required()->check(CLI::PositiveNumber);

    // synth
    auto *synth = app.add_subcommand("synth", "deterministic synthetic trace");
    int synth_n = 0;
    std::string synth_layers;
    std::uint64_t synth_seed = 0;
    std::string synth_out_dir;
    synth->add_option("--n", synth_n, "batch size")->required();
    synth->add_option("--layers", synth_layers, "p:rho pairs, e.g. 32:0,32:0.9,16:0.5")
        ->required();
    synth->add_option("--seed", synth_seed)->required();
    synth->add_option("--out-dir", synth_out_dir)->required();

    // fit
    auto *fit = app.add_subcommand("fit", "polynomial fit of msrs against depth");
    std::string fit_points;
    int fit_degree = 1;
    fit->add_option("--points", fit_points, "CSV of depth,msrs rows")->required();
    fit->add_option("--degree", fit_degree)->required()->check(CLI::Range(1, 2));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (similarity->parsed())
            return cmd_similarity(common, sim_trace, sim_estimator, sim_out, sim_svg, sim_json);
        if (msrs_cmd->parsed())
            return cmd_msrs(common, msrs_trace, msrs_cmd->count("--beta") ? &msrs_beta : nullptr,
                            msrs_cmd->count("--epsilon") ? &msrs_epsilon : nullptr, msrs_estimator,
                            msrs_out);
        if (prune->parsed())
            return cmd_prune(common, prune_trace, prune->count("--mu") ? &prune_mu : nullptr,
                             prune_mode, prune_costs, prune_out);
        if (rank->parsed()) {
            rank_cfg.resource = redtest::resource_from_name(rank_resource);
            return cmd_rank(common, rank_candidates, rank_cfg, rank_permille, rank_out);
        }
        if (budget->parsed()) {
            if (budget_profile.empty() && budget_profile_file.empty()) {
                std::cerr << "budget: need --profile or --profile-file\n";
                return 2;
            }
            return cmd_budget(budget_profile, budget_profile_file, budget_depth);
        }
        if (synth->parsed()) return cmd_synth(synth_n, synth_layers, synth_seed, synth_out_dir);
        if (fit->parsed()) return cmd_fit(fit_points, fit_degree);
    } catch (const CLI::ParseError &e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const redtest::Error &e) {
        std::cerr << "redtest: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument &e) {
        std::cerr << "redtest: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "redtest: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
