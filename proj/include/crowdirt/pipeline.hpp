#ifndef CROWDIRT_PIPELINE_HPP
#define CROWDIRT_PIPELINE_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "crowdirt/core_data.hpp"
#include "crowdirt/error.hpp"
#include "crowdirt/io.hpp"
#include "crowdirt/irt_model.hpp"
#include "crowdirt/metrics.hpp"
#include "crowdirt/posterior.hpp"
#include "crowdirt/rng.hpp"
#include "crowdirt/sampler.hpp"
#include "crowdirt/simgen.hpp"
#include "crowdirt/vote.hpp"

namespace crowdirt::pipeline {

namespace fs = std::filesystem;

/// Process exit codes.
enum ExitCode : int {
    exit_ok = 0,
    exit_failure = 1,      ///< invalid configuration, input, or missing artifacts
    exit_not_converged = 2 ///< fit finished but some R-hat exceeds the threshold
};

inline constexpr double kRhatThreshold = 1.05;

enum class Method : std::uint8_t { raw, consensus, experts, experts_experienced, weighted };

constexpr std::string_view to_string(Method m) noexcept {
    switch (m) {
        case Method::raw: return "raw";
        case Method::consensus: return "consensus";
        case Method::experts: return "experts";
        case Method::experts_experienced: return "experts_experienced";
        case Method::weighted: return "weighted";
    }
    return "";
}

inline Method parse_method(std::string_view s) {
    for (auto m : {Method::raw, Method::consensus, Method::experts, Method::experts_experienced, Method::weighted}) {
        if (to_string(m) == s) return m;
    }
    throw Error(Errc::bad_config, "unknown strategy '" + std::string(s) + "'");
}

inline bool needs_fit(Method m) {
    return m == Method::experts || m == Method::experts_experienced || m == Method::weighted;
}

inline std::vector<Method> parse_methods(std::string_view list) {
    std::vector<Method> out;
    std::size_t start = 0;
    while (start <= list.size()) {
        const auto end = std::min(list.find(',', start), list.size());
        const auto item = list.substr(start, end - start);
        if (!item.empty()) out.push_back(parse_method(item));
        start = end + 1;
    }
    return out;
}

struct RunConfig {
    fs::path input;
    fs::path out_dir = ".";
    std::uint64_t seed = 1;
    double gold_fraction = 0.33;
    std::size_t chains = 4;
    std::size_t warmup = 2000;
    std::size_t samples = 2000;
    std::size_t thin = 1;
    bool parallel = true;
    ModelConfig model;
    std::vector<Method> strategies{Method::raw, Method::consensus, Method::experts, Method::experts_experienced,
                                   Method::weighted};
    SimConfig simulation;

    void validate() const {
        if (!(gold_fraction > 0.0 && gold_fraction <= 1.0)) {
            throw Error(Errc::bad_config, "gold fraction must lie in (0, 1]");
        }
        if (strategies.empty()) throw Error(Errc::bad_config, "strategy list is empty");
        if (chains < 1 || warmup < 1 || samples < 1 || thin < 1) {
            throw Error(Errc::bad_config, "chains, warmup, samples and thin must all be at least 1");
        }
    }

    SamplerConfig sampler() const {
        SamplerConfig s;
        s.n_chains = chains;
        s.warmup_iters = warmup;
        s.sampling_iters = samples;
        s.thin = thin;
        s.parallel = parallel;
        s.seed = derive_seed(seed, streams::sampler);
        return s;
    }
};

namespace detail {

template <class T>
void take(const io::Json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(Errc::bad_config, std::string("config field '") + key + "' has the wrong type");
    }
}

inline void apply_simulation(const io::Json& j, SimConfig& s) {
    if (!j.is_object()) throw Error(Errc::bad_config, "'simulation' must be an object");
    take(j, "participants", s.participants);
    take(j, "images", s.images);
    take(j, "points_per_image", s.points_per_image);
    take(j, "cameras", s.cameras);
    take(j, "occasions", s.occasions);
    take(j, "raters_per_image", s.raters_per_image);
    take(j, "theta_sd", s.theta_sd);
    take(j, "beta_point_sd", s.beta_point_sd);
    take(j, "beta_camera_sd", s.beta_camera_sd);
    take(j, "alpha_mean", s.alpha_mean);
    take(j, "alpha_sd", s.alpha_sd);
    take(j, "eta_beta_b", s.eta_beta_b);
    take(j, "phi_max", s.phi_max);
    take(j, "prevalence", s.prevalence);
    take(j, "unsure_rate", s.unsure_rate);
    if (j.contains("theta_mixture")) {
        s.theta_mixture.clear();
        for (const auto& c : j.at("theta_mixture")) {
            AbilityComponent a;
            take(c, "weight", a.weight);
            take(c, "mean", a.mean);
            take(c, "sd", a.sd);
            s.theta_mixture.push_back(a);
        }
    }
}

}  // namespace detail

/// Applies a JSON document mirroring RunConfig; absent keys keep their values.
inline void apply_config_json(const io::Json& j, RunConfig& cfg) {
    if (!j.is_object()) throw Error(Errc::bad_config, "config file must hold a JSON object");
    std::string path;
    if (j.contains("input")) {
        detail::take(j, "input", path);
        cfg.input = path;
    }
    if (j.contains("out_dir")) {
        detail::take(j, "out_dir", path);
        cfg.out_dir = path;
    }
    detail::take(j, "seed", cfg.seed);
    detail::take(j, "gold_fraction", cfg.gold_fraction);
    detail::take(j, "chains", cfg.chains);
    detail::take(j, "warmup", cfg.warmup);
    detail::take(j, "samples", cfg.samples);
    detail::take(j, "thin", cfg.thin);
    detail::take(j, "parallel", cfg.parallel);
    detail::take(j, "learning", cfg.model.include_learning);
    if (j.contains("anchor")) {
        std::string anchor;
        detail::take(j, "anchor", anchor);
        if (anchor == "hierarchical_zero_mean") cfg.model.anchor_mode = AnchorMode::hierarchical_zero_mean;
        else if (anchor == "sum_to_zero") cfg.model.anchor_mode = AnchorMode::sum_to_zero;
        else throw Error(Errc::bad_config, "unknown anchor mode '" + anchor + "'");
    }
    if (j.contains("strategies")) {
        const auto& s = j.at("strategies");
        cfg.strategies.clear();
        if (s.is_string()) {
            cfg.strategies = parse_methods(s.get<std::string>());
        } else if (s.is_array()) {
            for (const auto& e : s) {
                if (!e.is_string()) throw Error(Errc::bad_config, "strategies must be strings");
                cfg.strategies.push_back(parse_method(e.get<std::string>()));
            }
        } else {
            throw Error(Errc::bad_config, "strategies must be a list or a comma-separated string");
        }
    }
    if (j.contains("simulation")) detail::apply_simulation(j.at("simulation"), cfg.simulation);
}

// ---------------------------------------------------------------------------
// Artifact file names
// ---------------------------------------------------------------------------

namespace files {
inline constexpr const char* classifications = "classifications.csv";
inline constexpr const char* truth = "truth.json";
inline constexpr const char* validation = "validation.json";
inline constexpr const char* split = "split.json";
inline constexpr const char* index = "index.json";
inline constexpr const char* summary = "summary.json";
inline constexpr const char* diagnostics = "diagnostics.json";
inline constexpr const char* params_mean = "params_mean.json";
inline constexpr const char* learning_curve = "learning_curve.csv";
inline constexpr const char* warnings = "warnings.json";
inline constexpr const char* evaluation = "evaluation.csv";
inline constexpr const char* groups = "groups.csv";
inline constexpr const char* weights = "weights.csv";
inline constexpr const char* durations = "duration_tests.csv";

inline std::string draws(std::size_t chain) { return "draws_chain" + std::to_string(chain + 1) + ".csv"; }
inline std::string consensus(Method m) { return "consensus_" + std::string(to_string(m)) + ".csv"; }
}  // namespace files

// ---------------------------------------------------------------------------
// Shared steps
// ---------------------------------------------------------------------------

inline ParsedClassifications load_records(const fs::path& input) {
    if (input.empty()) throw Error(Errc::bad_config, "no input file given");
    if (!fs::is_regular_file(input)) throw Error(Errc::io_error, "input file not found: " + input.string());
    std::ifstream in(input, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open " + input.string());
    auto parsed = parse_classifications(in);
    parsed.records = derive_occasions(std::move(parsed.records));
    return parsed;
}

inline GoldSplit make_split(std::span<const ClassificationRecord> records, const RunConfig& cfg) {
    const auto images = image_ids(records);
    return split_gold_standard(images, cfg.gold_fraction, derive_seed(cfg.seed, streams::split));
}

inline void ensure_out_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(Errc::io_error, "cannot create output directory " + dir.string() + ": " + ec.message());
}

inline io::Json report_to_json(const ValidationReport& r) {
    io::Json j;
    j["record_count"] = r.record_count;
    j["kept"] = r.kept;
    j["participants"] = r.participant_count;
    j["images"] = r.image_count;
    j["points"] = r.point_count;
    j["cameras"] = r.camera_count;
    j["unsure"] = r.unsure_count;
    io::Json dropped = io::Json::array();
    for (const auto& d : r.dropped) dropped.push_back({{"line", d.line}, {"reason", std::string(to_string(d.reason))}});
    j["dropped"] = std::move(dropped);
    j["warnings"] = r.warnings;
    return j;
}

/// What consensus and cluster need from a finished fit.
struct FitArtifacts {
    std::vector<std::string> participants;
    std::vector<std::size_t> observations;  ///< gold-standard observations per participant
    std::vector<ParamSummary> theta;        ///< aligned with participants
    std::vector<std::string> gold_images;

    std::vector<double> theta_means() const {
        std::vector<double> out;
        for (const auto& s : theta) out.push_back(s.mean);
        return out;
    }
};

inline FitArtifacts load_fit_artifacts(const fs::path& dir) {
    for (const char* name : {files::index, files::summary, files::split}) {
        if (!fs::is_regular_file(dir / name)) {
            throw Error(Errc::io_error, "fit artifact not found: " + (dir / name).string() + " (run `fit` first)");
        }
    }
    FitArtifacts fit;
    const auto index = io::read_json(dir / files::index);
    const auto summary = io::summaries_from_json(io::read_json(dir / files::summary));
    const auto split = io::read_json(dir / files::split);
    try {
        fit.participants = index.at("participants").get<std::vector<std::string>>();
        fit.observations = index.at("participant_observations").get<std::vector<std::size_t>>();
        fit.gold_images = split.at("gold").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::io_error, std::string("malformed fit artifacts: ") + e.what());
    }
    std::map<std::string, const ParamSummary*> by_name;
    for (const auto& s : summary) by_name[s.name] = &s;
    for (std::size_t i = 0; i < fit.participants.size(); ++i) {
        const auto it = by_name.find("theta[" + std::to_string(i) + "]");
        if (it == by_name.end()) throw Error(Errc::io_error, "summary lacks theta[" + std::to_string(i) + "]");
        if (!std::isfinite(it->second->mean)) throw Error(Errc::non_finite, "posterior mean of theta is not finite");
        fit.theta.push_back(*it->second);
    }
    return fit;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Writes classifications.csv and truth.json; the CSV is rerun-stable for a fixed seed.
inline int cmd_simulate(const RunConfig& cfg, std::ostream& log) {
    SimConfig sim = cfg.simulation;
    sim.seed = derive_seed(cfg.seed, streams::simulate);
    sim.validate();
    const auto data = generate(sim);
    ensure_out_dir(cfg.out_dir);
    std::ostringstream csv;
    write_classifications(csv, data.records);
    io::write_file(cfg.out_dir / files::classifications, csv.str());
    io::write_file(cfg.out_dir / files::truth, io::truth_to_json(data.truth).dump(2) + "\n");
    log << "simulated " << data.records.size() << " classifications into " << cfg.out_dir.string() << '\n';
    return exit_ok;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

namespace detail {

inline std::string block_name(const std::string& coordinate) { return coordinate.substr(0, coordinate.find('[')); }

inline io::Json chain_diagnostics(const PosteriorDraws& draws) {
    io::Json chains = io::Json::array();
    for (std::size_t c = 0; c < draws.chains.size(); ++c) {
        const auto& ch = draws.chains[c];
        std::map<std::string, std::pair<double, std::size_t>> by_block;
        std::vector<std::string> order;
        for (std::size_t j = 0; j < draws.names.size(); ++j) {
            const auto b = block_name(draws.names[j]);
            if (!by_block.contains(b)) order.push_back(b);
            auto& acc = by_block[b];
            acc.first += ch.accept_rate[j];
            ++acc.second;
        }
        io::Json blocks = io::Json::object();
        for (const auto& b : order) blocks[b] = by_block[b].first / static_cast<double>(by_block[b].second);
        chains.push_back({{"chain", c + 1},
                          {"seed", ch.seed},
                          {"acceptance_by_block", std::move(blocks)},
                          {"direction_acceptance", ch.direction_accept_rate},
                          {"involution_acceptance", ch.involution_accept_rate},
                          {"point_block_acceptance", ch.block_accept_rate},
                          {"scale_relative_acceptance", ch.relative_accept_rate}});
    }
    return chains;
}

}  // namespace detail

/// Fits the model on the gold-standard images and writes every fit artifact.
/// Returns exit_not_converged, with warnings.json, when any R-hat exceeds
/// the threshold or cannot be computed.
inline int cmd_fit(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    auto parsed = load_records(cfg.input);
    ensure_out_dir(cfg.out_dir);
    io::write_file(cfg.out_dir / files::validation, report_to_json(parsed.report).dump(2) + "\n");
    for (const auto& w : parsed.report.warnings) log << "warning: " << w << '\n';

    const auto split = make_split(parsed.records, cfg);
    io::Json split_doc;
    split_doc["seed"] = cfg.seed;
    split_doc["gold_fraction"] = cfg.gold_fraction;
    split_doc["gold"] = split.gold;
    split_doc["eval"] = split.eval;
    io::write_file(cfg.out_dir / files::split, split_doc.dump(2) + "\n");

    const std::set<std::string> gold_images(split.gold.begin(), split.gold.end());
    const auto gold = gold_from_records(parsed.records, gold_images);
    if (gold.empty()) throw Error(Errc::no_gold_overlap, "no gold-standard image carries truth labels");
    const auto rm = build_response_matrix(parsed.records, gold);

    io::Json index;
    index["participants"] = rm.participants;
    io::Json points = io::Json::array();
    for (const auto& p : rm.points) points.push_back({{"image_id", p.image_id}, {"point_id", p.point_id}});
    index["points"] = std::move(points);
    index["cameras"] = rm.cameras;
    index["occasions"] = rm.occasions;
    std::vector<std::size_t> per_participant(rm.n_participants(), 0);
    for (const auto& o : rm.observations) ++per_participant[o.participant];
    index["participant_observations"] = per_participant;
    io::write_file(cfg.out_dir / files::index, index.dump(2) + "\n");

    const auto scfg = cfg.sampler();
    log << "fitting " << rm.observations.size() << " observations with " << scfg.n_chains << " chains\n";
    const auto draws = run_chains(rm, cfg.model, scfg);

    for (std::size_t c = 0; c < draws.chains.size(); ++c) {
        std::ostringstream out;
        io::write_draws_csv(out, draws, c, scfg.thin);
        io::write_file(cfg.out_dir / files::draws(c), out.str());
    }

    const auto summaries = summarize(draws);
    io::write_file(cfg.out_dir / files::summary, io::summaries_to_json(summaries).dump(2) + "\n");

    io::Json means = io::Json::object();
    for (const auto& s : summaries) means[s.name] = io::number(s.mean);
    io::write_file(cfg.out_dir / files::params_mean, means.dump(2) + "\n");

    io::Json diag;
    diag["rhat_threshold"] = kRhatThreshold;
    double max_rhat = 0.0, min_ess = std::numeric_limits<double>::infinity();
    io::Json unconverged = io::Json::array();
    io::Json negative_alpha = io::Json::array();
    const auto constrained = draws.constrained_all();
    for (std::size_t p = 0; p < summaries.size(); ++p) {
        const auto& s = summaries[p];
        if (std::isfinite(s.rhat)) max_rhat = std::max(max_rhat, s.rhat);
        if (std::isfinite(s.ess)) min_ess = std::min(min_ess, s.ess);
        if (!(s.rhat <= kRhatThreshold)) unconverged.push_back({{"name", s.name}, {"rhat", io::number(s.rhat)}});
        if (s.name.rfind("alpha[", 0) == 0) {
            std::size_t below = 0, total = 0;
            for (const auto& m : constrained) {
                for (std::size_t r = 0; r < m.rows; ++r) below += m(r, p) < 0.0;
                total += m.rows;
            }
            const double mass = static_cast<double>(below) / static_cast<double>(total);
            if (mass > 0.5) negative_alpha.push_back({{"name", s.name}, {"mass_below_zero", mass}});
        }
    }
    diag["max_rhat"] = max_rhat;
    diag["min_ess"] = io::number(min_ess);
    diag["unconverged"] = unconverged;
    diag["negative_discrimination"] = negative_alpha;
    diag["chains"] = detail::chain_diagnostics(draws);

    if (ParameterLayout(dims_of(rm), cfg.model).has_learning()) {
        const auto lc = learning_curve(draws, rm.occasions);
        std::ostringstream out;
        out << "occasion,phi_mean,hdi_low,hdi_high\n";
        for (const auto& o : lc.occasions) {
            out << o.occasion << ',' << text::format_double(o.mean) << ',' << text::format_double(o.hdi.low) << ','
                << text::format_double(o.hdi.high) << '\n';
        }
        io::write_file(cfg.out_dir / files::learning_curve, out.str());
        diag["learning_trend"] = {{"slope", io::number(lc.trend.slope)},
                                  {"intercept", io::number(lc.trend.intercept)},
                                  {"p_value", io::number(lc.trend.p_value)}};
    }
    io::write_file(cfg.out_dir / files::diagnostics, diag.dump(2) + "\n");

    std::error_code ec;
    fs::remove(cfg.out_dir / files::warnings, ec);
    if (!unconverged.empty()) {
        io::Json w;
        w["message"] = "R-hat above " + text::format_double(kRhatThreshold) + "; run longer chains";
        w["parameters"] = unconverged;
        io::write_file(cfg.out_dir / files::warnings, w.dump(2) + "\n");
        log << "warning: " << unconverged.size() << " parameters have R-hat above "
            << text::format_double(kRhatThreshold) << " (see " << (cfg.out_dir / files::warnings).string() << ")\n";
        return exit_not_converged;
    }
    return exit_ok;
}

// ---------------------------------------------------------------------------
// consensus
// ---------------------------------------------------------------------------

/// One consensus CSV per requested strategy over evaluation-set points.
inline int cmd_consensus(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    const auto parsed = load_records(cfg.input);
    const auto split = make_split(parsed.records, cfg);
    const std::set<std::string> eval_images(split.eval.begin(), split.eval.end());
    std::vector<ClassificationRecord> eval;
    for (const auto& r : parsed.records) {
        if (eval_images.contains(r.image_id)) eval.push_back(r);
    }
    if (eval.empty()) throw Error(Errc::invalid_argument, "evaluation set is empty");

    const bool fit_needed = std::any_of(cfg.strategies.begin(), cfg.strategies.end(), needs_fit);
    ParticipantWeights weights;
    ParticipantGroups groups;
    if (fit_needed) {
        const auto fit = load_fit_artifacts(cfg.out_dir);
        if (fit.gold_images != split.gold) {
            throw Error(Errc::bad_config, "fit artifacts in " + cfg.out_dir.string() +
                                              " were produced with a different input, seed or gold fraction");
        }
        const auto means = fit.theta_means();
        weights = weight_table(fit.participants, means);
        groups = cluster_participants(fit.participants, means).group;
    }

    ensure_out_dir(cfg.out_dir);
    for (const auto m : cfg.strategies) {
        std::ostringstream out;
        if (m == Method::raw) {
            out << io::kConsensusHeader << '\n';
            for (const auto& r : eval) {
                const auto label = as_label(r.answer);
                if (!label) continue;
                VoteTally t;
                t.point = r.point();
                (*label == Label::present ? t.n_present : t.n_absent) = 1;
                io::write_consensus_row(out, "raw", t.point, *label, t, false, false);
            }
        } else {
            AggregateOptions opt;
            switch (m) {
                case Method::consensus: opt.strategy = Strategy::majority; break;
                case Method::experts:
                    opt.strategy = Strategy::group_majority;
                    opt.allowed_groups = {AbilityGroup::expert};
                    break;
                case Method::experts_experienced:
                    opt.strategy = Strategy::group_majority;
                    opt.allowed_groups = {AbilityGroup::expert, AbilityGroup::experienced};
                    break;
                case Method::weighted: opt.strategy = Strategy::weighted; break;
                case Method::raw: break;
            }
            opt.weights = &weights;
            opt.groups = &groups;
            const auto result = aggregate(eval, opt);
            if (result.omitted_unsure_only > 0) {
                log << "warning: " << result.omitted_unsure_only << " points had only unsure answers and were omitted\n";
            }
            io::write_consensus_csv(out, to_string(m), result.labels);
        }
        io::write_file(cfg.out_dir / files::consensus(m), out.str());
    }
    return exit_ok;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

/// One row per strategy, in the requested order, scored against the truth column.
inline int cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    const auto parsed = load_records(cfg.input);
    const auto truth = gold_from_records(parsed.records);

    std::ostringstream out;
    out << io::kEvaluationHeader << '\n';
    for (const auto m : cfg.strategies) {
        const auto path = cfg.out_dir / files::consensus(m);
        if (!fs::is_regular_file(path)) {
            throw Error(Errc::io_error, "consensus file not found: " + path.string() + " (run `consensus` first)");
        }
        std::ifstream in(path, std::ios::binary);
        const auto rows = io::read_consensus_csv(in, path.string());
        std::vector<Label> predicted, actual;
        std::vector<std::string> missing;
        std::set<PointKey> reported;
        for (const auto& r : rows) {
            const auto t = truth.find(r.point);
            if (t == truth.end()) {
                if (reported.insert(r.point).second) missing.push_back(r.point.image_id + "/" + r.point.point_id);
                continue;
            }
            predicted.push_back(r.label);
            actual.push_back(t->second);
        }
        if (!missing.empty()) {
            std::string list;
            for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
            if (missing.size() > 20) list += ", ... (" + std::to_string(missing.size()) + " in total)";
            throw Error(Errc::missing_truth, "no truth for points: " + list);
        }
        const auto c = confusion(predicted, actual);
        io::write_evaluation_row(out, to_string(m), c, measures(c));
    }
    ensure_out_dir(cfg.out_dir);
    io::write_file(cfg.out_dir / files::evaluation, out.str());
    log << "wrote " << (cfg.out_dir / files::evaluation).string() << '\n';
    return exit_ok;
}

// ---------------------------------------------------------------------------
// cluster
// ---------------------------------------------------------------------------

/// Groups CSV, weights CSV, and pairwise rank-sum tests of classification
/// times between ability groups (row group slower than column group).
inline int cmd_cluster(const RunConfig& cfg, std::ostream& log) {
    const auto fit = load_fit_artifacts(cfg.out_dir);
    const auto means = fit.theta_means();
    const auto groups = cluster_participants(fit.participants, means);
    if (groups.degenerate) log << "warning: ability quartiles coincide; some groups may be empty\n";
    const auto weights = weight_table(fit.participants, means);

    std::ostringstream g;
    g << "participant_id,group,theta_mean,hdi_low,hdi_high,n_points\n";
    for (std::size_t i = 0; i < fit.participants.size(); ++i) {
        const auto& id = fit.participants[i];
        g << text::escape_csv(id) << ',' << to_string(groups.group.at(id)) << ',' << text::format_double(fit.theta[i].mean)
          << ',' << text::format_double(fit.theta[i].hdi_low) << ',' << text::format_double(fit.theta[i].hdi_high) << ','
          << fit.observations[i] << '\n';
    }
    std::ostringstream w;
    w << "participant_id,weight\n";
    for (const auto& id : fit.participants) w << text::escape_csv(id) << ',' << text::format_double(weights.at(id)) << '\n';
    io::write_file(cfg.out_dir / files::groups, g.str());
    io::write_file(cfg.out_dir / files::weights, w.str());

    if (cfg.input.empty()) return exit_ok;
    const auto parsed = load_records(cfg.input);
    // One duration per participant and image.
    std::map<AbilityGroup, std::vector<double>> durations;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& r : parsed.records) {
        const auto it = groups.group.find(r.participant_id);
        if (it == groups.group.end()) continue;
        if (!seen.emplace(r.participant_id, r.image_id).second) continue;
        durations[it->second].push_back(r.duration_secs);
    }
    std::vector<NamedSample> samples;
    for (auto ag : {AbilityGroup::beginner, AbilityGroup::competent, AbilityGroup::experienced, AbilityGroup::expert}) {
        const auto it = durations.find(ag);
        if (it != durations.end() && !it->second.empty()) samples.push_back({std::string(to_string(ag)), it->second});
    }
    if (samples.size() < 2) {
        log << "warning: fewer than 2 ability groups have classification times; skipping duration tests\n";
        return exit_ok;
    }
    const auto table = pairwise_wilcoxon(samples, Alternative::greater);
    std::ostringstream d;
    d << "group,compared_with,p_value\n";
    for (std::size_t i = 0; i < table.names.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            d << table.names[i] << ',' << table.names[j] << ',' << text::format_double(table.p[i][j]) << '\n';
        }
    }
    io::write_file(cfg.out_dir / files::durations, d.str());
    return exit_ok;
}

}  // namespace crowdirt::pipeline

#endif  // CROWDIRT_PIPELINE_HPP
