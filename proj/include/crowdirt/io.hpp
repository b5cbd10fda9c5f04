#ifndef CROWDIRT_IO_HPP
#define CROWDIRT_IO_HPP

#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdirt/core_data.hpp"
#include "crowdirt/error.hpp"
#include "crowdirt/irt_model.hpp"
#include "crowdirt/metrics.hpp"
#include "crowdirt/posterior.hpp"
#include "crowdirt/sampler.hpp"
#include "crowdirt/simgen.hpp"
#include "crowdirt/text.hpp"
#include "crowdirt/vote.hpp"

namespace crowdirt::io {

using Json = nlohmann::ordered_json;

/// JSON number, or null for NaN and infinities.
inline Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline double number_or_nan(const Json& j) {
    return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
    out << content;
    if (!out) throw Error(Errc::io_error, "failed writing " + path.string());
}

inline Json read_json(const std::filesystem::path& path) {
    try {
        return Json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::io_error, path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Model parameters as a flat named vector
// ---------------------------------------------------------------------------

inline Json params_to_json(const ModelParameters& p) {
    Json j = Json::object();
    auto vec = [&](std::string_view base, const std::vector<double>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) j[std::string(base) + "[" + std::to_string(i) + "]"] = v[i];
    };
    vec("theta", p.theta);
    vec("beta_point", p.beta_point);
    vec("beta_camera", p.beta_camera);
    vec("alpha", p.alpha);
    vec("eta", p.eta);
    vec("phi", p.phi);
    j["sigma_theta"] = p.sigma_theta;
    j["mu_beta_point"] = p.mu_beta_point;
    j["sigma_beta_point"] = p.sigma_beta_point;
    j["mu_beta_camera"] = p.mu_beta_camera;
    j["sigma_beta_camera"] = p.sigma_beta_camera;
    j["sigma_alpha"] = p.sigma_alpha;
    j["sigma_phi"] = p.sigma_phi;
    return j;
}

inline ModelParameters params_from_json(const Json& j) {
    if (!j.is_object()) throw Error(Errc::invalid_argument, "parameter document must be a JSON object");
    std::map<std::string, std::map<std::size_t, double>> vectors;
    std::map<std::string, double> scalars;
    for (const auto& [key, value] : j.items()) {
        if (!value.is_number()) throw Error(Errc::invalid_argument, "parameter '" + key + "' is not a number");
        const auto open = key.find('[');
        if (open == std::string::npos) {
            scalars[key] = value.get<double>();
            continue;
        }
        if (key.back() != ']') throw Error(Errc::invalid_argument, "bad parameter name '" + key + "'");
        const auto idx = text::parse_int(std::string_view(key).substr(open + 1, key.size() - open - 2));
        if (!idx || *idx < 0) throw Error(Errc::invalid_argument, "bad parameter index in '" + key + "'");
        vectors[key.substr(0, open)][static_cast<std::size_t>(*idx)] = value.get<double>();
    }
    auto take = [&](const std::string& base) {
        std::vector<double> out;
        const auto it = vectors.find(base);
        if (it == vectors.end()) return out;
        for (const auto& [i, v] : it->second) {
            if (i != out.size()) throw Error(Errc::invalid_argument, "parameter '" + base + "' has a gap at index " + std::to_string(out.size()));
            out.push_back(v);
        }
        return out;
    };
    auto scalar = [&](const std::string& name) {
        const auto it = scalars.find(name);
        if (it == scalars.end()) throw Error(Errc::invalid_argument, "missing parameter '" + name + "'");
        return it->second;
    };
    ModelParameters p;
    p.theta = take("theta");
    p.beta_point = take("beta_point");
    p.beta_camera = take("beta_camera");
    p.alpha = take("alpha");
    p.eta = take("eta");
    p.phi = take("phi");
    p.sigma_theta = scalar("sigma_theta");
    p.mu_beta_point = scalar("mu_beta_point");
    p.sigma_beta_point = scalar("sigma_beta_point");
    p.mu_beta_camera = scalar("mu_beta_camera");
    p.sigma_beta_camera = scalar("sigma_beta_camera");
    p.sigma_alpha = scalar("sigma_alpha");
    p.sigma_phi = scalar("sigma_phi");
    if (p.alpha.size() != p.beta_point.size() || p.eta.size() != p.beta_point.size()) {
        throw Error(Errc::dimension_mismatch, "per-point parameter vectors differ in length");
    }
    return p;
}

// ---------------------------------------------------------------------------
// Draws, summaries and diagnostics
// ---------------------------------------------------------------------------

/// `iteration,<constrained names...>`; iteration counts post-warmup sweeps.
inline void write_draws_csv(std::ostream& out, const PosteriorDraws& draws, std::size_t chain, std::size_t thin) {
    out << "iteration";
    for (const auto& n : draws.constrained_names) out << ',' << n;
    out << '\n';
    const auto m = draws.constrained(chain);
    for (std::size_t r = 0; r < m.rows; ++r) {
        out << (r + 1) * thin;
        for (std::size_t c = 0; c < m.cols; ++c) out << ',' << text::format_double(m(r, c));
        out << '\n';
    }
}

inline Json summaries_to_json(const std::vector<ParamSummary>& summaries) {
    Json arr = Json::array();
    for (const auto& s : summaries) {
        arr.push_back({{"name", s.name},
                       {"posterior_mean", number(s.mean)},
                       {"posterior_sd", number(s.sd)},
                       {"hdi_low", number(s.hdi_low)},
                       {"hdi_high", number(s.hdi_high)},
                       {"rhat", number(s.rhat)},
                       {"ess", number(s.ess)}});
    }
    return arr;
}

inline std::vector<ParamSummary> summaries_from_json(const Json& j) {
    if (!j.is_array()) throw Error(Errc::invalid_argument, "summary document must be a JSON array");
    std::vector<ParamSummary> out;
    for (const auto& e : j) {
        ParamSummary s;
        s.name = e.at("name").get<std::string>();
        s.mean = number_or_nan(e.at("posterior_mean"));
        s.sd = number_or_nan(e.at("posterior_sd"));
        s.hdi_low = number_or_nan(e.at("hdi_low"));
        s.hdi_high = number_or_nan(e.at("hdi_high"));
        s.rhat = number_or_nan(e.at("rhat"));
        s.ess = number_or_nan(e.at("ess"));
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Consensus output
// ---------------------------------------------------------------------------

inline constexpr std::string_view kConsensusHeader =
    "image_id,point_id,strategy,label,n_present,n_absent,weight_present,weight_absent,tie_broken,fallback";

inline void write_consensus_row(std::ostream& out, std::string_view strategy, const PointKey& point, Label label,
                                const VoteTally& t, bool tie_broken, bool fallback) {
    out << text::escape_csv(point.image_id) << ',' << text::escape_csv(point.point_id) << ',' << strategy << ','
        << to_string(label) << ',' << t.n_present << ',' << t.n_absent << ',' << text::format_double(t.weight_present)
        << ',' << text::format_double(t.weight_absent) << ',' << (tie_broken ? "true" : "false") << ','
        << (fallback ? "true" : "false") << '\n';
}

inline void write_consensus_csv(std::ostream& out, std::string_view strategy, const std::vector<ConsensusLabel>& labels) {
    out << kConsensusHeader << '\n';
    for (const auto& l : labels) write_consensus_row(out, strategy, l.point, l.decided, l.tally, l.tie_broken, l.fallback);
}

struct ConsensusRow {
    PointKey point;
    std::string strategy;
    Label label = Label::absent;
};

inline std::vector<ConsensusRow> read_consensus_csv(std::istream& in, const std::string& source) {
    std::string line;
    if (!text::read_line(in, line) || line != kConsensusHeader) {
        throw Error(Errc::bad_header, source + ": not a consensus file");
    }
    std::vector<ConsensusRow> rows;
    while (text::read_line(in, line)) {
        if (line.empty()) continue;
        const auto f = text::split_csv_line(line);
        if (f.size() != 10) throw Error(Errc::invalid_argument, source + ": malformed row");
        const auto label = parse_label(f[3]);
        if (!label) throw Error(Errc::invalid_argument, source + ": bad label '" + f[3] + "'");
        rows.push_back({{f[0], f[1]}, f[2], *label});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Evaluation report
// ---------------------------------------------------------------------------

inline constexpr std::string_view kEvaluationHeader = "method,n,TP,FP,TN,FN,se,sp,acc,pre,MCC,lr_pos,lr_neg";

inline void write_evaluation_row(std::ostream& out, std::string_view method, const ConfusionCounts& c,
                                 const PerformanceMeasures& m) {
    out << text::escape_csv(method) << ',' << m.n << ',' << c.tp << ',' << c.fp << ',' << c.tn << ',' << c.fn;
    for (double v : {m.se, m.sp, m.acc, m.pre, m.mcc, m.lr_pos, m.lr_neg}) out << ',' << text::format_double(v);
    out << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic truth
// ---------------------------------------------------------------------------

inline Json truth_to_json(const SyntheticTruth& t) {
    Json j;
    j["parameters"] = params_to_json(t.params);
    j["participants"] = t.participants;
    j["cameras"] = t.cameras;
    Json points = Json::array();
    for (std::size_t k = 0; k < t.points.size(); ++k) {
        points.push_back({{"image_id", t.points[k].image_id},
                          {"point_id", t.points[k].point_id},
                          {"camera", t.cameras[t.point_camera[k]]},
                          {"label", std::string(to_string(t.point_label[k]))}});
    }
    j["points"] = std::move(points);
    std::vector<int> correct(t.record_correct.begin(), t.record_correct.end());
    j["record_correct"] = correct;
    return j;
}

}  // namespace crowdirt::io

#endif  // CROWDIRT_IO_HPP
