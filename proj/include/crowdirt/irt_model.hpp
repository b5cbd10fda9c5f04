#ifndef CROWDIRT_IRT_MODEL_HPP
#define CROWDIRT_IRT_MODEL_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crowdirt/core_data.hpp"
#include "crowdirt/error.hpp"

namespace crowdirt {

// ---------------------------------------------------------------------------
// Scalar helpers
// ---------------------------------------------------------------------------

/// 1 / (1 + exp(-x)) without overflow for any finite x.
inline double logistic(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) noexcept { return std::log(p) - std::log1p(-p); }

/// log(logistic(x)) = -softplus(-x).
inline double log_logistic(double x) noexcept {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double normal_lpdf(double x, double mean, double sd) noexcept {
    if (!(sd > 0.0)) return kNegInf;
    const double z = (x - mean) / sd;
    return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sd) - 0.5 * z * z;
}

/// Cauchy(0, scale) truncated to (0, inf) and renormalized.
inline double half_cauchy_lpdf(double x, double scale) noexcept {
    if (!(x > 0.0)) return kNegInf;
    const double z = x / scale;
    return std::log(2.0) - std::log(std::numbers::pi * scale) - std::log1p(z * z);
}

inline double uniform_lpdf(double x, double lo, double hi) noexcept {
    if (!(x > lo && x < hi)) return kNegInf;
    return -std::log(hi - lo);
}

/// Beta(1, b) density b (1 - x)^(b - 1) on (0, 1).
inline double beta_one_lpdf(double x, double b) noexcept {
    if (!(x > 0.0 && x < 1.0)) return kNegInf;
    return std::log(b) + (b - 1.0) * std::log1p(-x);
}

// Fixed prior constants of the model.
namespace prior {
inline constexpr double sigma_theta_upper = 10.0;
inline constexpr double mu_sd = 5.0;
inline constexpr double scale_cauchy = 5.0;
inline constexpr double alpha_mean = 1.0;
inline constexpr double eta_beta_b = 5.0;
}  // namespace prior

/// Floor applied to p and 1 - p inside the likelihood only.
inline constexpr double kProbabilityFloor = 1e-12;

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct ModelDims {
    std::size_t participants = 0;
    std::size_t points = 0;
    std::size_t cameras = 0;
    std::size_t occasions = 1;

    bool operator==(const ModelDims&) const = default;
};

inline ModelDims dims_of(const ResponseMatrix& rm) {
    return {rm.n_participants(), rm.n_points(), rm.n_cameras(), rm.n_occasions()};
}

enum class AnchorMode : std::uint8_t { hierarchical_zero_mean, sum_to_zero };

struct ModelConfig {
    bool include_learning = true;
    AnchorMode anchor_mode = AnchorMode::hierarchical_zero_mean;
};

struct ModelParameters {
    std::vector<double> theta;
    std::vector<double> beta_point;
    std::vector<double> beta_camera;
    std::vector<double> alpha;
    std::vector<double> eta;
    std::vector<double> phi;  ///< phi[0] is the first occasion and is pinned to 0
    double sigma_theta = 1.0;
    double mu_beta_point = 0.0;
    double sigma_beta_point = 1.0;
    double mu_beta_camera = 0.0;
    double sigma_beta_camera = 1.0;
    double sigma_alpha = 1.0;
    double sigma_phi = 1.0;

    ModelDims dims() const { return {theta.size(), beta_point.size(), beta_camera.size(), phi.size()}; }

    /// Values at the prior medians, sized for `d`.
    static ModelParameters prior_median(const ModelDims& d) {
        ModelParameters p;
        p.theta.assign(d.participants, 0.0);
        p.beta_point.assign(d.points, 0.0);
        p.beta_camera.assign(d.cameras, 0.0);
        p.alpha.assign(d.points, prior::alpha_mean);
        p.eta.assign(d.points, 1.0 - std::pow(0.5, 1.0 / prior::eta_beta_b));
        p.phi.assign(std::max<std::size_t>(d.occasions, 1), 0.0);
        p.sigma_theta = prior::sigma_theta_upper / 2.0;
        p.sigma_beta_point = prior::scale_cauchy;
        p.sigma_beta_camera = prior::scale_cauchy;
        p.sigma_alpha = prior::scale_cauchy;
        p.sigma_phi = prior::scale_cauchy;
        return p;
    }

    bool operator==(const ModelParameters&) const = default;
};

// ---------------------------------------------------------------------------
// Likelihood and prior
// ---------------------------------------------------------------------------

/// eta + (1 - eta) * logistic(alpha * (phi + theta - beta_point - beta_camera)).
inline double response_probability(double theta, double beta_point, double beta_camera, double alpha,
                                   double eta, double phi = 0.0) {
    if (!std::isfinite(theta) || !std::isfinite(beta_point) || !std::isfinite(beta_camera) ||
        !std::isfinite(alpha) || !std::isfinite(eta) || !std::isfinite(phi)) {
        throw Error(Errc::non_finite, "response_probability received a non-finite input");
    }
    if (!(eta >= 0.0 && eta < 1.0)) {
        throw Error(Errc::invalid_argument, "pseudo-guessing must lie in [0, 1)");
    }
    return eta + (1.0 - eta) * logistic(alpha * (phi + theta - beta_point - beta_camera));
}

/// Bernoulli log mass of one correctness code given the linear predictor.
inline double observation_log_mass(bool correct, double eta, double linear) noexcept {
    if (correct) {
        const double p = std::clamp(eta + (1.0 - eta) * logistic(linear), kProbabilityFloor, 1.0 - kProbabilityFloor);
        return std::log(p);
    }
    // 1 - p = (1 - eta) * logistic(-linear), formed directly to keep precision near p = 1.
    const double q = std::clamp((1.0 - eta) * logistic(-linear), kProbabilityFloor, 1.0 - kProbabilityFloor);
    return std::log(q);
}

namespace detail {

inline void check_dims(const ModelParameters& p, const ResponseMatrix& rm) {
    const ModelDims want = dims_of(rm);
    ModelDims got = p.dims();
    if (p.alpha.size() != got.points || p.eta.size() != got.points || got.participants != want.participants ||
        got.points != want.points || got.cameras != want.cameras || got.occasions < want.occasions) {
        throw Error(Errc::dimension_mismatch, "parameter vector lengths do not match the response matrix");
    }
}

}  // namespace detail

inline double log_likelihood(const ModelParameters& p, const ResponseMatrix& rm) {
    detail::check_dims(p, rm);
    double total = 0.0;
    for (const auto& o : rm.observations) {
        const double linear = p.alpha[o.point] *
                              (p.phi[o.occasion] + p.theta[o.participant] - p.beta_point[o.point] - p.beta_camera[o.camera]);
        total += observation_log_mass(o.correct != 0, p.eta[o.point], linear);
    }
    return total;
}

inline double log_prior(const ModelParameters& p, const ModelConfig& cfg) {
    for (double e : p.eta) {
        if (!(e > 0.0 && e < 1.0)) return kNegInf;
    }
    if (!(p.sigma_theta > 0.0 && p.sigma_theta < prior::sigma_theta_upper)) return kNegInf;
    if (!(p.sigma_beta_point > 0.0) || !(p.sigma_beta_camera > 0.0) || !(p.sigma_alpha > 0.0)) return kNegInf;
    if (!p.phi.empty() && p.phi[0] != 0.0) return kNegInf;
    const bool learning = cfg.include_learning && p.phi.size() >= 2;
    if (learning && !(p.sigma_phi > 0.0)) return kNegInf;
    if (!cfg.include_learning) {
        for (double f : p.phi) {
            if (f != 0.0) return kNegInf;
        }
    }

    double lp = uniform_lpdf(p.sigma_theta, 0.0, prior::sigma_theta_upper);
    for (double t : p.theta) lp += normal_lpdf(t, 0.0, p.sigma_theta);

    lp += normal_lpdf(p.mu_beta_point, 0.0, prior::mu_sd);
    lp += half_cauchy_lpdf(p.sigma_beta_point, prior::scale_cauchy);
    for (double b : p.beta_point) lp += normal_lpdf(b, p.mu_beta_point, p.sigma_beta_point);

    lp += normal_lpdf(p.mu_beta_camera, 0.0, prior::mu_sd);
    lp += half_cauchy_lpdf(p.sigma_beta_camera, prior::scale_cauchy);
    for (double b : p.beta_camera) lp += normal_lpdf(b, p.mu_beta_camera, p.sigma_beta_camera);

    lp += half_cauchy_lpdf(p.sigma_alpha, prior::scale_cauchy);
    for (double a : p.alpha) lp += normal_lpdf(a, prior::alpha_mean, p.sigma_alpha);

    for (double e : p.eta) lp += beta_one_lpdf(e, prior::eta_beta_b);

    if (learning) {
        lp += half_cauchy_lpdf(p.sigma_phi, prior::scale_cauchy);
        for (std::size_t t = 1; t < p.phi.size(); ++t) lp += normal_lpdf(p.phi[t], 0.0, p.sigma_phi);
    }
    return lp;
}

inline double log_posterior(const ModelParameters& p, const ResponseMatrix& rm, const ModelConfig& cfg) {
    const double lp = log_prior(p, cfg);
    if (lp == kNegInf) return kNegInf;
    return lp + log_likelihood(p, rm);
}

// ---------------------------------------------------------------------------
// Unconstrained parameterization
// ---------------------------------------------------------------------------

enum class Block : std::uint8_t {
    theta,
    beta_point,
    beta_camera,
    alpha,
    eta,
    phi,
    sigma_theta,
    mu_beta_point,
    sigma_beta_point,
    mu_beta_camera,
    sigma_beta_camera,
    sigma_alpha,
    sigma_phi,
};

inline constexpr std::size_t kBlockCount = 13;

constexpr std::string_view to_string(Block b) noexcept {
    constexpr std::array<std::string_view, kBlockCount> names = {
        "theta",          "beta_point",     "beta_camera",      "alpha",       "eta",
        "phi",            "sigma_theta",    "mu_beta_point",    "sigma_beta_point",
        "mu_beta_camera", "sigma_beta_camera", "sigma_alpha",   "sigma_phi"};
    return names[static_cast<std::size_t>(b)];
}

/// Positions of each parameter block inside the unconstrained vector.
///
/// theta holds I entries, or I - 1 under sum_to_zero (the last ability is
/// minus the sum of the others). phi holds T - 1 entries for occasions 2..T
/// when learning is on. eta is on the logit scale, sigma_theta on the logit
/// scale of sigma_theta / 10, the other scales on the log scale.
class ParameterLayout {
public:
    ParameterLayout(const ModelDims& dims, const ModelConfig& cfg) : dims_(dims), cfg_(cfg) {
        if (dims.participants == 0 || dims.points == 0 || dims.cameras == 0 || dims.occasions == 0) {
            throw Error(Errc::invalid_argument, "model dimensions must all be positive");
        }
        if (cfg.anchor_mode == AnchorMode::sum_to_zero && dims.participants < 2) {
            throw Error(Errc::invalid_argument, "sum_to_zero anchoring needs at least 2 participants");
        }
        const bool learning = has_learning();
        counts_ = {cfg.anchor_mode == AnchorMode::sum_to_zero ? dims.participants - 1 : dims.participants,
                   dims.points,
                   dims.cameras,
                   dims.points,
                   dims.points,
                   learning ? dims.occasions - 1 : 0,
                   1, 1, 1, 1, 1, 1,
                   learning ? std::size_t{1} : std::size_t{0}};
        std::size_t off = 0;
        for (std::size_t b = 0; b < kBlockCount; ++b) {
            offsets_[b] = off;
            off += counts_[b];
        }
        size_ = off;
    }

    std::size_t size() const { return size_; }
    const ModelDims& dims() const { return dims_; }
    const ModelConfig& config() const { return cfg_; }
    bool has_learning() const { return cfg_.include_learning && dims_.occasions >= 2; }

    std::size_t offset(Block b) const { return offsets_[static_cast<std::size_t>(b)]; }
    std::size_t count(Block b) const { return counts_[static_cast<std::size_t>(b)]; }

    Block block_of(std::size_t j) const {
        for (std::size_t b = kBlockCount; b-- > 0;) {
            if (counts_[b] > 0 && j >= offsets_[b]) return static_cast<Block>(b);
        }
        return Block::theta;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(size_);
        for (std::size_t b = 0; b < kBlockCount; ++b) {
            const auto block = static_cast<Block>(b);
            const std::string base(to_string(block));
            if (b >= static_cast<std::size_t>(Block::sigma_theta)) {
                if (counts_[b] == 1) out.push_back(base);
                continue;
            }
            const std::size_t shift = block == Block::phi ? 1 : 0;
            for (std::size_t i = 0; i < counts_[b]; ++i) out.push_back(base + "[" + std::to_string(i + shift) + "]");
        }
        return out;
    }

private:
    ModelDims dims_;
    ModelConfig cfg_;
    std::array<std::size_t, kBlockCount> offsets_{};
    std::array<std::size_t, kBlockCount> counts_{};
    std::size_t size_ = 0;
};

inline double sigma_theta_from_unconstrained(double u) noexcept { return prior::sigma_theta_upper * logistic(u); }

inline std::vector<double> to_unconstrained(const ModelParameters& p, const ModelConfig& cfg) {
    const ParameterLayout layout(p.dims(), cfg);
    std::vector<double> x(layout.size());
    auto put = [&](Block b, std::size_t i, double v) { x[layout.offset(b) + i] = v; };
    for (std::size_t i = 0; i < layout.count(Block::theta); ++i) put(Block::theta, i, p.theta[i]);
    for (std::size_t k = 0; k < p.beta_point.size(); ++k) {
        put(Block::beta_point, k, p.beta_point[k]);
        put(Block::alpha, k, p.alpha[k]);
        put(Block::eta, k, logit(p.eta[k]));
    }
    for (std::size_t l = 0; l < p.beta_camera.size(); ++l) put(Block::beta_camera, l, p.beta_camera[l]);
    for (std::size_t t = 0; t < layout.count(Block::phi); ++t) put(Block::phi, t, p.phi[t + 1]);
    put(Block::sigma_theta, 0, logit(p.sigma_theta / prior::sigma_theta_upper));
    put(Block::mu_beta_point, 0, p.mu_beta_point);
    put(Block::sigma_beta_point, 0, std::log(p.sigma_beta_point));
    put(Block::mu_beta_camera, 0, p.mu_beta_camera);
    put(Block::sigma_beta_camera, 0, std::log(p.sigma_beta_camera));
    put(Block::sigma_alpha, 0, std::log(p.sigma_alpha));
    if (layout.count(Block::sigma_phi) == 1) put(Block::sigma_phi, 0, std::log(p.sigma_phi));
    return x;
}

struct ConstrainedParameters {
    ModelParameters params;
    double log_jacobian = 0.0;  ///< log |det d(constrained)/d(unconstrained)|
};

inline ConstrainedParameters from_unconstrained(std::span<const double> x, const ParameterLayout& layout) {
    if (x.size() != layout.size()) {
        throw Error(Errc::dimension_mismatch, "unconstrained vector has length " + std::to_string(x.size()) +
                                                  ", expected " + std::to_string(layout.size()));
    }
    const auto& d = layout.dims();
    ConstrainedParameters out;
    auto& p = out.params;
    auto at = [&](Block b, std::size_t i) { return x[layout.offset(b) + i]; };

    p.theta.resize(d.participants);
    double sum = 0.0;
    for (std::size_t i = 0; i < layout.count(Block::theta); ++i) {
        p.theta[i] = at(Block::theta, i);
        sum += p.theta[i];
    }
    if (layout.config().anchor_mode == AnchorMode::sum_to_zero) p.theta[d.participants - 1] = -sum;

    p.beta_point.resize(d.points);
    p.alpha.resize(d.points);
    p.eta.resize(d.points);
    for (std::size_t k = 0; k < d.points; ++k) {
        p.beta_point[k] = at(Block::beta_point, k);
        p.alpha[k] = at(Block::alpha, k);
        const double u = at(Block::eta, k);
        p.eta[k] = logistic(u);
        out.log_jacobian += log_logistic(u) + log_logistic(-u);
    }
    p.beta_camera.resize(d.cameras);
    for (std::size_t l = 0; l < d.cameras; ++l) p.beta_camera[l] = at(Block::beta_camera, l);
    p.phi.assign(d.occasions, 0.0);
    for (std::size_t t = 0; t < layout.count(Block::phi); ++t) p.phi[t + 1] = at(Block::phi, t);

    const double us = at(Block::sigma_theta, 0);
    p.sigma_theta = sigma_theta_from_unconstrained(us);
    out.log_jacobian += std::log(prior::sigma_theta_upper) + log_logistic(us) + log_logistic(-us);
    p.mu_beta_point = at(Block::mu_beta_point, 0);
    p.sigma_beta_point = std::exp(at(Block::sigma_beta_point, 0));
    p.mu_beta_camera = at(Block::mu_beta_camera, 0);
    p.sigma_beta_camera = std::exp(at(Block::sigma_beta_camera, 0));
    p.sigma_alpha = std::exp(at(Block::sigma_alpha, 0));
    out.log_jacobian += at(Block::sigma_beta_point, 0) + at(Block::sigma_beta_camera, 0) + at(Block::sigma_alpha, 0);
    if (layout.count(Block::sigma_phi) == 1) {
        p.sigma_phi = std::exp(at(Block::sigma_phi, 0));
        out.log_jacobian += at(Block::sigma_phi, 0);
    } else {
        p.sigma_phi = prior::scale_cauchy;
    }
    return out;
}

inline ConstrainedParameters from_unconstrained(std::span<const double> x, const ModelDims& dims,
                                                const ModelConfig& cfg) {
    return from_unconstrained(x, ParameterLayout(dims, cfg));
}

// ---------------------------------------------------------------------------
// Flat constrained view (draw export, summaries, JSON)
// ---------------------------------------------------------------------------

inline bool exports_sigma_phi(const ModelConfig& cfg, const ModelDims& d) {
    return cfg.include_learning && d.occasions >= 2;
}

inline std::vector<std::string> constrained_names(const ModelDims& d, const ModelConfig& cfg) {
    std::vector<std::string> out;
    auto vec = [&](std::string_view base, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out.push_back(std::string(base) + "[" + std::to_string(i) + "]");
    };
    vec("theta", d.participants);
    vec("beta_point", d.points);
    vec("beta_camera", d.cameras);
    vec("alpha", d.points);
    vec("eta", d.points);
    if (cfg.include_learning) vec("phi", d.occasions);
    for (auto s : {"sigma_theta", "mu_beta_point", "sigma_beta_point", "mu_beta_camera", "sigma_beta_camera",
                   "sigma_alpha"}) {
        out.emplace_back(s);
    }
    if (exports_sigma_phi(cfg, d)) out.emplace_back("sigma_phi");
    return out;
}

inline std::vector<double> flatten(const ModelParameters& p, const ModelConfig& cfg) {
    std::vector<double> out;
    const auto d = p.dims();
    out.insert(out.end(), p.theta.begin(), p.theta.end());
    out.insert(out.end(), p.beta_point.begin(), p.beta_point.end());
    out.insert(out.end(), p.beta_camera.begin(), p.beta_camera.end());
    out.insert(out.end(), p.alpha.begin(), p.alpha.end());
    out.insert(out.end(), p.eta.begin(), p.eta.end());
    if (cfg.include_learning) out.insert(out.end(), p.phi.begin(), p.phi.end());
    for (double s : {p.sigma_theta, p.mu_beta_point, p.sigma_beta_point, p.mu_beta_camera, p.sigma_beta_camera,
                     p.sigma_alpha}) {
        out.push_back(s);
    }
    if (exports_sigma_phi(cfg, d)) out.push_back(p.sigma_phi);
    return out;
}

// ---------------------------------------------------------------------------
// Sampling target
// ---------------------------------------------------------------------------

/// Joint move of a log-scale coordinate and the group it scales:
/// u -> u + s and each member m -> c + (m - c) e^s, where c is the
/// coordinate `center` or, when absent, `center_value`. The map is a
/// one-parameter group in s with log jacobian members.size() * s.
/// When `upper` is positive the scale coordinate is logit(sigma / upper)
/// instead; sigma -> sigma e^s then adds
/// log(1 - sigma / upper) - log(1 - sigma' / upper) to the log jacobian.
struct ScaleMove {
    std::size_t log_scale = 0;
    std::vector<std::size_t> members;
    std::optional<std::size_t> center;
    double center_value = 0.0;
    double upper = 0.0;
};

/// Log posterior on the unconstrained scale (log jacobian included), with
/// single-coordinate conditional differences that only touch the
/// observations and prior terms involving that coordinate.
class IrtTarget {
public:
    IrtTarget(const ResponseMatrix& rm, const ModelConfig& cfg)
        : rm_(&rm), layout_(dims_of(rm), cfg), by_participant_(rm.n_participants()), by_point_(rm.n_points()),
          by_camera_(rm.n_cameras()), by_occasion_(rm.n_occasions()) {
        for (std::uint32_t n = 0; n < rm.observations.size(); ++n) {
            const auto& o = rm.observations[n];
            by_participant_[o.participant].push_back(n);
            by_point_[o.point].push_back(n);
            by_camera_[o.camera].push_back(n);
            by_occasion_[o.occasion].push_back(n);
        }
    }

    std::size_t dims() const { return layout_.size(); }
    const ParameterLayout& layout() const { return layout_; }
    const ResponseMatrix& data() const { return *rm_; }

    double log_density(std::span<const double> x) const {
        const auto c = from_unconstrained(x, layout_);
        const double lp = log_posterior(c.params, *rm_, layout_.config());
        if (lp == kNegInf) return kNegInf;
        return lp + c.log_jacobian;
    }

    std::vector<double> initial_point() const {
        return to_unconstrained(ModelParameters::prior_median(layout_.dims()), layout_.config());
    }

    /// Directions along which single-coordinate updates crawl: a shared shift
    /// of point and camera difficulties in opposite directions and (zero-mean
    /// anchoring only) a shared shift of abilities and point difficulties,
    /// both exactly flat in the likelihood; and, with learning, a shift of
    /// the learning offsets, flat except on first-occasion observations.
    std::vector<std::vector<double>> directions() const {
        std::vector<std::vector<double>> out;
        auto fill = [&](std::vector<double>& d, Block b, double v) {
            for (std::size_t i = 0; i < layout_.count(b); ++i) d[layout_.offset(b) + i] = v;
        };
        std::vector<double> d1(layout_.size(), 0.0);
        fill(d1, Block::beta_point, 1.0);
        fill(d1, Block::mu_beta_point, 1.0);
        fill(d1, Block::beta_camera, -1.0);
        fill(d1, Block::mu_beta_camera, -1.0);
        out.push_back(std::move(d1));
        if (layout_.config().anchor_mode == AnchorMode::hierarchical_zero_mean) {
            std::vector<double> d2(layout_.size(), 0.0);
            fill(d2, Block::theta, 1.0);
            fill(d2, Block::beta_point, 1.0);
            fill(d2, Block::mu_beta_point, 1.0);
            out.push_back(std::move(d2));
        }
        // Learning offsets against abilities (or difficulties under sum_to_zero):
        // flat for every occasion after the first.
        if (layout_.count(Block::phi) > 0) {
            std::vector<double> d3(layout_.size(), 0.0);
            fill(d3, Block::phi, 1.0);
            if (layout_.config().anchor_mode == AnchorMode::hierarchical_zero_mean) {
                fill(d3, Block::theta, -1.0);
            } else {
                fill(d3, Block::beta_point, 1.0);
                fill(d3, Block::mu_beta_point, 1.0);
            }
            out.push_back(std::move(d3));
        }
        return out;
    }

    /// Non-centred moves for each hierarchical scale with a log-scale
    /// coordinate; they cross the funnel between a scale and its members.
    std::vector<ScaleMove> scale_moves() const {
        std::vector<ScaleMove> out;
        auto add = [&](Block scale, Block members, std::optional<Block> center, double center_value) {
            if (layout_.count(scale) == 0 || layout_.count(members) == 0) return;
            ScaleMove m;
            m.log_scale = layout_.offset(scale);
            for (std::size_t i = 0; i < layout_.count(members); ++i) m.members.push_back(layout_.offset(members) + i);
            if (center) m.center = layout_.offset(*center);
            m.center_value = center_value;
            out.push_back(std::move(m));
        };
        add(Block::sigma_beta_point, Block::beta_point, Block::mu_beta_point, 0.0);
        add(Block::sigma_beta_camera, Block::beta_camera, Block::mu_beta_camera, 0.0);
        add(Block::sigma_alpha, Block::alpha, std::nullopt, prior::alpha_mean);
        add(Block::sigma_phi, Block::phi, std::nullopt, 0.0);
        add(Block::sigma_theta, Block::theta, std::nullopt, 0.0);
        if (!out.empty() && out.back().log_scale == layout_.offset(Block::sigma_theta)) {
            out.back().upper = prior::sigma_theta_upper;
        }
        return out;
    }

    /// One reflection per point: (alpha, beta_point) -> (-alpha, 2 m - beta_point)
    /// with m the mean of phi + theta - beta_camera over the point's
    /// observations. It maps each sign-flipped mode of an item onto the
    /// other, is its own inverse and has unit jacobian; m does not depend on
    /// the moved coordinates.
    /// A final involution negates every discrimination, ability, difficulty,
    /// difficulty mean and learning offset at once; the likelihood is
    /// invariant under it and only the discrimination prior changes.
    std::size_t n_involutions() const { return layout_.count(Block::alpha) + 1; }

    /// Fills `changes` with the moved coordinates of involution k and returns
    /// the log density difference of the move.
    double involution_delta(std::span<const double> x, std::size_t k,
                            std::vector<std::pair<std::size_t, double>>& changes) const {
        changes.clear();
        if (k == layout_.count(Block::alpha)) return global_flip_delta(x, changes);
        const auto& obs = by_point_[k];
        const std::size_t ja = layout_.offset(Block::alpha) + k, jb = layout_.offset(Block::beta_point) + k;
        const double a = x[ja], b = x[jb];
        if (obs.empty()) {
            changes = {{ja, -a}};
            const double sd = std::exp(at(x, Block::sigma_alpha));
            return normal_lpdf(-a, prior::alpha_mean, sd) - normal_lpdf(a, prior::alpha_mean, sd);
        }
        const double last = sum_to_zero() ? theta(x, layout_.dims().participants - 1) : 0.0;
        auto offset_of = [&](std::uint32_t n) { return observation_offset(x, n, last); };
        double m = 0.0;
        for (auto n : obs) m += offset_of(n);
        m /= static_cast<double>(obs.size());
        const double a2 = -a, b2 = 2.0 * m - b;
        const double eta = logistic(at(x, Block::eta, k));
        double delta = 0.0;
        for (auto n : obs) {
            const bool correct = rm_->observations[n].correct != 0;
            const double off = offset_of(n);
            delta += observation_log_mass(correct, eta, a2 * (off - b2)) - observation_log_mass(correct, eta, a * (off - b));
        }
        const double sa = std::exp(at(x, Block::sigma_alpha));
        const double mu = at(x, Block::mu_beta_point), sb = std::exp(at(x, Block::sigma_beta_point));
        delta += normal_lpdf(a2, prior::alpha_mean, sa) - normal_lpdf(a, prior::alpha_mean, sa);
        delta += normal_lpdf(b2, mu, sb) - normal_lpdf(b, mu, sb);
        changes = {{ja, a2}, {jb, b2}};
        return delta;
    }

    double global_flip_delta(std::span<const double> x, std::vector<std::pair<std::size_t, double>>& changes) const {
        for (auto b : {Block::theta, Block::beta_point, Block::beta_camera, Block::alpha, Block::phi, Block::mu_beta_point,
                       Block::mu_beta_camera}) {
            for (std::size_t i = 0; i < layout_.count(b); ++i) {
                const std::size_t j = layout_.offset(b) + i;
                changes.emplace_back(j, -x[j]);
            }
        }
        const double sd = std::exp(at(x, Block::sigma_alpha));
        double delta = 0.0;
        for (std::size_t i = 0; i < layout_.count(Block::alpha); ++i) {
            const double a = at(x, Block::alpha, i);
            delta += normal_lpdf(-a, prior::alpha_mean, sd) - normal_lpdf(a, prior::alpha_mean, sd);
        }
        return delta;
    }

    /// One block per point: discrimination, difficulty and pseudo-guessing,
    /// which are strongly correlated in the posterior.
    std::vector<std::vector<std::size_t>> blocks() const {
        std::vector<std::vector<std::size_t>> out;
        for (std::size_t k = 0; k < layout_.count(Block::alpha); ++k) {
            out.push_back({layout_.offset(Block::alpha) + k, layout_.offset(Block::beta_point) + k,
                           layout_.offset(Block::eta) + k});
        }
        return out;
    }

    /// log p(x with block k set to `values`) - log p(x), from the point's
    /// observations and the three prior terms.
    double block_delta(std::span<const double> x, std::size_t k, std::span<const double> values) const {
        const double a = at(x, Block::alpha, k), b = at(x, Block::beta_point, k), u = at(x, Block::eta, k);
        const double a2 = values[0], b2 = values[1], u2 = values[2];
        const double eta = logistic(u), eta2 = logistic(u2);
        const double last = sum_to_zero() ? theta(x, layout_.dims().participants - 1) : 0.0;
        double delta = 0.0;
        for (auto n : by_point_[k]) {
            const bool correct = rm_->observations[n].correct != 0;
            const double off = observation_offset(x, n, last);
            delta += observation_log_mass(correct, eta2, a2 * (off - b2)) - observation_log_mass(correct, eta, a * (off - b));
        }
        const double sa = std::exp(at(x, Block::sigma_alpha));
        const double mu = at(x, Block::mu_beta_point), sb = std::exp(at(x, Block::sigma_beta_point));
        delta += normal_lpdf(a2, prior::alpha_mean, sa) - normal_lpdf(a, prior::alpha_mean, sa);
        delta += normal_lpdf(b2, mu, sb) - normal_lpdf(b, mu, sb);
        delta += eta_term(u2) - eta_term(u);
        return delta;
    }

    /// log p(x with x[j] = value) - log p(x).
    double conditional_delta(std::span<const double> x, std::size_t j, double value) const {
        const Block b = layout_.block_of(j);
        const std::size_t i = j - layout_.offset(b);
        const double old = x[j];
        switch (b) {
            case Block::theta: return theta_delta(x, i, old, value);
            case Block::beta_point: {
                const double mu = at(x, Block::mu_beta_point), sd = std::exp(at(x, Block::sigma_beta_point));
                return obs_delta(x, by_point_[i], j, value) + normal_lpdf(value, mu, sd) - normal_lpdf(old, mu, sd);
            }
            case Block::beta_camera: {
                const double mu = at(x, Block::mu_beta_camera), sd = std::exp(at(x, Block::sigma_beta_camera));
                return obs_delta(x, by_camera_[i], j, value) + normal_lpdf(value, mu, sd) - normal_lpdf(old, mu, sd);
            }
            case Block::alpha: {
                const double sd = std::exp(at(x, Block::sigma_alpha));
                return obs_delta(x, by_point_[i], j, value) + normal_lpdf(value, prior::alpha_mean, sd) -
                       normal_lpdf(old, prior::alpha_mean, sd);
            }
            case Block::eta: return obs_delta(x, by_point_[i], j, value) + eta_term(value) - eta_term(old);
            case Block::phi: {
                const double sd = std::exp(at(x, Block::sigma_phi));
                return obs_delta(x, by_occasion_[i + 1], j, value) + normal_lpdf(value, 0.0, sd) -
                       normal_lpdf(old, 0.0, sd);
            }
            case Block::sigma_theta: {
                auto term = [&](double u) {
                    const double s = sigma_theta_from_unconstrained(u);
                    double lp = uniform_lpdf(s, 0.0, prior::sigma_theta_upper) + log_logistic(u) + log_logistic(-u);
                    for (std::size_t p = 0; p < layout_.dims().participants; ++p) lp += normal_lpdf(theta(x, p), 0.0, s);
                    return lp;
                };
                return term(value) - term(old);
            }
            case Block::mu_beta_point:
                return hyper_mean_delta(x, Block::beta_point, std::exp(at(x, Block::sigma_beta_point)), old, value);
            case Block::mu_beta_camera:
                return hyper_mean_delta(x, Block::beta_camera, std::exp(at(x, Block::sigma_beta_camera)), old, value);
            case Block::sigma_beta_point:
                return hyper_scale_delta(x, Block::beta_point, at(x, Block::mu_beta_point), old, value);
            case Block::sigma_beta_camera:
                return hyper_scale_delta(x, Block::beta_camera, at(x, Block::mu_beta_camera), old, value);
            case Block::sigma_alpha:
                return hyper_scale_delta(x, Block::alpha, prior::alpha_mean, old, value);
            case Block::sigma_phi:
                return hyper_scale_delta(x, Block::phi, 0.0, old, value);
        }
        return 0.0;
    }

    ModelParameters params(std::span<const double> x) const { return from_unconstrained(x, layout_).params; }

private:
    double at(std::span<const double> x, Block b, std::size_t i = 0) const { return x[layout_.offset(b) + i]; }

    /// Beta prior of pseudo-guessing on the logit scale, jacobian included.
    static double eta_term(double u) {
        return beta_one_lpdf(logistic(u), prior::eta_beta_b) + log_logistic(u) + log_logistic(-u);
    }

    /// phi + theta - beta_camera of observation n.
    double observation_offset(std::span<const double> x, std::uint32_t n, double theta_last) const {
        const auto& o = rm_->observations[n];
        const double th = o.participant < layout_.count(Block::theta) ? at(x, Block::theta, o.participant) : theta_last;
        const double ph = (o.occasion == 0 || layout_.count(Block::phi) == 0) ? 0.0 : at(x, Block::phi, o.occasion - 1);
        return ph + th - at(x, Block::beta_camera, o.camera);
    }

    double theta(std::span<const double> x, std::size_t p) const {
        if (p < layout_.count(Block::theta)) return at(x, Block::theta, p);
        double sum = 0.0;
        for (std::size_t q = 0; q < layout_.count(Block::theta); ++q) sum += at(x, Block::theta, q);
        return -sum;
    }

    /// Log mass of observation n with coordinate j replaced by `value`
    /// (j == npos leaves x untouched). `theta_last` supplies the derived
    /// ability of the last participant under sum_to_zero.
    double obs_log_mass(std::span<const double> x, std::uint32_t n, std::size_t j, double value,
                        double theta_last) const {
        const auto& o = rm_->observations[n];
        auto get = [&](std::size_t idx) { return idx == j ? value : x[idx]; };
        const double th = o.participant < layout_.count(Block::theta)
                              ? get(layout_.offset(Block::theta) + o.participant)
                              : theta_last;
        const double bk = get(layout_.offset(Block::beta_point) + o.point);
        const double bl = get(layout_.offset(Block::beta_camera) + o.camera);
        const double a = get(layout_.offset(Block::alpha) + o.point);
        const double eta = logistic(get(layout_.offset(Block::eta) + o.point));
        const double ph = (o.occasion == 0 || layout_.count(Block::phi) == 0)
                              ? 0.0
                              : get(layout_.offset(Block::phi) + o.occasion - 1);
        return observation_log_mass(o.correct != 0, eta, a * (ph + th - bk - bl));
    }

    double obs_delta(std::span<const double> x, const std::vector<std::uint32_t>& obs, std::size_t j,
                     double value) const {
        const double last = sum_to_zero() ? theta(x, layout_.dims().participants - 1) : 0.0;
        double delta = 0.0;
        for (auto n : obs) {
            delta += obs_log_mass(x, n, j, value, last) - obs_log_mass(x, n, kNone, 0.0, last);
        }
        return delta;
    }

    double theta_delta(std::span<const double> x, std::size_t i, double old, double value) const {
        const double sd = sigma_theta_from_unconstrained(at(x, Block::sigma_theta));
        const std::size_t j = layout_.offset(Block::theta) + i;
        if (!sum_to_zero()) {
            return obs_delta(x, by_participant_[i], j, value) + normal_lpdf(value, 0.0, sd) -
                   normal_lpdf(old, 0.0, sd);
        }
        // Moving theta[i] also moves the derived last ability by the opposite amount.
        const std::size_t last = layout_.dims().participants - 1;
        const double last_old = theta(x, last);
        const double last_new = last_old - (value - old);
        double delta = 0.0;
        for (auto n : by_participant_[i]) {
            delta += obs_log_mass(x, n, j, value, last_new) - obs_log_mass(x, n, kNone, 0.0, last_old);
        }
        for (auto n : by_participant_[last]) {
            delta += obs_log_mass(x, n, j, value, last_new) - obs_log_mass(x, n, kNone, 0.0, last_old);
        }
        return delta + normal_lpdf(value, 0.0, sd) - normal_lpdf(old, 0.0, sd) + normal_lpdf(last_new, 0.0, sd) -
               normal_lpdf(last_old, 0.0, sd);
    }

    double hyper_mean_delta(std::span<const double> x, Block members, double sd, double old, double value) const {
        double delta = normal_lpdf(value, 0.0, prior::mu_sd) - normal_lpdf(old, 0.0, prior::mu_sd);
        for (std::size_t i = 0; i < layout_.count(members); ++i) {
            const double v = at(x, members, i);
            delta += normal_lpdf(v, value, sd) - normal_lpdf(v, old, sd);
        }
        return delta;
    }

    double hyper_scale_delta(std::span<const double> x, Block members, double mean, double old, double value) const {
        auto term = [&](double u) {
            const double sd = std::exp(u);
            double lp = half_cauchy_lpdf(sd, prior::scale_cauchy) + u;
            for (std::size_t i = 0; i < layout_.count(members); ++i) lp += normal_lpdf(at(x, members, i), mean, sd);
            return lp;
        };
        return term(value) - term(old);
    }

    bool sum_to_zero() const { return layout_.config().anchor_mode == AnchorMode::sum_to_zero; }

    static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

    const ResponseMatrix* rm_;
    ParameterLayout layout_;
    std::vector<std::vector<std::uint32_t>> by_participant_;
    std::vector<std::vector<std::uint32_t>> by_point_;
    std::vector<std::vector<std::uint32_t>> by_camera_;
    std::vector<std::vector<std::uint32_t>> by_occasion_;
};

}  // namespace crowdirt

#endif  // CROWDIRT_IRT_MODEL_HPP
