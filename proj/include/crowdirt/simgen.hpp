#ifndef CROWDIRT_SIMGEN_HPP
#define CROWDIRT_SIMGEN_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crowdirt/core_data.hpp"
#include "crowdirt/error.hpp"
#include "crowdirt/irt_model.hpp"
#include "crowdirt/rng.hpp"

namespace crowdirt {

/// One normal component of a mixture population of abilities.
struct AbilityComponent {
    double weight = 1.0;
    double mean = 0.0;
    double sd = 1.0;
};

struct SimConfig {
    std::size_t participants = 40;
    std::size_t images = 20;
    std::size_t points_per_image = 15;
    std::size_t cameras = 3;
    std::size_t occasions = 5;
    std::size_t raters_per_image = 0;  ///< 0 means every participant rates every image

    // Generative distributions.
    double theta_sd = 1.0;
    std::vector<AbilityComponent> theta_mixture;  ///< overrides theta_sd when nonempty
    double beta_point_sd = 1.0;
    double beta_camera_sd = 0.5;
    double alpha_mean = 1.0;
    double alpha_sd = 0.2;
    double eta_beta_b = 5.0;   ///< eta ~ Beta(1, b)
    double phi_max = 0.6;      ///< phi rises linearly from 0 at occasion 1 to phi_max at the last
    double prevalence = 0.4;   ///< P(point truly present)
    double unsure_rate = 0.0;

    // Fixed values that replace a whole distribution.
    std::optional<double> theta_fixed;
    std::optional<double> beta_point_fixed;
    std::optional<double> beta_camera_fixed;
    std::optional<double> alpha_fixed;
    std::optional<double> eta_fixed;

    std::uint64_t seed = 1;

    void validate() const {
        if (participants < 1 || images < 1 || points_per_image < 1 || cameras < 1 || occasions < 1) {
            throw Error(Errc::bad_config, "simulation counts must all be at least 1");
        }
        if (!(theta_sd > 0.0) || !(beta_point_sd > 0.0) || !(beta_camera_sd > 0.0) || !(alpha_sd > 0.0) ||
            !(eta_beta_b > 0.0)) {
            throw Error(Errc::bad_config, "simulation scale parameters must be positive");
        }
        for (const auto& c : theta_mixture) {
            if (!(c.weight > 0.0) || !(c.sd > 0.0)) throw Error(Errc::bad_config, "mixture weights and sds must be positive");
        }
        if (!(prevalence >= 0.0 && prevalence <= 1.0) || !(unsure_rate >= 0.0 && unsure_rate < 1.0)) {
            throw Error(Errc::bad_config, "prevalence and unsure rate must be probabilities");
        }
        if (eta_fixed && !(*eta_fixed >= 0.0 && *eta_fixed < 1.0)) {
            throw Error(Errc::bad_config, "fixed pseudo-guessing must lie in [0, 1)");
        }
    }
};

struct SyntheticTruth {
    ModelParameters params;  ///< eta may be exactly 0 when fixed so
    std::vector<std::string> participants;
    std::vector<PointKey> points;  ///< index k of params.beta_point
    std::vector<std::string> cameras;
    std::vector<std::size_t> point_camera;
    std::vector<Label> point_label;
    std::vector<std::uint8_t> record_correct;  ///< aligned with the records; 2 marks unsure
    std::vector<std::size_t> record_participant;
    std::vector<std::size_t> record_point;
    std::vector<int> record_occasion;
};

struct SimulatedData {
    std::vector<ClassificationRecord> records;
    SyntheticTruth truth;
};

namespace detail {

inline std::string padded(std::string_view prefix, std::size_t i, std::size_t count) {
    const int width = static_cast<int>(std::to_string(count).size());
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%0*zu", width, i + 1);
    return std::string(prefix) + buf;
}

}  // namespace detail

/// Draws parameters, assignments and answers. Records are emitted image by
/// image; each participant's images are spread over consecutive days so the
/// derived occasion of a record equals its generating occasion.
inline SimulatedData generate(const SimConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    SimulatedData out;
    auto& truth = out.truth;
    auto& p = truth.params;
    const std::size_t I = cfg.participants, J = cfg.images, P = cfg.points_per_image;
    const std::size_t K = J * P, L = cfg.cameras, T = cfg.occasions;

    for (std::size_t i = 0; i < I; ++i) truth.participants.push_back(detail::padded("p", i, I));
    for (std::size_t l = 0; l < L; ++l) truth.cameras.push_back(detail::padded("cam", l, L));

    double mixture_total = 0.0;
    for (const auto& c : cfg.theta_mixture) mixture_total += c.weight;
    p.theta.resize(I);
    for (auto& t : p.theta) {
        if (cfg.theta_fixed) {
            t = *cfg.theta_fixed;
        } else if (!cfg.theta_mixture.empty()) {
            double u = rng.uniform() * mixture_total;
            const AbilityComponent* pick = &cfg.theta_mixture.back();
            for (const auto& c : cfg.theta_mixture) {
                if (u < c.weight) {
                    pick = &c;
                    break;
                }
                u -= c.weight;
            }
            t = rng.normal(pick->mean, pick->sd);
        } else {
            t = rng.normal(0.0, cfg.theta_sd);
        }
    }
    p.beta_camera.resize(L);
    for (auto& b : p.beta_camera) b = cfg.beta_camera_fixed ? *cfg.beta_camera_fixed : rng.normal(0.0, cfg.beta_camera_sd);
    p.beta_point.resize(K);
    p.alpha.resize(K);
    p.eta.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        p.beta_point[k] = cfg.beta_point_fixed ? *cfg.beta_point_fixed : rng.normal(0.0, cfg.beta_point_sd);
        p.alpha[k] = cfg.alpha_fixed ? *cfg.alpha_fixed : rng.normal(cfg.alpha_mean, cfg.alpha_sd);
        p.eta[k] = cfg.eta_fixed ? *cfg.eta_fixed : rng.beta_one(cfg.eta_beta_b);
    }
    p.phi.assign(T, 0.0);
    for (std::size_t t = 1; t < T; ++t) p.phi[t] = cfg.phi_max * static_cast<double>(t) / static_cast<double>(T - 1);
    p.sigma_theta = cfg.theta_sd;
    p.sigma_beta_point = cfg.beta_point_sd;
    p.sigma_beta_camera = cfg.beta_camera_sd;
    p.sigma_alpha = cfg.alpha_sd;

    // Images: camera and per-point truth.
    std::vector<std::size_t> image_camera(J);
    for (std::size_t j = 0; j < J; ++j) {
        image_camera[j] = static_cast<std::size_t>(rng.index(L));
        for (std::size_t q = 0; q < P; ++q) {
            truth.points.push_back({detail::padded("img", j, J), detail::padded("pt", q, P)});
            truth.point_camera.push_back(image_camera[j]);
            truth.point_label.push_back(rng.bernoulli(cfg.prevalence) ? Label::present : Label::absent);
        }
    }

    // Raters per image.
    std::vector<std::vector<std::size_t>> raters(J);
    std::vector<std::vector<std::size_t>> images_of(I);
    const std::size_t per_image = (cfg.raters_per_image == 0 || cfg.raters_per_image >= I) ? I : cfg.raters_per_image;
    std::vector<std::size_t> order(I);
    for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t i = 0; i < I; ++i) order[i] = i;
        for (std::size_t i = 0; i < per_image; ++i) {
            const auto s = i + static_cast<std::size_t>(rng.index(I - i));
            std::swap(order[i], order[s]);
        }
        raters[j].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(per_image));
        std::sort(raters[j].begin(), raters[j].end());
        for (auto i : raters[j]) images_of[i].push_back(j);
    }

    // Occasion of (participant, image): the participant's images in a random order, spread over T days.
    // A shared order would tie each image to one occasion and confound phi with beta_point.
    std::vector<std::map<std::size_t, std::pair<int, std::size_t>>> schedule(I);
    for (std::size_t i = 0; i < I; ++i) {
        const std::size_t n = images_of[i].size();
        for (std::size_t m = n; m > 1; --m) std::swap(images_of[i][m - 1], images_of[i][rng.index(m)]);
        for (std::size_t m = 0; m < n; ++m) {
            const int occ = n >= T ? static_cast<int>(m * T / n) + 1 : static_cast<int>(m) + 1;
            schedule[i][images_of[i][m]] = {occ, m};
        }
    }

    using namespace std::chrono;
    const sys_days start = year{2021} / March / 1;
    for (std::size_t j = 0; j < J; ++j) {
        for (auto i : raters[j]) {
            const auto [occ, slot] = schedule[i][j];
            const double duration = std::exp(rng.normal(std::log(20.0) + 0.1 * p.theta[i], 0.4));
            for (std::size_t q = 0; q < P; ++q) {
                const std::size_t k = j * P + q;
                ClassificationRecord r;
                r.participant_id = truth.participants[i];
                r.image_id = truth.points[k].image_id;
                r.point_id = truth.points[k].point_id;
                r.camera_id = truth.cameras[truth.point_camera[k]];
                r.occasion = occ;
                r.timestamp = time_point_cast<milliseconds>(start) + days{occ - 1} + hours{9} +
                              minutes{static_cast<long>(slot)} + seconds{static_cast<long>(q)};
                r.duration_secs = std::round(duration * 1000.0) / 1000.0;
                r.truth = truth.point_label[k];
                std::uint8_t code;
                if (cfg.unsure_rate > 0.0 && rng.bernoulli(cfg.unsure_rate)) {
                    r.answer = Answer::unsure;
                    code = 2;
                } else {
                    const double prob = response_probability(p.theta[i], p.beta_point[k], p.beta_camera[truth.point_camera[k]],
                                                             p.alpha[k], p.eta[k], p.phi[static_cast<std::size_t>(occ - 1)]);
                    const bool correct = rng.bernoulli(prob);
                    const bool present = (truth.point_label[k] == Label::present) == correct;
                    r.answer = present ? Answer::present : Answer::absent;
                    code = correct ? 1 : 0;
                }
                truth.record_correct.push_back(code);
                truth.record_participant.push_back(i);
                truth.record_point.push_back(k);
                truth.record_occasion.push_back(occ);
                out.records.push_back(std::move(r));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

/// One correctness code with every non-ability parameter known.
struct KnownItemObservation {
    bool correct = false;
    double beta_point = 0.0;
    double beta_camera = 0.0;
    double alpha = 1.0;
    double eta = 0.0;
    double phi = 0.0;
};

struct GridSpec {
    double low = -6.0;
    double high = 6.0;
    std::size_t points = 2001;
};

struct GridPosterior {
    std::vector<double> grid;
    std::vector<double> density;  ///< normalized by the trapezoidal rule
    double mean = 0.0;
    double sd = 0.0;
};

/// Ability posterior of a single participant on a grid, prior N(0, sigma_theta).
/// The response curve is written out here directly, separately from the model code.
inline GridPosterior grid_posterior_1d(std::span<const KnownItemObservation> obs, double sigma_theta,
                                       const GridSpec& spec = {}) {
    if (spec.low > -6.0 || spec.high < 6.0 || spec.points < 1000) {
        throw Error(Errc::invalid_argument, "grid must cover [-6, 6] with at least 1000 points");
    }
    if (!(sigma_theta > 0.0)) throw Error(Errc::invalid_argument, "prior sd must be positive");
    GridPosterior g;
    g.grid.resize(spec.points);
    std::vector<double> logd(spec.points);
    const double h = (spec.high - spec.low) / static_cast<double>(spec.points - 1);
    for (std::size_t i = 0; i < spec.points; ++i) {
        const double theta = spec.low + h * static_cast<double>(i);
        g.grid[i] = theta;
        double s = -0.5 * theta * theta / (sigma_theta * sigma_theta);
        for (const auto& o : obs) {
            const double p = o.eta + (1.0 - o.eta) / (1.0 + std::exp(-o.alpha * (o.phi + theta - o.beta_point - o.beta_camera)));
            s += o.correct ? std::log(p) : std::log(1.0 - p);
        }
        logd[i] = s;
    }
    const double top = *std::max_element(logd.begin(), logd.end());
    g.density.resize(spec.points);
    for (std::size_t i = 0; i < spec.points; ++i) g.density[i] = std::isfinite(logd[i]) ? std::exp(logd[i] - top) : 0.0;
    auto trapezoid = [&](auto f) {
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < spec.points; ++i) acc += 0.5 * h * (f(i) + f(i + 1));
        return acc;
    };
    const double mass = trapezoid([&](std::size_t i) { return g.density[i]; });
    if (!(mass > 0.0) || !std::isfinite(mass)) throw Error(Errc::zero_mass, "grid posterior has no mass");
    for (auto& d : g.density) d /= mass;
    g.mean = trapezoid([&](std::size_t i) { return g.grid[i] * g.density[i]; });
    const double second = trapezoid([&](std::size_t i) { return g.grid[i] * g.grid[i] * g.density[i]; });
    g.sd = std::sqrt(std::max(0.0, second - g.mean * g.mean));
    return g;
}

inline constexpr std::size_t kMaxEnumeratedVoters = 20;

/// Exact probability that the vote returns `truth` when voter v is correct
/// independently with probability p_correct[v]. Empty `weights` means one
/// vote each. Present wins only on a strict excess of weight.
inline double enumerate_vote_accuracy(std::span<const double> p_correct, std::span<const double> weights, Label truth) {
    const std::size_t n = p_correct.size();
    if (n > kMaxEnumeratedVoters) throw Error(Errc::too_large_to_enumerate, std::to_string(n) + " voters");
    if (n == 0) throw Error(Errc::no_votes, "no voters");
    if (!weights.empty() && weights.size() != n) throw Error(Errc::dimension_mismatch, "one weight per voter");
    double accuracy = 0.0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        double prob = 1.0;
        double present = 0.0, absent = 0.0;
        for (std::size_t v = 0; v < n; ++v) {
            const bool correct = (mask >> v) & 1u;
            prob *= correct ? p_correct[v] : 1.0 - p_correct[v];
            const bool says_present = correct == (truth == Label::present);
            const double w = weights.empty() ? 1.0 : weights[v];
            (says_present ? present : absent) += w;
        }
        const Label decided = present > absent ? Label::present : Label::absent;
        if (decided == truth) accuracy += prob;
    }
    return accuracy;
}

/// Ability posterior of one participant with everything else held fixed,
/// evaluated through the model code (the sampler's side of the oracle check).
class FixedItemsThetaTarget {
public:
    FixedItemsThetaTarget(std::vector<KnownItemObservation> obs, double sigma_theta)
        : obs_(std::move(obs)), sigma_theta_(sigma_theta) {}

    std::size_t dims() const { return 1; }

    double log_density(std::span<const double> x) const {
        double lp = normal_lpdf(x[0], 0.0, sigma_theta_);
        for (const auto& o : obs_) {
            lp += observation_log_mass(o.correct, o.eta, o.alpha * (o.phi + x[0] - o.beta_point - o.beta_camera));
        }
        return lp;
    }

private:
    std::vector<KnownItemObservation> obs_;
    double sigma_theta_;
};

}  // namespace crowdirt

#endif  // CROWDIRT_SIMGEN_HPP
