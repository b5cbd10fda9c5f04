#ifndef CROWDIRT_POSTERIOR_HPP
#define CROWDIRT_POSTERIOR_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "crowdirt/core_data.hpp"
#include "crowdirt/diagnostics.hpp"
#include "crowdirt/error.hpp"
#include "crowdirt/sampler.hpp"
#include "crowdirt/vote.hpp"

namespace crowdirt {

inline constexpr double kHdiMass = 0.95;

struct Interval {
    double low = 0.0;
    double high = 0.0;
};

/// Shortest interval holding ceil(mass * n) sorted sample points; the
/// leftmost wins among equal widths.
inline Interval hdi(std::span<const double> sample, double mass = kHdiMass) {
    if (!(mass > 0.0 && mass < 1.0)) throw Error(Errc::invalid_argument, "HDI mass must lie in (0, 1)");
    const std::size_t n = sample.size();
    // The small slack absorbs representation error in products like 0.95 * 100.
    const auto min_n = static_cast<std::size_t>(std::ceil(1.0 / (1.0 - mass) - 1e-9));
    if (n < min_n || n == 0) {
        throw Error(Errc::insufficient_draws, "HDI at mass " + text::format_double(mass) + " needs at least " +
                                                  std::to_string(min_n) + " values");
    }
    std::vector<double> sorted(sample.begin(), sample.end());
    std::sort(sorted.begin(), sorted.end());
    const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(mass * static_cast<double>(n) - 1e-9)));
    std::size_t best = 0;
    double best_width = sorted[count - 1] - sorted[0];
    for (std::size_t i = 1; i + count <= n; ++i) {
        const double w = sorted[i + count - 1] - sorted[i];
        if (w < best_width) {
            best_width = w;
            best = i;
        }
    }
    return {sorted[best], sorted[best + count - 1]};
}

struct ParamSummary {
    std::string name;
    double mean = 0.0;
    double sd = 0.0;
    double hdi_low = 0.0;
    double hdi_high = 0.0;
    double rhat = 1.0;  ///< NaN when chains are too short to split
    double ess = 0.0;
};

/// Summary of one parameter from its per-chain series.
///
/// Constant draws get rhat = 1 and ess = total count. When the pooled
/// sample is too small for a 95% HDI the interval falls back to [min, max].
inline ParamSummary summarize_series(std::string name, const ChainSeries& chains) {
    ParamSummary s;
    s.name = std::move(name);
    std::vector<double> pooled;
    for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
    if (pooled.empty()) throw Error(Errc::insufficient_draws, "no draws for " + s.name);
    double sum = 0.0;
    for (double v : pooled) sum += v;
    s.mean = sum / static_cast<double>(pooled.size());
    double ss = 0.0;
    for (double v : pooled) ss += (v - s.mean) * (v - s.mean);
    s.sd = pooled.size() > 1 ? std::sqrt(ss / static_cast<double>(pooled.size() - 1)) : 0.0;
    try {
        const auto iv = hdi(pooled);
        s.hdi_low = iv.low;
        s.hdi_high = iv.high;
    } catch (const Error&) {
        const auto [lo, hi] = std::minmax_element(pooled.begin(), pooled.end());
        s.hdi_low = *lo;
        s.hdi_high = *hi;
    }
    const bool constant = std::all_of(pooled.begin(), pooled.end(), [&](double v) { return v == pooled.front(); });
    if (constant) {
        s.rhat = 1.0;
        s.ess = static_cast<double>(pooled.size());
        return s;
    }
    try {
        s.rhat = split_rhat(chains);
    } catch (const Error&) {
        s.rhat = std::numeric_limits<double>::quiet_NaN();
    }
    try {
        s.ess = effective_sample_size(chains);
    } catch (const Error&) {
        s.ess = std::numeric_limits<double>::quiet_NaN();
    }
    return s;
}

/// Mean, sd, HDI and diagnostics of every constrained parameter.
inline std::vector<ParamSummary> summarize(const PosteriorDraws& draws) {
    if (draws.chains.empty() || draws.n_draws_per_chain() == 0) return {};
    const auto chains = draws.constrained_all();
    std::vector<ParamSummary> out;
    out.reserve(draws.constrained_names.size());
    for (std::size_t p = 0; p < draws.constrained_names.size(); ++p) {
        out.push_back(summarize_series(draws.constrained_names[p], series_of(chains, p)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ability groups and weights
// ---------------------------------------------------------------------------

struct AbilityGroups {
    std::map<std::string, AbilityGroup> group;
    std::array<double, 3> cuts{};  ///< 25%, 50%, 75% empirical quantiles
    bool degenerate = false;       ///< two or more cut points coincide
};

/// Inverse empirical CDF, no interpolation: the ceil(n p)-th order statistic.
inline double empirical_quantile(std::span<const double> sorted, double p) {
    const auto n = sorted.size();
    auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) - 1e-12));
    k = std::clamp<std::size_t>(k, 1, n);
    return sorted[k - 1];
}

inline AbilityGroups cluster_participants(std::span<const std::string> participants, std::span<const double> theta_means) {
    if (participants.size() != theta_means.size()) {
        throw Error(Errc::dimension_mismatch, "participant ids and ability means differ in length");
    }
    if (participants.size() < 4) throw Error(Errc::invalid_argument, "clustering needs at least 4 participants");
    std::vector<double> sorted(theta_means.begin(), theta_means.end());
    std::sort(sorted.begin(), sorted.end());
    AbilityGroups out;
    out.cuts = {empirical_quantile(sorted, 0.25), empirical_quantile(sorted, 0.5), empirical_quantile(sorted, 0.75)};
    out.degenerate = out.cuts[0] == out.cuts[1] || out.cuts[1] == out.cuts[2];
    for (std::size_t i = 0; i < participants.size(); ++i) {
        const double t = theta_means[i];
        AbilityGroup g = AbilityGroup::expert;
        if (t <= out.cuts[0]) {
            g = AbilityGroup::beginner;
        } else if (t <= out.cuts[1]) {
            g = AbilityGroup::competent;
        } else if (t <= out.cuts[2]) {
            g = AbilityGroup::experienced;
        }
        out.group[participants[i]] = g;
    }
    return out;
}

/// Softmax of ability means, max-subtracted.
inline std::vector<double> ability_weights(std::span<const double> theta_means) {
    if (theta_means.empty()) throw Error(Errc::invalid_argument, "no abilities to weight");
    double top = -std::numeric_limits<double>::infinity();
    for (double t : theta_means) {
        if (!std::isfinite(t)) throw Error(Errc::non_finite, "ability mean is not finite");
        top = std::max(top, t);
    }
    std::vector<double> w(theta_means.size());
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(theta_means[i] - top);
        total += w[i];
    }
    for (double& v : w) v /= total;
    return w;
}

/// Participant id -> softmax weight.
inline ParticipantWeights weight_table(std::span<const std::string> participants, std::span<const double> theta_means) {
    if (participants.size() != theta_means.size()) {
        throw Error(Errc::dimension_mismatch, "participant ids and ability means differ in length");
    }
    const auto w = ability_weights(theta_means);
    ParticipantWeights out;
    for (std::size_t i = 0; i < w.size(); ++i) out[participants[i]] = w[i];
    return out;
}

/// Weights for every posterior draw (rows) of the abilities (columns).
inline std::vector<std::vector<double>> ability_weight_draws(const std::vector<std::vector<double>>& theta_draws) {
    std::vector<std::vector<double>> out;
    out.reserve(theta_draws.size());
    for (const auto& row : theta_draws) out.push_back(ability_weights(row));
    return out;
}

// ---------------------------------------------------------------------------
// Learning curve
// ---------------------------------------------------------------------------

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double p_value = 1.0;  ///< two-sided t-test of slope = 0; NaN with fewer than 3 points
};

/// Ordinary least squares of y on x.
inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n != y.size() || n < 2) throw Error(Errc::invalid_argument, "least squares needs at least 2 paired values");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw Error(Errc::invalid_argument, "regressor is constant");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (n < 3) {
        fit.p_value = std::numeric_limits<double>::quiet_NaN();
        return fit;
    }
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - fit.intercept - fit.slope * x[i];
        rss += r * r;
    }
    const double df = static_cast<double>(n - 2);
    const double se = std::sqrt(rss / df / sxx);
    // Residuals at rounding level count as an exact fit.
    const double scale = std::max(std::abs(fit.slope), 1e-300);
    if (se <= 1e-14 * scale || se == 0.0) {
        fit.p_value = fit.slope == 0.0 ? 1.0 : 0.0;
        return fit;
    }
    const double t = fit.slope / se;
    boost::math::students_t dist(df);
    fit.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    return fit;
}

struct OccasionSummary {
    int occasion = 0;  ///< 1-based
    double mean = 0.0;
    Interval hdi;
};

struct LearningCurve {
    std::vector<OccasionSummary> occasions;
    LinearFit trend;  ///< posterior means regressed on occasion number
};

/// `phi_draws[t]` holds the pooled draws of the learning effect at occasion t + 1.
inline LearningCurve learning_curve(const std::vector<std::vector<double>>& phi_draws) {
    if (phi_draws.size() < 2) throw Error(Errc::invalid_argument, "learning curve needs at least 2 occasions");
    LearningCurve lc;
    std::vector<double> xs, ys;
    for (std::size_t t = 0; t < phi_draws.size(); ++t) {
        const auto& d = phi_draws[t];
        if (d.empty()) throw Error(Errc::insufficient_draws, "no draws for occasion " + std::to_string(t + 1));
        OccasionSummary s;
        s.occasion = static_cast<int>(t + 1);
        double sum = 0.0;
        for (double v : d) sum += v;
        s.mean = sum / static_cast<double>(d.size());
        try {
            s.hdi = hdi(d);
        } catch (const Error&) {
            const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
            s.hdi = {*lo, *hi};
        }
        xs.push_back(static_cast<double>(t + 1));
        ys.push_back(s.mean);
        lc.occasions.push_back(s);
    }
    lc.trend = least_squares(xs, ys);
    return lc;
}

/// Learning curve from fitted draws; requires a learning-enabled fit.
inline LearningCurve learning_curve(const PosteriorDraws& draws, std::size_t occasions) {
    const auto chains = draws.constrained_all();
    std::vector<std::vector<double>> phi;
    for (std::size_t t = 0; t < occasions; ++t) {
        const auto idx = draws.index_of("phi[" + std::to_string(t) + "]");
        std::vector<double> pooled;
        for (const auto& m : chains) {
            auto col = m.column(idx);
            pooled.insert(pooled.end(), col.begin(), col.end());
        }
        phi.push_back(std::move(pooled));
    }
    return learning_curve(phi);
}

}  // namespace crowdirt

#endif  // CROWDIRT_POSTERIOR_HPP
