#ifndef CROWDIRT_DIAGNOSTICS_HPP
#define CROWDIRT_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "crowdirt/error.hpp"

namespace crowdirt {

using ChainSeries = std::vector<std::vector<double>>;

namespace detail {

inline double mean_of(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s / static_cast<double>(n);
}

inline double sample_variance(const double* x, std::size_t n, double mean) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (x[i] - mean) * (x[i] - mean);
    return s / static_cast<double>(n - 1);
}

inline std::size_t common_length(const ChainSeries& chains) {
    std::size_t n = std::numeric_limits<std::size_t>::max();
    for (const auto& c : chains) n = std::min(n, c.size());
    return chains.empty() ? 0 : n;
}

}  // namespace detail

/// Split-chain potential scale reduction factor.
///
/// Each chain is cut into a first and last half of floor(n/2) draws, and the
/// 2m halves are compared. Returns +inf when every half is constant but the
/// halves disagree.
inline double split_rhat(const ChainSeries& chains) {
    const std::size_t n = detail::common_length(chains);
    if (n < 4) throw Error(Errc::insufficient_draws, "split R-hat needs at least 4 draws per chain");
    const std::size_t half = n / 2;
    std::vector<const double*> parts;
    for (const auto& c : chains) {
        parts.push_back(c.data());
        parts.push_back(c.data() + (n - half));
    }
    const auto m = static_cast<double>(parts.size());
    const auto len = static_cast<double>(half);
    std::vector<double> means;
    double w = 0.0;
    for (const double* p : parts) {
        const double mu = detail::mean_of(p, half);
        means.push_back(mu);
        w += detail::sample_variance(p, half, mu);
    }
    w /= m;
    const double grand = detail::mean_of(means.data(), means.size());
    double b = 0.0;
    for (double mu : means) b += (mu - grand) * (mu - grand);
    b *= len / (m - 1.0);
    if (w == 0.0 && b == 0.0) throw Error(Errc::degenerate_draws, "all draws are identical");
    if (w == 0.0) return std::numeric_limits<double>::infinity();
    const double var_plus = (len - 1.0) / len * w + b / len;
    return std::sqrt(var_plus / w);
}

/// Effective sample size from the multi-chain autocorrelation estimate,
/// truncated by Geyer's initial positive (monotone) sequence. Capped at the
/// total draw count.
inline double effective_sample_size(const ChainSeries& chains) {
    const std::size_t n = detail::common_length(chains);
    const std::size_t m = chains.size();
    if (m == 0 || n * m < 8) throw Error(Errc::insufficient_draws, "ESS needs at least 8 draws");
    if (n < 2) throw Error(Errc::insufficient_draws, "ESS needs at least 2 draws per chain");
    const double total = static_cast<double>(n * m);

    std::vector<double> means(m), vars(m);
    for (std::size_t c = 0; c < m; ++c) {
        means[c] = detail::mean_of(chains[c].data(), n);
        vars[c] = detail::sample_variance(chains[c].data(), n, means[c]);
    }
    const double w = detail::mean_of(vars.data(), m);
    const auto nd = static_cast<double>(n);
    double var_plus = (nd - 1.0) / nd * w;
    if (m > 1) {
        const double grand = detail::mean_of(means.data(), m);
        double b = 0.0;
        for (double mu : means) b += (mu - grand) * (mu - grand);
        var_plus += b / static_cast<double>(m - 1);
    }
    if (!(var_plus > 0.0)) throw Error(Errc::degenerate_draws, "all draws are identical");

    // Mean over chains of the biased lag-t autocovariance.
    auto acov = [&](std::size_t lag) {
        double s = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            const double* x = chains[c].data();
            double a = 0.0;
            for (std::size_t i = 0; i + lag < n; ++i) a += (x[i] - means[c]) * (x[i + lag] - means[c]);
            s += a / nd;
        }
        return s / static_cast<double>(m);
    };
    auto rho = [&](std::size_t lag) { return lag == 0 ? 1.0 : 1.0 - (w - acov(lag)) / var_plus; };

    double sum = 0.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
        double pair = rho(2 * k) + rho(2 * k + 1);
        if (k > 0 && pair <= 0.0) break;
        pair = std::min(pair, prev_pair);
        sum += pair;
        prev_pair = pair;
    }
    const double tau = -1.0 + 2.0 * sum;
    if (!(tau > 1.0 / total)) return total;
    return std::min(total, total / tau);
}

}  // namespace crowdirt

#endif  // CROWDIRT_DIAGNOSTICS_HPP
