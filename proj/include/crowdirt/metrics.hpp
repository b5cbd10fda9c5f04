#ifndef CROWDIRT_METRICS_HPP
#define CROWDIRT_METRICS_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "crowdirt/core_data.hpp"
#include "crowdirt/error.hpp"

namespace crowdirt {

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
    bool operator==(const ConfusionCounts&) const = default;
};

struct PerformanceMeasures {
    std::uint64_t n = 0;
    double se = 0.0;
    double sp = 0.0;
    double acc = 0.0;
    double pre = 0.0;
    double mcc = 0.0;
    double lr_pos = 0.0;  ///< +inf when sp = 1
    double lr_neg = 0.0;  ///< +inf when sp = 0
};

inline ConfusionCounts confusion(std::span<const Label> predicted, std::span<const Label> truth) {
    if (predicted.size() != truth.size()) {
        throw Error(Errc::dimension_mismatch, "prediction and truth sequences differ in length");
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const bool p = predicted[i] == Label::present;
        const bool t = truth[i] == Label::present;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

/// The seven performance measures. A ratio with an empty denominator is 1
/// (its error count is then necessarily 0); MCC with any empty margin is 0.
inline PerformanceMeasures measures(const ConfusionCounts& c) {
    if (c.total() == 0) throw Error(Errc::invalid_argument, "measures need at least one classification");
    auto ratio = [](std::uint64_t num, std::uint64_t den) {
        return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    const auto tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
    const auto tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
    PerformanceMeasures m;
    m.n = c.total();
    m.se = ratio(c.tp, c.tp + c.fn);
    m.sp = ratio(c.tn, c.tn + c.fp);
    m.acc = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    m.pre = ratio(c.tp, c.tp + c.fp);
    const double margins = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    m.mcc = margins == 0.0 ? 0.0 : (tp * tn - fp * fn) / std::sqrt(margins);
    m.mcc = std::clamp(m.mcc, -1.0, 1.0);
    constexpr double inf = std::numeric_limits<double>::infinity();
    m.lr_pos = m.sp == 1.0 ? inf : m.se / (1.0 - m.sp);
    m.lr_neg = m.sp == 0.0 ? inf : (1.0 - m.se) / m.sp;
    return m;
}

// ---------------------------------------------------------------------------
// Wilcoxon rank-sum
// ---------------------------------------------------------------------------

enum class Alternative : std::uint8_t { greater, less, two_sided };

struct RankSumResult {
    double statistic = 0.0;  ///< W = rank sum of x minus n_x (n_x + 1) / 2
    double p_value = 1.0;
    bool exact = false;
};

namespace detail {

/// Midranks of the pooled sample; x occupies the first nx slots.
inline std::vector<double> midranks(std::span<const double> x, std::span<const double> y) {
    std::vector<std::pair<double, std::size_t>> pooled;
    for (std::size_t i = 0; i < x.size(); ++i) pooled.emplace_back(x[i], i);
    for (std::size_t i = 0; i < y.size(); ++i) pooled.emplace_back(y[i], x.size() + i);
    std::sort(pooled.begin(), pooled.end());
    std::vector<double> ranks(pooled.size());
    for (std::size_t i = 0; i < pooled.size();) {
        std::size_t j = i;
        while (j + 1 < pooled.size() && pooled[j + 1].first == pooled[i].first) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[pooled[k].second] = r;
        i = j + 1;
    }
    return ranks;
}

inline void check_samples(std::span<const double> x, std::span<const double> y) {
    if (x.empty() || y.empty()) throw Error(Errc::invalid_argument, "rank-sum test needs two nonempty samples");
    for (double v : x) {
        if (!std::isfinite(v)) throw Error(Errc::non_finite, "sample value is not finite");
    }
    for (double v : y) {
        if (!std::isfinite(v)) throw Error(Errc::non_finite, "sample value is not finite");
    }
}

}  // namespace detail

inline constexpr std::size_t kExactRankSumLimit = 10;

/// Permutation p-value: every assignment of the pooled midranks to the x
/// slots is enumerated. Two-sided counts assignments at least as far from
/// the null mean as the observed sum.
inline RankSumResult wilcoxon_exact(std::span<const double> x, std::span<const double> y, Alternative alt) {
    detail::check_samples(x, y);
    const std::size_t nx = x.size(), n = x.size() + y.size();
    if (n > 20) throw Error(Errc::too_large_to_enumerate, "exact rank-sum enumeration is limited to 20 values");
    const auto ranks = detail::midranks(x, y);
    double observed = 0.0;
    for (std::size_t i = 0; i < nx; ++i) observed += ranks[i];
    const double expected = static_cast<double>(nx) * static_cast<double>(n + 1) / 2.0;
    constexpr double eps = 1e-9;

    std::uint64_t count = 0, hits = 0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::size_t>(std::popcount(mask)) != nx) continue;
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (1u << i)) s += ranks[i];
        }
        ++count;
        switch (alt) {
            case Alternative::greater: hits += s >= observed - eps; break;
            case Alternative::less: hits += s <= observed + eps; break;
            case Alternative::two_sided: hits += std::abs(s - expected) >= std::abs(observed - expected) - eps; break;
        }
    }
    RankSumResult r;
    r.statistic = observed - static_cast<double>(nx * (nx + 1)) / 2.0;
    r.p_value = static_cast<double>(hits) / static_cast<double>(count);
    r.exact = true;
    return r;
}

/// Normal approximation with tie-corrected variance and continuity correction.
inline RankSumResult wilcoxon_normal(std::span<const double> x, std::span<const double> y, Alternative alt) {
    detail::check_samples(x, y);
    const auto nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
    const double n = nx + ny;
    const auto ranks = detail::midranks(x, y);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) rank_sum += ranks[i];
    const double w = rank_sum - nx * (nx + 1.0) / 2.0;
    const double mean = nx * ny / 2.0;

    std::vector<double> sorted(ranks);
    std::sort(sorted.begin(), sorted.end());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const auto t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    const double var = nx * ny / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    RankSumResult r;
    r.statistic = w;
    if (!(var > 0.0)) {
        r.p_value = 1.0;
        return r;
    }
    const double sd = std::sqrt(var);
    const double diff = w - mean;
    const boost::math::normal_distribution<> std_normal;
    switch (alt) {
        case Alternative::greater:
            r.p_value = boost::math::cdf(boost::math::complement(std_normal, (diff - 0.5) / sd));
            break;
        case Alternative::less: r.p_value = boost::math::cdf(std_normal, (diff + 0.5) / sd); break;
        case Alternative::two_sided: {
            const double correction = diff > 0.0 ? 0.5 : (diff < 0.0 ? -0.5 : 0.0);
            const double z = (diff - correction) / sd;
            r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(std_normal, std::abs(z))));
            break;
        }
    }
    return r;
}

/// Rank-sum test of x against y; `greater` means x tends to be larger.
/// Exact enumeration up to 10 pooled values, normal approximation beyond.
inline RankSumResult wilcoxon_rank_sum(std::span<const double> x, std::span<const double> y, Alternative alt) {
    if (x.size() + y.size() <= kExactRankSumLimit) return wilcoxon_exact(x, y, alt);
    return wilcoxon_normal(x, y, alt);
}

struct NamedSample {
    std::string name;
    std::vector<double> values;
};

struct PairwiseTable {
    std::vector<std::string> names;
    /// p[i][j] for j < i: row group i tested against column group j.
    std::vector<std::vector<double>> p;
};

inline PairwiseTable pairwise_wilcoxon(const std::vector<NamedSample>& groups, Alternative alt) {
    if (groups.size() < 2) throw Error(Errc::invalid_argument, "pairwise comparison needs at least 2 groups");
    PairwiseTable table;
    for (const auto& g : groups) {
        if (g.values.empty()) throw Error(Errc::invalid_argument, "group '" + g.name + "' is empty");
        table.names.push_back(g.name);
    }
    table.p.resize(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            table.p[i].push_back(wilcoxon_rank_sum(groups[i].values, groups[j].values, alt).p_value);
        }
    }
    return table;
}

}  // namespace crowdirt

#endif  // CROWDIRT_METRICS_HPP
