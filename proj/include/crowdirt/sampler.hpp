#ifndef CROWDIRT_SAMPLER_HPP
#define CROWDIRT_SAMPLER_HPP

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "crowdirt/diagnostics.hpp"
#include "crowdirt/error.hpp"
#include "crowdirt/irt_model.hpp"
#include "crowdirt/rng.hpp"

namespace crowdirt {

struct SamplerConfig {
    std::size_t n_chains = 4;
    std::size_t warmup_iters = 2000;
    std::size_t sampling_iters = 2000;
    std::size_t thin = 1;
    std::uint64_t seed = 1;
    double target_accept = 0.44;
    double block_target_accept = 0.3;  ///< for the target's correlated blocks
    std::size_t adapt_window = 50;
    double init_jitter_sd = 0.1;
    double adapt_gain = 1.0;     ///< c in the step c / ceil(iter / adapt_window)
    double initial_scale = 0.5;  ///< starting proposal sd on every coordinate
    std::size_t joint_repeats = 5;  ///< passes over the joint moves per iteration
    bool parallel = true;        ///< run chains on separate threads
    bool trace_scales = false;   ///< record proposal scales at every kept iteration

    void validate() const {
        if (n_chains < 1 || warmup_iters < 1 || sampling_iters < 1 || thin < 1 || adapt_window < 1 ||
            joint_repeats < 1) {
            throw Error(Errc::bad_config, "sampler counts must all be at least 1");
        }
        if (!(target_accept > 0.0 && target_accept < 1.0) || !(block_target_accept > 0.0 && block_target_accept < 1.0)) {
            throw Error(Errc::bad_config, "target acceptance must lie in (0, 1)");
        }
        if (!(init_jitter_sd >= 0.0) || !(initial_scale > 0.0) || !(adapt_gain >= 0.0)) {
            throw Error(Errc::bad_config, "sampler scales must be positive");
        }
    }
};

/// Row-major iterations x parameters.
struct DrawMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    std::vector<double> column(std::size_t c) const {
        std::vector<double> out(rows);
        for (std::size_t r = 0; r < rows; ++r) out[r] = values[r * cols + c];
        return out;
    }
    bool operator==(const DrawMatrix&) const = default;
};

struct ChainDraws {
    DrawMatrix draws;  ///< post-warmup, thinned, unconstrained
    std::vector<double> accept_rate;            ///< per coordinate, post-warmup
    std::vector<double> direction_accept_rate;  ///< per joint move (directions, then scale moves), post-warmup
    std::vector<double> proposal_scale;         ///< frozen after warmup
    std::vector<double> direction_scale;
    double involution_accept_rate = 0.0;  ///< pooled over all involutions, post-warmup
    double block_accept_rate = 0.0;       ///< pooled over all blocks, post-warmup
    std::vector<double> relative_accept_rate;  ///< per scale group, post-warmup
    std::vector<std::vector<double>> scale_trace;  ///< only with SamplerConfig::trace_scales
    std::uint64_t seed = 0;

    bool operator==(const ChainDraws&) const = default;
};

// ---------------------------------------------------------------------------
// Target concepts
// ---------------------------------------------------------------------------

template <class T>
concept LogDensityTarget = requires(const T& t, std::span<const double> x) {
    { t.dims() } -> std::convertible_to<std::size_t>;
    { t.log_density(x) } -> std::convertible_to<double>;
};

/// Targets that can price a single-coordinate move without a full evaluation.
template <class T>
concept ComponentwiseTarget = LogDensityTarget<T> && requires(const T& t, std::span<const double> x, std::size_t j,
                                                              double v) {
    { t.conditional_delta(x, j, v) } -> std::convertible_to<double>;
};

template <class T>
concept HasInitialPoint = requires(const T& t) {
    { t.initial_point() } -> std::convertible_to<std::vector<double>>;
};

template <class T>
concept HasDirections = requires(const T& t) {
    { t.directions() } -> std::convertible_to<std::vector<std::vector<double>>>;
};

template <class T>
concept HasScaleMoves = requires(const T& t) {
    { t.scale_moves() } -> std::convertible_to<std::vector<ScaleMove>>;
};

/// Targets with deterministic self-inverse moves of unit jacobian.
template <class T>
concept HasInvolutions = requires(const T& t, std::span<const double> x, std::size_t m,
                                  std::vector<std::pair<std::size_t, double>>& changes) {
    { t.n_involutions() } -> std::convertible_to<std::size_t>;
    { t.involution_delta(x, m, changes) } -> std::convertible_to<double>;
};

/// Targets with small groups of correlated coordinates that can be priced
/// together without a full evaluation.
template <class T>
concept HasBlocks = requires(const T& t, std::span<const double> x, std::size_t b, std::span<const double> v) {
    { t.blocks() } -> std::convertible_to<std::vector<std::vector<std::size_t>>>;
    { t.block_delta(x, b, v) } -> std::convertible_to<double>;
};

/// Wraps a plain callable log density.
template <class F>
class CallableTarget {
public:
    CallableTarget(F f, std::size_t dims) : f_(std::move(f)), dims_(dims) {}
    std::size_t dims() const { return dims_; }
    double log_density(std::span<const double> x) const { return f_(x); }

private:
    F f_;
    std::size_t dims_;
};

// ---------------------------------------------------------------------------
// Single chain
// ---------------------------------------------------------------------------

namespace detail {

/// Writes the image of x under `m` with step s into y; returns the log jacobian.
inline double apply_scale_move(const ScaleMove& m, std::span<const double> x, std::vector<double>& y, double s) {
    y.assign(x.begin(), x.end());
    const double c = m.center ? x[*m.center] : m.center_value;
    const double f = std::exp(s);
    for (auto j : m.members) y[j] = c + (x[j] - c) * f;
    double log_jacobian = static_cast<double>(m.members.size()) * s;
    if (m.upper > 0.0) {
        const double r = logistic(x[m.log_scale]), r_new = r * f;
        if (!(r_new < 1.0)) return -std::numeric_limits<double>::infinity();
        y[m.log_scale] = logit(r_new);
        log_jacobian += std::log1p(-r) - std::log1p(-r_new);
    } else {
        y[m.log_scale] += s;
    }
    return log_jacobian;
}

/// Adaptive Gaussian random walk on one block of coordinates. The proposal
/// covariance is the empirical covariance of the block's warmup draws; the
/// estimate restarts halfway through warmup to forget the transient.
class BlockProposal {
public:
    BlockProposal(std::vector<std::size_t> coords, double initial_scale)
        : coords_(std::move(coords)), n_(coords_.size()), mean_(n_, 0.0), m2_(n_ * n_, 0.0), chol_(n_ * n_, 0.0) {
        log_mult_ = std::log(2.38 / std::sqrt(static_cast<double>(n_)));
        for (std::size_t i = 0; i < n_; ++i) chol_[i * n_ + i] = initial_scale;
    }

    const std::vector<std::size_t>& coords() const { return coords_; }

    /// Writes a proposal for the block into `out`.
    void propose(Rng& rng, std::span<const double> x, std::vector<double>& z, std::vector<double>& out) const {
        z.resize(n_);
        out.resize(n_);
        for (auto& v : z) v = rng.normal();
        const double f = std::exp(log_mult_);
        for (std::size_t i = 0; i < n_; ++i) {
            double step = 0.0;
            for (std::size_t k = 0; k <= i; ++k) step += chol_[i * n_ + k] * z[k];
            out[i] = x[coords_[i]] + f * step;
        }
    }

    void adapt_scale(double gain, bool accepted, double target) { log_mult_ += gain * ((accepted ? 1.0 : 0.0) - target); }

    void observe(std::span<const double> x) {
        ++count_;
        std::vector<double> dx(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            dx[i] = x[coords_[i]] - mean_[i];
            mean_[i] += dx[i] / static_cast<double>(count_);
        }
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t k = 0; k < n_; ++k) m2_[i * n_ + k] += dx[i] * (x[coords_[k]] - mean_[k]);
        }
    }

    void restart_estimate() {
        count_ = 0;
        std::fill(mean_.begin(), mean_.end(), 0.0);
        std::fill(m2_.begin(), m2_.end(), 0.0);
    }

    /// Refreshes the Cholesky factor from the running covariance; keeps the
    /// old factor when there are too few draws or the estimate is singular.
    void refresh(std::size_t min_draws) {
        if (count_ < min_draws) return;
        std::vector<double> c(n_ * n_), l(n_ * n_, 0.0);
        for (std::size_t i = 0; i < n_ * n_; ++i) c[i] = m2_[i] / static_cast<double>(count_ - 1);
        for (std::size_t i = 0; i < n_; ++i) c[i * n_ + i] += 1e-10;
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t k = 0; k <= i; ++k) {
                double v = c[i * n_ + k];
                for (std::size_t m = 0; m < k; ++m) v -= l[i * n_ + m] * l[k * n_ + m];
                if (i == k) {
                    if (!(v > 0.0)) return;
                    l[i * n_ + i] = std::sqrt(v);
                } else {
                    l[i * n_ + k] = v / l[k * n_ + k];
                }
            }
        }
        chol_ = std::move(l);
    }

private:
    std::vector<std::size_t> coords_;
    std::size_t n_;
    std::vector<double> mean_, m2_, chol_;
    std::size_t count_ = 0;
    double log_mult_ = 0.0;
};

/// Current value of the scale that move `m` controls.
inline double group_scale(const ScaleMove& m, std::span<const double> x) {
    const double u = x[m.log_scale];
    return m.upper > 0.0 ? m.upper * logistic(u) : std::exp(u);
}

inline bool metropolis_accept(Rng& rng, double log_ratio) {
    if (std::isnan(log_ratio)) return false;
    if (log_ratio >= 0.0) {
        rng.uniform();  // keep the stream aligned regardless of outcome
        return true;
    }
    return std::log(rng.uniform_open()) < log_ratio;
}

}  // namespace detail

/// Component-wise adaptive random-walk Metropolis.
///
/// Each iteration updates every coordinate in turn with a Gaussian proposal.
/// When the target supplies them it then updates each block with a
/// covariance-shaped proposal, proposes each involution once, and makes
/// joint_repeats passes over the target directions and non-centred scale
/// moves. During warmup every proposal log-scale moves by
/// gain / ceil(iter / adapt_window) * (accepted - target); scales and block
/// covariances are frozen once warmup ends.
template <LogDensityTarget T>
ChainDraws run_chain(const T& target, const SamplerConfig& cfg, std::uint64_t chain_seed) {
    cfg.validate();
    const std::size_t d = target.dims();
    if (d == 0) throw Error(Errc::invalid_argument, "target has no dimensions");
    Rng rng(chain_seed);

    std::vector<double> center(d, 0.0);
    if constexpr (HasInitialPoint<T>) center = target.initial_point();
    std::vector<std::vector<double>> dirs;
    if constexpr (HasDirections<T>) dirs = target.directions();
    std::vector<ScaleMove> scale_moves;
    if constexpr (HasScaleMoves<T>) scale_moves = target.scale_moves();
    const std::size_t n_joint = dirs.size() + scale_moves.size();

    std::vector<double> x(d);
    double lp = kNegInf;
    for (int attempt = 0; attempt < 100; ++attempt) {
        for (std::size_t j = 0; j < d; ++j) x[j] = center[j] + cfg.init_jitter_sd * rng.normal();
        lp = target.log_density(x);
        if (std::isfinite(lp)) break;
    }
    if (!std::isfinite(lp)) throw Error(Errc::bad_init, "log density is not finite at any jittered start");

    std::vector<double> log_scale(d, std::log(cfg.initial_scale));
    std::vector<double> dir_log_scale(n_joint, std::log(cfg.initial_scale));
    std::vector<std::size_t> accepted(d, 0), dir_accepted(n_joint, 0);
    std::vector<double> y;
    std::vector<std::pair<std::size_t, double>> changes;
    std::size_t involutions_accepted = 0;

    std::vector<detail::BlockProposal> blocks;
    if constexpr (HasBlocks<T>) {
        for (auto& coords : target.blocks()) blocks.emplace_back(std::move(coords), cfg.initial_scale);
    }
    std::size_t blocks_accepted = 0;
    std::vector<double> relative_log_scale(scale_moves.size(), std::log(2.4));
    std::vector<std::size_t> relative_accepted(scale_moves.size(), 0);
    std::vector<double> block_z, block_values;

    ChainDraws out;
    out.seed = chain_seed;
    out.draws.cols = d;
    out.draws.rows = cfg.sampling_iters / cfg.thin;
    out.draws.values.reserve(out.draws.rows * d);

    const std::size_t total = cfg.warmup_iters + cfg.sampling_iters;
    for (std::size_t iter = 1; iter <= total; ++iter) {
        const bool warmup = iter <= cfg.warmup_iters;
        const double gain =
            cfg.adapt_gain / std::ceil(static_cast<double>(iter) / static_cast<double>(cfg.adapt_window));

        for (std::size_t j = 0; j < d; ++j) {
            const double proposal = x[j] + std::exp(log_scale[j]) * rng.normal();
            double delta;
            double lp_new = 0.0;
            if constexpr (ComponentwiseTarget<T>) {
                delta = target.conditional_delta(x, j, proposal);
            } else {
                y = x;
                y[j] = proposal;
                lp_new = target.log_density(y);
                delta = lp_new - lp;
            }
            const bool ok = detail::metropolis_accept(rng, delta);
            if (ok) {
                x[j] = proposal;
                if constexpr (!ComponentwiseTarget<T>) lp = lp_new;
            }
            if (warmup) {
                log_scale[j] += gain * ((ok ? 1.0 : 0.0) - cfg.target_accept);
            } else if (ok) {
                ++accepted[j];
            }
        }

        // Member updates with steps proportional to the group's current scale:
        // they keep members moving when a small scale pins them together.
        if constexpr (ComponentwiseTarget<T>) {
            for (std::size_t m = 0; m < scale_moves.size(); ++m) {
                const double f = std::exp(relative_log_scale[m]) * detail::group_scale(scale_moves[m], x);
                for (auto j : scale_moves[m].members) {
                    const double proposal = x[j] + f * rng.normal();
                    const bool ok = detail::metropolis_accept(rng, target.conditional_delta(x, j, proposal));
                    if (ok) x[j] = proposal;
                    if (warmup) {
                        relative_log_scale[m] += gain * ((ok ? 1.0 : 0.0) - cfg.target_accept) /
                                                 static_cast<double>(scale_moves[m].members.size());
                    } else if (ok) {
                        ++relative_accepted[m];
                    }
                }
            }
        }

        if constexpr (HasBlocks<T>) {
            for (std::size_t b = 0; b < blocks.size(); ++b) {
                auto& block = blocks[b];
                block.propose(rng, x, block_z, block_values);
                const bool ok = detail::metropolis_accept(rng, target.block_delta(x, b, block_values));
                if (ok) {
                    for (std::size_t i = 0; i < block_values.size(); ++i) x[block.coords()[i]] = block_values[i];
                }
                if (warmup) {
                    block.adapt_scale(gain, ok, cfg.block_target_accept);
                    if (iter == cfg.warmup_iters / 2) block.restart_estimate();
                    block.observe(x);
                    if (iter % cfg.adapt_window == 0) block.refresh(2 * cfg.adapt_window);
                } else if (ok) {
                    ++blocks_accepted;
                }
            }
        }

        if constexpr (HasInvolutions<T>) {
            for (std::size_t m = 0; m < target.n_involutions(); ++m) {
                const double delta = target.involution_delta(x, m, changes);
                if (detail::metropolis_accept(rng, delta)) {
                    for (const auto& [j, v] : changes) x[j] = v;
                    if (!warmup) ++involutions_accepted;
                }
            }
        }

        if (n_joint > 0) {
            if constexpr (ComponentwiseTarget<T>) lp = target.log_density(x);
            for (std::size_t pass = 0; pass < cfg.joint_repeats; ++pass) {
            for (std::size_t m = 0; m < n_joint; ++m) {
                const double step = std::exp(dir_log_scale[m]) * rng.normal();
                double log_jacobian = 0.0;
                if (m < dirs.size()) {
                    y = x;
                    for (std::size_t j = 0; j < d; ++j) y[j] += step * dirs[m][j];
                } else {
                    log_jacobian = detail::apply_scale_move(scale_moves[m - dirs.size()], x, y, step);
                }
                const double lp_new = target.log_density(y);
                const bool ok = detail::metropolis_accept(rng, lp_new - lp + log_jacobian);
                if (ok) {
                    x.swap(y);
                    lp = lp_new;
                }
                if (warmup) {
                    dir_log_scale[m] += gain * ((ok ? 1.0 : 0.0) - cfg.target_accept);
                } else if (ok) {
                    ++dir_accepted[m];
                }
            }
            }
        }

        if (!warmup) {
            const std::size_t s = iter - cfg.warmup_iters;
            if (s % cfg.thin == 0) {
                out.draws.values.insert(out.draws.values.end(), x.begin(), x.end());
                if (cfg.trace_scales) {
                    std::vector<double> sc(d);
                    for (std::size_t j = 0; j < d; ++j) sc[j] = std::exp(log_scale[j]);
                    out.scale_trace.push_back(std::move(sc));
                }
            }
        }
    }

    const auto n = static_cast<double>(cfg.sampling_iters);
    for (std::size_t j = 0; j < d; ++j) {
        out.accept_rate.push_back(static_cast<double>(accepted[j]) / n);
        out.proposal_scale.push_back(std::exp(log_scale[j]));
    }
    if constexpr (HasInvolutions<T>) {
        if (target.n_involutions() > 0) {
            out.involution_accept_rate = static_cast<double>(involutions_accepted) /
                                         (n * static_cast<double>(target.n_involutions()));
        }
    }
    for (std::size_t m = 0; m < scale_moves.size(); ++m) {
        out.relative_accept_rate.push_back(
            static_cast<double>(relative_accepted[m]) /
            (n * static_cast<double>(std::max<std::size_t>(scale_moves[m].members.size(), 1))));
    }
    if (!blocks.empty()) {
        out.block_accept_rate = static_cast<double>(blocks_accepted) / (n * static_cast<double>(blocks.size()));
    }
    for (std::size_t m = 0; m < n_joint; ++m) {
        out.direction_accept_rate.push_back(static_cast<double>(dir_accepted[m]) /
                                            (n * static_cast<double>(cfg.joint_repeats)));
        out.direction_scale.push_back(std::exp(dir_log_scale[m]));
    }
    return out;
}

template <class F>
    requires std::invocable<const F&, std::span<const double>>
ChainDraws run_chain(F log_density, std::size_t dims, const SamplerConfig& cfg, std::uint64_t chain_seed) {
    return run_chain(CallableTarget<F>(std::move(log_density), dims), cfg, chain_seed);
}

// ---------------------------------------------------------------------------
// Multiple chains
// ---------------------------------------------------------------------------

struct PosteriorDraws {
    std::vector<ChainDraws> chains;
    std::vector<std::string> names;  ///< unconstrained coordinate names
    std::vector<std::string> constrained_names;
    /// Maps one unconstrained draw to the constrained view; empty means identity.
    std::function<std::vector<double>(std::span<const double>)> to_constrained;

    std::size_t n_draws_per_chain() const { return chains.empty() ? 0 : chains.front().draws.rows; }

    /// Constrained draws of one chain.
    DrawMatrix constrained(std::size_t chain) const {
        const auto& src = chains.at(chain).draws;
        if (!to_constrained) return src;
        DrawMatrix out;
        out.rows = src.rows;
        out.cols = constrained_names.size();
        out.values.reserve(out.rows * out.cols);
        for (std::size_t r = 0; r < src.rows; ++r) {
            auto v = to_constrained(src.row(r));
            out.values.insert(out.values.end(), v.begin(), v.end());
        }
        return out;
    }

    /// Constrained draws of every chain.
    std::vector<DrawMatrix> constrained_all() const {
        std::vector<DrawMatrix> out;
        for (std::size_t c = 0; c < chains.size(); ++c) out.push_back(constrained(c));
        return out;
    }

    std::size_t index_of(std::string_view name) const {
        for (std::size_t i = 0; i < constrained_names.size(); ++i) {
            if (constrained_names[i] == name) return i;
        }
        throw Error(Errc::invalid_argument, "unknown parameter '" + std::string(name) + "'");
    }

    /// Per-chain series of one constrained parameter.
    ChainSeries series(std::size_t parameter) const {
        ChainSeries out;
        for (const auto& m : constrained_all()) out.push_back(m.column(parameter));
        return out;
    }
};

inline ChainSeries series_of(const std::vector<DrawMatrix>& chains, std::size_t parameter) {
    ChainSeries out;
    for (const auto& m : chains) out.push_back(m.column(parameter));
    return out;
}

inline double rhat(const PosteriorDraws& draws, std::size_t parameter) { return split_rhat(draws.series(parameter)); }

inline double ess(const PosteriorDraws& draws, std::size_t parameter) {
    return effective_sample_size(draws.series(parameter));
}

inline std::uint64_t chain_seed(std::uint64_t run_seed, std::size_t chain) { return derive_seed(run_seed, chain); }

/// Runs cfg.n_chains chains with seeds derived from cfg.seed; output order
/// is the chain index regardless of which thread finishes first.
template <LogDensityTarget T>
std::vector<ChainDraws> run_chain_set(const T& target, const SamplerConfig& cfg) {
    cfg.validate();
    std::vector<ChainDraws> chains(cfg.n_chains);
    std::vector<std::exception_ptr> errors(cfg.n_chains);
    auto work = [&](std::size_t c) {
        try {
            chains[c] = run_chain(target, cfg, chain_seed(cfg.seed, c));
        } catch (...) {
            errors[c] = std::current_exception();
        }
    };
    if (cfg.parallel && cfg.n_chains > 1) {
        std::vector<std::thread> threads;
        for (std::size_t c = 0; c < cfg.n_chains; ++c) threads.emplace_back(work, c);
        for (auto& t : threads) t.join();
    } else {
        for (std::size_t c = 0; c < cfg.n_chains; ++c) work(c);
    }
    for (std::size_t c = 0; c < cfg.n_chains; ++c) {
        if (!errors[c]) continue;
        try {
            std::rethrow_exception(errors[c]);
        } catch (const std::exception& e) {
            throw Error(Errc::chain_failed, "chain " + std::to_string(c) + ": " + e.what());
        }
    }
    return chains;
}

/// Fits the item response model to `rm`.
inline PosteriorDraws run_chains(const ResponseMatrix& rm, const ModelConfig& model, const SamplerConfig& cfg) {
    const IrtTarget target(rm, model);
    PosteriorDraws out;
    out.chains = run_chain_set(target, cfg);
    out.names = target.layout().names();
    out.constrained_names = constrained_names(target.layout().dims(), model);
    const ParameterLayout layout = target.layout();
    out.to_constrained = [layout](std::span<const double> x) {
        return flatten(from_unconstrained(x, layout).params, layout.config());
    };
    return out;
}

/// Draws for a generic target, with identity constrained view.
template <LogDensityTarget T>
PosteriorDraws run_chains(const T& target, const SamplerConfig& cfg) {
    PosteriorDraws out;
    out.chains = run_chain_set(target, cfg);
    for (std::size_t j = 0; j < target.dims(); ++j) out.names.push_back("x[" + std::to_string(j) + "]");
    out.constrained_names = out.names;
    return out;
}

}  // namespace crowdirt

#endif  // CROWDIRT_SAMPLER_HPP
