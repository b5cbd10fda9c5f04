#ifndef CROWDIRT_VOTE_HPP
#define CROWDIRT_VOTE_HPP

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "crowdirt/core_data.hpp"
#include "crowdirt/error.hpp"

namespace crowdirt {

enum class Strategy : std::uint8_t { majority, group_majority, weighted };

constexpr std::string_view to_string(Strategy s) noexcept {
    switch (s) {
        case Strategy::majority: return "majority";
        case Strategy::group_majority: return "group_majority";
        case Strategy::weighted: return "weighted";
    }
    return "";
}

struct VoteTally {
    PointKey point;
    std::size_t n_present = 0;
    std::size_t n_absent = 0;
    double weight_present = 0.0;  ///< 0 for unweighted strategies
    double weight_absent = 0.0;
};

struct VoteOutcome {
    Label label = Label::absent;
    VoteTally tally;
    bool tie_broken = false;
    bool fallback = false;  ///< group filter emptied the ballot, or no vote carried weight
};

struct ConsensusLabel {
    PointKey point;
    Label decided = Label::absent;
    Strategy strategy = Strategy::majority;
    VoteTally tally;
    bool tie_broken = false;
    bool fallback = false;
};

struct WeightedVote {
    Label vote;
    double weight;
};

struct GroupVote {
    Label vote;
    std::optional<AbilityGroup> group;  ///< empty when the voter has no ability estimate
};

/// Present wins only on a strict majority; an exact half goes to absent.
inline VoteOutcome majority_vote(std::span<const Label> votes) {
    if (votes.empty()) throw Error(Errc::no_votes, "majority vote over an empty ballot");
    VoteOutcome out;
    for (Label v : votes) (v == Label::present ? out.tally.n_present : out.tally.n_absent)++;
    out.label = out.tally.n_present > out.tally.n_absent ? Label::present : Label::absent;
    out.tie_broken = out.tally.n_present == out.tally.n_absent;
    return out;
}

inline VoteOutcome weighted_majority_vote(std::span<const WeightedVote> votes) {
    if (votes.empty()) throw Error(Errc::no_votes, "weighted vote over an empty ballot");
    VoteOutcome out;
    for (const auto& v : votes) {
        if (!(v.weight >= 0.0) || !std::isfinite(v.weight)) {
            throw Error(Errc::invalid_argument, "vote weights must be finite and nonnegative");
        }
        if (v.vote == Label::present) {
            ++out.tally.n_present;
            out.tally.weight_present += v.weight;
        } else {
            ++out.tally.n_absent;
            out.tally.weight_absent += v.weight;
        }
    }
    if (out.tally.weight_present + out.tally.weight_absent <= 0.0) {
        throw Error(Errc::zero_weight_mass, "every vote has zero weight");
    }
    out.label = out.tally.weight_present > out.tally.weight_absent ? Label::present : Label::absent;
    out.tie_broken = out.tally.weight_present == out.tally.weight_absent;
    return out;
}

inline VoteOutcome group_restricted_vote(std::span<const GroupVote> votes, const std::set<AbilityGroup>& allowed) {
    if (votes.empty()) throw Error(Errc::no_votes, "group vote over an empty ballot");
    std::vector<Label> kept;
    for (const auto& v : votes) {
        if (v.group && allowed.contains(*v.group)) kept.push_back(v.vote);
    }
    if (!kept.empty()) return majority_vote(kept);
    std::vector<Label> all;
    all.reserve(votes.size());
    for (const auto& v : votes) all.push_back(v.vote);
    auto out = majority_vote(all);
    out.fallback = true;
    return out;
}

// ---------------------------------------------------------------------------
// Point-level aggregation
// ---------------------------------------------------------------------------

using ParticipantWeights = std::map<std::string, double>;
using ParticipantGroups = std::map<std::string, AbilityGroup>;

struct AggregateOptions {
    Strategy strategy = Strategy::majority;
    const ParticipantWeights* weights = nullptr;  ///< required for Strategy::weighted
    const ParticipantGroups* groups = nullptr;    ///< required for Strategy::group_majority
    std::set<AbilityGroup> allowed_groups;
};

struct AggregateResult {
    std::vector<ConsensusLabel> labels;  ///< one per point, in first-appearance order
    std::size_t omitted_unsure_only = 0;
};

/// Aggregates every point in `records` independently.
///
/// Unsure answers never vote. Voters missing from the weight table carry
/// zero weight; voters missing from the group table never pass the group
/// filter. A weighted point whose voters all carry zero weight falls back to
/// the plain majority and is flagged.
inline AggregateResult aggregate(std::span<const ClassificationRecord> records, const AggregateOptions& options) {
    if (options.strategy == Strategy::weighted && options.weights == nullptr) {
        throw Error(Errc::missing_weights, "weighted strategy requires a weight table");
    }
    if (options.strategy == Strategy::group_majority && options.groups == nullptr) {
        throw Error(Errc::missing_weights, "group strategy requires a group table");
    }

    struct Ballot {
        PointKey key;
        std::vector<const ClassificationRecord*> voters;
        bool any_record = false;
    };
    std::vector<Ballot> ballots;
    std::unordered_map<PointKey, std::size_t, PointKeyHash> index;
    for (const auto& r : records) {
        auto key = r.point();
        auto [it, inserted] = index.emplace(key, ballots.size());
        if (inserted) ballots.push_back({std::move(key), {}, true});
        if (r.answer != Answer::unsure) ballots[it->second].voters.push_back(&r);
    }

    AggregateResult result;
    for (const auto& b : ballots) {
        if (b.voters.empty()) {
            ++result.omitted_unsure_only;
            continue;
        }
        VoteOutcome outcome;
        switch (options.strategy) {
            case Strategy::majority: {
                std::vector<Label> v;
                for (const auto* r : b.voters) v.push_back(*as_label(r->answer));
                outcome = majority_vote(v);
                break;
            }
            case Strategy::group_majority: {
                std::vector<GroupVote> v;
                for (const auto* r : b.voters) {
                    const auto g = options.groups->find(r->participant_id);
                    v.push_back({*as_label(r->answer),
                                 g == options.groups->end() ? std::nullopt : std::optional(g->second)});
                }
                outcome = group_restricted_vote(v, options.allowed_groups);
                break;
            }
            case Strategy::weighted: {
                std::vector<WeightedVote> v;
                double mass = 0.0;
                for (const auto* r : b.voters) {
                    const auto w = options.weights->find(r->participant_id);
                    const double weight = w == options.weights->end() ? 0.0 : w->second;
                    mass += weight;
                    v.push_back({*as_label(r->answer), weight});
                }
                if (mass > 0.0) {
                    outcome = weighted_majority_vote(v);
                } else {
                    std::vector<Label> plain;
                    for (const auto& x : v) plain.push_back(x.vote);
                    outcome = majority_vote(plain);
                    outcome.fallback = true;
                }
                break;
            }
        }
        outcome.tally.point = b.key;
        result.labels.push_back({b.key, outcome.label, options.strategy, outcome.tally, outcome.tie_broken,
                                 outcome.fallback});
    }
    return result;
}

}  // namespace crowdirt

#endif  // CROWDIRT_VOTE_HPP
