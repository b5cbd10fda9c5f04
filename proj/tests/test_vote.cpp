#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "crowdirt/rng.hpp"
#include "crowdirt/vote.hpp"

using namespace crowdirt;

namespace {

constexpr Label P = Label::present;
constexpr Label A = Label::absent;

std::vector<Label> random_votes(Rng& rng, std::size_t n) {
    std::vector<Label> v(n);
    for (auto& x : v) x = rng.bernoulli(0.5) ? P : A;
    return v;
}

ClassificationRecord rec(std::string participant, std::string point, Answer answer) {
    ClassificationRecord r;
    r.participant_id = std::move(participant);
    r.image_id = "img";
    r.point_id = std::move(point);
    r.camera_id = "c";
    r.answer = answer;
    r.occasion = 1;
    return r;
}

}  // namespace

TEST(MajorityVote, Examples) {
    EXPECT_EQ(majority_vote(std::vector{P, P, A}).label, P);
    const auto tie = majority_vote(std::vector{P, A});
    EXPECT_EQ(tie.label, A);
    EXPECT_TRUE(tie.tie_broken);
    EXPECT_EQ(majority_vote(std::vector{A, A, A, P}).label, A);
    EXPECT_FALSE(majority_vote(std::vector{A, A, A, P}).tie_broken);
    EXPECT_THROW(majority_vote(std::vector<Label>{}), Error);
}

TEST(MajorityVote, TallyCountsAndZeroWeights) {
    const auto out = majority_vote(std::vector{P, P, A});
    EXPECT_EQ(out.tally.n_present, 2u);
    EXPECT_EQ(out.tally.n_absent, 1u);
    EXPECT_EQ(out.tally.weight_present, 0.0);
    EXPECT_EQ(out.tally.weight_absent, 0.0);
}

TEST(WeightedVote, Examples) {
    EXPECT_EQ(weighted_majority_vote(std::vector<WeightedVote>{{A, 0.6}, {P, 0.2}, {P, 0.2}}).label, A);
    const auto tie = weighted_majority_vote(std::vector<WeightedVote>{{P, 0.5}, {A, 0.5}});
    EXPECT_EQ(tie.label, A);
    EXPECT_TRUE(tie.tie_broken);
}

TEST(WeightedVote, Errors) {
    try {
        weighted_majority_vote(std::vector<WeightedVote>{{P, 0.0}, {A, 0.0}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::zero_weight_mass);
    }
    EXPECT_THROW(weighted_majority_vote(std::vector<WeightedVote>{{P, -1.0}, {A, 2.0}}), Error);
    EXPECT_THROW(weighted_majority_vote(std::vector<WeightedVote>{}), Error);
}

TEST(GroupVote, Examples) {
    using G = AbilityGroup;
    const std::vector<GroupVote> v{{P, G::expert}, {A, G::beginner}, {A, G::beginner}};
    EXPECT_EQ(group_restricted_vote(v, {G::expert}).label, P);

    const auto fb = group_restricted_vote(std::vector<GroupVote>{{A, G::beginner}}, {G::expert});
    EXPECT_EQ(fb.label, A);
    EXPECT_TRUE(fb.fallback);

    const std::set<G> all{G::beginner, G::competent, G::experienced, G::expert};
    EXPECT_EQ(group_restricted_vote(v, all).label, majority_vote(std::vector{P, A, A}).label);
}

TEST(VoteProperties, PermutationInvariance) {
    Rng rng(1);
    for (int trial = 0; trial < 300; ++trial) {
        auto v = random_votes(rng, 1 + rng.index(9));
        std::vector<WeightedVote> wv;
        for (auto x : v) wv.push_back({x, rng.uniform() + 0.01});
        const auto label = majority_vote(v).label;
        const auto wlabel = weighted_majority_vote(wv).label;
        for (int k = 0; k < 5; ++k) {
            for (std::size_t i = v.size(); i > 1; --i) {
                const auto j = rng.index(i);
                std::swap(v[i - 1], v[j]);
                std::swap(wv[i - 1], wv[j]);
            }
            EXPECT_EQ(majority_vote(v).label, label);
            EXPECT_EQ(weighted_majority_vote(wv).label, wlabel);
        }
    }
}

TEST(VoteProperties, Monotonicity) {
    Rng rng(2);
    for (int trial = 0; trial < 500; ++trial) {
        auto v = random_votes(rng, 1 + rng.index(9));
        std::vector<WeightedVote> wv;
        for (auto x : v) wv.push_back({x, rng.uniform() + 0.01});
        const auto i = rng.index(v.size());
        const auto before = majority_vote(v).label;
        const auto wbefore = weighted_majority_vote(wv).label;
        const Label flipped = v[i] == P ? A : P;
        v[i] = flipped;
        wv[i].vote = flipped;
        const auto after = majority_vote(v).label;
        const auto wafter = weighted_majority_vote(wv).label;
        if (flipped == P) {
            EXPECT_FALSE(before == P && after == A);
            EXPECT_FALSE(wbefore == P && wafter == A);
        } else {
            EXPECT_FALSE(before == A && after == P);
            EXPECT_FALSE(wbefore == A && wafter == P);
        }
    }
}

TEST(VoteProperties, WeightScaleInvariance) {
    Rng rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        const auto v = random_votes(rng, 1 + rng.index(9));
        std::vector<WeightedVote> wv, scaled;
        // Dyadic weights and power-of-two scale factors keep sums exact.
        const double c = std::ldexp(1.0, static_cast<int>(rng.index(20)) - 10);
        for (auto x : v) {
            const double w = static_cast<double>(1 + rng.index(16)) / 16.0;
            wv.push_back({x, w});
            scaled.push_back({x, w * c});
        }
        const auto a = weighted_majority_vote(wv);
        const auto b = weighted_majority_vote(scaled);
        EXPECT_EQ(a.label, b.label);
        EXPECT_EQ(a.tie_broken, b.tie_broken);
    }
}

TEST(VoteProperties, EqualWeightsReduceToMajority) {
    Rng rng(4);
    for (int trial = 0; trial < 500; ++trial) {
        const auto v = random_votes(rng, 1 + rng.index(12));
        const double w = 0.1 + rng.uniform();
        std::vector<WeightedVote> wv;
        for (auto x : v) wv.push_back({x, w});
        const auto a = majority_vote(v);
        const auto b = weighted_majority_vote(wv);
        EXPECT_EQ(a.label, b.label);
        EXPECT_EQ(a.tie_broken, b.tie_broken);
    }
}

TEST(Aggregate, PerPointIndependence) {
    std::vector<ClassificationRecord> rs{rec("a", "1", Answer::present), rec("b", "1", Answer::present),
                                         rec("c", "1", Answer::absent),  rec("a", "2", Answer::absent),
                                         rec("b", "2", Answer::absent)};
    const auto out = aggregate(rs, {});
    ASSERT_EQ(out.labels.size(), 2u);
    EXPECT_EQ(out.labels[0].decided, P);
    EXPECT_EQ(out.labels[1].decided, A);
    EXPECT_EQ(out.labels[0].strategy, Strategy::majority);
}

TEST(Aggregate, UniformWeightsEqualMajority) {
    Rng rng(5);
    std::vector<ClassificationRecord> rs;
    ParticipantWeights w;
    for (int i = 0; i < 7; ++i) w["p" + std::to_string(i)] = 1.0 / 7.0;
    for (int k = 0; k < 40; ++k) {
        for (int i = 0; i < 7; ++i) {
            if (rng.bernoulli(0.6)) {
                rs.push_back(rec("p" + std::to_string(i), std::to_string(k), rng.bernoulli(0.5) ? Answer::present : Answer::absent));
            }
        }
    }
    AggregateOptions weighted;
    weighted.strategy = Strategy::weighted;
    weighted.weights = &w;
    const auto a = aggregate(rs, {});
    const auto b = aggregate(rs, weighted);
    ASSERT_EQ(a.labels.size(), b.labels.size());
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
        EXPECT_EQ(a.labels[i].point, b.labels[i].point);
        EXPECT_EQ(a.labels[i].decided, b.labels[i].decided);
    }
}

TEST(Aggregate, UnsureOnlyPointIsOmitted) {
    std::vector<ClassificationRecord> rs{rec("a", "1", Answer::unsure), rec("b", "1", Answer::unsure),
                                         rec("a", "2", Answer::present)};
    const auto out = aggregate(rs, {});
    EXPECT_EQ(out.labels.size(), 1u);
    EXPECT_EQ(out.omitted_unsure_only, 1u);
}

TEST(Aggregate, UnsureNeverVotes) {
    std::vector<ClassificationRecord> rs{rec("a", "1", Answer::unsure), rec("b", "1", Answer::present)};
    const auto out = aggregate(rs, {});
    ASSERT_EQ(out.labels.size(), 1u);
    EXPECT_EQ(out.labels[0].tally.n_present, 1u);
    EXPECT_EQ(out.labels[0].tally.n_absent, 0u);
}

TEST(Aggregate, WeightedRequiresWeights) {
    std::vector<ClassificationRecord> rs{rec("a", "1", Answer::present)};
    AggregateOptions opt;
    opt.strategy = Strategy::weighted;
    try {
        aggregate(rs, opt);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::missing_weights);
    }
    opt.strategy = Strategy::group_majority;
    EXPECT_THROW(aggregate(rs, opt), Error);
}

TEST(Aggregate, ZeroWeightMassFallsBackToMajority) {
    std::vector<ClassificationRecord> rs{rec("x", "1", Answer::present), rec("y", "1", Answer::present),
                                         rec("z", "1", Answer::absent)};
    ParticipantWeights w{{"other", 1.0}};
    AggregateOptions opt;
    opt.strategy = Strategy::weighted;
    opt.weights = &w;
    const auto out = aggregate(rs, opt);
    ASSERT_EQ(out.labels.size(), 1u);
    EXPECT_EQ(out.labels[0].decided, P);
    EXPECT_TRUE(out.labels[0].fallback);
}

TEST(Aggregate, GroupFilterUsesTable) {
    std::vector<ClassificationRecord> rs{rec("e", "1", Answer::present), rec("b1", "1", Answer::absent),
                                         rec("b2", "1", Answer::absent), rec("unknown", "1", Answer::present)};
    ParticipantGroups g{{"e", AbilityGroup::expert}, {"b1", AbilityGroup::beginner}, {"b2", AbilityGroup::beginner}};
    AggregateOptions opt;
    opt.strategy = Strategy::group_majority;
    opt.groups = &g;
    opt.allowed_groups = {AbilityGroup::expert};
    const auto out = aggregate(rs, opt);
    ASSERT_EQ(out.labels.size(), 1u);
    EXPECT_EQ(out.labels[0].decided, P);
    EXPECT_EQ(out.labels[0].tally.n_present, 1u);
    EXPECT_FALSE(out.labels[0].fallback);
}
