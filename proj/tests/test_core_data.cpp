#include <gtest/gtest.h>

#include <set>
#include <sstream>
#include <string>

#include "crowdirt/core_data.hpp"
#include "crowdirt/rng.hpp"

using namespace crowdirt;

namespace {

const std::string kHeader = "participant_id,image_id,point_id,camera_id,timestamp,answer,duration_secs,truth\n";

ParsedClassifications parse(const std::string& body) {
    std::istringstream in(kHeader + body);
    return parse_classifications(in);
}

ClassificationRecord record(std::string participant, std::string image, std::string point, Answer answer,
                            std::optional<Label> truth = std::nullopt, int occasion = 1) {
    ClassificationRecord r;
    r.participant_id = std::move(participant);
    r.image_id = std::move(image);
    r.point_id = std::move(point);
    r.camera_id = "cam1";
    r.answer = answer;
    r.truth = truth;
    r.occasion = occasion;
    r.timestamp = *parse_rfc3339("2021-03-01T10:00:00Z");
    return r;
}

}  // namespace

TEST(ParseClassifications, WellFormedRowsPassThrough) {
    const auto out = parse(
        "p1,img1,pt1,camA,2021-03-01T10:00:00Z,present,12.5,present\n"
        "p1,img1,pt2,camA,2021-03-01T10:00:01Z,absent,12.5,\n"
        "p2,img1,pt1,camA,2021-03-02T08:30:00+02:00,unsure,3,absent\n");
    ASSERT_EQ(out.records.size(), 3u);
    EXPECT_TRUE(out.report.dropped.empty());
    EXPECT_EQ(out.report.record_count, 3u);
    EXPECT_EQ(out.report.participant_count, 2u);
    EXPECT_EQ(out.report.point_count, 2u);
    EXPECT_EQ(out.report.unsure_count, 1u);
    EXPECT_EQ(out.records[0].truth, Label::present);
    EXPECT_FALSE(out.records[1].truth.has_value());
    EXPECT_EQ(out.records[2].answer, Answer::unsure);
    EXPECT_EQ(format_rfc3339(out.records[2].timestamp), "2021-03-02T06:30:00Z");
}

TEST(ParseClassifications, BadAnswerIsDropped) {
    const auto out = parse(
        "p1,img1,pt1,camA,2021-03-01T10:00:00Z,maybe,1,\n"
        "p1,img1,pt2,camA,2021-03-01T10:00:00Z,present,1,\n");
    EXPECT_EQ(out.records.size(), 1u);
    ASSERT_EQ(out.report.dropped.size(), 1u);
    EXPECT_EQ(out.report.dropped[0].reason, DropReason::bad_answer);
    EXPECT_EQ(out.report.dropped[0].line, 2u);
    EXPECT_EQ(out.report.warnings.size(), 1u);
}

TEST(ParseClassifications, DuplicateKeyFirstWins) {
    const auto out = parse(
        "p1,img7,pt3,camA,2021-03-01T10:00:00Z,present,1,\n"
        "p1,img7,pt3,camA,2021-03-01T11:00:00Z,absent,1,\n");
    ASSERT_EQ(out.records.size(), 1u);
    EXPECT_EQ(out.records[0].answer, Answer::present);
    EXPECT_EQ(out.report.dropped_count(DropReason::duplicate_key), 1u);
}

TEST(ParseClassifications, RejectsMalformedFields) {
    const auto out = parse(
        "p1,img1,pt1,camA,yesterday,present,1,\n"
        "p1,img1,pt2,camA,2021-03-01T10:00:00Z,present,-1,\n"
        "p1,img1,pt3,camA,2021-03-01T10:00:00Z,present,1,coral\n"
        "p1,img1,pt4,camA,2021-03-01T10:00:00Z,present,1\n"
        ",img1,pt5,camA,2021-03-01T10:00:00Z,present,1,\n");
    EXPECT_TRUE(out.records.empty());
    EXPECT_EQ(out.report.dropped_count(DropReason::bad_timestamp), 1u);
    EXPECT_EQ(out.report.dropped_count(DropReason::bad_duration), 1u);
    EXPECT_EQ(out.report.dropped_count(DropReason::bad_truth), 1u);
    EXPECT_EQ(out.report.dropped_count(DropReason::bad_field_count), 1u);
    EXPECT_EQ(out.report.dropped_count(DropReason::empty_id), 1u);
    EXPECT_EQ(out.report.record_count, 5u);
}

TEST(ParseClassifications, HeaderMustMatch) {
    std::istringstream wrong("participant,image_id,point_id,camera_id,timestamp,answer,duration_secs,truth\n");
    EXPECT_THROW(parse_classifications(wrong), Error);
    std::istringstream reordered("image_id,participant_id,point_id,camera_id,timestamp,answer,duration_secs,truth\n");
    EXPECT_THROW(parse_classifications(reordered), Error);
    std::istringstream empty("");
    try {
        parse_classifications(empty);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::empty_input);
    }
}

TEST(ParseClassifications, QuotedFieldsAndCrlf) {
    const auto out = parse("\"p,1\",img1,pt1,camA,2021-03-01T10:00:00.250Z,present,1,absent\r\n");
    ASSERT_EQ(out.records.size(), 1u);
    EXPECT_EQ(out.records[0].participant_id, "p,1");
    EXPECT_EQ(format_rfc3339(out.records[0].timestamp), "2021-03-01T10:00:00.250Z");
}

TEST(ParseClassifications, RoundTrip) {
    Rng rng(42);
    std::vector<ClassificationRecord> records;
    for (int i = 0; i < 60; ++i) {
        auto r = record("p" + std::to_string(rng.index(5)), "img" + std::to_string(i / 6), "pt" + std::to_string(i % 6),
                        static_cast<Answer>(rng.index(3)),
                        rng.bernoulli(0.5) ? std::optional(static_cast<Label>(rng.index(2))) : std::nullopt);
        r.participant_id += "_" + std::to_string(i);
        r.occasion = 0;
        r.timestamp += std::chrono::milliseconds(rng.index(1000000000));
        r.duration_secs = std::round(rng.uniform() * 100000.0) / 1000.0;
        records.push_back(r);
    }
    std::ostringstream out;
    write_classifications(out, records);
    std::istringstream in(out.str());
    const auto back = parse_classifications(in);
    EXPECT_TRUE(back.report.dropped.empty());
    EXPECT_EQ(back.records, records);
}

TEST(DeriveOccasions, TwoDistinctDates) {
    std::vector<ClassificationRecord> rs{record("p1", "a", "1", Answer::present), record("p1", "a", "2", Answer::present),
                                         record("p1", "b", "1", Answer::present)};
    rs[0].timestamp = *parse_rfc3339("2021-03-01T08:00:00Z");
    rs[1].timestamp = *parse_rfc3339("2021-03-01T23:59:59Z");
    rs[2].timestamp = *parse_rfc3339("2021-03-02T00:00:00Z");
    const auto out = derive_occasions(rs);
    EXPECT_EQ(out[0].occasion, 1);
    EXPECT_EQ(out[1].occasion, 1);
    EXPECT_EQ(out[2].occasion, 2);
}

TEST(DeriveOccasions, SingleDay) {
    std::vector<ClassificationRecord> rs{record("p1", "a", "1", Answer::present), record("p1", "a", "2", Answer::absent)};
    for (const auto& r : derive_occasions(rs)) EXPECT_EQ(r.occasion, 1);
}

TEST(DeriveOccasions, PerParticipantNumbering) {
    std::vector<ClassificationRecord> rs{record("p2", "a", "1", Answer::present), record("p1", "a", "1", Answer::present),
                                         record("p2", "b", "1", Answer::present)};
    rs[0].timestamp = *parse_rfc3339("2021-03-09T12:00:00Z");
    rs[1].timestamp = *parse_rfc3339("2021-03-05T12:00:00Z");
    rs[2].timestamp = *parse_rfc3339("2021-03-01T12:00:00Z");
    const auto out = derive_occasions(rs);
    EXPECT_EQ(out[1].occasion, 1);
    EXPECT_EQ(out[2].occasion, 1);
    EXPECT_EQ(out[0].occasion, 2);
}

TEST(DeriveOccasions, UsesUtcDates) {
    std::vector<ClassificationRecord> rs{record("p1", "a", "1", Answer::present), record("p1", "a", "2", Answer::present)};
    rs[0].timestamp = *parse_rfc3339("2021-03-01T23:30:00-02:00");  // 2021-03-02 UTC
    rs[1].timestamp = *parse_rfc3339("2021-03-02T01:00:00Z");
    const auto out = derive_occasions(rs);
    EXPECT_EQ(out[0].occasion, 1);
    EXPECT_EQ(out[1].occasion, 1);
}

TEST(ResponseMatrix, CorrectnessCoding) {
    std::vector<ClassificationRecord> rs{record("p1", "a", "1", Answer::present), record("p1", "a", "2", Answer::absent),
                                         record("p1", "a", "3", Answer::unsure)};
    const GoldStandard gold{{{"a", "1"}, Label::present}, {{"a", "2"}, Label::present}, {{"a", "3"}, Label::present}};
    const auto rm = build_response_matrix(rs, gold);
    ASSERT_EQ(rm.observations.size(), 2u);
    EXPECT_EQ(rm.observations[0].correct, 1);
    EXPECT_EQ(rm.observations[1].correct, 0);
}

TEST(ResponseMatrix, ObservationCountMatchesFilter) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        std::vector<ClassificationRecord> rs;
        GoldStandard gold;
        for (int k = 0; k < 8; ++k) {
            if (rng.bernoulli(0.5)) gold[{"img", std::to_string(k)}] = static_cast<Label>(rng.index(2));
        }
        std::size_t expected = 0;
        for (int i = 0; i < 4; ++i) {
            for (int k = 0; k < 8; ++k) {
                if (!rng.bernoulli(0.7)) continue;
                const auto a = static_cast<Answer>(rng.index(3));
                rs.push_back(record("p" + std::to_string(i), "img", std::to_string(k), a, std::nullopt,
                                    1 + static_cast<int>(rng.index(3))));
                expected += a != Answer::unsure && gold.contains({"img", std::to_string(k)});
            }
        }
        if (gold.empty() || expected == 0) continue;
        const auto rm = build_response_matrix(rs, gold);
        EXPECT_EQ(rm.observations.size(), expected) << "seed " << seed;
        for (const auto& o : rm.observations) {
            EXPECT_LT(o.participant, rm.n_participants());
            EXPECT_LT(o.point, rm.n_points());
            EXPECT_LT(o.occasion, rm.n_occasions());
        }
    }
}

TEST(ResponseMatrix, NoOverlapIsAnError) {
    std::vector<ClassificationRecord> rs{record("p1", "a", "1", Answer::present)};
    const GoldStandard gold{{{"b", "1"}, Label::present}};
    try {
        build_response_matrix(rs, gold);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::no_gold_overlap);
    }
}

TEST(GoldStandard, ConflictingTruthIsAnError) {
    std::vector<ClassificationRecord> rs{record("p1", "a", "1", Answer::present, Label::present),
                                         record("p2", "a", "1", Answer::present, Label::absent)};
    EXPECT_THROW(gold_from_records(rs), Error);
}

TEST(SplitGoldStandard, Cardinality) {
    std::vector<std::string> images;
    for (int i = 0; i < 10; ++i) images.push_back("img" + std::to_string(i));
    const auto s = split_gold_standard(images, 0.5, 99);
    EXPECT_EQ(s.gold.size(), 5u);
    EXPECT_EQ(s.eval.size(), 5u);
    std::set<std::string> g(s.gold.begin(), s.gold.end());
    for (const auto& e : s.eval) EXPECT_FALSE(g.contains(e));
}

TEST(SplitGoldStandard, RoundsToNearest) {
    std::vector<std::string> images;
    for (int i = 0; i < 514; ++i) images.push_back("img" + std::to_string(i));
    EXPECT_EQ(split_gold_standard(images, 0.33, 1).gold.size(), 170u);
}

TEST(SplitGoldStandard, DeterministicAndPartitioning) {
    std::vector<std::string> images;
    for (int i = 0; i < 37; ++i) images.push_back("img" + std::to_string(i));
    const auto a = split_gold_standard(images, 0.3, 5);
    const auto b = split_gold_standard(images, 0.3, 5);
    EXPECT_EQ(a.gold, b.gold);
    EXPECT_EQ(a.eval, b.eval);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto s = split_gold_standard(images, 0.1 + 0.004 * static_cast<double>(seed), seed);
        EXPECT_EQ(s.gold.size() + s.eval.size(), images.size());
        std::set<std::string> all(s.gold.begin(), s.gold.end());
        all.insert(s.eval.begin(), s.eval.end());
        EXPECT_EQ(all.size(), images.size());
    }
}

TEST(SplitGoldStandard, RejectsBadFraction) {
    std::vector<std::string> images{"a", "b", "c"};
    EXPECT_THROW(split_gold_standard(images, 0.0, 1), Error);
    EXPECT_THROW(split_gold_standard(images, 1.5, 1), Error);
    EXPECT_THROW(split_gold_standard(images, 0.1, 1), Error);
    EXPECT_NO_THROW(split_gold_standard(images, 1.0, 1));
}

TEST(Rfc3339, ParsesVariants) {
    EXPECT_TRUE(parse_rfc3339("2021-03-01T10:00:00Z"));
    EXPECT_TRUE(parse_rfc3339("2021-03-01 10:00:00.123456+05:30"));
    EXPECT_FALSE(parse_rfc3339("2021-03-01"));
    EXPECT_FALSE(parse_rfc3339("2021-13-01T10:00:00Z"));
    EXPECT_FALSE(parse_rfc3339("2021-02-30T10:00:00Z"));
    EXPECT_EQ(format_rfc3339(*parse_rfc3339("2021-03-01T10:00:00.5-01:00")), "2021-03-01T11:00:00.500Z");
}
