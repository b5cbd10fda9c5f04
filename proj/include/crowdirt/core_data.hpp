#ifndef CROWDIRT_CORE_DATA_HPP
#define CROWDIRT_CORE_DATA_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <tuple>
#include <utility>
#include <vector>

#include "crowdirt/error.hpp"
#include "crowdirt/rng.hpp"
#include "crowdirt/text.hpp"

namespace crowdirt {

enum class Answer : std::uint8_t { present, absent, unsure };

/// Binary label for the target category.
enum class Label : std::uint8_t { absent = 0, present = 1 };

enum class AbilityGroup : std::uint8_t { beginner, competent, experienced, expert };

constexpr std::string_view to_string(Answer a) noexcept {
    switch (a) {
        case Answer::present: return "present";
        case Answer::absent: return "absent";
        case Answer::unsure: return "unsure";
    }
    return "";
}

constexpr std::string_view to_string(Label l) noexcept {
    return l == Label::present ? "present" : "absent";
}

constexpr std::string_view to_string(AbilityGroup g) noexcept {
    switch (g) {
        case AbilityGroup::beginner: return "beginner";
        case AbilityGroup::competent: return "competent";
        case AbilityGroup::experienced: return "experienced";
        case AbilityGroup::expert: return "expert";
    }
    return "";
}

inline std::optional<Answer> parse_answer(std::string_view s) {
    if (s == "present") return Answer::present;
    if (s == "absent") return Answer::absent;
    if (s == "unsure") return Answer::unsure;
    return std::nullopt;
}

inline std::optional<Label> parse_label(std::string_view s) {
    if (s == "present") return Label::present;
    if (s == "absent") return Label::absent;
    return std::nullopt;
}

inline std::optional<AbilityGroup> parse_group(std::string_view s) {
    for (auto g : {AbilityGroup::beginner, AbilityGroup::competent, AbilityGroup::experienced,
                   AbilityGroup::expert}) {
        if (s == to_string(g)) return g;
    }
    return std::nullopt;
}

constexpr std::optional<Label> as_label(Answer a) noexcept {
    if (a == Answer::present) return Label::present;
    if (a == Answer::absent) return Label::absent;
    return std::nullopt;
}

/// (image_id, point_id); point ids are only unique within an image.
struct PointKey {
    std::string image_id;
    std::string point_id;

    auto operator<=>(const PointKey&) const = default;
};

struct PointKeyHash {
    std::size_t operator()(const PointKey& k) const noexcept {
        const std::size_t h1 = std::hash<std::string>{}(k.image_id);
        const std::size_t h2 = std::hash<std::string>{}(k.point_id);
        return h1 ^ (h2 + 0x9e3779b97f4a7c15ULL + (h1 << 6) + (h1 >> 2));
    }
};

// ---------------------------------------------------------------------------
// Timestamps
// ---------------------------------------------------------------------------

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

namespace detail {

inline bool read_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
    if (pos + n > s.size()) return false;
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
}

}  // namespace detail

/// Parses `YYYY-MM-DDTHH:MM:SS[.fff...](Z|+HH:MM|-HH:MM)`. Sub-millisecond
/// digits are truncated.
inline std::optional<Timestamp> parse_rfc3339(std::string_view s) {
    using namespace std::chrono;
    int y, mo, d, h, mi, sec;
    if (!detail::read_digits(s, 0, 4, y) || s.size() < 20 || s[4] != '-' ||
        !detail::read_digits(s, 5, 2, mo) || s[7] != '-' || !detail::read_digits(s, 8, 2, d) ||
        (s[10] != 'T' && s[10] != 't' && s[10] != ' ') || !detail::read_digits(s, 11, 2, h) ||
        s[13] != ':' || !detail::read_digits(s, 14, 2, mi) || s[16] != ':' ||
        !detail::read_digits(s, 17, 2, sec)) {
        return std::nullopt;
    }
    if (h > 23 || mi > 59 || sec > 60) return std::nullopt;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;

    std::size_t pos = 19;
    long long millis = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        int digits = 0;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            if (digits < 3) millis = millis * 10 + (s[pos] - '0');
            ++digits;
            ++pos;
        }
        if (digits == 0) return std::nullopt;
        for (int i = digits; i < 3; ++i) millis *= 10;
    }
    if (pos >= s.size()) return std::nullopt;
    long long offset_minutes = 0;
    if (s[pos] == 'Z' || s[pos] == 'z') {
        ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
        const int sign = s[pos] == '+' ? 1 : -1;
        int oh, om;
        if (!detail::read_digits(s, pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' ||
            !detail::read_digits(s, pos + 4, 2, om) || oh > 23 || om > 59) {
            return std::nullopt;
        }
        offset_minutes = sign * (oh * 60LL + om);
        pos += 6;
    } else {
        return std::nullopt;
    }
    if (pos != s.size()) return std::nullopt;

    const auto day_point = sys_days{ymd};
    return time_point_cast<milliseconds>(day_point) + hours{h} + minutes{mi} + seconds{sec} +
           milliseconds{millis} - minutes{offset_minutes};
}

/// UTC RFC 3339 with millisecond precision when the value has a fractional part.
inline std::string format_rfc3339(Timestamp t) {
    using namespace std::chrono;
    const auto day_point = floor<days>(t);
    const year_month_day ymd{day_point};
    auto rem = t - day_point;
    const auto h = duration_cast<hours>(rem);
    rem -= h;
    const auto mi = duration_cast<minutes>(rem);
    rem -= mi;
    const auto s = duration_cast<seconds>(rem);
    rem -= s;
    const long long ms = rem.count();
    char buf[40];
    int n = std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lld",
                          static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                          static_cast<unsigned>(ymd.day()), static_cast<long long>(h.count()),
                          static_cast<long long>(mi.count()), static_cast<long long>(s.count()));
    std::string out(buf, static_cast<std::size_t>(n));
    if (ms != 0) {
        std::snprintf(buf, sizeof(buf), ".%03lld", ms);
        out += buf;
    }
    out += 'Z';
    return out;
}

// ---------------------------------------------------------------------------
// Records and parsing
// ---------------------------------------------------------------------------

struct ClassificationRecord {
    std::string participant_id;
    std::string image_id;
    std::string point_id;
    std::string camera_id;
    int occasion = 0;  ///< 0 until derive_occasions runs; never read from input
    Answer answer = Answer::unsure;
    Timestamp timestamp{};
    double duration_secs = 0.0;
    std::optional<Label> truth;  ///< empty when the point is not gold

    PointKey point() const { return {image_id, point_id}; }

    bool operator==(const ClassificationRecord&) const = default;
};

enum class DropReason : std::uint8_t {
    bad_field_count,
    empty_id,
    bad_timestamp,
    bad_answer,
    bad_duration,
    bad_truth,
    duplicate_key,
};

constexpr std::string_view to_string(DropReason r) noexcept {
    switch (r) {
        case DropReason::bad_field_count: return "bad_field_count";
        case DropReason::empty_id: return "empty_id";
        case DropReason::bad_timestamp: return "bad_timestamp";
        case DropReason::bad_answer: return "bad_answer";
        case DropReason::bad_duration: return "bad_duration";
        case DropReason::bad_truth: return "bad_truth";
        case DropReason::duplicate_key: return "duplicate_key";
    }
    return "";
}

struct DroppedRow {
    std::size_t line = 0;  ///< 1-based line number in the input, header is line 1
    DropReason reason{};
};

struct ValidationReport {
    std::size_t record_count = 0;  ///< data rows seen; equals kept + dropped.size()
    std::size_t kept = 0;
    std::size_t participant_count = 0;
    std::size_t image_count = 0;
    std::size_t point_count = 0;
    std::size_t camera_count = 0;
    std::size_t unsure_count = 0;  ///< kept rows answering `unsure`; these never vote or score
    std::vector<DroppedRow> dropped;
    std::vector<std::string> warnings;

    std::size_t dropped_count(DropReason r) const {
        return static_cast<std::size_t>(std::count_if(
            dropped.begin(), dropped.end(), [r](const DroppedRow& d) { return d.reason == r; }));
    }
};

struct ParsedClassifications {
    std::vector<ClassificationRecord> records;
    ValidationReport report;
};

inline constexpr std::string_view kClassificationColumns[] = {
    "participant_id", "image_id", "point_id", "camera_id",
    "timestamp",      "answer",   "duration_secs", "truth"};

inline std::string classification_header() {
    std::string h;
    for (auto col : kClassificationColumns) {
        if (!h.empty()) h += ',';
        h += col;
    }
    return h;
}

namespace detail {

inline void check_header(const std::vector<std::string>& cols) {
    constexpr std::size_t n = std::size(kClassificationColumns);
    for (std::size_t i = 0; i < n; ++i) {
        const auto expected = kClassificationColumns[i];
        if (i >= cols.size()) throw Error(Errc::bad_header, "missing column '" + std::string(expected) + "'");
        if (cols[i] != expected) {
            const bool known = std::find(std::begin(kClassificationColumns), std::end(kClassificationColumns),
                                         cols[i]) != std::end(kClassificationColumns);
            if (known) {
                throw Error(Errc::bad_header, "column '" + cols[i] + "' at position " + std::to_string(i + 1) +
                                                  ", expected '" + std::string(expected) + "'");
            }
            throw Error(Errc::bad_header, "unknown column '" + cols[i] + "'");
        }
    }
    if (cols.size() > n) throw Error(Errc::bad_header, "unknown column '" + cols[n] + "'");
}

}  // namespace detail

inline ParsedClassifications parse_classifications(std::istream& in) {
    ParsedClassifications out;
    auto& report = out.report;

    std::string line;
    if (!text::read_line(in, line)) throw Error(Errc::empty_input, "input has no header");
    if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (line.empty()) throw Error(Errc::empty_input, "input has no header");
    detail::check_header(text::split_csv_line(line));

    std::set<std::tuple<std::string, std::string, std::string>> seen;
    std::size_t line_no = 1;
    auto drop = [&](DropReason reason) {
        report.dropped.push_back({line_no, reason});
        report.warnings.push_back("line " + std::to_string(line_no) + ": dropped (" +
                                  std::string(to_string(reason)) + ")");
    };

    while (text::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ++report.record_count;
        auto f = text::split_csv_line(line);
        if (f.size() != std::size(kClassificationColumns)) {
            drop(DropReason::bad_field_count);
            continue;
        }
        if (f[0].empty() || f[1].empty() || f[2].empty() || f[3].empty()) {
            drop(DropReason::empty_id);
            continue;
        }
        auto ts = parse_rfc3339(f[4]);
        if (!ts) {
            drop(DropReason::bad_timestamp);
            continue;
        }
        auto answer = parse_answer(f[5]);
        if (!answer) {
            drop(DropReason::bad_answer);
            continue;
        }
        auto duration = text::parse_double(f[6]);
        if (!duration || !std::isfinite(*duration) || *duration < 0.0) {
            drop(DropReason::bad_duration);
            continue;
        }
        std::optional<Label> truth;
        if (!f[7].empty()) {
            truth = parse_label(f[7]);
            if (!truth) {
                drop(DropReason::bad_truth);
                continue;
            }
        }
        if (!seen.emplace(f[0], f[1], f[2]).second) {
            drop(DropReason::duplicate_key);
            continue;
        }
        ClassificationRecord r;
        r.participant_id = std::move(f[0]);
        r.image_id = std::move(f[1]);
        r.point_id = std::move(f[2]);
        r.camera_id = std::move(f[3]);
        r.timestamp = *ts;
        r.answer = *answer;
        r.duration_secs = *duration;
        r.truth = truth;
        if (r.answer == Answer::unsure) ++report.unsure_count;
        out.records.push_back(std::move(r));
    }
    if (report.record_count == 0) throw Error(Errc::empty_input, "input has a header but no rows");

    report.kept = out.records.size();
    std::set<std::string> participants, images, cameras;
    std::set<PointKey> points;
    for (const auto& r : out.records) {
        participants.insert(r.participant_id);
        images.insert(r.image_id);
        cameras.insert(r.camera_id);
        points.insert(r.point());
    }
    report.participant_count = participants.size();
    report.image_count = images.size();
    report.point_count = points.size();
    report.camera_count = cameras.size();
    if (report.unsure_count > 0) {
        report.warnings.push_back(std::to_string(report.unsure_count) +
                                  " unsure answers kept but excluded from scoring and voting");
    }
    return out;
}

inline void write_classifications(std::ostream& out, std::span<const ClassificationRecord> records) {
    out << classification_header() << '\n';
    for (const auto& r : records) {
        out << text::escape_csv(r.participant_id) << ',' << text::escape_csv(r.image_id) << ','
            << text::escape_csv(r.point_id) << ',' << text::escape_csv(r.camera_id) << ','
            << format_rfc3339(r.timestamp) << ',' << to_string(r.answer) << ','
            << text::format_double(r.duration_secs) << ',' << (r.truth ? to_string(*r.truth) : "")
            << '\n';
    }
}

/// Numbers each participant's distinct UTC calendar dates 1..T_i in ascending order.
inline std::vector<ClassificationRecord> derive_occasions(std::vector<ClassificationRecord> records) {
    using namespace std::chrono;
    std::map<std::string, std::set<sys_days>> dates;
    for (const auto& r : records) dates[r.participant_id].insert(floor<days>(r.timestamp));
    for (auto& r : records) {
        const auto& ds = dates[r.participant_id];
        const auto it = ds.find(floor<days>(r.timestamp));
        r.occasion = static_cast<int>(std::distance(ds.begin(), it)) + 1;
    }
    return records;
}

// ---------------------------------------------------------------------------
// Gold standard and response matrix
// ---------------------------------------------------------------------------

using GoldStandard = std::map<PointKey, Label>;

/// Collects the truth column for points on `images` (or all images when empty).
/// Conflicting truth values for one point are a hard error.
inline GoldStandard gold_from_records(std::span<const ClassificationRecord> records,
                                      const std::set<std::string>& images = {}) {
    GoldStandard gold;
    for (const auto& r : records) {
        if (!r.truth) continue;
        if (!images.empty() && !images.contains(r.image_id)) continue;
        auto [it, inserted] = gold.emplace(r.point(), *r.truth);
        if (!inserted && it->second != *r.truth) {
            throw Error(Errc::truth_conflict, "point " + r.image_id + "/" + r.point_id + " has conflicting truth");
        }
    }
    return gold;
}

struct Observation {
    std::uint32_t participant = 0;
    std::uint32_t point = 0;
    std::uint32_t camera = 0;
    std::uint32_t occasion = 0;  ///< occasion - 1, so index 0 is the first day
    std::uint8_t correct = 0;
};

/// Correctness-coded gold-standard observations with dense index maps.
struct ResponseMatrix {
    std::vector<Observation> observations;
    std::vector<std::string> participants;
    std::vector<PointKey> points;
    std::vector<std::string> cameras;
    std::size_t occasions = 1;

    std::size_t n_participants() const { return participants.size(); }
    std::size_t n_points() const { return points.size(); }
    std::size_t n_cameras() const { return cameras.size(); }
    std::size_t n_occasions() const { return occasions; }
};

inline ResponseMatrix build_response_matrix(std::span<const ClassificationRecord> records,
                                            const GoldStandard& gold) {
    if (gold.empty()) throw Error(Errc::invalid_argument, "gold standard is empty");
    ResponseMatrix rm;
    std::unordered_map<std::string, std::uint32_t> pidx, cidx;
    std::unordered_map<PointKey, std::uint32_t, PointKeyHash> kidx;
    int max_occasion = 1;
    auto index_of = [](auto& map, auto& names, const auto& key) {
        auto [it, inserted] = map.emplace(key, static_cast<std::uint32_t>(names.size()));
        if (inserted) names.push_back(key);
        return it->second;
    };
    for (const auto& r : records) {
        if (r.answer == Answer::unsure) continue;
        const auto key = r.point();
        const auto g = gold.find(key);
        if (g == gold.end()) continue;
        if (r.occasion < 1) throw Error(Errc::invalid_argument, "record without derived occasion");
        Observation o;
        o.participant = index_of(pidx, rm.participants, r.participant_id);
        o.point = index_of(kidx, rm.points, key);
        o.camera = index_of(cidx, rm.cameras, r.camera_id);
        o.occasion = static_cast<std::uint32_t>(r.occasion - 1);
        o.correct = (as_label(r.answer) == g->second) ? 1 : 0;
        max_occasion = std::max(max_occasion, r.occasion);
        rm.observations.push_back(o);
    }
    if (rm.observations.empty()) throw Error(Errc::no_gold_overlap, "no scored record falls on a gold-standard point");
    rm.occasions = static_cast<std::size_t>(max_occasion);
    return rm;
}

// ---------------------------------------------------------------------------
// Gold / evaluation split
// ---------------------------------------------------------------------------

struct GoldSplit {
    std::vector<std::string> gold;  ///< in input order
    std::vector<std::string> eval;  ///< in input order
};

/// Distinct image ids in first-appearance order.
inline std::vector<std::string> image_ids(std::span<const ClassificationRecord> records) {
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (const auto& r : records) {
        if (seen.insert(r.image_id).second) ids.push_back(r.image_id);
    }
    return ids;
}

/// Draws round(fraction * n) images uniformly without replacement.
inline GoldSplit split_gold_standard(std::span<const std::string> images, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw Error(Errc::invalid_argument, "gold fraction must lie in (0, 1], got " + text::format_double(fraction));
    }
    std::vector<std::string> unique;
    std::set<std::string> seen;
    for (const auto& id : images) {
        if (seen.insert(id).second) unique.push_back(id);
    }
    const std::size_t n = unique.size();
    if (n < 2) throw Error(Errc::invalid_argument, "need at least 2 images to split");
    if (fraction * static_cast<double>(n) < 1.0) {
        throw Error(Errc::invalid_argument, "gold fraction selects fewer than one image");
    }
    const auto n_gold = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    for (std::size_t i = 0; i < n_gold; ++i) {  // partial Fisher-Yates
        const auto j = i + static_cast<std::size_t>(rng.index(n - i));
        std::swap(order[i], order[j]);
    }
    std::vector<bool> chosen(n, false);
    for (std::size_t i = 0; i < n_gold; ++i) chosen[order[i]] = true;

    GoldSplit split;
    for (std::size_t i = 0; i < n; ++i) (chosen[i] ? split.gold : split.eval).push_back(unique[i]);
    return split;
}

}  // namespace crowdirt

#endif  // CROWDIRT_CORE_DATA_HPP
