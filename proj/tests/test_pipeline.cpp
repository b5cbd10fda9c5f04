#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "crowdirt/core_data.hpp"
#include "crowdirt/io.hpp"
#include "crowdirt/pipeline.hpp"
#include "crowdirt/simgen.hpp"
#include "crowdirt/text.hpp"

using namespace crowdirt;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("crowdirt_pipeline_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

struct Run {
    int code = -1;
    std::string err;
};

// Runs the command-line tool; stderr is captured to a file in `dir`.
Run cli(const fs::path& dir, const std::string& args) {
    const auto err_path = dir / "stderr.txt";
    const std::string cmd = std::string(CROWDIRT_CLI) + " " + args + " 2> '" + err_path.string() + "' > /dev/null";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = io::read_file(err_path);
    return r;
}

std::string flags(const fs::path& dir) { return "--out-dir '" + dir.string() + "' --seed 3 --sequential"; }

// Small synthetic data set whose fit converges with short chains.
void simulate_small(const fs::path& dir) {
    ASSERT_EQ(cli(dir, "simulate " + flags(dir) +
                           " --participants 20 --images 12 --points-per-image 5 --occasions 3")
                  .code,
              0);
}

std::string fit_flags(const fs::path& dir) {
    return flags(dir) + " --input '" + (dir / "classifications.csv").string() +
           "' --gold-fraction 0.5 --chains 2 --warmup 1000 --samples 1000";
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::istringstream in(io::read_file(p));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) rows.push_back(text::split_csv_line(line));
    }
    return rows;
}

std::set<std::pair<std::string, std::string>> point_keys(const fs::path& p) {
    std::set<std::pair<std::string, std::string>> keys;
    const auto rows = read_csv(p);
    for (std::size_t r = 1; r < rows.size(); ++r) keys.emplace(rows[r][0], rows[r][1]);
    return keys;
}

}  // namespace

TEST(Simulate, DefaultConfigCounts) {
    const auto dir = fresh_dir("sim_default");
    ASSERT_EQ(cli(dir, "simulate " + flags(dir)).code, 0);
    ASSERT_TRUE(fs::exists(dir / "truth.json"));
    const SimConfig defaults;
    const auto rows = read_csv(dir / "classifications.csv");
    EXPECT_EQ(rows.size() - 1, defaults.participants * defaults.images * defaults.points_per_image);
}

TEST(Simulate, ZeroParticipantsFails) {
    const auto dir = fresh_dir("sim_zero");
    const auto r = cli(dir, "simulate " + flags(dir) + " --participants 0");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("error"), std::string::npos);
}

TEST(Simulate, RerunIsByteIdentical) {
    const auto a = fresh_dir("sim_a"), b = fresh_dir("sim_b");
    ASSERT_EQ(cli(a, "simulate " + flags(a) + " --participants 7 --images 5").code, 0);
    ASSERT_EQ(cli(b, "simulate " + flags(b) + " --participants 7 --images 5").code, 0);
    EXPECT_EQ(io::read_file(a / "classifications.csv"), io::read_file(b / "classifications.csv"));
    EXPECT_EQ(io::read_file(a / "truth.json"), io::read_file(b / "truth.json"));
}

TEST(Fit, HappyPathWritesAllArtifacts) {
    const auto dir = fresh_dir("fit_ok");
    simulate_small(dir);
    const auto r = cli(dir, "fit " + fit_flags(dir));
    EXPECT_EQ(r.code, 0) << r.err;
    for (const char* f : {"validation.json", "split.json", "index.json", "summary.json", "diagnostics.json",
                          "params_mean.json", "draws_chain1.csv", "draws_chain2.csv", "learning_curve.csv"}) {
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    }
    EXPECT_FALSE(fs::exists(dir / "warnings.json"));
    const auto diag = io::read_json(dir / "diagnostics.json");
    EXPECT_LE(diag["max_rhat"].get<double>(), 1.05);
    EXPECT_EQ(read_csv(dir / "draws_chain1.csv").size(), 1001u);
}

TEST(Fit, MissingInputNamesPath) {
    const auto dir = fresh_dir("fit_missing");
    const auto missing = (dir / "nowhere.csv").string();
    const auto r = cli(dir, "fit " + flags(dir) + " --input '" + missing + "'");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
}

TEST(Fit, ShortChainsExitTwoWithWarnings) {
    const auto dir = fresh_dir("fit_short");
    simulate_small(dir);
    const auto r = cli(dir, "fit " + flags(dir) + " --input '" + (dir / "classifications.csv").string() +
                                "' --chains 2 --warmup 5 --samples 20");
    EXPECT_EQ(r.code, 2);
    const auto w = io::read_json(dir / "warnings.json");
    EXPECT_FALSE(w["parameters"].empty());
}

TEST(Consensus, SingleStrategyWritesOneFile) {
    const auto dir = fresh_dir("cons_one");
    simulate_small(dir);
    ASSERT_EQ(cli(dir, "consensus " + fit_flags(dir) + " --strategies consensus").code, 0);
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) n += e.path().filename().string().rfind("consensus_", 0) == 0;
    EXPECT_EQ(n, 1u);
}

TEST(Consensus, FitStrategiesNeedArtifacts) {
    const auto dir = fresh_dir("cons_nofit");
    simulate_small(dir);
    const auto r = cli(dir, "consensus " + fit_flags(dir) + " --strategies experts,weighted");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("fit"), std::string::npos);
}

TEST(Consensus, EmptyStrategyListFails) {
    const auto dir = fresh_dir("cons_empty");
    simulate_small(dir);
    EXPECT_EQ(cli(dir, "consensus " + fit_flags(dir) + " --strategies ''").code, 1);
    EXPECT_EQ(cli(dir, "evaluate " + fit_flags(dir) + " --strategies ''").code, 1);
}

TEST(Pipeline, AllStrategiesAlignAndEvaluate) {
    const auto dir = fresh_dir("full");
    simulate_small(dir);
    ASSERT_EQ(cli(dir, "fit " + fit_flags(dir)).code, 0);
    ASSERT_EQ(cli(dir, "consensus " + fit_flags(dir)).code, 0);
    const auto keys = point_keys(dir / "consensus_consensus.csv");
    EXPECT_FALSE(keys.empty());
    for (const char* m : {"raw", "experts", "experts_experienced", "weighted"}) {
        EXPECT_EQ(point_keys(dir / (std::string("consensus_") + m + ".csv")), keys) << m;
    }

    const std::string order = "weighted,raw,consensus";
    ASSERT_EQ(cli(dir, "evaluate " + fit_flags(dir) + " --strategies " + order).code, 0);
    const auto report = read_csv(dir / "evaluation.csv");
    ASSERT_EQ(report.size(), 4u);
    EXPECT_EQ(report[1][0], "weighted");
    EXPECT_EQ(report[2][0], "raw");
    EXPECT_EQ(report[3][0], "consensus");

    // raw n counts individual eval-set classifications, consensus n counts points.
    const auto split = io::read_json(dir / "split.json");
    std::set<std::string> eval_images;
    for (const auto& img : split["eval"]) eval_images.insert(img.get<std::string>());
    std::ifstream in(dir / "classifications.csv");
    std::size_t eval_answers = 0;
    for (const auto& rec : parse_classifications(in).records) {
        eval_answers += eval_images.contains(rec.image_id) && rec.answer != Answer::unsure;
    }
    EXPECT_EQ(std::stoul(report[2][1]), eval_answers);
    EXPECT_EQ(std::stoul(report[3][1]), keys.size());

    ASSERT_EQ(cli(dir, "cluster " + fit_flags(dir)).code, 0);
    EXPECT_EQ(read_csv(dir / "groups.csv").size(), 21u);
    double total = 0.0;
    const auto weights = read_csv(dir / "weights.csv");
    for (std::size_t r = 1; r < weights.size(); ++r) total += std::stod(weights[r][1]);
    EXPECT_NEAR(total, 1.0, 1e-9);
    EXPECT_TRUE(fs::exists(dir / "duration_tests.csv"));
}

TEST(Evaluate, PerfectConsensusScoresOne) {
    const auto dir = fresh_dir("perfect");
    SimConfig sim;
    sim.participants = 5;
    sim.images = 6;
    auto data = generate(sim);
    for (auto& r : data.records) r.answer = *r.truth == Label::present ? Answer::present : Answer::absent;
    std::ostringstream csv;
    write_classifications(csv, data.records);
    io::write_file(dir / "classifications.csv", csv.str());
    const std::string args = flags(dir) + " --input '" + (dir / "classifications.csv").string() + "' --strategies consensus";
    ASSERT_EQ(cli(dir, "consensus " + args).code, 0);
    ASSERT_EQ(cli(dir, "evaluate " + args).code, 0);
    const auto report = read_csv(dir / "evaluation.csv");
    ASSERT_EQ(report.size(), 2u);
    EXPECT_EQ(std::stod(report[1][8]), 1.0);
    EXPECT_EQ(std::stod(report[1][10]), 1.0);
}

TEST(Evaluate, MissingTruthListsPoints) {
    const auto dir = fresh_dir("notruth");
    simulate_small(dir);
    const std::string args = fit_flags(dir) + " --strategies consensus";
    ASSERT_EQ(cli(dir, "consensus " + args).code, 0);
    // A consensus row for a point that is absent from the input.
    std::ofstream(dir / "consensus_consensus.csv", std::ios::app) << "ghost,pt9,consensus,present,1,0,0,0,false,false\n";
    const auto r = cli(dir, "evaluate " + args);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("ghost/pt9"), std::string::npos) << r.err;
}

TEST(Config, FileValuesAndFlagOverrides) {
    const auto dir = fresh_dir("config");
    io::Json j;
    j["seed"] = 5;
    j["simulation"] = {{"participants", 4}, {"images", 3}, {"points_per_image", 2}};
    io::write_file(dir / "run.json", j.dump());
    ASSERT_EQ(cli(dir, "simulate --config '" + (dir / "run.json").string() + "' --out-dir '" + dir.string() + "'").code, 0);
    EXPECT_EQ(read_csv(dir / "classifications.csv").size() - 1, 4u * 3u * 2u);
    ASSERT_EQ(cli(dir, "simulate --config '" + (dir / "run.json").string() + "' --out-dir '" + dir.string() +
                           "' --participants 6")
                  .code,
              0);
    EXPECT_EQ(read_csv(dir / "classifications.csv").size() - 1, 6u * 3u * 2u);

    pipeline::RunConfig cfg;
    pipeline::apply_config_json(j, cfg);
    EXPECT_EQ(cfg.seed, 5u);
    EXPECT_EQ(cfg.simulation.participants, 4u);
    io::Json bad;
    bad["gold_fraction"] = 1.5;
    pipeline::apply_config_json(bad, cfg);
    EXPECT_THROW(cfg.validate(), Error);
}

TEST(Methods, ParseList) {
    using pipeline::Method;
    EXPECT_EQ(pipeline::parse_methods("raw,weighted"), (std::vector<Method>{Method::raw, Method::weighted}));
    EXPECT_THROW(pipeline::parse_methods("raw,bogus"), Error);
    EXPECT_TRUE(pipeline::needs_fit(Method::experts));
    EXPECT_FALSE(pipeline::needs_fit(Method::consensus));
}
