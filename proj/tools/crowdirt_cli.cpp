// Command-line front end: simulate, fit, consensus, evaluate, cluster.
//
// Exit codes: 0 success; 1 invalid configuration, input or missing
// artifacts; 2 fit finished but did not converge (see warnings.json).

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "crowdirt/pipeline.hpp"

namespace {

namespace pl = crowdirt::pipeline;

struct Overrides {
    std::optional<std::string> config;
    std::optional<std::string> input;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<double> gold_fraction;
    std::optional<std::size_t> chains;
    std::optional<std::size_t> warmup;
    std::optional<std::size_t> samples;
    std::optional<std::size_t> thin;
    std::optional<std::string> strategies;
    bool sequential = false;
    bool no_learning = false;
    bool sum_to_zero = false;

    std::optional<std::size_t> participants;
    std::optional<std::size_t> images;
    std::optional<std::size_t> points_per_image;
    std::optional<std::size_t> cameras;
    std::optional<std::size_t> occasions;
    std::optional<std::size_t> raters_per_image;
    std::optional<double> phi_max;
};

pl::RunConfig resolve(const Overrides& o) {
    pl::RunConfig cfg;
    if (o.config) pl::apply_config_json(crowdirt::io::read_json(*o.config), cfg);
    if (o.input) cfg.input = *o.input;
    if (o.out_dir) cfg.out_dir = *o.out_dir;
    if (o.seed) cfg.seed = *o.seed;
    if (o.gold_fraction) cfg.gold_fraction = *o.gold_fraction;
    if (o.chains) cfg.chains = *o.chains;
    if (o.warmup) cfg.warmup = *o.warmup;
    if (o.samples) cfg.samples = *o.samples;
    if (o.thin) cfg.thin = *o.thin;
    if (o.strategies) cfg.strategies = pl::parse_methods(*o.strategies);
    if (o.sequential) cfg.parallel = false;
    if (o.no_learning) cfg.model.include_learning = false;
    if (o.sum_to_zero) cfg.model.anchor_mode = crowdirt::AnchorMode::sum_to_zero;
    auto& s = cfg.simulation;
    if (o.participants) s.participants = *o.participants;
    if (o.images) s.images = *o.images;
    if (o.points_per_image) s.points_per_image = *o.points_per_image;
    if (o.cameras) s.cameras = *o.cameras;
    if (o.occasions) s.occasions = *o.occasions;
    if (o.raters_per_image) s.raters_per_image = *o.raters_per_image;
    if (o.phi_max) s.phi_max = *o.phi_max;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Consensus labels for crowdsourced image classifications via a Bayesian item response model"};
    app.require_subcommand(1);
    Overrides o;

    app.add_option("--config", o.config, "JSON file mirroring the run configuration; flags override it");
    app.add_option("--input", o.input, "classification CSV");
    app.add_option("--out-dir", o.out_dir, "directory for all artifacts");
    app.add_option("--seed", o.seed, "run seed; every random stream derives from it");
    app.add_option("--gold-fraction", o.gold_fraction, "fraction of images used as gold standard");
    app.add_option("--chains", o.chains, "number of MCMC chains");
    app.add_option("--warmup", o.warmup, "warmup iterations per chain");
    app.add_option("--samples", o.samples, "kept iterations per chain");
    app.add_option("--thin", o.thin, "keep every n-th iteration");
    app.add_option("--strategies", o.strategies,
                   "comma-separated subset of raw,consensus,experts,experts_experienced,weighted");
    app.add_flag("--sequential", o.sequential, "run chains on a single thread");
    app.add_flag("--no-learning", o.no_learning, "fit without occasion effects");
    app.add_flag("--sum-to-zero", o.sum_to_zero, "anchor abilities by a sum-to-zero constraint");

    auto* simulate = app.add_subcommand("simulate", "write a synthetic classification CSV and truth.json");
    simulate->add_option("--participants", o.participants);
    simulate->add_option("--images", o.images);
    simulate->add_option("--points-per-image", o.points_per_image);
    simulate->add_option("--cameras", o.cameras);
    simulate->add_option("--occasions", o.occasions);
    simulate->add_option("--raters-per-image", o.raters_per_image, "0 means every participant rates every image");
    simulate->add_option("--phi-max", o.phi_max, "learning effect at the last occasion");
    auto* fit = app.add_subcommand("fit", "fit the model on gold-standard images");
    auto* consensus = app.add_subcommand("consensus", "write one consensus CSV per strategy");
    auto* evaluate = app.add_subcommand("evaluate", "score consensus CSVs against the truth column");
    auto* cluster = app.add_subcommand("cluster", "write ability groups, weights and duration tests");
    for (auto* sub : {simulate, fit, consensus, evaluate, cluster}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? pl::exit_ok : pl::exit_failure;
    }

    try {
        const auto cfg = resolve(o);
        if (simulate->parsed()) return pl::cmd_simulate(cfg, std::cerr);
        if (fit->parsed()) return pl::cmd_fit(cfg, std::cerr);
        if (consensus->parsed()) return pl::cmd_consensus(cfg, std::cerr);
        if (evaluate->parsed()) return pl::cmd_evaluate(cfg, std::cerr);
        if (cluster->parsed()) return pl::cmd_cluster(cfg, std::cerr);
    } catch (const crowdirt::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return pl::exit_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return pl::exit_failure;
    }
    return pl::exit_failure;
}
