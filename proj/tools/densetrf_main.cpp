// densetrf: experiment runner for the texture-aware representation
// adaptation pipeline. Subcommands cover dataset generation, slot-attention
// pretraining, dual-branch adaptation, dense-head training, evaluation, and
// the ablation sweep.

#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "densetrf/errors.h"
#include "densetrf/experiment.h"
#include "densetrf/pipeline.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissingPrerequisite = 3;
constexpr int kExitNumerical = 4;

struct GlobalArgs {
    std::string config_path;
    std::string output_dir;
    std::string seeds_csv;
    std::string variant;
    int jobs = -1;
    bool deterministic = false;
    bool overwrite = false;
};

std::vector<uint64_t> parse_seeds(const std::string& csv) {
    std::vector<uint64_t> out;
    size_t pos = 0;
    while (pos < csv.size()) {
        size_t comma = csv.find(',', pos);
        std::string tok = csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!tok.empty()) out.push_back(std::stoull(tok));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw dtrf::ConfigError("--seed list parsed to nothing");
    return out;
}

dtrf::ExperimentConfig resolve_config(const GlobalArgs& g) {
    dtrf::ExperimentConfig cfg =
        g.config_path.empty() ? dtrf::default_config() : dtrf::config_from_json_file(g.config_path);
    if (!g.output_dir.empty()) cfg.output_dir = g.output_dir;
    if (!g.seeds_csv.empty()) cfg.seeds = parse_seeds(g.seeds_csv);
    if (!g.variant.empty()) cfg.variant = dtrf::variant_from_name(g.variant);
    if (g.jobs >= 0) cfg.jobs = g.jobs;
    if (g.deterministic) cfg.deterministic = true;
    if (g.overwrite) cfg.overwrite = true;
    cfg.validate();
    return cfg;
}

void add_global_options(CLI::App* app, GlobalArgs& g) {
    app->add_option("-c,--config", g.config_path, "JSON config file (omitted fields take defaults)");
    app->add_option("-o,--output", g.output_dir, "output directory (overrides config)");
    app->add_option("-s,--seed", g.seeds_csv, "comma-separated seed list override");
    app->add_option("-j,--jobs", g.jobs, "worker threads (0 = all cores)");
    app->add_flag("--deterministic", g.deterministic, "single-threaded bit-reproducible execution");
    app->add_flag("--overwrite", g.overwrite, "allow regenerating existing outputs");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"densetrf experiment runner"};
    app.require_subcommand(1);

    GlobalArgs g;
    bool identity_hook = false;

    CLI::App* cmd_generate = app.add_subcommand("generate", "generate the synthetic shift benchmark");
    CLI::App* cmd_pretrain = app.add_subcommand("pretrain-base", "pretrain the base slot-attention branch");
    CLI::App* cmd_adapt = app.add_subcommand("adapt", "dual-branch unsupervised adaptation with periodic merging");
    CLI::App* cmd_train = app.add_subcommand("train-head", "three-phase supervised dense-head training");
    CLI::App* cmd_eval = app.add_subcommand("evaluate", "evaluate checkpoints and write metric CSVs/plots");
    CLI::App* cmd_ablate = app.add_subcommand("ablate", "run all ablation variants over all seeds");

    for (CLI::App* c : {cmd_generate, cmd_pretrain, cmd_adapt, cmd_train, cmd_eval, cmd_ablate}) {
        add_global_options(c, g);
    }
    for (CLI::App* c : {cmd_train, cmd_eval}) {
        c->add_option("--variant", g.variant, "pipeline variant: full|no_sa|sa_no_adapt|no_concat");
    }
    cmd_eval->add_flag("--identity-hook", identity_hook,
                       "score labels against themselves instead of the model (test hook)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        dtrf::ExperimentConfig cfg = resolve_config(g);
        if (cmd_generate->parsed()) {
            dtrf::pipeline::generate(cfg);
            std::printf("dataset ready under %s\n", dtrf::Workspace(cfg).dataset_root().string().c_str());
        } else if (cmd_pretrain->parsed()) {
            dtrf::pipeline::pretrain_base(cfg);
            std::printf("pretrained %zu seed(s)\n", cfg.seeds.size());
        } else if (cmd_adapt->parsed()) {
            dtrf::pipeline::adapt(cfg);
            std::printf("adapted %zu seed(s) over %d rounds\n", cfg.seeds.size(), cfg.round.total_rounds);
        } else if (cmd_train->parsed()) {
            dtrf::pipeline::train_head(cfg);
            std::printf("trained variant %s for %zu seed(s)\n", dtrf::variant_name(cfg.variant), cfg.seeds.size());
        } else if (cmd_eval->parsed()) {
            dtrf::pipeline::EvalSummary s = dtrf::pipeline::evaluate(cfg, identity_hook);
            std::printf("%s: target DICE %.4f +/- %.4f (n=%d), source DICE %.4f +/- %.4f\n",
                        dtrf::variant_name(cfg.variant), s.target.dice.mean, s.target.dice.stddev, s.target.dice.n,
                        s.source.dice.mean, s.source.dice.stddev);
        } else if (cmd_ablate->parsed()) {
            dtrf::pipeline::AblateResult r = dtrf::pipeline::ablate(cfg);
            for (const auto& v : r.variants) {
                std::printf("%-12s target DICE %.4f +/- %.4f\n", dtrf::variant_name(v.variant), v.target.dice.mean,
                            v.target.dice.stddev);
            }
            std::printf("adaptation_helps=%s concat_helps=%s sa_helps=%s domain_gap=%s\n",
                        r.adaptation_helps ? "PASS" : "FAIL", r.concat_helps ? "PASS" : "FAIL",
                        r.sa_helps ? "PASS" : "FAIL", r.domain_gap_positive ? "PASS" : "FAIL");
        }
    } catch (const dtrf::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const dtrf::ParseError& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return kExitConfig;
    } catch (const dtrf::MissingPrerequisiteError& e) {
        std::fprintf(stderr, "missing prerequisite: %s\n", e.what());
        return kExitMissingPrerequisite;
    } catch (const dtrf::NonFiniteError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return kExitOk;
}
