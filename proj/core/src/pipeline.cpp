#include "densetrf/pipeline.h"

#include <algorithm>
#include <cstdio>
#include <thread>

#include "densetrf/checkpoint.h"
#include "densetrf/csv.h"
#include "densetrf/errors.h"
#include "densetrf/plot.h"

namespace dtrf {

namespace fs = std::filesystem;

Workspace::Workspace(const ExperimentConfig& cfg) : out_(cfg.output_dir) {
    fs::path root = cfg.data.root.empty() ? fs::path("dataset") : fs::path(cfg.data.root);
    dataset_ = root.is_absolute() ? root : out_ / root;
}

fs::path Workspace::base_ckpt(uint64_t seed) const { return checkpoints() / ("base_seed" + std::to_string(seed) + ".dtrfc"); }
fs::path Workspace::adapted_ckpt(uint64_t seed) const {
    return checkpoints() / ("adapted_seed" + std::to_string(seed) + ".dtrfc");
}
fs::path Workspace::model_theta(Variant v, uint64_t seed) const {
    return checkpoints() / (std::string("model_") + variant_name(v) + "_seed" + std::to_string(seed) + ".theta.dtrfc");
}
fs::path Workspace::model_head(Variant v, uint64_t seed) const {
    return checkpoints() / (std::string("model_") + variant_name(v) + "_seed" + std::to_string(seed) + ".head.dtrfc");
}
fs::path Workspace::pretrain_csv(uint64_t seed) const { return history() / ("pretrain_seed" + std::to_string(seed) + ".csv"); }
fs::path Workspace::adapt_csv(uint64_t seed) const { return history() / ("adapt_seed" + std::to_string(seed) + ".csv"); }
fs::path Workspace::head_csv(Variant v, uint64_t seed) const {
    return history() / (std::string("head_") + variant_name(v) + "_seed" + std::to_string(seed) + ".csv");
}
fs::path Workspace::results_csv(Variant v) const { return results() / (std::string("results_") + variant_name(v) + ".csv"); }
fs::path Workspace::summary_csv(Variant v) const {
    return results() / (std::string("results_") + variant_name(v) + "_summary.csv");
}
fs::path Workspace::ablation_csv() const { return results() / "ablation.csv"; }

namespace pipeline {

namespace {

const std::vector<std::string> kHeadColumns = {"phase", "iter", "lambda", "loss_bce", "loss_recon", "loss_total", "val_dice"};

int effective_jobs(const ExperimentConfig& cfg) {
    if (cfg.deterministic) return 1;
    if (cfg.jobs > 0) return cfg.jobs;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : int(hc);
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions are
// rethrown on the caller thread.
void run_jobs(int n, int jobs, const std::function<void(int)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<size_t>(n));
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    int workers = std::min(jobs, n);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    errors[size_t(i)] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

BenchmarkBundle load_dataset(const ExperimentConfig& cfg, const Workspace& ws) {
    if (cfg.data.use_folder()) {
        BenchmarkBundle b;
        std::optional<fs::path> masks;
        if (!cfg.data.masks_dir.empty()) masks = fs::path(cfg.data.masks_dir);
        FolderOptions opts;
        opts.patch_multiple = cfg.extractor.patch_size;
        std::vector<Sample> samples = load_image_folder(cfg.data.images_dir, masks, opts);
        for (auto& s : samples) {
            (s.has_label() ? b.source_labeled : b.source_unlabeled).push_back(std::move(s));
        }
        return b;
    }
    if (!manifest_exists(ws.dataset_root())) {
        throw MissingPrerequisiteError("dataset manifest not found at " + (ws.dataset_root() / "manifest").string() +
                                       "; run the generate stage first");
    }
    return load_benchmark(ws.dataset_root());
}

// The frozen extractor makes features a pure function of the sample, so one
// shared cache is precomputed serially and copied into worker jobs.
FeatureCache build_cache(const ExperimentConfig& cfg, const BenchmarkBundle& b) {
    FeatureCache cache(cfg.extractor);
    auto warm = [&](const std::vector<Sample>& pool) {
        for (const auto& s : pool) cache.get(s.id, s.image);
    };
    warm(b.source_labeled);
    warm(b.source_unlabeled);
    warm(b.source_test);
    warm(b.target_unlabeled);
    warm(b.target_test);
    return cache;
}

TrainContext make_context(const ExperimentConfig& cfg, bool concat_full, FeatureCache* cache) {
    TrainContext ctx;
    ctx.model = cfg.model_config(concat_full);
    int grid = cfg.data.source.image_size / cfg.extractor.patch_size;
    ctx.positions = make_position_grid(grid, grid);
    ctx.features = cache;
    return ctx;
}

void warn_hash_mismatch(const fs::path& ckpt, const std::string& expect) {
    try {
        CheckpointMeta meta = load_checkpoint_meta(ckpt);
        if (!meta.config_hash.empty() && meta.config_hash != expect) {
            std::fprintf(stderr, "warning: %s was produced under config hash %s (current %s)\n", ckpt.string().c_str(),
                         meta.config_hash.c_str(), expect.c_str());
        }
    } catch (const Error&) {
        // metadata is advisory
    }
}

ParameterSet require_checkpoint(const fs::path& path, const std::string& stage_hint, const std::string& hash) {
    if (!fs::exists(path)) {
        throw MissingPrerequisiteError("missing checkpoint " + path.string() + "; run " + stage_hint + " first");
    }
    warn_hash_mismatch(path, hash);
    return load_checkpoint(path);
}

void pretrain_one_seed(const ExperimentConfig& cfg, const Workspace& ws, const BenchmarkBundle& data,
                       FeatureCache cache, uint64_t seed) {
    TrainContext ctx = make_context(cfg, true, &cache);
    Rng seed_rng(seed);
    Rng init_rng = seed_rng.fork("theta_init");
    BranchState branch;
    branch.role = BranchRole::base;
    branch.params = init_theta(ctx.model, init_rng);
    branch.optimizer = AdamW(AdamConfig{cfg.round.base_lr, 0.9, 0.999, 1e-8, cfg.round.weight_decay});

    CsvWriter history(ws.pretrain_csv(seed), kHistoryColumns);
    Rng train_rng = seed_rng.fork("pretrain");
    pretrain_branch(branch, data.source_unlabeled, cfg.train.pretrain_steps, cfg.round, ctx, train_rng, &history, true);
    history.flush();

    fs::create_directories(ws.checkpoints());
    save_checkpoint(branch.params, ws.base_ckpt(seed));
    save_checkpoint_meta(CheckpointMeta{-1, "pretrain", seed, config_hash(cfg)}, ws.base_ckpt(seed));
}

void adapt_one_seed(const ExperimentConfig& cfg, const Workspace& ws, const BenchmarkBundle& data, FeatureCache cache,
                    uint64_t seed) {
    TrainContext ctx = make_context(cfg, true, &cache);
    ParameterSet pretrained = require_checkpoint(ws.base_ckpt(seed), "pretrain-base", config_hash(cfg));

    BranchState base{BranchRole::base, pretrained, AdamW(AdamConfig{cfg.round.base_lr, 0.9, 0.999, 1e-8, cfg.round.weight_decay}), 0};
    BranchState target{BranchRole::target, pretrained, AdamW(AdamConfig{cfg.round.target_lr, 0.9, 0.999, 1e-8, cfg.round.weight_decay}), 0};

    CsvWriter history(ws.adapt_csv(seed), kHistoryColumns);
    Rng rng = Rng(seed).fork("adapt");
    for (int r = 0; r < cfg.round.total_rounds; ++r) {
        run_adaptation_round(base, target, data.source_unlabeled, data.target_unlabeled, cfg.round, ctx, r, rng,
                             &history);
    }
    history.flush();

    save_checkpoint(base.params, ws.adapted_ckpt(seed)); // broadcast leaves both equal to the merged set
    save_checkpoint_meta(CheckpointMeta{cfg.round.total_rounds, "adapted", seed, config_hash(cfg)},
                         ws.adapted_ckpt(seed));
}

void train_head_one_seed(const ExperimentConfig& cfg, const Workspace& ws, const BenchmarkBundle& data,
                         FeatureCache cache, uint64_t seed) {
    VariantSpec vs = variant_spec(cfg.variant);
    TrainContext ctx = make_context(cfg, vs.concat_full, &cache);

    ParameterSet theta0;
    if (vs.use_adaptation) {
        theta0 = require_checkpoint(ws.adapted_ckpt(seed), "adapt", config_hash(cfg));
    } else if (vs.use_pretrained_init) {
        theta0 = require_checkpoint(ws.base_ckpt(seed), "pretrain-base", config_hash(cfg));
    } else {
        Rng init_rng = Rng(seed).fork("theta_init_scratch");
        theta0 = init_theta(ctx.model, init_rng);
    }

    HeadTrainConfig hc;
    hc.lr = cfg.train.head_lr;
    hc.lambda = cfg.train.lambda;
    hc.batch_size = cfg.train.batch_size;
    hc.eval_interval = cfg.train.eval_interval;
    hc.use_recon = vs.use_recon_loss;
    hc.early_stop = cfg.train.early_stop;

    CsvWriter history(ws.head_csv(cfg.variant, seed), kHeadColumns);
    Rng rng = Rng(seed).fork("head");
    HeadTrainResult res =
        train_dense_head(theta0, data.source_labeled, data.source_test, cfg.schedule, hc, ctx, rng, &history);
    history.flush();

    save_checkpoint(res.theta, ws.model_theta(cfg.variant, seed));
    save_checkpoint_meta(CheckpointMeta{cfg.round.total_rounds, "head", seed, config_hash(cfg)},
                         ws.model_theta(cfg.variant, seed));
    save_checkpoint(res.head, ws.model_head(cfg.variant, seed));
    save_checkpoint_meta(CheckpointMeta{cfg.round.total_rounds, "head", seed, config_hash(cfg)},
                         ws.model_head(cfg.variant, seed));
}

RunMetrics to_run_metrics(const EvalOutcome& ev) {
    RunMetrics rm;
    rm.dice = ev.mean_dice;
    rm.iou = ev.mean_iou;
    rm.hd = ev.mean_hd;
    return rm;
}

std::string opt_num(const std::optional<double>& v) { return v ? CsvWriter::num(*v) : std::string(); }

void write_eval_outputs(const ExperimentConfig& cfg, const Workspace& ws, const EvalSummary& summary,
                        const std::vector<std::vector<MetricReport>>& target_reports,
                        const std::vector<std::vector<MetricReport>>& source_reports) {
    // Per-class rows: dataset,variant,seed,class,dice,iou,hd
    CsvWriter rows(ws.results_csv(cfg.variant), {"dataset", "variant", "seed", "class", "dice", "iou", "hd"});
    rows.comment("config_hash=" + config_hash(cfg));
    auto emit = [&](const std::string& dataset, uint64_t seed, const std::vector<MetricReport>& reps) {
        // class means across the split's samples
        if (reps.empty()) return;
        size_t nc = reps[0].per_class.size();
        for (size_t c = 0; c < nc; ++c) {
            double sd = 0, si = 0, sh = 0;
            int nh = 0;
            for (const auto& r : reps) {
                sd += r.per_class[c].dice;
                si += r.per_class[c].iou;
                if (r.per_class[c].hd) {
                    sh += *r.per_class[c].hd;
                    ++nh;
                }
            }
            rows.row({dataset, variant_name(cfg.variant), std::to_string(seed),
                      std::to_string(reps[0].per_class[c].cls), CsvWriter::num(sd / double(reps.size())),
                      CsvWriter::num(si / double(reps.size())),
                      nh ? CsvWriter::num(sh / double(nh)) : std::string()});
        }
    };
    for (size_t i = 0; i < summary.per_seed.size(); ++i) {
        emit("target_test", summary.per_seed[i].seed, target_reports[i]);
        if (!source_reports[i].empty()) emit("source_test", summary.per_seed[i].seed, source_reports[i]);
    }
    rows.flush();

    CsvWriter sum(ws.summary_csv(cfg.variant),
                  {"dataset", "variant", "dice_mean", "dice_std", "iou_mean", "iou_std", "hd_mean", "hd_std", "n"});
    sum.comment("config_hash=" + config_hash(cfg));
    auto emit_sum = [&](const std::string& dataset, const AggregateReport& agg) {
        sum.row({dataset, variant_name(cfg.variant), CsvWriter::num(agg.dice.mean), CsvWriter::num(agg.dice.stddev),
                 CsvWriter::num(agg.iou.mean), CsvWriter::num(agg.iou.stddev),
                 agg.hd.n ? CsvWriter::num(agg.hd.mean) : std::string(),
                 agg.hd.n ? CsvWriter::num(agg.hd.stddev) : std::string(), std::to_string(agg.dice.n)});
    };
    emit_sum("target_test", summary.target);
    emit_sum("source_test", summary.source);
    sum.flush();

    // Loss curves for the first seed plus a metric bar chart.
    uint64_t seed0 = cfg.seeds.front();
    fs::path hcsv = ws.head_csv(cfg.variant, seed0);
    if (fs::exists(hcsv)) {
        CsvTable t = read_csv(hcsv);
        int ci = t.col("iter"), cb = t.col("loss_bce"), cr = t.col("loss_recon"), ct = t.col("loss_total");
        plot::Series sb{"bce", {}, {}}, sr{"recon", {}, {}}, st{"total", {}, {}};
        for (const auto& r : t.rows) {
            double it = std::stod(r[size_t(ci)]);
            if (!r[size_t(cb)].empty()) {
                sb.xs.push_back(it);
                sb.ys.push_back(std::stod(r[size_t(cb)]));
            }
            if (cr >= 0 && !r[size_t(cr)].empty()) {
                sr.xs.push_back(it);
                sr.ys.push_back(std::stod(r[size_t(cr)]));
            }
            if (!r[size_t(ct)].empty()) {
                st.xs.push_back(it);
                st.ys.push_back(std::stod(r[size_t(ct)]));
            }
        }
        std::vector<plot::Series> series{st, sb};
        if (!sr.xs.empty()) series.push_back(sr);
        plot::line_plot(ws.plots() / (std::string("loss_head_") + variant_name(cfg.variant) + ".png"), series,
                        std::string("head training loss (") + variant_name(cfg.variant) + ")", "iteration", "loss");
    }
    plot::BarGroup g1{"target", {summary.target.dice.mean}, {summary.target.dice.stddev}};
    plot::BarGroup g2{"source", {summary.source.dice.mean}, {summary.source.dice.stddev}};
    plot::bar_plot(ws.plots() / (std::string("dice_") + variant_name(cfg.variant) + ".png"), {"dice"}, {g1, g2},
                   std::string("mean DICE (") + variant_name(cfg.variant) + ")", "dice");
}

EvalSummary evaluate_impl(const ExperimentConfig& cfg, const Workspace& ws, const BenchmarkBundle& data,
                          FeatureCache& master_cache, bool identity_hook, bool write_outputs) {
    VariantSpec vs = variant_spec(cfg.variant);
    EvalSummary summary;
    summary.variant = cfg.variant;

    std::vector<std::vector<MetricReport>> target_reports(cfg.seeds.size());
    std::vector<std::vector<MetricReport>> source_reports(cfg.seeds.size());
    std::vector<RunMetrics> target_runs(cfg.seeds.size()), source_runs(cfg.seeds.size());

    std::vector<int> fg;
    for (int c = 1; c < cfg.num_classes; ++c) fg.push_back(c);
    if (fg.empty()) fg.push_back(0);

    if (identity_hook) {
        for (size_t i = 0; i < cfg.seeds.size(); ++i) {
            auto score_identity = [&](const std::vector<Sample>& pool, std::vector<MetricReport>& out) {
                double sd = 0, si = 0;
                for (const auto& s : pool) {
                    MetricReport rep = evaluate_mask_stacks(s.label, s.label, fg);
                    sd += rep.mean_dice;
                    si += rep.mean_iou;
                    out.push_back(std::move(rep));
                }
                RunMetrics rm;
                rm.dice = pool.empty() ? 1.0 : sd / double(pool.size());
                rm.iou = pool.empty() ? 1.0 : si / double(pool.size());
                rm.hd = 0.0;
                return rm;
            };
            target_runs[i] = score_identity(data.target_test, target_reports[i]);
            source_runs[i] = score_identity(data.source_test, source_reports[i]);
        }
    } else {
        run_jobs(int(cfg.seeds.size()), effective_jobs(cfg), [&](int i) {
            uint64_t seed = cfg.seeds[size_t(i)];
            FeatureCache cache = master_cache;
            TrainContext ctx = make_context(cfg, vs.concat_full, &cache);
            ParameterSet theta = require_checkpoint(ws.model_theta(cfg.variant, seed), "train-head", config_hash(cfg));
            ParameterSet head = require_checkpoint(ws.model_head(cfg.variant, seed), "train-head", config_hash(cfg));
            EvalOutcome tev = evaluate_on_samples(ctx.model, theta, head, data.target_test, cache, ctx.positions);
            target_reports[size_t(i)] = tev.per_sample;
            target_runs[size_t(i)] = to_run_metrics(tev);
            if (!data.source_test.empty()) {
                EvalOutcome sev = evaluate_on_samples(ctx.model, theta, head, data.source_test, cache, ctx.positions);
                source_reports[size_t(i)] = sev.per_sample;
                source_runs[size_t(i)] = to_run_metrics(sev);
            }
        });
    }

    for (size_t i = 0; i < cfg.seeds.size(); ++i) {
        summary.per_seed.push_back(SeedEval{cfg.seeds[i], target_runs[i], source_runs[i]});
    }
    summary.target = aggregate_runs(target_runs);
    summary.source = aggregate_runs(source_runs);
    if (write_outputs) write_eval_outputs(cfg, ws, summary, target_reports, source_reports);
    return summary;
}

} // namespace

void generate(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.data.use_folder()) throw ConfigError("generate applies to the synthetic benchmark, not folder datasets");
    Workspace ws(cfg);
    fs::create_directories(ws.out());
    write_resolved_config(cfg, ws.out());

    BenchmarkBundle expected;
    expected.source = cfg.data.source;
    expected.target = cfg.data.target;
    expected.sizes = cfg.data.sizes;

    if (manifest_exists(ws.dataset_root()) && !cfg.overwrite) {
        // Idempotent re-run: verify the manifest matches this config.
        regenerate_from_manifest(ws.dataset_root(), &expected);
        std::fprintf(stderr, "dataset at %s verified against manifest; skipping regeneration\n",
                     ws.dataset_root().string().c_str());
        return;
    }
    BenchmarkBundle bundle = make_shift_benchmark(cfg.data.source, cfg.data.target, cfg.data.sizes);
    write_benchmark(bundle, ws.dataset_root());
}

void pretrain_base(const ExperimentConfig& cfg) {
    cfg.validate();
    Workspace ws(cfg);
    write_resolved_config(cfg, ws.out());
    BenchmarkBundle data = load_dataset(cfg, ws);
    FeatureCache cache = build_cache(cfg, data);
    run_jobs(int(cfg.seeds.size()), effective_jobs(cfg),
             [&](int i) { pretrain_one_seed(cfg, ws, data, cache, cfg.seeds[size_t(i)]); });
}

void adapt(const ExperimentConfig& cfg) {
    cfg.validate();
    Workspace ws(cfg);
    write_resolved_config(cfg, ws.out());
    BenchmarkBundle data = load_dataset(cfg, ws);
    if (data.target_unlabeled.empty()) throw MissingPrerequisiteError("adapt requires an unlabeled target pool");
    FeatureCache cache = build_cache(cfg, data);
    run_jobs(int(cfg.seeds.size()), effective_jobs(cfg),
             [&](int i) { adapt_one_seed(cfg, ws, data, cache, cfg.seeds[size_t(i)]); });
}

void train_head(const ExperimentConfig& cfg) {
    cfg.validate();
    Workspace ws(cfg);
    write_resolved_config(cfg, ws.out());
    BenchmarkBundle data = load_dataset(cfg, ws);
    if (data.source_labeled.empty()) throw MissingPrerequisiteError("train-head requires a labeled pool");
    FeatureCache cache = build_cache(cfg, data);
    run_jobs(int(cfg.seeds.size()), effective_jobs(cfg),
             [&](int i) { train_head_one_seed(cfg, ws, data, cache, cfg.seeds[size_t(i)]); });
}

EvalSummary evaluate(const ExperimentConfig& cfg, bool identity_hook) {
    cfg.validate();
    Workspace ws(cfg);
    write_resolved_config(cfg, ws.out());
    BenchmarkBundle data = load_dataset(cfg, ws);
    if (data.target_test.empty()) {
        if (data.source_test.empty()) throw MissingPrerequisiteError("evaluate requires a labeled test split");
        data.target_test = data.source_test;
    }
    FeatureCache cache = build_cache(cfg, data);
    return evaluate_impl(cfg, ws, data, cache, identity_hook, true);
}

const pipeline::EvalSummary& AblateResult::variant(Variant v) const {
    for (const auto& s : variants) {
        if (s.variant == v) return s;
    }
    throw Error("ablate result missing variant");
}

AblateResult ablate(const ExperimentConfig& cfg) {
    cfg.validate();
    Workspace ws(cfg);
    write_resolved_config(cfg, ws.out());
    BenchmarkBundle data = load_dataset(cfg, ws);
    FeatureCache cache = build_cache(cfg, data);
    int jobs = effective_jobs(cfg);

    // Shared upstream stages: pretraining for every seed, adaptation for the
    // variants that use it.
    run_jobs(int(cfg.seeds.size()), jobs, [&](int i) {
        uint64_t seed = cfg.seeds[size_t(i)];
        if (!fs::exists(ws.base_ckpt(seed))) pretrain_one_seed(cfg, ws, data, cache, seed);
    });
    run_jobs(int(cfg.seeds.size()), jobs, [&](int i) {
        uint64_t seed = cfg.seeds[size_t(i)];
        if (!fs::exists(ws.adapted_ckpt(seed))) adapt_one_seed(cfg, ws, data, cache, seed);
    });

    const Variant order[4] = {Variant::full, Variant::no_sa, Variant::sa_no_adapt, Variant::no_concat};
    struct Job {
        Variant v;
        uint64_t seed;
    };
    std::vector<Job> jobs_list;
    for (Variant v : order) {
        for (uint64_t s : cfg.seeds) jobs_list.push_back({v, s});
    }
    run_jobs(int(jobs_list.size()), jobs, [&](int i) {
        ExperimentConfig vc = cfg;
        vc.variant = jobs_list[size_t(i)].v;
        vc.seeds = {jobs_list[size_t(i)].seed};
        if (!fs::exists(ws.model_theta(vc.variant, vc.seeds[0]))) {
            train_head_one_seed(vc, ws, data, cache, vc.seeds[0]);
        }
    });

    AblateResult res;
    for (Variant v : order) {
        ExperimentConfig vc = cfg;
        vc.variant = v;
        res.variants.push_back(evaluate_impl(vc, ws, data, cache, false, true));
    }

    const EvalSummary& full = res.variant(Variant::full);
    const EvalSummary& no_sa = res.variant(Variant::no_sa);
    const EvalSummary& sa_no_adapt = res.variant(Variant::sa_no_adapt);
    const EvalSummary& no_concat = res.variant(Variant::no_concat);
    res.adaptation_helps = full.target.dice.mean > sa_no_adapt.target.dice.mean;
    res.concat_helps = full.target.dice.mean >= no_concat.target.dice.mean;
    res.sa_helps = full.target.dice.mean >= no_sa.target.dice.mean;
    res.domain_gap_positive = sa_no_adapt.source.dice.mean > sa_no_adapt.target.dice.mean;

    // Table-shaped summary: variant x {DICE, HD} mean +/- std on target test.
    CsvWriter tab(ws.ablation_csv(), {"variant", "dice_mean", "dice_std", "hd_mean", "hd_std", "reference"});
    tab.comment("config_hash=" + config_hash(cfg));
    for (Variant v : order) {
        const EvalSummary& s = res.variant(v);
        tab.row({variant_name(v), CsvWriter::num(s.target.dice.mean), CsvWriter::num(s.target.dice.stddev),
                 s.target.hd.n ? CsvWriter::num(s.target.hd.mean) : std::string(),
                 s.target.hd.n ? CsvWriter::num(s.target.hd.stddev) : std::string(),
                 v == Variant::full ? "1" : "0"});
    }
    auto stamp = [&](const std::string& name, bool ok, double lhs, double rhs) {
        char line[160];
        std::snprintf(line, sizeof(line), "check %s: %s (%.6f vs %.6f)", name.c_str(), ok ? "PASS" : "FAIL", lhs, rhs);
        tab.comment(line);
    };
    stamp("adaptation_helps(full>sa_no_adapt)", res.adaptation_helps, full.target.dice.mean,
          sa_no_adapt.target.dice.mean);
    stamp("concat_helps(full>=no_concat)", res.concat_helps, full.target.dice.mean, no_concat.target.dice.mean);
    stamp("sa_helps(full>=no_sa)", res.sa_helps, full.target.dice.mean, no_sa.target.dice.mean);
    stamp("domain_gap(source>target)", res.domain_gap_positive, sa_no_adapt.source.dice.mean,
          sa_no_adapt.target.dice.mean);
    tab.flush();

    std::vector<plot::BarGroup> groups;
    for (Variant v : order) {
        const EvalSummary& s = res.variant(v);
        groups.push_back(plot::BarGroup{variant_name(v),
                                        {s.target.dice.mean, s.source.dice.mean},
                                        {s.target.dice.stddev, s.source.dice.stddev}});
    }
    plot::bar_plot(ws.plots() / "ablation_dice.png", {"target", "source"}, groups, "ablation: mean DICE", "dice");
    return res;
}

} // namespace pipeline

} // namespace dtrf
