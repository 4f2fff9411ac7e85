#include "densetrf/adaptation.h"

#include <algorithm>
#include <cmath>

#include "densetrf/errors.h"

namespace dtrf {

namespace {

// Round-robin over per-domain queues ("alternating batch schedule"): batch t
// draws entirely from domain t mod M.
class DomainScheduler {
  public:
    explicit DomainScheduler(const std::vector<Sample>& pool) {
        for (const auto& s : pool) {
            auto it = std::find_if(queues_.begin(), queues_.end(), [&](const auto& q) { return q.first == s.domain; });
            if (it == queues_.end()) {
                queues_.emplace_back(s.domain, std::vector<const Sample*>{&s});
            } else {
                it->second.push_back(&s);
            }
        }
        if (queues_.empty()) throw DataError("empty sample pool");
    }

    std::vector<const Sample*> next_batch(int batch_size, Rng& rng) {
        const auto& q = queues_[size_t(turn_ % queues_.size())].second;
        ++turn_;
        std::vector<const Sample*> batch(static_cast<size_t>(batch_size));
        for (auto& s : batch) s = q[size_t(rng.uniform_int(int(q.size())))];
        return batch;
    }

  private:
    std::vector<std::pair<std::string, std::vector<const Sample*>>> queues_;
    int64_t turn_ = 0;
};

struct StepLosses {
    double recon = 0.0;
    double bce = 0.0;
    double total = 0.0;
};

// One gradient step on a batch. `head`/`labels` selects the supervised path;
// permuted != nullptr substitutes the decoder-side position permutation.
StepLosses batch_step(ParameterSet& params, AdamW& opt, const std::vector<const Sample*>& batch, TrainContext& ctx,
                      const PositionGrid* permuted, bool supervised, double lambda, bool use_recon, Rng& rng,
                      const std::vector<std::string>* trainable) {
    ad::Graph g;
    const PositionGrid& pos = permuted ? *permuted : ctx.positions;
    ad::Value recon_sum{}, bce_sum{};
    for (const Sample* s : batch) {
        const FeatureMap& fm = ctx.features->get(s->id, s->image);
        uint64_t slot_seed = rng.next_u64();
        ForwardValues fv = build_forward(g, fm, ctx.model, params, supervised ? &params : nullptr, pos, slot_seed,
                                         supervised ? &s->label : nullptr);
        recon_sum = recon_sum.valid() ? g.add(recon_sum, fv.recon_loss) : fv.recon_loss;
        if (supervised) bce_sum = bce_sum.valid() ? g.add(bce_sum, fv.bce) : fv.bce;
    }
    double inv_b = 1.0 / double(batch.size());
    ad::Value recon_mean = g.scale(recon_sum, inv_b);
    StepLosses out;
    out.recon = g.scalar(recon_mean);
    ad::Value loss{};
    if (supervised) {
        ad::Value bce_mean = g.scale(bce_sum, inv_b);
        out.bce = g.scalar(bce_mean);
        loss = (use_recon && lambda != 0.0) ? g.add(bce_mean, g.scale(recon_mean, lambda)) : bce_mean;
    } else {
        loss = recon_mean;
    }
    out.total = g.scalar(loss);
    if (!std::isfinite(out.total)) throw NonFiniteError("non-finite training loss");
    g.backward(loss);
    opt.step(params, [&](const std::string& n) { return g.param_grad(n); }, trainable);
    return out;
}

} // namespace

int PhaseSchedule::phase_at(int iter) const {
    if (iter < phase1_iters) return 1;
    if (iter < phase1_iters + phase2_iters) return 2;
    return 3;
}

ParameterSet merge_parameters(const ParameterSet& base, const ParameterSet& target, double weight_base) {
    std::string why;
    if (!base.compatible_with(target, &why)) throw IncompatibleParamsError("merge_parameters: " + why);
    ParameterSet out;
    for (const auto& name : base.names()) {
        const Tensor& a = base.at(name);
        const Tensor& b = target.at(name);
        Tensor m(a.shape());
        for (int64_t i = 0; i < a.size(); ++i) m[i] = weight_base * a[i] + (1.0 - weight_base) * b[i];
        out.add(name, std::move(m));
    }
    return out;
}

void broadcast(const ParameterSet& merged, BranchState& base, BranchState& target) {
    std::string why;
    if (!merged.compatible_with(base.params, &why) || !merged.compatible_with(target.params, &why)) {
        throw IncompatibleParamsError("broadcast: " + why);
    }
    for (const auto& name : merged.names()) {
        base.params.at(name) = merged.at(name);
        target.params.at(name) = merged.at(name);
    }
    base.optimizer.reset();
    target.optimizer.reset();
}

RoundReport run_adaptation_round(BranchState& base, BranchState& target, const std::vector<Sample>& base_pool,
                                 const std::vector<Sample>& target_pool, const RoundConfig& cfg, TrainContext& ctx,
                                 int round_index, Rng& rng, CsvWriter* history) {
    if (base_pool.empty() || target_pool.empty()) throw DataError("adaptation pools must be non-empty");
    RoundReport rep;
    rep.round = round_index;
    rep.drift_start = param_distance(base.params, target.params);
    if (history) {
        history->row({CsvWriter::num(int64_t(round_index)), "0", "sync", "", "", "", CsvWriter::num(rep.drift_start)});
    }

    base.optimizer.config().lr = cfg.base_lr;
    base.optimizer.config().weight_decay = cfg.weight_decay;
    target.optimizer.config().lr = cfg.target_lr;
    target.optimizer.config().weight_decay = cfg.weight_decay;

    DomainScheduler base_sched(base_pool);
    DomainScheduler target_sched(target_pool);
    Rng base_rng = rng.fork("base").fork(uint64_t(round_index));
    Rng target_rng = rng.fork("target").fork(uint64_t(round_index));

    for (int s = 0; s < cfg.steps_per_round; ++s) {
        auto batch = base_sched.next_batch(cfg.batch_size, base_rng);
        PositionGrid permuted = permute_patch_order(ctx.positions, base_rng.next_u64());
        StepLosses l = batch_step(base.params, base.optimizer, batch, ctx, &permuted, false, 0.0, true, base_rng, nullptr);
        ++base.steps_done;
        if (s == 0) rep.base_loss_first = l.recon;
        rep.base_loss_last = l.recon;
        if (history) {
            history->row({CsvWriter::num(int64_t(round_index)), CsvWriter::num(int64_t(s)), "base",
                          CsvWriter::num(l.recon), "", CsvWriter::num(l.total), ""});
        }
    }
    for (int s = 0; s < cfg.steps_per_round; ++s) {
        auto batch = target_sched.next_batch(cfg.batch_size, target_rng);
        StepLosses l =
            batch_step(target.params, target.optimizer, batch, ctx, nullptr, false, 0.0, true, target_rng, nullptr);
        ++target.steps_done;
        if (s == 0) rep.target_loss_first = l.recon;
        rep.target_loss_last = l.recon;
        if (history) {
            history->row({CsvWriter::num(int64_t(round_index)), CsvWriter::num(int64_t(s)), "target",
                          CsvWriter::num(l.recon), "", CsvWriter::num(l.total), ""});
        }
    }

    rep.drift_premerge = param_distance(base.params, target.params);
    if (history) {
        history->row({CsvWriter::num(int64_t(round_index)), CsvWriter::num(int64_t(cfg.steps_per_round)), "merge", "",
                      "", "", CsvWriter::num(rep.drift_premerge)});
    }
    ParameterSet merged = merge_parameters(base.params, target.params, cfg.merge_weight_base);
    broadcast(merged, base, target);
    return rep;
}

double pretrain_branch(BranchState& branch, const std::vector<Sample>& pool, int steps, const RoundConfig& cfg,
                       TrainContext& ctx, Rng& rng, CsvWriter* history, bool permute) {
    if (pool.empty()) throw DataError("pretraining pool must be non-empty");
    branch.optimizer.config().lr = cfg.base_lr;
    branch.optimizer.config().weight_decay = cfg.weight_decay;
    DomainScheduler sched(pool);
    double last = 0.0;
    for (int s = 0; s < steps; ++s) {
        auto batch = sched.next_batch(cfg.batch_size, rng);
        PositionGrid permuted = permute ? permute_patch_order(ctx.positions, rng.next_u64()) : ctx.positions;
        StepLosses l = batch_step(branch.params, branch.optimizer, batch, ctx, permute ? &permuted : nullptr, false,
                                  0.0, true, rng, nullptr);
        ++branch.steps_done;
        last = l.recon;
        if (history) {
            history->row({"0", CsvWriter::num(int64_t(s)), "base", CsvWriter::num(l.recon), "", CsvWriter::num(l.total),
                          ""});
        }
    }
    return last;
}

HeadTrainResult train_dense_head(const ParameterSet& theta_init, const std::vector<Sample>& labeled_pool,
                                 const std::vector<Sample>& val_pool, const PhaseSchedule& schedule,
                                 const HeadTrainConfig& cfg, TrainContext& ctx, Rng& rng, CsvWriter* history,
                                 const std::function<void(int, const ParameterSet&, const ParameterSet&)>& on_iter) {
    if (labeled_pool.empty()) throw DataError("labeled pool must be non-empty");
    for (const auto& s : labeled_pool) {
        if (!s.has_label()) throw DataError("unlabeled sample in the labeled pool: " + s.id);
        if (int(s.label.size()) != ctx.model.num_classes) {
            throw ShapeError("label stack size mismatch for sample " + s.id);
        }
    }

    // One parameter set holding the mergeable subnetwork plus the head; the
    // name prefixes keep the two separable.
    ParameterSet params;
    for (const auto& n : theta_init.names()) params.add(n, theta_init.at(n));
    Rng init_rng = rng.fork("head_init");
    ParameterSet head0 = init_head(ctx.model, init_rng);
    for (const auto& n : head0.names()) params.add(n, head0.at(n));

    std::vector<std::string> head_names = head0.names();
    std::vector<std::string> all_names = params.names();

    AdamW opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, 0.0});
    DomainScheduler sched(labeled_pool);
    Rng train_rng = rng.fork("head_train");

    HeadTrainResult res;
    auto eval_now = [&](int iter) {
        if (val_pool.empty()) return;
        ParameterSet theta_now, head_now;
        for (const auto& n : theta_init.names()) theta_now.add(n, params.at(n));
        for (const auto& n : head_names) head_now.add(n, params.at(n));
        EvalOutcome ev = evaluate_on_samples(ctx.model, theta_now, head_now, val_pool, *ctx.features, ctx.positions);
        res.val_dice_curve.push_back(ev.mean_dice);
        res.val_dice_iters.push_back(iter);
        res.best_val_dice = std::max(res.best_val_dice, ev.mean_dice);
    };

    int total = schedule.total();
    int since_best = 0;
    double best_seen = -1.0;
    for (int iter = 0; iter < total; ++iter) {
        if (on_iter) on_iter(iter, params, params);
        int phase = schedule.phase_at(iter);
        double lambda = (phase == 3 || !cfg.use_recon) ? 0.0 : cfg.lambda;
        const std::vector<std::string>* trainable = (phase == 1) ? &head_names : &all_names;

        auto batch = sched.next_batch(cfg.batch_size, train_rng);
        StepLosses l = batch_step(params, opt, batch, ctx, nullptr, true, lambda, cfg.use_recon, train_rng, trainable);

        bool eval_iter = (cfg.eval_interval > 0 && (iter + 1) % cfg.eval_interval == 0) || iter + 1 == total;
        if (eval_iter) eval_now(iter + 1);
        if (history) {
            history->row({CsvWriter::num(int64_t(phase)), CsvWriter::num(int64_t(iter)), CsvWriter::num(lambda),
                          CsvWriter::num(l.bce), cfg.use_recon ? CsvWriter::num(l.recon) : std::string(),
                          CsvWriter::num(l.total),
                          eval_iter && !res.val_dice_curve.empty() ? CsvWriter::num(res.val_dice_curve.back())
                                                                   : std::string()});
        }
        res.iters_run = iter + 1;

        if (eval_iter && !res.val_dice_curve.empty()) {
            if (res.val_dice_curve.back() > best_seen + 1e-9) {
                best_seen = res.val_dice_curve.back();
                since_best = 0;
            } else {
                ++since_best;
            }
            // Early stopping is monitored but disabled by default.
            if (cfg.early_stop && since_best >= cfg.early_stop_patience) break;
        }
    }
    if (on_iter) on_iter(res.iters_run, params, params);

    for (const auto& n : theta_init.names()) res.theta.add(n, params.at(n));
    for (const auto& n : head_names) res.head.add(n, params.at(n));
    return res;
}

EvalOutcome evaluate_on_samples(const ModelConfig& cfg, const ParameterSet& theta, const ParameterSet& head,
                                const std::vector<Sample>& samples, FeatureCache& cache,
                                const PositionGrid& positions) {
    if (samples.empty()) throw DataError("evaluate_on_samples: empty sample list");
    std::vector<int> fg_classes;
    for (int c = 1; c < cfg.num_classes; ++c) fg_classes.push_back(c);
    if (fg_classes.empty()) fg_classes.push_back(0);

    EvalOutcome out;
    double sd = 0, si = 0, sh = 0;
    int nh = 0;
    for (const auto& s : samples) {
        if (!s.has_label()) throw DataError("evaluate_on_samples: sample without label: " + s.id);
        const FeatureMap& fm = cache.get(s.id, s.image);
        InferenceResult inf = run_inference(fm, cfg, theta, head, positions, Rng::hash_str(s.id));
        MetricReport rep = evaluate_mask_stacks(inf.masks, s.label, fg_classes);
        sd += rep.mean_dice;
        si += rep.mean_iou;
        if (rep.mean_hd) {
            sh += *rep.mean_hd;
            ++nh;
        } else {
            ++out.hd_undefined;
        }
        out.per_sample.push_back(std::move(rep));
    }
    out.mean_dice = sd / double(samples.size());
    out.mean_iou = si / double(samples.size());
    if (nh > 0) out.mean_hd = sh / double(nh);
    return out;
}

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_sa: return "no_sa";
        case Variant::sa_no_adapt: return "sa_no_adapt";
        case Variant::no_concat: return "no_concat";
    }
    return "?";
}

Variant variant_from_name(const std::string& s) {
    if (s == "full") return Variant::full;
    if (s == "no_sa") return Variant::no_sa;
    if (s == "sa_no_adapt") return Variant::sa_no_adapt;
    if (s == "no_concat") return Variant::no_concat;
    throw ConfigError("unknown variant: " + s);
}

VariantSpec variant_spec(Variant v) {
    switch (v) {
        case Variant::full: return {true, true, true, true};
        case Variant::no_sa: return {false, false, false, true};
        case Variant::sa_no_adapt: return {true, true, false, true};
        case Variant::no_concat: return {true, true, true, false};
    }
    throw ConfigError("unknown variant");
}

} // namespace dtrf
