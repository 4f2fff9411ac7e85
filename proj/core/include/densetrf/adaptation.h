#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "densetrf/csv.h"
#include "densetrf/metrics.h"
#include "densetrf/model.h"
#include "densetrf/optim.h"
#include "densetrf/params.h"
#include "densetrf/synthdata.h"

namespace dtrf {

enum class BranchRole { base, target };

struct BranchState {
    BranchRole role = BranchRole::base;
    ParameterSet params;
    AdamW optimizer;
    int64_t steps_done = 0;
};

struct RoundConfig {
    int steps_per_round = 200;
    int total_rounds = 10;
    double base_lr = 4e-4;
    double target_lr = 1e-4;
    double weight_decay = 1e-5;
    double merge_weight_base = 0.5; // Eq-weighting is equal by default
    int batch_size = 8;
};

// Three-phase supervised schedule: head only, full joint, recon term removed.
struct PhaseSchedule {
    int phase1_iters = 1000;
    int phase2_iters = 3000;
    int phase3_iters = 1000;

    int total() const { return phase1_iters + phase2_iters + phase3_iters; }
    int phase_at(int iter) const; // 1, 2 or 3
};

// Elementwise weighted average of two merge-compatible sets.
ParameterSet merge_parameters(const ParameterSet& base, const ParameterSet& target, double weight_base = 0.5);

// Replaces both branches' parameters with deep copies of `merged` and resets
// their optimizer moments (averaged weights invalidate stale moments).
void broadcast(const ParameterSet& merged, BranchState& base, BranchState& target);

struct TrainContext {
    ModelConfig model;
    PositionGrid positions; // identity permutation
    FeatureCache* features = nullptr;
};

struct RoundReport {
    int round = 0;
    double drift_start = 0.0;    // ||theta_base - theta_target|| right after broadcast
    double drift_premerge = 0.0; // before merging
    double base_loss_first = 0.0, base_loss_last = 0.0;
    double target_loss_first = 0.0, target_loss_last = 0.0;
};

// History CSV schema shared by pretraining and adaptation stages.
inline const std::vector<std::string> kHistoryColumns = {"round", "step",       "branch",    "loss_recon",
                                                         "loss_bce", "loss_total", "param_drift"};

// One adaptation round: base branch trains on the multi-domain pool with
// patch-order permutation and an alternating (round-robin) domain schedule;
// the target branch trains on unlabeled target images without permutation.
// Afterwards the branches are merged and broadcast.
RoundReport run_adaptation_round(BranchState& base, BranchState& target, const std::vector<Sample>& base_pool,
                                 const std::vector<Sample>& target_pool, const RoundConfig& cfg, TrainContext& ctx,
                                 int round_index, Rng& rng, CsvWriter* history);

// Reconstruction-only pretraining of a single branch (base recipe).
double pretrain_branch(BranchState& branch, const std::vector<Sample>& pool, int steps, const RoundConfig& cfg,
                       TrainContext& ctx, Rng& rng, CsvWriter* history, bool permute = true);

struct HeadTrainConfig {
    double lr = 1e-4;       // no weight decay on the head stage
    double lambda = 0.1;
    int batch_size = 8;
    int eval_interval = 100;
    bool use_recon = true;  // false for the no_sa variant
    bool early_stop = false; // monitored only; never halts by default
    int early_stop_patience = 8;
};

struct HeadTrainResult {
    ParameterSet theta;
    ParameterSet head;
    std::vector<double> val_dice_curve; // one entry per evaluation
    std::vector<int> val_dice_iters;
    double best_val_dice = 0.0;
    int iters_run = 0;
};

// Supervised dense-head training. Phase 1 updates only the classifier head;
// phases 2-3 update all non-backbone parameters; phase 3 drops the
// reconstruction term. `on_iter` (optional) observes parameters per iteration
// index before the update at that iteration.
HeadTrainResult train_dense_head(
    const ParameterSet& theta_init, const std::vector<Sample>& labeled_pool, const std::vector<Sample>& val_pool,
    const PhaseSchedule& schedule, const HeadTrainConfig& cfg, TrainContext& ctx, Rng& rng, CsvWriter* history,
    const std::function<void(int, const ParameterSet&, const ParameterSet&)>& on_iter = nullptr);

// Mean foreground DICE (argmax rule) of a model over labeled samples.
struct EvalOutcome {
    std::vector<MetricReport> per_sample;
    double mean_dice = 0.0;
    double mean_iou = 0.0;
    std::optional<double> mean_hd;
    int hd_undefined = 0;
};

EvalOutcome evaluate_on_samples(const ModelConfig& cfg, const ParameterSet& theta, const ParameterSet& head,
                                const std::vector<Sample>& samples, FeatureCache& cache, const PositionGrid& positions);

enum class Variant { full, no_sa, sa_no_adapt, no_concat };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& s);

struct VariantSpec {
    bool use_recon_loss = true;
    bool use_pretrained_init = true;
    bool use_adaptation = true;
    bool concat_full = true;
};

// Ablation wiring: no_sa trains without the reconstruction loss and without a
// pretrained slot-attention init; sa_no_adapt keeps the pretrained init but
// skips adaptation; no_concat feeds only the adapted features to the head.
VariantSpec variant_spec(Variant v);

} // namespace dtrf
