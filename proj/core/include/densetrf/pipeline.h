#pragma once

#include <filesystem>

#include "densetrf/experiment.h"
#include "densetrf/metrics.h"

namespace dtrf {

// Output-directory layout shared by all stages.
class Workspace {
  public:
    explicit Workspace(const ExperimentConfig& cfg);

    std::filesystem::path out() const { return out_; }
    std::filesystem::path dataset_root() const { return dataset_; }
    std::filesystem::path checkpoints() const { return out_ / "checkpoints"; }
    std::filesystem::path history() const { return out_ / "history"; }
    std::filesystem::path results() const { return out_ / "results"; }
    std::filesystem::path plots() const { return out_ / "plots"; }
    std::filesystem::path exports() const { return out_ / "exports"; }

    std::filesystem::path base_ckpt(uint64_t seed) const;
    std::filesystem::path adapted_ckpt(uint64_t seed) const;
    std::filesystem::path model_theta(Variant v, uint64_t seed) const;
    std::filesystem::path model_head(Variant v, uint64_t seed) const;
    std::filesystem::path pretrain_csv(uint64_t seed) const;
    std::filesystem::path adapt_csv(uint64_t seed) const;
    std::filesystem::path head_csv(Variant v, uint64_t seed) const;
    std::filesystem::path results_csv(Variant v) const;
    std::filesystem::path summary_csv(Variant v) const;
    std::filesystem::path ablation_csv() const;

  private:
    std::filesystem::path out_;
    std::filesystem::path dataset_;
};

namespace pipeline {

void generate(const ExperimentConfig& cfg);
void pretrain_base(const ExperimentConfig& cfg);
void adapt(const ExperimentConfig& cfg);
void train_head(const ExperimentConfig& cfg); // trains cfg.variant

struct SeedEval {
    uint64_t seed = 0;
    RunMetrics target;           // class-mean metrics on the target test split
    RunMetrics source;           // same on the held-out source test split
};

struct EvalSummary {
    Variant variant = Variant::full;
    std::vector<SeedEval> per_seed;
    AggregateReport target;
    AggregateReport source;
};

// identity_hook: score the labels against themselves instead of running the
// model (test hook; produces DICE 1.0 rows without needing checkpoints).
EvalSummary evaluate(const ExperimentConfig& cfg, bool identity_hook = false);

struct AblateResult {
    std::vector<EvalSummary> variants; // order: full, no_sa, sa_no_adapt, no_concat
    bool adaptation_helps = false;     // full > sa_no_adapt, mean target DICE
    bool concat_helps = false;         // full >= no_concat
    bool sa_helps = false;             // full >= no_sa
    bool domain_gap_positive = false;  // sa_no_adapt: source test > target test

    const EvalSummary& variant(Variant v) const;
};

AblateResult ablate(const ExperimentConfig& cfg);

} // namespace pipeline

} // namespace dtrf
