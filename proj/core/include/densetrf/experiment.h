#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "densetrf/adaptation.h"

namespace dtrf {

struct TrainConfig {
    int batch_size = 8;
    int pretrain_steps = 400;
    double head_lr = 1e-4; // head stage: no weight decay
    double lambda = 0.1;
    int eval_interval = 100;
    bool early_stop = false; // monitored, never halts by default
};

struct DataConfig {
    std::string root;          // dataset location; relative paths resolve under output_dir
    DomainSpec source;
    DomainSpec target;
    BenchmarkSizes sizes;
    std::string images_dir;    // optional folder ingestion instead of the synthetic benchmark
    std::string masks_dir;

    bool use_folder() const { return !images_dir.empty(); }
};

struct ExperimentConfig {
    ExtractorSpec extractor;   // P=8, C_r=32 desk-scale defaults
    SlotConfig slots;          // K=6, D_s=64, T=3, C_a=64, hidden 128
    RoundConfig round;         // 10 rounds x 200 steps
    PhaseSchedule schedule;    // 1000 / 3000 / 1000
    TrainConfig train;
    DataConfig data;
    int num_classes = 3;
    std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
    Variant variant = Variant::full;
    std::string output_dir = "densetrf_out";
    int jobs = 0;              // 0 = hardware concurrency; deterministic forces 1
    bool deterministic = false;
    bool overwrite = false;

    ModelConfig model_config(bool concat_full) const;
    void validate() const;
};

ExperimentConfig default_config();

// Structured-text (JSON) config with full defaulting: omitted fields take the
// documented defaults; the resolved config is echoed to the output directory.
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig config_from_json_file(const std::filesystem::path& path);

std::string resolved_config_json(const ExperimentConfig& cfg);

// Hash over the science-relevant fields (not output_dir/jobs/flags); embedded
// in checkpoints, CSVs, and metadata for stage-chaining checks.
std::string config_hash(const ExperimentConfig& cfg);

void write_resolved_config(const ExperimentConfig& cfg, const std::filesystem::path& dir);

} // namespace dtrf
