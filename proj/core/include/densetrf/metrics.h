#pragma once

#include <optional>
#include <vector>

#include "densetrf/tensor.h"

namespace dtrf {

struct BinaryMask {
    int h = 0;
    int w = 0;
    std::vector<uint8_t> grid; // 0/1, row-major

    BinaryMask() = default;
    BinaryMask(int h_, int w_) : h(h_), w(w_), grid(size_t(h_) * w_, 0) {}

    uint8_t& at(int y, int x) { return grid[size_t(y) * w + x]; }
    uint8_t at(int y, int x) const { return grid[size_t(y) * w + x]; }
    int64_t count() const;
};

// Region overlap. Both-empty pairs score 1.0; exactly one empty scores 0.0.
double dice(const BinaryMask& pred, const BinaryMask& gt);
double iou(const BinaryMask& pred, const BinaryMask& gt);

// Symmetric Hausdorff distance over foreground pixels, Euclidean, in pixels.
// Full-mask (100th percentile). nullopt when either mask is empty.
std::optional<double> hausdorff(const BinaryMask& pred, const BinaryMask& gt);

struct ClassMetrics {
    int cls = 0;
    double dice = 0.0;
    double iou = 0.0;
    std::optional<double> hd;
};

struct MetricReport {
    std::vector<ClassMetrics> per_class;
    double mean_dice = 0.0;
    double mean_iou = 0.0;
    std::optional<double> mean_hd; // over classes where HD is defined
    int hd_undefined_count = 0;
};

// Per-class metrics plus unweighted class means. Classes listed in `classes`
// index into the stacks (use this to exclude background).
MetricReport evaluate_mask_stacks(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt,
                                  const std::vector<int>& classes);

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0; // sample std (n-1); 0 when n == 1
    int n = 0;
};

MeanStd mean_std(const std::vector<double>& xs);

struct RunMetrics {
    double dice = 0.0;
    double iou = 0.0;
    std::optional<double> hd;
};

struct AggregateReport {
    MeanStd dice;
    MeanStd iou;
    MeanStd hd;            // over runs with defined HD
    int hd_excluded = 0;   // runs dropped from the HD aggregate
};

// Mean +/- sample standard deviation across seeds.
AggregateReport aggregate_runs(const std::vector<RunMetrics>& runs);

} // namespace dtrf
