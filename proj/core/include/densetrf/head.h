#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "densetrf/autodiff.h"
#include "densetrf/backbone.h"
#include "densetrf/metrics.h"
#include "densetrf/params.h"
#include "densetrf/slots.h"

namespace dtrf {

// F_a = g(F): per-position adapter output.
struct AdaptedFeatureMap {
    int h = 0, w = 0, c = 0;
    Tensor data; // {H, W, C_a}
};

// z_ij = [f_ada | f_recon | m_1..m_K] per spatial location.
struct CombinedRepresentation {
    int h = 0, w = 0, c = 0;
    int adapted_channels = 0, feature_channels = 0, mask_channels = 0;
    Tensor data; // {H, W, C_a + C_r + K}
};

struct DensePrediction {
    int h = 0, w = 0;       // input resolution
    int class_count = 0;
    Tensor logits;          // {Hi, Wi, C_cls}
};

struct LossBreakdown {
    double bce = 0.0;
    double recon = 0.0;
    double lambda = 0.0;
    double total = 0.0; // bce + lambda * recon, exactly
};

inline constexpr double kDefaultLambda = 0.1;
inline constexpr int kHeadHidden = 128;
inline constexpr int kAdapterHidden = 128;

// "adapter.*": 2-layer per-position MLP from C_r to C_a (part of the
// mergeable subnetwork). "head.*": 2-layer per-position classifier.
void add_adapter_params(ParameterSet& params, int in_channels, int out_channels, Rng& rng, int hidden = kAdapterHidden);
void add_head_params(ParameterSet& params, int in_channels, int num_classes, Rng& rng, int hidden = kHeadHidden);

namespace headnet {

ad::Value adapter_forward(ad::Graph& g, ad::Value features, const ParameterSet& params);
ad::Value classifier_forward(ad::Graph& g, ad::Value combined, const ParameterSet& params);

} // namespace headnet

AdaptedFeatureMap adapt(const FeatureMap& features, const ParameterSet& params);

CombinedRepresentation combine(const AdaptedFeatureMap& adapted, const SlotDecodeResult& decode);

// Per-position classification at grid resolution, then bilinear upsampling
// (align_corners=false) to out_shape = (Hi, Wi).
DensePrediction classify(const CombinedRepresentation& combined, const ParameterSet& params,
                         std::pair<int, int> out_shape);

// label: per-class binary mask stack of size C_cls at input resolution.
LossBreakdown joint_loss(const DensePrediction& pred, const std::vector<BinaryMask>& label, const FeatureMap& target,
                         const SlotDecodeResult& decode, double lambda = kDefaultLambda);

// Evaluation rule: sigmoid(logit) > 0.5 per class, or argmax when exclusive.
std::vector<BinaryMask> threshold_prediction(const DensePrediction& pred);
std::vector<BinaryMask> argmax_prediction(const DensePrediction& pred);

// Prediction export: thresholded/argmax PNG plus a float32 logits dump in the
// feature-file layout with magic "DTRF-P" (patch_size field = 1).
void export_prediction(const DensePrediction& pred, const std::filesystem::path& dir, const std::string& sample_id);
DensePrediction import_prediction(const std::filesystem::path& path);

} // namespace dtrf
