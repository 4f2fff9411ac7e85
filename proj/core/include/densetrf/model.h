#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "densetrf/autodiff.h"
#include "densetrf/backbone.h"
#include "densetrf/head.h"
#include "densetrf/params.h"
#include "densetrf/slots.h"

namespace dtrf {

// Full network description. The mergeable subnetwork ("theta") is the
// adapter, the slot-attention module, and the slot decoder; the classifier
// head is kept in a separate set. The frozen extractor never has parameters.
struct ModelConfig {
    ExtractorSpec extractor;
    SlotConfig slots;
    int num_classes = 3;
    int pos_dim = kPosDim;
    bool concat_full = true; // false: classifier sees only the adapted features

    int feature_channels() const { return extractor.out_channels; }
    int combined_channels() const {
        return concat_full ? slots.adapted_dim + extractor.out_channels + slots.num_slots : slots.adapted_dim;
    }
};

ParameterSet init_theta(const ModelConfig& cfg, Rng& rng);
ParameterSet init_head(const ModelConfig& cfg, Rng& rng);

// Graph for one sample. Recon path is always built; the supervised path is
// built when `labels` is non-null (then `head` must be non-null too).
struct ForwardValues {
    ad::Value adapted;     // [N, C_a]
    ad::Value slots;       // [K, D_s]
    ad::Value attention;   // [K, N]
    ad::Value masks;       // [K, N]
    ad::Value recon;       // [N, C_r]
    ad::Value recon_loss;  // [1,1]
    ad::Value logits_img;  // [(Hi*Wi), C_cls], only with labels
    ad::Value bce;         // [1,1], only with labels
};

ForwardValues build_forward(ad::Graph& g, const FeatureMap& features, const ModelConfig& cfg,
                            const ParameterSet& theta, const ParameterSet* head, const PositionGrid& positions,
                            uint64_t slot_seed, const std::vector<BinaryMask>* labels);

// Inference: features -> dense class masks (argmax rule).
struct InferenceResult {
    DensePrediction prediction;
    SlotDecodeResult decode;
    std::vector<BinaryMask> masks; // argmax per class
};

InferenceResult run_inference(const FeatureMap& features, const ModelConfig& cfg, const ParameterSet& theta,
                              const ParameterSet& head, const PositionGrid& positions, uint64_t slot_seed);

// Caches frozen extractor outputs keyed by sample id (the backbone is frozen,
// so features never change within a run).
class FeatureCache {
  public:
    explicit FeatureCache(ExtractorSpec spec) : spec_(spec) {}

    const FeatureMap& get(const std::string& id, const ImageTensor& image);
    const ExtractorSpec& spec() const { return spec_; }
    void put(const std::string& id, FeatureMap fm);
    size_t size() const { return cache_.size(); }

  private:
    ExtractorSpec spec_;
    std::unordered_map<std::string, FeatureMap> cache_;
};

} // namespace dtrf
