#include "densetrf/model.h"

#include "densetrf/errors.h"

namespace dtrf {

ParameterSet init_theta(const ModelConfig& cfg, Rng& rng) {
    cfg.slots.validate();
    ParameterSet theta;
    Rng r1 = rng.fork("adapter");
    add_adapter_params(theta, cfg.feature_channels(), cfg.slots.adapted_dim, r1);
    Rng r2 = rng.fork("sa");
    add_slot_attention_params(theta, cfg.slots, r2);
    Rng r3 = rng.fork("dec");
    add_slot_decoder_params(theta, cfg.slots, cfg.feature_channels(), cfg.pos_dim, r3);
    return theta;
}

ParameterSet init_head(const ModelConfig& cfg, Rng& rng) {
    ParameterSet head;
    Rng r = rng.fork("head");
    add_head_params(head, cfg.combined_channels(), cfg.num_classes, r);
    return head;
}

ForwardValues build_forward(ad::Graph& g, const FeatureMap& features, const ModelConfig& cfg,
                            const ParameterSet& theta, const ParameterSet* head, const PositionGrid& positions,
                            uint64_t slot_seed, const std::vector<BinaryMask>* labels) {
    if (features.h != positions.h || features.w != positions.w) {
        throw ShapeError("build_forward: feature grid does not match position grid");
    }
    ForwardValues fv;
    ad::Value f = g.constant(features.as_tensor()); // [N, C_r]

    fv.adapted = headnet::adapter_forward(g, f, theta);
    ad::Value slots0 = slotnet::sample_slots(g, theta, cfg.slots, slot_seed);
    fv.slots = slotnet::attention_iterate(g, slots0, fv.adapted, theta, cfg.slots, &fv.attention);
    slotnet::DecodeValues dv = slotnet::decode(g, fv.slots, positions, theta, cfg.slots);
    fv.masks = dv.masks;
    fv.recon = dv.recon;
    fv.recon_loss = g.mean_sq_diff(dv.recon, f);

    if (labels) {
        if (!head) throw Error("build_forward: labels given without head parameters");
        if (int(labels->size()) != cfg.num_classes) {
            throw ShapeError("build_forward: label stack size != num_classes");
        }
        ad::Value z = cfg.concat_full ? g.concat_cols({fv.adapted, dv.recon, g.transpose(dv.masks)}) : fv.adapted;
        ad::Value logits = headnet::classifier_forward(g, z, *head);
        int hi = (*labels)[0].h, wi = (*labels)[0].w;
        if (hi % features.h != 0 || wi % features.w != 0) {
            throw ShapeError("build_forward: label resolution is not a multiple of the grid");
        }
        fv.logits_img = g.bilinear_upsample(logits, features.h, features.w, hi / features.h, wi / features.w);
        Tensor target({hi * wi, cfg.num_classes});
        for (int y = 0; y < hi; ++y) {
            for (int x = 0; x < wi; ++x) {
                for (int q = 0; q < cfg.num_classes; ++q) {
                    uint8_t v = (*labels)[size_t(q)].at(y, x);
                    if (v > 1) throw Error("build_forward: label values must be 0 or 1");
                    target[(int64_t(y) * wi + x) * cfg.num_classes + q] = double(v);
                }
            }
        }
        fv.bce = g.bce_with_logits(fv.logits_img, g.constant(std::move(target)));
    }
    return fv;
}

InferenceResult run_inference(const FeatureMap& features, const ModelConfig& cfg, const ParameterSet& theta,
                              const ParameterSet& head, const PositionGrid& positions, uint64_t slot_seed) {
    SlotState st = init_slots(cfg.slots, slot_seed, theta);
    AdaptedFeatureMap am = adapt(features, theta);
    st = slot_attention_iterate(st, am.data, cfg.slots, theta);
    InferenceResult res;
    res.decode = decode_slots(st, positions, cfg.slots, theta);

    CombinedRepresentation z;
    if (cfg.concat_full) {
        z = combine(am, res.decode);
    } else {
        z.h = am.h;
        z.w = am.w;
        z.c = am.c;
        z.adapted_channels = am.c;
        z.data = am.data;
    }
    res.prediction = classify(z, head, {features.src_h, features.src_w});
    res.masks = argmax_prediction(res.prediction);
    return res;
}

const FeatureMap& FeatureCache::get(const std::string& id, const ImageTensor& image) {
    auto it = cache_.find(id);
    if (it != cache_.end()) return it->second;
    auto [pos, inserted] = cache_.emplace(id, extract_features(image, spec_));
    return pos->second;
}

void FeatureCache::put(const std::string& id, FeatureMap fm) { cache_[id] = std::move(fm); }

} // namespace dtrf
