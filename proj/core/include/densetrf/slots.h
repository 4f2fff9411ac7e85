#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "densetrf/autodiff.h"
#include "densetrf/backbone.h"
#include "densetrf/params.h"
#include "densetrf/rng.h"
#include "densetrf/tensor.h"

namespace dtrf {

struct SlotConfig {
    int num_slots = 6;       // K
    int slot_dim = 64;       // D_s
    int num_iterations = 3;  // T
    int adapted_dim = 64;    // C_a
    int mlp_hidden = 128;

    void validate() const;
};

// K slot latents plus the attention map (softmax over the slot axis, before
// the per-slot location renormalization) from the last refinement iteration.
struct SlotState {
    Tensor slots;     // [K, D_s]
    Tensor attention; // [K, N]; empty before the first iterate call
};

struct SlotDecodeResult {
    Tensor per_slot_features; // {K, H, W, C}
    Tensor alpha_logits;      // {K, H, W}
    Tensor masks;             // {K, H, W}, softmax over slots per location
    Tensor reconstruction;    // {H, W, C}
    int num_slots() const { return per_slot_features.dim(0); }
};

// Fixed sinusoidal positional encodings over the patch grid, plus the
// decoder-side assignment permutation (identity unless permuted).
struct PositionGrid {
    int h = 0;
    int w = 0;
    Tensor embeddings;            // [N, D_p]
    std::vector<int> permutation; // bijection on 0..N-1

    int locations() const { return h * w; }
};

inline constexpr int kPosDim = 16;

PositionGrid make_position_grid(int h, int w, int pos_dim = kPosDim);

// Fresh uniform random bijection assigning positional embeddings to patch
// locations in the decoder input. Encoder-side features are never permuted.
PositionGrid permute_patch_order(const PositionGrid& positions, uint64_t seed);

// "sa.*" parameters: learned slot-init Gaussian, input/slot/mlp layer norms,
// q/k/v projections, gated recurrent update, residual MLP.
void add_slot_attention_params(ParameterSet& params, const SlotConfig& cfg, Rng& rng);
// "dec.*" parameters: shared spatial-broadcast MLP emitting C_r features plus
// one alpha logit per location.
void add_slot_decoder_params(ParameterSet& params, const SlotConfig& cfg, int feature_channels, int pos_dim, Rng& rng);

// Graph builders (single source of architecture truth; the plain wrappers
// below and the trainers both go through these).
namespace slotnet {

// Slot draw s_k = mu + exp(logsigma) * eps_k with trainable mu/logsigma.
ad::Value sample_slots(ad::Graph& g, const ParameterSet& params, const SlotConfig& cfg, uint64_t seed);

// T iterations of competitive attention; returns final slots, stores the
// final pre-renormalization attention in *attention_out.
ad::Value attention_iterate(ad::Graph& g, ad::Value slots0, ad::Value features_adapted, const ParameterSet& params,
                            const SlotConfig& cfg, ad::Value* attention_out);

struct DecodeValues {
    ad::Value per_slot; // [(K*N), C]
    ad::Value alpha;    // [K, N]
    ad::Value masks;    // [K, N]
    ad::Value recon;    // [N, C]
};

DecodeValues decode(ad::Graph& g, ad::Value slots, const PositionGrid& positions, const ParameterSet& params,
                    const SlotConfig& cfg);

} // namespace slotnet

// Plain-data operations ------------------------------------------------------

SlotState init_slots(const SlotConfig& cfg, uint64_t seed, const ParameterSet& params);

// features_adapted: [N, C_a] (rank-2) or {H, W, C_a} (rank-3) tensor.
SlotState slot_attention_iterate(const SlotState& state, const Tensor& features_adapted, const SlotConfig& cfg,
                                 const ParameterSet& params);

SlotDecodeResult decode_slots(const SlotState& state, const PositionGrid& positions, const SlotConfig& cfg,
                              const ParameterSet& params);

// Mean squared error over all H*W*C entries.
double reconstruction_loss(const FeatureMap& target, const SlotDecodeResult& result);

// One grayscale PNG per slot, values round(255 * m_k), named
// "<sample_id>_slot_{k:02d}.png".
void export_slot_masks(const SlotDecodeResult& result, const std::filesystem::path& dir, const std::string& sample_id);

} // namespace dtrf
