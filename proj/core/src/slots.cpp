#include "densetrf/slots.h"

#include <cmath>
#include <numeric>

#include "densetrf/errors.h"
#include "densetrf/png_io.h"

namespace dtrf {

namespace {

constexpr double kAttnEps = 1e-8;

Tensor xavier(int fan_in, int fan_out, Rng& rng) {
    double std = std::sqrt(2.0 / double(fan_in + fan_out));
    return Tensor::randn({fan_in, fan_out}, rng, std);
}

ad::Value bindp(ad::Graph& g, const ParameterSet& p, const std::string& name) { return g.param(name, p.at(name)); }

// Two-layer MLP with GELU, row-wise.
ad::Value mlp2(ad::Graph& g, ad::Value x, const ParameterSet& p, const std::string& prefix) {
    ad::Value h = g.gelu(g.add_row_broadcast(g.matmul(x, bindp(g, p, prefix + ".l1.w")), bindp(g, p, prefix + ".l1.b")));
    return g.add_row_broadcast(g.matmul(h, bindp(g, p, prefix + ".l2.w")), bindp(g, p, prefix + ".l2.b"));
}

} // namespace

void SlotConfig::validate() const {
    if (num_slots < 2) throw ConfigError("num_slots must be >= 2");
    if (num_iterations < 1) throw ConfigError("num_iterations must be >= 1");
    if (slot_dim < 8) throw ConfigError("slot_dim must be >= 8");
    if (adapted_dim < 1 || mlp_hidden < 1) throw ConfigError("adapted_dim and mlp_hidden must be positive");
}

PositionGrid make_position_grid(int h, int w, int pos_dim) {
    if (pos_dim % 4 != 0 || pos_dim <= 0) throw ConfigError("pos_dim must be a positive multiple of 4");
    PositionGrid grid;
    grid.h = h;
    grid.w = w;
    int n = h * w;
    grid.embeddings = Tensor({n, pos_dim});
    constexpr double kTwoPi = 6.283185307179586;
    int bands = pos_dim / 4;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int j = y * w + x;
            double u = (x + 0.5) / double(w);
            double v = (y + 0.5) / double(h);
            for (int b = 0; b < bands; ++b) {
                double f = double(1 << b);
                grid.embeddings.at2(j, 4 * b + 0) = std::sin(kTwoPi * f * u);
                grid.embeddings.at2(j, 4 * b + 1) = std::cos(kTwoPi * f * u);
                grid.embeddings.at2(j, 4 * b + 2) = std::sin(kTwoPi * f * v);
                grid.embeddings.at2(j, 4 * b + 3) = std::cos(kTwoPi * f * v);
            }
        }
    }
    grid.permutation.resize(size_t(n));
    std::iota(grid.permutation.begin(), grid.permutation.end(), 0);
    return grid;
}

PositionGrid permute_patch_order(const PositionGrid& positions, uint64_t seed) {
    PositionGrid out = positions;
    std::iota(out.permutation.begin(), out.permutation.end(), 0);
    Rng rng(seed);
    rng.shuffle(out.permutation);
    return out;
}

void add_slot_attention_params(ParameterSet& p, const SlotConfig& cfg, Rng& rng) {
    int d = cfg.slot_dim;
    int ca = cfg.adapted_dim;
    p.add("sa.mu", Tensor::randn({1, d}, rng, 1.0 / std::sqrt(double(d))));
    p.add("sa.logsigma", Tensor::full({1, d}, -1.0));
    p.add("sa.norm_in.g", Tensor::full({1, ca}, 1.0));
    p.add("sa.norm_in.b", Tensor({1, ca}));
    p.add("sa.k.w", xavier(ca, d, rng));
    p.add("sa.v.w", xavier(ca, d, rng));
    p.add("sa.q.w", xavier(d, d, rng));
    p.add("sa.norm_slots.g", Tensor::full({1, d}, 1.0));
    p.add("sa.norm_slots.b", Tensor({1, d}));
    p.add("sa.gru.wi", xavier(d, 3 * d, rng));
    p.add("sa.gru.wh", xavier(d, 3 * d, rng));
    p.add("sa.gru.bi", Tensor({1, 3 * d}));
    p.add("sa.gru.bh", Tensor({1, 3 * d}));
    p.add("sa.norm_mlp.g", Tensor::full({1, d}, 1.0));
    p.add("sa.norm_mlp.b", Tensor({1, d}));
    p.add("sa.mlp.l1.w", xavier(d, cfg.mlp_hidden, rng));
    p.add("sa.mlp.l1.b", Tensor({1, cfg.mlp_hidden}));
    p.add("sa.mlp.l2.w", xavier(cfg.mlp_hidden, d, rng));
    p.add("sa.mlp.l2.b", Tensor({1, d}));
}

void add_slot_decoder_params(ParameterSet& p, const SlotConfig& cfg, int feature_channels, int pos_dim, Rng& rng) {
    int in = cfg.slot_dim + pos_dim;
    p.add("dec.l1.w", xavier(in, cfg.mlp_hidden, rng));
    p.add("dec.l1.b", Tensor({1, cfg.mlp_hidden}));
    p.add("dec.l2.w", xavier(cfg.mlp_hidden, feature_channels + 1, rng));
    p.add("dec.l2.b", Tensor({1, feature_channels + 1}));
}

namespace slotnet {

ad::Value sample_slots(ad::Graph& g, const ParameterSet& params, const SlotConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    Tensor eps = Tensor::randn({cfg.num_slots, cfg.slot_dim}, rng);
    ad::Value mu = g.repeat_rows(bindp(g, params, "sa.mu"), cfg.num_slots);
    ad::Value sigma = g.repeat_rows(g.exp(bindp(g, params, "sa.logsigma")), cfg.num_slots);
    return g.add(mu, g.mul(sigma, g.constant(std::move(eps))));
}

ad::Value attention_iterate(ad::Graph& g, ad::Value slots0, ad::Value features_adapted, const ParameterSet& params,
                            const SlotConfig& cfg, ad::Value* attention_out) {
    ad::Value in_n = g.layer_norm(features_adapted, bindp(g, params, "sa.norm_in.g"), bindp(g, params, "sa.norm_in.b"));
    ad::Value keys = g.matmul(in_n, bindp(g, params, "sa.k.w"));
    ad::Value vals = g.matmul(in_n, bindp(g, params, "sa.v.w"));
    ad::Value keys_t = g.transpose(keys);

    int d = cfg.slot_dim;
    double att_scale = 1.0 / std::sqrt(double(d));
    ad::Value slots = slots0;
    ad::Value attn{};
    for (int t = 0; t < cfg.num_iterations; ++t) {
        ad::Value sn = g.layer_norm(slots, bindp(g, params, "sa.norm_slots.g"), bindp(g, params, "sa.norm_slots.b"));
        ad::Value q = g.matmul(sn, bindp(g, params, "sa.q.w"));
        ad::Value logits = g.scale(g.matmul(q, keys_t), att_scale); // [K, N]
        attn = g.softmax_axis0(logits);                             // competition over slots
        // Weighted mean over locations per slot.
        ad::Value wsum = g.add_scalar(g.row_sum(attn), kAttnEps);
        ad::Value wnorm = g.div_col_broadcast(attn, wsum);
        ad::Value updates = g.matmul(wnorm, vals); // [K, D]

        // Gated recurrent update (input = updates, hidden = slots).
        ad::Value gi = g.add_row_broadcast(g.matmul(updates, bindp(g, params, "sa.gru.wi")), bindp(g, params, "sa.gru.bi"));
        ad::Value gh = g.add_row_broadcast(g.matmul(slots, bindp(g, params, "sa.gru.wh")), bindp(g, params, "sa.gru.bh"));
        ad::Value zg = g.sigmoid(g.add(g.slice_cols(gi, 0, d), g.slice_cols(gh, 0, d)));
        ad::Value rg = g.sigmoid(g.add(g.slice_cols(gi, d, 2 * d), g.slice_cols(gh, d, 2 * d)));
        ad::Value ng = g.tanh(g.add(g.slice_cols(gi, 2 * d, 3 * d), g.mul(rg, g.slice_cols(gh, 2 * d, 3 * d))));
        // h' = (1 - z) * n + z * h
        slots = g.add(g.sub(ng, g.mul(zg, ng)), g.mul(zg, slots));

        // Residual MLP.
        ad::Value mn = g.layer_norm(slots, bindp(g, params, "sa.norm_mlp.g"), bindp(g, params, "sa.norm_mlp.b"));
        slots = g.add(slots, mlp2(g, mn, params, "sa.mlp"));
    }
    g.check_finite(slots, "slot attention output");
    if (attention_out) *attention_out = attn;
    return slots;
}

DecodeValues decode(ad::Graph& g, ad::Value slots, const PositionGrid& positions, const ParameterSet& params,
                    const SlotConfig& cfg) {
    int n = positions.locations();
    int k = cfg.num_slots;
    if (int(positions.permutation.size()) != n) throw ShapeError("position grid permutation length != H*W");
    const Tensor& emb = positions.embeddings;
    int dp = emb.cols();

    // Decoder input rows: [slot_k | pos(perm(j))] for k-major (k*N + j) order.
    Tensor pos_rows({k * n, dp});
    for (int kk = 0; kk < k; ++kk) {
        for (int j = 0; j < n; ++j) {
            int src = positions.permutation[size_t(j)];
            for (int q = 0; q < dp; ++q) pos_rows.at2(kk * n + j, q) = emb.at2(src, q);
        }
    }

    ad::Value slots_b = g.repeat_rows(slots, n);
    ad::Value din = g.concat_cols({slots_b, g.constant(std::move(pos_rows))});
    ad::Value h1 = g.gelu(g.add_row_broadcast(g.matmul(din, bindp(g, params, "dec.l1.w")), bindp(g, params, "dec.l1.b")));
    ad::Value out = g.add_row_broadcast(g.matmul(h1, bindp(g, params, "dec.l2.w")), bindp(g, params, "dec.l2.b"));
    int c = params.at("dec.l2.w").cols() - 1;

    DecodeValues dv;
    dv.per_slot = g.slice_cols(out, 0, c);
    dv.alpha = g.reshape(g.slice_cols(out, c, c + 1), {k, n});
    dv.masks = g.softmax_axis0(dv.alpha);
    dv.recon = g.rows_weighted_sum(dv.per_slot, dv.masks, k);
    g.check_finite(dv.recon, "slot decoder reconstruction");
    return dv;
}

} // namespace slotnet

SlotState init_slots(const SlotConfig& cfg, uint64_t seed, const ParameterSet& params) {
    ad::Graph g;
    ad::Value slots = slotnet::sample_slots(g, params, cfg, seed);
    SlotState st;
    st.slots = g.value(slots);
    st.attention = Tensor({cfg.num_slots, 0});
    return st;
}

SlotState slot_attention_iterate(const SlotState& state, const Tensor& features_adapted, const SlotConfig& cfg,
                                 const ParameterSet& params) {
    Tensor feats = features_adapted;
    if (feats.rank() == 3) feats = feats.reshaped({feats.dim(0) * feats.dim(1), feats.dim(2)});
    if (feats.rank() != 2 || feats.cols() != cfg.adapted_dim) {
        throw ShapeError("adapted features shape " + features_adapted.shape_str() + " does not match adapted_dim");
    }
    if (!feats.all_finite()) throw NonFiniteError("non-finite adapted features");
    if (state.slots.rows() != cfg.num_slots || state.slots.cols() != cfg.slot_dim) {
        throw ShapeError("slot state shape " + state.slots.shape_str() + " does not match config");
    }

    ad::Graph g;
    ad::Value attn{};
    ad::Value slots = slotnet::attention_iterate(g, g.constant(state.slots), g.constant(std::move(feats)), params, cfg, &attn);
    SlotState out;
    out.slots = g.value(slots);
    out.attention = g.value(attn);
    return out;
}

SlotDecodeResult decode_slots(const SlotState& state, const PositionGrid& positions, const SlotConfig& cfg,
                              const ParameterSet& params) {
    ad::Graph g;
    slotnet::DecodeValues dv = slotnet::decode(g, g.constant(state.slots), positions, params, cfg);
    int k = cfg.num_slots;
    int h = positions.h, w = positions.w;
    int c = g.value(dv.per_slot).cols();
    SlotDecodeResult res;
    res.per_slot_features = g.value(dv.per_slot).reshaped({k, h, w, c});
    res.alpha_logits = g.value(dv.alpha).reshaped({k, h, w});
    res.masks = g.value(dv.masks).reshaped({k, h, w});
    res.reconstruction = g.value(dv.recon).reshaped({h, w, c});
    return res;
}

double reconstruction_loss(const FeatureMap& target, const SlotDecodeResult& result) {
    const Tensor& rec = result.reconstruction;
    if (rec.dim(0) != target.h || rec.dim(1) != target.w || rec.dim(2) != target.c) {
        throw ShapeError("reconstruction shape " + rec.shape_str() + " vs feature map " + std::to_string(target.h) +
                         "x" + std::to_string(target.w) + "x" + std::to_string(target.c));
    }
    double s = 0.0;
    for (int64_t i = 0; i < rec.size(); ++i) {
        double d = double(target.data[size_t(i)]) - rec[i];
        s += d * d;
    }
    return s / double(rec.size());
}

void export_slot_masks(const SlotDecodeResult& result, const std::filesystem::path& dir, const std::string& sample_id) {
    std::filesystem::create_directories(dir);
    int k = result.masks.dim(0), h = result.masks.dim(1), w = result.masks.dim(2);
    for (int kk = 0; kk < k; ++kk) {
        png::Image8 img;
        img.width = w;
        img.height = h;
        img.channels = 1;
        img.pixels.resize(size_t(h) * w);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double m = result.masks[(int64_t(kk) * h + y) * w + x];
                img.pixels[size_t(y) * w + x] = uint8_t(std::lround(255.0 * std::min(std::max(m, 0.0), 1.0)));
            }
        }
        char name[64];
        std::snprintf(name, sizeof(name), "_slot_%02d.png", kk);
        png::write_png(dir / (sample_id + name), img);
    }
}

} // namespace dtrf
