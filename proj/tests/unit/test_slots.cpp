#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "densetrf/errors.h"
#include "densetrf/slots.h"
#include "gradcheck.h"

using namespace dtrf;

namespace {

SlotConfig tiny_config(int k = 2) {
    SlotConfig cfg;
    cfg.num_slots = k;
    cfg.slot_dim = 8;
    cfg.num_iterations = 1;
    cfg.adapted_dim = 3;
    cfg.mlp_hidden = 16;
    return cfg;
}

ParameterSet make_params(const SlotConfig& cfg, int feature_channels, uint64_t seed) {
    ParameterSet p;
    Rng rng(seed);
    add_slot_attention_params(p, cfg, rng);
    add_slot_decoder_params(p, cfg, feature_channels, kPosDim, rng);
    return p;
}

// ---- explicit-loop oracle of the slot attention update ---------------------

std::vector<double> ln_row(const std::vector<double>& x, const Tensor& g, const Tensor& b) {
    int n = int(x.size());
    double mu = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double var = 0;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= n;
    double inv = 1.0 / std::sqrt(var + 1e-5);
    std::vector<double> out(x.size());
    for (int i = 0; i < n; ++i) out[size_t(i)] = (x[size_t(i)] - mu) * inv * g[i] + b[i];
    return out;
}

std::vector<double> linear_row(const std::vector<double>& x, const Tensor& w, const Tensor* b) {
    std::vector<double> out(size_t(w.cols()), 0.0);
    for (int j = 0; j < w.cols(); ++j) {
        double s = b ? (*b)[j] : 0.0;
        for (int i = 0; i < w.rows(); ++i) s += x[size_t(i)] * w.at2(i, j);
        out[size_t(j)] = s;
    }
    return out;
}

double gelu_s(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }
double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct OracleOut {
    std::vector<std::vector<double>> slots;
    std::vector<std::vector<double>> attn;
};

OracleOut oracle_iterate(const SlotState& st, const Tensor& feats, const SlotConfig& cfg, const ParameterSet& p) {
    int K = cfg.num_slots, N = feats.rows(), D = cfg.slot_dim;
    std::vector<std::vector<double>> inputs(static_cast<size_t>(N));
    for (int j = 0; j < N; ++j) {
        std::vector<double> row(size_t(feats.cols()));
        for (int c = 0; c < feats.cols(); ++c) row[size_t(c)] = feats.at2(j, c);
        inputs[size_t(j)] = ln_row(row, p.at("sa.norm_in.g"), p.at("sa.norm_in.b"));
    }
    std::vector<std::vector<double>> keys(static_cast<size_t>(N)), vals(static_cast<size_t>(N));
    for (int j = 0; j < N; ++j) {
        keys[size_t(j)] = linear_row(inputs[size_t(j)], p.at("sa.k.w"), nullptr);
        vals[size_t(j)] = linear_row(inputs[size_t(j)], p.at("sa.v.w"), nullptr);
    }
    std::vector<std::vector<double>> slots(size_t(K), std::vector<double>(static_cast<size_t>(D)));
    for (int k = 0; k < K; ++k)
        for (int d = 0; d < D; ++d) slots[size_t(k)][size_t(d)] = st.slots.at2(k, d);

    OracleOut out;
    for (int t = 0; t < cfg.num_iterations; ++t) {
        std::vector<std::vector<double>> q(static_cast<size_t>(K));
        for (int k = 0; k < K; ++k) {
            q[size_t(k)] = linear_row(ln_row(slots[size_t(k)], p.at("sa.norm_slots.g"), p.at("sa.norm_slots.b")),
                                      p.at("sa.q.w"), nullptr);
        }
        std::vector<std::vector<double>> attn(size_t(K), std::vector<double>(static_cast<size_t>(N)));
        for (int j = 0; j < N; ++j) {
            std::vector<double> logits(static_cast<size_t>(K));
            for (int k = 0; k < K; ++k) {
                double s = 0;
                for (int d = 0; d < D; ++d) s += q[size_t(k)][size_t(d)] * keys[size_t(j)][size_t(d)];
                logits[size_t(k)] = s / std::sqrt(double(D));
            }
            double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0;
            for (int k = 0; k < K; ++k) z += std::exp(logits[size_t(k)] - mx);
            for (int k = 0; k < K; ++k) attn[size_t(k)][size_t(j)] = std::exp(logits[size_t(k)] - mx) / z;
        }
        std::vector<std::vector<double>> upd(size_t(K), std::vector<double>(static_cast<size_t>(D), 0.0));
        for (int k = 0; k < K; ++k) {
            double wsum = 1e-8;
            for (int j = 0; j < N; ++j) wsum += attn[size_t(k)][size_t(j)];
            for (int j = 0; j < N; ++j) {
                double w = attn[size_t(k)][size_t(j)] / wsum;
                for (int d = 0; d < D; ++d) upd[size_t(k)][size_t(d)] += w * vals[size_t(j)][size_t(d)];
            }
        }
        for (int k = 0; k < K; ++k) {
            auto gi = linear_row(upd[size_t(k)], p.at("sa.gru.wi"), &p.at("sa.gru.bi"));
            auto gh = linear_row(slots[size_t(k)], p.at("sa.gru.wh"), &p.at("sa.gru.bh"));
            std::vector<double> hs(static_cast<size_t>(D));
            for (int d = 0; d < D; ++d) {
                double zg = sigm(gi[size_t(d)] + gh[size_t(d)]);
                double rg = sigm(gi[size_t(D + d)] + gh[size_t(D + d)]);
                double ng = std::tanh(gi[size_t(2 * D + d)] + rg * gh[size_t(2 * D + d)]);
                hs[size_t(d)] = (1.0 - zg) * ng + zg * slots[size_t(k)][size_t(d)];
            }
            auto mn = ln_row(hs, p.at("sa.norm_mlp.g"), p.at("sa.norm_mlp.b"));
            auto h1 = linear_row(mn, p.at("sa.mlp.l1.w"), &p.at("sa.mlp.l1.b"));
            for (auto& v : h1) v = gelu_s(v);
            auto h2 = linear_row(h1, p.at("sa.mlp.l2.w"), &p.at("sa.mlp.l2.b"));
            for (int d = 0; d < D; ++d) slots[size_t(k)][size_t(d)] = hs[size_t(d)] + h2[size_t(d)];
        }
        out.attn = attn;
    }
    out.slots = slots;
    return out;
}

} // namespace

TEST_CASE("init_slots: sigma->0 limit collapses every slot onto mu") {
    SlotConfig cfg = tiny_config();
    ParameterSet p = make_params(cfg, 5, 1);
    p.at("sa.logsigma") = Tensor::full({1, cfg.slot_dim}, -1e9);
    SlotState st = init_slots(cfg, 42, p);
    for (int k = 0; k < cfg.num_slots; ++k)
        for (int d = 0; d < cfg.slot_dim; ++d) CHECK(st.slots.at2(k, d) == p.at("sa.mu")[d]);
}

TEST_CASE("init_slots: fixed seed reproduces, different seeds differ") {
    SlotConfig cfg = tiny_config();
    ParameterSet p = make_params(cfg, 5, 2);
    SlotState a = init_slots(cfg, 7, p);
    SlotState b = init_slots(cfg, 7, p);
    CHECK(a.slots.max_abs_diff(b.slots) == 0.0);
    SlotState c = init_slots(cfg, 8, p);
    CHECK(a.slots.max_abs_diff(c.slots) > 0.0);
}

TEST_CASE("K=1: attention is exactly one everywhere") {
    SlotConfig cfg = tiny_config(1);
    ParameterSet p = make_params(cfg, 3, 3);
    SlotState st = init_slots(cfg, 1, p);
    Rng rng(5);
    Tensor feats = Tensor::randn({4, 3}, rng);
    SlotState out = slot_attention_iterate(st, feats, cfg, p);
    REQUIRE(out.attention.rows() == 1);
    for (int j = 0; j < 4; ++j) CHECK(out.attention.at2(0, j) == 1.0);

    // And the update path agrees with the loop oracle (mean of values).
    OracleOut oracle = oracle_iterate(st, feats, cfg, p);
    for (int d = 0; d < cfg.slot_dim; ++d) {
        CHECK(out.slots.at2(0, d) == doctest::Approx(oracle.slots[0][size_t(d)]).epsilon(1e-9));
    }
}

TEST_CASE("tiny case matches the explicit-loop oracle") {
    SlotConfig cfg = tiny_config(2); // H=W=2 -> N=4, C_a=3, K=2, T=1
    ParameterSet p = make_params(cfg, 3, 11);
    SlotState st = init_slots(cfg, 21, p);
    Rng rng(31);
    Tensor feats = Tensor::randn({4, 3}, rng);
    SlotState out = slot_attention_iterate(st, feats, cfg, p);
    OracleOut oracle = oracle_iterate(st, feats, cfg, p);
    for (int k = 0; k < 2; ++k) {
        for (int d = 0; d < cfg.slot_dim; ++d) {
            CHECK(out.slots.at2(k, d) == doctest::Approx(oracle.slots[size_t(k)][size_t(d)]).epsilon(1e-6));
        }
        for (int j = 0; j < 4; ++j) {
            CHECK(out.attention.at2(k, j) == doctest::Approx(oracle.attn[size_t(k)][size_t(j)]).epsilon(1e-6));
        }
    }
}

TEST_CASE("multi-iteration case matches the loop oracle") {
    SlotConfig cfg = tiny_config(3);
    cfg.num_iterations = 3;
    ParameterSet p = make_params(cfg, 3, 13);
    SlotState st = init_slots(cfg, 23, p);
    Rng rng(37);
    Tensor feats = Tensor::randn({9, 3}, rng);
    SlotState out = slot_attention_iterate(st, feats, cfg, p);
    OracleOut oracle = oracle_iterate(st, feats, cfg, p);
    for (int k = 0; k < 3; ++k)
        for (int d = 0; d < cfg.slot_dim; ++d)
            CHECK(out.slots.at2(k, d) == doctest::Approx(oracle.slots[size_t(k)][size_t(d)]).epsilon(1e-6));
}

TEST_CASE("permuting initial slots permutes outputs identically; reconstruction invariant") {
    SlotConfig cfg = tiny_config(4);
    cfg.num_iterations = 2;
    ParameterSet p = make_params(cfg, 3, 17);
    SlotState st = init_slots(cfg, 29, p);
    Rng rng(41);
    Tensor feats = Tensor::randn({4, 3}, rng);

    std::vector<int> perm = {2, 0, 3, 1};
    SlotState st_p = st;
    for (int k = 0; k < 4; ++k)
        for (int d = 0; d < cfg.slot_dim; ++d) st_p.slots.at2(k, d) = st.slots.at2(perm[size_t(k)], d);

    SlotState out = slot_attention_iterate(st, feats, cfg, p);
    SlotState out_p = slot_attention_iterate(st_p, feats, cfg, p);
    for (int k = 0; k < 4; ++k) {
        for (int d = 0; d < cfg.slot_dim; ++d) {
            CHECK(out_p.slots.at2(k, d) == doctest::Approx(out.slots.at2(perm[size_t(k)], d)).epsilon(1e-5));
        }
    }

    PositionGrid pos = make_position_grid(2, 2);
    SlotDecodeResult dec = decode_slots(out, pos, cfg, p);
    SlotDecodeResult dec_p = decode_slots(out_p, pos, cfg, p);
    CHECK(dec.reconstruction.max_abs_diff(dec_p.reconstruction) < 1e-5);
}

TEST_CASE("decode: equal alpha logits give uniform 1/K masks") {
    SlotConfig cfg = tiny_config(4);
    ParameterSet p = make_params(cfg, 3, 19);
    // Zero decoder: alpha logits equal the (zero) bias for every slot.
    p.at("dec.l1.w") = Tensor({cfg.slot_dim + kPosDim, cfg.mlp_hidden});
    p.at("dec.l1.b") = Tensor({1, cfg.mlp_hidden});
    p.at("dec.l2.w") = Tensor({cfg.mlp_hidden, 4});
    p.at("dec.l2.b") = Tensor({1, 4});
    SlotState st = init_slots(cfg, 31, p);
    PositionGrid pos = make_position_grid(2, 2);
    SlotDecodeResult dec = decode_slots(st, pos, cfg, p);
    for (int64_t i = 0; i < dec.masks.size(); ++i) CHECK(dec.masks[i] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("decode: K=1 gives unit mask and reconstruction equals the slot map exactly") {
    SlotConfig cfg = tiny_config(1);
    ParameterSet p = make_params(cfg, 3, 23);
    SlotState st = init_slots(cfg, 33, p);
    PositionGrid pos = make_position_grid(2, 2);
    SlotDecodeResult dec = decode_slots(st, pos, cfg, p);
    for (int64_t i = 0; i < dec.masks.size(); ++i) CHECK(dec.masks[i] == 1.0);
    for (int64_t i = 0; i < dec.reconstruction.size(); ++i) {
        CHECK(dec.reconstruction[i] == dec.per_slot_features[i]);
    }
}

TEST_CASE("decode: reconstruction equals the Eq-style loop oracle") {
    SlotConfig cfg = tiny_config(2);
    ParameterSet p = make_params(cfg, 3, 29);
    SlotState st = init_slots(cfg, 35, p);
    PositionGrid pos = make_position_grid(2, 2);
    SlotDecodeResult dec = decode_slots(st, pos, cfg, p);
    int h = 2, w = 2, c = 3;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int q = 0; q < c; ++q) {
                double s = 0;
                for (int k = 0; k < cfg.num_slots; ++k) {
                    double m = dec.masks[(int64_t(k) * h + y) * w + x];
                    double f = dec.per_slot_features[((int64_t(k) * h + y) * w + x) * c + q];
                    s += m * f;
                }
                CHECK(dec.reconstruction[(int64_t(y) * w + x) * c + q] == doctest::Approx(s).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("mask normalization holds for random parameterizations") {
    Rng rng(47);
    for (int trial = 0; trial < 50; ++trial) {
        SlotConfig cfg = tiny_config(2 + rng.uniform_int(5));
        ParameterSet p = make_params(cfg, 4, rng.next_u64());
        SlotState st = init_slots(cfg, rng.next_u64(), p);
        Tensor feats = Tensor::randn({4, 3}, rng, 2.0);
        SlotState out = slot_attention_iterate(st, feats, cfg, p);
        PositionGrid pos = make_position_grid(2, 2);
        SlotDecodeResult dec = decode_slots(out, pos, cfg, p);
        int k = cfg.num_slots, n = 4;
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int kk = 0; kk < k; ++kk) s += dec.masks[int64_t(kk) * n + j];
            CHECK(std::fabs(s - 1.0) <= 1e-6);
        }
        // attention columns also sum to one (softmax over the slot axis)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int kk = 0; kk < k; ++kk) s += out.attention.at2(kk, j);
            CHECK(std::fabs(s - 1.0) <= 1e-5);
        }
    }
}

TEST_CASE("reconstruction_loss closed forms and formula oracle") {
    FeatureMap fm;
    fm.h = 2;
    fm.w = 2;
    fm.c = 3;
    fm.patch_size = 1;
    fm.data.resize(12);
    Rng rng(53);
    for (auto& v : fm.data) v = float(rng.uniform());

    SlotDecodeResult dec;
    dec.reconstruction = Tensor({2, 2, 3});
    dec.per_slot_features = Tensor({1, 2, 2, 3});
    dec.alpha_logits = Tensor({1, 2, 2});
    dec.masks = Tensor({1, 2, 2});
    for (int i = 0; i < 12; ++i) dec.reconstruction[i] = double(fm.data[size_t(i)]);
    CHECK(reconstruction_loss(fm, dec) == 0.0);

    for (int i = 0; i < 12; ++i) dec.reconstruction[i] = double(fm.data[size_t(i)]) + 1.0;
    CHECK(reconstruction_loss(fm, dec) == doctest::Approx(1.0).epsilon(1e-12));

    double expect = 0.0;
    for (int i = 0; i < 12; ++i) {
        dec.reconstruction[i] = rng.uniform();
        double d = double(fm.data[size_t(i)]) - dec.reconstruction[i];
        expect += d * d;
    }
    expect /= 12.0;
    CHECK(reconstruction_loss(fm, dec) == doctest::Approx(expect).epsilon(1e-12));

    // loss is zero iff reconstruction equals the target elementwise
    dec.reconstruction[5] = double(fm.data[5]) + 1e-9;
    for (int i = 0; i < 12; ++i)
        if (i != 5) dec.reconstruction[i] = double(fm.data[size_t(i)]);
    CHECK(reconstruction_loss(fm, dec) > 0.0);

    FeatureMap wrong = fm;
    wrong.w = 1;
    wrong.data.resize(6);
    CHECK_THROWS_AS(reconstruction_loss(wrong, dec), ShapeError);
}

TEST_CASE("permute_patch_order: determinism, inverse composition, uniformity") {
    PositionGrid pos = make_position_grid(4, 4);
    PositionGrid a = permute_patch_order(pos, 99);
    PositionGrid b = permute_patch_order(pos, 99);
    CHECK(a.permutation == b.permutation);

    // bijection + inverse composition gives the identity
    std::vector<int> inv(a.permutation.size());
    for (size_t i = 0; i < a.permutation.size(); ++i) inv[size_t(a.permutation[i])] = int(i);
    for (size_t i = 0; i < a.permutation.size(); ++i) CHECK(a.permutation[size_t(inv[i])] == int(i));

    // Monte Carlo uniformity: each index lands at each position 1/16 +- 0.01
    int n = 16;
    std::vector<std::vector<int>> counts(size_t(n), std::vector<int>(size_t(n), 0));
    for (int trial = 0; trial < 10000; ++trial) {
        PositionGrid pg = permute_patch_order(pos, 1000 + uint64_t(trial));
        for (int i = 0; i < n; ++i) counts[size_t(i)][size_t(pg.permutation[size_t(i)])]++;
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double freq = counts[size_t(i)][size_t(j)] / 10000.0;
            CHECK(std::fabs(freq - 1.0 / 16.0) <= 0.01);
        }
    }
}

TEST_CASE("reconstruction loss gradients match finite differences on a tiny instance") {
    SlotConfig cfg = tiny_config(2);
    cfg.mlp_hidden = 8;
    ParameterSet p = make_params(cfg, 4, 61);
    Rng rng(67);
    Tensor feats_adapted = Tensor::randn({4, 3}, rng);
    Tensor target = Tensor::randn({4, 4}, rng);
    PositionGrid pos = make_position_grid(2, 2);
    uint64_t slot_seed = 77;

    auto forward = [&](const ParameterSet& ps) {
        ad::Graph g;
        ad::Value slots0 = slotnet::sample_slots(g, ps, cfg, slot_seed);
        ad::Value slots = slotnet::attention_iterate(g, slots0, g.constant(feats_adapted), ps, cfg, nullptr);
        auto dv = slotnet::decode(g, slots, pos, ps, cfg);
        return g.scalar(g.mean_sq_diff(dv.recon, g.constant(target)));
    };

    ad::Graph g;
    ad::Value slots0 = slotnet::sample_slots(g, p, cfg, slot_seed);
    ad::Value slots = slotnet::attention_iterate(g, slots0, g.constant(feats_adapted), p, cfg, nullptr);
    auto dv = slotnet::decode(g, slots, pos, p, cfg);
    ad::Value loss = g.mean_sq_diff(dv.recon, g.constant(target));
    g.backward(loss);

    auto rep = testsupport::finite_difference_check(
        p, forward, [&](const std::string& n) { return g.param_grad(n); }, 1e-4, 1e-3);
    INFO("worst tensor: ", rep.worst_tensor, " rel ", rep.worst_rel);
    CHECK(rep.ok);
}

TEST_CASE("slot mask export writes one grayscale png per slot") {
    SlotConfig cfg = tiny_config(3);
    ParameterSet p = make_params(cfg, 3, 71);
    SlotState st = init_slots(cfg, 73, p);
    PositionGrid pos = make_position_grid(2, 2);
    SlotDecodeResult dec = decode_slots(st, pos, cfg, p);
    auto dir = std::filesystem::temp_directory_path() / "dtrf_slot_masks";
    std::filesystem::remove_all(dir);
    export_slot_masks(dec, dir, "sample007");
    for (int k = 0; k < 3; ++k) {
        char name[64];
        std::snprintf(name, sizeof(name), "sample007_slot_%02d.png", k);
        CHECK(std::filesystem::exists(dir / name));
    }
    std::filesystem::remove_all(dir);
}
