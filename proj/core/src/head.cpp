#include "densetrf/head.h"

#include <cmath>
#include <fstream>

#include "densetrf/binio.h"
#include "densetrf/errors.h"
#include "densetrf/png_io.h"

namespace dtrf {

namespace {

Tensor xavier(int fan_in, int fan_out, Rng& rng) {
    double std = std::sqrt(2.0 / double(fan_in + fan_out));
    return Tensor::randn({fan_in, fan_out}, rng, std);
}

ad::Value bindp(ad::Graph& g, const ParameterSet& p, const std::string& name) { return g.param(name, p.at(name)); }

double stable_bce_term(double x, double y) {
    return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::fabs(x)));
}

} // namespace

void add_adapter_params(ParameterSet& p, int in_channels, int out_channels, Rng& rng, int hidden) {
    p.add("adapter.l1.w", xavier(in_channels, hidden, rng));
    p.add("adapter.l1.b", Tensor({1, hidden}));
    p.add("adapter.l2.w", xavier(hidden, out_channels, rng));
    p.add("adapter.l2.b", Tensor({1, out_channels}));
}

void add_head_params(ParameterSet& p, int in_channels, int num_classes, Rng& rng, int hidden) {
    p.add("head.l1.w", xavier(in_channels, hidden, rng));
    p.add("head.l1.b", Tensor({1, hidden}));
    p.add("head.l2.w", xavier(hidden, num_classes, rng));
    p.add("head.l2.b", Tensor({1, num_classes}));
}

namespace headnet {

ad::Value adapter_forward(ad::Graph& g, ad::Value features, const ParameterSet& p) {
    ad::Value h = g.gelu(g.add_row_broadcast(g.matmul(features, bindp(g, p, "adapter.l1.w")), bindp(g, p, "adapter.l1.b")));
    return g.add_row_broadcast(g.matmul(h, bindp(g, p, "adapter.l2.w")), bindp(g, p, "adapter.l2.b"));
}

ad::Value classifier_forward(ad::Graph& g, ad::Value combined, const ParameterSet& p) {
    ad::Value h = g.gelu(g.add_row_broadcast(g.matmul(combined, bindp(g, p, "head.l1.w")), bindp(g, p, "head.l1.b")));
    return g.add_row_broadcast(g.matmul(h, bindp(g, p, "head.l2.w")), bindp(g, p, "head.l2.b"));
}

} // namespace headnet

AdaptedFeatureMap adapt(const FeatureMap& features, const ParameterSet& params) {
    Tensor f = features.as_tensor();
    if (!f.all_finite()) throw NonFiniteError("non-finite features in adapt");
    ad::Graph g;
    ad::Value out = headnet::adapter_forward(g, g.constant(std::move(f)), params);
    g.check_finite(out, "adapter output");
    AdaptedFeatureMap am;
    am.h = features.h;
    am.w = features.w;
    am.c = g.value(out).cols();
    am.data = g.value(out).reshaped({am.h, am.w, am.c});
    return am;
}

CombinedRepresentation combine(const AdaptedFeatureMap& adapted, const SlotDecodeResult& decode) {
    int h = adapted.h, w = adapted.w;
    if (decode.reconstruction.dim(0) != h || decode.reconstruction.dim(1) != w) {
        throw ShapeError("combine: grid shapes differ");
    }
    int ca = adapted.c;
    int cr = decode.reconstruction.dim(2);
    int k = decode.num_slots();
    CombinedRepresentation z;
    z.h = h;
    z.w = w;
    z.adapted_channels = ca;
    z.feature_channels = cr;
    z.mask_channels = k;
    z.c = ca + cr + k;
    z.data = Tensor({h, w, z.c});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int64_t base = (int64_t(y) * w + x) * z.c;
            for (int q = 0; q < ca; ++q) z.data[base + q] = adapted.data[(int64_t(y) * w + x) * ca + q];
            for (int q = 0; q < cr; ++q) z.data[base + ca + q] = decode.reconstruction[(int64_t(y) * w + x) * cr + q];
            for (int q = 0; q < k; ++q) z.data[base + ca + cr + q] = decode.masks[(int64_t(q) * h + y) * w + x];
        }
    }
    return z;
}

DensePrediction classify(const CombinedRepresentation& combined, const ParameterSet& params,
                         std::pair<int, int> out_shape) {
    auto [hi, wi] = out_shape;
    if (hi <= 0 || wi <= 0 || hi % combined.h != 0 || wi % combined.w != 0) {
        throw ShapeError("classify: out_shape " + std::to_string(hi) + "x" + std::to_string(wi) +
                         " is not an integer multiple of the grid " + std::to_string(combined.h) + "x" +
                         std::to_string(combined.w));
    }
    ad::Graph g;
    ad::Value zin = g.constant(combined.data.reshaped({combined.h * combined.w, combined.c}));
    ad::Value logits = headnet::classifier_forward(g, zin, params);
    ad::Value up = g.bilinear_upsample(logits, combined.h, combined.w, hi / combined.h, wi / combined.w);
    g.check_finite(up, "classifier logits");
    DensePrediction pred;
    pred.h = hi;
    pred.w = wi;
    pred.class_count = g.value(logits).cols();
    pred.logits = g.value(up).reshaped({hi, wi, pred.class_count});
    return pred;
}

LossBreakdown joint_loss(const DensePrediction& pred, const std::vector<BinaryMask>& label, const FeatureMap& target,
                         const SlotDecodeResult& decode, double lambda) {
    if (int(label.size()) != pred.class_count) {
        throw ShapeError("joint_loss: label stack has " + std::to_string(label.size()) + " classes, prediction " +
                         std::to_string(pred.class_count));
    }
    for (const auto& m : label) {
        if (m.h != pred.h || m.w != pred.w) throw ShapeError("joint_loss: label resolution differs from prediction");
        for (uint8_t v : m.grid) {
            if (v > 1) throw Error("joint_loss: label values must be 0 or 1");
        }
    }
    double s = 0.0;
    int c = pred.class_count;
    for (int y = 0; y < pred.h; ++y) {
        for (int x = 0; x < pred.w; ++x) {
            for (int q = 0; q < c; ++q) {
                double logit = pred.logits[(int64_t(y) * pred.w + x) * c + q];
                double yv = double(label[size_t(q)].at(y, x));
                s += stable_bce_term(logit, yv);
            }
        }
    }
    LossBreakdown lb;
    lb.bce = s / double(int64_t(pred.h) * pred.w * c);
    lb.recon = reconstruction_loss(target, decode);
    lb.lambda = lambda;
    lb.total = lb.bce + lambda * lb.recon;
    return lb;
}

std::vector<BinaryMask> threshold_prediction(const DensePrediction& pred) {
    std::vector<BinaryMask> out(size_t(pred.class_count), BinaryMask(pred.h, pred.w));
    int c = pred.class_count;
    for (int y = 0; y < pred.h; ++y) {
        for (int x = 0; x < pred.w; ++x) {
            for (int q = 0; q < c; ++q) {
                // sigmoid(z) > 0.5 <=> z > 0
                out[size_t(q)].at(y, x) = pred.logits[(int64_t(y) * pred.w + x) * c + q] > 0.0 ? 1 : 0;
            }
        }
    }
    return out;
}

std::vector<BinaryMask> argmax_prediction(const DensePrediction& pred) {
    std::vector<BinaryMask> out(size_t(pred.class_count), BinaryMask(pred.h, pred.w));
    int c = pred.class_count;
    for (int y = 0; y < pred.h; ++y) {
        for (int x = 0; x < pred.w; ++x) {
            int best = 0;
            double bv = pred.logits[(int64_t(y) * pred.w + x) * c];
            for (int q = 1; q < c; ++q) {
                double v = pred.logits[(int64_t(y) * pred.w + x) * c + q];
                if (v > bv) {
                    bv = v;
                    best = q;
                }
            }
            out[size_t(best)].at(y, x) = 1;
        }
    }
    return out;
}

void export_prediction(const DensePrediction& pred, const std::filesystem::path& dir, const std::string& sample_id) {
    std::filesystem::create_directories(dir);

    // Argmax label map as one grayscale PNG (classes spread over 0..255).
    png::Image8 img;
    img.width = pred.w;
    img.height = pred.h;
    img.channels = 1;
    img.pixels.resize(size_t(pred.h) * pred.w);
    auto am = argmax_prediction(pred);
    int denom = std::max(pred.class_count - 1, 1);
    for (int y = 0; y < pred.h; ++y) {
        for (int x = 0; x < pred.w; ++x) {
            int cls = 0;
            for (int q = 0; q < pred.class_count; ++q) {
                if (am[size_t(q)].at(y, x)) cls = q;
            }
            img.pixels[size_t(y) * pred.w + x] = uint8_t(255 * cls / denom);
        }
    }
    png::write_png(dir / (sample_id + "_pred.png"), img);

    std::ofstream os(dir / (sample_id + "_logits.dtrfp"), std::ios::binary);
    if (!os) throw Error("cannot write prediction dump for " + sample_id);
    binio::write_magic(os, "DTRF-P");
    binio::write_u16(os, kFeatureFileVersion);
    binio::write_u32(os, uint32_t(pred.h));
    binio::write_u32(os, uint32_t(pred.w));
    binio::write_u32(os, uint32_t(pred.class_count));
    binio::write_u32(os, 1u);
    std::vector<float> buf(size_t(pred.logits.size()));
    for (int64_t i = 0; i < pred.logits.size(); ++i) buf[size_t(i)] = float(pred.logits[i]);
    binio::write_f32_array(os, buf.data(), buf.size());
}

DensePrediction import_prediction(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open prediction dump: " + path.string());
    binio::expect_magic(is, "DTRF-P", path.string());
    uint16_t version = binio::read_u16(is);
    if (version != kFeatureFileVersion) throw ParseError("unsupported prediction dump version");
    DensePrediction pred;
    pred.h = int(binio::read_u32(is));
    pred.w = int(binio::read_u32(is));
    pred.class_count = int(binio::read_u32(is));
    binio::read_u32(is); // patch_size, unused
    size_t n = size_t(pred.h) * pred.w * pred.class_count;
    std::vector<float> buf(n);
    binio::read_f32_array(is, buf.data(), n, path.string());
    pred.logits = Tensor({pred.h, pred.w, pred.class_count});
    for (size_t i = 0; i < n; ++i) pred.logits[int64_t(i)] = double(buf[i]);
    return pred;
}

} // namespace dtrf
