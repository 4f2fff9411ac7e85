#include "densetrf/backbone.h"

#include <cmath>
#include <fstream>

#include "densetrf/binio.h"
#include "densetrf/errors.h"
#include "densetrf/rng.h"

namespace dtrf {

Tensor FeatureMap::as_tensor() const {
    Tensor t({h * w, c});
    for (size_t i = 0; i < data.size(); ++i) t[int64_t(i)] = double(data[i]);
    return t;
}

namespace {

// Per-patch statistics: channel means, channel stds, gradient energies, and
// a fixed bank of oriented even/odd filter responses at two cycles per patch.
void patch_stats(const ImageTensor& img, int py, int px, int P, double* stats) {
    double sum[3] = {0, 0, 0};
    double sum2[3] = {0, 0, 0};
    for (int y = 0; y < P; ++y) {
        for (int x = 0; x < P; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                double v = img.at(py * P + y, px * P + x, ch);
                sum[ch] += v;
                sum2[ch] += v * v;
            }
        }
    }
    double inv_n = 1.0 / double(P * P);
    for (int ch = 0; ch < 3; ++ch) {
        double mu = sum[ch] * inv_n;
        stats[ch] = mu;
        double var = sum2[ch] * inv_n - mu * mu;
        stats[3 + ch] = std::sqrt(std::max(var, 0.0));
    }

    double ge[3] = {0, 0, 0};
    for (int y = 0; y + 1 < P; ++y) {
        for (int x = 0; x + 1 < P; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                double v = img.at(py * P + y, px * P + x, ch);
                double dx = img.at(py * P + y, px * P + x + 1, ch) - v;
                double dy = img.at(py * P + y + 1, px * P + x, ch) - v;
                ge[ch] += dx * dx + dy * dy;
            }
        }
    }
    double inv_g = 1.0 / double((P - 1) * (P - 1));
    for (int ch = 0; ch < 3; ++ch) stats[6 + ch] = ge[ch] * inv_g;

    constexpr double kTwoPi = 6.283185307179586;
    constexpr double kFreq = 2.0; // cycles per patch edge
    const double thetas[4] = {0.0, 0.7853981633974483, 1.5707963267948966, 2.356194490192345};
    for (int t = 0; t < 4; ++t) {
        double ct = std::cos(thetas[t]);
        double st = std::sin(thetas[t]);
        double even = 0.0, odd = 0.0;
        for (int y = 0; y < P; ++y) {
            for (int x = 0; x < P; ++x) {
                double gray = (img.at(py * P + y, px * P + x, 0) + img.at(py * P + y, px * P + x, 1) +
                               img.at(py * P + y, px * P + x, 2)) /
                              3.0;
                double arg = kTwoPi * kFreq * (x * ct + y * st) / double(P);
                even += gray * std::cos(arg);
                odd += gray * std::sin(arg);
            }
        }
        stats[9 + 2 * t] = even * inv_n;
        stats[9 + 2 * t + 1] = odd * inv_n;
    }
}

} // namespace

FeatureMap extract_features(const ImageTensor& image, const ExtractorSpec& spec) {
    if (spec.kind == ExtractorKind::external_import) {
        throw ConfigError("extractor kind external_import computes nothing; load features with import_precomputed_features");
    }
    if (spec.patch_size < 2) throw ConfigError("patch_size must be >= 2");
    if (spec.out_channels < 4) throw ConfigError("out_channels must be >= 4");
    int P = spec.patch_size;
    if (image.height <= 0 || image.width <= 0 || image.height % P != 0 || image.width % P != 0) {
        throw ShapeError("image dimensions " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                         " are not positive multiples of patch size " + std::to_string(P));
    }
    for (double v : image.pixels) {
        if (!std::isfinite(v)) throw NonFiniteError("non-finite pixel in input image");
    }

    // Frozen random projection from patch statistics to feature channels,
    // seeded solely by spec.seed: row-major normals scaled by 1/sqrt(in_dim).
    int C = spec.out_channels;
    std::vector<double> proj(size_t(C) * kMockStatsDim);
    Rng rng(spec.seed);
    double scale = 1.0 / std::sqrt(double(kMockStatsDim));
    for (auto& wv : proj) wv = rng.normal() * scale;

    FeatureMap fm;
    fm.h = image.height / P;
    fm.w = image.width / P;
    fm.c = C;
    fm.patch_size = P;
    fm.src_h = image.height;
    fm.src_w = image.width;
    fm.data.resize(size_t(fm.h) * fm.w * C);

    double stats[kMockStatsDim];
    for (int py = 0; py < fm.h; ++py) {
        for (int px = 0; px < fm.w; ++px) {
            patch_stats(image, py, px, P, stats);
            for (int ch = 0; ch < C; ++ch) {
                double acc = 0.0;
                const double* row = proj.data() + size_t(ch) * kMockStatsDim;
                for (int s = 0; s < kMockStatsDim; ++s) acc += row[s] * stats[s];
                fm.at(py, px, ch) = float(acc);
            }
        }
    }
    return fm;
}

void export_features(const FeatureMap& fm, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open feature file for writing: " + path.string());
    binio::write_magic(os, "DTRF-F");
    binio::write_u16(os, kFeatureFileVersion);
    binio::write_u32(os, uint32_t(fm.h));
    binio::write_u32(os, uint32_t(fm.w));
    binio::write_u32(os, uint32_t(fm.c));
    binio::write_u32(os, uint32_t(fm.patch_size));
    binio::write_f32_array(os, fm.data.data(), fm.data.size());
    if (!os) throw Error("write failed for feature file: " + path.string());
}

FeatureMap import_precomputed_features(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open feature file: " + path.string());
    binio::expect_magic(is, "DTRF-F", path.string());
    uint16_t version = binio::read_u16(is);
    if (version != kFeatureFileVersion) throw ParseError("unsupported feature file version " + std::to_string(version));
    FeatureMap fm;
    fm.h = int(binio::read_u32(is));
    fm.w = int(binio::read_u32(is));
    fm.c = int(binio::read_u32(is));
    fm.patch_size = int(binio::read_u32(is));
    if (fm.h <= 0 || fm.w <= 0 || fm.c <= 0 || fm.patch_size <= 0) {
        throw ParseError("implausible feature file header in " + path.string());
    }
    fm.src_h = fm.h * fm.patch_size;
    fm.src_w = fm.w * fm.patch_size;
    size_t n = size_t(fm.h) * fm.w * fm.c;
    fm.data.resize(n);
    binio::read_f32_array(is, fm.data.data(), n, path.string());
    // A longer payload than the header declares is a shape error too.
    char extra;
    if (is.read(&extra, 1); is.gcount() == 1) {
        throw ShapeError("payload longer than H*W*C declared in header of " + path.string());
    }
    return fm;
}

} // namespace dtrf
