#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "densetrf/tensor.h"

namespace dtrf {

// RGB image in [0,1], row-major (y, x, channel). Height and width must be
// positive multiples of the extractor patch size before feature extraction.
struct ImageTensor {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<double> pixels;

    ImageTensor() = default;
    ImageTensor(int h, int w) : height(h), width(w), pixels(size_t(h) * w * 3, 0.0) {}

    double& at(int y, int x, int c) { return pixels[(size_t(y) * width + x) * 3 + size_t(c)]; }
    double at(int y, int x, int c) const { return pixels[(size_t(y) * width + x) * 3 + size_t(c)]; }
};

enum class ExtractorKind { mock_patch, external_import };

struct ExtractorSpec {
    ExtractorKind kind = ExtractorKind::mock_patch;
    int patch_size = 8;
    int out_channels = 32;
    uint64_t seed = 0;
};

// Frozen feature grid over the patch lattice. Stored as float32 to match the
// on-disk payload exactly, row-major (h, w, channel).
struct FeatureMap {
    int h = 0;
    int w = 0;
    int c = 0;
    int patch_size = 0;
    int src_h = 0;
    int src_w = 0;
    std::vector<float> data;

    float& at(int y, int x, int ch) { return data[(size_t(y) * w + x) * c + size_t(ch)]; }
    float at(int y, int x, int ch) const { return data[(size_t(y) * w + x) * c + size_t(ch)]; }
    int locations() const { return h * w; }

    // View as a [(h*w), c] double tensor for the networks.
    Tensor as_tensor() const;
};

// Dimension of the per-patch statistics vector feeding the mock projection:
// 3 channel means, 3 channel stds, 3 gradient energies, 8 oriented
// even/odd filter responses.
inline constexpr int kMockStatsDim = 17;

// Deterministic, frozen feature extraction. Pure in (image, spec); never
// touched by any training loop.
FeatureMap extract_features(const ImageTensor& image, const ExtractorSpec& spec);

// Feature file format: magic "DTRF-F", version u16, H,W,C u32, patch_size
// u32, payload H*W*C float32 LE row-major.
inline constexpr uint16_t kFeatureFileVersion = 1;

void export_features(const FeatureMap& fm, const std::filesystem::path& path);
FeatureMap import_precomputed_features(const std::filesystem::path& path);

} // namespace dtrf
