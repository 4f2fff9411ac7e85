#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "densetrf/backbone.h"
#include "densetrf/metrics.h"

namespace dtrf {

enum class Split { train_unlabeled, train_labeled, test };

const char* split_name(Split s);

// Per-class procedural texture: a noise-modulated oriented grating.
struct TextureDesc {
    double base_freq = 6.0;   // grating cycles across the image
    double orientation = 0.0; // radians
    int noise_octaves = 2;
    double noise_amp = 0.35;  // grating modulation by value noise
    std::array<double, 3> palette = {0.5, 0.5, 0.5};
    double contrast = 0.8;

    bool operator==(const TextureDesc&) const = default;
};

// Blob geometry: smoothed random fields, thresholded at a quantile.
struct ShapeParams {
    double deform_amplitude = 0.6; // weight of higher noise octaves
    double smoothness = 0.5;       // octave amplitude decay
    double anisotropy = 1.0;       // x/y stretch of the blob field
    double area_fraction = 0.18;   // target area per foreground class

    bool operator==(const ShapeParams&) const = default;
};

struct PhotometricParams {
    std::array<double, 2> brightness = {-0.05, 0.05}; // additive, per sample
    std::array<double, 2> tint = {0.0, 0.08};         // multiplicative strength

    bool operator==(const PhotometricParams&) const = default;
};

struct DomainSpec {
    std::string name = "domain";
    int image_size = 64;
    std::vector<TextureDesc> textures; // [0] = background, then foreground classes
    ShapeParams shape;
    PhotometricParams photometric;
    uint64_t seed = 0;

    int num_classes() const { return int(textures.size()); }
    bool operator==(const DomainSpec&) const = default;
};

struct Sample {
    std::string id;
    ImageTensor image;
    std::vector<BinaryMask> label; // empty when unlabeled; one mask per class (incl. background)
    std::string domain;
    Split split = Split::train_unlabeled;

    bool has_label() const { return !label.empty(); }
};

// Deterministic in (spec, n, labeled_fraction): sample i is a pure function
// of spec.seed and i. The first round(n * labeled_fraction) samples keep
// their masks (split train_labeled); the rest are stripped (train_unlabeled).
std::vector<Sample> generate_domain(const DomainSpec& spec, int n, double labeled_fraction);

// Labeled evaluation samples from an independent stream.
std::vector<Sample> generate_test_split(const DomainSpec& spec, int n);

struct BenchmarkSizes {
    int labeled = 24;
    int unlabeled = 160;
    int test = 32;

    bool operator==(const BenchmarkSizes&) const = default;
};

struct BenchmarkBundle {
    DomainSpec source;
    DomainSpec target;
    BenchmarkSizes sizes;
    std::vector<Sample> source_labeled;
    std::vector<Sample> source_unlabeled;
    std::vector<Sample> source_test;
    std::vector<Sample> target_unlabeled;
    std::vector<Sample> target_test;
};

BenchmarkBundle make_shift_benchmark(const DomainSpec& source, const DomainSpec& target, const BenchmarkSizes& sizes);

// Desk-scale defaults: shared class textures; the target domain shifts blob
// anisotropy, brightness, and tint.
DomainSpec default_source_spec();
DomainSpec default_target_spec();

// Disk layout: <root>/<domain>/<split>/images/*.png and
// <root>/<domain>/<split>/masks/<class>/*.png, plus a JSON `manifest` file
// recording specs, sizes, and counts.
void write_benchmark(const BenchmarkBundle& bundle, const std::filesystem::path& root);
bool manifest_exists(const std::filesystem::path& root);
// Throws ParseError on malformed manifests. When `expected` is given, throws
// ConfigError if the manifest disagrees with it.
BenchmarkBundle regenerate_from_manifest(const std::filesystem::path& root,
                                         const BenchmarkBundle* expected = nullptr);
// Loads the on-disk pools (8-bit quantized images).
BenchmarkBundle load_benchmark(const std::filesystem::path& root);

struct FolderOptions {
    int patch_multiple = 8;
    std::string domain = "folder";
    Split split_if_labeled = Split::train_labeled;
};

// Generic image-folder ingestion. Images are center-cropped to a multiple of
// patch_multiple. When masks_dir is given it must contain one subdirectory
// per class with mask PNGs matching the image basenames.
std::vector<Sample> load_image_folder(const std::filesystem::path& images_dir,
                                      const std::optional<std::filesystem::path>& masks_dir,
                                      const FolderOptions& opts = {});

void write_sample(const Sample& sample, const std::filesystem::path& domain_root);

// Benchmark-validity statistics ------------------------------------------------

// Mean extractor feature over patches covered >= `purity` by class `cls`.
std::vector<double> class_texture_stats(const std::vector<Sample>& samples, int cls, const ExtractorSpec& spec,
                                        double purity = 0.8);
// ||a-b|| / (0.5 * (||a|| + ||b||))
double relative_divergence(const std::vector<double>& a, const std::vector<double>& b);
// Mean second-moment eccentricity of the class mask across labeled samples.
double mean_blob_eccentricity(const std::vector<Sample>& samples, int cls);

} // namespace dtrf
