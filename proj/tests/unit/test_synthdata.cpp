#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "densetrf/errors.h"
#include "densetrf/synthdata.h"

using namespace dtrf;
namespace fs = std::filesystem;

namespace {

DomainSpec small_spec(const std::string& name, uint64_t seed) {
    DomainSpec d = default_source_spec();
    d.name = name;
    d.seed = seed;
    d.image_size = 32;
    return d;
}

bool samples_identical(const Sample& a, const Sample& b) {
    if (a.id != b.id || a.domain != b.domain || a.split != b.split) return false;
    if (a.image.pixels != b.image.pixels) return false;
    if (a.label.size() != b.label.size()) return false;
    for (size_t i = 0; i < a.label.size(); ++i) {
        if (a.label[i].grid != b.label[i].grid) return false;
    }
    return true;
}

} // namespace

TEST_CASE("labeled_fraction 0 leaves every sample unlabeled; 1 labels all") {
    auto none = generate_domain(small_spec("d", 1), 6, 0.0);
    for (const auto& s : none) {
        CHECK(!s.has_label());
        CHECK(s.split == Split::train_unlabeled);
    }
    auto all = generate_domain(small_spec("d", 1), 6, 1.0);
    for (const auto& s : all) {
        CHECK(s.has_label());
        CHECK(s.split == Split::train_labeled);
    }
    auto half = generate_domain(small_spec("d", 1), 6, 0.5);
    int labeled = 0;
    for (const auto& s : half) labeled += s.has_label();
    CHECK(labeled == 3);
}

TEST_CASE("generation is bitwise deterministic in (spec, n)") {
    auto a = generate_domain(small_spec("d", 7), 5, 0.4);
    auto b = generate_domain(small_spec("d", 7), 5, 0.4);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(samples_identical(a[i], b[i]));

    auto c = generate_domain(small_spec("d", 8), 5, 0.4);
    bool any_diff = false;
    for (size_t i = 0; i < a.size(); ++i) any_diff |= !samples_identical(a[i], c[i]);
    CHECK(any_diff);
}

TEST_CASE("labels are per-pixel partitions matching the image shape") {
    auto samples = generate_domain(small_spec("d", 3), 4, 1.0);
    for (const auto& s : samples) {
        REQUIRE(s.label.size() == 3);
        for (const auto& m : s.label) {
            CHECK(m.h == s.image.height);
            CHECK(m.w == s.image.width);
        }
        for (int y = 0; y < s.image.height; ++y) {
            for (int x = 0; x < s.image.width; ++x) {
                int hits = 0;
                for (const auto& m : s.label) hits += m.at(y, x);
                CHECK(hits == 1); // classes partition the image
            }
        }
        for (double v : s.image.pixels) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("degenerate spec with identical texture classes is rejected") {
    DomainSpec d = small_spec("d", 1);
    d.textures[2] = d.textures[1];
    CHECK_THROWS_AS(generate_domain(d, 2, 0.0), DataError);
}

TEST_CASE("make_shift_benchmark produces exactly the requested pool sizes") {
    BenchmarkSizes sizes{10, 20, 5};
    BenchmarkBundle b = make_shift_benchmark(small_spec("src", 1), small_spec("tgt", 2), sizes);
    CHECK(b.source_labeled.size() == 10);
    CHECK(b.source_unlabeled.size() == 20);
    CHECK(b.source_test.size() == 5);
    CHECK(b.target_unlabeled.size() == 20);
    CHECK(b.target_test.size() == 5);
    for (const auto& s : b.source_test) {
        CHECK(s.split == Split::test);
        CHECK(s.has_label());
    }
    // test split comes from an independent stream: no id collisions
    CHECK(b.source_test[0].id != b.source_labeled[0].id);

    DomainSpec bad = small_spec("tgt", 2);
    bad.textures.push_back(bad.textures[1]);
    bad.textures.back().base_freq += 1;
    CHECK_THROWS_AS(make_shift_benchmark(small_spec("src", 1), bad, sizes), DataError);
}

TEST_CASE("benchmark disk round-trip: masks identical, images within quantization") {
    BenchmarkSizes sizes{3, 4, 2};
    BenchmarkBundle b = make_shift_benchmark(small_spec("src", 5), small_spec("tgt", 6), sizes);
    fs::path root = fs::temp_directory_path() / "dtrf_bench_rt";
    fs::remove_all(root);
    write_benchmark(b, root);
    CHECK(manifest_exists(root));

    BenchmarkBundle back = load_benchmark(root);
    REQUIRE(back.source_labeled.size() == b.source_labeled.size());
    for (size_t i = 0; i < b.source_labeled.size(); ++i) {
        const Sample& orig = b.source_labeled[i];
        const Sample& loaded = back.source_labeled[i];
        CHECK(orig.id == loaded.id);
        REQUIRE(loaded.label.size() == orig.label.size());
        for (size_t c = 0; c < orig.label.size(); ++c) CHECK(orig.label[c].grid == loaded.label[c].grid);
        double worst = 0;
        for (size_t p = 0; p < orig.image.pixels.size(); ++p) {
            worst = std::max(worst, std::fabs(orig.image.pixels[p] - loaded.image.pixels[p]));
        }
        CHECK(worst <= 0.5 / 255.0 + 1e-12);
    }
    fs::remove_all(root);
}

TEST_CASE("manifest round-trip regenerates identical pools") {
    BenchmarkSizes sizes{3, 4, 2};
    BenchmarkBundle b = make_shift_benchmark(small_spec("src", 5), small_spec("tgt", 6), sizes);
    fs::path root = fs::temp_directory_path() / "dtrf_bench_manifest";
    fs::remove_all(root);
    write_benchmark(b, root);

    BenchmarkBundle regen = regenerate_from_manifest(root);
    REQUIRE(regen.source_labeled.size() == b.source_labeled.size());
    for (size_t i = 0; i < b.source_labeled.size(); ++i) {
        CHECK(samples_identical(b.source_labeled[i], regen.source_labeled[i]));
    }
    for (size_t i = 0; i < b.target_test.size(); ++i) {
        CHECK(samples_identical(b.target_test[i], regen.target_test[i]));
    }

    // mismatching expectation is a config error
    BenchmarkBundle other = b;
    other.sizes.labeled += 1;
    CHECK_THROWS_AS(regenerate_from_manifest(root, &other), ConfigError);
    fs::remove_all(root);
}

TEST_CASE("load_image_folder: unlabeled load, missing-mask error, crop to patch multiple") {
    fs::path root = fs::temp_directory_path() / "dtrf_folder";
    fs::remove_all(root);
    fs::create_directories(root / "images");

    auto samples = generate_domain(small_spec("d", 9), 3, 1.0);
    for (const auto& s : samples) {
        Sample copy = s;
        copy.split = Split::train_labeled;
        write_sample(copy, root / "stage");
    }
    fs::rename(root / "stage" / "train_labeled" / "images", root / "images");

    auto loaded = load_image_folder(root / "images", std::nullopt, FolderOptions{8, "mydom"});
    REQUIRE(loaded.size() == 3);
    for (const auto& s : loaded) {
        CHECK(!s.has_label());
        CHECK(s.domain == "mydom");
        CHECK(s.image.height % 8 == 0);
    }

    // masks with one basename missing -> error naming the file
    fs::path masks = root / "stage" / "train_labeled" / "masks";
    fs::remove(masks / "class_01" / (samples[1].id + ".png"));
    try {
        load_image_folder(root / "images", masks, FolderOptions{8, "mydom"});
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(samples[1].id) != std::string::npos);
    }
    fs::remove_all(root);
}

TEST_CASE("export-reload round trip through folder ingestion") {
    fs::path root = fs::temp_directory_path() / "dtrf_folder_rt";
    fs::remove_all(root);
    auto samples = generate_domain(small_spec("d", 10), 2, 1.0);
    for (const auto& s : samples) write_sample(s, root);
    auto loaded = load_image_folder(root / "train_labeled" / "images",
                                    root / "train_labeled" / "masks", FolderOptions{8, "d"});
    REQUIRE(loaded.size() == 2);
    for (size_t i = 0; i < loaded.size(); ++i) {
        REQUIRE(loaded[i].label.size() == samples[i].label.size());
        for (size_t c = 0; c < samples[i].label.size(); ++c) {
            CHECK(loaded[i].label[c].grid == samples[i].label[c].grid); // masks exact
        }
        double worst = 0;
        for (size_t p = 0; p < samples[i].image.pixels.size(); ++p) {
            worst = std::max(worst, std::fabs(samples[i].image.pixels[p] - loaded[i].image.pixels[p]));
        }
        CHECK(worst <= 0.5 / 255.0 + 1e-12); // images within 8-bit quantization
    }
    fs::remove_all(root);
}

TEST_CASE("texture statistics agree across domains while shape statistics diverge") {
    // The property the benchmark is built to exhibit: class textures carry
    // across the shift (small feature divergence) while blob geometry moves.
    DomainSpec src = default_source_spec();
    DomainSpec tgt = default_target_spec();
    src.image_size = 64;
    tgt.image_size = 64;
    auto src_samples = generate_domain(src, 200, 1.0);
    auto tgt_samples = generate_domain(tgt, 200, 1.0);

    ExtractorSpec ex;
    ex.patch_size = 8;
    ex.out_channels = 32;

    for (int cls = 1; cls <= 2; ++cls) {
        auto mu_src = class_texture_stats(src_samples, cls, ex);
        auto mu_tgt = class_texture_stats(tgt_samples, cls, ex);
        double tex_div = relative_divergence(mu_src, mu_tgt);
        INFO("class ", cls, " texture divergence ", tex_div);
        CHECK(tex_div <= 0.10);
    }

    double ecc_src = 0.5 * (mean_blob_eccentricity(src_samples, 1) + mean_blob_eccentricity(src_samples, 2));
    double ecc_tgt = 0.5 * (mean_blob_eccentricity(tgt_samples, 1) + mean_blob_eccentricity(tgt_samples, 2));
    double shape_div = std::fabs(ecc_src - ecc_tgt) / (0.5 * (ecc_src + ecc_tgt));
    INFO("eccentricity src ", ecc_src, " tgt ", ecc_tgt, " rel diff ", shape_div);
    CHECK(shape_div > 0.25);
}
