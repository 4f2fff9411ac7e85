#include "densetrf/synthdata.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "densetrf/errors.h"
#include "densetrf/png_io.h"
#include "densetrf/rng.h"
#include "json_util.h"

namespace dtrf {

namespace fs = std::filesystem;
using jsonutil::json;

const char* split_name(Split s) {
    switch (s) {
        case Split::train_unlabeled: return "train_unlabeled";
        case Split::train_labeled: return "train_labeled";
        case Split::test: return "test";
    }
    return "?";
}

namespace {

constexpr double kTwoPi = 6.283185307179586;

// Tiling lattice value noise in [0,1].
class ValueNoise {
  public:
    ValueNoise(int cells, Rng rng) : cells_(cells), values_(size_t(cells) * cells) {
        for (auto& v : values_) v = rng.uniform();
    }

    double at(double u, double v) const {
        double pu = u * cells_, pv = v * cells_;
        int i0 = int(std::floor(pu)), j0 = int(std::floor(pv));
        double fu = pu - i0, fv = pv - j0;
        // smoothstep weighting keeps level sets rounded
        fu = fu * fu * (3.0 - 2.0 * fu);
        fv = fv * fv * (3.0 - 2.0 * fv);
        auto wrap = [this](int i) {
            int m = i % cells_;
            return m < 0 ? m + cells_ : m;
        };
        double v00 = values_[size_t(wrap(j0)) * cells_ + size_t(wrap(i0))];
        double v01 = values_[size_t(wrap(j0)) * cells_ + size_t(wrap(i0 + 1))];
        double v10 = values_[size_t(wrap(j0 + 1)) * cells_ + size_t(wrap(i0))];
        double v11 = values_[size_t(wrap(j0 + 1)) * cells_ + size_t(wrap(i0 + 1))];
        double a = v00 + (v01 - v00) * fu;
        double b = v10 + (v11 - v10) * fu;
        return a + (b - a) * fv;
    }

  private:
    int cells_;
    std::vector<double> values_;
};

void validate_spec(const DomainSpec& spec) {
    if (spec.num_classes() < 2) throw ConfigError("domain spec needs >= 2 classes (background + foreground)");
    if (spec.image_size < 8) throw ConfigError("image_size too small");
    for (size_t i = 0; i < spec.textures.size(); ++i) {
        for (size_t j = i + 1; j < spec.textures.size(); ++j) {
            if (spec.textures[i] == spec.textures[j]) {
                throw DataError("degenerate domain spec: texture classes " + std::to_string(i) + " and " +
                                std::to_string(j) + " are indistinguishable");
            }
        }
    }
    if (spec.photometric.brightness[0] > spec.photometric.brightness[1] ||
        spec.photometric.tint[0] > spec.photometric.tint[1]) {
        throw ConfigError("degenerate photometric ranges");
    }
    if (spec.shape.area_fraction <= 0.0 || spec.shape.area_fraction * double(spec.num_classes() - 1) >= 0.9) {
        throw ConfigError("area_fraction out of range");
    }
}

Sample make_sample(const DomainSpec& spec, const std::string& stream, int index) {
    int S = spec.image_size;
    int fg = spec.num_classes() - 1;
    Rng base = Rng(spec.seed).fork(stream).fork(uint64_t(index));

    // Per-class blob fields: rotated/stretched multi-octave noise thresholded
    // at the area quantile.
    std::vector<std::vector<double>> margin(size_t(fg), std::vector<double>(size_t(S) * S));
    for (int c = 0; c < fg; ++c) {
        Rng rc = base.fork("shape").fork(uint64_t(c));
        double alpha = rc.uniform(0.0, kTwoPi);
        double ca = std::cos(alpha), sa = std::sin(alpha);
        double ax = std::sqrt(spec.shape.anisotropy);
        std::vector<ValueNoise> octaves;
        std::vector<double> weights;
        for (int o = 0; o < 3; ++o) {
            octaves.emplace_back(3 << o, rc.fork(uint64_t(o + 1)));
            weights.push_back(o == 0 ? 1.0 : spec.shape.deform_amplitude * std::pow(spec.shape.smoothness, o - 1));
        }
        std::vector<double>& f = margin[size_t(c)];
        for (int y = 0; y < S; ++y) {
            for (int x = 0; x < S; ++x) {
                double u = (x + 0.5) / S - 0.5, v = (y + 0.5) / S - 0.5;
                double ur = (u * ca - v * sa) / ax;
                double vr = (u * sa + v * ca) * ax;
                double val = 0.0;
                for (int o = 0; o < 3; ++o) val += weights[size_t(o)] * octaves[size_t(o)].at(ur + 0.5, vr + 0.5);
                f[size_t(y) * S + x] = val;
            }
        }
        std::vector<double> sorted = f;
        size_t rank = size_t((1.0 - spec.shape.area_fraction) * double(sorted.size()));
        rank = std::min(rank, sorted.size() - 1);
        std::nth_element(sorted.begin(), sorted.begin() + long(rank), sorted.end());
        double tau = sorted[rank];
        for (double& m : f) m -= tau;
    }

    // Class assignment: largest positive margin wins, else background.
    std::vector<int> cls(size_t(S) * S, 0);
    for (size_t p = 0; p < cls.size(); ++p) {
        double best = 0.0;
        for (int c = 0; c < fg; ++c) {
            if (margin[size_t(c)][p] > best) {
                best = margin[size_t(c)][p];
                cls[p] = c + 1;
            }
        }
    }

    // Per-class texture ingredients.
    std::vector<double> phase(spec.textures.size());
    std::vector<ValueNoise> tex_noise;
    for (size_t c = 0; c < spec.textures.size(); ++c) {
        Rng rt = base.fork("texture").fork(uint64_t(c));
        phase[c] = rt.uniform(0.0, kTwoPi);
        tex_noise.emplace_back(8 << std::max(spec.textures[c].noise_octaves - 1, 0), rt.fork("noise"));
    }

    Rng photo = base.fork("photometric");
    double brightness = photo.uniform(spec.photometric.brightness[0], spec.photometric.brightness[1]);
    double tint_strength = photo.uniform(spec.photometric.tint[0], spec.photometric.tint[1]);
    double gain[3];
    for (double& gch : gain) gch = 1.0 + tint_strength * (2.0 * photo.uniform() - 1.0);

    Rng pix = base.fork("pixel_noise");

    Sample sample;
    sample.domain = spec.name;
    char idbuf[96];
    std::snprintf(idbuf, sizeof(idbuf), "%s_%s_%04d", spec.name.c_str(), stream.c_str(), index);
    sample.id = idbuf;
    sample.image = ImageTensor(S, S);
    sample.label.assign(size_t(spec.num_classes()), BinaryMask(S, S));

    for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
            int c = cls[size_t(y) * S + x];
            sample.label[size_t(c)].at(y, x) = 1;
            const TextureDesc& td = spec.textures[size_t(c)];
            double arg = kTwoPi * td.base_freq * (x * std::cos(td.orientation) + y * std::sin(td.orientation)) / S +
                         phase[size_t(c)];
            double grating = std::sin(arg);
            double vn = tex_noise[size_t(c)].at((x + 0.5) / S, (y + 0.5) / S);
            double mod = 1.0 - td.noise_amp * vn;
            double pattern = 0.5 + 0.5 * td.contrast * grating * mod;
            for (int ch = 0; ch < 3; ++ch) {
                double v = td.palette[size_t(ch)] * pattern;
                v = gain[ch] * v + brightness + 0.02 * (pix.uniform() - 0.5);
                sample.image.at(y, x, ch) = std::min(std::max(v, 0.0), 1.0);
            }
        }
    }
    return sample;
}

png::Image8 to_png_image(const ImageTensor& img) {
    png::Image8 out;
    out.width = img.width;
    out.height = img.height;
    out.channels = 3;
    out.pixels.resize(size_t(img.height) * img.width * 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                out.pixels[(size_t(y) * img.width + x) * 3 + size_t(c)] =
                    uint8_t(std::lround(255.0 * std::min(std::max(img.at(y, x, c), 0.0), 1.0)));
    return out;
}

ImageTensor from_png_image(const png::Image8& in) {
    ImageTensor img(in.height, in.width);
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x)
            for (int c = 0; c < 3; ++c) {
                uint8_t v = in.channels == 1 ? in.at(y, x, 0) : in.at(y, x, c);
                img.at(y, x, c) = double(v) / 255.0;
            }
    return img;
}

std::string class_dir_name(int c) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "class_%02d", c);
    return buf;
}

json manifest_json(const BenchmarkBundle& b) {
    json j;
    j["format"] = "densetrf-benchmark";
    j["version"] = 1;
    j["source"] = jsonutil::domain_spec_to_json(b.source);
    j["target"] = jsonutil::domain_spec_to_json(b.target);
    j["sizes"] = jsonutil::sizes_to_json(b.sizes);
    j["counts"] = {{"source_labeled", b.source_labeled.size()},
                   {"source_unlabeled", b.source_unlabeled.size()},
                   {"source_test", b.source_test.size()},
                   {"target_unlabeled", b.target_unlabeled.size()},
                   {"target_test", b.target_test.size()}};
    return j;
}

std::vector<Sample> load_split_dir(const fs::path& root, const std::string& domain, Split split, int num_classes) {
    std::vector<Sample> out;
    fs::path imgs = root / domain / split_name(split) / "images";
    if (!fs::exists(imgs)) return out;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(imgs)) {
        if (e.path().extension() == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        Sample s;
        s.id = f.stem().string();
        s.domain = domain;
        s.split = split;
        s.image = from_png_image(png::read_png(f));
        if (split != Split::train_unlabeled) {
            for (int c = 0; c < num_classes; ++c) {
                fs::path mp = root / domain / split_name(split) / "masks" / class_dir_name(c) / f.filename();
                if (!fs::exists(mp)) throw DataError("missing mask " + mp.string());
                png::Image8 m = png::read_png(mp);
                BinaryMask bm(m.height, m.width);
                for (int y = 0; y < m.height; ++y)
                    for (int x = 0; x < m.width; ++x) bm.at(y, x) = m.at(y, x, 0) > 127 ? 1 : 0;
                s.label.push_back(std::move(bm));
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace

std::vector<Sample> generate_domain(const DomainSpec& spec, int n, double labeled_fraction) {
    validate_spec(spec);
    if (n < 1) throw ConfigError("generate_domain: n must be >= 1");
    if (labeled_fraction < 0.0 || labeled_fraction > 1.0) throw ConfigError("labeled_fraction must be in [0,1]");
    int labeled = int(std::llround(labeled_fraction * double(n)));
    std::vector<Sample> out;
    out.reserve(size_t(n));
    for (int i = 0; i < n; ++i) {
        Sample s = make_sample(spec, "train", i);
        if (i < labeled) {
            s.split = Split::train_labeled;
        } else {
            s.split = Split::train_unlabeled;
            s.label.clear();
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Sample> generate_test_split(const DomainSpec& spec, int n) {
    validate_spec(spec);
    std::vector<Sample> out;
    out.reserve(size_t(n));
    for (int i = 0; i < n; ++i) {
        Sample s = make_sample(spec, "test", i);
        s.split = Split::test;
        out.push_back(std::move(s));
    }
    return out;
}

BenchmarkBundle make_shift_benchmark(const DomainSpec& source, const DomainSpec& target, const BenchmarkSizes& sizes) {
    if (source.num_classes() != target.num_classes()) {
        throw DataError("incompatible class counts: source " + std::to_string(source.num_classes()) + " vs target " +
                        std::to_string(target.num_classes()));
    }
    if (sizes.labeled < 1 || sizes.unlabeled < 1 || sizes.test < 1) throw ConfigError("benchmark sizes must be >= 1");
    BenchmarkBundle b;
    b.source = source;
    b.target = target;
    b.sizes = sizes;
    int n = sizes.labeled + sizes.unlabeled;
    std::vector<Sample> src = generate_domain(source, n, double(sizes.labeled) / double(n));
    for (auto& s : src) {
        (s.split == Split::train_labeled ? b.source_labeled : b.source_unlabeled).push_back(std::move(s));
    }
    b.source_test = generate_test_split(source, sizes.test);
    b.target_unlabeled = generate_domain(target, sizes.unlabeled, 0.0);
    b.target_test = generate_test_split(target, sizes.test);
    return b;
}

DomainSpec default_source_spec() {
    DomainSpec d;
    d.name = "source";
    d.seed = 1001;
    d.textures = {
        TextureDesc{3.0, 0.4, 2, 0.50, {0.45, 0.42, 0.40}, 0.35},  // background: dim low-frequency weave
        TextureDesc{11.0, 1.2, 2, 0.30, {0.85, 0.55, 0.45}, 0.90}, // class 1: fine warm grating
        TextureDesc{6.0, 2.4, 2, 0.30, {0.45, 0.65, 0.85}, 0.90},  // class 2: mid cool grating
    };
    d.shape = ShapeParams{0.20, 0.45, 1.0, 0.16};
    d.photometric = PhotometricParams{{-0.03, 0.03}, {0.0, 0.05}};
    return d;
}

DomainSpec default_target_spec() {
    DomainSpec d = default_source_spec();
    d.name = "target";
    d.seed = 2002;
    // Same class textures; shifted geometry and photometrics.
    d.shape = ShapeParams{0.20, 0.45, 3.0, 0.16};
    d.photometric = PhotometricParams{{0.01, 0.04}, {0.10, 0.18}};
    return d;
}

void write_sample(const Sample& sample, const fs::path& domain_root) {
    fs::path split_root = domain_root / split_name(sample.split);
    fs::create_directories(split_root / "images");
    png::write_png(split_root / "images" / (sample.id + ".png"), to_png_image(sample.image));
    if (sample.has_label()) {
        for (size_t c = 0; c < sample.label.size(); ++c) {
            fs::path mdir = split_root / "masks" / class_dir_name(int(c));
            fs::create_directories(mdir);
            const BinaryMask& m = sample.label[c];
            png::Image8 img;
            img.width = m.w;
            img.height = m.h;
            img.channels = 1;
            img.pixels.resize(size_t(m.h) * m.w);
            for (int y = 0; y < m.h; ++y)
                for (int x = 0; x < m.w; ++x) img.pixels[size_t(y) * m.w + x] = m.at(y, x) ? 255 : 0;
            png::write_png(mdir / (sample.id + ".png"), img);
        }
    }
}

void write_benchmark(const BenchmarkBundle& bundle, const fs::path& root) {
    fs::create_directories(root);
    auto write_pool = [&](const std::vector<Sample>& pool, const std::string& domain) {
        for (const auto& s : pool) write_sample(s, root / domain);
    };
    write_pool(bundle.source_labeled, bundle.source.name);
    write_pool(bundle.source_unlabeled, bundle.source.name);
    write_pool(bundle.source_test, bundle.source.name);
    write_pool(bundle.target_unlabeled, bundle.target.name);
    write_pool(bundle.target_test, bundle.target.name);
    std::ofstream os(root / "manifest");
    if (!os) throw Error("cannot write manifest under " + root.string());
    os << manifest_json(bundle).dump(2) << "\n";
}

bool manifest_exists(const fs::path& root) { return fs::exists(root / "manifest"); }

BenchmarkBundle regenerate_from_manifest(const fs::path& root, const BenchmarkBundle* expected) {
    std::ifstream is(root / "manifest");
    if (!is) throw MissingPrerequisiteError("no manifest under " + root.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ParseError("malformed manifest: " + std::string(e.what()));
    }
    if (j.value("format", "") != "densetrf-benchmark") throw ParseError("not a benchmark manifest: " + root.string());
    DomainSpec source = jsonutil::domain_spec_from_json(j.at("source"));
    DomainSpec target = jsonutil::domain_spec_from_json(j.at("target"));
    BenchmarkSizes sizes = jsonutil::sizes_from_json(j.at("sizes"));
    if (expected) {
        if (!(source == expected->source) || !(target == expected->target) || !(sizes == expected->sizes)) {
            throw ConfigError("manifest under " + root.string() + " disagrees with the requested benchmark config");
        }
    }
    return make_shift_benchmark(source, target, sizes);
}

BenchmarkBundle load_benchmark(const fs::path& root) {
    BenchmarkBundle meta = regenerate_from_manifest(root); // validates + recovers specs
    BenchmarkBundle b;
    b.source = meta.source;
    b.target = meta.target;
    b.sizes = meta.sizes;
    int nc = meta.source.num_classes();
    b.source_labeled = load_split_dir(root, b.source.name, Split::train_labeled, nc);
    b.source_unlabeled = load_split_dir(root, b.source.name, Split::train_unlabeled, nc);
    b.source_test = load_split_dir(root, b.source.name, Split::test, nc);
    b.target_unlabeled = load_split_dir(root, b.target.name, Split::train_unlabeled, nc);
    b.target_test = load_split_dir(root, b.target.name, Split::test, nc);
    return b;
}

std::vector<Sample> load_image_folder(const fs::path& images_dir, const std::optional<fs::path>& masks_dir,
                                      const FolderOptions& opts) {
    if (!fs::is_directory(images_dir)) throw DataError("not a directory: " + images_dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(images_dir)) {
        if (e.path().extension() == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());

    std::vector<std::string> class_dirs;
    if (masks_dir) {
        if (!fs::is_directory(*masks_dir)) throw DataError("not a directory: " + masks_dir->string());
        for (const auto& e : fs::directory_iterator(*masks_dir)) {
            if (e.is_directory()) class_dirs.push_back(e.path().filename().string());
        }
        std::sort(class_dirs.begin(), class_dirs.end());
        if (class_dirs.empty()) throw DataError("masks directory has no class subdirectories: " + masks_dir->string());
    }

    int P = opts.patch_multiple;
    std::vector<Sample> out;
    for (const auto& f : files) {
        png::Image8 raw = png::read_png(f);
        int ch = (raw.height / P) * P;
        int cw = (raw.width / P) * P;
        if (ch < P || cw < P) throw DataError("image smaller than one patch: " + f.string());
        int oy = (raw.height - ch) / 2, ox = (raw.width - cw) / 2;

        Sample s;
        s.id = f.stem().string();
        s.domain = opts.domain;
        s.split = masks_dir ? opts.split_if_labeled : Split::train_unlabeled;
        s.image = ImageTensor(ch, cw);
        for (int y = 0; y < ch; ++y)
            for (int x = 0; x < cw; ++x)
                for (int c = 0; c < 3; ++c) {
                    uint8_t v = raw.channels == 1 ? raw.at(oy + y, ox + x, 0) : raw.at(oy + y, ox + x, c);
                    s.image.at(y, x, c) = double(v) / 255.0;
                }
        if (masks_dir) {
            for (const auto& cd : class_dirs) {
                fs::path mp = *masks_dir / cd / f.filename();
                if (!fs::exists(mp)) {
                    throw DataError("missing mask " + mp.string() + " for image " + f.filename().string());
                }
                png::Image8 m = png::read_png(mp);
                if (m.height != raw.height || m.width != raw.width) {
                    throw DataError("mask/image size mismatch for " + f.filename().string());
                }
                BinaryMask bm(ch, cw);
                for (int y = 0; y < ch; ++y)
                    for (int x = 0; x < cw; ++x) bm.at(y, x) = m.at(oy + y, ox + x, 0) > 127 ? 1 : 0;
                s.label.push_back(std::move(bm));
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<double> class_texture_stats(const std::vector<Sample>& samples, int cls, const ExtractorSpec& spec,
                                        double purity) {
    std::vector<double> acc;
    int64_t count = 0;
    for (const auto& s : samples) {
        if (!s.has_label()) continue;
        FeatureMap fm = extract_features(s.image, spec);
        if (acc.empty()) acc.assign(size_t(fm.c), 0.0);
        const BinaryMask& m = s.label.at(size_t(cls));
        int P = spec.patch_size;
        for (int py = 0; py < fm.h; ++py) {
            for (int px = 0; px < fm.w; ++px) {
                int hits = 0;
                for (int y = 0; y < P; ++y)
                    for (int x = 0; x < P; ++x) hits += m.at(py * P + y, px * P + x);
                if (double(hits) < purity * double(P * P)) continue;
                for (int c = 0; c < fm.c; ++c) acc[size_t(c)] += double(fm.at(py, px, c));
                ++count;
            }
        }
    }
    if (count == 0) throw DataError("class_texture_stats: no pure patches found for class " + std::to_string(cls));
    for (auto& v : acc) v /= double(count);
    return acc;
}

double relative_divergence(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("relative_divergence: length mismatch");
    double nd = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        nd += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(nd) / (0.5 * (std::sqrt(na) + std::sqrt(nb)) + 1e-12);
}

namespace {

// Second-moment eccentricity of one pixel set.
double pixel_set_eccentricity(const std::vector<std::pair<int, int>>& pts) {
    double cnt = double(pts.size());
    double mx = 0, my = 0;
    for (auto [y, x] : pts) {
        mx += x;
        my += y;
    }
    mx /= cnt;
    my /= cnt;
    double cxx = 0, cyy = 0, cxy = 0;
    for (auto [y, x] : pts) {
        cxx += (x - mx) * (x - mx);
        cyy += (y - my) * (y - my);
        cxy += (x - mx) * (y - my);
    }
    cxx /= cnt;
    cyy /= cnt;
    cxy /= cnt;
    double tr = cxx + cyy;
    double det = cxx * cyy - cxy * cxy;
    double disc = std::sqrt(std::max(tr * tr / 4.0 - det, 0.0));
    double l1 = tr / 2.0 + disc, l2 = tr / 2.0 - disc;
    if (l1 <= 0) return 0.0;
    return std::sqrt(std::max(1.0 - l2 / l1, 0.0));
}

} // namespace

double mean_blob_eccentricity(const std::vector<Sample>& samples, int cls) {
    // Per connected blob (4-connectivity), so the statistic measures blob
    // elongation rather than the arrangement of blobs in the frame.
    double sum = 0;
    int n = 0;
    for (const auto& s : samples) {
        if (!s.has_label()) continue;
        const BinaryMask& m = s.label.at(size_t(cls));
        std::vector<uint8_t> seen(size_t(m.h) * m.w, 0);
        for (int y0 = 0; y0 < m.h; ++y0) {
            for (int x0 = 0; x0 < m.w; ++x0) {
                if (!m.at(y0, x0) || seen[size_t(y0) * m.w + x0]) continue;
                std::vector<std::pair<int, int>> blob;
                std::vector<std::pair<int, int>> stack{{y0, x0}};
                seen[size_t(y0) * m.w + x0] = 1;
                while (!stack.empty()) {
                    auto [y, x] = stack.back();
                    stack.pop_back();
                    blob.emplace_back(y, x);
                    const int dy[4] = {1, -1, 0, 0}, dx[4] = {0, 0, 1, -1};
                    for (int d = 0; d < 4; ++d) {
                        int ny = y + dy[d], nx = x + dx[d];
                        if (ny < 0 || nx < 0 || ny >= m.h || nx >= m.w) continue;
                        if (!m.at(ny, nx) || seen[size_t(ny) * m.w + nx]) continue;
                        seen[size_t(ny) * m.w + nx] = 1;
                        stack.emplace_back(ny, nx);
                    }
                }
                if (blob.size() < 12) continue; // speckles carry no shape signal
                sum += pixel_set_eccentricity(blob);
                ++n;
            }
        }
    }
    if (n == 0) throw DataError("mean_blob_eccentricity: no usable blobs for class " + std::to_string(cls));
    return sum / double(n);
}

} // namespace dtrf
