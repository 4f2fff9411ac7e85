#include "json_util.h"

namespace dtrf::jsonutil {

json texture_to_json(const TextureDesc& t) {
    return json{{"base_freq", t.base_freq},   {"orientation", t.orientation}, {"noise_octaves", t.noise_octaves},
                {"noise_amp", t.noise_amp},   {"palette", t.palette},         {"contrast", t.contrast}};
}

TextureDesc texture_from_json(const json& j, const TextureDesc& defaults) {
    TextureDesc t = defaults;
    t.base_freq = j.value("base_freq", t.base_freq);
    t.orientation = j.value("orientation", t.orientation);
    t.noise_octaves = j.value("noise_octaves", t.noise_octaves);
    t.noise_amp = j.value("noise_amp", t.noise_amp);
    t.palette = j.value("palette", t.palette);
    t.contrast = j.value("contrast", t.contrast);
    return t;
}

json domain_spec_to_json(const DomainSpec& d) {
    json textures = json::array();
    for (const auto& t : d.textures) textures.push_back(texture_to_json(t));
    return json{{"name", d.name},
                {"image_size", d.image_size},
                {"textures", textures},
                {"shape",
                 {{"deform_amplitude", d.shape.deform_amplitude},
                  {"smoothness", d.shape.smoothness},
                  {"anisotropy", d.shape.anisotropy},
                  {"area_fraction", d.shape.area_fraction}}},
                {"photometric", {{"brightness", d.photometric.brightness}, {"tint", d.photometric.tint}}},
                {"seed", d.seed}};
}

DomainSpec domain_spec_from_json(const json& j, const DomainSpec& defaults) {
    DomainSpec d = defaults;
    d.name = j.value("name", d.name);
    d.image_size = j.value("image_size", d.image_size);
    if (j.contains("textures")) {
        d.textures.clear();
        for (const auto& tj : j.at("textures")) d.textures.push_back(texture_from_json(tj));
    }
    if (j.contains("shape")) {
        const json& s = j.at("shape");
        d.shape.deform_amplitude = s.value("deform_amplitude", d.shape.deform_amplitude);
        d.shape.smoothness = s.value("smoothness", d.shape.smoothness);
        d.shape.anisotropy = s.value("anisotropy", d.shape.anisotropy);
        d.shape.area_fraction = s.value("area_fraction", d.shape.area_fraction);
    }
    if (j.contains("photometric")) {
        const json& p = j.at("photometric");
        d.photometric.brightness = p.value("brightness", d.photometric.brightness);
        d.photometric.tint = p.value("tint", d.photometric.tint);
    }
    d.seed = j.value("seed", d.seed);
    return d;
}

json sizes_to_json(const BenchmarkSizes& s) {
    return json{{"labeled", s.labeled}, {"unlabeled", s.unlabeled}, {"test", s.test}};
}

BenchmarkSizes sizes_from_json(const json& j, const BenchmarkSizes& defaults) {
    BenchmarkSizes s = defaults;
    s.labeled = j.value("labeled", s.labeled);
    s.unlabeled = j.value("unlabeled", s.unlabeled);
    s.test = j.value("test", s.test);
    return s;
}

} // namespace dtrf::jsonutil
