#include "densetrf/checkpoint.h"

#include <fstream>
#include <nlohmann/json.hpp>
#include <vector>

#include "densetrf/binio.h"
#include "densetrf/errors.h"

namespace dtrf {

namespace fs = std::filesystem;
using nlohmann::json;

void save_checkpoint(const ParameterSet& params, const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open checkpoint for writing: " + path.string());
    binio::write_magic(os, "DTRF-C");
    binio::write_u16(os, kCheckpointVersion);
    binio::write_u32(os, uint32_t(params.count()));
    std::vector<float> buf;
    for (const auto& name : params.names()) {
        const Tensor& t = params.at(name);
        binio::write_u32(os, uint32_t(name.size()));
        os.write(name.data(), std::streamsize(name.size()));
        binio::write_u32(os, uint32_t(t.rank()));
        for (int i = 0; i < t.rank(); ++i) binio::write_u32(os, uint32_t(t.dim(i)));
        buf.resize(size_t(t.size()));
        for (int64_t i = 0; i < t.size(); ++i) buf[size_t(i)] = float(t[i]);
        binio::write_f32_array(os, buf.data(), buf.size());
    }
    if (!os) throw Error("write failed for checkpoint: " + path.string());
}

ParameterSet load_checkpoint(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open checkpoint: " + path.string());
    binio::expect_magic(is, "DTRF-C", path.string());
    uint16_t version = binio::read_u16(is);
    if (version != kCheckpointVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    }
    uint32_t count = binio::read_u32(is);
    ParameterSet out;
    std::vector<float> buf;
    for (uint32_t e = 0; e < count; ++e) {
        uint32_t name_len = binio::read_u32(is);
        if (name_len > 4096) throw ParseError("implausible name length in checkpoint");
        std::string name(name_len, '\0');
        is.read(name.data(), std::streamsize(name_len));
        if (!is) throw ParseError("truncated checkpoint name");
        uint32_t rank = binio::read_u32(is);
        if (rank > 8) throw ParseError("implausible tensor rank in checkpoint");
        std::vector<int> shape(rank);
        int64_t n = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            shape[d] = int(binio::read_u32(is));
            n *= shape[d];
        }
        buf.resize(size_t(n));
        binio::read_f32_array(is, buf.data(), buf.size(), path.string());
        Tensor t(shape);
        for (int64_t i = 0; i < n; ++i) t[i] = double(buf[size_t(i)]);
        out.add(name, std::move(t));
    }
    return out;
}

void save_checkpoint_meta(const CheckpointMeta& meta, const fs::path& checkpoint_path) {
    json j;
    j["round"] = meta.round;
    j["phase"] = meta.phase;
    j["seed"] = meta.seed;
    j["config_hash"] = meta.config_hash;
    fs::path p = checkpoint_path;
    p += ".meta.json";
    std::ofstream os(p);
    if (!os) throw Error("cannot write checkpoint metadata: " + p.string());
    os << j.dump(2) << "\n";
}

CheckpointMeta load_checkpoint_meta(const fs::path& checkpoint_path) {
    fs::path p = checkpoint_path;
    p += ".meta.json";
    std::ifstream is(p);
    if (!is) throw Error("cannot read checkpoint metadata: " + p.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ParseError("malformed checkpoint metadata " + p.string() + ": " + e.what());
    }
    CheckpointMeta meta;
    meta.round = j.value("round", -1);
    meta.phase = j.value("phase", "");
    meta.seed = j.value("seed", uint64_t(0));
    meta.config_hash = j.value("config_hash", "");
    return meta;
}

} // namespace dtrf
