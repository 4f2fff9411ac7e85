#include "densetrf/experiment.h"

#include <fstream>

#include "densetrf/errors.h"
#include "json_util.h"

namespace dtrf {

using jsonutil::json;

ModelConfig ExperimentConfig::model_config(bool concat_full) const {
    ModelConfig mc;
    mc.extractor = extractor;
    mc.slots = slots;
    mc.num_classes = num_classes;
    mc.concat_full = concat_full;
    return mc;
}

void ExperimentConfig::validate() const {
    slots.validate();
    if (extractor.patch_size < 2) throw ConfigError("extractor.patch_size must be >= 2");
    if (extractor.out_channels < 4) throw ConfigError("extractor.out_channels must be >= 4");
    if (seeds.empty()) throw ConfigError("seeds must be non-empty");
    if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
    if (round.steps_per_round < 1 || round.total_rounds < 1) {
        throw ConfigError("round.steps_per_round and round.total_rounds must be >= 1");
    }
    if (round.base_lr <= 0 || round.target_lr <= 0) throw ConfigError("learning rates must be positive");
    if (schedule.phase1_iters < 0 || schedule.phase2_iters < 0 || schedule.phase3_iters < 0 || schedule.total() < 1) {
        throw ConfigError("phase schedule must be non-negative with a positive total");
    }
    if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!data.use_folder()) {
        if (data.source.image_size % extractor.patch_size != 0) {
            throw ConfigError("source image_size must be a multiple of patch_size");
        }
        if (data.target.image_size % extractor.patch_size != 0) {
            throw ConfigError("target image_size must be a multiple of patch_size");
        }
        if (data.source.num_classes() != num_classes || data.target.num_classes() != num_classes) {
            throw ConfigError("num_classes must match the domain spec class counts");
        }
    }
}

ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.data.source = default_source_spec();
    cfg.data.target = default_target_spec();
    return cfg;
}

namespace {

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["extractor"] = {{"kind", c.extractor.kind == ExtractorKind::mock_patch ? "mock_patch" : "external_import"},
                      {"patch_size", c.extractor.patch_size},
                      {"out_channels", c.extractor.out_channels},
                      {"seed", c.extractor.seed}};
    j["slots"] = {{"num_slots", c.slots.num_slots},
                  {"slot_dim", c.slots.slot_dim},
                  {"num_iterations", c.slots.num_iterations},
                  {"adapted_dim", c.slots.adapted_dim},
                  {"mlp_hidden", c.slots.mlp_hidden}};
    j["round"] = {{"steps_per_round", c.round.steps_per_round}, {"total_rounds", c.round.total_rounds},
                  {"base_lr", c.round.base_lr},                 {"target_lr", c.round.target_lr},
                  {"weight_decay", c.round.weight_decay},       {"merge_weight_base", c.round.merge_weight_base},
                  {"batch_size", c.round.batch_size}};
    j["schedule"] = {{"phase1_iters", c.schedule.phase1_iters},
                     {"phase2_iters", c.schedule.phase2_iters},
                     {"phase3_iters", c.schedule.phase3_iters}};
    j["train"] = {{"batch_size", c.train.batch_size},     {"pretrain_steps", c.train.pretrain_steps},
                  {"head_lr", c.train.head_lr},           {"lambda", c.train.lambda},
                  {"eval_interval", c.train.eval_interval}, {"early_stop", c.train.early_stop}};
    j["data"] = {{"root", c.data.root},
                 {"source", jsonutil::domain_spec_to_json(c.data.source)},
                 {"target", jsonutil::domain_spec_to_json(c.data.target)},
                 {"sizes", jsonutil::sizes_to_json(c.data.sizes)},
                 {"images_dir", c.data.images_dir},
                 {"masks_dir", c.data.masks_dir}};
    j["num_classes"] = c.num_classes;
    j["seeds"] = c.seeds;
    j["variant"] = variant_name(c.variant);
    j["output_dir"] = c.output_dir;
    j["jobs"] = c.jobs;
    j["deterministic"] = c.deterministic;
    j["overwrite"] = c.overwrite;
    return j;
}

} // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed config JSON: ") + e.what());
    }
    ExperimentConfig c = default_config();
    try {
        if (j.contains("extractor")) {
            const json& e = j.at("extractor");
            std::string kind = e.value("kind", "mock_patch");
            if (kind == "mock_patch") {
                c.extractor.kind = ExtractorKind::mock_patch;
            } else if (kind == "external_import") {
                c.extractor.kind = ExtractorKind::external_import;
            } else {
                throw ConfigError("unknown extractor kind: " + kind);
            }
            c.extractor.patch_size = e.value("patch_size", c.extractor.patch_size);
            c.extractor.out_channels = e.value("out_channels", c.extractor.out_channels);
            c.extractor.seed = e.value("seed", c.extractor.seed);
        }
        if (j.contains("slots")) {
            const json& s = j.at("slots");
            c.slots.num_slots = s.value("num_slots", c.slots.num_slots);
            c.slots.slot_dim = s.value("slot_dim", c.slots.slot_dim);
            c.slots.num_iterations = s.value("num_iterations", c.slots.num_iterations);
            c.slots.adapted_dim = s.value("adapted_dim", c.slots.adapted_dim);
            c.slots.mlp_hidden = s.value("mlp_hidden", c.slots.mlp_hidden);
        }
        if (j.contains("round")) {
            const json& r = j.at("round");
            c.round.steps_per_round = r.value("steps_per_round", c.round.steps_per_round);
            c.round.total_rounds = r.value("total_rounds", c.round.total_rounds);
            c.round.base_lr = r.value("base_lr", c.round.base_lr);
            c.round.target_lr = r.value("target_lr", c.round.target_lr);
            c.round.weight_decay = r.value("weight_decay", c.round.weight_decay);
            c.round.merge_weight_base = r.value("merge_weight_base", c.round.merge_weight_base);
            c.round.batch_size = r.value("batch_size", c.round.batch_size);
        }
        if (j.contains("schedule")) {
            const json& s = j.at("schedule");
            c.schedule.phase1_iters = s.value("phase1_iters", c.schedule.phase1_iters);
            c.schedule.phase2_iters = s.value("phase2_iters", c.schedule.phase2_iters);
            c.schedule.phase3_iters = s.value("phase3_iters", c.schedule.phase3_iters);
        }
        if (j.contains("train")) {
            const json& t = j.at("train");
            c.train.batch_size = t.value("batch_size", c.train.batch_size);
            c.train.pretrain_steps = t.value("pretrain_steps", c.train.pretrain_steps);
            c.train.head_lr = t.value("head_lr", c.train.head_lr);
            c.train.lambda = t.value("lambda", c.train.lambda);
            c.train.eval_interval = t.value("eval_interval", c.train.eval_interval);
            c.train.early_stop = t.value("early_stop", c.train.early_stop);
        }
        if (j.contains("data")) {
            const json& d = j.at("data");
            c.data.root = d.value("root", c.data.root);
            if (d.contains("source")) c.data.source = jsonutil::domain_spec_from_json(d.at("source"), c.data.source);
            if (d.contains("target")) c.data.target = jsonutil::domain_spec_from_json(d.at("target"), c.data.target);
            if (d.contains("sizes")) c.data.sizes = jsonutil::sizes_from_json(d.at("sizes"), c.data.sizes);
            c.data.images_dir = d.value("images_dir", c.data.images_dir);
            c.data.masks_dir = d.value("masks_dir", c.data.masks_dir);
        }
        c.num_classes = j.value("num_classes", c.num_classes);
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<uint64_t>>();
        if (j.contains("variant")) c.variant = variant_from_name(j.at("variant").get<std::string>());
        c.output_dir = j.value("output_dir", c.output_dir);
        c.jobs = j.value("jobs", c.jobs);
        c.deterministic = j.value("deterministic", c.deterministic);
        c.overwrite = j.value("overwrite", c.overwrite);
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad config field: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig config_from_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

std::string resolved_config_json(const ExperimentConfig& cfg) { return config_to_json(cfg).dump(2); }

std::string config_hash(const ExperimentConfig& cfg) {
    json j = config_to_json(cfg);
    j.erase("output_dir");
    j.erase("jobs");
    j.erase("deterministic");
    j.erase("overwrite");
    std::string s = j.dump();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : s) {
        h ^= uint8_t(ch);
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
    return buf;
}

void write_resolved_config(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream os(dir / "config_resolved.json");
    if (!os) throw Error("cannot write resolved config under " + dir.string());
    json j = config_to_json(cfg);
    j["config_hash"] = config_hash(cfg);
    os << j.dump(2) << "\n";
}

} // namespace dtrf
