#pragma once

// Internal JSON (de)serialization helpers shared by the manifest writer and
// the experiment config loader. Not installed.

#include <nlohmann/json.hpp>

#include "densetrf/synthdata.h"

namespace dtrf::jsonutil {

using nlohmann::json;

json texture_to_json(const TextureDesc& t);
TextureDesc texture_from_json(const json& j, const TextureDesc& defaults = {});

json domain_spec_to_json(const DomainSpec& d);
DomainSpec domain_spec_from_json(const json& j, const DomainSpec& defaults = {});

json sizes_to_json(const BenchmarkSizes& s);
BenchmarkSizes sizes_from_json(const json& j, const BenchmarkSizes& defaults = {});

} // namespace dtrf::jsonutil
