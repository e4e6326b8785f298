#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "matrace/nn/mlp.hpp"

namespace matrace::nn {

struct NamedNetwork {
    std::string name;
    MlpSpec spec;
    ParamVector params;
};

/// File layout: "MATRCKPT", u32 format version, u32 header length, JSON
/// header, u64 parameter count, then every parameter as a little-endian
/// IEEE-754 double, networks in header order.
struct Checkpoint {
    std::uint64_t version = 0;
    std::int64_t step = 0;
    nlohmann::json meta = nlohmann::json::object();
    std::vector<NamedNetwork> networks;

    const NamedNetwork& network(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointFormat = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace matrace::nn
