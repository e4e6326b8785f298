#include "matrace/nn/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <stdexcept>

#include "matrace/nn/policy.hpp"

namespace matrace::nn {

namespace {

constexpr std::array<char, 8> kMagic{'M', 'A', 'T', 'R', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::ostream& out, T value) {
    std::array<char, sizeof(T)> bytes;
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
    out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in, const std::filesystem::path& path) {
    std::array<unsigned char, sizeof(T)> bytes;
    if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
        throw std::runtime_error("checkpoint " + path.string() + " is truncated");
    }
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
    return value;
}

}  // namespace

const NamedNetwork& Checkpoint::network(const std::string& name) const {
    for (const auto& n : networks) {
        if (n.name == name) return n;
    }
    throw std::out_of_range("checkpoint has no network named '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    nlohmann::json header;
    header["version"] = checkpoint.version;
    header["step"] = checkpoint.step;
    header["meta"] = checkpoint.meta;
    header["networks"] = nlohmann::json::array();
    std::uint64_t total = 0;
    for (const auto& n : checkpoint.networks) {
        if (n.params.size() != n.spec.param_count()) {
            throw std::invalid_argument("save_checkpoint: network '" + n.name + "' does not match its spec");
        }
        header["networks"].push_back({{"name", n.name}, {"spec", to_json(n.spec)}, {"params", n.params.size()}});
        total += n.params.size();
    }
    const auto text = header.dump();

    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
        out.write(kMagic.data(), kMagic.size());
        put_le<std::uint32_t>(out, kCheckpointFormat);
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        put_le<std::uint64_t>(out, total);
        for (const auto& n : checkpoint.networks) {
            for (double x : n.params.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
        }
        if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::array<char, 8> magic;
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw std::runtime_error(path.string() + " is not a checkpoint file");
    }
    const auto format = get_le<std::uint32_t>(in, path);
    if (format != kCheckpointFormat) {
        throw std::runtime_error("checkpoint " + path.string() + " has format " + std::to_string(format) +
                                 ", this build reads " + std::to_string(kCheckpointFormat));
    }
    const auto header_len = get_le<std::uint32_t>(in, path);
    std::string text(header_len, '\0');
    if (!in.read(text.data(), header_len)) throw std::runtime_error("checkpoint " + path.string() + " is truncated");
    const auto header = nlohmann::json::parse(text);

    Checkpoint out;
    out.version = header.at("version").get<std::uint64_t>();
    out.step = header.at("step").get<std::int64_t>();
    out.meta = header.at("meta");
    const auto total = get_le<std::uint64_t>(in, path);
    std::uint64_t seen = 0;
    for (const auto& entry : header.at("networks")) {
        const auto spec = mlp_spec_from_json(entry.at("spec"));
        const auto count = entry.at("params").get<std::uint64_t>();
        if (count != spec.param_count()) {
            throw std::runtime_error("checkpoint network '" + entry.at("name").get<std::string>() +
                                     "' has a parameter count inconsistent with its spec");
        }
        std::vector<double> values(count);
        for (auto& x : values) x = std::bit_cast<double>(get_le<std::uint64_t>(in, path));
        seen += count;
        out.networks.push_back({entry.at("name").get<std::string>(), spec, ParamVector(spec, std::move(values))});
    }
    if (seen != total) throw std::runtime_error("checkpoint " + path.string() + " parameter count mismatch");
    return out;
}

}  // namespace matrace::nn
