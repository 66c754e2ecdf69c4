#pragma once

// Versioned checkpoint container: a JSON header (config, hashes, counters,
// RNG state) followed by named float64 tensors, little-endian.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include "drsc/feature_cache.hpp"
#include "drsc/tensor.hpp"

namespace drsc {

inline constexpr char kCheckpointMagic[8] = {'D', 'R', 'S', 'C', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Raised when a checkpoint was written by a differently configured run.
class CheckpointMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    nlohmann::json header;
    std::map<std::string, Tensor<double>> tensors;

    const Tensor<double>& tensor(const std::string& name) const {
        const auto it = tensors.find(name);
        if (it == tensors.end()) throw std::runtime_error("checkpoint has no tensor '" + name + "'");
        return it->second;
    }
};

/// Writes to a sibling temporary and renames, so a crash never leaves a
/// half-written checkpoint under the final name.
inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(kCheckpointMagic, sizeof kCheckpointMagic);
        detail::put<std::uint32_t>(out, kCheckpointVersion);
        const std::string header = ck.header.dump();
        detail::put<std::uint64_t>(out, header.size());
        out.write(header.data(), static_cast<std::streamsize>(header.size()));
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.tensors.size()));
        for (const auto& [name, t] : ck.tensors) {
            detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
            for (std::size_t d : t.shape()) detail::put<std::uint64_t>(out, d);
            out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        }
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw std::runtime_error(path.string() + " is not a checkpoint file");
    const auto version = detail::get<std::uint32_t>(in, "version");
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
    Checkpoint ck;
    std::string header(detail::get<std::uint64_t>(in, "header size"), '\0');
    if (!in.read(header.data(), static_cast<std::streamsize>(header.size()))) throw std::runtime_error("truncated checkpoint header");
    ck.header = nlohmann::json::parse(header);
    const auto count = detail::get<std::uint32_t>(in, "tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name(detail::get<std::uint32_t>(in, "name size"), '\0');
        if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) throw std::runtime_error("truncated tensor name");
        Shape shape(detail::get<std::uint32_t>(in, name + " rank"));
        for (auto& d : shape) d = detail::get<std::uint64_t>(in, name + " shape");
        Tensor<double> t(shape);
        if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double))))
            throw std::runtime_error("truncated data for tensor " + name);
        ck.tensors.emplace(std::move(name), std::move(t));
    }
    return ck;
}

}  // namespace drsc
