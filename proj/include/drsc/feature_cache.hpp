#pragma once

// Per-utterance binary feature files plus a JSON sidecar of extraction
// parameters. File layout (little-endian):
//   "DRSCFC01" | u32 version | u32 n_arrays
//   per array: u32 name_len | name | u32 rank | u64 dims[rank] | f32 data[numel]

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include "drsc/tensor.hpp"
#include "drsc/text.hpp"

namespace drsc {

static_assert(std::endian::native == std::endian::little, "feature cache I/O assumes a little-endian host");

inline constexpr char kCacheMagic[8] = {'D', 'R', 'S', 'C', 'F', 'C', '0', '1'};
inline constexpr std::uint32_t kCacheVersion = 1;

using FeatureRecord = std::map<std::string, Tensor<float>>;

namespace detail {
template <class V>
void put(std::ostream& os, V v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}
template <class V>
V get(std::istream& is, const std::string& what) {
    V v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(V))) throw std::runtime_error("truncated " + what);
    return v;
}
}  // namespace detail

inline void write_feature_file(const std::filesystem::path& path, const FeatureRecord& arrays) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.write(kCacheMagic, 8);
    detail::put<std::uint32_t>(os, kCacheVersion);
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& [name, t] : arrays) {
        detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) detail::put<std::uint64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("write failed for " + path.string());
}

inline FeatureRecord read_feature_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open feature file " + path.string());
    const std::string what = "feature file " + path.string();
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kCacheMagic, 8) != 0) throw std::runtime_error(what + ": bad magic");
    const auto version = detail::get<std::uint32_t>(is, what);
    if (version != kCacheVersion) throw std::runtime_error(what + ": unsupported version " + std::to_string(version));
    const auto n = detail::get<std::uint32_t>(is, what);
    FeatureRecord out;
    for (std::uint32_t i = 0; i < n; ++i) {
        const auto len = detail::get<std::uint32_t>(is, what);
        if (len > 4096) throw std::runtime_error(what + ": corrupt array name");
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw std::runtime_error("truncated " + what);
        const auto rank = detail::get<std::uint32_t>(is, what);
        if (rank > 8) throw std::runtime_error(what + ": corrupt rank");
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(detail::get<std::uint64_t>(is, what));
        Tensor<float> t(shape);
        if (!is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float))))
            throw std::runtime_error("truncated " + what);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

/// Directory of `<id>.bin` files governed by `params.json`. Opening with
/// different parameters clears the stale files.
class FeatureCache {
public:
    FeatureCache(std::filesystem::path dir, nlohmann::json params) : dir_(std::move(dir)), params_(std::move(params)) {
        hash_ = fnv1a(params_.dump());
        std::filesystem::create_directories(dir_);
        const auto side = sidecar();
        bool valid = false;
        if (std::filesystem::exists(side)) {
            std::ifstream in(side);
            const auto stored = nlohmann::json::parse(in, nullptr, false);
            valid = !stored.is_discarded() && stored.value("hash", std::string()) == hash_string();
        }
        if (!valid) {
            for (const auto& de : std::filesystem::directory_iterator(dir_))
                if (de.path().extension() == ".bin") std::filesystem::remove(de.path());
            std::ofstream out(side);
            out << nlohmann::json{{"version", kCacheVersion}, {"hash", hash_string()}, {"params", params_}}.dump(2) << '\n';
        }
        invalidated_ = !valid;
    }

    /// Opens an existing cache without changing it; throws if absent.
    static FeatureCache open_existing(const std::filesystem::path& dir) {
        const auto side = dir / "params.json";
        if (!std::filesystem::exists(side))
            throw std::runtime_error("feature cache " + dir.string() + " not found; run `drsc prep` first");
        std::ifstream in(side);
        const auto stored = nlohmann::json::parse(in);
        return FeatureCache(dir, stored.at("params"));
    }

    bool was_invalidated() const { return invalidated_; }
    const nlohmann::json& params() const { return params_; }
    std::string hash_string() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
        return buf;
    }

    std::filesystem::path path_for(const std::string& id) const { return dir_ / (id + ".bin"); }
    bool contains(const std::string& id) const { return std::filesystem::exists(path_for(id)); }
    void store(const std::string& id, const FeatureRecord& arrays) const { write_feature_file(path_for(id), arrays); }
    FeatureRecord load(const std::string& id) const {
        if (!contains(id)) throw std::runtime_error("no cached features for " + id + "; run `drsc prep` first");
        return read_feature_file(path_for(id));
    }

private:
    std::filesystem::path sidecar() const { return dir_ / "params.json"; }

    std::filesystem::path dir_;
    nlohmann::json params_;
    std::uint64_t hash_ = 0;
    bool invalidated_ = false;
};

}  // namespace drsc
