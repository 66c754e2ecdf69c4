#pragma once

// Dataset index: CSV I/O, symptom inventory, stratified split.

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "drsc/text.hpp"

namespace drsc {

inline constexpr std::size_t kNumClasses = 25;

inline const std::array<std::string, kNumClasses>& symptom_names() {
    static const std::array<std::string, kNumClasses> names{
        "Acne",          "Back pain",      "Blurry vision",      "Body feels weak", "Cough",
        "Ear ache",      "Emotional pain", "Feeling cold",       "Feeling dizzy",   "Foot ache",
        "Hair falling out", "Hard to breath", "Head ache",       "Heart hurts",     "Infected wound",
        "Injury from sports", "Internal pain", "Joint pain",    "Knee pain",       "Muscle pain",
        "Neck pain",     "Open wound",     "Shoulder pain",      "Skin issue",      "Stomach ache"};
    return names;
}

namespace detail {
inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}
inline std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}
}  // namespace detail

/// Symptom id for a label string (case-insensitive, trimmed); throws on an
/// unknown label.
inline int symptom_id(std::string_view label) {
    const auto key = detail::lower(detail::trim(label));
    const auto& names = symptom_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (detail::lower(names[i]) == key) return static_cast<int>(i);
    throw std::invalid_argument("unknown symptom label '" + std::string(label) + "'");
}

// ---------------------------------------------------------------- CSV

using CsvRow = std::vector<std::string>;

/// RFC 4180 reader: quoted fields, doubled quotes, CRLF, embedded newlines.
inline std::vector<CsvRow> parse_csv(std::istream& in) {
    std::vector<CsvRow> rows;
    CsvRow row;
    std::string field;
    bool quoted = false, any = false;
    char ch;
    while (in.get(ch)) {
        any = true;
        if (quoted) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    field += '"';
                    in.get();
                } else {
                    quoted = false;
                }
            } else {
                field += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (ch == '\n' || ch == '\r') {
            if (ch == '\r' && in.peek() == '\n') in.get();
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else {
            field += ch;
        }
    }
    if (quoted) throw std::runtime_error("CSV ends inside a quoted field");
    if (any) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::vector<CsvRow> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    auto rows = parse_csv(in);
    // skip a UTF-8 byte order mark
    if (!rows.empty() && !rows[0].empty() && rows[0][0].rfind("\xEF\xBB\xBF", 0) == 0) rows[0][0].erase(0, 3);
    return rows;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

inline void write_csv_row(std::ostream& os, const CsvRow& row) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_escape(row[i]);
    os << '\n';
}

/// Column index by header name, or nullopt.
inline std::optional<std::size_t> column(const CsvRow& header, std::string_view name) {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (detail::trim(header[i]) == name) return i;
    return std::nullopt;
}

// ---------------------------------------------------------------- manifest

enum class Split { train, test };

inline std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }
inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

struct ManifestEntry {
    std::string id;
    std::string audio_path;
    std::string transcription;
    int label = 0;
    Split split = Split::train;
    std::optional<double> wer;  // only for corrupted manifests

    bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
    std::vector<ManifestEntry> entries;

    std::vector<const ManifestEntry*> select(Split s) const {
        std::vector<const ManifestEntry*> out;
        for (const auto& e : entries)
            if (e.split == s) out.push_back(&e);
        return out;
    }

    /// [class][split] counts.
    std::vector<std::array<std::size_t, 2>> class_counts() const {
        std::vector<std::array<std::size_t, 2>> c(kNumClasses, {0, 0});
        for (const auto& e : entries) ++c.at(static_cast<std::size_t>(e.label))[e.split == Split::test];
        return c;
    }

    std::vector<std::string> transcriptions(Split s) const {
        std::vector<std::string> out;
        for (const auto& e : entries)
            if (e.split == s) out.push_back(e.transcription);
        return out;
    }
};

/// Assigns round(test_fraction * n_c) entries of every class to test. The
/// shuffle is seeded per class so one class's size never shifts another's
/// assignment.
inline void stratified_split(Manifest& m, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw std::invalid_argument("test fraction must be in [0, 1]");
    std::map<int, std::vector<ManifestEntry*>> by_class;
    for (auto& e : m.entries) by_class[e.label].push_back(&e);
    for (auto& [label, members] : by_class) {
        std::sort(members.begin(), members.end(), [](auto* a, auto* b) { return a->id < b->id; });
        std::mt19937_64 rng(derive_seed(seed, "split/" + std::to_string(label)));
        std::shuffle(members.begin(), members.end(), rng);
        const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(members.size())));
        for (std::size_t i = 0; i < members.size(); ++i) members[i]->split = i < n_test ? Split::test : Split::train;
    }
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
    const bool with_wer = std::any_of(m.entries.begin(), m.entries.end(), [](const auto& e) { return e.wer.has_value(); });
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    CsvRow header{"id", "audio_path", "transcription", "label", "split"};
    if (with_wer) header.push_back("wer");
    write_csv_row(out, header);
    for (const auto& e : m.entries) {
        CsvRow row{e.id, e.audio_path, e.transcription, std::to_string(e.label), to_string(e.split)};
        if (with_wer) {
            std::ostringstream w;
            w.precision(6);
            w << e.wer.value_or(0.0);
            row.push_back(w.str());
        }
        write_csv_row(out, row);
    }
}

inline Manifest read_manifest(const std::filesystem::path& path) {
    const auto rows = read_csv(path);
    if (rows.empty()) throw std::runtime_error(path.string() + ": empty manifest");
    const auto& h = rows[0];
    const auto ci = column(h, "id"), ca = column(h, "audio_path"), ct = column(h, "transcription"), cl = column(h, "label"),
               cs = column(h, "split"), cw = column(h, "wer");
    if (!ci || !ca || !ct || !cl || !cs) throw std::runtime_error(path.string() + ": header must be id,audio_path,transcription,label,split");
    Manifest m;
    std::set<std::string> seen;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() == 1 && row[0].empty()) continue;
        if (row.size() < h.size()) throw std::runtime_error(path.string() + ": short row " + std::to_string(r + 1));
        ManifestEntry e{row[*ci], row[*ca], row[*ct], std::stoi(row[*cl]), parse_split(row[*cs]), std::nullopt};
        if (e.label < 0 || e.label >= static_cast<int>(kNumClasses)) throw std::runtime_error("label out of range for " + e.id);
        if (cw) e.wer = std::stod(row[*cw]);
        if (!seen.insert(e.id).second) throw std::runtime_error("duplicate utterance id " + e.id);
        m.entries.push_back(std::move(e));
    }
    return m;
}

struct ManifestOptions {
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
    bool skip_missing_audio = false;  // otherwise a missing file is an error
};

class MissingAudioError : public std::runtime_error {
public:
    MissingAudioError(std::string id, const std::string& file)
        : std::runtime_error("utterance " + id + ": audio file '" + file + "' not found"), id_(std::move(id)) {}
    const std::string& id() const { return id_; }

private:
    std::string id_;
};

/// Reads `overview-of-recordings.csv` (columns file_name, phrase, prompt) or
/// `index.csv` (columns file_name, transcription, label) under `root`, and
/// resolves each file name by a recursive search for .wav files.
inline Manifest build_manifest(const std::filesystem::path& root, const ManifestOptions& opt = {}) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw std::runtime_error("dataset root " + root.string() + " is not a directory");

    fs::path index = root / "overview-of-recordings.csv";
    if (!fs::exists(index)) index = root / "index.csv";
    if (!fs::exists(index)) throw std::runtime_error("no overview-of-recordings.csv or index.csv under " + root.string());
    const auto rows = read_csv(index);
    if (rows.empty()) throw std::runtime_error(index.string() + " is empty");
    const auto& h = rows[0];
    const auto c_file = column(h, "file_name");
    auto c_text = column(h, "phrase");
    if (!c_text) c_text = column(h, "transcription");
    auto c_label = column(h, "prompt");
    if (!c_label) c_label = column(h, "label");
    if (!c_file || !c_text || !c_label) throw std::runtime_error(index.string() + ": needs file_name, phrase|transcription, prompt|label columns");

    std::unordered_map<std::string, fs::path> audio;
    for (const auto& de : fs::recursive_directory_iterator(root)) {
        if (!de.is_regular_file()) continue;
        auto ext = detail::lower(de.path().extension().string());
        if (ext != ".wav") continue;
        const auto name = de.path().filename().string();
        auto [it, inserted] = audio.emplace(name, de.path());
        if (!inserted && de.path() < it->second) it->second = de.path();
    }

    Manifest m;
    std::set<std::string> ids;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() == 1 && detail::trim(row[0]).empty()) continue;
        if (row.size() <= std::max({*c_file, *c_text, *c_label})) throw std::runtime_error(index.string() + ": short row " + std::to_string(r + 1));
        const std::string file = detail::trim(row[*c_file]);
        const std::string id = fs::path(file).stem().string();
        const int label = symptom_id(row[*c_label]);
        const auto it = audio.find(fs::path(file).filename().string());
        if (it == audio.end()) {
            if (!opt.skip_missing_audio) throw MissingAudioError(id, file);
            spdlog::warn("skipping utterance {}: audio file {} not found", id, file);
            continue;
        }
        if (!ids.insert(id).second) throw std::runtime_error("duplicate utterance id " + id);
        m.entries.push_back({id, fs::weakly_canonical(it->second).string(), detail::trim(row[*c_text]), label, Split::train, std::nullopt});
    }
    std::sort(m.entries.begin(), m.entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    stratified_split(m, opt.test_fraction, opt.seed);
    return m;
}

/// Copy of `m` whose test-split transcriptions (or all, if `all_splits`)
/// are corrupted with per-utterance seeds; records the measured WER.
inline Manifest corrupt_manifest(const Manifest& m, CorruptionSpec spec, const std::vector<std::string>& vocab, bool all_splits = false) {
    Manifest out = m;
    for (auto& e : out.entries) {
        if (!all_splits && e.split != Split::test) {
            e.wer = 0.0;
            continue;
        }
        CorruptionSpec s = spec;
        s.seed = derive_seed(spec.seed, e.id);
        const auto original = e.transcription;
        e.transcription = corrupt_transcription(original, s, vocab);
        e.wer = word_error_rate(original, e.transcription);
    }
    return out;
}

}  // namespace drsc
