#pragma once

// Word-level text handling: normalization, vocabulary, simulated ASR errors.

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace drsc {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";

/// Splits on ASCII whitespace.
inline std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

/// Lowercases, drops ASCII punctuation, splits on whitespace.
inline std::vector<std::string> normalize_words(std::string_view text) {
    std::string clean;
    clean.reserve(text.size());
    for (char ch : text) {
        const auto u = static_cast<unsigned char>(ch);
        if (u < 128 && std::ispunct(u)) continue;
        clean += u < 128 ? static_cast<char>(std::tolower(u)) : ch;
    }
    return split_words(clean);
}

/// Token inventory with PAD = 0 and UNK = 1; remaining ids ordered by
/// descending training frequency, ties alphabetical.
class Vocabulary {
public:
    Vocabulary() : tokens_{std::string(kPadToken), std::string(kUnkToken)} { reindex(); }

    static Vocabulary build(const std::vector<std::string>& transcriptions, std::size_t min_count = 1) {
        std::map<std::string, std::size_t> counts;
        for (const auto& t : transcriptions)
            for (auto& w : normalize_words(t)) ++counts[w];
        std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
        std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        Vocabulary v;
        for (auto& [w, c] : items)
            if (c >= min_count) v.tokens_.push_back(w);
        v.reindex();
        return v;
    }

    /// Rebuilds from an explicit token list whose first two entries are PAD and UNK.
    static Vocabulary from_tokens(std::vector<std::string> tokens) {
        if (tokens.size() < 2 || tokens[0] != kPadToken || tokens[1] != kUnkToken)
            throw std::invalid_argument("vocabulary must start with <pad>, <unk>");
        Vocabulary v;
        v.tokens_ = std::move(tokens);
        v.reindex();
        if (v.index_.size() != v.tokens_.size()) throw std::invalid_argument("vocabulary has duplicate tokens");
        return v;
    }

    int id(const std::string& word) const {
        auto it = index_.find(word);
        return it == index_.end() ? kUnkId : it->second;
    }
    bool contains(const std::string& word) const { return index_.count(word) > 0; }
    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    /// Content words only (no PAD/UNK).
    std::vector<std::string> words() const { return {tokens_.begin() + 2, tokens_.end()}; }

private:
    void reindex() {
        index_.clear();
        for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

struct TokenizedText {
    std::vector<int> ids;  // length l_max, PAD beyond `length`
    std::size_t length = 0;
};

inline TokenizedText tokenize(std::string_view transcription, const Vocabulary& vocab, std::size_t l_max) {
    if (l_max == 0) throw std::invalid_argument("l_max must be positive");
    TokenizedText out{std::vector<int>(l_max, kPadId), 0};
    auto words = normalize_words(transcription);
    if (words.empty()) {
        spdlog::warn("empty transcription, encoding as a single <unk>");
        out.ids[0] = kUnkId;
        out.length = 1;
        return out;
    }
    out.length = std::min(words.size(), l_max);
    for (std::size_t i = 0; i < out.length; ++i) out.ids[i] = vocab.id(words[i]);
    return out;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Per-item seed from a base seed and a stable key, independent of
/// processing order.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view key) {
    std::uint64_t z = fnv1a(key) ^ (base + 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

struct CorruptionSpec {
    double target_wer = 0.26;
    double sub_rate = 0.6;
    double del_rate = 0.2;
    double ins_rate = 0.2;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(target_wer >= 0.0 && target_wer <= 1.0)) throw std::invalid_argument("target_wer must be in [0, 1]");
        if (sub_rate < 0 || del_rate < 0 || ins_rate < 0) throw std::invalid_argument("edit rates must be nonnegative");
        if (std::abs(sub_rate + del_rate + ins_rate - 1.0) > 1e-9) throw std::invalid_argument("edit rates must sum to 1");
    }
};

/// Each word independently receives one edit with probability target_wer:
/// substitution by a different vocabulary word, deletion, or insertion of a
/// random vocabulary word after it. Every edit costs one Levenshtein
/// operation, so the expected WER equals target_wer.
inline std::string corrupt_transcription(std::string_view transcription, const CorruptionSpec& spec,
                                         const std::vector<std::string>& vocab) {
    spec.validate();
    if (vocab.empty()) throw std::invalid_argument("corruption vocabulary is empty");
    const auto words = split_words(transcription);
    if (spec.target_wer == 0.0 || words.empty()) return std::string(transcription);

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
    std::vector<std::string> out;
    for (const auto& w : words) {
        if (u(rng) >= spec.target_wer) {
            out.push_back(w);
            continue;
        }
        const double kind = u(rng) * (spec.sub_rate + spec.del_rate + spec.ins_rate);
        if (kind < spec.sub_rate) {
            std::string repl = vocab[pick(rng)];
            for (int tries = 0; repl == w && tries < 16; ++tries) repl = vocab[pick(rng)];
            if (repl != w) out.push_back(std::move(repl));  // no distinct word available: deletion
        } else if (kind < spec.sub_rate + spec.del_rate) {
            // deleted
        } else {
            out.push_back(w);
            out.push_back(vocab[pick(rng)]);
        }
    }
    std::ostringstream os;
    for (std::size_t i = 0; i < out.size(); ++i) os << (i ? " " : "") << out[i];
    return os.str();
}

/// Word-level Levenshtein distance.
inline std::size_t word_edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
    std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
    for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= ref.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= hyp.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[hyp.size()];
}

/// Edit distance over reference length, on whitespace-split words.
inline double word_error_rate(std::string_view reference, std::string_view hypothesis) {
    const auto ref = split_words(reference), hyp = split_words(hypothesis);
    if (ref.empty()) return hyp.empty() ? 0.0 : 1.0;
    return static_cast<double>(word_edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

}  // namespace drsc
