#pragma once

// Run configuration: every hyperparameter, toggle and path of one run, with a
// strict JSON form, dotted `key=value` overrides and stable hashes.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "drsc/cycle.hpp"
#include "drsc/dataset.hpp"
#include "drsc/optim.hpp"
#include "drsc/synthetic.hpp"

namespace drsc {

/// Configuration errors are usage errors at the CLI level.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Method { drsc, speechic_txt, speechic_mel, speechic_combined };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::drsc: return "drsc";
        case Method::speechic_txt: return "speechic_txt";
        case Method::speechic_mel: return "speechic_mel";
        case Method::speechic_combined: return "speechic_combined";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    for (Method m : {Method::drsc, Method::speechic_txt, Method::speechic_mel, Method::speechic_combined})
        if (s == to_string(m)) return m;
    throw ConfigError("unknown method '" + s + "' (expected drsc, speechic_txt, speechic_mel or speechic_combined)");
}

inline BaselineMode baseline_mode(Method m) {
    switch (m) {
        case Method::speechic_txt: return BaselineMode::txt_only;
        case Method::speechic_mel: return BaselineMode::mel_only;
        case Method::speechic_combined: return BaselineMode::combined;
        case Method::drsc: break;
    }
    throw std::logic_error("drsc has no baseline mode");
}

enum class Precision { float32, float64 };

struct OptimConfig {
    AdamConfig adam;
    /// Global-norm clip per player; 0 disables.
    double grad_clip = 5.0;
};

struct DataConfig {
    enum class Source { prepared, synthetic };
    Source source = Source::prepared;
    std::filesystem::path dir = "prepared";
    SyntheticSpec synthetic;
    /// Synthetic data only; prepared data carries its split in the manifest.
    double test_fraction = 0.2;
};

struct RunConfig {
    Method method = Method::drsc;
    std::uint64_t seed = 0;
    Precision precision = Precision::float32;
    Criterion criterion = Criterion::l1;
    LossWeights weights;
    OptimConfig optim;
    std::size_t batch_size = 16;
    std::size_t max_epochs = 100;
    std::size_t d_steps_per_g_step = 1;
    TextSource text_source;
    ModelSpec model;
    DataConfig data;
    std::filesystem::path out = "runs/default";
    std::size_t log_every = 1;
    /// Hash both parameter groups around each phase and fail on a leak.
    bool check_role_separation = true;

    void validate() const {
        if (!(optim.adam.lr > 0.0)) throw ConfigError("optim.lr must be positive");
        if (optim.adam.beta1 < 0 || optim.adam.beta1 >= 1 || optim.adam.beta2 < 0 || optim.adam.beta2 >= 1)
            throw ConfigError("adam betas must lie in [0, 1)");
        if (!(optim.adam.eps > 0.0)) throw ConfigError("optim.eps must be positive");
        if (optim.grad_clip < 0) throw ConfigError("optim.grad_clip must be nonnegative");
        if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
        if (d_steps_per_g_step == 0) throw ConfigError("d_steps_per_g_step must be at least 1");
        if (log_every == 0) throw ConfigError("log_every must be at least 1");
        for (double w : {weights.cycle, weights.distribution, weights.classification, weights.kl,
                         weights.latent_regression, weights.adversarial})
            if (!(w >= 0.0)) throw ConfigError("loss weights must be nonnegative");
        if (model.dropout < 0 || model.dropout >= 1) throw ConfigError("model.dropout must lie in [0, 1)");
        if (model.encoder.intent_dim == 0 || model.content_dim == 0 || model.encoder.channels == 0)
            throw ConfigError("model dimensions must be positive");
        if (model.encoder.bank_kernels.empty()) throw ConfigError("model.bank_kernels must not be empty");
        for (std::size_t k : model.encoder.bank_kernels)
            if (k == 0) throw ConfigError("model.bank_kernels entries must be positive");
        if (text_source.target_wer < 0 || text_source.target_wer > 1) throw ConfigError("text_source.target_wer must lie in [0, 1]");
        if (data.test_fraction <= 0 || data.test_fraction >= 1) throw ConfigError("data.test_fraction must lie in (0, 1)");
    }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items())
        if (!ok.count(key)) throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
}

template <class V>
void read(const nlohmann::json& j, const char* key, V& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<V>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config key '" + (where.empty() ? std::string(key) : where + "." + key) + "': " + e.what());
    }
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
    using nlohmann::json;
    const auto& m = c.model;
    const auto& s = c.data.synthetic;
    return json{
        {"method", to_string(c.method)},
        {"seed", c.seed},
        {"precision", c.precision == Precision::float64 ? "float64" : "float32"},
        {"criterion", to_string(c.criterion)},
        {"weights",
         {{"cycle", c.weights.cycle},
          {"distribution", c.weights.distribution},
          {"classification", c.weights.classification},
          {"kl", c.weights.kl},
          {"latent_regression", c.weights.latent_regression},
          {"adversarial", c.weights.adversarial},
          {"optional_terms", c.weights.optional_terms}}},
        {"optim",
         {{"lr", c.optim.adam.lr},
          {"beta1", c.optim.adam.beta1},
          {"beta2", c.optim.adam.beta2},
          {"eps", c.optim.adam.eps},
          {"grad_clip", c.optim.grad_clip}}},
        {"batch_size", c.batch_size},
        {"max_epochs", c.max_epochs},
        {"d_steps_per_g_step", c.d_steps_per_g_step},
        {"text_source", {{"kind", c.text_source.corrupted ? "corrupted" : "accurate"}, {"target_wer", c.text_source.target_wer}}},
        {"model",
         {{"bank_kernels", m.encoder.bank_kernels},
          {"channels", m.encoder.channels},
          {"res_blocks", m.encoder.res_blocks},
          {"intent_dim", m.encoder.intent_dim},
          {"content_dim", m.content_dim},
          {"text_dim", m.text_dim},
          {"text_length", m.text_length},
          {"fusion_dim", m.fusion_dim},
          {"disc_channels", m.disc_channels},
          {"disc_layers", m.disc_layers},
          {"dropout", m.dropout},
          {"baseline_channels", m.baseline_channels},
          {"baseline_hidden", m.baseline_hidden}}},
        {"data",
         {{"source", c.data.source == DataConfig::Source::synthetic ? "synthetic" : "prepared"},
          {"dir", c.data.dir.string()},
          {"test_fraction", c.data.test_fraction},
          {"synthetic",
           {{"n_classes", s.n_classes},
            {"n_per_class", s.n_per_class},
            {"shared_dim", s.shared_dim},
            {"private_dim", s.private_dim},
            {"noise_scale", s.noise_scale},
            {"seed", s.seed},
            {"a_channels", s.a_channels},
            {"a_length", s.a_length},
            {"b_channels", s.b_channels},
            {"b_length", s.b_length}}}}},
        {"out", c.out.string()},
        {"log_every", c.log_every},
        {"check_role_separation", c.check_role_separation},
    };
}

/// Strict: unknown keys are rejected, missing keys keep their defaults.
inline RunConfig config_from_json(const nlohmann::json& j) {
    using detail::check_keys;
    using detail::read;
    RunConfig c;
    check_keys(j, "", {"method", "seed", "precision", "criterion", "weights", "optim", "batch_size", "max_epochs",
                       "d_steps_per_g_step", "text_source", "model", "data", "out", "log_every", "check_role_separation"});
    std::string s;
    if (j.contains("method")) {
        read(j, "method", s, "");
        c.method = parse_method(s);
    }
    read(j, "seed", c.seed, "");
    if (j.contains("precision")) {
        read(j, "precision", s, "");
        if (s == "float32") c.precision = Precision::float32;
        else if (s == "float64") c.precision = Precision::float64;
        else throw ConfigError("precision must be float32 or float64, got '" + s + "'");
    }
    if (j.contains("criterion")) {
        read(j, "criterion", s, "");
        try {
            c.criterion = parse_criterion(s);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        check_keys(w, "weights", {"cycle", "distribution", "classification", "kl", "latent_regression", "adversarial", "optional_terms"});
        read(w, "cycle", c.weights.cycle, "weights");
        read(w, "distribution", c.weights.distribution, "weights");
        read(w, "classification", c.weights.classification, "weights");
        read(w, "kl", c.weights.kl, "weights");
        read(w, "latent_regression", c.weights.latent_regression, "weights");
        read(w, "adversarial", c.weights.adversarial, "weights");
        read(w, "optional_terms", c.weights.optional_terms, "weights");
    }
    if (j.contains("optim")) {
        const auto& o = j.at("optim");
        check_keys(o, "optim", {"lr", "beta1", "beta2", "eps", "grad_clip"});
        read(o, "lr", c.optim.adam.lr, "optim");
        read(o, "beta1", c.optim.adam.beta1, "optim");
        read(o, "beta2", c.optim.adam.beta2, "optim");
        read(o, "eps", c.optim.adam.eps, "optim");
        read(o, "grad_clip", c.optim.grad_clip, "optim");
    }
    read(j, "batch_size", c.batch_size, "");
    read(j, "max_epochs", c.max_epochs, "");
    read(j, "d_steps_per_g_step", c.d_steps_per_g_step, "");
    if (j.contains("text_source")) {
        const auto& t = j.at("text_source");
        check_keys(t, "text_source", {"kind", "target_wer"});
        if (t.contains("kind")) {
            read(t, "kind", s, "text_source");
            if (s != "accurate" && s != "corrupted") throw ConfigError("text_source.kind must be accurate or corrupted, got '" + s + "'");
            c.text_source.corrupted = s == "corrupted";
        }
        read(t, "target_wer", c.text_source.target_wer, "text_source");
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, "model", {"bank_kernels", "channels", "res_blocks", "intent_dim", "content_dim", "text_dim", "text_length",
                                "fusion_dim", "disc_channels", "disc_layers", "dropout", "baseline_channels", "baseline_hidden"});
        read(m, "bank_kernels", c.model.encoder.bank_kernels, "model");
        read(m, "channels", c.model.encoder.channels, "model");
        read(m, "res_blocks", c.model.encoder.res_blocks, "model");
        read(m, "intent_dim", c.model.encoder.intent_dim, "model");
        read(m, "content_dim", c.model.content_dim, "model");
        read(m, "text_dim", c.model.text_dim, "model");
        read(m, "text_length", c.model.text_length, "model");
        read(m, "fusion_dim", c.model.fusion_dim, "model");
        read(m, "disc_channels", c.model.disc_channels, "model");
        read(m, "disc_layers", c.model.disc_layers, "model");
        read(m, "dropout", c.model.dropout, "model");
        read(m, "baseline_channels", c.model.baseline_channels, "model");
        read(m, "baseline_hidden", c.model.baseline_hidden, "model");
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        check_keys(d, "data", {"source", "dir", "test_fraction", "synthetic"});
        if (d.contains("source")) {
            read(d, "source", s, "data");
            if (s == "prepared") c.data.source = DataConfig::Source::prepared;
            else if (s == "synthetic") c.data.source = DataConfig::Source::synthetic;
            else throw ConfigError("data.source must be prepared or synthetic, got '" + s + "'");
        }
        if (d.contains("dir")) {
            read(d, "dir", s, "data");
            c.data.dir = s;
        }
        read(d, "test_fraction", c.data.test_fraction, "data");
        if (d.contains("synthetic")) {
            const auto& y = d.at("synthetic");
            auto& sp = c.data.synthetic;
            check_keys(y, "data.synthetic", {"n_classes", "n_per_class", "shared_dim", "private_dim", "noise_scale", "seed",
                                             "a_channels", "a_length", "b_channels", "b_length"});
            read(y, "n_classes", sp.n_classes, "data.synthetic");
            read(y, "n_per_class", sp.n_per_class, "data.synthetic");
            read(y, "shared_dim", sp.shared_dim, "data.synthetic");
            read(y, "private_dim", sp.private_dim, "data.synthetic");
            read(y, "noise_scale", sp.noise_scale, "data.synthetic");
            read(y, "seed", sp.seed, "data.synthetic");
            read(y, "a_channels", sp.a_channels, "data.synthetic");
            read(y, "a_length", sp.a_length, "data.synthetic");
            read(y, "b_channels", sp.b_channels, "data.synthetic");
            read(y, "b_length", sp.b_length, "data.synthetic");
        }
    }
    if (j.contains("out")) {
        read(j, "out", s, "");
        c.out = s;
    }
    read(j, "log_every", c.log_every, "");
    read(j, "check_role_separation", c.check_role_separation, "");
    c.validate();
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

inline void save_config(const std::filesystem::path& path, const RunConfig& c) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_json(c).dump(2) << '\n';
}

/// Applies `a.b.c=value`. The value is read as JSON when it parses (numbers,
/// booleans, arrays) and as a plain string otherwise. The key must already
/// exist, so typos fail loudly.
inline RunConfig apply_override(const RunConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not of the form key=value");
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    nlohmann::json j = to_json(c);
    nlohmann::json* node = &j;
    std::stringstream path(key);
    std::string part;
    while (std::getline(path, part, '.')) {
        if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
        node = &(*node)[part];
    }
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    if (node->is_string() && !value.is_string()) value = text;
    *node = std::move(value);
    return config_from_json(j);
}

inline RunConfig apply_overrides(RunConfig c, const std::vector<std::string>& assignments) {
    for (const auto& a : assignments) c = apply_override(c, a);
    return c;
}

namespace detail {
inline void erase_path(nlohmann::json& j, const std::string& dotted) {
    nlohmann::json* node = &j;
    std::stringstream path(dotted);
    std::string part, last;
    std::vector<std::string> parts;
    while (std::getline(path, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->contains(parts[i])) return;
        node = &(*node)[parts[i]];
    }
    node->erase(parts.back());
}
}  // namespace detail

/// FNV-1a of the canonical (sorted-key) JSON with the given dotted keys removed.
inline std::uint64_t config_hash(const RunConfig& c, const std::vector<std::string>& excluded = {}) {
    nlohmann::json j = to_json(c);
    for (const auto& k : excluded) detail::erase_path(j, k);
    return fnv1a(j.dump());
}

/// Keys that do not change what a checkpoint's parameters mean: where
/// things are written, how long training runs, and logging.
inline const std::vector<std::string>& bookkeeping_keys() {
    static const std::vector<std::string> keys{"out", "data.dir", "max_epochs", "log_every", "check_role_separation"};
    return keys;
}

/// Identity of a training run for checkpoint compatibility.
inline std::uint64_t training_hash(const RunConfig& c) { return config_hash(c, bookkeeping_keys()); }

inline std::string hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace drsc
