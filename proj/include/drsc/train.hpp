#pragma once

// Alternating min-max training, checkpointing and the epoch loop.

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "drsc/checkpoint.hpp"
#include "drsc/config.hpp"
#include "drsc/cycle.hpp"
#include "drsc/dataset.hpp"
#include "drsc/optim.hpp"

namespace drsc {

/// A loss became NaN or infinite; training cannot continue.
class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A parameter of the frozen player changed during the other player's phase.
class RoleSeparationError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// ------------------------------------------------------------------ data

inline Dataset load_dataset(const RunConfig& cfg) {
    if (cfg.data.source == DataConfig::Source::synthetic) {
        if (cfg.text_source.corrupted) throw ConfigError("corrupted text needs prepared data, not the synthetic source");
        const auto& s = cfg.data.synthetic;
        Dataset ds = dataset_from_synthetic(make_synthetic_dataset(s), cfg.data.test_fraction, derive_seed(s.seed, "split"));
        ds.fingerprint = hex(fnv1a(to_json(cfg)["data"]["synthetic"].dump()));
        return ds;
    }
    return load_prepared(cfg.data.dir, cfg.text_source, cfg.model.text_length);
}

/// Model shape with the data-dependent fields filled in from the dataset.
inline ModelSpec resolve_model_spec(const RunConfig& cfg, const Dataset& ds) {
    ModelSpec s = cfg.model;
    if (ds.dense_text) {
        s.text_dim = ds.text_channels;
        s.vocab_size = 0;
    } else {
        s.vocab_size = ds.vocab.size();
    }
    s.text_length = ds.text_length;
    s.n_mels = ds.mel_channels;
    s.mel_frames = ds.mel_frames;
    s.n_classes = ds.n_classes;
    return s;
}

inline nlohmann::json spec_json(const ModelSpec& s) {
    return {{"vocab_size", s.vocab_size}, {"n_classes", s.n_classes}, {"text_dim", s.text_dim}, {"text_length", s.text_length},
            {"n_mels", s.n_mels},         {"mel_frames", s.mel_frames}};
}

// ------------------------------------------------------------------ trainers

namespace detail {
template <class T, class Net>
Var<T> text_input(const Net& net, const Batch<T>& b) {
    if (!b.token_ids.empty()) return net.embed(b.token_ids, b.size());
    return constant(b.text_dense);
}

template <class T>
void require_finite(double v, const char* what, std::uint64_t step) {
    if (!std::isfinite(v)) throw NonFiniteLoss(std::string(what) + " is not finite at step " + std::to_string(step));
}
}  // namespace detail

/// Two-player trainer for the disentangling model.
template <class T>
class DrscTrainer {
public:
    using scalar_type = T;

    DrscTrainer(const RunConfig& cfg, const ModelSpec& spec)
        : cfg_(cfg),
          net_(spec, derive_seed(cfg.seed, "init")),
          rng_(derive_seed(cfg.seed, "train")),
          min_opt_(net_.params().group(Role::min_player), cfg.optim.adam),
          max_opt_(net_.params().group(Role::max_player), cfg.optim.adam) {}

    /// (1) d_steps discriminator updates with the min player frozen, then
    /// (2) one min-player update with the discriminators frozen.
    LossBreakdown train_step(const Batch<T>& b) {
        const ForwardContext ctx{true, &rng_};
        const double adv = cfg_.weights.effective_adversarial();
        const Var<T> mel = constant(b.mel);
        if (adv != 0.0) {
            for (std::size_t k = 0; k < cfg_.d_steps_per_g_step; ++k) {
                const auto frozen = guard_hash(Role::min_player);
                net_.params().zero_grad();
                const Var<T> d_loss = scale(discriminator_objective(net_, detail::text_input(net_, b), mel, b.lengths, ctx), static_cast<T>(adv));
                detail::require_finite<T>(static_cast<double>(d_loss.item()), "discriminator loss", steps_ + 1);
                backward(d_loss);
                max_opt_.clip_grad_norm(cfg_.optim.grad_clip);
                max_opt_.step();
                check_unchanged(Role::min_player, frozen, "discriminator");
            }
        }
        const auto frozen = guard_hash(Role::max_player);
        net_.params().zero_grad();
        const Objective<T> obj = total_objective(net_, detail::text_input(net_, b), mel, b.lengths, b.labels, cfg_.weights, cfg_.criterion, ctx);
        detail::require_finite<T>(obj.terms.min_total, "min-player loss", steps_ + 1);
        detail::require_finite<T>(obj.terms.max_total, "max-player loss", steps_ + 1);
        backward(obj.min_loss);
        min_opt_.clip_grad_norm(cfg_.optim.grad_clip);
        min_opt_.step();
        check_unchanged(Role::max_player, frozen, "min-player");
        ++steps_;
        return obj.terms;
    }

    /// Objective terms without any update.
    LossBreakdown measure(const Batch<T>& b) {
        NoGradGuard guard;
        const ForwardContext ctx{true, &rng_};
        return total_objective(net_, detail::text_input(net_, b), constant(b.mel), b.lengths, b.labels, cfg_.weights, cfg_.criterion, ctx).terms;
    }

    std::vector<int> predict(const Batch<T>& b) const {
        NoGradGuard guard;
        return drsc::predict(net_, detail::text_input(net_, b), constant(b.mel), b.lengths);
    }

    DrscModel<T>& model() { return net_; }
    const DrscModel<T>& model() const { return net_; }
    ParamStore<T>& params() { return net_.params(); }
    const ParamStore<T>& params() const { return net_.params(); }
    Rng& rng() { return rng_; }
    std::uint64_t steps() const { return steps_; }
    void set_steps(std::uint64_t s) { steps_ = s; }
    std::vector<std::pair<std::string, Adam<T>*>> optimizers() { return {{"min", &min_opt_}, {"max", &max_opt_}}; }
    const Adam<T>& optimizer(Role r) const { return r == Role::min_player ? min_opt_ : max_opt_; }

private:
    std::uint64_t guard_hash(Role r) const { return cfg_.check_role_separation ? hash_group(net_.params(), r) : 0; }

    void check_unchanged(Role r, std::uint64_t before, const char* phase) const {
        if (cfg_.check_role_separation && hash_group(net_.params(), r) != before)
            throw RoleSeparationError(std::string(r == Role::min_player ? "min" : "max") + "-player parameters changed during the " +
                                      phase + " phase");
    }

    RunConfig cfg_;
    DrscModel<T> net_;
    Rng rng_;
    Adam<T> min_opt_, max_opt_;
    std::uint64_t steps_ = 0;
};

/// Single-player trainer for the SpeechIC baseline (cross-entropy only).
template <class T>
class SpeechIcTrainer {
public:
    using scalar_type = T;

    SpeechIcTrainer(const RunConfig& cfg, const ModelSpec& spec)
        : cfg_(cfg),
          net_(spec, baseline_mode(cfg.method), derive_seed(cfg.seed, "init")),
          rng_(derive_seed(cfg.seed, "train")),
          opt_(net_.params().group(Role::min_player), cfg.optim.adam) {}

    LossBreakdown train_step(const Batch<T>& b) {
        net_.params().zero_grad();
        const Var<T> loss = forward_loss(b, ForwardContext{true, &rng_});
        const LossBreakdown terms = breakdown(loss);
        detail::require_finite<T>(terms.min_total, "classification loss", steps_ + 1);
        backward(loss);
        opt_.clip_grad_norm(cfg_.optim.grad_clip);
        opt_.step();
        ++steps_;
        return terms;
    }

    LossBreakdown measure(const Batch<T>& b) {
        NoGradGuard guard;
        return breakdown(forward_loss(b, ForwardContext{true, &rng_}));
    }

    std::vector<int> predict(const Batch<T>& b) const {
        NoGradGuard guard;
        return argmax_rows(logits(b, ForwardContext{}).value());
    }

    SpeechIcModel<T>& model() { return net_; }
    ParamStore<T>& params() { return net_.params(); }
    const ParamStore<T>& params() const { return net_.params(); }
    Rng& rng() { return rng_; }
    std::uint64_t steps() const { return steps_; }
    void set_steps(std::uint64_t s) { steps_ = s; }
    std::vector<std::pair<std::string, Adam<T>*>> optimizers() { return {{"min", &opt_}}; }
    const Adam<T>& optimizer(Role) const { return opt_; }

private:
    Var<T> logits(const Batch<T>& b, const ForwardContext& ctx) const {
        Var<T> text, mel;
        if (net_.uses_text()) text = detail::text_input(net_, b);
        if (net_.uses_mel()) mel = constant(b.mel);
        return net_.forward(&text, b.lengths, &mel, ctx);
    }

    Var<T> forward_loss(const Batch<T>& b, const ForwardContext& ctx) {
        return scale(classification_loss(logits(b, ctx), b.labels), static_cast<T>(cfg_.weights.classification));
    }

    LossBreakdown breakdown(const Var<T>& loss) const {
        LossBreakdown t;
        const auto i = static_cast<std::size_t>(Term::classification);
        t.weight[i] = cfg_.weights.classification;
        t.value[i] = cfg_.weights.classification != 0.0 ? static_cast<double>(loss.item()) / cfg_.weights.classification : 0.0;
        t.min_total = static_cast<double>(loss.item());
        return t;
    }

    RunConfig cfg_;
    SpeechIcModel<T> net_;
    Rng rng_;
    Adam<T> opt_;
    std::uint64_t steps_ = 0;
};

/// Builds the trainer that `cfg` asks for and hands it to `f`. Every branch
/// must return the same type.
template <class F>
decltype(auto) visit_trainer(const RunConfig& cfg, const ModelSpec& spec, F&& f) {
    auto by_method = [&]<class T>(std::type_identity<T>) -> decltype(auto) {
        if (cfg.method == Method::drsc) {
            DrscTrainer<T> t(cfg, spec);
            return f(t);
        }
        SpeechIcTrainer<T> t(cfg, spec);
        return f(t);
    };
    if (cfg.precision == Precision::float64) return by_method(std::type_identity<double>{});
    return by_method(std::type_identity<float>{});
}

// ------------------------------------------------------------------ checkpoints

struct TrainProgress {
    std::uint64_t step = 0;
    std::size_t epoch = 0;
    double best_accuracy = -1.0;
    std::size_t best_epoch = 0;
};

template <class Trainer>
Checkpoint make_checkpoint(Trainer& tr, const RunConfig& cfg, const ModelSpec& spec, const Dataset& ds, const TrainProgress& p) {
    Checkpoint ck;
    std::ostringstream rng;
    rng << tr.rng();
    nlohmann::json adam = nlohmann::json::object();
    for (auto& [group, opt] : tr.optimizers()) {
        adam[group] = opt->steps();
        for (std::size_t i = 0; i < opt->params().size(); ++i) {
            const std::string& name = opt->params()[i].name;
            ck.tensors.emplace("adam/" + group + "/" + name + "/m", opt->first_moment(i).template cast<double>());
            ck.tensors.emplace("adam/" + group + "/" + name + "/v", opt->second_moment(i).template cast<double>());
        }
    }
    for (const auto& p : tr.params().all()) ck.tensors.emplace("param/" + p.name, p.var.value().template cast<double>());
    ck.header = {{"config", to_json(cfg)},
                 {"config_hash", hex(config_hash(cfg))},
                 {"training_hash", hex(training_hash(cfg))},
                 {"data_fingerprint", ds.fingerprint},
                 {"spec", spec_json(spec)},
                 {"step", p.step},
                 {"epoch", p.epoch},
                 {"best_accuracy", p.best_accuracy},
                 {"best_epoch", p.best_epoch},
                 {"adam_steps", adam},
                 {"rng", rng.str()}};
    return ck;
}

/// Rejects a checkpoint from a run with a different training identity or
/// different features, unless forced.
inline void check_compatible(const Checkpoint& ck, const RunConfig& cfg, const Dataset& ds, bool force) {
    const std::string want = hex(training_hash(cfg)), got = ck.header.at("training_hash").get<std::string>();
    if (got != want) {
        const std::string msg = "checkpoint config hash " + got + " does not match the run config hash " + want;
        if (!force) throw CheckpointMismatch(msg + "; pass --force to load anyway");
        spdlog::warn("{} (forced)", msg);
    }
    const std::string fp = ck.header.value("data_fingerprint", std::string());
    if (fp != ds.fingerprint) {
        const std::string msg = "checkpoint was trained on features " + fp + " but the data has " + ds.fingerprint;
        if (!force) throw CheckpointMismatch(msg + "; rerun prep with the original parameters or pass --force");
        spdlog::warn("{} (forced)", msg);
    }
}

/// Restores parameters, optimizer moments, RNG and step counter.
template <class Trainer>
TrainProgress restore_checkpoint(Trainer& tr, const Checkpoint& ck) {
    using T = typename Trainer::scalar_type;
    for (auto& p : tr.params().all()) {
        const Tensor<double>& src = ck.tensor("param/" + p.name);
        require_shape(src.shape(), p.var.shape(), ("checkpoint parameter " + p.name).c_str());
        auto* named = tr.params().find(p.name);
        named->var.mutable_value() = src.template cast<T>();
    }
    const auto& adam = ck.header.at("adam_steps");
    for (auto& [group, opt] : tr.optimizers()) {
        std::vector<Tensor<T>> m, v;
        for (const auto& p : opt->params()) {
            m.push_back(ck.tensor("adam/" + group + "/" + p.name + "/m").template cast<T>());
            v.push_back(ck.tensor("adam/" + group + "/" + p.name + "/v").template cast<T>());
        }
        opt->restore(adam.at(group).template get<std::uint64_t>(), std::move(m), std::move(v));
    }
    std::istringstream rng(ck.header.at("rng").get<std::string>());
    rng >> tr.rng();
    if (!rng) throw std::runtime_error("corrupt RNG state in checkpoint");
    TrainProgress p;
    p.step = ck.header.at("step").get<std::uint64_t>();
    p.epoch = ck.header.at("epoch").get<std::size_t>();
    p.best_accuracy = ck.header.at("best_accuracy").get<double>();
    p.best_epoch = ck.header.at("best_epoch").get<std::size_t>();
    tr.set_steps(p.step);
    return p;
}

// ------------------------------------------------------------------ evaluation helpers

/// Predictions over a whole split in fixed order.
template <class Trainer>
std::vector<int> predict_split(const Trainer& tr, const Dataset& ds, Split split, std::size_t batch_size) {
    using T = typename Trainer::scalar_type;
    const auto& pool = ds.split(split);
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<int> out;
    out.reserve(pool.size());
    for (const auto& idx : chunk(order, batch_size)) {
        const auto pred = tr.predict(make_batch<T>(ds, pool, idx));
        out.insert(out.end(), pred.begin(), pred.end());
    }
    return out;
}

inline std::vector<int> labels_of(const Dataset& ds, Split split) {
    std::vector<int> out;
    for (const auto& e : ds.split(split)) out.push_back(e.label);
    return out;
}

inline double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size()) throw std::invalid_argument("prediction and label counts differ");
    if (truth.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

// ------------------------------------------------------------------ fit

struct RunLayout {
    std::filesystem::path root;
    std::filesystem::path config() const { return root / "config.json"; }
    std::filesystem::path metrics() const { return root / "metrics.jsonl"; }
    std::filesystem::path epochs() const { return root / "epochs.jsonl"; }
    std::filesystem::path summary() const { return root / "summary.json"; }
    std::filesystem::path last_checkpoint() const { return root / "checkpoints" / "last.ckpt"; }
    std::filesystem::path best_checkpoint() const { return root / "checkpoints" / "best.ckpt"; }
};

struct FitOptions {
    /// Continue from `<out>/checkpoints/last.ckpt`.
    bool resume = false;
    /// Load a checkpoint even if its config hash differs.
    bool force = false;
    /// Stop after this epoch even if max_epochs is larger (simulates an
    /// interruption; the run stays resumable).
    std::optional<std::size_t> stop_after_epoch;
    /// Recorded in the summary for provenance of command-line changes.
    std::vector<std::string> overrides;
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::uint64_t step = 0;
    std::array<double, 7> terms{};  ///< mean raw term values over the epoch
    double train_loss = 0.0;        ///< mean weighted min-player loss
    double test_accuracy = 0.0;
    double seconds = 0.0;

    nlohmann::json to_json() const {
        nlohmann::json j{{"epoch", epoch}, {"step", step}, {"train_loss", train_loss}, {"test_accuracy", test_accuracy}, {"seconds", seconds}};
        for (Term t : all_terms) j[term_key(t)] = terms[static_cast<std::size_t>(t)];
        return j;
    }
};

struct FitResult {
    double best_accuracy = 0.0;
    std::size_t best_epoch = 0;
    double final_accuracy = 0.0;
    std::size_t epochs = 0;
    std::uint64_t steps = 0;
    std::vector<EpochRecord> history;  ///< records written by this call
    std::filesystem::path run_dir;
};

inline nlohmann::json step_json(std::uint64_t step, std::size_t epoch, const LossBreakdown& b) {
    nlohmann::json j{{"step", step}, {"epoch", epoch}};
    for (Term t : all_terms) j[term_key(t)] = b.raw(t);
    j["total"] = b.min_total;
    return j;
}

namespace detail {
/// Drops lines whose `key` exceeds `limit`, keeping the log monotonic after a resume.
inline void truncate_jsonl(const std::filesystem::path& path, const char* key, std::uint64_t limit) {
    if (!std::filesystem::exists(path)) return;
    std::ifstream in(path);
    std::vector<std::string> keep;
    for (std::string line; std::getline(in, line);) {
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (!j.is_discarded() && j.value(key, std::uint64_t{0}) <= limit) keep.push_back(line);
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : keep) out << l << '\n';
}

template <class Trainer>
FitResult fit_with(Trainer& tr, const RunConfig& cfg, const ModelSpec& spec, const Dataset& ds, const FitOptions& opt) {
    using T = typename Trainer::scalar_type;
    const RunLayout run{cfg.out};
    std::filesystem::create_directories(run.root / "checkpoints");
    save_config(run.config(), cfg);
    if (ds.train.empty() || ds.test.empty()) throw std::runtime_error("dataset needs both train and test examples");

    TrainProgress progress;
    if (opt.resume) {
        if (!std::filesystem::exists(run.last_checkpoint()))
            throw std::runtime_error("nothing to resume: " + run.last_checkpoint().string() + " does not exist");
        const Checkpoint ck = read_checkpoint(run.last_checkpoint());
        check_compatible(ck, cfg, ds, opt.force);
        progress = restore_checkpoint(tr, ck);
        truncate_jsonl(run.metrics(), "step", progress.step);
        truncate_jsonl(run.epochs(), "epoch", progress.epoch);
        spdlog::info("resumed {} at epoch {}, step {}", run.root.string(), progress.epoch, progress.step);
    } else {
        std::ofstream(run.metrics(), std::ios::trunc);
        std::ofstream(run.epochs(), std::ios::trunc);
    }
    std::ofstream metrics(run.metrics(), std::ios::app);
    std::ofstream epochs(run.epochs(), std::ios::app);

    std::vector<std::size_t> order(ds.train.size());
    const std::vector<int> truth = labels_of(ds, Split::test);
    FitResult result;
    result.run_dir = run.root;
    auto last_good = [&] {
        return std::filesystem::exists(run.last_checkpoint()) ? run.last_checkpoint().string() : std::string("none (no epoch completed)");
    };

    auto run_epoch = [&](std::size_t epoch, bool update) {
        const auto start = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle(derive_seed(cfg.seed, "epoch/" + std::to_string(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle);
        EpochRecord rec;
        rec.epoch = epoch;
        double weight = 0.0;
        for (const auto& idx : chunk(order, cfg.batch_size)) {
            const Batch<T> batch = make_batch<T>(ds, ds.train, idx);
            LossBreakdown terms;
            try {
                terms = update ? tr.train_step(batch) : tr.measure(batch);
            } catch (const NonFiniteLoss& e) {
                throw NonFiniteLoss(std::string(e.what()) + "; training aborted, last good checkpoint: " + last_good());
            }
            if (update && tr.steps() % cfg.log_every == 0) metrics << step_json(tr.steps(), epoch, terms).dump() << '\n';
            const double n = static_cast<double>(idx.size());
            for (std::size_t k = 0; k < 7; ++k) rec.terms[k] += n * terms.value[k];
            rec.train_loss += n * terms.min_total;
            weight += n;
        }
        metrics.flush();
        for (auto& v : rec.terms) v /= weight;
        rec.train_loss /= weight;
        rec.step = tr.steps();
        rec.test_accuracy = accuracy(predict_split(tr, ds, Split::test, cfg.batch_size), truth);
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        epochs << rec.to_json().dump() << '\n';
        epochs.flush();
        result.history.push_back(rec);
        return rec;
    };

    if (progress.epoch == 0 && !opt.resume) {
        const EpochRecord initial = run_epoch(0, false);
        spdlog::info("epoch 0 (no update): loss {:.4f}, test accuracy {:.4f}", initial.train_loss, initial.test_accuracy);
    }

    const std::size_t last = std::min(cfg.max_epochs, opt.stop_after_epoch.value_or(cfg.max_epochs));
    for (std::size_t epoch = progress.epoch + 1; epoch <= last; ++epoch) {
        const EpochRecord rec = run_epoch(epoch, true);
        progress.epoch = epoch;
        progress.step = tr.steps();
        if (rec.test_accuracy > progress.best_accuracy) {
            progress.best_accuracy = rec.test_accuracy;
            progress.best_epoch = epoch;
            write_checkpoint(run.best_checkpoint(), make_checkpoint(tr, cfg, spec, ds, progress));
        }
        write_checkpoint(run.last_checkpoint(), make_checkpoint(tr, cfg, spec, ds, progress));
        spdlog::info("epoch {}/{}: loss {:.4f}, L_cc {:.4f}, test accuracy {:.4f} ({:.1f}s)", epoch, cfg.max_epochs, rec.train_loss,
                     rec.terms[0], rec.test_accuracy, rec.seconds);
    }

    result.best_accuracy = std::max(progress.best_accuracy, 0.0);
    result.best_epoch = progress.best_epoch;
    result.epochs = progress.epoch;
    result.steps = tr.steps();
    result.final_accuracy = result.history.empty() ? 0.0 : result.history.back().test_accuracy;

    nlohmann::json summary{{"method", to_string(cfg.method)},
                           {"criterion", to_string(cfg.criterion)},
                           {"text_source", cfg.text_source.name()},
                           {"best_accuracy", result.best_accuracy},
                           {"best_epoch", result.best_epoch},
                           {"final_accuracy", result.final_accuracy},
                           {"epochs_completed", result.epochs},
                           {"max_epochs", cfg.max_epochs},
                           {"steps", result.steps},
                           {"config_hash", hex(config_hash(cfg))},
                           {"training_hash", hex(training_hash(cfg))},
                           {"data_fingerprint", ds.fingerprint},
                           {"overrides", opt.overrides},
                           {"config", to_json(cfg)}};
    std::ofstream(run.summary()) << summary.dump(2) << '\n';
    return result;
}
}  // namespace detail

inline FitResult fit(const RunConfig& cfg, const Dataset& ds, const FitOptions& opt = {}) {
    cfg.validate();
    const ModelSpec spec = resolve_model_spec(cfg, ds);
    return visit_trainer(cfg, spec, [&](auto& tr) { return detail::fit_with(tr, cfg, spec, ds, opt); });
}

inline FitResult fit(const RunConfig& cfg, const FitOptions& opt = {}) { return fit(cfg, load_dataset(cfg), opt); }

}  // namespace drsc
