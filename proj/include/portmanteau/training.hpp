#pragma once

// Teacher-forced maximum-likelihood training with per-example updates,
// early stopping on validation exact-match, dictionary pretraining of
// character embeddings, and subsample ensembles.

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "portmanteau/models.hpp"
#include "portmanteau/parallel.hpp"

namespace portmanteau {

enum class OptimizerKind { Adam, Sgd };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "sgd") return OptimizerKind::Sgd;
    throw ConfigurationError("unknown optimizer '" + s + "'");
}

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t max_epochs = 300;
    std::size_t patience = 10;
    double clip_norm = 5.0;
    std::uint64_t seed = 1;
    // Stop as soon as the monitored set is reproduced exactly.
    bool stop_at_full_match = false;

    void validate() const {
        if (!(learning_rate > 0) || !(clip_norm > 0) || max_epochs == 0 || !(beta1 > 0 && beta1 < 1) ||
            !(beta2 > 0 && beta2 < 1) || !(adam_epsilon > 0)) {
            throw ConfigurationError("training configuration values must be positive (betas in (0,1))");
        }
    }

    bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_nll = 0.0;
    double valid_nll = 0.0;
    double valid_matches = 0.0;  // fraction in [0, 1]
};

struct TrainResult {
    std::vector<EpochRecord> curve;
    std::size_t best_epoch = 0;
};

// `epoch,train_nll,valid_nll,valid_matches`
inline std::string loss_curve_csv(std::span<const EpochRecord> curve) {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,train_nll,valid_nll,valid_matches\n";
    for (const auto& r : curve) {
        out << r.epoch << ',' << r.train_nll << ',' << r.valid_nll << ',' << r.valid_matches << '\n';
    }
    return out.str();
}

// Tracks the best (matches, then NLL) epoch and how long since it improved.
class EarlyStopper {
public:
    explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

    // Returns true when this epoch is the new best.
    bool observe(std::size_t epoch, double matches, double nll) {
        const bool better = matches > best_matches_ || (matches == best_matches_ && nll < best_nll_);
        if (better) {
            best_matches_ = matches;
            best_nll_ = nll;
            best_epoch_ = epoch;
            since_ = 0;
        } else {
            ++since_;
        }
        return better;
    }

    bool should_stop() const { return since_ >= patience_; }
    std::size_t best_epoch() const { return best_epoch_; }
    double best_matches() const { return best_matches_; }
    double best_nll() const { return best_nll_; }

private:
    std::size_t patience_;
    double best_matches_ = -std::numeric_limits<double>::infinity();
    double best_nll_ = std::numeric_limits<double>::infinity();
    std::size_t best_epoch_ = 0;
    std::size_t since_ = 0;
};

inline double global_grad_norm(const ParamStore& params) {
    double sq = 0.0;
    for (const auto& [_, g] : params.grads())
        for (double x : g.data()) sq += x * x;
    return std::sqrt(sq);
}

// Rescales all gradients so their joint L2 norm is at most `max_norm`.
// Returns the norm before clipping.
inline double clip_global_norm(ParamStore& params, double max_norm) {
    const double norm = global_grad_norm(params);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& [name, _] : params.values())
            for (double& x : params.grad(name).data()) x *= s;
    }
    return norm;
}

class Optimizer {
public:
    explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}

    void step(ParamStore& params) {
        ++t_;
        if (cfg_.optimizer == OptimizerKind::Sgd) {
            for (auto& [name, value] : params.values()) {
                const Matrix& g = params.grad(name);
                for (std::size_t i = 0; i < value.size(); ++i) value[i] -= cfg_.learning_rate * g[i];
            }
            return;
        }
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (auto& [name, value] : params.values()) {
            const Matrix& g = params.grad(name);
            auto [it, fresh] = moments_.try_emplace(name);
            if (fresh) it->second = {Matrix(value.rows(), value.cols()), Matrix(value.rows(), value.cols())};
            Matrix& m = it->second.first;
            Matrix& v = it->second.second;
            for (std::size_t i = 0; i < value.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                value[i] -= cfg_.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.adam_epsilon);
            }
        }
    }

private:
    TrainConfig cfg_;
    std::size_t t_ = 0;
    std::map<std::string, std::pair<Matrix, Matrix>> moments_;
};

struct MonitorStats {
    double mean_nll = 0.0;
    double matches = 0.0;  // fraction
};

template <typename Model>
MonitorStats monitor(const Model& model, std::span<const TrainingPair> pairs) {
    MonitorStats s;
    if (pairs.empty()) return s;
    std::size_t exact = 0;
    for (const auto& p : pairs) {
        const SequenceStats st = model.stats(p);
        s.mean_nll -= st.log_prob;
        exact += st.argmax_exact ? 1 : 0;
    }
    s.mean_nll /= static_cast<double>(pairs.size());
    s.matches = static_cast<double>(exact) / static_cast<double>(pairs.size());
    return s;
}

struct TrainHooks {
    // Called after clipping with (pre-clip norm, post-clip norm).
    std::function<void(double, double)> on_update;
    std::function<void(const EpochRecord&)> on_epoch;
};

// Trains in place and leaves the model at its best-monitored snapshot.
// Without a validation set the training set itself is monitored.
template <typename Model>
TrainResult train(Model& model, std::span<const TrainingPair> data, std::span<const TrainingPair> valid,
                  const TrainConfig& cfg, const TrainHooks& hooks = {}) {
    if (data.empty()) throw ContractError("train: empty training set");
    cfg.validate();
    ParamStore& params = model.params();
    Optimizer opt(cfg);
    Rng rng(cfg.seed);
    EarlyStopper stopper(cfg.patience);
    TrainResult result;
    std::map<std::string, Matrix> best = params.values();
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    const std::span<const TrainingPair> monitored = valid.empty() ? data : valid;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double total = 0.0;
        for (std::size_t idx : order) {
            params.zero_grad();
            Tape tape;
            auto bound = model.bind(tape, true);
            Var loss = model.loss(tape, bound, data[idx]);
            const double l = tape.scalar(loss);
            if (!std::isfinite(l)) {
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", example " +
                                    std::to_string(idx));
            }
            tape.backward(loss);
            const double pre = clip_global_norm(params, cfg.clip_norm);
            if (hooks.on_update) hooks.on_update(pre, global_grad_norm(params));
            opt.step(params);
            total += l;
        }
        const MonitorStats ms = monitor(model, monitored);
        EpochRecord rec{epoch, total / static_cast<double>(data.size()), ms.mean_nll, ms.matches};
        result.curve.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(rec);
        if (stopper.observe(epoch, ms.matches, ms.mean_nll)) best = params.values();
        if (stopper.should_stop()) break;
        if (cfg.stop_at_full_match && ms.matches >= 1.0) break;
    }
    params.values() = std::move(best);
    result.best_epoch = stopper.best_epoch();
    return result;
}

// ---------------------------------------------------------------------------
// Embedding pretraining

struct PretrainResult {
    CharLM lm;
    TrainResult training;
    std::size_t skipped_words = 0;
    std::size_t train_words = 0;
    std::size_t valid_words = 0;
    std::vector<std::string> held_out;
};

// Trains a character LM on dictionary words; its embedding table is what
// downstream models are initialized from. Words outside [a-z] are skipped
// and counted. One word in twenty (at least one) is held out for
// validation when the list has two or more words.
inline PretrainResult pretrain_lm(std::span<const std::string> words, const ModelConfig& dims,
                                  const TrainConfig& cfg) {
    const Alphabet& a = Alphabet::standard();
    std::vector<std::string> valid_words;
    std::size_t skipped = 0;
    for (const auto& w : words) {
        if (!w.empty() && std::all_of(w.begin(), w.end(), [&](char c) { return a.is_letter(c); })) {
            valid_words.push_back(w);
        } else {
            ++skipped;
        }
    }
    if (valid_words.empty()) throw ContractError("pretrain: word list has no usable words");
    Rng rng(derive_seed(cfg.seed, "pretrain/split"));
    rng.shuffle(std::span<std::string>(valid_words));
    const std::size_t n_valid = valid_words.size() >= 2 ? std::max<std::size_t>(1, valid_words.size() / 20) : 0;
    const std::span<const std::string> all(valid_words);
    const auto held = make_lm_pairs(all.first(n_valid));
    const auto train_pairs = make_lm_pairs(all.subspan(n_valid));

    CharLM lm = CharLM::create(dims, derive_seed(cfg.seed, "pretrain/init"));
    TrainResult tr = train(lm, train_pairs, held, cfg);
    return {std::move(lm), std::move(tr), skipped, train_pairs.size(), held.size(),
            std::vector<std::string>(all.begin(), all.begin() + static_cast<long>(n_valid))};
}

// Returns the |alphabet| x d_emb table learned by the pretraining LM.
inline Matrix pretrain_embeddings(std::span<const std::string> words, const ModelConfig& dims,
                                  const TrainConfig& cfg) {
    return pretrain_lm(words, dims, cfg).lm.embedding();
}

// Copies a pretrained table into both e_enc and e_dec; it is fine-tuned
// afterwards like any other parameter.
inline void transplant_embeddings(Seq2SeqModel& model, const Matrix& table) {
    for (const char* name : {"enc.emb", "dec.emb"}) {
        Matrix& dst = model.params().value(name);
        if (!dst.same_shape(table)) {
            throw ShapeError(std::string("transplant: table ") + table.shape() + " does not fit " + name + " " +
                             dst.shape());
        }
        dst = table;
    }
}

// ---------------------------------------------------------------------------
// Ensembles

struct EnsembleConfig {
    std::size_t members = 10;
    double fraction = 0.8;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
};

template <typename Model>
struct EnsembleBundle {
    std::vector<Model> members;
    double fraction = 0.8;
    std::vector<std::uint64_t> member_seeds;
    std::vector<TrainResult> training;
};

inline std::uint64_t member_seed(std::uint64_t seed, std::size_t member) {
    return derive_seed(seed, "member/" + std::to_string(member));
}

// Sorted indices of a without-replacement subsample of round(fraction * n)
// items (at least one). fraction >= 1 keeps everything.
inline std::vector<std::size_t> subsample_indices(std::size_t n, double fraction, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (fraction >= 1.0) return idx;
    if (!(fraction > 0.0)) throw ContractError("subsample fraction must be in (0, 1]");
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(idx));
    const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * n)));
    idx.resize(std::min(keep, n));
    std::sort(idx.begin(), idx.end());
    return idx;
}

// Trains `cfg.members` models, member i initialized by make(member_seed(seed, i))
// and trained on its own subsample with a member-derived shuffle seed.
// Members are independent and run concurrently.
template <typename Model, typename Factory>
EnsembleBundle<Model> train_ensemble(Factory make, std::span<const TrainingPair> data,
                                     std::span<const TrainingPair> valid, const TrainConfig& train_cfg,
                                     const EnsembleConfig& cfg) {
    if (cfg.members == 0) throw ContractError("train_ensemble: need at least one member");
    const std::size_t m = cfg.members;
    std::vector<std::optional<Model>> trained(m);
    std::vector<TrainResult> results(m);
    std::vector<std::uint64_t> seeds(m);
    for (std::size_t i = 0; i < m; ++i) seeds[i] = member_seed(cfg.seed, i);

    parallel_for(m, cfg.threads, [&](std::size_t i) {
        try {
            const auto idx = subsample_indices(data.size(), cfg.fraction, derive_seed(seeds[i], "subsample"));
            const auto subset = select(data, std::span<const std::size_t>(idx));
            Model model = make(seeds[i]);
            TrainConfig tc = train_cfg;
            tc.seed = derive_seed(seeds[i], "train");
            results[i] = train(model, subset, valid, tc);
            trained[i].emplace(std::move(model));
        } catch (const std::exception& e) {
            throw TrainingError("ensemble member " + std::to_string(i) + ": " + e.what());
        }
    });

    EnsembleBundle<Model> bundle;
    bundle.fraction = cfg.fraction;
    bundle.member_seeds = seeds;
    bundle.training = std::move(results);
    for (auto& t : trained) bundle.members.push_back(std::move(*t));
    return bundle;
}

}  // namespace portmanteau
