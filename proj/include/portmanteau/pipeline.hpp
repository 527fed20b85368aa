#pragma once

// End-to-end experiment configuration: which models to train for a
// table configuration (architecture, attention, ensemble, embedding init,
// prediction strategy) and the k-fold cross-validation runner.

#include <optional>
#include <string>
#include <vector>

#include "portmanteau/decoding.hpp"
#include "portmanteau/evaluation.hpp"
#include "portmanteau/training.hpp"

namespace portmanteau {

struct PipelineConfig {
    Architecture arch = Architecture::Backward;
    bool attention = true;
    // 1 = a single model on all training data; >1 = members on 80% subsamples.
    std::size_t ensemble = 10;
    bool init = true;
    DecodeStrategy strategy;
    std::size_t d_emb = 50;
    std::size_t d_hidden = 100;
    TrainConfig train;
    TrainConfig lm_train;
    double subsample_fraction = 0.8;
    std::uint64_t seed = 1;
    std::size_t threads = 1;

    ModelConfig model_config() const { return {arch, d_emb, d_hidden, attention}; }

    // Strategy/architecture compatibility, checked before any training.
    void validate() const {
        strategy.validate();
        if (arch == Architecture::CharLM) throw ConfigurationError("pipeline architecture must be forward or backward");
        if (ensemble == 0) throw ConfigurationError("ensemble size must be at least 1");
        const ScorerKind expected = arch == Architecture::Forward ? ScorerKind::Forward : ScorerKind::Backward;
        if (strategy.scorer != expected) {
            throw ConfigurationError("scorer '" + to_string(strategy.scorer) + "' does not match architecture '" +
                                     to_string(arch) + "'");
        }
        if (strategy.kind != StrategyKind::Score) {
            if (arch != Architecture::Forward) {
                throw ConfigurationError(to_string(strategy.kind) + " decoding requires the forward architecture");
            }
            if (ensemble != 1) {
                throw ConfigurationError(to_string(strategy.kind) + " decoding uses a single model (--ensemble 1)");
            }
        }
    }

    // Table-style label, e.g. "backward/attn/ens/init/score".
    std::string label() const {
        return to_string(arch) + (attention ? "/attn" : "/noattn") + (ensemble > 1 ? "/ens" : "/noens") +
               (init ? "/init" : "/noinit") + "/" + to_string(strategy.kind);
    }
};

struct TrainedPipeline {
    ModelSet models;
    std::vector<std::uint64_t> member_seeds;
    std::vector<TrainResult> member_training;
    std::optional<TrainResult> lm_training;
};

// Trains a character LM on the word list once; used both as the source of
// pretrained embeddings and as P(y) for the backward scorer.
inline PretrainResult train_shared_lm(const PipelineConfig& cfg, std::span<const std::string> words) {
    TrainConfig tc = cfg.lm_train;
    tc.seed = derive_seed(cfg.seed, "lm");
    return pretrain_lm(words, {Architecture::CharLM, cfg.d_emb, cfg.d_hidden, true}, tc);
}

// Trains every model the configuration needs. `shared_lm` is required
// when init is on; for the backward architecture without one, the LM is
// trained on the training targets.
inline TrainedPipeline train_pipeline(const PipelineConfig& cfg, std::span<const Example> train_set,
                                      std::span<const Example> valid_set, const CharLM* shared_lm,
                                      std::uint64_t seed) {
    cfg.validate();
    if (cfg.init && !shared_lm) {
        throw ConfigurationError("embedding initialization needs a pretrained language model (word list)");
    }
    if (shared_lm && shared_lm->config().d_emb != cfg.d_emb) {
        throw ConfigurationError("pretrained embedding width " + std::to_string(shared_lm->config().d_emb) +
                                 " does not match d_emb " + std::to_string(cfg.d_emb));
    }
    TrainedPipeline out;
    const ModelConfig mc = cfg.model_config();
    const auto data = make_training_pairs(cfg.arch, train_set);
    const auto valid = make_training_pairs(cfg.arch, valid_set);
    auto make = [&](std::uint64_t s) {
        Seq2SeqModel m = Seq2SeqModel::create(mc, s);
        if (cfg.init) transplant_embeddings(m, shared_lm->embedding());
        return m;
    };
    EnsembleConfig ec;
    ec.members = cfg.ensemble;
    ec.fraction = cfg.ensemble > 1 ? cfg.subsample_fraction : 1.0;
    ec.seed = derive_seed(seed, to_string(cfg.arch));
    ec.threads = cfg.threads;
    auto bundle = train_ensemble<Seq2SeqModel>(make, data, valid, cfg.train, ec);
    out.member_seeds = std::move(bundle.member_seeds);
    out.member_training = std::move(bundle.training);
    auto& slot = cfg.arch == Architecture::Forward ? out.models.forward : out.models.backward;
    slot = std::move(bundle.members);

    if (cfg.arch == Architecture::Backward) {
        if (shared_lm) {
            out.models.lm.push_back(*shared_lm);
        } else {
            CharLM lm = CharLM::create({Architecture::CharLM, cfg.d_emb, cfg.d_hidden, true},
                                       derive_seed(seed, "lm/init"));
            TrainConfig tc = cfg.lm_train;
            tc.seed = derive_seed(seed, "lm/train");
            out.lm_training = train(lm, make_training_pairs(Architecture::CharLM, train_set),
                                    make_training_pairs(Architecture::CharLM, valid_set), tc);
            out.models.lm.push_back(std::move(lm));
        }
    }
    return out;
}

inline std::vector<Prediction> predict_all(std::span<const Example> examples, const PipelineConfig& cfg,
                                           const ModelSet& models) {
    std::vector<Prediction> preds(examples.size());
    parallel_for(examples.size(), cfg.threads,
                 [&](std::size_t i) { preds[i] = predict(examples[i], cfg.strategy, models, 1); });
    return preds;
}

inline std::vector<std::string> outputs_of(std::span<const Prediction> preds) {
    std::vector<std::string> out;
    out.reserve(preds.size());
    for (const auto& p : preds) out.push_back(p.output);
    return out;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldResult {
    std::size_t fold = 0;
    std::vector<Example> test;
    std::vector<Prediction> predictions;
    EvalReport report;
};

struct CrossvalResult {
    std::vector<std::size_t> assignment;
    std::vector<FoldResult> folds;
    double mean_matches_pct = 0.0;
    double mean_distance = 0.0;
};

// For fold i: trains on the remaining k-2 folds, early-stops on fold
// (i+1) mod k and evaluates on fold i. Metrics are macro-averaged.
inline CrossvalResult crossval(std::span<const Example> dataset, std::size_t k, const PipelineConfig& cfg,
                               const CharLM* shared_lm) {
    cfg.validate();
    const FoldPlan plan = make_folds(dataset.size(), k, derive_seed(cfg.seed, "folds"));
    CrossvalResult result;
    result.assignment = plan.assignment();
    result.folds.resize(k);
    PipelineConfig inner = cfg;
    inner.threads = 1;
    parallel_for(k, cfg.threads, [&](std::size_t fold) {
        try {
            const auto tr_idx = plan.train_indices(fold);
            const auto va_idx = plan.validation_indices(fold);
            const auto te_idx = plan.test_indices(fold);
            const auto tr = select(dataset, std::span<const std::size_t>(tr_idx));
            const auto va = select(dataset, std::span<const std::size_t>(va_idx));
            FoldResult fr;
            fr.fold = fold;
            fr.test = select(dataset, std::span<const std::size_t>(te_idx));
            const auto trained =
                train_pipeline(inner, tr, va, shared_lm, derive_seed(cfg.seed, "fold/" + std::to_string(fold)));
            fr.predictions = predict_all(fr.test, inner, trained.models);
            const auto outs = outputs_of(fr.predictions);
            fr.report = evaluate(std::span<const Example>(fr.test), std::span<const std::string>(outs));
            result.folds[fold] = std::move(fr);
        } catch (const std::exception& e) {
            throw TrainingError("fold " + std::to_string(fold) + ": " + e.what());
        }
    });
    for (const auto& f : result.folds) {
        result.mean_matches_pct += f.report.matches_pct;
        result.mean_distance += f.report.mean_distance;
    }
    result.mean_matches_pct /= static_cast<double>(k);
    result.mean_distance /= static_cast<double>(k);
    return result;
}

}  // namespace portmanteau
