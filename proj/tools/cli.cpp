#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "portmanteau/portmanteau.hpp"

namespace portmanteau::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Bad flags or inputs the user can fix; exits with kUsageError.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string attn = "on";
    std::size_t ensemble = 10;
    std::string init = "on";
    std::string strategy = "score";
    std::string scorer = "backward";
    double lambda = 1.0;
    std::size_t beam_width = 5;
    std::uint64_t seed = 1;

    std::size_t d_emb = 50;
    std::size_t d_hidden = 100;
    std::size_t epochs = 300;
    std::size_t lm_epochs = 300;
    std::size_t patience = 10;
    double lr = 1e-3;
    double clip = 5.0;
    std::size_t threads = 1;

    std::string data;
    std::string valid;
    std::string wordlist;
    std::string pretrained;
    std::vector<std::string> models;
    std::string out;

    // crossval
    std::size_t folds = 10;
    std::vector<std::string> configs;
    // eval
    std::string baseline;
    // suggest
    std::string root1, root2;
    std::size_t top_k = 10;
    // significance
    std::string preds_a, preds_b, truth;
    std::size_t resamples = 1000;
    std::size_t subset = 0;
    double margin = 0.2;
};

// ---------------------------------------------------------------------------
// flag registration

void add_scorer_flag(CLI::App* app, Options& o, bool allow_both) {
    if (allow_both) {
        app->add_option("--scorer", o.scorer, "architecture(s) to train: forward, backward or both")
            ->check(CLI::IsMember({"forward", "backward", "both"}))
            ->capture_default_str();
    } else {
        app->add_option("--scorer", o.scorer, "forward or backward (noisy channel)")
            ->check(CLI::IsMember({"forward", "backward"}))
            ->capture_default_str();
    }
}

void add_strategy_flags(CLI::App* app, Options& o) {
    app->add_option("--strategy", o.strategy, "greedy, beam or score")
        ->check(CLI::IsMember({"greedy", "beam", "score"}))
        ->capture_default_str();
    add_scorer_flag(app, o, false);
    app->add_option("--lambda", o.lambda, "weight on log P(y) for the backward scorer")->capture_default_str();
    app->add_option("--beam-width", o.beam_width, "beam width")->capture_default_str();
    app->add_option("--threads", o.threads, "worker threads")->capture_default_str();
}

// Shared by everything that trains the character LM.
void add_lm_flags(CLI::App* app, Options& o) {
    app->add_option("--seed", o.seed, "top-level seed")->capture_default_str();
    app->add_option("--d-emb", o.d_emb, "character embedding width")->capture_default_str();
    app->add_option("--d-hidden", o.d_hidden, "LSTM width")->capture_default_str();
    app->add_option("--lm-epochs", o.lm_epochs, "max epochs for the character LM")->capture_default_str();
    app->add_option("--patience", o.patience, "early-stopping patience")->capture_default_str();
    app->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
    app->add_option("--clip", o.clip, "gradient clip norm")->capture_default_str();
}

void add_model_flags(CLI::App* app, Options& o) {
    app->add_option("--attn", o.attn, "attention on|off")->check(CLI::IsMember({"on", "off"}))->capture_default_str();
    app->add_option("--ensemble", o.ensemble, "ensemble size M (1 = single model on all data)")
        ->capture_default_str();
    app->add_option("--init", o.init, "initialize character embeddings from the word-list LM on|off")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    app->add_option("--epochs", o.epochs, "max training epochs")->capture_default_str();
    add_lm_flags(app, o);
    app->add_option("--wordlist", o.wordlist, "dictionary words for the character LM");
    app->add_option("--pretrained", o.pretrained, "character LM from pretrain-embeddings (instead of --wordlist)");
}

// ---------------------------------------------------------------------------
// helpers

ScorerKind scorer_of(const std::string& s) { return s == "forward" ? ScorerKind::Forward : ScorerKind::Backward; }

Architecture arch_of(ScorerKind s) { return s == ScorerKind::Forward ? Architecture::Forward : Architecture::Backward; }

DecodeStrategy strategy_of(const Options& o) {
    DecodeStrategy s;
    s.kind = parse_strategy(o.strategy);
    s.scorer = scorer_of(o.scorer);
    s.beam_width = o.beam_width;
    s.lambda = o.lambda;
    return s;
}

TrainConfig train_config_of(const Options& o, std::size_t max_epochs) {
    TrainConfig t;
    t.learning_rate = o.lr;
    t.max_epochs = max_epochs;
    t.patience = o.patience;
    t.clip_norm = o.clip;
    t.seed = o.seed;
    return t;
}

PipelineConfig pipeline_of(const Options& o, Architecture arch) {
    PipelineConfig c;
    c.arch = arch;
    c.attention = o.attn == "on";
    c.ensemble = o.ensemble;
    c.init = o.init == "on";
    c.strategy = strategy_of(o);
    c.strategy.scorer = arch == Architecture::Forward ? ScorerKind::Forward : ScorerKind::Backward;
    c.d_emb = o.d_emb;
    c.d_hidden = o.d_hidden;
    c.train = train_config_of(o, o.epochs);
    c.lm_train = train_config_of(o, o.lm_epochs);
    c.seed = o.seed;
    c.threads = std::max<std::size_t>(1, o.threads);
    return c;
}

// "backward/attn/ens/init/score", as produced by PipelineConfig::label().
PipelineConfig parse_label(const std::string& label, const Options& o) {
    std::vector<std::string> parts;
    std::stringstream ss(label);
    for (std::string p; std::getline(ss, p, '/');) parts.push_back(p);
    auto bad = [&] {
        return UsageError("bad configuration '" + label +
                          "' (expected arch/attn|noattn/ens|noens/init|noinit/greedy|beam|score)");
    };
    if (parts.size() != 5) throw bad();
    if (parts[0] != "forward" && parts[0] != "backward") throw bad();
    PipelineConfig c = pipeline_of(o, parse_architecture(parts[0]));
    if (parts[1] != "attn" && parts[1] != "noattn") throw bad();
    if (parts[2] != "ens" && parts[2] != "noens") throw bad();
    if (parts[3] != "init" && parts[3] != "noinit") throw bad();
    c.attention = parts[1] == "attn";
    if (parts[2] == "ens") {
        if (o.ensemble < 2) throw UsageError("configuration '" + label + "' needs --ensemble of at least 2");
        c.ensemble = o.ensemble;
    } else {
        c.ensemble = 1;
    }
    c.init = parts[3] == "init";
    try {
        c.strategy.kind = parse_strategy(parts[4]);
    } catch (const ConfigurationError&) {
        throw bad();
    }
    return c;
}

// Flags that determine results; output paths and thread counts are left out
// so reruns into another directory produce identical files.
json run_config_of(const std::string& command, const Options& o) {
    json j;
    j["command"] = command;
    j["attn"] = o.attn;
    j["ensemble"] = o.ensemble;
    j["init"] = o.init;
    j["strategy"] = o.strategy;
    j["scorer"] = o.scorer;
    j["lambda"] = o.lambda;
    j["beam_width"] = o.beam_width;
    j["seed"] = o.seed;
    j["d_emb"] = o.d_emb;
    j["d_hidden"] = o.d_hidden;
    j["epochs"] = o.epochs;
    j["lm_epochs"] = o.lm_epochs;
    j["patience"] = o.patience;
    j["lr"] = o.lr;
    j["clip"] = o.clip;
    j["data"] = o.data;
    j["valid"] = o.valid;
    j["wordlist"] = o.wordlist;
    j["pretrained"] = o.pretrained;
    return j;
}

json inference_config_of(const std::string& command, const Options& o) {
    return {{"command", command}, {"strategy", o.strategy}, {"scorer", o.scorer}, {"lambda", o.lambda},
            {"beam_width", o.beam_width}, {"data", o.data}};
}

std::string comment_line(const json& run_config) { return "# run_config " + run_config.dump() + "\n"; }

std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex;
    s.width(16);
    s.fill('0');
    s << v;
    return s.str();
}

std::vector<Example> load_examples(const std::string& path, const std::string& flag, std::ostream& err,
                                   bool need_truth) {
    if (path.empty()) throw UsageError(flag + " is required");
    const Dataset d = load_dataset(path);
    if (!d.rejections.empty()) {
        err << "warning: " << path << ": skipped " << d.rejections.size() << " record(s)";
        const auto& r = d.rejections.front();
        err << " (first: line " << r.line << ", " << r.cause << ")\n";
    }
    if (d.examples.empty()) throw UsageError(path + ": no usable records");
    if (need_truth) {
        for (const auto& e : d.examples) {
            if (!e.target) throw UsageError(path + ": every record needs a portmanteau column");
        }
    }
    return d.examples;
}

// Non-comment lines of a predictions or truth file. Tab-separated lines
// are dataset records and contribute their third field.
std::vector<std::string> load_column(const std::string& path, const std::string& flag) {
    if (path.empty()) throw UsageError(flag + " is required");
    std::ifstream in(path);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::vector<std::string> rows;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab != std::string::npos) {
            std::vector<std::string> f;
            std::stringstream ss(line);
            for (std::string x; std::getline(ss, x, '\t');) f.push_back(x);
            if (f.size() < 3) throw UsageError(path + ": tab-separated line without a third field");
            line = f[2];
        }
        rows.push_back(line);
    }
    return rows;
}

ModelSet load_models(const std::vector<std::string>& paths, json& manifest) {
    if (paths.empty()) throw UsageError("--model is required");
    ModelSet set;
    manifest = json::array();
    for (const auto& p : paths) {
        const std::string bytes = read_file(p);
        const ModelFile f = deserialize(bytes);
        ModelSet part = to_model_set(f);
        for (auto& m : part.forward) set.forward.push_back(std::move(m));
        for (auto& m : part.backward) set.backward.push_back(std::move(m));
        for (auto& m : part.lm) set.lm.push_back(std::move(m));
        manifest.push_back({{"path", p}, {"fnv1a64", hex64(fnv1a64(bytes))}, {"run_config", f.run_config}});
    }
    return set;
}

struct SharedLm {
    std::optional<CharLM> lm;
    std::optional<TrainResult> training;
    std::string source = "none";
    std::uint64_t seed = 0;
    std::size_t skipped_words = 0;
};

SharedLm shared_lm_of(const Options& o, std::ostream& err) {
    SharedLm s;
    if (!o.pretrained.empty()) {
        const ModelSet set = to_model_set(load_model_file(o.pretrained));
        if (set.lm.empty()) throw UsageError(o.pretrained + ": no character LM in this model file");
        s.lm = set.lm.front();
        s.source = "pretrained";
        if (s.lm->config().d_emb != o.d_emb) {
            throw UsageError(o.pretrained + " has " + std::to_string(s.lm->config().d_emb) +
                             "-wide embeddings; pass --d-emb " + std::to_string(s.lm->config().d_emb));
        }
    } else if (!o.wordlist.empty()) {
        const WordList words = load_wordlist(o.wordlist);
        if (words.skipped) err << "warning: " << o.wordlist << ": skipped " << words.skipped << " word(s)\n";
        const PipelineConfig pc = pipeline_of(o, Architecture::Backward);
        PretrainResult r = train_shared_lm(pc, words.words);
        s.lm = std::move(r.lm);
        s.training = std::move(r.training);
        s.source = "wordlist";
        s.seed = derive_seed(o.seed, "lm");
        s.skipped_words = r.skipped_words;
    }
    if (o.init == "on" && !s.lm) throw UsageError("--init on needs --wordlist or --pretrained (or pass --init off)");
    return s;
}

void write_text(const std::string& path, const std::string& contents) { write_file_atomic(path, contents); }

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir + "'");
}

std::string yes_no(bool b) { return b ? "yes" : "no"; }

std::string slug(const std::string& label) {
    std::string s = label;
    std::replace(s.begin(), s.end(), '/', '-');
    return s;
}

// ---------------------------------------------------------------------------
// commands

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
    if (o.models.size() != 1) throw UsageError("train writes one --model PATH");
    const std::string& model_path = o.models.front();
    const auto data = load_examples(o.data, "--data", err, true);
    std::vector<Example> valid;
    if (!o.valid.empty()) valid = load_examples(o.valid, "--valid", err, true);

    std::vector<Architecture> archs;
    if (o.scorer == "forward" || o.scorer == "both") archs.push_back(Architecture::Forward);
    if (o.scorer == "backward" || o.scorer == "both") archs.push_back(Architecture::Backward);
    for (auto a : archs) {
        PipelineConfig pc = pipeline_of(o, a);
        pc.strategy.kind = StrategyKind::Score;
        pc.validate();
    }
    const bool needs_lm = o.init == "on" || o.scorer != "forward";
    const SharedLm shared = needs_lm ? shared_lm_of(o, err) : SharedLm{};

    json rc = run_config_of("train", o);
    rc["lm_source"] = shared.source;
    rc["data_fnv1a64"] = hex64(fingerprint(data));
    rc["n_train"] = data.size();
    rc["n_valid"] = valid.size();
    ModelFile file;
    file.data_fingerprint = hex64(fingerprint(data));
    file.train_config = to_json(pipeline_of(o, archs.front()).train);
    rc["lm_train_config"] = to_json(pipeline_of(o, archs.front()).lm_train);

    const std::string curves = model_path + ".curves";
    ensure_dir(curves);
    const std::string header = comment_line(rc);
    bool lm_added = false;
    for (auto a : archs) {
        const PipelineConfig pc = pipeline_of(o, a);
        const TrainedPipeline tp = train_pipeline(pc, data, valid, shared.lm ? &*shared.lm : nullptr, o.seed);
        const auto& members = a == Architecture::Forward ? tp.models.forward : tp.models.backward;
        for (std::size_t i = 0; i < members.size(); ++i) {
            file.add(members[i], tp.member_seeds[i]);
            write_text(curves + "/" + to_string(a) + "-" + std::to_string(i) + ".csv",
                       header + loss_curve_csv(tp.member_training[i].curve));
        }
        if (!tp.models.lm.empty() && !lm_added) {
            const std::uint64_t lm_seed = shared.lm ? shared.seed : derive_seed(o.seed, "lm/init");
            file.add(tp.models.lm.front(), lm_seed);
            const TrainResult* lm_curve = shared.training ? &*shared.training : tp.lm_training ? &*tp.lm_training
                                                                                                : nullptr;
            if (lm_curve) write_text(curves + "/lm.csv", header + loss_curve_csv(lm_curve->curve));
            lm_added = true;
        }
        rc["member_seeds_" + to_string(a)] = tp.member_seeds;
    }
    file.run_config = rc;
    save_model_file(model_path, file);
    out << "wrote " << model_path << " (" << file.members.size() << " model(s))\n";
    out << "loss curves: " << curves << "\n";
    return kOk;
}

int cmd_pretrain(const Options& o, std::ostream& out, std::ostream& err) {
    if (o.wordlist.empty()) throw UsageError("--wordlist is required");
    if (o.models.size() != 1) throw UsageError("pretrain-embeddings writes one --model PATH");
    const WordList words = load_wordlist(o.wordlist);
    if (words.skipped) err << "warning: " << o.wordlist << ": skipped " << words.skipped << " word(s)\n";
    if (words.words.empty()) throw UsageError(o.wordlist + ": no usable words");
    const PipelineConfig pc = pipeline_of(o, Architecture::Backward);
    const PretrainResult r = train_shared_lm(pc, words.words);

    double nll = 0.0;
    std::size_t symbols = 0;
    for (const auto& w : r.held_out) {
        const auto ids = encode_target(w);
        nll -= lm_log_prob(r.lm, ids);
        symbols += ids.size();
    }
    json rc = {{"command", "pretrain-embeddings"}, {"seed", o.seed},         {"d_emb", o.d_emb},
               {"d_hidden", o.d_hidden},           {"lm_epochs", o.lm_epochs}, {"patience", o.patience},
               {"lr", o.lr},                       {"clip", o.clip},           {"wordlist", o.wordlist}};
    rc["train_words"] = r.train_words;
    rc["valid_words"] = r.valid_words;
    rc["skipped_words"] = r.skipped_words;
    ModelFile file;
    file.run_config = rc;
    file.train_config = to_json(pc.lm_train);
    file.data_fingerprint = hex64(fnv1a64(read_file(o.wordlist)));
    file.add(r.lm, derive_seed(o.seed, "lm"));
    const std::string& model_path = o.models.front();
    save_model_file(model_path, file);
    const std::string curves = model_path + ".curves";
    ensure_dir(curves);
    write_text(curves + "/lm.csv", comment_line(rc) + loss_curve_csv(r.training.curve));

    out << "words: " << r.train_words << " train, " << r.valid_words << " held out, " << r.skipped_words
        << " skipped\n";
    if (symbols) {
        out << "held-out perplexity: " << format_fixed(std::exp(nll / static_cast<double>(symbols)), 3)
            << " per character (uniform: " << Alphabet::standard().size() << ")\n";
    }
    out << "embedding table: " << r.lm.embedding().rows() << " x " << r.lm.embedding().cols() << "\n";
    out << "wrote " << model_path << "\n";
    out << "loss curves: " << curves << "\n";
    return kOk;
}

int cmd_crossval(const Options& o, std::ostream& out, std::ostream& err) {
    if (o.out.empty()) throw UsageError("--out DIR is required");
    const auto data = load_examples(o.data, "--data", err, true);
    if (data.size() < o.folds || o.folds < 2) {
        throw UsageError("--folds " + std::to_string(o.folds) + " needs at least that many examples (have " +
                         std::to_string(data.size()) + ") and at least 2 folds");
    }
    std::vector<PipelineConfig> configs;
    if (o.configs.empty()) {
        configs.push_back(pipeline_of(o, arch_of(scorer_of(o.scorer))));
    } else {
        for (const auto& c : o.configs) configs.push_back(parse_label(c, o));
    }
    bool needs_lm = false;
    for (const auto& c : configs) {
        c.validate();
        needs_lm = needs_lm || c.init;
    }
    Options lm_opts = o;
    if (!needs_lm) lm_opts.init = "off";
    const SharedLm shared = shared_lm_of(lm_opts, err);

    ensure_dir(o.out);
    json rc = run_config_of("crossval", o);
    rc["folds"] = o.folds;
    rc["lm_source"] = shared.source;
    rc["data_fnv1a64"] = hex64(fingerprint(data));
    json labels = json::array();
    for (const auto& c : configs) labels.push_back(c.label());
    rc["configs"] = labels;
    const std::string header = comment_line(rc);

    std::string summary = header + "model\tattn\tens\tinit\tsearch\tmatches_pct\tdistance\tconfig\n";
    for (const auto& c : configs) {
        const CrossvalResult r = crossval(data, o.folds, c, shared.lm ? &*shared.lm : nullptr);
        for (const auto& f : r.folds) {
            char name[32];
            std::snprintf(name, sizeof(name), ".fold-%02zu.tsv", f.fold);
            write_text(o.out + "/" + slug(c.label()) + name, header + report_tsv(f.report));
        }
        summary += to_string(c.arch) + "\t" + yes_no(c.attention) + "\t" + yes_no(c.ensemble > 1) + "\t" +
                   yes_no(c.init) + "\t" + to_string(c.strategy.kind) + "\t" + format_fixed(r.mean_matches_pct, 4) +
                   "\t" + format_fixed(r.mean_distance, 4) + "\t" + c.label() + "\n";
        out << c.label() << ": matches " << format_fixed(r.mean_matches_pct, 2) << "% distance "
            << format_fixed(r.mean_distance, 4) << " (" << o.folds << " folds)\n";
    }
    std::string assignment = header + "index\tfold\n";
    const FoldPlan plan = make_folds(data.size(), o.folds, derive_seed(o.seed, "folds"));
    assignment += plan.to_tsv();
    write_text(o.out + "/folds.tsv", assignment);
    write_text(o.out + "/summary.tsv", summary);
    out << "wrote " << o.out << "/summary.tsv\n";
    return kOk;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
    const auto data = load_examples(o.data, "--data", err, true);
    json manifest;
    const ModelSet models = load_models(o.models, manifest);
    const DecodeStrategy strategy = strategy_of(o);
    require_models(strategy, models);

    PipelineConfig label_cfg;
    label_cfg.arch = arch_of(strategy.scorer);
    label_cfg.strategy = strategy;
    const auto& members = strategy.scorer == ScorerKind::Forward ? models.forward : models.backward;
    label_cfg.attention = members.front().config().attention;
    label_cfg.ensemble = strategy.kind == StrategyKind::Score ? members.size() : 1;
    const json& first_rc = manifest.front().at("run_config");
    label_cfg.init = first_rc.contains("init") && first_rc.at("init") == "on";
    label_cfg.threads = std::max<std::size_t>(1, o.threads);

    const auto preds = predict_all(data, label_cfg, models);
    const auto outputs = outputs_of(preds);
    const EvalReport report = evaluate(std::span<const Example>(data), std::span<const std::string>(outputs));
    std::map<std::string, std::vector<std::string>> systems{{label_cfg.label(), outputs}};
    if (!o.baseline.empty()) systems.emplace("baseline", load_column(o.baseline, "--baseline"));
    const UncoveredAnalysis ua = uncovered_analysis(data, systems);

    json rc = inference_config_of("eval", o);
    rc["models"] = manifest;
    rc["config"] = label_cfg.label();
    rc["baseline"] = o.baseline;
    rc["data_fnv1a64"] = hex64(fingerprint(data));
    const std::string header = comment_line(rc);

    std::ostringstream summary;
    summary << "config " << label_cfg.label() << " (" << members.size() << " member(s))\n";
    summary << report_summary(report) << "\n";
    summary << "coverage_pct " << format_fixed(report.coverage_pct, 2) << "\n";
    summary << "uncovered " << ua.uncovered.size() << " of " << ua.total << "\n";
    for (const auto& [name, r] : ua.systems) summary << "uncovered " << name << ": " << report_summary(r) << "\n";
    out << summary.str();

    if (!o.out.empty()) {
        ensure_dir(o.out);
        write_text(o.out + "/report.tsv", header + report_tsv(report));
        std::string diag = header + diagnostics_header();
        for (std::size_t i = 0; i < data.size(); ++i) diag += diagnostics_line(data[i], preds[i]);
        write_text(o.out + "/diagnostics.tsv", diag);
        std::string lines = header;
        for (const auto& p : outputs) lines += p + "\n";
        write_text(o.out + "/predictions.txt", lines);
        write_text(o.out + "/summary.txt", header + summary.str());
        out << "wrote " << o.out << "/report.tsv\n";
    }
    return kOk;
}

int cmd_suggest(const Options& o, std::ostream& out) {
    const std::string r1 = normalize(o.root1, NormalizePolicy::Reject);
    const std::string r2 = normalize(o.root2, NormalizePolicy::Reject);
    if (r1.empty() || r2.empty()) throw UsageError("both roots must contain letters");
    json manifest;
    const ModelSet models = load_models(o.models, manifest);
    const DecodeStrategy strategy = strategy_of(o);
    if (strategy.kind != StrategyKind::Score) throw ConfigurationError("suggest ranks candidates: use --strategy score");
    const Prediction p = predict({r1, r2, std::nullopt}, strategy, models, std::max<std::size_t>(1, o.threads));
    out << "rank\tsurface\tscore\tsplit\tparts\n";
    const std::size_t k = std::min(o.top_k, p.ranked.size());
    for (std::size_t i = 0; i < k; ++i) {
        const auto& c = p.ranked[i];
        out << i + 1 << '\t' << c.surface << '\t' << format_fixed(c.score, 6) << "\t(" << c.prefix_len << ","
            << c.suffix_len << ")\t" << r1.substr(0, c.prefix_len) << "+" << r2.substr(r2.size() - c.suffix_len)
            << "\n";
    }
    return kOk;
}

int cmd_significance(const Options& o, std::ostream& out) {
    const auto a = load_column(o.preds_a, "--a");
    const auto b = load_column(o.preds_b, "--b");
    const auto t = load_column(o.truth, "--truth");
    BootstrapConfig cfg;
    cfg.resamples = o.resamples;
    if (o.subset) cfg.subset = o.subset;
    cfg.seed = o.seed;
    cfg.margin = o.margin;
    const BootstrapResult r = paired_bootstrap(a, b, t, cfg);

    json rc;
    rc["command"] = "significance";
    rc["M"] = r.resamples;
    rc["N"] = r.subset;
    rc["seed"] = r.seed;
    rc["margin"] = r.margin;
    auto input = [](const std::string& path, const std::vector<std::string>& rows) {
        std::string joined;
        for (const auto& x : rows) joined += x + "\n";
        return json{{"path", path}, {"rows", rows.size()}, {"fnv1a64", hex64(fnv1a64(joined))}};
    };
    rc["inputs"] = {{"a", input(o.preds_a, a)}, {"b", input(o.preds_b, b)}, {"truth", input(o.truth, t)}};
    std::ostringstream s;
    s << comment_line(rc);
    s << "seed,M,N,p_better,margin,p_distance_margin\n";
    s << r.seed << ',' << r.resamples << ',' << r.subset << ',' << format_fixed(r.p_better, 6) << ','
      << format_fixed(r.margin, 4) << ',' << format_fixed(r.p_distance_margin, 6) << '\n';
    if (!o.out.empty()) write_text(o.out, s.str());
    out << s.str();
    return kOk;
}

int cmd_coverage(const Options& o, std::ostream& out, std::ostream& err) {
    const auto data = load_examples(o.data, "--data", err, true);
    const CoverageReport c = coverage_report(data);
    json rc{{"command", "coverage"}, {"data", o.data}, {"data_fnv1a64", hex64(fingerprint(data))}};
    out << "n\tcovered\tcoverage_pct\n"
        << c.n << '\t' << c.covered << '\t' << format_fixed(c.coverage_pct, 2) << '\n';
    if (!o.out.empty()) {
        std::string s = comment_line(rc) + "root1\troot2\ttruth\n";
        for (std::size_t i : c.uncovered) s += data[i].root1 + "\t" + data[i].root2 + "\t" + *data[i].target + "\n";
        write_text(o.out, s);
    }
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Neural portmanteau generation: train, evaluate and query character seq2seq models."};
    app.name("portmanteau");
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "train forward and/or backward models (+ character LM)");
    add_model_flags(train, o);
    add_scorer_flag(train, o, true);
    train->add_option("--threads", o.threads, "worker threads")->capture_default_str();
    train->add_option("--data", o.data, "training TSV (root1, root2, portmanteau)")->required();
    train->add_option("--valid", o.valid, "validation TSV for early stopping");
    train->add_option("--model", o.models, "output model file")->required();

    auto* crossval_cmd = app.add_subcommand("crossval", "k-fold cross-validation");
    add_model_flags(crossval_cmd, o);
    add_strategy_flags(crossval_cmd, o);
    crossval_cmd->add_option("--data", o.data, "dataset TSV")->required();
    crossval_cmd->add_option("--folds", o.folds, "number of folds")->capture_default_str();
    crossval_cmd->add_option("--configs", o.configs, "configuration labels, e.g. backward/attn/ens/init/score")
        ->delimiter(',');
    crossval_cmd->add_option("--out", o.out, "report directory")->required();

    auto* eval_cmd = app.add_subcommand("eval", "evaluate trained models on a held-out set");
    add_strategy_flags(eval_cmd, o);
    eval_cmd->add_option("--model", o.models, "model file(s)")->required();
    eval_cmd->add_option("--data", o.data, "test TSV")->required();
    eval_cmd->add_option("--baseline", o.baseline, "baseline predictions for the uncovered-subset comparison");
    eval_cmd->add_option("--out", o.out, "report directory");

    auto* suggest = app.add_subcommand("suggest", "rank portmanteau candidates for two roots");
    add_strategy_flags(suggest, o);
    suggest->add_option("root1", o.root1, "first root")->required();
    suggest->add_option("root2", o.root2, "second root")->required();
    suggest->add_option("--model", o.models, "model file(s)")->required();
    suggest->add_option("--top-k", o.top_k, "number of suggestions")->capture_default_str();

    auto* pretrain = app.add_subcommand("pretrain-embeddings", "train the character LM on a word list");
    add_lm_flags(pretrain, o);
    pretrain->add_option("--wordlist", o.wordlist, "dictionary words")->required();
    pretrain->add_option("--model", o.models, "output model file")->required();

    auto* sig = app.add_subcommand("significance", "paired bootstrap comparison of two prediction files");
    sig->add_option("--a", o.preds_a, "predictions of system A")->required();
    sig->add_option("--b", o.preds_b, "predictions of system B")->required();
    sig->add_option("--truth", o.truth, "truths (one per line, or a dataset TSV)")->required();
    sig->add_option("-M,--resamples", o.resamples, "number of subsets")->capture_default_str();
    sig->add_option("-N,--subset", o.subset, "subset size (default: half the examples)");
    sig->add_option("--seed", o.seed, "resampling seed")->capture_default_str();
    sig->add_option("--margin", o.margin, "Distance margin")->capture_default_str();
    sig->add_option("--out", o.out, "output CSV");

    auto* coverage = app.add_subcommand("coverage", "fraction of truths expressible as prefix + suffix");
    coverage->add_option("--data", o.data, "dataset TSV")->required();
    coverage->add_option("--out", o.out, "write the uncovered examples here");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        app.exit(e, err, err);
        return kUsageError;
    }

    try {
        if (train->parsed()) return cmd_train(o, out, err);
        if (crossval_cmd->parsed()) return cmd_crossval(o, out, err);
        if (eval_cmd->parsed()) return cmd_eval(o, out, err);
        if (suggest->parsed()) return cmd_suggest(o, out);
        if (pretrain->parsed()) return cmd_pretrain(o, out, err);
        if (sig->parsed()) return cmd_significance(o, out);
        if (coverage->parsed()) return cmd_coverage(o, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const ConfigurationError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kUsageError;
    } catch (const ContractError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const RejectedRecord& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const EncodingError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kInternalError;
    }
    return kInternalError;
}

}  // namespace portmanteau::cli
