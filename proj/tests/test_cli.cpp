#include <gtest/gtest.h>

#include <sys/wait.h>

#include <bit>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "portmanteau/portmanteau.hpp"
#include "test_util.hpp"

using namespace portmanteau;
using namespace portmanteau::testing;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = portmanteau::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               (std::string("portmanteau-cli-") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) { return read_file(path); }

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string l; std::getline(ss, l);) out.push_back(l);
    return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string f; std::getline(ss, f, sep);) out.push_back(f);
    if (!s.empty() && s.back() == sep) out.push_back("");
    return out;
}

nlohmann::json run_config_line(const std::string& text) {
    const std::string prefix = "# run_config ";
    EXPECT_EQ(text.rfind(prefix, 0), 0u) << text.substr(0, 80);
    return nlohmann::json::parse(lines_of(text).front().substr(prefix.size()));
}

// Six fixture rows including ben;jennifer, small enough to overfit in seconds.
std::string write_six(const TempDir& dir) {
    const auto ex = fixture20();
    const std::string path = dir.file("six.tsv");
    std::ofstream(path) << format_dataset(std::span<const Example>(ex).first(6));
    return path;
}

const std::vector<std::string> kOverfitFlags{"--scorer", "forward", "--init",     "off", "--ensemble",
                                             "1",        "--d-emb", "16",         "--d-hidden",
                                             "32",       "--epochs", "300",       "--patience",
                                             "20",       "--lr",     "0.01"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

}  // namespace

// ---------------------------------------------------------------------------
// usage and exit codes

TEST(Cli, HelpAndUsageErrors) {
    const auto help = run_cli({"--help"});
    EXPECT_EQ(help.code, 0);
    for (const char* sub : {"train", "crossval", "eval", "suggest", "pretrain-embeddings", "significance"}) {
        EXPECT_NE(help.out.find(sub), std::string::npos) << sub;
    }
    EXPECT_EQ(run_cli({}).code, 2);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
    EXPECT_EQ(run_cli({"coverage", "--data"}).code, 2);
    EXPECT_EQ(run_cli({"train", "--data", "x.tsv", "--model", "m", "--attn", "maybe"}).code, 2);
    EXPECT_EQ(run_cli({"eval", "--data", "x.tsv", "--model", "m", "--strategy", "sample"}).code, 2);
    EXPECT_EQ(run_cli({"train", "--data", "x.tsv", "--model", "m", "--no-such-flag"}).code, 2);
}

TEST(Cli, FlagDefaultsFollowTheBestConfiguration) {
    const auto h = run_cli({"crossval", "--help"});
    ASSERT_EQ(h.code, 0);
    auto has = [&](const std::string& flag, const std::string& def) {
        const auto at = h.out.find(flag);
        ASSERT_NE(at, std::string::npos) << flag;
        const auto eol = h.out.find('\n', at);
        EXPECT_NE(h.out.substr(at, eol - at).find("[" + def + "]"), std::string::npos) << h.out.substr(at, eol - at);
    };
    has("--attn", "on");
    has("--ensemble", "10");
    has("--init", "on");
    has("--strategy", "score");
    has("--scorer", "backward");
    has("--lambda", "1");
    has("--beam-width", "5");
    has("--seed", "1");
    has("--folds", "10");
    for (const char* f : {"--data", "--wordlist", "--out", "--pretrained"}) {
        EXPECT_NE(h.out.find(f), std::string::npos) << f;
    }
    const auto e = run_cli({"eval", "--help"});
    EXPECT_NE(e.out.find("--model"), std::string::npos);
}

TEST(Cli, MissingDatasetIsUsageError) {
    TempDir dir;
    const auto r = run_cli({"train", "--data", dir.file("absent.tsv"), "--model", dir.file("m"), "--init", "off"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("absent.tsv"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir.file("m")));
}

TEST(Cli, InitWithoutWordListIsUsageError) {
    TempDir dir;
    const auto r = run_cli({"train", "--data", fixture_path("fixture20.tsv"), "--model", dir.file("m")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("--wordlist"), std::string::npos) << r.err;
}

TEST(Cli, TrainingFailureIsInternalError) {
    TempDir dir;
    const auto r = run_cli({"train", "--data", fixture_path("fixture20.tsv"), "--model", dir.file("m"), "--scorer",
                        "forward", "--init", "off", "--ensemble", "1", "--d-emb", "4", "--d-hidden", "5", "--lr",
                        "1e308"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("non-finite"), std::string::npos) << r.err;
}

TEST(Cli, BinaryExitStatus) {
    TempDir dir;
    const std::string bin = PORTMANTEAU_CLI_BIN;
    auto status = [&](const std::string& args) {
        const int s = std::system((bin + " " + args + " >" + dir.file("o") + " 2>" + dir.file("e")).c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    EXPECT_EQ(status("--help"), 0);
    EXPECT_EQ(status("coverage --data " + fixture_path("fixture20.tsv")), 0);
    EXPECT_EQ(status("coverage --data " + dir.file("absent.tsv")), 2);
    EXPECT_EQ(status("suggest ben"), 2);
}

// ---------------------------------------------------------------------------
// train / eval / suggest

TEST(Cli, TrainMatchesLibraryAndReproducesTrainingSet) {
    TempDir dir;
    const std::string data = write_six(dir);
    const auto t = run_cli(with({"train", "--data", data, "--model", dir.file("f.model")}, kOverfitFlags));
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_NE(t.out.find("loss curves: " + dir.file("f.model") + ".curves"), std::string::npos) << t.out;

    // Same configuration through the library.
    PipelineConfig pc;
    pc.arch = Architecture::Forward;
    pc.ensemble = 1;
    pc.init = false;
    pc.strategy.scorer = ScorerKind::Forward;
    pc.d_emb = 16;
    pc.d_hidden = 32;
    pc.train.max_epochs = 300;
    pc.train.patience = 20;
    pc.train.learning_rate = 0.01;
    const auto examples = load_dataset(data).examples;
    const auto tp = train_pipeline(pc, examples, {}, nullptr, 1);

    const ModelFile f = load_model_file(dir.file("f.model"));
    ASSERT_EQ(f.members.size(), 1u);
    EXPECT_EQ(f.members[0].seed, tp.member_seeds[0]);
    for (const auto& [name, m] : tp.models.forward[0].params().values()) {
        const Matrix& o = f.members[0].params.value(name);
        for (std::size_t i = 0; i < m.size(); ++i) {
            ASSERT_EQ(std::bit_cast<std::uint64_t>(m[i]), std::bit_cast<std::uint64_t>(o[i])) << name;
        }
    }

    // The loaded file reproduces the training set.
    for (const char* strategy : {"greedy", "score"}) {
        const auto e = run_cli({"eval", "--model", dir.file("f.model"), "--data", data, "--scorer", "forward",
                            "--strategy", strategy, "--out", dir.file(strategy)});
        ASSERT_EQ(e.code, 0) << e.err;
        EXPECT_NE(e.out.find("matches=100.00%"), std::string::npos) << strategy << "\n" << e.out;
        std::vector<std::string> preds;
        for (const auto& l : lines_of(slurp(dir.file(strategy) + "/predictions.txt"))) {
            if (l[0] != '#') preds.push_back(l);
        }
        ASSERT_EQ(preds.size(), examples.size());
        for (std::size_t i = 0; i < preds.size(); ++i) EXPECT_EQ(preds[i], *examples[i].target);
    }

    const auto s = run_cli({"suggest", "ben", "jennifer", "--model", dir.file("f.model"), "--scorer", "forward"});
    ASSERT_EQ(s.code, 0) << s.err;
    const auto rows = lines_of(s.out);
    ASSERT_GE(rows.size(), 2u);
    EXPECT_EQ(rows[0], "rank\tsurface\tscore\tsplit\tparts");
    EXPECT_EQ(split(rows[1], '\t')[1], "bennifer");
}

TEST(Cli, TrainIsByteDeterministicAndEmbedsConfig) {
    TempDir dir;
    const std::vector<std::string> common{"--data",   fixture_path("fixture20.tsv"),
                                          "--wordlist", fixture_path("words.txt"),
                                          "--d-emb",  "4",
                                          "--d-hidden", "5",
                                          "--epochs", "1",
                                          "--lm-epochs", "1",
                                          "--ensemble", "3",
                                          "--seed",   "9"};
    ASSERT_EQ(run_cli(with({"train", "--model", dir.file("a.model")}, common)).code, 0);
    ASSERT_EQ(run_cli(with({"train", "--model", dir.file("b.model")}, common)).code, 0);
    EXPECT_EQ(slurp(dir.file("a.model")), slurp(dir.file("b.model")));

    const ModelFile f = load_model_file(dir.file("a.model"));
    // Defaults: backward with attention, embedding init, word-list LM.
    std::size_t backward = 0, lm = 0;
    std::set<std::uint64_t> seeds;
    for (const auto& m : f.members) {
        backward += m.config.arch == Architecture::Backward;
        lm += m.config.arch == Architecture::CharLM;
        EXPECT_TRUE(m.config.attention || m.config.arch == Architecture::CharLM);
        seeds.insert(m.seed);
    }
    EXPECT_EQ(backward, 3u);
    EXPECT_EQ(lm, 1u);
    EXPECT_EQ(seeds.size(), 4u);
    EXPECT_EQ(f.run_config.at("seed"), 9);
    EXPECT_EQ(f.run_config.at("init"), "on");
    EXPECT_EQ(f.run_config.at("lm_source"), "wordlist");
    EXPECT_EQ(f.run_config.at("member_seeds_backward").size(), 3u);
    EXPECT_EQ(train_config_from_json(f.train_config).max_epochs, 1u);
    EXPECT_FALSE(f.data_fingerprint.empty());

    for (const char* curve : {"backward-0.csv", "backward-2.csv", "lm.csv"}) {
        const std::string text = slurp(dir.file("a.model") + ".curves/" + curve);
        EXPECT_EQ(run_config_line(text).at("seed"), 9) << curve;
        EXPECT_EQ(lines_of(text).at(1), "epoch,train_nll,valid_nll,valid_matches") << curve;
    }
}

TEST(Cli, TrainBothArchitecturesServesEveryScorer) {
    TempDir dir;
    ASSERT_EQ(run_cli({"train", "--data", fixture_path("fixture20.tsv"), "--model", dir.file("m"), "--scorer", "both",
                   "--init", "off", "--ensemble", "1", "--d-emb", "4", "--d-hidden", "5", "--epochs", "1",
                   "--lm-epochs", "1"})
                  .code,
              0);
    for (const char* scorer : {"forward", "backward"}) {
        const auto r = run_cli({"eval", "--model", dir.file("m"), "--data", fixture_path("fixture20.tsv"), "--scorer",
                            scorer});
        EXPECT_EQ(r.code, 0) << scorer << ": " << r.err;
    }
}

TEST(Cli, EvalReportsCoverageAndIsDeterministic) {
    TempDir dir;
    ASSERT_EQ(run_cli({"train", "--data", fixture_path("fixture20.tsv"), "--model", dir.file("m"), "--init", "off",
                   "--ensemble", "2", "--d-emb", "4", "--d-hidden", "5", "--epochs", "2", "--lm-epochs", "2"})
                  .code,
              0);
    const std::vector<std::string> eval{"eval", "--model", dir.file("m"), "--data", fixture_path("fixture20.tsv")};
    const auto a = run_cli(with(eval, {"--out", dir.file("a")}));
    const auto b = run_cli(with(eval, {"--out", dir.file("b")}));
    ASSERT_EQ(a.code, 0) << a.err;
    ASSERT_EQ(b.code, 0);
    for (const char* f : {"report.tsv", "diagnostics.tsv", "predictions.txt", "summary.txt"}) {
        EXPECT_EQ(slurp(dir.file("a") + "/" + f), slurp(dir.file("b") + "/" + f)) << f;
        EXPECT_EQ(run_config_line(slurp(dir.file("a") + "/" + f)).at("config"), "backward/attn/ens/noinit/score");
    }
    EXPECT_NE(a.out.find("coverage_pct 90.00"), std::string::npos) << a.out;
    EXPECT_NE(a.out.find("uncovered 2 of 20"), std::string::npos) << a.out;

    std::set<std::string> uncovered;
    for (const auto& l : lines_of(slurp(dir.file("a") + "/report.tsv"))) {
        const auto f = split(l, '\t');
        if (f.size() == 6 && f[5] == "0") uncovered.insert(f[2]);
    }
    EXPECT_EQ(uncovered, (std::set<std::string>{"chortle", "sitcom"}));

    const auto diag = lines_of(slurp(dir.file("a") + "/diagnostics.tsv"));
    EXPECT_EQ(diag.at(1), "root1\troot2\ttruth\tprediction\ttruth_in_candidates\tn_candidates\ttop5");
    EXPECT_EQ(diag.size(), 22u);

    // Greedy needs the forward model, which this file lacks.
    const auto bad = run_cli(with(eval, {"--strategy", "greedy", "--scorer", "forward"}));
    EXPECT_EQ(bad.code, 2);
    EXPECT_NE(bad.err.find("configuration error"), std::string::npos) << bad.err;
    EXPECT_EQ(run_cli(with(eval, {"--scorer", "forward"})).code, 2);
}

TEST(Cli, SuggestListsEveryCandidateWithSplits) {
    TempDir dir;
    ASSERT_EQ(run_cli({"train", "--data", fixture_path("fixture20.tsv"), "--model", dir.file("m"), "--scorer",
                   "forward", "--init", "off", "--ensemble", "1", "--d-emb", "4", "--d-hidden", "5", "--epochs",
                   "1"})
                  .code,
              0);
    const auto r = run_cli({"suggest", "Ben", "jennifer", "--model", dir.file("m"), "--scorer", "forward", "--top-k",
                        "1000"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = lines_of(r.out);
    const auto candidates = generate_candidates("ben", "jennifer");
    ASSERT_EQ(rows.size(), candidates.size() + 1);
    std::set<std::string> surfaces;
    double prev = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto f = split(rows[i], '\t');
        ASSERT_EQ(f.size(), 5u);
        EXPECT_EQ(f[0], std::to_string(i));
        std::size_t p = 0, q = 0;
        ASSERT_EQ(std::sscanf(f[3].c_str(), "(%zu,%zu)", &p, &q), 2) << f[3];
        EXPECT_EQ(std::string("ben").substr(0, p) + std::string("jennifer").substr(8 - q), f[1]);
        EXPECT_EQ(f[4], std::string("ben").substr(0, p) + "+" + std::string("jennifer").substr(8 - q));
        const double score = std::stod(f[2]);
        if (i > 1) EXPECT_LE(score, prev);
        prev = score;
        surfaces.insert(f[1]);
    }
    EXPECT_EQ(surfaces.size(), candidates.size());

    EXPECT_EQ(run_cli({"suggest", "b3n", "jennifer", "--model", dir.file("m"), "--scorer", "forward"}).code, 2);
    EXPECT_EQ(run_cli({"suggest", "ben", "jennifer", "--model", dir.file("m"), "--scorer", "forward", "--strategy",
                   "greedy"})
                  .code,
              2);
    EXPECT_EQ(run_cli({"suggest", "ben", "jennifer", "--model", dir.file("absent")}).code, 2);
}

// ---------------------------------------------------------------------------
// crossval

TEST(Cli, CrossvalIsByteIdenticalAcrossRuns) {
    TempDir dir;
    ASSERT_EQ(run_cli({"pretrain-embeddings", "--wordlist", fixture_path("words.txt"), "--model", dir.file("lm"),
                   "--d-emb", "4", "--d-hidden", "5", "--lm-epochs", "2"})
                  .code,
              0);
    const std::vector<std::string> args{"crossval", "--data", fixture_path("fixture20.tsv"), "--folds", "4",
                                        "--pretrained", dir.file("lm"), "--d-emb", "4", "--d-hidden", "5",
                                        "--epochs", "2", "--ensemble", "3", "--configs",
                                        "backward/attn/ens/init/score,forward/noattn/noens/noinit/greedy"};
    const auto a = run_cli(with(args, {"--out", dir.file("a")}));
    ASSERT_EQ(a.code, 0) << a.err;
    const auto b = run_cli(with(args, {"--out", dir.file("b"), "--threads", "3"}));
    ASSERT_EQ(b.code, 0) << b.err;
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(dir.file("a"))) {
        const std::string name = entry.path().filename().string();
        EXPECT_EQ(slurp(entry.path().string()), slurp(dir.file("b") + "/" + name)) << name;
        ++files;
    }
    EXPECT_EQ(files, 2u * 4u + 2u);
}

TEST(Cli, CrossvalSummaryIsRecomputableFromFolds) {
    TempDir dir;
    const auto r = run_cli({"crossval", "--data", fixture_path("fixture20.tsv"), "--folds", "5", "--wordlist",
                        fixture_path("words.txt"), "--d-emb", "4", "--d-hidden", "5", "--epochs", "2",
                        "--lm-epochs", "2", "--ensemble", "2", "--configs",
                        "backward/attn/ens/init/score,backward/noattn/noens/noinit/score", "--out", dir.file("cv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string summary = slurp(dir.file("cv") + "/summary.tsv");
    EXPECT_EQ(run_config_line(summary).at("folds"), 5);
    const auto rows = lines_of(summary);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[1], "model\tattn\tens\tinit\tsearch\tmatches_pct\tdistance\tconfig");
    const auto best = split(rows[2], '\t');
    EXPECT_EQ((std::vector<std::string>(best.begin(), best.begin() + 5)),
              (std::vector<std::string>{"backward", "yes", "yes", "yes", "score"}));

    std::set<std::string> truths_seen;
    for (std::size_t row = 2; row < rows.size(); ++row) {
        const auto f = split(rows[row], '\t');
        const std::string label = f[7];
        std::string file_label = label;
        std::replace(file_label.begin(), file_label.end(), '/', '-');
        double matches = 0, dist = 0;
        std::size_t n_total = 0;
        for (int fold = 0; fold < 5; ++fold) {
            char name[32];
            std::snprintf(name, sizeof(name), ".fold-%02d.tsv", fold);
            const auto lines = lines_of(slurp(dir.file("cv") + "/" + file_label + name));
            ASSERT_EQ(run_config_line(lines[0]).at("configs").size(), 2u);
            ASSERT_EQ(lines[1], "root1\troot2\ttruth\tprediction\tdistance\tcovered");
            std::size_t exact = 0, d = 0, n = 0;
            for (std::size_t i = 2; i < lines.size(); ++i) {
                const auto c = split(lines[i], '\t');
                exact += c[2] == c[3];
                d += std::stoul(c[4]);
                EXPECT_EQ(std::stoul(c[4]), edit_distance(c[2], c[3]));
                ++n;
                if (row == 2) truths_seen.insert(c[0] + ";" + c[1]);
            }
            matches += 100.0 * static_cast<double>(exact) / static_cast<double>(n);
            dist += static_cast<double>(d) / static_cast<double>(n);
            n_total += n;
        }
        EXPECT_EQ(n_total, 20u);
        EXPECT_NEAR(std::stod(f[5]), matches / 5, 5e-5) << label;
        EXPECT_NEAR(std::stod(f[6]), dist / 5, 5e-5) << label;
    }
    EXPECT_EQ(truths_seen.size(), 20u);
    EXPECT_EQ(run_cli({"crossval", "--data", fixture_path("fixture20.tsv"), "--init", "off", "--configs",
                   "sideways/attn/ens/init/score", "--out", dir.file("x")})
                  .code,
              2);
    EXPECT_EQ(run_cli({"crossval", "--data", fixture_path("fixture20.tsv"), "--folds", "21", "--init", "off", "--out",
                   dir.file("x")})
                  .code,
              2);
}

// ---------------------------------------------------------------------------
// pretrain-embeddings, significance, coverage

TEST(Cli, PretrainEmbeddings) {
    TempDir dir;
    const auto r = run_cli({"pretrain-embeddings", "--wordlist", fixture_path("words.txt"), "--model", dir.file("lm"),
                        "--d-emb", "8", "--d-hidden", "16", "--lm-epochs", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("held-out perplexity"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("embedding table: 29 x 8"), std::string::npos) << r.out;
    const ModelFile f = load_model_file(dir.file("lm"));
    ASSERT_EQ(f.members.size(), 1u);
    EXPECT_EQ(f.members[0].config.arch, Architecture::CharLM);
    EXPECT_EQ(f.run_config.at("command"), "pretrain-embeddings");
    EXPECT_EQ(run_cli({"pretrain-embeddings", "--wordlist", dir.file("absent"), "--model", dir.file("x")}).code, 2);
    EXPECT_EQ(run_cli({"pretrain-embeddings", "--model", dir.file("x")}).code, 2);
}

TEST(Cli, SignificanceDefaultsAndHashes) {
    TempDir dir;
    std::ofstream(dir.file("truth.txt")) << "aa\nbb\ncc\ndd\nee\nff\ngg\n";
    std::ofstream(dir.file("a.txt")) << "# comment\naa\nbb\ncc\ndd\nxx\nff\ngg\n";
    std::ofstream(dir.file("b.txt")) << "aa\nxx\ncc\nxx\nee\nxx\ngg\n";
    const std::vector<std::string> base{"significance", "--a", dir.file("a.txt"), "--b", dir.file("b.txt"),
                                        "--truth", dir.file("truth.txt")};
    const auto r = run_cli(base);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rc = run_config_line(r.out);
    EXPECT_EQ(rc.at("M"), 1000);
    EXPECT_EQ(rc.at("N"), 3);
    const auto rows = lines_of(r.out);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[1], "seed,M,N,p_better,margin,p_distance_margin");
    const auto v = split(rows[2], ',');
    EXPECT_EQ(v[0], "1");
    EXPECT_EQ(v[1], "1000");
    EXPECT_EQ(v[2], "3");

    // The seed changes resampling but not the input hashes.
    const auto other = run_cli(with(base, {"--seed", "2"}));
    const auto rc2 = run_config_line(other.out);
    EXPECT_EQ(rc2.at("inputs"), rc.at("inputs"));
    EXPECT_EQ(rc2.at("seed"), 2);

    const auto same = run_cli({"significance", "--a", dir.file("a.txt"), "--b", dir.file("a.txt"), "--truth",
                           dir.file("truth.txt"), "-M", "50", "-N", "7", "--out", dir.file("sig.csv")});
    ASSERT_EQ(same.code, 0);
    EXPECT_EQ(split(lines_of(same.out)[2], ',')[3], "0.000000");
    EXPECT_EQ(slurp(dir.file("sig.csv")), same.out);

    std::ofstream(dir.file("short.txt")) << "aa\nbb\n";
    const auto bad = run_cli({"significance", "--a", dir.file("short.txt"), "--b", dir.file("b.txt"), "--truth",
                          dir.file("truth.txt")});
    EXPECT_EQ(bad.code, 2);
    EXPECT_NE(bad.err.find("A=2"), std::string::npos) << bad.err;
    EXPECT_NE(bad.err.find("B=7"), std::string::npos) << bad.err;
    EXPECT_EQ(run_cli(with(base, {"-N", "8"})).code, 2);
}

TEST(Cli, SignificanceAcceptsDatasetTruths) {
    TempDir dir;
    std::string preds;
    for (const auto& e : fixture20()) preds += *e.target + "\n";
    std::ofstream(dir.file("p.txt")) << preds;
    const auto r = run_cli({"significance", "--a", dir.file("p.txt"), "--b", dir.file("p.txt"), "--truth",
                        fixture_path("fixture20.tsv")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(run_config_line(r.out).at("N"), 10);
}

TEST(Cli, Coverage) {
    TempDir dir;
    const auto r = run_cli({"coverage", "--data", fixture_path("fixture20.tsv"), "--out", dir.file("unc.tsv")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "n\tcovered\tcoverage_pct\n20\t18\t90.00\n");
    const auto lines = lines_of(slurp(dir.file("unc.tsv")));
    ASSERT_EQ(lines.size(), 4u);
    EXPECT_EQ(lines[2], "chuckle\tsnort\tchortle");
    EXPECT_EQ(lines[3], "situation\tcomedy\tsitcom");
}
