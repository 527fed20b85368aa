#pragma once

// Prediction strategies: greedy and beam decoding of the forward model, and
// exhaustive prefix+suffix candidate generation ranked by forward,
// noisy-channel or ensemble scores.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "portmanteau/models.hpp"
#include "portmanteau/parallel.hpp"

namespace portmanteau {

// A prefix of root1 (length prefix_len) joined to a suffix of root2
// (length suffix_len).
struct Candidate {
    std::string surface;
    std::size_t prefix_len = 0;
    std::size_t suffix_len = 0;
    // Per-term mean log-probabilities: "forward", "channel", "lm".
    std::map<std::string, double> scores;
    double score = 0.0;
};

inline std::size_t raw_candidate_count(std::string_view root1, std::string_view root2) {
    return root1.size() * root2.size();
}

// All root1[0..i) + root2[|root2|-j..) for i in [1,|root1|], j in [1,|root2|],
// deduplicated by surface (smallest (i, j) kept) and sorted by surface.
inline std::vector<Candidate> generate_candidates(std::string_view root1, std::string_view root2) {
    if (root1.empty() || root2.empty()) throw ContractError("generate_candidates: root words must be non-empty");
    std::map<std::string, Candidate> unique;
    for (std::size_t i = 1; i <= root1.size(); ++i) {
        for (std::size_t j = 1; j <= root2.size(); ++j) {
            std::string s(root1.substr(0, i));
            s.append(root2.substr(root2.size() - j));
            unique.try_emplace(s, Candidate{s, i, j, {}, 0.0});
        }
    }
    std::vector<Candidate> out;
    out.reserve(unique.size());
    for (auto& [_, c] : unique) out.push_back(std::move(c));
    return out;
}

inline bool is_covered(std::string_view root1, std::string_view root2, std::string_view target) {
    for (std::size_t i = 1; i <= root1.size() && i < target.size(); ++i) {
        if (target.substr(0, i) != root1.substr(0, i)) break;
        const std::size_t j = target.size() - i;
        if (j <= root2.size() && target.substr(i) == root2.substr(root2.size() - j)) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Strategies and model sets

enum class ScorerKind { Forward, Backward };
enum class StrategyKind { Greedy, Beam, Score };

inline std::string to_string(ScorerKind k) { return k == ScorerKind::Forward ? "forward" : "backward"; }
inline std::string to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::Greedy: return "greedy";
        case StrategyKind::Beam: return "beam";
        case StrategyKind::Score: return "score";
    }
    return "?";
}
inline ScorerKind parse_scorer(const std::string& s) {
    if (s == "forward") return ScorerKind::Forward;
    if (s == "backward") return ScorerKind::Backward;
    throw ConfigurationError("unknown scorer '" + s + "'");
}
inline StrategyKind parse_strategy(const std::string& s) {
    if (s == "greedy") return StrategyKind::Greedy;
    if (s == "beam") return StrategyKind::Beam;
    if (s == "score") return StrategyKind::Score;
    throw ConfigurationError("unknown strategy '" + s + "'");
}

struct DecodeStrategy {
    StrategyKind kind = StrategyKind::Score;
    ScorerKind scorer = ScorerKind::Backward;
    std::size_t beam_width = 5;
    // Weight on log P(y) in the noisy-channel score.
    double lambda = 1.0;

    void validate() const {
        if (beam_width == 0) throw ConfigurationError("beam width must be at least 1");
        if (!(lambda > 0.0)) throw ConfigurationError("lambda must be positive");
    }
};

// Trained models available for prediction. Several members in a slot form
// an ensemble whose log-probabilities are averaged per term.
struct ModelSet {
    std::vector<Seq2SeqModel> forward;
    std::vector<Seq2SeqModel> backward;
    std::vector<CharLM> lm;
};

// ---------------------------------------------------------------------------
// Autoregressive decoding

struct DecodeResult {
    std::string output;
    double log_prob = 0.0;
    bool truncated = false;
};

inline std::size_t default_max_len(std::span<const SymbolId> input) { return input.size() + 5; }

namespace detail {

// Mean computed as x_0 + sum(x_i - x_0) / n, which returns x_0 exactly
// when all members agree.
inline double member_mean(std::span<const double> xs) {
    if (xs.empty()) throw ContractError("member_mean: no members");
    double delta = 0.0;
    for (double x : xs) delta += x - xs.front();
    return xs.front() + delta / static_cast<double>(xs.size());
}

inline bool emittable(SymbolId id) {
    const Alphabet& a = Alphabet::standard();
    return id != a.separator() && id != a.pad();
}

}  // namespace detail

// Argmax over emittable symbols (lowest id on ties) until stop or max_len steps.
inline DecodeResult greedy_decode(const Seq2SeqModel& model, std::span<const SymbolId> input,
                                  std::size_t max_len) {
    const Alphabet& a = Alphabet::standard();
    Tape tape;
    auto b = model.bind(tape, false);
    auto enc = model.encode(tape, b, input);
    auto st = model.initial_state(tape, enc);
    SymbolId prev = start_of_sequence();
    DecodeResult r;
    Sequence out;
    for (std::size_t t = 0; t < max_len; ++t) {
        auto o = model.step(tape, b, enc, st, prev);
        const auto lp = log_softmax(tape.value(o.logits).data());
        SymbolId best = a.size();
        for (SymbolId s = 0; s < lp.size(); ++s) {
            if (!detail::emittable(s)) continue;
            if (best == a.size() || lp[s] > lp[best]) best = s;
        }
        r.log_prob += lp[best];
        if (best == a.stop()) {
            r.output = a.decode(out);
            return r;
        }
        out.push_back(best);
        st = o.state;
        prev = best;
    }
    r.output = a.decode(out);
    r.truncated = true;
    return r;
}

// Beam search over emittable symbols. Hypotheses that emit stop are
// finished; hypotheses still open after max_len steps count as truncated
// outputs. The best-scoring output found is returned, and the greedy path
// is always among the contenders, so the result never scores below greedy.
inline DecodeResult beam_decode(const Seq2SeqModel& model, std::span<const SymbolId> input, std::size_t width,
                                std::size_t max_len) {
    if (width == 0) throw ConfigurationError("beam width must be at least 1");
    const Alphabet& a = Alphabet::standard();
    Tape tape;
    auto b = model.bind(tape, false);
    auto enc = model.encode(tape, b, input);

    struct Hyp {
        Sequence ids;
        double score;
        Seq2SeqModel::DecoderState state;
        SymbolId last;
    };
    struct Expansion {
        double score;
        std::size_t hyp;
        SymbolId symbol;
    };

    std::vector<Hyp> live{{{}, 0.0, model.initial_state(tape, enc), start_of_sequence()}};
    std::optional<DecodeResult> best;
    auto offer = [&](const Sequence& ids, double score, bool truncated) {
        if (!best || score > best->log_prob) best = DecodeResult{a.decode(ids), score, truncated};
    };

    for (std::size_t t = 0; t < max_len && !live.empty(); ++t) {
        std::vector<Expansion> exps;
        std::vector<Seq2SeqModel::DecoderState> next_states(live.size());
        for (std::size_t h = 0; h < live.size(); ++h) {
            auto o = model.step(tape, b, enc, live[h].state, live[h].last);
            next_states[h] = o.state;
            const auto lp = log_softmax(tape.value(o.logits).data());
            for (SymbolId s = 0; s < lp.size(); ++s) {
                if (detail::emittable(s)) exps.push_back({live[h].score + lp[s], h, s});
            }
        }
        std::stable_sort(exps.begin(), exps.end(), [](const Expansion& x, const Expansion& y) {
            return x.score > y.score;
        });
        if (exps.size() > width) exps.resize(width);

        std::vector<Hyp> next;
        for (const auto& e : exps) {
            const Hyp& parent = live[e.hyp];
            if (e.symbol == a.stop()) {
                offer(parent.ids, e.score, false);
                continue;
            }
            Sequence ids = parent.ids;
            ids.push_back(e.symbol);
            next.push_back({std::move(ids), e.score, next_states[e.hyp], e.symbol});
        }
        if (t + 1 == max_len) {
            for (const auto& h : next) offer(h.ids, h.score, true);
            next.clear();
        }
        live = std::move(next);
        // Log-probabilities only decrease, so no open hypothesis can overtake.
        if (best && !live.empty()) {
            double top = -std::numeric_limits<double>::infinity();
            for (const auto& h : live) top = std::max(top, h.score);
            if (best->log_prob >= top) break;
        }
    }

    const DecodeResult greedy = greedy_decode(model, input, max_len);
    if (!best || greedy.log_prob > best->log_prob) return greedy;
    return *best;
}

// ---------------------------------------------------------------------------
// Candidate scoring

// log P(output_k | input) for many outputs sharing one encoder pass.
inline std::vector<double> score_outputs(const Seq2SeqModel& model, std::span<const SymbolId> input,
                                         std::span<const Sequence> outputs) {
    Tape tape;
    auto b = model.bind(tape, false);
    auto enc = model.encode(tape, b, input);
    std::vector<double> out;
    out.reserve(outputs.size());
    for (const auto& y : outputs) {
        detail::check_output(y);
        auto st = model.initial_state(tape, enc);
        SymbolId prev = start_of_sequence();
        double total = 0.0;
        for (SymbolId s : y) {
            auto o = model.step(tape, b, enc, st, prev);
            total += log_softmax(tape.value(o.logits).data())[s];
            st = o.state;
            prev = s;
        }
        out.push_back(total);
    }
    return out;
}

inline void require_models(const DecodeStrategy& strategy, const ModelSet& models) {
    strategy.validate();
    if (strategy.kind != StrategyKind::Score) {
        if (strategy.scorer != ScorerKind::Forward) {
            throw ConfigurationError(to_string(strategy.kind) +
                                     " decoding runs the forward model only; it cannot use the backward scorer");
        }
        if (models.forward.size() != 1) {
            throw ConfigurationError(to_string(strategy.kind) + " decoding needs exactly one forward model, got " +
                                     std::to_string(models.forward.size()));
        }
        return;
    }
    if (strategy.scorer == ScorerKind::Forward && models.forward.empty()) {
        throw ConfigurationError("forward scorer needs at least one forward model");
    }
    if (strategy.scorer == ScorerKind::Backward && (models.backward.empty() || models.lm.empty())) {
        throw ConfigurationError("backward scorer needs a backward model and a character language model");
    }
}

// Descending score, ties by surface.
inline void rank_candidates(std::vector<Candidate>& candidates) {
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& p, const Candidate& q) {
        if (p.score != q.score) return p.score > q.score;
        return p.surface < q.surface;
    });
}

// Fills each candidate's scores and returns them ranked: descending score,
// ties by surface. Forward: mean_m log P_m(y|x). Backward: mean_m log P_m(x|y)
// + lambda * mean_l log P_l(y).
inline std::vector<Candidate> score_candidates(std::vector<Candidate> candidates, std::string_view root1,
                                               std::string_view root2, const DecodeStrategy& strategy,
                                               const ModelSet& models, std::size_t threads = 1) {
    if (candidates.empty()) throw ContractError("score_candidates: no candidates");
    DecodeStrategy s = strategy;
    s.kind = StrategyKind::Score;
    require_models(s, models);
    const Alphabet& a = Alphabet::standard();
    const Sequence x = encode_input(root1, root2);

    if (s.scorer == ScorerKind::Forward) {
        std::vector<Sequence> outputs;
        for (const auto& c : candidates) outputs.push_back(encode_target(c.surface));
        std::vector<std::vector<double>> per_member(models.forward.size());
        parallel_for(models.forward.size(), threads, [&](std::size_t m) {
            per_member[m] = score_outputs(models.forward[m], x, outputs);
        });
        std::vector<double> column(per_member.size());
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            for (std::size_t m = 0; m < per_member.size(); ++m) column[m] = per_member[m][k];
            const double mean = detail::member_mean(column);
            candidates[k].scores["forward"] = mean;
            candidates[k].score = mean;
        }
    } else {
        Sequence x_out = x;
        x_out.push_back(a.stop());
        parallel_for(candidates.size(), threads, [&](std::size_t k) {
            Candidate& c = candidates[k];
            const Sequence y = a.encode(c.surface);
            const Sequence y_stop = encode_target(c.surface);
            std::vector<double> channels, lms;
            for (const auto& m : models.backward) channels.push_back(m.sequence_log_prob(y, x_out));
            for (const auto& l : models.lm) lms.push_back(l.log_prob(y_stop));
            const double channel = detail::member_mean(channels);
            const double lm = detail::member_mean(lms);
            c.scores["channel"] = channel;
            c.scores["lm"] = lm;
            c.score = channel + s.lambda * lm;
        });
    }
    rank_candidates(candidates);
    return candidates;
}

// ---------------------------------------------------------------------------

struct Prediction {
    std::string output;
    bool truncated = false;
    std::size_t n_candidates = 0;
    std::optional<bool> truth_in_candidates;
    // Ranked candidates (Score strategy only).
    std::vector<Candidate> ranked;
};

inline Prediction predict(const Example& example, const DecodeStrategy& strategy, const ModelSet& models,
                          std::size_t threads = 1) {
    require_models(strategy, models);
    Prediction p;
    auto candidates = generate_candidates(example.root1, example.root2);
    p.n_candidates = candidates.size();
    if (example.target) p.truth_in_candidates = is_covered(example.root1, example.root2, *example.target);
    const Sequence x = encode_input(example);
    switch (strategy.kind) {
        case StrategyKind::Greedy: {
            auto r = greedy_decode(models.forward.front(), x, default_max_len(x));
            p.output = r.output;
            p.truncated = r.truncated;
            break;
        }
        case StrategyKind::Beam: {
            auto r = beam_decode(models.forward.front(), x, strategy.beam_width, default_max_len(x));
            p.output = r.output;
            p.truncated = r.truncated;
            break;
        }
        case StrategyKind::Score: {
            p.ranked = score_candidates(std::move(candidates), example.root1, example.root2, strategy, models,
                                        threads);
            p.output = p.ranked.front().surface;
            break;
        }
    }
    return p;
}

// `root1, root2, truth, prediction, truth_in_candidates, n_candidates, top5`
// as one tab-separated line; top5 entries are `surface:score` joined by ','.
inline std::string diagnostics_header() {
    return "root1\troot2\ttruth\tprediction\ttruth_in_candidates\tn_candidates\ttop5\n";
}

inline std::string diagnostics_line(const Example& e, const Prediction& p) {
    std::ostringstream out;
    out.precision(10);
    out << e.root1 << '\t' << e.root2 << '\t' << e.target.value_or("") << '\t' << p.output << '\t';
    out << (p.truth_in_candidates ? (*p.truth_in_candidates ? "1" : "0") : "") << '\t' << p.n_candidates << '\t';
    for (std::size_t k = 0; k < std::min<std::size_t>(5, p.ranked.size()); ++k) {
        if (k) out << ',';
        out << p.ranked[k].surface << ':' << p.ranked[k].score;
    }
    out << '\n';
    return out.str();
}

}  // namespace portmanteau
