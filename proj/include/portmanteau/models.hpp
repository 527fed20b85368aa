#pragma once

// Model graphs: the attentional encoder-decoder (used for both the forward
// P(y|x) and backward P(x|y) directions) and the character language model
// P(y).

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "portmanteau/data.hpp"
#include "portmanteau/layers.hpp"
#include "portmanteau/tensor.hpp"

namespace portmanteau {

enum class Architecture { Forward, Backward, CharLM };

inline std::string to_string(Architecture a) {
    switch (a) {
        case Architecture::Forward: return "forward";
        case Architecture::Backward: return "backward";
        case Architecture::CharLM: return "charlm";
    }
    return "?";
}

inline Architecture parse_architecture(const std::string& s) {
    if (s == "forward") return Architecture::Forward;
    if (s == "backward") return Architecture::Backward;
    if (s == "charlm") return Architecture::CharLM;
    throw ConfigurationError("unknown architecture '" + s + "'");
}

struct ModelConfig {
    Architecture arch = Architecture::Forward;
    std::size_t d_emb = 50;
    std::size_t d_hidden = 100;
    bool attention = true;

    bool operator==(const ModelConfig&) const = default;
};

// One supervised sequence: the conditioning input (empty for the language
// model) and the stop-terminated output.
struct TrainingPair {
    Sequence input;
    Sequence output;
};

// Teacher-forced summary of one pair.
struct SequenceStats {
    double log_prob = 0.0;
    // Every step's argmax (over non-pad symbols, lowest id on ties) equals
    // the reference symbol.
    bool argmax_exact = false;
};

// y_0 fed to every decoder's first step.
inline SymbolId start_of_sequence() { return Alphabet::standard().pad(); }

// Forward: "root1;root2" -> "target.". Backward: "target" -> "root1;root2.".
// CharLM: () -> "target.".
inline TrainingPair make_training_pair(Architecture arch, const Example& e) {
    if (!e.target) throw ContractError("training example '" + e.root1 + ";" + e.root2 + "' has no target");
    const Alphabet& a = Alphabet::standard();
    switch (arch) {
        case Architecture::Forward: return {encode_input(e), encode_target(*e.target)};
        case Architecture::Backward: {
            Sequence out = encode_input(e);
            out.push_back(a.stop());
            return {a.encode(*e.target), std::move(out)};
        }
        case Architecture::CharLM: return {{}, encode_target(*e.target)};
    }
    throw ContractError("unreachable");
}

inline std::vector<TrainingPair> make_training_pairs(Architecture arch, std::span<const Example> examples) {
    std::vector<TrainingPair> out;
    out.reserve(examples.size());
    for (const auto& e : examples) out.push_back(make_training_pair(arch, e));
    return out;
}

inline std::vector<TrainingPair> make_lm_pairs(std::span<const std::string> words) {
    std::vector<TrainingPair> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back({{}, encode_target(w)});
    return out;
}

namespace detail {

inline void check_ids(std::span<const SymbolId> ids) {
    const std::size_t n = Alphabet::standard().size();
    for (SymbolId id : ids) {
        if (id >= n) throw EncodingError("symbol id " + std::to_string(id) + " is outside the alphabet");
    }
}

inline void check_output(std::span<const SymbolId> output) {
    check_ids(output);
    if (output.empty() || output.back() != Alphabet::standard().stop()) {
        throw ContractError("output sequence must end with the stop symbol");
    }
}

inline SymbolId argmax_non_pad(std::span<const double> row) {
    const SymbolId pad = Alphabet::standard().pad();
    SymbolId best = pad == 0 ? 1 : 0;
    for (SymbolId i = 0; i < row.size(); ++i) {
        if (i == pad) continue;
        if (row[i] > row[best]) best = i;
    }
    return best;
}

}  // namespace detail

// Scores, weights and context of one dot-product attention step.
struct AttentionVars {
    Var scores;
    Var weights;
    Var context;
};

// a_i = <h_dec, h_enc_i>, alpha = softmax(a), c = sum_i alpha_i h_enc_i.
// `states` is |x| x d and `states_t` its transpose.
inline AttentionVars attend(Tape& tape, Var h_dec, Var states, Var states_t) {
    const Matrix& s = tape.value(states);
    if (tape.value(h_dec).cols() != s.cols()) {
        throw ShapeError("attend: decoder state " + tape.value(h_dec).shape() + " vs encoder states " +
                         s.shape());
    }
    Var scores = tape.matmul(h_dec, states_t);
    Var weights = tape.softmax_row(scores);
    Var context = tape.matmul(weights, states);
    return {scores, weights, context};
}

// ---------------------------------------------------------------------------

// Attentional encoder-decoder with a summed bidirectional LSTM encoder.
// The backward direction is the same graph with swapped data roles.
class Seq2SeqModel {
public:
    struct Bound {
        Var enc_emb;
        Var dec_emb;
        LstmParams enc_fwd;
        LstmParams enc_bwd;
        LstmParams dec;
        ProjectionParams out;
    };

    struct Encoded {
        std::vector<Var> states;
        Var matrix;
        Var matrix_t;
    };

    struct DecoderState {
        LstmState lstm;
        Var context;
    };

    struct StepOutput {
        DecoderState state;
        Var logits;
        AttentionVars attention;
    };

    static std::vector<std::string> parameter_names() {
        return {"dec.emb", "dec.lstm.W", "dec.lstm.b", "enc.bwd.W", "enc.bwd.b",
                "enc.emb", "enc.fwd.W",  "enc.fwd.b",  "out.W",     "out.b"};
    }

    static Seq2SeqModel create(const ModelConfig& config, std::uint64_t seed) {
        if (config.arch == Architecture::CharLM) throw ConfigurationError("Seq2SeqModel cannot be a charlm");
        const std::size_t v = Alphabet::standard().size();
        const std::size_t e = config.d_emb, h = config.d_hidden;
        ParamStore p;
        add_embedding(p, "enc.emb", v, e, seed);
        add_embedding(p, "dec.emb", v, e, seed);
        add_lstm(p, "enc.fwd", e, h, seed);
        add_lstm(p, "enc.bwd", e, h, seed);
        add_lstm(p, "dec.lstm", e + h, h, seed);
        add_projection(p, "out", 2 * h, v, seed);
        return Seq2SeqModel(config, std::move(p));
    }

    Seq2SeqModel(const ModelConfig& config, ParamStore params) : config_(config), params_(std::move(params)) {
        if (config_.d_emb == 0 || config_.d_hidden == 0) throw ContractError("model dimensions must be positive");
        const std::size_t v = Alphabet::standard().size();
        const std::size_t e = config_.d_emb, h = config_.d_hidden;
        if (params_.names() != parameter_names()) {
            throw ConfigurationError("parameter set does not match the encoder-decoder architecture");
        }
        expect("enc.emb", v, e);
        expect("dec.emb", v, e);
        expect("enc.fwd.W", e + h, 4 * h);
        expect("enc.bwd.W", e + h, 4 * h);
        expect("dec.lstm.W", e + 2 * h, 4 * h);
        expect("enc.fwd.b", 1, 4 * h);
        expect("enc.bwd.b", 1, 4 * h);
        expect("dec.lstm.b", 1, 4 * h);
        expect("out.W", 2 * h, v);
        expect("out.b", 1, v);
    }

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    Bound bind(Tape& tape, bool with_grad) const {
        Bound b;
        b.enc_emb = params_.bind(tape, "enc.emb", with_grad);
        b.dec_emb = params_.bind(tape, "dec.emb", with_grad);
        b.enc_fwd = bind_lstm(tape, params_, "enc.fwd", with_grad);
        b.enc_bwd = bind_lstm(tape, params_, "enc.bwd", with_grad);
        b.dec = bind_lstm(tape, params_, "dec.lstm", with_grad);
        b.out = bind_projection(tape, params_, "out", with_grad);
        return b;
    }

    // h_enc_t = h_fwd_t + h_bwd_t, both directions starting from zero state.
    Encoded encode(Tape& tape, const Bound& b, std::span<const SymbolId> ids) const {
        if (ids.empty()) throw ContractError("encode: empty input sequence");
        detail::check_ids(ids);
        const std::size_t n = ids.size(), h = config_.d_hidden;
        std::vector<Var> embedded(n);
        for (std::size_t t = 0; t < n; ++t) embedded[t] = embed(tape, b.enc_emb, ids[t]);
        std::vector<Var> fwd(n), bwd(n);
        LstmState s = zero_state(tape, h);
        for (std::size_t t = 0; t < n; ++t) {
            s = lstm_step(tape, b.enc_fwd, embedded[t], s);
            fwd[t] = s.h;
        }
        s = zero_state(tape, h);
        for (std::size_t t = n; t-- > 0;) {
            s = lstm_step(tape, b.enc_bwd, embedded[t], s);
            bwd[t] = s.h;
        }
        Encoded enc;
        enc.states.resize(n);
        for (std::size_t t = 0; t < n; ++t) enc.states[t] = tape.add(fwd[t], bwd[t]);
        enc.matrix = tape.stack_rows(enc.states);
        enc.matrix_t = tape.transpose(enc.matrix);
        return enc;
    }

    // h_dec_0 = h_enc_|x|, decoder cell and context start at zero.
    DecoderState initial_state(Tape& tape, const Encoded& enc) const {
        const std::size_t h = config_.d_hidden;
        return {{enc.states.back(), tape.constant(Matrix(1, h))}, tape.constant(Matrix(1, h))};
    }

    // One decoder step: h_t = LSTM(h_{t-1}, [e_dec(y_{t-1}); c_{t-1}]), then
    // c_t from attention over the encoder and logits W [h_t; c_t] + b.
    StepOutput step(Tape& tape, const Bound& b, const Encoded& enc, const DecoderState& prev,
                    SymbolId prev_symbol) const {
        Var x = tape.concat_cols(embed(tape, b.dec_emb, prev_symbol), prev.context);
        LstmState s = lstm_step(tape, b.dec, x, prev.lstm);
        StepOutput out;
        if (config_.attention) {
            out.attention = attend(tape, s.h, enc.matrix, enc.matrix_t);
        } else {
            out.attention.context = tape.constant(Matrix(1, config_.d_hidden));
        }
        out.state = {s, out.attention.context};
        out.logits = project_logits(tape, b.out, tape.concat_cols(s.h, out.attention.context));
        return out;
    }

    // Teacher-forced negative log-likelihood of `pair.output`.
    Var loss(Tape& tape, const Bound& b, const TrainingPair& pair) const {
        detail::check_output(pair.output);
        Encoded enc = encode(tape, b, pair.input);
        DecoderState st = initial_state(tape, enc);
        SymbolId prev = start_of_sequence();
        std::vector<Var> terms;
        terms.reserve(pair.output.size());
        for (SymbolId y : pair.output) {
            StepOutput o = step(tape, b, enc, st, prev);
            terms.push_back(tape.softmax_cross_entropy(o.logits, y));
            st = o.state;
            prev = y;
        }
        return tape.sum(terms);
    }

    SequenceStats stats(const TrainingPair& pair) const {
        detail::check_output(pair.output);
        Tape tape;
        Bound b = bind(tape, false);
        Encoded enc = encode(tape, b, pair.input);
        DecoderState st = initial_state(tape, enc);
        SymbolId prev = start_of_sequence();
        SequenceStats s{0.0, true};
        for (SymbolId y : pair.output) {
            StepOutput o = step(tape, b, enc, st, prev);
            const auto& logits = tape.value(o.logits).data();
            s.log_prob += log_softmax(logits)[y];
            s.argmax_exact = s.argmax_exact && detail::argmax_non_pad(logits) == y;
            st = o.state;
            prev = y;
        }
        return s;
    }

    // log P(output | input), output stop-terminated.
    double sequence_log_prob(std::span<const SymbolId> input, std::span<const SymbolId> output) const {
        return stats({Sequence(input.begin(), input.end()), Sequence(output.begin(), output.end())}).log_prob;
    }

private:
    void expect(const std::string& name, std::size_t r, std::size_t c) const {
        const Matrix& m = params_.value(name);
        if (m.rows() != r || m.cols() != c) {
            throw ShapeError("parameter '" + name + "' is " + m.shape() + ", expected " +
                             Matrix::shape_string(r, c));
        }
    }

    ModelConfig config_;
    ParamStore params_;
};

// ---------------------------------------------------------------------------

// Next-character LSTM language model: P(y) = prod_i P(y_i | y_<i), with
// the projection over the hidden state only.
class CharLM {
public:
    struct Bound {
        Var emb;
        LstmParams lstm;
        ProjectionParams out;
    };

    struct StepOutput {
        LstmState state;
        Var logits;
    };

    static std::vector<std::string> parameter_names() { return {"emb", "lstm.W", "lstm.b", "out.W", "out.b"}; }

    static CharLM create(ModelConfig config, std::uint64_t seed) {
        config.arch = Architecture::CharLM;
        const std::size_t v = Alphabet::standard().size();
        ParamStore p;
        add_embedding(p, "emb", v, config.d_emb, seed);
        add_lstm(p, "lstm", config.d_emb, config.d_hidden, seed);
        add_projection(p, "out", config.d_hidden, v, seed);
        return CharLM(config, std::move(p));
    }

    CharLM(ModelConfig config, ParamStore params) : config_(config), params_(std::move(params)) {
        config_.arch = Architecture::CharLM;
        if (params_.names() != parameter_names()) {
            throw ConfigurationError("parameter set does not match the character language model");
        }
        const std::size_t v = Alphabet::standard().size();
        const std::size_t e = config_.d_emb, h = config_.d_hidden;
        if (params_.value("emb").rows() != v || params_.value("emb").cols() != e ||
            params_.value("lstm.W").rows() != e + h || params_.value("lstm.W").cols() != 4 * h ||
            params_.value("out.W").rows() != h || params_.value("out.W").cols() != v) {
            throw ShapeError("character language model parameters do not match its configuration");
        }
    }

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const Matrix& embedding() const { return params_.value("emb"); }

    Bound bind(Tape& tape, bool with_grad) const {
        return {params_.bind(tape, "emb", with_grad), bind_lstm(tape, params_, "lstm", with_grad),
                bind_projection(tape, params_, "out", with_grad)};
    }

    LstmState initial_state(Tape& tape) const { return zero_state(tape, config_.d_hidden); }

    StepOutput step(Tape& tape, const Bound& b, const LstmState& prev, SymbolId prev_symbol) const {
        LstmState s = lstm_step(tape, b.lstm, embed(tape, b.emb, prev_symbol), prev);
        return {s, project_logits(tape, b.out, s.h)};
    }

    Var loss(Tape& tape, const Bound& b, const TrainingPair& pair) const {
        detail::check_output(pair.output);
        LstmState st = initial_state(tape);
        SymbolId prev = start_of_sequence();
        std::vector<Var> terms;
        for (SymbolId y : pair.output) {
            StepOutput o = step(tape, b, st, prev);
            terms.push_back(tape.softmax_cross_entropy(o.logits, y));
            st = o.state;
            prev = y;
        }
        return tape.sum(terms);
    }

    SequenceStats stats(const TrainingPair& pair) const {
        detail::check_output(pair.output);
        Tape tape;
        Bound b = bind(tape, false);
        LstmState st = initial_state(tape);
        SymbolId prev = start_of_sequence();
        SequenceStats s{0.0, true};
        for (SymbolId y : pair.output) {
            StepOutput o = step(tape, b, st, prev);
            const auto& logits = tape.value(o.logits).data();
            s.log_prob += log_softmax(logits)[y];
            s.argmax_exact = s.argmax_exact && detail::argmax_non_pad(logits) == y;
            st = o.state;
            prev = y;
        }
        return s;
    }

    // log P(ids), ids stop-terminated.
    double log_prob(std::span<const SymbolId> ids) const {
        return stats({{}, Sequence(ids.begin(), ids.end())}).log_prob;
    }

private:
    ModelConfig config_;
    ParamStore params_;
};

inline double sequence_log_prob(const Seq2SeqModel& model, std::span<const SymbolId> input,
                                std::span<const SymbolId> output) {
    return model.sequence_log_prob(input, output);
}

inline double lm_log_prob(const CharLM& lm, std::span<const SymbolId> ids) { return lm.log_prob(ids); }

}  // namespace portmanteau
