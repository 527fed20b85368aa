#pragma once

// Parameter containers and the building blocks of the encoder-decoder:
// embedding lookup, LSTM cell and output projection.

#include <map>
#include <string>
#include <vector>

#include "portmanteau/data.hpp"
#include "portmanteau/random.hpp"
#include "portmanteau/tensor.hpp"

namespace portmanteau {

inline constexpr double kInitRange = 0.08;
inline constexpr double kForgetBias = 1.0;

// Named trainable tensors with matching gradient buffers. Iteration order
// is by name, which fixes serialization and optimizer order.
class ParamStore {
    template <typename Map>
    static auto& lookup(Map& m, const std::string& name) {
        auto it = m.find(name);
        if (it == m.end()) throw ContractError("unknown parameter '" + name + "'");
        return it->second;
    }

public:
    void add(const std::string& name, Matrix init) {
        if (values_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
        grads_.emplace(name, Matrix(init.rows(), init.cols()));
        values_.emplace(name, std::move(init));
    }

    bool contains(const std::string& name) const { return values_.count(name) != 0; }

    Matrix& value(const std::string& name) { return lookup(values_, name); }
    const Matrix& value(const std::string& name) const { return lookup(values_, name); }
    Matrix& grad(const std::string& name) { return lookup(grads_, name); }
    const Matrix& grad(const std::string& name) const { return lookup(grads_, name); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [k, _] : values_) out.push_back(k);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [_, m] : values_) n += m.size();
        return n;
    }

    void zero_grad() {
        for (auto& [_, g] : grads_) g.fill(0.0);
    }

    Var bind(Tape& tape, const std::string& name, bool with_grad) const {
        const Matrix& v = value(name);
        Matrix* g = with_grad ? &lookup(grads_, name) : nullptr;
        return tape.parameter(v, g);
    }

    std::vector<ParamSlot> slots() {
        std::vector<ParamSlot> out;
        for (auto& [k, v] : values_) out.push_back({&v, &grads_.at(k)});
        return out;
    }

    const std::map<std::string, Matrix>& values() const { return values_; }
    std::map<std::string, Matrix>& values() { return values_; }
    const std::map<std::string, Matrix>& grads() const { return grads_; }

    bool operator==(const ParamStore& o) const { return values_ == o.values_; }

private:
    std::map<std::string, Matrix> values_;
    // Written only by the owning trainer through bind(..., true).
    mutable std::map<std::string, Matrix> grads_;
};

inline Matrix uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng, double range = kInitRange) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = rng.uniform(-range, range);
    return m;
}

// ---------------------------------------------------------------------------
// Embedding

// |alphabet| x d_emb table, U(-0.08, 0.08).
inline void add_embedding(ParamStore& store, const std::string& name, std::size_t vocab, std::size_t dim,
                          std::uint64_t seed) {
    Rng rng(derive_seed(seed, name));
    store.add(name, uniform_matrix(vocab, dim, rng));
}

inline Var embed(Tape& tape, Var table, SymbolId id) { return tape.row(table, id); }

// ---------------------------------------------------------------------------
// LSTM

// Fused gates: W is (d_in + d_h) x 4 d_h over [x h], b is 1 x 4 d_h, gate
// blocks ordered (input, forget, cell, output).
struct LstmParams {
    Var weight;
    Var bias;
    std::size_t hidden = 0;
};

struct LstmState {
    Var h;
    Var c;
};

inline std::size_t lstm_parameter_count(std::size_t d_in, std::size_t d_h) {
    return (d_in + d_h) * 4 * d_h + 4 * d_h;
}

inline void add_lstm(ParamStore& store, const std::string& prefix, std::size_t d_in, std::size_t d_h,
                     std::uint64_t seed) {
    Rng rng(derive_seed(seed, prefix + ".W"));
    store.add(prefix + ".W", uniform_matrix(d_in + d_h, 4 * d_h, rng));
    Matrix bias(1, 4 * d_h);
    for (std::size_t j = d_h; j < 2 * d_h; ++j) bias[j] = kForgetBias;
    store.add(prefix + ".b", std::move(bias));
}

inline LstmParams bind_lstm(Tape& tape, const ParamStore& store, const std::string& prefix, bool with_grad) {
    LstmParams p{store.bind(tape, prefix + ".W", with_grad), store.bind(tape, prefix + ".b", with_grad), 0};
    p.hidden = tape.value(p.bias).cols() / 4;
    return p;
}

inline LstmState zero_state(Tape& tape, std::size_t hidden) {
    return {tape.constant(Matrix(1, hidden)), tape.constant(Matrix(1, hidden))};
}

inline LstmState lstm_step(Tape& tape, const LstmParams& p, Var x, const LstmState& state) {
    const std::size_t dh = p.hidden;
    const Matrix& w = tape.value(p.weight);
    const std::size_t d_in = tape.value(x).cols();
    if (tape.value(x).rows() != 1 || d_in + dh != w.rows() || tape.value(state.h).cols() != dh ||
        tape.value(state.c).cols() != dh) {
        throw ShapeError("lstm_step: input " + tape.value(x).shape() + " / state " +
                         tape.value(state.h).shape() + " incompatible with weights " + w.shape());
    }
    Var z = tape.add(tape.matmul(tape.concat_cols(x, state.h), p.weight), p.bias);
    Var i = tape.sigmoid(tape.slice_cols(z, 0, dh));
    Var f = tape.sigmoid(tape.slice_cols(z, dh, dh));
    Var g = tape.tanh(tape.slice_cols(z, 2 * dh, dh));
    Var o = tape.sigmoid(tape.slice_cols(z, 3 * dh, dh));
    Var c = tape.add(tape.mul(f, state.c), tape.mul(i, g));
    Var h = tape.mul(o, tape.tanh(c));
    return {h, c};
}

// ---------------------------------------------------------------------------
// Output projection

struct ProjectionParams {
    Var weight;
    Var bias;
};

inline void add_projection(ParamStore& store, const std::string& prefix, std::size_t d_in, std::size_t vocab,
                           std::uint64_t seed) {
    Rng rng(derive_seed(seed, prefix + ".W"));
    store.add(prefix + ".W", uniform_matrix(d_in, vocab, rng));
    store.add(prefix + ".b", Matrix(1, vocab));
}

inline ProjectionParams bind_projection(Tape& tape, const ParamStore& store, const std::string& prefix,
                                        bool with_grad) {
    return {store.bind(tape, prefix + ".W", with_grad), store.bind(tape, prefix + ".b", with_grad)};
}

inline Var project_logits(Tape& tape, const ProjectionParams& p, Var features) {
    const Matrix& w = tape.value(p.weight);
    if (tape.value(features).cols() != w.rows()) {
        throw ShapeError("project: features " + tape.value(features).shape() + " vs weights " + w.shape());
    }
    return tape.add(tape.matmul(features, p.weight), p.bias);
}

// softmax(W [h; c] + b)
inline Var project(Tape& tape, const ProjectionParams& p, Var h_dec, Var context) {
    return tape.softmax_row(project_logits(tape, p, tape.concat_cols(h_dec, context)));
}

}  // namespace portmanteau
