#pragma once

// Tape-free reimplementation of the model losses over an arbitrary scalar
// type. Instantiated with long double it serves as the finite-difference
// oracle: its 64-bit mantissa keeps central-difference roundoff about three
// orders of magnitude below the double-precision tape's.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "portmanteau/portmanteau.hpp"

namespace portmanteau::testing {

template <typename T>
struct RefMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<T> v;

    RefMatrix() = default;
    RefMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, T(0)) {}
    explicit RefMatrix(const Matrix& m) : rows(m.rows()), cols(m.cols()), v(m.data().begin(), m.data().end()) {}
    T& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    const T& at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

template <typename T>
using RefParams = std::map<std::string, RefMatrix<T>>;

template <typename T>
RefParams<T> to_ref(const ParamStore& store) {
    RefParams<T> out;
    for (const auto& [name, m] : store.values()) out.emplace(name, RefMatrix<T>(m));
    return out;
}

namespace ref {

template <typename T>
using Vec = std::vector<T>;

template <typename T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

// x (1 x n) times W (n x m) plus optional bias row.
template <typename T>
Vec<T> affine(const Vec<T>& x, const RefMatrix<T>& w, const RefMatrix<T>* b) {
    Vec<T> out(w.cols, T(0));
    for (std::size_t j = 0; j < w.cols; ++j) {
        T s = b ? b->v[j] : T(0);
        for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w.at(i, j);
        out[j] = s;
    }
    return out;
}

template <typename T>
Vec<T> cat(const Vec<T>& a, const Vec<T>& b) {
    Vec<T> out(a);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

template <typename T>
Vec<T> row(const RefMatrix<T>& m, std::size_t r) {
    return Vec<T>(m.v.begin() + static_cast<long>(r * m.cols), m.v.begin() + static_cast<long>((r + 1) * m.cols));
}

template <typename T>
struct State {
    Vec<T> h, c;
};

template <typename T>
State<T> lstm(const RefParams<T>& p, const std::string& prefix, const Vec<T>& x, const State<T>& s) {
    const auto& w = p.at(prefix + ".W");
    const auto& b = p.at(prefix + ".b");
    const std::size_t d = b.cols / 4;
    const Vec<T> z = affine(cat(x, s.h), w, &b);
    State<T> out{Vec<T>(d), Vec<T>(d)};
    for (std::size_t k = 0; k < d; ++k) {
        const T i = sigmoid(z[k]), f = sigmoid(z[d + k]), g = std::tanh(z[2 * d + k]), o = sigmoid(z[3 * d + k]);
        out.c[k] = f * s.c[k] + i * g;
        out.h[k] = o * std::tanh(out.c[k]);
    }
    return out;
}

// -log softmax(logits)[target]
template <typename T>
T nll(const Vec<T>& logits, std::size_t target) {
    T mx = logits[0];
    for (T x : logits) mx = std::max(mx, x);
    T sum = 0;
    for (T x : logits) sum += std::exp(x - mx);
    return -(logits[target] - mx - std::log(sum));
}

}  // namespace ref

template <typename T>
T reference_seq2seq_loss(const RefParams<T>& p, const ModelConfig& cfg, const TrainingPair& pair) {
    using namespace ref;
    const std::size_t n = pair.input.size(), d = cfg.d_hidden;
    const auto& enc_emb = p.at("enc.emb");
    std::vector<Vec<T>> fwd(n), bwd(n), states(n);
    State<T> s{Vec<T>(d, T(0)), Vec<T>(d, T(0))};
    for (std::size_t t = 0; t < n; ++t) {
        s = lstm(p, "enc.fwd", row(enc_emb, pair.input[t]), s);
        fwd[t] = s.h;
    }
    s = {Vec<T>(d, T(0)), Vec<T>(d, T(0))};
    for (std::size_t t = n; t-- > 0;) {
        s = lstm(p, "enc.bwd", row(enc_emb, pair.input[t]), s);
        bwd[t] = s.h;
    }
    for (std::size_t t = 0; t < n; ++t) {
        states[t].resize(d);
        for (std::size_t k = 0; k < d; ++k) states[t][k] = fwd[t][k] + bwd[t][k];
    }
    State<T> dec{states.back(), Vec<T>(d, T(0))};
    Vec<T> context(d, T(0));
    std::size_t prev = start_of_sequence();
    T loss = 0;
    for (std::size_t y : pair.output) {
        dec = lstm(p, "dec.lstm", cat(row(p.at("dec.emb"), prev), context), dec);
        context.assign(d, T(0));
        if (cfg.attention) {
            Vec<T> score(n);
            T mx = -INFINITY;
            for (std::size_t i = 0; i < n; ++i) {
                score[i] = 0;
                for (std::size_t k = 0; k < d; ++k) score[i] += dec.h[k] * states[i][k];
                mx = std::max(mx, score[i]);
            }
            T z = 0;
            for (auto& a : score) z += (a = std::exp(a - mx));
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < d; ++k) context[k] += score[i] / z * states[i][k];
        }
        loss += nll(affine(cat(dec.h, context), p.at("out.W"), &p.at("out.b")), y);
        prev = y;
    }
    return loss;
}

template <typename T>
T reference_lm_loss(const RefParams<T>& p, const TrainingPair& pair) {
    using namespace ref;
    const std::size_t d = p.at("lstm.b").cols / 4;
    State<T> s{Vec<T>(d, T(0)), Vec<T>(d, T(0))};
    std::size_t prev = start_of_sequence();
    T loss = 0;
    for (std::size_t y : pair.output) {
        s = lstm(p, "lstm", row(p.at("emb"), prev), s);
        loss += nll(affine(s.h, p.at("out.W"), &p.at("out.b")), y);
        prev = y;
    }
    return loss;
}

// Worst relative error between the tape's analytic gradient of `model`'s
// loss and central differences (step `epsilon`) of the long double
// reference loss.
template <typename Model, typename RefLoss>
double reference_grad_check(Model& model, const TrainingPair& pair, RefLoss ref_loss, double epsilon) {
    model.params().zero_grad();
    {
        Tape tape;
        Var loss = model.loss(tape, model.bind(tape, true), pair);
        tape.backward(loss);
    }
    RefParams<long double> p = to_ref<long double>(model.params());
    double worst = 0.0;
    for (auto& [name, m] : p) {
        const Matrix& g = model.params().grad(name);
        for (std::size_t i = 0; i < m.v.size(); ++i) {
            const long double saved = m.v[i];
            m.v[i] = saved + epsilon;
            const long double up = ref_loss(p);
            m.v[i] = saved - epsilon;
            const long double down = ref_loss(p);
            m.v[i] = saved;
            const double numeric = static_cast<double>((up - down) / (2.0L * epsilon));
            const double rel = std::abs(g[i] - numeric) / std::max(1e-8, std::abs(g[i]) + std::abs(numeric));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace portmanteau::testing
