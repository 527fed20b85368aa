#pragma once

// Dense row-major matrices and a dynamic reverse-mode tape.
//
// The tape is rebuilt for every sequence. Each node owns (or references) its
// forward value; gradients are allocated lazily during backward and
// accumulate additively, so a value used twice receives both contributions.
// No broadcasting is performed anywhere: every shape must match exactly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "portmanteau/errors.hpp"

namespace portmanteau {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                             " does not match " + shape_string(rows_, cols_));
        }
    }
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ShapeError("ragged matrix literal");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix row_vector(std::span<const double> values) {
        return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
    }
    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const double& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    const double& operator[](std::size_t i) const { return data_[i]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    std::string shape() const { return shape_string(rows_, cols_); }

    bool operator==(const Matrix& o) const = default;

    static std::string shape_string(std::size_t r, std::size_t c) {
        return std::to_string(r) + "x" + std::to_string(c);
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
    }
}

// ---------------------------------------------------------------------------
// Plain (tape-free) kernels

// out += a * b
inline void matmul_accumulate(const Matrix& a, const Matrix& b, Matrix& out) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double* orow = &out(i, 0);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a(i, p);
            if (av == 0.0) continue;
            const double* brow = &b(p, 0);
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: cannot multiply " + a.shape() + " by " + b.shape());
    }
    Matrix out(a.rows(), b.cols());
    matmul_accumulate(a, b, out);
    return out;
}

// out += a * b^T
inline void matmul_nt_accumulate(const Matrix& a, const Matrix& b, Matrix& out) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = &a(i, 0);
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = &b(j, 0);
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            out(i, j) += s;
        }
    }
}

// out += a^T * b
inline void matmul_tn_accumulate(const Matrix& a, const Matrix& b, Matrix& out) {
    const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
    for (std::size_t p = 0; p < k; ++p) {
        const double* brow = &b(p, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const double av = a(p, i);
            if (av == 0.0) continue;
            double* orow = &out(i, 0);
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Numerically stable softmax of a single row.
inline Matrix softmax_row(const Matrix& v) {
    if (v.rows() != 1 || v.cols() == 0) {
        throw ShapeError("softmax_row: expected a non-empty 1xn row, got " + v.shape());
    }
    Matrix out(1, v.cols());
    const double mx = *std::max_element(v.data().begin(), v.data().end());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.cols(); ++i) {
        out[i] = std::exp(v[i] - mx);
        sum += out[i];
    }
    for (std::size_t i = 0; i < v.cols(); ++i) out[i] /= sum;
    return out;
}

inline std::vector<double> log_softmax(std::span<const double> v) {
    if (v.empty()) throw ShapeError("log_softmax: empty input");
    const double mx = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += std::exp(x - mx);
    const double lse = mx + std::log(sum);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
    return out;
}

// -log p[target], with p clamped from below at 1e-12.
inline double cross_entropy(const Matrix& p, std::size_t target) {
    if (p.rows() != 1) throw ShapeError("cross_entropy: expected 1xn, got " + p.shape());
    if (target >= p.cols()) {
        throw IndexError("cross_entropy: target " + std::to_string(target) + " out of range for " +
                         std::to_string(p.cols()) + " classes");
    }
    return -std::log(std::max(p[target], 1e-12));
}

// ---------------------------------------------------------------------------
// Tape

struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
};

class Tape {
public:
    Tape() { nodes_.reserve(256); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix m) { return push(std::move(m), nullptr, false); }

    // Leaf bound to an external value. If `grad` is non-null, backward
    // accumulates into it directly.
    Var parameter(const Matrix& value, Matrix* grad) {
        Node n;
        n.ref = &value;
        n.external_grad = grad;
        n.requires_grad = grad != nullptr;
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    const Matrix& value(Var v) const { return value_of(v.id); }
    double scalar(Var v) const {
        const Matrix& m = value(v);
        if (m.size() != 1) throw ContractError("scalar(): node is " + m.shape());
        return m[0];
    }
    // Gradient of the last backward() with respect to an internal node.
    const Matrix& grad(Var v) { return grad_slot(v.id); }
    std::size_t size() const { return nodes_.size(); }

    Var matmul(Var a, Var b) {
        const Matrix& av = value(a);
        const Matrix& bv = value(b);
        Matrix out = portmanteau::matmul(av, bv);
        return push(std::move(out), [a, b](Tape& t, std::size_t self) {
            const Matrix& g = t.grad_slot(self);
            if (t.needs(a)) matmul_nt_accumulate(g, t.value(b), t.grad_slot(a.id));
            if (t.needs(b)) matmul_tn_accumulate(t.value(a), g, t.grad_slot(b.id));
        }, needs(a) || needs(b));
    }

    Var add(Var a, Var b) {
        require_same_shape(value(a), value(b), "add");
        Matrix out = value(a);
        const Matrix& bv = value(b);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
        return push(std::move(out), [a, b](Tape& t, std::size_t self) {
            t.accumulate(a, t.grad_slot(self));
            t.accumulate(b, t.grad_slot(self));
        }, needs(a) || needs(b));
    }

    Var mul(Var a, Var b) {
        require_same_shape(value(a), value(b), "mul");
        Matrix out = value(a);
        const Matrix& bv = value(b);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
        return push(std::move(out), [a, b](Tape& t, std::size_t self) {
            const Matrix& g = t.grad_slot(self);
            if (t.needs(a)) {
                Matrix& ga = t.grad_slot(a.id);
                const Matrix& bv = t.value(b);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
            }
            if (t.needs(b)) {
                Matrix& gb = t.grad_slot(b.id);
                const Matrix& av = t.value(a);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
            }
        }, needs(a) || needs(b));
    }

    Var scale(Var a, double s) {
        Matrix out = value(a);
        for (double& x : out.data()) x *= s;
        return push(std::move(out), [a, s](Tape& t, std::size_t self) {
            const Matrix& g = t.grad_slot(self);
            Matrix& ga = t.grad_slot(a.id);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
        }, needs(a));
    }

    Var tanh(Var a) {
        Matrix out = value(a);
        for (double& x : out.data()) x = std::tanh(x);
        return push(std::move(out), [a](Tape& t, std::size_t self) {
            const Matrix& g = t.grad_slot(self);
            const Matrix& y = t.value_of(self);
            Matrix& ga = t.grad_slot(a.id);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        }, needs(a));
    }

    Var sigmoid(Var a) {
        Matrix out = value(a);
        for (double& x : out.data()) x = portmanteau::sigmoid(x);
        return push(std::move(out), [a](Tape& t, std::size_t self) {
            const Matrix& g = t.grad_slot(self);
            const Matrix& y = t.value_of(self);
            Matrix& ga = t.grad_slot(a.id);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        }, needs(a));
    }

    // [a b] for two matrices with equal row counts.
    Var concat_cols(Var a, Var b) {
        const Matrix& av = value(a);
        const Matrix& bv = value(b);
        if (av.rows() != bv.rows()) {
            throw ShapeError("concat_cols: row mismatch " + av.shape() + " vs " + bv.shape());
        }
        const std::size_t ca = av.cols(), cb = bv.cols();
        Matrix out(av.rows(), ca + cb);
        for (std::size_t r = 0; r < av.rows(); ++r) {
            std::copy_n(av.row(r).data(), ca, &out(r, 0));
            std::copy_n(bv.row(r).data(), cb, &out(r, ca));
        }
        return push(std::move(out), [a, b, ca, cb](Tape& t, std::size_t self) {
            const Matrix& g = t.grad_slot(self);
            for (std::size_t r = 0; r < g.rows(); ++r) {
                if (t.needs(a)) {
                    Matrix& ga = t.grad_slot(a.id);
                    for (std::size_t c = 0; c < ca; ++c) ga(r, c) += g(r, c);
                }
                if (t.needs(b)) {
                    Matrix& gb = t.grad_slot(b.id);
                    for (std::size_t c = 0; c < cb; ++c) gb(r, c) += g(r, ca + c);
                }
            }
        }, needs(a) || needs(b));
    }

    Var slice_cols(Var a, std::size_t begin, std::size_t width) {
        const Matrix& av = value(a);
        if (width == 0 || begin + width > av.cols()) {
            throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " +
                             std::to_string(begin + width) + ") outside " + av.shape());
        }
        Matrix out(av.rows(), width);
        for (std::size_t r = 0; r < av.rows(); ++r) std::copy_n(av.row(r).data() + begin, width, &out(r, 0));
        return push(std::move(out), [a, begin, width](Tape& t, std::size_t self) {
            const Matrix& g = t.grad_slot(self);
            Matrix& ga = t.grad_slot(a.id);
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < width; ++c) ga(r, begin + c) += g(r, c);
        }, needs(a));
    }

    // Row `index` of `table` as a 1xn matrix; backward scatters into that row.
    Var row(Var table, std::size_t index) {
        const Matrix& tv = value(table);
        if (index >= tv.rows()) {
            throw IndexError("row lookup: id " + std::to_string(index) + " out of range for " +
                             tv.shape() + " table");
        }
        Matrix out(1, tv.cols());
        std::copy_n(tv.row(index).data(), tv.cols(), out.data().data());
        return push(std::move(out), [table, index](Tape& t, std::size_t self) {
            const Matrix& g = t.grad_slot(self);
            Matrix& gt = t.grad_slot(table.id);
            for (std::size_t c = 0; c < g.cols(); ++c) gt(index, c) += g[c];
        }, needs(table));
    }

    // Stacks 1xd rows into an nxd matrix.
    Var stack_rows(std::span<const Var> rows) {
        if (rows.empty()) throw ShapeError("stack_rows: no rows");
        const std::size_t d = value(rows[0]).cols();
        Matrix out(rows.size(), d);
        bool any = false;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const Matrix& v = value(rows[r]);
            if (v.rows() != 1 || v.cols() != d) {
                throw ShapeError("stack_rows: row " + std::to_string(r) + " is " + v.shape() +
                                 ", expected 1x" + std::to_string(d));
            }
            std::copy_n(v.data().data(), d, &out(r, 0));
            any = any || needs(rows[r]);
        }
        std::vector<Var> inputs(rows.begin(), rows.end());
        return push(std::move(out), [inputs = std::move(inputs)](Tape& t, std::size_t self) {
            const Matrix& g = t.grad_slot(self);
            for (std::size_t r = 0; r < inputs.size(); ++r) {
                if (!t.needs(inputs[r])) continue;
                Matrix& gr = t.grad_slot(inputs[r].id);
                for (std::size_t c = 0; c < g.cols(); ++c) gr[c] += g(r, c);
            }
        }, any);
    }

    Var transpose(Var a) {
        const Matrix& av = value(a);
        Matrix out(av.cols(), av.rows());
        for (std::size_t r = 0; r < av.rows(); ++r)
            for (std::size_t c = 0; c < av.cols(); ++c) out(c, r) = av(r, c);
        return push(std::move(out), [a](Tape& t, std::size_t self) {
            const Matrix& g = t.grad_slot(self);
            Matrix& ga = t.grad_slot(a.id);
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) ga(c, r) += g(r, c);
        }, needs(a));
    }

    Var softmax_row(Var a) {
        Matrix out = portmanteau::softmax_row(value(a));
        return push(std::move(out), [a](Tape& t, std::size_t self) {
            const Matrix& g = t.grad_slot(self);
            const Matrix& y = t.value_of(self);
            double dot = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
            Matrix& ga = t.grad_slot(a.id);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - dot);
        }, needs(a));
    }

    // Unfused cross-entropy on an explicit distribution.
    Var cross_entropy(Var p, std::size_t target) {
        const Matrix& pv = value(p);
        const double loss = portmanteau::cross_entropy(pv, target);
        return push(Matrix(1, 1, loss), [p, target](Tape& t, std::size_t self) {
            const double g = t.grad_slot(self)[0];
            const double pt = t.value(p)[target];
            if (pt > 1e-12) t.grad_slot(p.id)[target] -= g / pt;
        }, needs(p));
    }

    // Fused log-softmax + negative log-likelihood on raw logits.
    // Backward is (softmax(logits) - onehot(target)).
    Var softmax_cross_entropy(Var logits, std::size_t target) {
        const Matrix& lv = value(logits);
        if (lv.rows() != 1) throw ShapeError("softmax_cross_entropy: expected 1xn, got " + lv.shape());
        if (target >= lv.cols()) {
            throw IndexError("softmax_cross_entropy: target " + std::to_string(target) +
                             " out of range for " + std::to_string(lv.cols()) + " classes");
        }
        const std::vector<double> lp = log_softmax(lv.data());
        return push(Matrix(1, 1, -lp[target]), [logits, target](Tape& t, std::size_t self) {
            const double g = t.grad_slot(self)[0];
            const Matrix p = portmanteau::softmax_row(t.value(logits));
            Matrix& gl = t.grad_slot(logits.id);
            for (std::size_t i = 0; i < p.size(); ++i) gl[i] += g * (p[i] - (i == target ? 1.0 : 0.0));
        }, needs(logits));
    }

    Var sum(std::span<const Var> terms) {
        if (terms.empty()) return constant(Matrix(1, 1));
        Var acc = terms[0];
        for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
        return acc;
    }

    // Reverse pass from a scalar node.
    void backward(Var loss) {
        if (value(loss).size() != 1) {
            throw ContractError("backward: loss must be scalar, got " + value(loss).shape());
        }
        grad_slot(loss.id)[0] += 1.0;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.backward || n.grad.empty()) continue;
            n.backward(*this, i);
        }
    }

private:
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    struct Node {
        Matrix owned;
        const Matrix* ref = nullptr;
        Matrix grad;
        Matrix* external_grad = nullptr;
        BackwardFn backward;
        bool requires_grad = false;
    };

    Var push(Matrix value, BackwardFn fn, bool requires_grad) {
        Node n;
        n.owned = std::move(value);
        n.requires_grad = requires_grad;
        if (requires_grad) n.backward = std::move(fn);
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    const Matrix& value_of(std::size_t id) const {
        if (id >= nodes_.size()) throw IndexError("tape: unknown node " + std::to_string(id));
        const Node& n = nodes_[id];
        return n.ref ? *n.ref : n.owned;
    }

    bool needs(Var v) const { return nodes_[v.id].requires_grad; }

    Matrix& grad_slot(std::size_t id) {
        Node& n = nodes_[id];
        if (n.external_grad) return *n.external_grad;
        if (n.grad.empty()) {
            const Matrix& v = n.ref ? *n.ref : n.owned;
            n.grad = Matrix(v.rows(), v.cols());
        }
        return n.grad;
    }

    void accumulate(Var target, const Matrix& g) {
        if (!needs(target)) return;
        Matrix& dst = grad_slot(target.id);
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }

    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct ParamSlot {
    Matrix* value;
    Matrix* grad;
};

// Builds the loss on a fresh tape. Parameters must be bound through the
// slots' value/grad matrices so perturbations are observed.
using LossBuilder = std::function<Var(Tape&)>;

// Returns max |g_a - g_n| / max(1e-8, |g_a| + |g_n|) over every parameter
// entry, with g_n from central differences of step `epsilon`.
inline double grad_check(const LossBuilder& build, std::span<const ParamSlot> params, double epsilon) {
    if (!(epsilon > 0.0)) throw ContractError("grad_check: epsilon must be positive");
    for (const auto& p : params) p.grad->fill(0.0);
    {
        Tape tape;
        Var loss = build(tape);
        if (tape.value(loss).size() != 1) {
            throw ContractError("grad_check: loss is " + tape.value(loss).shape() + ", not scalar");
        }
        tape.backward(loss);
    }
    auto eval = [&] {
        Tape tape;
        return tape.scalar(build(tape));
    };
    double worst = 0.0;
    for (const auto& p : params) {
        for (std::size_t i = 0; i < p.value->size(); ++i) {
            const double saved = (*p.value)[i];
            (*p.value)[i] = saved + epsilon;
            const double up = eval();
            (*p.value)[i] = saved - epsilon;
            const double down = eval();
            (*p.value)[i] = saved;
            const double numeric = (up - down) / (2.0 * epsilon);
            const double analytic = (*p.grad)[i];
            const double rel =
                std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace portmanteau
